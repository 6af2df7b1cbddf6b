//! Line-delimited JSON manifest: one flat record per sample.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AugmentedSample, Corpus, Label, Language, SynthesizerId, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Original,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub kind: RecordKind,
    pub id: String,
    pub parent_id: Option<String>,
    pub text: String,
    pub audio_ref: String,
    pub label: Label,
    pub speaker: String,
    pub show: String,
    pub fold: u8,
    pub pivot_language: Option<Language>,
    pub synthesizer: Option<SynthesizerId>,
    pub voice: Option<String>,
}

impl ManifestRecord {
    fn from_original(u: &Utterance) -> Self {
        Self {
            kind: RecordKind::Original,
            id: u.id.clone(),
            parent_id: None,
            text: u.text.clone(),
            audio_ref: u.audio_ref.clone(),
            label: u.label,
            speaker: u.speaker.clone(),
            show: u.show.clone(),
            fold: u.fold,
            pivot_language: None,
            synthesizer: None,
            voice: None,
        }
    }

    // Speaker, show and fold are copied from the parent for readability only;
    // the loader derives them from the parent again.
    fn from_augmented(a: &AugmentedSample, parent: &Utterance) -> Self {
        Self {
            kind: RecordKind::Augmented,
            id: a.id.clone(),
            parent_id: Some(a.parent_id.clone()),
            text: a.text.clone(),
            audio_ref: a.audio_ref.clone(),
            label: a.label,
            speaker: parent.speaker.clone(),
            show: parent.show.clone(),
            fold: parent.fold,
            pivot_language: Some(a.pivot_language),
            synthesizer: Some(a.synthesizer),
            voice: a.voice.clone().into(),
        }
    }
}

/// Reads a manifest. Relative audio references resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Corpus> {
    let file = File::open(path)?;
    let parse_err = |line: usize, message: String| Error::ManifestParse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut originals = Vec::new();
    let mut augmented = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        match rec.kind {
            RecordKind::Original => originals.push(Utterance {
                id: rec.id,
                text: rec.text,
                audio_ref: rec.audio_ref,
                label: rec.label,
                speaker: rec.speaker,
                show: rec.show,
                fold: rec.fold,
            }),
            RecordKind::Augmented => {
                let missing = |field: &str| parse_err(lineno, format!("augmented record lacks `{field}`"));
                augmented.push(AugmentedSample {
                    parent_id: rec.parent_id.ok_or_else(|| missing("parent_id"))?,
                    pivot_language: rec.pivot_language.ok_or_else(|| missing("pivot_language"))?,
                    synthesizer: rec.synthesizer.ok_or_else(|| missing("synthesizer"))?,
                    voice: rec.voice.ok_or_else(|| missing("voice"))?,
                    id: rec.id,
                    text: rec.text,
                    audio_ref: rec.audio_ref,
                    label: rec.label,
                });
            }
        }
    }

    let corpus = Corpus::new(originals, augmented)?;
    Ok(match path.parent() {
        Some(dir) => corpus.with_root(dir),
        None => corpus,
    })
}

pub fn save_manifest(corpus: &Corpus, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let parents: HashMap<&str, &Utterance> =
        corpus.originals().iter().map(|u| (u.id.as_str(), u)).collect();
    let mut out = BufWriter::new(File::create(path)?);
    for u in corpus.originals() {
        serde_json::to_writer(&mut out, &ManifestRecord::from_original(u))?;
        out.write_all(b"\n")?;
    }
    for a in corpus.augmented() {
        let rec = ManifestRecord::from_augmented(a, parents[a.parent_id.as_str()]);
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(&p, "").unwrap();
        let c = load_manifest(&p).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn parse_error_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let good = r#"{"kind":"original","id":"a","parent_id":null,"text":"hi","audio_ref":"a.wav","label":1,"speaker":"S","show":"X","fold":0,"pivot_language":null,"synthesizer":null,"voice":null}"#;
        std::fs::write(&p, format!("{good}\n{{not json\n")).unwrap();
        match load_manifest(&p).unwrap_err() {
            Error::ManifestParse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dangling_parent_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let rec = r#"{"kind":"augmented","id":"x","parent_id":"ghost","text":"hi","audio_ref":"x.wav","label":1,"speaker":"S","show":"X","fold":0,"pivot_language":"Gr","synthesizer":"mock","voice":"v"}"#;
        std::fs::write(&p, format!("{rec}\n")).unwrap();
        let err = load_manifest(&p).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn label_out_of_range_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let rec = r#"{"kind":"original","id":"a","parent_id":null,"text":"hi","audio_ref":"a.wav","label":2,"speaker":"S","show":"X","fold":0,"pivot_language":null,"synthesizer":null,"voice":null}"#;
        std::fs::write(&p, format!("{rec}\n")).unwrap();
        assert!(matches!(load_manifest(&p).unwrap_err(), Error::ManifestParse { line: 1, .. }));
    }
}
