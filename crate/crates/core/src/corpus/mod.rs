//! Sample data model, manifest persistence and desk-scale fixtures.

mod alignment;
mod manifest;
mod synthetic;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use alignment::{validate_alignment, AlignmentReport};
pub use manifest::{load_manifest, save_manifest, ManifestRecord, RecordKind};
pub use synthetic::{
    generate_synthetic_corpus, shuffle_labels, SignalLayout, SyntheticCorpus, SyntheticSpec,
    NEUTRAL_WORDS, SARCASTIC_MARKERS, SINCERE_MARKERS,
};

pub const NUM_FOLDS: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    NonSarcastic,
    Sarcastic,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::NonSarcastic => 0.0,
            Label::Sarcastic => 1.0,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Sarcastic
    }
}

impl From<bool> for Label {
    fn from(positive: bool) -> Self {
        if positive {
            Label::Sarcastic
        } else {
            Label::NonSarcastic
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::NonSarcastic),
            1 => Ok(Label::Sarcastic),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::NonSarcastic => 0,
            Label::Sarcastic => 1,
        }
    }
}

/// Languages known to the translation layer. English is always the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    En,
    Gr,
    Ge,
    Fr,
    Ita,
    Lat,
}

impl Language {
    pub const PIVOTS: [Language; 5] = [
        Language::Gr,
        Language::Ge,
        Language::Fr,
        Language::Ita,
        Language::Lat,
    ];

    /// ISO 639-1 code, used as the translation cache key.
    pub fn code(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Gr => "el",
            Language::Ge => "de",
            Language::Fr => "fr",
            Language::Ita => "it",
            Language::Lat => "la",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Language::En => "En",
            Language::Gr => "Gr",
            Language::Ge => "Ge",
            Language::Fr => "Fr",
            Language::Ita => "Ita",
            Language::Lat => "Lat",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lang = match s.to_ascii_lowercase().as_str() {
            "en" | "english" => Language::En,
            "gr" | "el" | "greek" => Language::Gr,
            "ge" | "de" | "german" => Language::Ge,
            "fr" | "french" => Language::Fr,
            "ita" | "it" | "italian" => Language::Ita,
            "lat" | "la" | "latin" => Language::Lat,
            other => return Err(Error::Config(format!("unknown language `{other}`"))),
        };
        Ok(lang)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesizerId {
    CloudTts,
    PretrainedNts,
    FinetunedNts,
    Mock,
}

impl SynthesizerId {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthesizerId::CloudTts => "cloud_tts",
            SynthesizerId::PretrainedNts => "pretrained_nts",
            SynthesizerId::FinetunedNts => "finetuned_nts",
            SynthesizerId::Mock => "mock",
        }
    }
}

impl fmt::Display for SynthesizerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SynthesizerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cloud_tts" => Ok(SynthesizerId::CloudTts),
            "pretrained_nts" => Ok(SynthesizerId::PretrainedNts),
            "finetuned_nts" => Ok(SynthesizerId::FinetunedNts),
            "mock" => Ok(SynthesizerId::Mock),
            other => Err(Error::Config(format!("unknown synthesizer `{other}`"))),
        }
    }
}

/// One original labeled sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub audio_ref: String,
    pub label: Label,
    pub speaker: String,
    pub show: String,
    pub fold: u8,
}

/// A back-translated text paired with its synthesized clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSample {
    pub id: String,
    pub parent_id: String,
    pub pivot_language: Language,
    pub text: String,
    pub synthesizer: SynthesizerId,
    pub voice: String,
    pub audio_ref: String,
    pub label: Label,
}

/// Borrowed view over either kind of sample.
#[derive(Debug, Clone, Copy)]
pub enum SampleRef<'a> {
    Original(&'a Utterance),
    Augmented(&'a AugmentedSample),
}

impl<'a> SampleRef<'a> {
    pub fn id(&self) -> &'a str {
        match self {
            SampleRef::Original(u) => &u.id,
            SampleRef::Augmented(a) => &a.id,
        }
    }

    pub fn text(&self) -> &'a str {
        match self {
            SampleRef::Original(u) => &u.text,
            SampleRef::Augmented(a) => &a.text,
        }
    }

    pub fn audio_ref(&self) -> &'a str {
        match self {
            SampleRef::Original(u) => &u.audio_ref,
            SampleRef::Augmented(a) => &a.audio_ref,
        }
    }

    pub fn label(&self) -> Label {
        match self {
            SampleRef::Original(u) => u.label,
            SampleRef::Augmented(a) => a.label,
        }
    }

    pub fn is_original(&self) -> bool {
        matches!(self, SampleRef::Original(_))
    }
}

/// Originals plus their augmentations. Immutable once constructed.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    originals: Vec<Utterance>,
    augmented: Vec<AugmentedSample>,
    root: Option<PathBuf>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.originals == other.originals && self.augmented == other.augmented
    }
}

impl Corpus {
    /// Builds a corpus, checking id uniqueness, fold range, parent links and
    /// label inheritance.
    pub fn new(originals: Vec<Utterance>, augmented: Vec<AugmentedSample>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(originals.len() + augmented.len());
        let mut parents = HashMap::with_capacity(originals.len());
        for u in &originals {
            if !ids.insert(u.id.as_str()) {
                return Err(Error::DuplicateId(u.id.clone()));
            }
            if u.fold >= NUM_FOLDS {
                return Err(Error::InvalidCorpus(format!(
                    "utterance `{}` has fold {} outside 0..{}",
                    u.id, u.fold, NUM_FOLDS
                )));
            }
            parents.insert(u.id.as_str(), u);
        }
        for a in &augmented {
            if !ids.insert(a.id.as_str()) {
                return Err(Error::DuplicateId(a.id.clone()));
            }
            let parent = parents.get(a.parent_id.as_str()).ok_or_else(|| Error::DanglingParent {
                id: a.id.clone(),
                parent_id: a.parent_id.clone(),
            })?;
            if parent.label != a.label {
                return Err(Error::InvalidCorpus(format!(
                    "augmented `{}` label differs from parent `{}`",
                    a.id, a.parent_id
                )));
            }
        }
        Ok(Self {
            originals,
            augmented,
            root: None,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Directory that relative `audio_ref`s are resolved against.
    pub fn with_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.root = Some(root.into());
        self
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn resolve_audio(&self, audio_ref: &str) -> PathBuf {
        let p = Path::new(audio_ref);
        match (&self.root, p.is_absolute()) {
            (Some(root), false) => root.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn originals(&self) -> &[Utterance] {
        &self.originals
    }

    pub fn augmented(&self) -> &[AugmentedSample] {
        &self.augmented
    }

    pub fn len(&self) -> usize {
        self.originals.len() + self.augmented.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn original(&self, id: &str) -> Option<&Utterance> {
        self.originals.iter().find(|u| u.id == id)
    }

    pub fn samples(&self) -> impl Iterator<Item = SampleRef<'_>> {
        self.originals
            .iter()
            .map(SampleRef::Original)
            .chain(self.augmented.iter().map(SampleRef::Augmented))
    }

    /// Fold of every sample; augmented samples inherit their parent's fold.
    pub fn fold_of(&self) -> HashMap<&str, u8> {
        let mut folds: HashMap<&str, u8> =
            self.originals.iter().map(|u| (u.id.as_str(), u.fold)).collect();
        for a in &self.augmented {
            let f = folds[a.parent_id.as_str()];
            folds.insert(a.id.as_str(), f);
        }
        folds
    }

    /// Original ids grouped by fold.
    pub fn folds(&self) -> BTreeMap<u8, Vec<&str>> {
        let mut out: BTreeMap<u8, Vec<&str>> = BTreeMap::new();
        for u in &self.originals {
            out.entry(u.fold).or_default().push(&u.id);
        }
        out
    }

    /// Same originals with a different augmentation set.
    pub fn with_augmented(&self, augmented: Vec<AugmentedSample>) -> Result<Corpus> {
        let mut c = Corpus::new(self.originals.clone(), augmented)?;
        c.root = self.root.clone();
        Ok(c)
    }

    /// Drops every augmented sample.
    pub fn originals_only(&self) -> Corpus {
        Corpus {
            originals: self.originals.clone(),
            augmented: Vec::new(),
            root: self.root.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn utt(id: &str, label: Label, fold: u8) -> Utterance {
        Utterance {
            id: id.into(),
            text: format!("text of {id}"),
            audio_ref: format!("audio/{id}.wav"),
            label,
            speaker: "S".into(),
            show: "SHOW".into(),
            fold,
        }
    }

    fn aug(id: &str, parent: &str, label: Label) -> AugmentedSample {
        AugmentedSample {
            id: id.into(),
            parent_id: parent.into(),
            pivot_language: Language::Gr,
            text: "paraphrase".into(),
            synthesizer: SynthesizerId::Mock,
            voice: "v".into(),
            audio_ref: format!("aug/{id}.wav"),
            label,
        }
    }

    #[test]
    fn rejects_duplicates_and_dangling_parents() {
        let a = utt("a", Label::Sarcastic, 0);
        let err = Corpus::new(vec![a.clone(), a.clone()], vec![]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "a"));

        let err = Corpus::new(vec![a.clone()], vec![aug("x", "zzz", Label::Sarcastic)]).unwrap_err();
        assert!(matches!(err, Error::DanglingParent { parent_id, .. } if parent_id == "zzz"));
    }

    #[test]
    fn rejects_label_flip_and_bad_fold() {
        let a = utt("a", Label::Sarcastic, 0);
        assert!(Corpus::new(vec![a.clone()], vec![aug("x", "a", Label::NonSarcastic)]).is_err());
        assert!(Corpus::new(vec![utt("b", Label::Sarcastic, 5)], vec![]).is_err());
    }

    #[test]
    fn augmented_inherit_fold() {
        let c = Corpus::new(
            vec![utt("a", Label::Sarcastic, 3), utt("b", Label::NonSarcastic, 1)],
            vec![aug("x", "a", Label::Sarcastic)],
        )
        .unwrap();
        assert_eq!(c.fold_of()["x"], 3);
        assert_eq!(c.folds()[&1], vec!["b"]);
    }

    #[test]
    fn language_parsing() {
        assert_eq!("Greek".parse::<Language>().unwrap(), Language::Gr);
        assert_eq!("ita".parse::<Language>().unwrap(), Language::Ita);
        assert!("xx".parse::<Language>().is_err());
    }
}
