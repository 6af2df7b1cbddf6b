use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::audio::{ClipSource, ClipStatus, FileClips};

/// Per-sample text/audio pairing problems found in a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub ok: bool,
    pub n_original: usize,
    pub n_augmented: usize,
    pub missing_text: Vec<String>,
    pub missing_audio: Vec<String>,
    pub unreadable_audio: Vec<String>,
}

/// Checks every sample against audio files on disk.
pub fn validate_alignment(corpus: &Corpus) -> AlignmentReport {
    validate_alignment_with(corpus, &FileClips::new(corpus.root()))
}

pub fn validate_alignment_with(corpus: &Corpus, clips: &dyn ClipSource) -> AlignmentReport {
    let mut report = AlignmentReport {
        n_original: corpus.originals().len(),
        n_augmented: corpus.augmented().len(),
        ..Default::default()
    };
    for s in corpus.samples() {
        if s.text().trim().is_empty() {
            report.missing_text.push(s.id().to_string());
        }
        if s.audio_ref().trim().is_empty() {
            report.missing_audio.push(s.id().to_string());
            continue;
        }
        match clips.probe(s.id(), s.audio_ref()) {
            ClipStatus::Readable => {}
            ClipStatus::Missing => report.missing_audio.push(s.id().to_string()),
            ClipStatus::Unreadable => report.unreadable_audio.push(s.id().to_string()),
        }
    }
    report.ok = report.missing_text.is_empty()
        && report.missing_audio.is_empty()
        && report.unreadable_audio.is_empty();
    report
}
