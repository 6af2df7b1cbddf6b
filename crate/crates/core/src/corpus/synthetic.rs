//! Seeded synthetic corpora with a tunable label signal in each modality.
//!
//! Text carries the label through class marker words; audio through the band
//! of a sustained tone. An uninformative sample has no markers and a tone in a
//! neutral band, so at separability 0 neither modality depends on the label.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{save_manifest, Corpus, Label, Utterance, NUM_FOLDS};
use crate::audio::{AudioClip, MemoryClips};
use crate::error::{Error, Result};

pub const NEUTRAL_WORDS: &[&str] = &[
    "i", "you", "we", "they", "he", "she", "it", "this", "that", "what", "the", "a", "an", "to",
    "of", "and", "in", "on", "for", "with", "at", "about", "just", "so", "well", "then", "now",
    "here", "know", "think", "said", "going", "go", "went", "get", "got", "want", "see", "look",
    "come", "came", "tell", "make", "made", "day", "night", "time", "thing", "something",
    "everybody", "people", "today", "morning", "coffee", "apartment", "work", "dinner", "friend",
    "phone", "door", "car", "table", "couch", "chair", "kitchen", "again", "maybe", "guess",
    "mean",
];
pub const SARCASTIC_MARKERS: &[&str] =
    &["totally", "obviously", "wow", "genius", "brilliant", "fantastic"];
pub const SINCERE_MARKERS: &[&str] = &["honestly", "sorry", "thanks", "worried", "glad", "seriously"];

const SAMPLE_RATE: u32 = 16_000;
const SARCASTIC_BAND: (f64, f64) = (1_800.0, 2_200.0);
const SINCERE_BAND: (f64, f64) = (500.0, 700.0);
const NEUTRAL_BAND: (f64, f64) = (1_050.0, 1_300.0);

/// How the label signal is spread across the two modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignalLayout {
    /// Each modality is independently informative with probability `separability`.
    #[default]
    Independent,
    /// Half of the samples carry the signal only in text, the other half only
    /// in audio.
    Complementary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub seed: u64,
    pub separability: f64,
    #[serde(default)]
    pub layout: SignalLayout,
}

impl SyntheticSpec {
    pub fn new(n_samples: usize, seed: u64, separability: f64) -> Self {
        Self {
            n_samples,
            seed,
            separability,
            layout: SignalLayout::Independent,
        }
    }

    pub fn with_layout(mut self, layout: SignalLayout) -> Self {
        self.layout = layout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || !self.n_samples.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "n_samples must be positive and even, got {}",
                self.n_samples
            )));
        }
        if !(0.0..=1.0).contains(&self.separability) {
            return Err(Error::Config(format!(
                "separability must lie in [0, 1], got {}",
                self.separability
            )));
        }
        Ok(())
    }
}

/// A generated corpus with its clips held in memory.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub clips: MemoryClips,
}

impl SyntheticCorpus {
    /// Writes `manifest.jsonl` plus one WAV per original under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for u in self.corpus.originals() {
            let clip = self
                .clips
                .get(&u.id)
                .ok_or_else(|| Error::MissingAudio(u.id.clone()))?;
            clip.write_wav(&dir.join(&u.audio_ref))?;
        }
        save_manifest(&self.corpus, &dir.join("manifest.jsonl"))
    }
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_samples;

    let mut labels: Vec<Label> = (0..n).map(|i| Label::from(i < n / 2)).collect();
    labels.shuffle(&mut rng);

    // stratified round-robin folds; the within-class rank also picks the
    // complementary-layout group
    let mut fold = vec![0u8; n];
    let mut rank = vec![0usize; n];
    for class in [Label::Sarcastic, Label::NonSarcastic] {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for (r, &i) in members.iter().enumerate() {
            fold[i] = (r % NUM_FOLDS as usize) as u8;
            rank[i] = r;
        }
    }

    let s = spec.separability;
    let mut originals = Vec::with_capacity(n);
    let mut clips = MemoryClips::new();
    for i in 0..n {
        let label = labels[i];
        let (text_inf, audio_inf) = match spec.layout {
            SignalLayout::Independent => (rng.random_bool(s), rng.random_bool(s)),
            SignalLayout::Complementary => {
                if rank[i].is_multiple_of(2) {
                    (rng.random_bool(s), false)
                } else {
                    (false, rng.random_bool(s))
                }
            }
        };
        let id = format!("syn_{i:04}");
        let text = synth_text(&mut rng, label, text_inf);
        let clip = synth_tone(&mut rng, label, audio_inf)?;
        originals.push(Utterance {
            audio_ref: format!("audio/{id}.wav"),
            id: id.clone(),
            text,
            label,
            speaker: format!("SPK{}", rng.random_range(0..8)),
            show: format!("SHOW{}", rng.random_range(0..3)),
            fold: fold[i],
        });
        clips.insert(id, clip);
    }

    Ok(SyntheticCorpus {
        corpus: Corpus::new(originals, Vec::new())?,
        clips,
    })
}

fn synth_text(rng: &mut ChaCha8Rng, label: Label, informative: bool) -> String {
    let n_words = rng.random_range(6..=11);
    let mut words: Vec<&str> = (0..n_words)
        .map(|_| NEUTRAL_WORDS[rng.random_range(0..NEUTRAL_WORDS.len())])
        .collect();
    if informative {
        let markers = match label {
            Label::Sarcastic => SARCASTIC_MARKERS,
            Label::NonSarcastic => SINCERE_MARKERS,
        };
        for _ in 0..2 {
            let m = markers[rng.random_range(0..markers.len())];
            let at = rng.random_range(0..=words.len());
            words.insert(at, m);
        }
    }
    let end = [".", "?", "!"][rng.random_range(0..3)];
    let mut text = words.join(" ");
    if let Some(first) = text.get(..1) {
        let upper = first.to_uppercase();
        text.replace_range(..1, &upper);
    }
    text.push_str(end);
    text
}

fn synth_tone(rng: &mut ChaCha8Rng, label: Label, informative: bool) -> Result<AudioClip> {
    let band = match (informative, label) {
        (false, _) => NEUTRAL_BAND,
        (true, Label::Sarcastic) => SARCASTIC_BAND,
        (true, Label::NonSarcastic) => SINCERE_BAND,
    };
    let freq = rng.random_range(band.0..band.1);
    let secs = rng.random_range(0.6..1.6);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let n = (secs * SAMPLE_RATE as f64) as usize;
    let noise = Normal::new(0.0, 0.05).expect("valid sigma");
    let fade = (0.01 * SAMPLE_RATE as f64) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let w = std::f64::consts::TAU * freq * t + phase;
            let env = (i.min(n - 1 - i) as f64 / fade as f64).min(1.0);
            env * (0.3 * w.sin() + 0.1 * (2.0 * w).sin()) + noise.sample(rng)
        })
        .collect();
    AudioClip::new(samples, SAMPLE_RATE)
}

/// Permutes labels across originals (augmented samples follow their parent),
/// destroying any label signal while keeping class balance and folds.
pub fn shuffle_labels(corpus: &Corpus, seed: u64) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Label> = corpus.originals().iter().map(|u| u.label).collect();
    labels.shuffle(&mut rng);
    let originals: Vec<Utterance> = corpus
        .originals()
        .iter()
        .zip(labels)
        .map(|(u, label)| Utterance {
            label,
            ..u.clone()
        })
        .collect();
    let by_id: std::collections::HashMap<&str, Label> =
        originals.iter().map(|u| (u.id.as_str(), u.label)).collect();
    let augmented = corpus
        .augmented()
        .iter()
        .map(|a| {
            let mut a = a.clone();
            a.label = by_id[a.parent_id.as_str()];
            a
        })
        .collect();
    let out = Corpus::new(originals, augmented)?;
    Ok(match corpus.root() {
        Some(r) => out.with_root(r),
        None => out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_manifest;

    #[test]
    fn deterministic_given_seed() {
        let spec = SyntheticSpec::new(100, 7, 1.0);
        let a = generate_synthetic_corpus(&spec).unwrap();
        let b = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(a.corpus, b.corpus);

        let da = tempfile::tempdir().unwrap();
        let db = tempfile::tempdir().unwrap();
        a.write_to(da.path()).unwrap();
        b.write_to(db.path()).unwrap();
        for name in ["manifest.jsonl", "audio/syn_0000.wav", "audio/syn_0099.wav"] {
            assert_eq!(
                std::fs::read(da.path().join(name)).unwrap(),
                std::fs::read(db.path().join(name)).unwrap(),
                "{name}"
            );
        }
        let loaded = load_manifest(&da.path().join("manifest.jsonl")).unwrap();
        assert_eq!(loaded, a.corpus);
    }

    #[test]
    fn balanced_classes_and_folds() {
        let c = generate_synthetic_corpus(&SyntheticSpec::new(200, 3, 0.9)).unwrap().corpus;
        let pos = c.originals().iter().filter(|u| u.label.is_positive()).count();
        assert_eq!((pos, 200 - pos), (100, 100));
        for (_, ids) in c.folds() {
            assert_eq!(ids.len(), 40);
        }
    }

    #[test]
    fn odd_sample_count_rejected() {
        assert!(generate_synthetic_corpus(&SyntheticSpec::new(5, 1, 0.5)).is_err());
        assert!(generate_synthetic_corpus(&SyntheticSpec::new(4, 1, 1.5)).is_err());
    }

    #[test]
    fn zero_separability_has_no_markers() {
        let c = generate_synthetic_corpus(&SyntheticSpec::new(50, 1, 0.0)).unwrap().corpus;
        for u in c.originals() {
            let lower = u.text.to_lowercase();
            for m in SARCASTIC_MARKERS.iter().chain(SINCERE_MARKERS) {
                assert!(!lower.split(|c: char| !c.is_alphanumeric()).any(|w| w == *m));
            }
        }
    }

    #[test]
    fn shuffled_labels_keep_balance() {
        let c = generate_synthetic_corpus(&SyntheticSpec::new(40, 2, 1.0)).unwrap().corpus;
        let s = shuffle_labels(&c, 9).unwrap();
        let pos = s.originals().iter().filter(|u| u.label.is_positive()).count();
        assert_eq!(pos, 20);
        assert_ne!(s, c);
    }
}
