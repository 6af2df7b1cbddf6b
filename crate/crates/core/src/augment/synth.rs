//! Speech synthesis adapters and batch synthesis into an audio store.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::store::AudioStore;
use super::translate::sha256_hex;
use crate::audio::AudioClip;
use crate::corpus::{Language, SynthesizerId};
use crate::error::{Error, Result};
use crate::features::tokenizer::fnv1a;

pub trait SynthesizerAdapter: Send + Sync {
    fn id(&self) -> SynthesizerId;

    fn synthesize(&self, text: &str, voice: &str) -> Result<AudioClip>;
}

/// Deterministic tone-burst "speech": one burst per word, pitch derived from
/// a hash of (word, voice).
///
/// Distinct synthesizer ids get distinct timbres, so ablations over
/// synthesizers have something to tell apart.
#[derive(Debug, Clone, Copy)]
pub struct MockSynthesizer {
    pub id: SynthesizerId,
    pub sample_rate: u32,
    pub burst_ms: f64,
}

impl Default for MockSynthesizer {
    fn default() -> Self {
        Self {
            id: SynthesizerId::Mock,
            sample_rate: 16_000,
            burst_ms: 120.0,
        }
    }
}

impl MockSynthesizer {
    /// A mock that reports itself as `id`.
    pub fn standing_in_for(id: SynthesizerId) -> Self {
        Self {
            id,
            ..Self::default()
        }
    }

    fn harmonic_weight(&self) -> f64 {
        match self.id {
            SynthesizerId::CloudTts => 0.35,
            SynthesizerId::PretrainedNts => 0.05,
            SynthesizerId::FinetunedNts => 0.2,
            SynthesizerId::Mock => 0.25,
        }
    }
}

impl SynthesizerAdapter for MockSynthesizer {
    fn id(&self) -> SynthesizerId {
        self.id
    }

    fn synthesize(&self, text: &str, voice: &str) -> Result<AudioClip> {
        let words: Vec<String> = text
            .split_whitespace()
            .map(|w| {
                w.trim_matches(|c: char| c.is_ascii_punctuation())
                    .to_lowercase()
            })
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(Error::Synthesis(format!("nothing to say in {text:?}")));
        }
        let rate = self.sample_rate as f64;
        let burst = ((self.burst_ms / 1000.0) * rate).round().max(2.0) as usize;
        let gap = burst / 10;
        let voice_shift = 1.0 + ((fnv1a(voice.as_bytes()) % 21) as f64 - 10.0) / 100.0;
        let harmonic = self.harmonic_weight();

        let mut samples = Vec::with_capacity(words.len() * (burst + gap));
        for w in &words {
            let h = fnv1a(w.as_bytes());
            let freq = (200.0 + (h % 3_800) as f64) * voice_shift;
            for i in 0..burst {
                let t = i as f64 / rate;
                let env = (std::f64::consts::PI * i as f64 / (burst - 1) as f64).sin();
                let ph = std::f64::consts::TAU * freq * t;
                samples.push(0.3 * env * (ph.sin() + harmonic * (2.0 * ph).sin()));
            }
            samples.extend(std::iter::repeat_n(0.0, gap));
        }
        AudioClip::new(samples, self.sample_rate)
    }
}

/// Pre-synthesized clips: `<dir>/<sha256(voice "\n" text)>.wav`.
///
/// Replays recordings of a cloud service or audio rendered by an external
/// neural synthesizer.
#[derive(Debug, Clone)]
pub struct DirectorySynthesizer {
    pub id: SynthesizerId,
    pub dir: PathBuf,
}

impl DirectorySynthesizer {
    pub fn key(text: &str, voice: &str) -> String {
        sha256_hex(format!("{voice}\n{text}").as_bytes())
    }

    pub fn path_for(&self, text: &str, voice: &str) -> PathBuf {
        self.dir.join(format!("{}.wav", Self::key(text, voice)))
    }
}

impl SynthesizerAdapter for DirectorySynthesizer {
    fn id(&self) -> SynthesizerId {
        self.id
    }

    fn synthesize(&self, text: &str, voice: &str) -> Result<AudioClip> {
        let path = self.path_for(text, voice);
        if !path.is_file() {
            return Err(Error::Synthesis(format!(
                "no pre-synthesized clip for voice `{voice}` at {}",
                path.display()
            )));
        }
        AudioClip::read_wav(&path)
    }
}

/// Shells out to an external synthesis endpoint:
/// `<program> <args..> --text <text> --voice <voice> --out <wav>`.
#[derive(Debug, Clone)]
pub struct CommandSynthesizer {
    pub id: SynthesizerId,
    pub program: PathBuf,
    pub args: Vec<String>,
}

static OUT_COUNTER: AtomicU64 = AtomicU64::new(0);

impl SynthesizerAdapter for CommandSynthesizer {
    fn id(&self) -> SynthesizerId {
        self.id
    }

    fn synthesize(&self, text: &str, voice: &str) -> Result<AudioClip> {
        let out = std::env::temp_dir().join(format!(
            "synth-{}-{}.wav",
            std::process::id(),
            OUT_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg("--text")
            .arg(text)
            .arg("--voice")
            .arg(voice)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| Error::Synthesis(format!("{}: {e}", self.program.display())))?;
        if !status.status.success() {
            return Err(Error::Synthesis(format!(
                "{} exited with {}: {}",
                self.program.display(),
                status.status,
                String::from_utf8_lossy(&status.stderr).trim()
            )));
        }
        let clip = AudioClip::read_wav(&out);
        let _ = std::fs::remove_file(&out);
        clip
    }
}

/// Id of the synthesized sample for (parent, pivot, synthesizer, voice).
pub fn sample_id(parent_id: &str, pivot: Language, synth: SynthesizerId, voice: &str) -> String {
    format!(
        "{parent_id}~{}~{}~{voice}",
        pivot.short().to_lowercase(),
        synth.as_str()
    )
}

/// One back-translated text awaiting audio.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextItem {
    pub parent_id: String,
    pub pivot: Language,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchStatus {
    Synthesized,
    Cached,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub id: String,
    pub status: BatchStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audio_ref: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub entries: Vec<BatchEntry>,
}

impl BatchReport {
    pub fn count(&self, status: BatchStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &BatchEntry> {
        self.entries.iter().filter(|e| e.status == BatchStatus::Failed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_vec_pretty(&self.entries)?)?;
        Ok(())
    }
}

/// Renders every (text, voice) pair into `store`. Clips already present are
/// reported as cache hits; failures are recorded and the batch continues.
/// Entries come back in item-major, voice-minor order.
pub fn synthesize_batch(
    items: &[TextItem],
    adapter: &dyn SynthesizerAdapter,
    voices: &[String],
    store: &dyn AudioStore,
) -> BatchReport {
    let jobs: Vec<(&TextItem, &String)> = items
        .iter()
        .flat_map(|it| voices.iter().map(move |v| (it, v)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|(item, voice)| {
            let id = sample_id(&item.parent_id, item.pivot, adapter.id(), voice);
            if store.contains(&id) {
                return BatchEntry {
                    audio_ref: Some(store.audio_ref(&id)),
                    id,
                    status: BatchStatus::Cached,
                    error: None,
                };
            }
            match adapter
                .synthesize(&item.text, voice)
                .and_then(|clip| store.put(&id, &clip))
            {
                Ok(r) => BatchEntry {
                    id,
                    status: BatchStatus::Synthesized,
                    error: None,
                    audio_ref: Some(r),
                },
                Err(e) => BatchEntry {
                    id,
                    status: BatchStatus::Failed,
                    error: Some(e.to_string()),
                    audio_ref: None,
                },
            }
        })
        .collect();
    BatchReport { entries }
}
