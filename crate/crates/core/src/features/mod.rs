//! Modality-specific features: token matrices for text, patch embeddings for
//! audio, both at fixed shapes.

mod cache;
mod encoders;
pub mod mel;
pub mod tokenizer;

use std::collections::BTreeMap;

use ndarray::{s, Array2};
use rayon::prelude::*;

use crate::audio::{AudioClip, ClipSource};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
pub use cache::{FeatureCache, FeatureFile};
pub use encoders::{
    AudioEncoderAdapter, BandPoolAudioEncoder, ExternalEncoder, MeanTileAudioEncoder,
    MockTextEncoder, TextEncoderAdapter,
};
pub use mel::{audio_to_mel, frame_count, frame_segments, MelSpectrogram, PatchSequence};
pub use tokenizer::{HashingTokenizer, TokenSeq, Tokenizer, WordPieceTokenizer};

pub const TEXT_DIM: usize = 768;
pub const AUDIO_DIM: usize = 512;
pub const TEXT_ROWS: usize = 20;
pub const AUDIO_ROWS: usize = 24;

/// A 20 × 768 token feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TextFeatures(Array2<f64>);

/// A 24 × 512 patch embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFeatures(Array2<f64>);

macro_rules! fixed_matrix {
    ($ty:ident, $rows:expr, $cols:expr) => {
        impl $ty {
            pub fn new(matrix: Array2<f64>) -> Result<Self> {
                if matrix.dim() != ($rows, $cols) {
                    return Err(Error::Shape(format!(
                        "{} must be {}x{}, got {:?}",
                        stringify!($ty),
                        $rows,
                        $cols,
                        matrix.dim()
                    )));
                }
                if matrix.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(stringify!($ty).into()));
                }
                Ok(Self(matrix))
            }

            pub fn matrix(&self) -> &Array2<f64> {
                &self.0
            }

            pub fn into_inner(self) -> Array2<f64> {
                self.0
            }
        }
    };
}

fixed_matrix!(TextFeatures, TEXT_ROWS, TEXT_DIM);
fixed_matrix!(AudioFeatures, AUDIO_ROWS, AUDIO_DIM);

/// Truncates or zero-pads rows to exactly `rows`.
fn fit_rows(m: &Array2<f64>, rows: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows, m.ncols()));
    let keep = rows.min(m.nrows());
    out.slice_mut(s![..keep, ..]).assign(&m.slice(s![..keep, ..]));
    out
}

/// Sequence budget over every text in the corpus, originals and augmented.
pub fn compute_token_budget(corpus: &Corpus, tokenizer: &dyn Tokenizer) -> Result<usize> {
    let lengths: Vec<usize> = corpus.samples().map(|s| tokenizer.framed_len(s.text())).collect();
    if lengths.is_empty() {
        return Err(Error::Empty("cannot compute a token budget for an empty corpus".into()));
    }
    tokenizer::token_budget_from_lengths(&lengths)
}

pub fn tokenize(text: &str, budget: usize, tokenizer: &dyn Tokenizer) -> Result<TokenSeq> {
    tokenizer.tokenize(text, budget)
}

/// Runs the text encoder and fits the result to 20 rows.
pub fn encode_text(tokens: &TokenSeq, adapter: &dyn TextEncoderAdapter) -> Result<TextFeatures> {
    let raw = adapter.encode(tokens)?;
    if raw.ncols() != TEXT_DIM {
        return Err(Error::Encoder {
            adapter: adapter.id().into(),
            message: format!("expected {TEXT_DIM} columns, got {}", raw.ncols()),
        });
    }
    TextFeatures::new(fit_rows(&raw, TEXT_ROWS))
}

/// `T_f · W_p`.
pub fn project_text(t: &Array2<f64>, w_p: &Array2<f64>) -> Result<Array2<f64>> {
    if t.ncols() != w_p.nrows() {
        return Err(Error::Shape(format!(
            "cannot project {:?} with {:?}",
            t.dim(),
            w_p.dim()
        )));
    }
    Ok(t.dot(w_p))
}

/// One embedding per patch, truncated or zero-padded to 24 rows.
pub fn encode_audio(
    patches: &PatchSequence,
    adapter: &dyn AudioEncoderAdapter,
) -> Result<AudioFeatures> {
    let mut out = Array2::zeros((AUDIO_ROWS, AUDIO_DIM));
    for (row, patch) in patches.patches.iter().take(AUDIO_ROWS).enumerate() {
        let e = adapter.encode_patch(patch.view())?;
        if e.len() != AUDIO_DIM {
            return Err(Error::Encoder {
                adapter: adapter.id().into(),
                message: format!("expected {AUDIO_DIM} dimensions, got {}", e.len()),
            });
        }
        out.row_mut(row).assign(&e);
    }
    AudioFeatures::new(out)
}

/// Clip to mel to patches to embeddings.
pub fn extract_audio(clip: &AudioClip, adapter: &dyn AudioEncoderAdapter) -> Result<AudioFeatures> {
    encode_audio(&frame_segments(&audio_to_mel(clip)?), adapter)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    pub text: TextFeatures,
    pub audio: AudioFeatures,
}

/// Features for every sample of a corpus, keyed by sample id.
#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    pub token_budget: usize,
    pub text_adapter: String,
    pub audio_adapter: String,
    entries: BTreeMap<String, SampleFeatures>,
}

impl FeatureTable {
    pub fn get(&self, id: &str) -> Option<&SampleFeatures> {
        self.entries.get(id)
    }

    pub fn require(&self, id: &str) -> Result<&SampleFeatures> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::FeatureFormat(format!("no features for sample `{id}`")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn insert(&mut self, id: impl Into<String>, features: SampleFeatures) {
        self.entries.insert(id.into(), features);
    }
}

/// Tokenizer plus both encoders, optionally backed by a feature cache.
pub struct FeatureExtractor {
    pub tokenizer: Box<dyn Tokenizer>,
    pub text_encoder: Box<dyn TextEncoderAdapter>,
    pub audio_encoder: Box<dyn AudioEncoderAdapter>,
    pub cache: Option<FeatureCache>,
    /// Fixed sequence budget; computed from the corpus when `None`.
    pub token_budget: Option<usize>,
}

impl FeatureExtractor {
    /// Hashing tokenizer, one-hot text encoder and band-pooling audio encoder.
    pub fn mock() -> Self {
        Self {
            tokenizer: Box::new(HashingTokenizer),
            text_encoder: Box::new(MockTextEncoder),
            audio_encoder: Box::new(BandPoolAudioEncoder),
            cache: None,
            token_budget: None,
        }
    }

    pub fn with_cache(mut self, cache: FeatureCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_token_budget(mut self, budget: usize) -> Self {
        self.token_budget = Some(budget);
        self
    }

    fn text_features(&self, id: &str, text: &str, budget: usize) -> Result<TextFeatures> {
        let enc = self.text_encoder.as_ref();
        if let Some(cache) = &self.cache {
            if let Some(m) = cache.get(id, enc.id(), enc.version())? {
                return TextFeatures::new(fit_rows(&m, TEXT_ROWS));
            }
        }
        let f = encode_text(&self.tokenizer.tokenize(text, budget)?, enc)?;
        if let Some(cache) = &self.cache {
            cache.put(id, enc.id(), enc.version(), f.matrix())?;
        }
        Ok(f)
    }

    fn audio_features(
        &self,
        id: &str,
        audio_ref: &str,
        clips: &dyn ClipSource,
    ) -> Result<AudioFeatures> {
        let enc = self.audio_encoder.as_ref();
        if let Some(cache) = &self.cache {
            if let Some(m) = cache.get(id, enc.id(), enc.version())? {
                return AudioFeatures::new(fit_rows(&m, AUDIO_ROWS));
            }
        }
        let f = extract_audio(&clips.load(id, audio_ref)?, enc)?;
        if let Some(cache) = &self.cache {
            cache.put(id, enc.id(), enc.version(), f.matrix())?;
        }
        Ok(f)
    }

    /// Extracts features for every sample, in parallel.
    pub fn extract(&self, corpus: &Corpus, clips: &dyn ClipSource) -> Result<FeatureTable> {
        let budget = match self.token_budget {
            Some(b) => b,
            None => compute_token_budget(corpus, self.tokenizer.as_ref())?,
        };
        let samples: Vec<_> = corpus.samples().collect();
        let rows: Vec<(String, SampleFeatures)> = samples
            .par_iter()
            .map(|s| {
                let text = self.text_features(s.id(), s.text(), budget)?;
                let audio = self.audio_features(s.id(), s.audio_ref(), clips)?;
                Ok((s.id().to_string(), SampleFeatures { text, audio }))
            })
            .collect::<Result<_>>()?;
        Ok(FeatureTable {
            token_budget: budget,
            text_adapter: self.text_encoder.id().to_string(),
            audio_adapter: self.audio_encoder.id().to_string(),
            entries: rows.into_iter().collect(),
        })
    }
}
