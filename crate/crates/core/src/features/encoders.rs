//! Encoder adapters: deterministic mocks for offline runs and stand-ins for
//! pretrained models whose features are produced outside this process.

use ndarray::{Array1, Array2, ArrayView2};

use super::mel::{is_padding_row, MEL_BINS, PATCH_FRAMES};
use super::tokenizer::TokenSeq;
use super::{AUDIO_DIM, TEXT_DIM};
use crate::error::{Error, Result};

pub trait TextEncoderAdapter: Send + Sync {
    fn id(&self) -> &str;

    fn version(&self) -> &str;

    /// True when the output is a pure function of the input.
    fn deterministic(&self) -> bool;

    /// One 768-dimensional row per token position.
    fn encode(&self, tokens: &TokenSeq) -> Result<Array2<f64>>;
}

pub trait AudioEncoderAdapter: Send + Sync {
    fn id(&self) -> &str;

    fn version(&self) -> &str;

    fn deterministic(&self) -> bool;

    /// A 512-dimensional embedding of one 96 × 64 patch.
    fn encode_patch(&self, patch: ArrayView2<f64>) -> Result<Array1<f64>>;
}

/// Row `i` is the one-hot of token `i`'s id folded into 768 slots.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockTextEncoder;

impl TextEncoderAdapter for MockTextEncoder {
    fn id(&self) -> &str {
        "mock-onehot"
    }

    fn version(&self) -> &str {
        "1"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn encode(&self, tokens: &TokenSeq) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((tokens.len(), TEXT_DIM));
        for (row, &tok) in tokens.tokens.iter().enumerate() {
            out[[row, tok as usize % TEXT_DIM]] = 1.0;
        }
        Ok(out)
    }
}

/// Patch mean tiled across all 512 dimensions.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanTileAudioEncoder;

impl AudioEncoderAdapter for MeanTileAudioEncoder {
    fn id(&self) -> &str {
        "mock-meantile"
    }

    fn version(&self) -> &str {
        "1"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn encode_patch(&self, patch: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_patch(&patch)?;
        let mean = patch.mean().unwrap_or(0.0);
        Ok(Array1::from_elem(AUDIO_DIM, mean))
    }
}

/// Per-band time average over the patch's real frames, standardized across
/// bands and tiled to 512 dimensions. Keeps the spectral shape a tone or
/// formant pattern leaves behind.
#[derive(Debug, Clone, Copy, Default)]
pub struct BandPoolAudioEncoder;

impl AudioEncoderAdapter for BandPoolAudioEncoder {
    fn id(&self) -> &str {
        "mock-bandpool"
    }

    fn version(&self) -> &str {
        "1"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn encode_patch(&self, patch: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_patch(&patch)?;
        let real: Vec<usize> = (0..patch.nrows()).filter(|&r| !is_padding_row(&patch, r)).collect();
        if real.is_empty() {
            return Ok(Array1::zeros(AUDIO_DIM));
        }
        let mut bands = Array1::<f64>::zeros(MEL_BINS);
        for &r in &real {
            bands += &patch.row(r);
        }
        bands /= real.len() as f64;
        let mean = bands.mean().unwrap_or(0.0);
        let std = bands.mapv(|v| (v - mean).powi(2)).mean().unwrap_or(0.0).sqrt();
        if std > 1e-12 {
            bands.mapv_inplace(|v| (v - mean) / std);
        } else {
            bands.fill(0.0);
        }
        Ok(Array1::from_shape_fn(AUDIO_DIM, |i| bands[i % MEL_BINS]))
    }
}

fn check_patch(patch: &ArrayView2<f64>) -> Result<()> {
    if patch.dim() != (PATCH_FRAMES, MEL_BINS) {
        return Err(Error::Shape(format!(
            "patch must be {PATCH_FRAMES}x{MEL_BINS}, got {:?}",
            patch.dim()
        )));
    }
    Ok(())
}

/// A pretrained model that runs outside this process. It has no in-process
/// forward pass: its features must already be in the feature cache, written
/// by the external extractor under this adapter's id and version.
#[derive(Debug, Clone)]
pub struct ExternalEncoder {
    pub id: String,
    pub version: String,
}

impl ExternalEncoder {
    pub fn bert_base() -> Self {
        Self {
            id: "bert-base-uncased".into(),
            version: "1".into(),
        }
    }

    pub fn vggish() -> Self {
        Self {
            id: "vggish".into(),
            version: "1".into(),
        }
    }

    fn unavailable(&self) -> Error {
        Error::Encoder {
            adapter: self.id.clone(),
            message: "no in-process model; features must be supplied through the feature cache"
                .into(),
        }
    }
}

impl TextEncoderAdapter for ExternalEncoder {
    fn id(&self) -> &str {
        &self.id
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn encode(&self, _tokens: &TokenSeq) -> Result<Array2<f64>> {
        Err(self.unavailable())
    }
}

impl AudioEncoderAdapter for ExternalEncoder {
    fn id(&self) -> &str {
        &self.id
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn encode_patch(&self, _patch: ArrayView2<f64>) -> Result<Array1<f64>> {
        Err(self.unavailable())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::tokenizer::{HashingTokenizer, Tokenizer};

    #[test]
    fn onehot_rows_depend_only_on_their_token() {
        let a = HashingTokenizer.tokenize("oh great", 20).unwrap();
        let b = HashingTokenizer.tokenize("oh wonderful", 20).unwrap();
        let fa = MockTextEncoder.encode(&a).unwrap();
        let fb = MockTextEncoder.encode(&b).unwrap();
        assert_eq!(fa.dim(), (20, 768));
        assert_eq!(fa.row(1), fb.row(1));
        assert_ne!(fa.row(2), fb.row(2));
        for r in 0..20 {
            assert_eq!(fa.row(r).sum(), 1.0);
        }
    }

    #[test]
    fn mean_tile_repeats_patch_mean() {
        let patch = Array2::from_shape_fn((96, 64), |(r, c)| (r + c) as f64);
        let e = MeanTileAudioEncoder.encode_patch(patch.view()).unwrap();
        let mean = patch.mean().unwrap();
        assert!(e.iter().all(|&v| v == mean));
        assert_eq!(e.len(), 512);
    }

    #[test]
    fn band_pool_ignores_padding_and_standardizes() {
        let mut patch = Array2::zeros((96, 64));
        for r in 0..10 {
            for c in 0..64 {
                patch[[r, c]] = if c == 20 { 5.0 } else { -3.0 };
            }
        }
        let e = BandPoolAudioEncoder.encode_patch(patch.view()).unwrap();
        assert!((e.mean().unwrap()).abs() < 1e-12);
        let argmax = (0..64).max_by(|&a, &b| e[a].total_cmp(&e[b])).unwrap();
        assert_eq!(argmax, 20);
        assert_eq!(e[20], e[84]);
    }

    #[test]
    fn wrong_patch_shape_rejected() {
        let patch = Array2::zeros((10, 64));
        assert!(BandPoolAudioEncoder.encode_patch(patch.view()).is_err());
    }

    #[test]
    fn external_encoder_needs_cache() {
        let tok = HashingTokenizer.tokenize("x", 20).unwrap();
        assert!(TextEncoderAdapter::encode(&ExternalEncoder::bert_base(), &tok).is_err());
    }
}
