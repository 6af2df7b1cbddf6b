//! Log-mel spectrogram and fixed-size patching.

use std::sync::OnceLock;

use ndarray::{s, Array2, ArrayView2};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub const TARGET_RATE: u32 = 16_000;
pub const WINDOW_SAMPLES: usize = 400;
pub const HOP_SAMPLES: usize = 160;
pub const FFT_SIZE: usize = 512;
pub const MEL_BINS: usize = 64;
pub const MEL_MIN_HZ: f64 = 125.0;
pub const MEL_MAX_HZ: f64 = 7_500.0;
pub const LOG_FLOOR: f64 = 1e-10;
pub const PATCH_FRAMES: usize = 96;

/// Frames × 64 log2 mel energies at a 10 ms hop.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Array2<f64>,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }
}

/// Non-overlapping 96 × 64 patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence {
    pub patches: Vec<Array2<f64>>,
}

impl PatchSequence {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * ((mel / 1127.0).exp() - 1.0)
}

/// Expected frame count for a clip of `n` samples at 16 kHz.
pub fn frame_count(n: usize) -> usize {
    if n < WINDOW_SAMPLES {
        0
    } else {
        1 + (n - WINDOW_SAMPLES) / HOP_SAMPLES
    }
}

/// (lower edge, center, upper edge) in Hz of every mel band.
pub fn mel_band_edges() -> Vec<(f64, f64, f64)> {
    let lo = hz_to_mel(MEL_MIN_HZ);
    let hi = hz_to_mel(MEL_MAX_HZ);
    let step = (hi - lo) / (MEL_BINS + 1) as f64;
    (0..MEL_BINS)
        .map(|i| {
            let m = |k: usize| mel_to_hz(lo + step * k as f64);
            (m(i), m(i + 1), m(i + 2))
        })
        .collect()
}

/// (FFT_SIZE/2 + 1) × 64 triangular weights on the mel scale.
fn mel_weights() -> &'static Array2<f64> {
    static W: OnceLock<Array2<f64>> = OnceLock::new();
    W.get_or_init(|| {
        let n_spec = FFT_SIZE / 2 + 1;
        let nyquist = TARGET_RATE as f64 / 2.0;
        let lo = hz_to_mel(MEL_MIN_HZ);
        let hi = hz_to_mel(MEL_MAX_HZ);
        let step = (hi - lo) / (MEL_BINS + 1) as f64;
        let mut w = Array2::zeros((n_spec, MEL_BINS));
        // DC carries no useful mel energy
        for k in 1..n_spec {
            let mel = hz_to_mel(nyquist * k as f64 / (n_spec - 1) as f64);
            for b in 0..MEL_BINS {
                let lower = lo + step * b as f64;
                let center = lower + step;
                let upper = center + step;
                let up = (mel - lower) / (center - lower);
                let down = (upper - mel) / (upper - center);
                w[[k, b]] = up.min(down).max(0.0);
            }
        }
        w
    })
}

fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Resamples to 16 kHz, frames with a 25 ms Hann window and 10 ms hop, maps
/// magnitudes onto 64 mel bands and takes log2 above a 1e-10 floor.
pub fn audio_to_mel(clip: &AudioClip) -> Result<MelSpectrogram> {
    if clip.is_empty() {
        return Err(Error::ClipTooShort {
            samples: 0,
            window: WINDOW_SAMPLES,
        });
    }
    let clip = clip.resampled(TARGET_RATE)?;
    let x = clip.samples();
    let n_frames = frame_count(x.len());
    if n_frames == 0 {
        return Err(Error::ClipTooShort {
            samples: x.len(),
            window: WINDOW_SAMPLES,
        });
    }

    let window = periodic_hann(WINDOW_SAMPLES);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FFT_SIZE);
    let n_spec = FFT_SIZE / 2 + 1;
    let mut mags = Array2::<f64>::zeros((n_frames, n_spec));
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    for f in 0..n_frames {
        let start = f * HOP_SAMPLES;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < WINDOW_SAMPLES {
                Complex::new(x[start + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for k in 0..n_spec {
            mags[[f, k]] = buf[k].norm();
        }
    }

    let mut mel = mags.dot(mel_weights());
    mel.mapv_inplace(|v| v.max(LOG_FLOOR).log2());
    Ok(MelSpectrogram { frames: mel })
}

/// Splits into 96-frame patches; the last partial patch is zero-padded and
/// at least one patch is always produced.
pub fn frame_segments(mel: &MelSpectrogram) -> PatchSequence {
    let n = mel.n_frames();
    let n_patches = n.div_ceil(PATCH_FRAMES).max(1);
    let patches = (0..n_patches)
        .map(|p| {
            let mut patch = Array2::zeros((PATCH_FRAMES, MEL_BINS));
            let start = p * PATCH_FRAMES;
            let end = (start + PATCH_FRAMES).min(n);
            if start < end {
                patch
                    .slice_mut(s![..end - start, ..])
                    .assign(&mel.frames.slice(s![start..end, ..]));
            }
            patch
        })
        .collect();
    PatchSequence { patches }
}

/// True for rows added by [`frame_segments`] padding.
pub fn is_padding_row(patch: &ArrayView2<f64>, row: usize) -> bool {
    patch.row(row).iter().all(|&v| v == 0.0)
}
