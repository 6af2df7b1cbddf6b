//! Mono PCM clips, WAV persistence and sample-rate conversion.

use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// A mono clip of real-valued samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> u16 {
        1
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Returns a copy of this clip at `target_rate`.
    pub fn resampled(&self, target_rate: u32) -> Result<AudioClip> {
        if target_rate == 0 {
            return Err(Error::InvalidAudio("target rate must be positive".into()));
        }
        if target_rate == self.sample_rate {
            return Ok(self.clone());
        }
        let samples = resample_fft(&self.samples, self.sample_rate, target_rate);
        AudioClip::new(samples, target_rate)
    }

    /// Writes the clip as 16-bit PCM. Samples are clamped to [-1, 1].
    pub fn write_wav(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for &s in &self.samples {
            let v = (s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
            writer.write_sample(v)?;
        }
        writer.finalize()?;
        Ok(())
    }

    /// Reads a WAV file, down-mixing multi-channel audio to mono.
    pub fn read_wav(path: &Path) -> Result<AudioClip> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        let channels = spec.channels.max(1) as usize;
        let interleaved: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Float => reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()?,
            hound::SampleFormat::Int => {
                let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<std::result::Result<_, _>>()?
            }
        };
        let mono = interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f64>() / frame.len() as f64)
            .collect();
        AudioClip::new(mono, spec.sample_rate)
    }
}

/// Resolves a sample's audio reference to a clip.
pub trait ClipSource: Sync {
    /// Cheap readability probe; must not decode the whole clip.
    fn probe(&self, sample_id: &str, audio_ref: &str) -> ClipStatus;

    fn load(&self, sample_id: &str, audio_ref: &str) -> Result<AudioClip>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipStatus {
    Readable,
    Missing,
    Unreadable,
}

/// Reads WAV files from disk, resolving relative references against `root`.
#[derive(Debug, Clone, Default)]
pub struct FileClips {
    root: Option<std::path::PathBuf>,
}

impl FileClips {
    pub fn new(root: Option<&Path>) -> Self {
        Self {
            root: root.map(Path::to_path_buf),
        }
    }

    pub fn resolve(&self, audio_ref: &str) -> std::path::PathBuf {
        let p = Path::new(audio_ref);
        match &self.root {
            Some(root) if !p.is_absolute() => root.join(p),
            _ => p.to_path_buf(),
        }
    }
}

impl ClipSource for FileClips {
    fn probe(&self, _sample_id: &str, audio_ref: &str) -> ClipStatus {
        let path = self.resolve(audio_ref);
        if !path.is_file() {
            return ClipStatus::Missing;
        }
        match hound::WavReader::open(&path) {
            Ok(r) if r.spec().sample_rate > 0 => ClipStatus::Readable,
            _ => ClipStatus::Unreadable,
        }
    }

    fn load(&self, _sample_id: &str, audio_ref: &str) -> Result<AudioClip> {
        AudioClip::read_wav(&self.resolve(audio_ref))
    }
}

/// Clips held in memory, keyed by sample id.
#[derive(Debug, Clone, Default)]
pub struct MemoryClips {
    clips: std::collections::BTreeMap<String, AudioClip>,
}

impl MemoryClips {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sample_id: impl Into<String>, clip: AudioClip) {
        self.clips.insert(sample_id.into(), clip);
    }

    pub fn get(&self, sample_id: &str) -> Option<&AudioClip> {
        self.clips.get(sample_id)
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &AudioClip)> {
        self.clips.iter()
    }

    pub fn extend(&mut self, other: MemoryClips) {
        self.clips.extend(other.clips);
    }
}

impl ClipSource for MemoryClips {
    fn probe(&self, sample_id: &str, _audio_ref: &str) -> ClipStatus {
        match self.clips.get(sample_id) {
            Some(c) if !c.is_empty() => ClipStatus::Readable,
            Some(_) => ClipStatus::Unreadable,
            None => ClipStatus::Missing,
        }
    }

    fn load(&self, sample_id: &str, _audio_ref: &str) -> Result<AudioClip> {
        self.clips
            .get(sample_id)
            .cloned()
            .ok_or_else(|| Error::MissingAudio(sample_id.to_string()))
    }
}

/// Frequency-domain resampling of a whole signal.
///
/// The spectrum is truncated (or zero-extended) to the new length. Exact for
/// band-limited signals that are periodic over the clip.
pub fn resample_fft(input: &[f64], from_rate: u32, to_rate: u32) -> Vec<f64> {
    let n = input.len();
    if n == 0 || from_rate == to_rate {
        return input.to_vec();
    }
    let m = ((n as u128 * to_rate as u128 + from_rate as u128 / 2) / from_rate as u128) as usize;
    let m = m.max(1);

    let mut planner = FftPlanner::<f64>::new();
    let mut spectrum: Vec<Complex<f64>> = input.iter().map(|&x| Complex::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spectrum);

    let mut out = vec![Complex::new(0.0, 0.0); m];
    let shared = n.min(m);
    let half = (shared - 1) / 2;
    out[0] = spectrum[0];
    for k in 1..=half {
        out[k] = spectrum[k];
        out[m - k] = spectrum[n - k];
    }
    if shared.is_multiple_of(2) && shared > 0 {
        let h = shared / 2;
        if m < n {
            // both sides of the old spectrum fold into the new Nyquist bin
            out[h] = spectrum[h] + spectrum[n - h];
        } else if m > n {
            out[h] = spectrum[h] * 0.5;
            out[m - h] = spectrum[h] * 0.5;
        } else {
            out[h] = spectrum[h];
        }
    }

    planner.plan_fft_inverse(m).process(&mut out);
    let scale = 1.0 / n as f64;
    out.iter().map(|c| c.re * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect()
    }

    #[test]
    fn rejects_bad_clips() {
        assert!(AudioClip::new(vec![0.0], 0).is_err());
        assert!(AudioClip::new(vec![f64::NAN], 16_000).is_err());
    }

    #[test]
    fn periodic_tone_survives_round_trip() {
        // 100 Hz over 0.5 s is 50 whole cycles
        let x = tone(100.0, 16_000, 8_000);
        let up = resample_fft(&x, 16_000, 32_000);
        assert_eq!(up.len(), 16_000);
        let expected_up = tone(100.0, 32_000, 16_000);
        for (a, b) in up.iter().zip(&expected_up) {
            assert!((a - b).abs() < 1e-9);
        }
        let down = resample_fft(&up, 32_000, 16_000);
        for (a, b) in down.iter().zip(&x) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn odd_ratio_length() {
        let x = vec![0.0; 22_050];
        assert_eq!(resample_fft(&x, 22_050, 16_000).len(), 16_000);
    }

    #[test]
    fn wav_round_trip_quantizes_to_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip = AudioClip::new(tone(440.0, 8_000, 800).iter().map(|s| s * 0.5).collect(), 8_000).unwrap();
        clip.write_wav(&path).unwrap();
        let back = AudioClip::read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 8_000);
        assert_eq!(back.len(), 800);
        for (a, b) in back.samples().iter().zip(clip.samples()) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
