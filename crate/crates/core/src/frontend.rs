//! Audio ingestion and acoustic features.
//!
//! MFCCs follow Kaldi's `compute-mfcc-feats` defaults for 16 kHz audio:
//! 25 ms Povey-windowed frames every 10 ms, pre-emphasis 0.97, a 512-point
//! power spectrum, 23 triangular mel bins between 20 Hz and 8 kHz, DCT-II to
//! 13 cepstra, lifter 22 and log frame energy in place of c0.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("unsupported audio in {path}: {message}")]
    Unsupported { path: String, message: String },
    #[error("{0}: audio has no samples")]
    EmptyAudio(String),
    #[error("audio must be {expected} Hz mono, got {got} Hz")]
    SampleRate { expected: u32, got: u32 },
    #[error("speaker vector needs at least one frame")]
    NoFrames,
    #[error("frame index {index} out of range for {frames} frames")]
    FrameOutOfRange { index: usize, frames: usize },
    #[error("feature file: {0}")]
    FeatureFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a WAV file, mixes it down to mono and resamples to 16 kHz.
pub fn load_audio(path: &Path) -> Result<AudioBuffer, FrontendError> {
    let name = path.display().to_string();
    let unsupported = |message: String| FrontendError::Unsupported {
        path: name.clone(),
        message,
    };
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => FrontendError::Io(io),
        other => unsupported(format!("not a readable WAV file ({other})")),
    })?;
    let header = reader.spec();
    let channels = header.channels.max(1) as usize;
    let interleaved: Vec<f32> = match header.sample_format {
        hound::SampleFormat::Float => {
            if header.bits_per_sample != 32 {
                return Err(unsupported(format!("{}-bit float WAV", header.bits_per_sample)));
            }
            reader
                .into_samples::<f32>()
                .collect::<Result<_, _>>()
                .map_err(|e| unsupported(e.to_string()))?
        }
        hound::SampleFormat::Int => {
            let scale = (1i64 << (header.bits_per_sample - 1)) as f32;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| unsupported(e.to_string()))?
        }
    };
    if interleaved.is_empty() {
        return Err(FrontendError::EmptyAudio(name));
    }
    let mono: Vec<f32> = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f32>() / frame.len() as f32)
        .collect();
    Ok(AudioBuffer {
        samples: resample(&mono, header.sample_rate, SAMPLE_RATE),
        sample_rate: SAMPLE_RATE,
    })
}

/// Writes 16-bit PCM mono WAV.
pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<(), FrontendError> {
    let header = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, header).map_err(|e| FrontendError::FeatureFile(e.to_string()))?;
    for &s in &audio.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(|e| FrontendError::FeatureFile(e.to_string()))?;
    }
    w.finalize().map_err(|e| FrontendError::FeatureFile(e.to_string()))
}

/// Hann-windowed sinc resampling.
pub fn resample(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    const HALF_WIDTH: f64 = 16.0;
    let ratio = to as f64 / from as f64;
    let cutoff = ratio.min(1.0);
    let out_len = (input.len() as f64 * ratio).round() as usize;
    let support = HALF_WIDTH / cutoff;
    (0..out_len)
        .map(|n| {
            let center = n as f64 / ratio;
            let lo = (center - support).ceil().max(0.0) as usize;
            let hi = ((center + support).floor() as usize).min(input.len() - 1);
            let mut acc = 0.0;
            for (k, &x) in input.iter().enumerate().take(hi + 1).skip(lo) {
                let t = k as f64 - center;
                let arg = t * cutoff;
                let sinc = if arg.abs() < 1e-12 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
                let window = 0.5 + 0.5 * (PI * t / support).cos();
                acc += x as f64 * cutoff * sinc * window;
            }
            acc as f32
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_length: usize,
    pub frame_shift: usize,
    pub fft_size: usize,
    pub num_mel_bins: usize,
    pub low_freq: f64,
    pub high_freq: f64,
    pub num_ceps: usize,
    pub cepstral_lifter: f64,
    pub preemphasis: f64,
    /// Standard deviation of Gaussian dither in sample units; 0 disables it.
    pub dither: f64,
    pub dither_seed: u64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            frame_length: 400,
            frame_shift: 160,
            fft_size: 512,
            num_mel_bins: 23,
            low_freq: 20.0,
            high_freq: 8000.0,
            num_ceps: 13,
            cepstral_lifter: 22.0,
            preemphasis: 0.97,
            dither: 0.0,
            dither_seed: 0,
        }
    }
}

impl MfccConfig {
    /// Kaldi's default dither amplitude, for use with 16-bit-scaled samples
    /// converted to [-1, 1].
    pub const KALDI_DITHER: f64 = 1.0 / 32768.0;

    pub fn num_frames(&self, num_samples: usize) -> usize {
        if num_samples < self.frame_length {
            0
        } else {
            1 + (num_samples - self.frame_length) / self.frame_shift
        }
    }

    pub fn frame_shift_seconds(&self) -> f64 {
        self.frame_shift as f64 / self.sample_rate as f64
    }
}

/// Row-major T × dim matrix of per-frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Vec<f32>,
    pub num_frames: usize,
    pub dim: usize,
    pub frame_shift: f64,
    pub frame_length: f64,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f32>, num_frames: usize, dim: usize) -> Self {
        assert_eq!(data.len(), num_frames * dim);
        Self {
            data,
            num_frames,
            dim,
            frame_shift: 0.010,
            frame_length: 0.025,
        }
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.dim.max(1)).take(self.num_frames)
    }

    /// Diagnostic dump: magic, version, T, dim, then little-endian f32 rows.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), FrontendError> {
        w.write_all(FEATURE_MAGIC)?;
        w.write_all(&FEATURE_VERSION.to_le_bytes())?;
        w.write_all(&(self.num_frames as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, FrontendError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FEATURE_MAGIC {
            return Err(FrontendError::FeatureFile("bad magic".into()));
        }
        let mut word = [0u8; 4];
        let mut next = |r: &mut dyn Read| -> Result<u32, FrontendError> {
            r.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word))
        };
        let version = next(&mut r)?;
        if version != FEATURE_VERSION {
            return Err(FrontendError::FeatureFile(format!("unsupported version {version}")));
        }
        let t = next(&mut r)? as usize;
        let dim = next(&mut r)? as usize;
        let mut bytes = vec![0u8; t * dim * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| FrontendError::FeatureFile("truncated feature data".into()))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self::new(data, t, dim))
    }
}

const FEATURE_MAGIC: &[u8; 8] = b"PRAKFEAT";
const FEATURE_VERSION: u32 = 1;

/// Precomputed MFCC pipeline.
pub struct Mfcc {
    cfg: MfccConfig,
    window: Vec<f64>,
    mel_banks: Vec<Vec<(usize, f64)>>,
    dct: Vec<Vec<f64>>,
    lifter: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

fn mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

impl Mfcc {
    pub fn new(cfg: MfccConfig) -> Self {
        let n = cfg.frame_length;
        let window = (0..n)
            .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / (n as f64 - 1.0)).cos()).powf(0.85))
            .collect();

        let num_fft_bins = cfg.fft_size / 2;
        let bin_width = cfg.sample_rate as f64 / cfg.fft_size as f64;
        let (mel_low, mel_high) = (mel(cfg.low_freq), mel(cfg.high_freq));
        let delta = (mel_high - mel_low) / (cfg.num_mel_bins as f64 + 1.0);
        let mel_banks = (0..cfg.num_mel_bins)
            .map(|b| {
                let left = mel_low + b as f64 * delta;
                let center = left + delta;
                let right = center + delta;
                (0..num_fft_bins)
                    .filter_map(|i| {
                        let m = mel(bin_width * i as f64);
                        if m > left && m < right {
                            let w = if m <= center {
                                (m - left) / (center - left)
                            } else {
                                (right - m) / (right - center)
                            };
                            Some((i, w))
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();

        let nb = cfg.num_mel_bins as f64;
        let dct = (0..cfg.num_ceps)
            .map(|k| {
                (0..cfg.num_mel_bins)
                    .map(|j| {
                        if k == 0 {
                            (1.0 / nb).sqrt()
                        } else {
                            (2.0 / nb).sqrt() * (PI / nb * (j as f64 + 0.5) * k as f64).cos()
                        }
                    })
                    .collect()
            })
            .collect();
        let lifter = (0..cfg.num_ceps)
            .map(|i| {
                if cfg.cepstral_lifter > 0.0 {
                    1.0 + 0.5 * cfg.cepstral_lifter * (PI * i as f64 / cfg.cepstral_lifter).sin()
                } else {
                    1.0
                }
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Self {
            cfg,
            window,
            mel_banks,
            dct,
            lifter,
            fft,
        }
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    /// Center frequencies of the mel bins in Hz.
    pub fn mel_centers(&self) -> Vec<f64> {
        let (lo, hi) = (mel(self.cfg.low_freq), mel(self.cfg.high_freq));
        let delta = (hi - lo) / (self.cfg.num_mel_bins as f64 + 1.0);
        (1..=self.cfg.num_mel_bins)
            .map(|b| 700.0 * (((lo + b as f64 * delta) / 1127.0).exp() - 1.0))
            .collect()
    }

    /// Power spectrum |X_k|², k = 0..=fft_size/2, of a frame zero-padded to
    /// the FFT size.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = (0..self.cfg.fft_size)
            .map(|i| Complex::new(frame.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf[..=self.cfg.fft_size / 2].iter().map(|c| c.norm_sqr()).collect()
    }

    /// Windowed, pre-emphasized frame and its raw log energy.
    fn prepare(&self, raw: &[f32], rng: Option<&mut ChaCha8Rng>) -> (Vec<f64>, f64) {
        let mut x: Vec<f64> = raw.iter().map(|&s| s as f64).collect();
        if let Some(rng) = rng {
            for v in &mut x {
                let g: f64 = StandardNormal.sample(rng);
                *v += self.cfg.dither * g;
            }
        }
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter_mut().for_each(|v| *v -= mean);
        let energy = x.iter().map(|v| v * v).sum::<f64>().max(f32::EPSILON as f64).ln();
        let a = self.cfg.preemphasis;
        for i in (1..x.len()).rev() {
            x[i] -= a * x[i - 1];
        }
        x[0] -= a * x[0];
        for (v, w) in x.iter_mut().zip(&self.window) {
            *v *= w;
        }
        (x, energy)
    }

    fn log_mel(&self, power: &[f64]) -> Vec<f64> {
        self.mel_banks
            .iter()
            .map(|bank| {
                bank.iter()
                    .map(|&(i, w)| w * power[i])
                    .sum::<f64>()
                    .max(f32::EPSILON as f64)
                    .ln()
            })
            .collect()
    }

    /// Log mel filterbank energies of every frame.
    pub fn mel_energies(&self, audio: &AudioBuffer) -> Vec<Vec<f64>> {
        let t = self.cfg.num_frames(audio.samples.len());
        (0..t)
            .map(|i| {
                let s = i * self.cfg.frame_shift;
                let (frame, _) = self.prepare(&audio.samples[s..s + self.cfg.frame_length], None);
                self.log_mel(&self.power_spectrum(&frame))
            })
            .collect()
    }

    pub fn compute(&self, audio: &AudioBuffer) -> Result<FeatureMatrix, FrontendError> {
        if audio.sample_rate != self.cfg.sample_rate {
            return Err(FrontendError::SampleRate {
                expected: self.cfg.sample_rate,
                got: audio.sample_rate,
            });
        }
        let t = self.cfg.num_frames(audio.samples.len());
        let mut rng = (self.cfg.dither > 0.0).then(|| ChaCha8Rng::seed_from_u64(self.cfg.dither_seed));
        let mut data = Vec::with_capacity(t * self.cfg.num_ceps);
        for i in 0..t {
            let s = i * self.cfg.frame_shift;
            let (frame, energy) = self.prepare(&audio.samples[s..s + self.cfg.frame_length], rng.as_mut());
            let logmel = self.log_mel(&self.power_spectrum(&frame));
            for (k, row) in self.dct.iter().enumerate() {
                let c = if k == 0 {
                    energy
                } else {
                    row.iter().zip(&logmel).map(|(a, b)| a * b).sum::<f64>() * self.lifter[k]
                };
                data.push(c as f32);
            }
        }
        let mut m = FeatureMatrix::new(data, t, self.cfg.num_ceps);
        m.frame_shift = self.cfg.frame_shift_seconds();
        m.frame_length = self.cfg.frame_length as f64 / self.cfg.sample_rate as f64;
        Ok(m)
    }
}

/// MFCCs with the given dither setting and otherwise default parameters.
pub fn compute_mfcc(audio: &AudioBuffer, dither: bool) -> Result<FeatureMatrix, FrontendError> {
    let cfg = MfccConfig {
        dither: if dither { MfccConfig::KALDI_DITHER } else { 0.0 },
        ..MfccConfig::default()
    };
    Mfcc::new(cfg).compute(audio)
}

/// Mean feature vectors of four energy bands, highest energy first.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerVector {
    pub values: Vec<f32>,
}

fn mean_rows(m: &FeatureMatrix, idx: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0f64; m.dim];
    for &t in idx {
        for (a, &v) in acc.iter_mut().zip(m.row(t)) {
            *a += v as f64;
        }
    }
    acc.iter_mut().for_each(|a| *a /= idx.len() as f64);
    acc
}

/// Splits frames at the mean of coefficient 0 (log energy): at-or-above
/// versus below. Groups where every frame has the same energy go entirely
/// to the upper half.
fn split_by_energy(m: &FeatureMatrix, idx: &[usize]) -> (Vec<usize>, Vec<usize>) {
    if idx.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let energy = |t: usize| m.row(t)[0] as f64;
    let mean = idx.iter().map(|&t| energy(t)).sum::<f64>() / idx.len() as f64;
    let max = idx.iter().map(|&t| energy(t)).fold(f64::NEG_INFINITY, f64::max);
    idx.iter().partition(|&&t| energy(t) >= mean || energy(t) == max)
}

pub fn speaker_vector(features: &FeatureMatrix) -> Result<SpeakerVector, FrontendError> {
    if features.num_frames == 0 {
        return Err(FrontendError::NoFrames);
    }
    let all: Vec<usize> = (0..features.num_frames).collect();
    let global = mean_rows(features, &all);
    let (high, low) = split_by_energy(features, &all);
    let mut values = Vec::with_capacity(4 * features.dim);
    for half in [high, low] {
        // An empty half falls back to the global mean, an empty quarter to
        // its half's mean.
        let parent = if half.is_empty() { global.clone() } else { mean_rows(features, &half) };
        let (upper, lower) = split_by_energy(features, &half);
        for quarter in [upper, lower] {
            let v = if quarter.is_empty() { parent.clone() } else { mean_rows(features, &quarter) };
            values.extend(v.into_iter().map(|x| x as f32));
        }
    }
    Ok(SpeakerVector { values })
}

/// Input vector for frame `t`: `context` frames on each side (edges
/// replicated) followed by the speaker vector.
pub fn window_features_with(
    features: &FeatureMatrix,
    spk: &SpeakerVector,
    t: usize,
    context: usize,
    out: &mut Vec<f32>,
) -> Result<(), FrontendError> {
    let n = features.num_frames;
    if t >= n {
        return Err(FrontendError::FrameOutOfRange { index: t, frames: n });
    }
    out.clear();
    for k in 0..=2 * context {
        let src = (t + k).saturating_sub(context).min(n - 1);
        out.extend_from_slice(features.row(src));
    }
    out.extend_from_slice(&spk.values);
    Ok(())
}

pub const CONTEXT_FRAMES: usize = 9;

/// 19-frame window plus speaker vector: 19·13 + 52 = 299 values.
pub fn window_features(features: &FeatureMatrix, spk: &SpeakerVector, t: usize) -> Result<Vec<f32>, FrontendError> {
    let mut out = Vec::with_capacity((2 * CONTEXT_FRAMES + 1) * features.dim + spk.values.len());
    window_features_with(features, spk, t, CONTEXT_FRAMES, &mut out)?;
    Ok(out)
}

/// Input dimension for a given cepstral dimension and context.
pub fn input_dim(num_ceps: usize, context: usize) -> usize {
    (2 * context + 1) * num_ceps + 4 * num_ceps
}

/// All window vectors of an utterance, row-major.
pub fn utterance_inputs(features: &FeatureMatrix, context: usize) -> Result<Vec<f32>, FrontendError> {
    let spk = speaker_vector(features)?;
    let dim = input_dim(features.dim, context);
    let mut all = Vec::with_capacity(features.num_frames * dim);
    let mut buf = Vec::with_capacity(dim);
    for t in 0..features.num_frames {
        window_features_with(features, &spk, t, context, &mut buf)?;
        all.extend_from_slice(&buf);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, seconds: f64, amp: f64) -> AudioBuffer {
        let n = (seconds * SAMPLE_RATE as f64) as usize;
        AudioBuffer {
            samples: (0..n)
                .map(|i| (amp * (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin()) as f32)
                .collect(),
            sample_rate: SAMPLE_RATE,
        }
    }

    #[test]
    fn frame_count() {
        let m = compute_mfcc(&sine(440.0, 1.0, 0.5), false).unwrap();
        assert_eq!(m.num_frames, 98);
        assert_eq!(m.dim, 13);
        let cfg = MfccConfig::default();
        assert_eq!(cfg.num_frames(399), 0);
        assert_eq!(cfg.num_frames(400), 1);
        assert_eq!(cfg.num_frames(559), 1);
        assert_eq!(cfg.num_frames(560), 2);
        let short = AudioBuffer {
            samples: vec![0.0; 100],
            sample_rate: SAMPLE_RATE,
        };
        assert_eq!(compute_mfcc(&short, false).unwrap().num_frames, 0);
    }

    #[test]
    fn silence_rows_identical() {
        let audio = AudioBuffer {
            samples: vec![0.0; 8000],
            sample_rate: SAMPLE_RATE,
        };
        let m = compute_mfcc(&audio, false).unwrap();
        let first = m.row(0).to_vec();
        assert!(m.rows().all(|r| r == first.as_slice()));
    }

    #[test]
    fn deterministic_without_dither() {
        let a = sine(300.0, 0.5, 0.3);
        assert_eq!(compute_mfcc(&a, false).unwrap(), compute_mfcc(&a, false).unwrap());
        // Seeded dither is reproducible too.
        assert_eq!(compute_mfcc(&a, true).unwrap(), compute_mfcc(&a, true).unwrap());
    }

    #[test]
    fn power_spectrum_matches_naive_dft() {
        let mfcc = Mfcc::new(MfccConfig::default());
        let frame: Vec<f64> = (0..400).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect();
        let fast = mfcc.power_spectrum(&frame);
        for k in [0usize, 1, 17, 128, 255, 256] {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, x) in frame.iter().enumerate() {
                let ang = -2.0 * PI * (k * n) as f64 / 512.0;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            let naive = re * re + im * im;
            assert!((fast[k] - naive).abs() <= 1e-9 * naive.max(1.0), "bin {k}");
        }
    }

    #[test]
    fn sine_peaks_move_up_the_mel_scale() {
        let mfcc = Mfcc::new(MfccConfig::default());
        let argmax = |freq: f64| {
            let e = mfcc.mel_energies(&sine(freq, 0.1, 0.5));
            let row = &e[e.len() / 2];
            (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap()
        };
        let (lo, hi) = (argmax(1000.0), argmax(4000.0));
        assert!(hi > lo);
        // The peak bin is the one whose center lies closest to the tone.
        let centers = mfcc.mel_centers();
        let nearest = |f: f64| {
            (0..centers.len())
                .min_by(|&a, &b| (mel(centers[a]) - mel(f)).abs().total_cmp(&(mel(centers[b]) - mel(f)).abs()))
                .unwrap()
        };
        assert_eq!(lo, nearest(1000.0));
        assert_eq!(hi, nearest(4000.0));
    }

    #[test]
    fn amplitude_scaling_shifts_energy_only() {
        let noise = |amp: f32| {
            let mut state = 12345u32;
            let samples = (0..4800)
                .map(|_| {
                    state = state.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
                    amp * ((state >> 8) as f32 / (1u32 << 24) as f32 - 0.5)
                })
                .collect();
            AudioBuffer {
                samples,
                sample_rate: SAMPLE_RATE,
            }
        };
        let a = compute_mfcc(&noise(0.1), false).unwrap();
        let b = compute_mfcc(&noise(0.4), false).unwrap();
        let shift = 2.0 * 4f64.ln();
        for t in 0..a.num_frames {
            assert!(((b.row(t)[0] - a.row(t)[0]) as f64 - shift).abs() < 1e-3);
            for k in 1..13 {
                assert!((b.row(t)[k] - a.row(t)[k]).abs() < 1e-3, "t {t} k {k}");
            }
        }
        let sa = speaker_vector(&a).unwrap();
        let sb = speaker_vector(&b).unwrap();
        for band in 0..4 {
            assert!((sb.values[band * 13] - sa.values[band * 13] - shift as f32).abs() < 1e-3);
        }
    }

    fn matrix(rows: &[Vec<f32>]) -> FeatureMatrix {
        FeatureMatrix::new(rows.concat(), rows.len(), rows[0].len())
    }

    #[test]
    fn speaker_vector_cases() {
        let v: Vec<f32> = (0..13).map(|i| i as f32 * 0.5).collect();
        let constant = matrix(&vec![v.clone(); 7]);
        assert_eq!(speaker_vector(&constant).unwrap().values, [v.clone(), v.clone(), v.clone(), v.clone()].concat());

        let single = matrix(std::slice::from_ref(&v));
        assert_eq!(speaker_vector(&single).unwrap().values, [v.clone(), v.clone(), v.clone(), v.clone()].concat());

        let mut loud = vec![1.0f32; 13];
        loud[0] = 5.0;
        let mut quiet = vec![-1.0f32; 13];
        quiet[0] = -3.0;
        let mut rows = vec![loud.clone(); 6];
        rows.extend(vec![quiet.clone(); 6]);
        let sv = speaker_vector(&matrix(&rows)).unwrap();
        assert_eq!(sv.values, [loud.clone(), loud, quiet.clone(), quiet].concat());

        let empty = FeatureMatrix::new(Vec::new(), 0, 13);
        assert!(matches!(speaker_vector(&empty), Err(FrontendError::NoFrames)));
    }

    #[test]
    fn speaker_vector_four_levels() {
        let level = |e: f32| {
            let mut r = vec![e; 13];
            r[0] = e;
            r
        };
        let rows: Vec<Vec<f32>> = [4.0, 3.0, 2.0, 1.0, 4.0, 3.0, 2.0, 1.0].iter().map(|&e| level(e)).collect();
        let sv = speaker_vector(&matrix(&rows)).unwrap();
        let firsts: Vec<f32> = (0..4).map(|b| sv.values[b * 13]).collect();
        assert_eq!(firsts, vec![4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn speaker_vector_ignores_frame_order() {
        let rows: Vec<Vec<f32>> = (0..20)
            .map(|t| (0..13).map(|k| ((t * 7 + k * 3) % 11) as f32 - (t % 5) as f32).collect())
            .collect();
        let mut shuffled = rows.clone();
        shuffled.reverse();
        shuffled.swap(3, 11);
        assert_eq!(speaker_vector(&matrix(&rows)).unwrap(), speaker_vector(&matrix(&shuffled)).unwrap());
    }

    #[test]
    fn windows() {
        let rows: Vec<Vec<f32>> = (0..30).map(|t| vec![t as f32; 13]).collect();
        let m = matrix(&rows);
        let spk = speaker_vector(&m).unwrap();
        let w = window_features(&m, &spk, 15).unwrap();
        assert_eq!(w.len(), 299);
        for k in 0..19 {
            assert_eq!(w[k * 13], (15 + k - 9) as f32);
        }
        assert_eq!(&w[247..], spk.values.as_slice());
        let w0 = window_features(&m, &spk, 0).unwrap();
        for k in 0..10 {
            assert_eq!(w0[k * 13], 0.0);
        }
        assert_eq!(w0[10 * 13], 1.0);
        let wl = window_features(&m, &spk, 29).unwrap();
        assert_eq!(wl[18 * 13], 29.0);
        assert!(matches!(
            window_features(&m, &spk, 30),
            Err(FrontendError::FrameOutOfRange { index: 30, frames: 30 })
        ));
        assert_eq!(input_dim(13, 9), 299);
    }

    #[test]
    fn feature_dump_round_trip() {
        let m = compute_mfcc(&sine(500.0, 0.2, 0.2), false).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = FeatureMatrix::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.data, m.data);
        assert!(FeatureMatrix::read_from(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn resample_length_and_tone() {
        let n = 48_000;
        let input: Vec<f32> = (0..n).map(|i| (2.0 * PI * 440.0 * i as f64 / 48_000.0).sin() as f32).collect();
        let out = resample(&input, 48_000, 16_000);
        assert!((out.len() as i64 - 16_000).abs() <= 1);
        // Interior samples follow the same 440 Hz tone.
        for i in 1000..1100 {
            let want = (2.0 * PI * 440.0 * i as f64 / 16_000.0).sin();
            assert!((out[i] as f64 - want).abs() < 0.01, "sample {i}");
        }
    }

    #[test]
    fn wav_loading() {
        let dir = tempfile::tempdir().unwrap();
        let header = |channels, rate| hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mono = dir.path().join("mono.wav");
        let mut w = hound::WavWriter::create(&mono, header(1, 16_000)).unwrap();
        for i in 0..16_000 {
            w.write_sample(((i % 100) as i16 - 50) * 100).unwrap();
        }
        w.finalize().unwrap();
        assert_eq!(load_audio(&mono).unwrap().samples.len(), 16_000);

        let stereo = dir.path().join("stereo.wav");
        let mut w = hound::WavWriter::create(&stereo, header(2, 16_000)).unwrap();
        for i in 0..8_000 {
            let v = ((i % 77) as i16 - 38) * 200;
            w.write_sample(v).unwrap();
            w.write_sample(-v).unwrap();
        }
        w.finalize().unwrap();
        let a = load_audio(&stereo).unwrap();
        assert_eq!(a.samples.len(), 8_000);
        assert!(a.samples.iter().all(|&s| s == 0.0));

        let fast = dir.path().join("48k.wav");
        let mut w = hound::WavWriter::create(&fast, header(1, 48_000)).unwrap();
        for i in 0..48_000 {
            w.write_sample(((i % 200) as i16 - 100) * 10).unwrap();
        }
        w.finalize().unwrap();
        let a = load_audio(&fast).unwrap();
        assert!((a.samples.len() as i64 - 16_000).abs() <= 1);

        let float = dir.path().join("float.wav");
        let fspec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&float, fspec).unwrap();
        for _ in 0..1600 {
            w.write_sample(0.25f32).unwrap();
        }
        w.finalize().unwrap();
        assert!(load_audio(&float).unwrap().samples.iter().all(|&s| s == 0.25));

        let empty = dir.path().join("empty.wav");
        hound::WavWriter::create(&empty, header(1, 16_000)).unwrap().finalize().unwrap();
        assert!(matches!(load_audio(&empty), Err(FrontendError::EmptyAudio(_))));

        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"OggS not a wav at all").unwrap();
        assert!(matches!(load_audio(&junk), Err(FrontendError::Unsupported { .. })));
    }
}
