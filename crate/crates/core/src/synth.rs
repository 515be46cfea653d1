//! Synthetic speech-like corpora with known segmentations.
//!
//! Every phone is rendered as a pair of steady tones (noise for silence), so
//! frame labels are known exactly. Used to check that training from the
//! uniform bootstrap recovers the true boundaries.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decoder::{Alignment, PhoneInterval};
use crate::frontend::{AudioBuffer, MfccConfig, SAMPLE_RATE};
use crate::g2p::PronSausage;
use crate::phoneset::PhoneInventory;

/// Eight phones: silence, glottal stop, four vowels, `s` and `m`.
pub const MINI_INVENTORY: &str = "\
_\tsil\t‖\tsilence\t-\t-\t-
?\t?\tʔ\tglottal-stop\t-\t-\t-
a\ta\ta\tvowel\t-\t-\t-
e\te\tɛ\tvowel\t-\t-\t-
i\ti\ti\tvowel\t-\t-\t-
o\to\to\tvowel\t-\t-\t-
s\ts\ts\tsonorant\t-\t-\t-
m\tm\tm\tsonorant\t-\t-\tnasal
";

pub fn mini_inventory() -> PhoneInventory {
    PhoneInventory::parse(MINI_INVENTORY).expect("built-in mini inventory is valid")
}

/// Phones used in synthetic words; their spellings transcribe one-to-one.
pub const SPOKEN: [char; 6] = ['a', 'e', 'i', 'o', 's', 'm'];

/// Tone pair (Hz) of each spoken phone.
fn tones(code: char) -> (f64, f64) {
    match code {
        'a' => (750.0, 1250.0),
        'e' => (480.0, 1950.0),
        'i' => (290.0, 2400.0),
        'o' => (520.0, 880.0),
        's' => (4400.0, 6100.0),
        'm' => (210.0, 3100.0),
        _ => (1000.0, 3000.0),
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub utterances: usize,
    pub seed: u64,
    pub words: (usize, usize),
    pub phones_per_word: (usize, usize),
    /// Phone duration range in frames.
    pub phone_frames: (usize, usize),
    pub edge_silence_frames: (usize, usize),
    pub pause_probability: f64,
    /// Relative random detuning of each segment's tones.
    pub tone_jitter: f64,
    /// Per-utterance gain range.
    pub gain: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            utterances: 100,
            seed: 1,
            words: (3, 6),
            phones_per_word: (2, 4),
            phone_frames: (4, 12),
            edge_silence_frames: (10, 30),
            pause_probability: 0.3,
            tone_jitter: 0.03,
            gain: (0.5, 1.5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub audio: AudioBuffer,
    pub words: Vec<String>,
    /// Space-separated words.
    pub text: String,
    /// Frame labels by the frame-center rule.
    pub truth: Alignment,
}

impl SynthUtterance {
    /// Sausage with optional silence at every word boundary.
    pub fn sausage(&self) -> PronSausage {
        let pairs: Vec<(&str, &str)> = self.words.iter().map(|w| (w.as_str(), w.as_str())).collect();
        PronSausage::from_words(&pairs, '_')
    }
}

pub fn generate_corpus(cfg: &SynthConfig) -> Vec<SynthUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.utterances).map(|_| generate_one(cfg, &mut rng)).collect()
}

fn generate_one(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> SynthUtterance {
    let shift = MfccConfig::default().frame_shift;
    // (phone, duration in frames)
    let mut segments: Vec<(char, usize)> = Vec::new();
    let mut words = Vec::new();
    segments.push(('_', rng.random_range(cfg.edge_silence_frames.0..=cfg.edge_silence_frames.1)));
    let n_words = rng.random_range(cfg.words.0..=cfg.words.1);
    let mut prev = '_';
    for w in 0..n_words {
        if w > 0 && rng.random_bool(cfg.pause_probability) {
            segments.push(('_', rng.random_range(5..=15)));
            prev = '_';
        }
        let len = rng.random_range(cfg.phones_per_word.0..=cfg.phones_per_word.1);
        let mut word = String::new();
        for _ in 0..len {
            let mut c = SPOKEN[rng.random_range(0..SPOKEN.len())];
            while c == prev {
                c = SPOKEN[rng.random_range(0..SPOKEN.len())];
            }
            word.push(c);
            segments.push((c, rng.random_range(cfg.phone_frames.0..=cfg.phone_frames.1)));
            prev = c;
        }
        words.push(word);
    }
    segments.push(('_', rng.random_range(cfg.edge_silence_frames.0..=cfg.edge_silence_frames.1)));

    let gain = if cfg.gain.1 > cfg.gain.0 { rng.random_range(cfg.gain.0..cfg.gain.1) } else { cfg.gain.0 };
    let mut samples = Vec::new();
    let mut sample_labels = Vec::new();
    for &(c, frames) in &segments {
        let n = frames * shift;
        let (f1, f2) = tones(c);
        let mut jitter = || 1.0 + cfg.tone_jitter * rng.random_range(-1.0..=1.0);
        let (j1, j2) = (jitter(), jitter());
        let (p1, p2) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
        for _ in 0..n {
            let t = samples.len() as f64 / SAMPLE_RATE as f64;
            let noise = rng.random_range(-1.0..1.0);
            let v = if c == '_' {
                0.002 * noise
            } else {
                gain * (0.2 * (2.0 * PI * f1 * j1 * t + p1).sin() + 0.12 * (2.0 * PI * f2 * j2 * t + p2).sin())
                    + 0.01 * noise
            };
            samples.push(v as f32);
            sample_labels.push(c);
        }
    }
    let mfcc = MfccConfig::default();
    let frames = mfcc.num_frames(samples.len());
    let mut phones: Vec<PhoneInterval> = Vec::new();
    for t in 0..frames {
        let c = sample_labels[t * mfcc.frame_shift + mfcc.frame_length / 2];
        match phones.last_mut() {
            Some(last) if last.phone == c => last.end = t + 1,
            _ => phones.push(PhoneInterval { phone: c, start: t, end: t + 1 }),
        }
    }
    SynthUtterance {
        audio: AudioBuffer {
            samples,
            sample_rate: SAMPLE_RATE,
        },
        text: words.join(" "),
        words,
        truth: Alignment {
            phones,
            words: Vec::new(),
            num_frames: frames,
        },
    }
}

/// Fraction of frames whose labels agree.
pub fn frame_accuracy(truth: &Alignment, hyp: &Alignment) -> f64 {
    let a = frame_codes(truth);
    let b = frame_codes(hyp);
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    a.iter().zip(&b).filter(|(x, y)| x == y).count() as f64 / n as f64
}

fn frame_codes(a: &Alignment) -> Vec<char> {
    a.phones
        .iter()
        .flat_map(|p| std::iter::repeat_n(p.phone, p.end - p.start))
        .collect()
}

/// Absolute differences (frames) between the start and end boundaries of
/// corresponding non-silence phones. Both alignments must spell the same
/// non-silence sequence; `None` otherwise.
pub fn boundary_errors(truth: &Alignment, hyp: &Alignment) -> Option<Vec<usize>> {
    let speech = |a: &Alignment| -> Vec<PhoneInterval> { a.phones.iter().filter(|p| p.phone != '_').cloned().collect() };
    let (t, h) = (speech(truth), speech(hyp));
    if t.len() != h.len() || t.iter().zip(&h).any(|(x, y)| x.phone != y.phone) {
        return None;
    }
    Some(
        t.iter()
            .zip(&h)
            .flat_map(|(x, y)| [x.start.abs_diff(y.start), x.end.abs_diff(y.end)])
            .collect(),
    )
}

pub fn median(values: &mut [usize]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_consistent() {
        let inv = mini_inventory();
        assert_eq!(inv.len(), 8);
        let corpus = generate_corpus(&SynthConfig {
            utterances: 5,
            ..Default::default()
        });
        for u in &corpus {
            u.truth.validate().unwrap();
            let spelled: String = u.truth.phone_string().chars().filter(|&c| c != '_').collect();
            assert_eq!(spelled, u.words.concat());
            assert!(crate::decoder::AlignGraph::build(&u.sausage(), &inv, 1).is_ok());
        }
        let again = generate_corpus(&SynthConfig {
            utterances: 5,
            ..Default::default()
        });
        assert_eq!(again[3].audio, corpus[3].audio);
    }

    #[test]
    fn metrics() {
        let a = Alignment {
            phones: vec![
                PhoneInterval { phone: '_', start: 0, end: 4 },
                PhoneInterval { phone: 'a', start: 4, end: 8 },
                PhoneInterval { phone: '_', start: 8, end: 10 },
            ],
            words: vec![],
            num_frames: 10,
        };
        let b = Alignment {
            phones: vec![
                PhoneInterval { phone: '_', start: 0, end: 5 },
                PhoneInterval { phone: 'a', start: 5, end: 10 },
            ],
            words: vec![],
            num_frames: 10,
        };
        assert!((frame_accuracy(&a, &b) - 0.7).abs() < 1e-12);
        assert_eq!(boundary_errors(&a, &b), Some(vec![1, 2]));
        assert_eq!(median(&mut [3, 1, 2]), 2.0);
        assert_eq!(median(&mut [4, 1, 2, 3]), 2.5);
    }
}
