//! Synthetic speech world: a controllable universe of harmonic-stack
//! "phones" spoken by parametric speakers, with an exact transcription
//! oracle. Stands in for real corpora and a reference ASR so the whole
//! pipeline can be verified end to end.

mod corpus;
mod oracle;

pub use corpus::{
    empirical_speaker_entropy, generate_corpus, nested_subset_indices, read_corpus_dir,
    write_corpus_dir, Corpus, CorpusItem, CorpusSpec, Split, SplitSnr, SpeakerRanges,
};
pub use oracle::OracleAsr;

use crate::rng::Rng;
use crate::{Error, Result};

pub const SAMPLE_RATE: u32 = 8000;
/// Every phone lasts exactly 120 ms: 3 semantic frames and 6 acoustic hops.
pub const PHONE_MS: u32 = 120;
pub const PHONE_SAMPLES: usize = (PHONE_MS as usize * SAMPLE_RATE as usize) / 1000;
/// Target RMS of the clean harmonic stack before noise is added.
const SIGNAL_RMS: f64 = 0.15;

/// One phone's spectral identity: harmonics of the speaker's fundamental
/// and their relative amplitudes.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhoneSignature {
    /// (harmonic index, relative amplitude) pairs; indices start at 1.
    pub harmonics: Vec<(u32, f64)>,
}

/// Ordered inventory of phone symbols with their harmonic signatures.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhoneAlphabet {
    pub phones: Vec<PhoneSignature>,
}

impl PhoneAlphabet {
    /// Default 20-phone inventory. Every signature contains harmonic 1
    /// (so the fundamental is detectable) plus a distinct pair of higher
    /// harmonics, which keeps any two signatures at least one harmonic
    /// apart.
    pub fn default_inventory() -> Self {
        Self::with_size(20).expect("default size is valid")
    }

    /// Inventory of `n` phones (2..=36).
    pub fn with_size(n: usize) -> Result<Self> {
        // Pairs from {2..10} ordered by (sum, low element): 36 available.
        let mut pairs = Vec::new();
        for sum in 5..=19u32 {
            for a in 2..=9u32 {
                if sum > a {
                    let b = sum - a;
                    if b > a && b <= 10 {
                        pairs.push((a, b));
                    }
                }
            }
        }
        if n < 2 || n > pairs.len() {
            return Err(Error::invalid_config(format!(
                "alphabet size {n} outside supported range 2..={}",
                pairs.len()
            )));
        }
        let phones = pairs[..n]
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| PhoneSignature {
                harmonics: vec![
                    (1, 1.0 - 0.02 * (i % 4) as f64),
                    (a, 0.90 - 0.02 * (i % 5) as f64),
                    (b, 0.84 - 0.02 * (i % 6) as f64),
                ],
            })
            .collect();
        let alphabet = PhoneAlphabet { phones };
        alphabet.validate()?;
        Ok(alphabet)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phones.len() < 2 {
            return Err(Error::invalid_config("alphabet needs at least 2 phones"));
        }
        for (i, p) in self.phones.iter().enumerate() {
            if p.harmonics.is_empty() {
                return Err(Error::invalid_config(format!("phone {i} has no harmonics")));
            }
            for &(h, a) in &p.harmonics {
                if h == 0 || !(a > 0.0 && a <= 1.0) {
                    return Err(Error::invalid_config(format!(
                        "phone {i}: harmonic {h} amplitude {a} out of range"
                    )));
                }
            }
        }
        for i in 0..self.phones.len() {
            for j in i + 1..self.phones.len() {
                if self.phones[i] == self.phones[j] {
                    return Err(Error::invalid_config(format!(
                        "phones {i} and {j} share a signature"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn symbol(&self, phone: usize) -> char {
        (b'a' + phone as u8) as char
    }

    pub fn index(&self, symbol: char) -> Option<usize> {
        let idx = (symbol as i64) - ('a' as i64);
        if (0..self.phones.len() as i64).contains(&idx) {
            Some(idx as usize)
        } else {
            None
        }
    }

    /// Parse a phone string, enforcing known symbols and no adjacent
    /// repeats.
    pub fn parse_text(&self, text: &str) -> Result<Vec<usize>> {
        if text.is_empty() {
            return Err(Error::invalid_input("empty text"));
        }
        let mut phones = Vec::with_capacity(text.len());
        let mut prev = None;
        for ch in text.chars() {
            let idx = self
                .index(ch)
                .ok_or_else(|| Error::invalid_input(format!("unknown phone symbol {ch:?}")))?;
            if prev == Some(idx) {
                return Err(Error::invalid_input(format!(
                    "adjacent repeated phone {ch:?} in text"
                )));
            }
            prev = Some(idx);
            phones.push(idx);
        }
        Ok(phones)
    }

    pub fn text_from_phones(&self, phones: &[usize]) -> String {
        phones.iter().map(|&p| self.symbol(p)).collect()
    }

    /// Random text of the given length with no adjacent repeats.
    pub fn random_text(&self, len: usize, rng: &mut Rng) -> String {
        let mut out = String::with_capacity(len);
        let mut prev = usize::MAX;
        for _ in 0..len {
            let mut p = rng.below(self.phones.len());
            if p == prev {
                p = (p + 1 + rng.below(self.phones.len() - 1)) % self.phones.len();
            }
            out.push(self.symbol(p));
            prev = p;
        }
        out
    }
}

/// A synthetic speaker: pitch, spectral tilt, and a touch of vibrato.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: u32,
    pub f0_hz: f64,
    pub spectral_tilt_db_per_octave: f64,
    /// Relative frequency deviation of the vibrato (e.g. 0.002 = 0.2%).
    pub vibrato_depth: f64,
    pub vibrato_rate_hz: f64,
}

impl SpeakerProfile {
    pub fn validate(&self) -> Result<()> {
        if !(80.0..=400.0).contains(&self.f0_hz) {
            return Err(Error::invalid_config(format!(
                "speaker f0 {} outside [80, 400] Hz",
                self.f0_hz
            )));
        }
        Ok(())
    }

    fn tilt_gain(&self, harmonic: u32) -> f64 {
        let octaves = (harmonic as f64).log2();
        10f64.powf(self.spectral_tilt_db_per_octave * octaves / 20.0)
    }
}

/// A rendered utterance plus everything needed to re-render it.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub text: String,
    pub speaker: SpeakerProfile,
    /// Signal-to-noise ratio of the additive white noise; `f64::INFINITY`
    /// means clean.
    pub noise_snr_db: f64,
    pub seed: u64,
    pub waveform: Vec<f32>,
}

/// Render the clean harmonic stack and the (exactly scaled) noise floor
/// separately. `render_utterance` returns their sum; the split is exposed
/// so SNR accounting can be tested directly.
pub fn render_parts(
    alphabet: &PhoneAlphabet,
    text: &str,
    speaker: &SpeakerProfile,
    noise_snr_db: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    speaker.validate()?;
    let phones = alphabet.parse_text(text)?;
    let len = phones.len() * PHONE_SAMPLES;
    let mut clean = vec![0.0f64; len];
    let two_pi = 2.0 * std::f64::consts::PI;
    let vib_depth = speaker.vibrato_depth;
    let vib_rate = speaker.vibrato_rate_hz.max(1e-6);
    for (pi, &phone) in phones.iter().enumerate() {
        let start = pi * PHONE_SAMPLES;
        for &(h, a) in &alphabet.phones[phone].harmonics {
            let amp = a * speaker.tilt_gain(h);
            let base = h as f64 * speaker.f0_hz;
            for n in 0..PHONE_SAMPLES {
                // Vibrato as a phase integral of f0*(1 + depth*sin(2*pi*r*t)),
                // continuous across phone boundaries.
                let t = (start + n) as f64 / SAMPLE_RATE as f64;
                let phase = two_pi
                    * base
                    * (t + vib_depth * (1.0 - (two_pi * vib_rate * t).cos()) / (two_pi * vib_rate));
                clean[start + n] += amp * phase.sin();
            }
        }
    }
    let rms = (clean.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        let scale = SIGNAL_RMS / rms;
        clean.iter_mut().for_each(|v| *v *= scale);
    }
    let mut noise = vec![0.0f64; len];
    if noise_snr_db.is_finite() {
        let mut rng = Rng::new(crate::rng::derive_seed(seed, 0x4e4f_4953));
        for v in noise.iter_mut() {
            *v = rng.normal();
        }
        // Scale so the realized noise power hits the target exactly.
        let noise_rms = (noise.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        let target = SIGNAL_RMS * 10f64.powf(-noise_snr_db / 20.0);
        if noise_rms > 0.0 {
            let scale = target / noise_rms;
            noise.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Ok((clean, noise))
}

/// Render a phone string as a waveform: each phone is a fixed 120 ms
/// harmonic stack at the speaker's pitch, shaped by the phone signature
/// and the speaker tilt, plus white noise at the requested SNR.
pub fn render_utterance(
    alphabet: &PhoneAlphabet,
    text: &str,
    speaker: &SpeakerProfile,
    noise_snr_db: f64,
    seed: u64,
) -> Result<Utterance> {
    let (clean, noise) = render_parts(alphabet, text, speaker, noise_snr_db, seed)?;
    let waveform = clean
        .iter()
        .zip(&noise)
        .map(|(c, n)| (c + n) as f32)
        .collect();
    Ok(Utterance {
        text: text.to_string(),
        speaker: speaker.clone(),
        noise_snr_db,
        seed,
        waveform,
    })
}
