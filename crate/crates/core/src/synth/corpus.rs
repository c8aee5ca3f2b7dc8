//! Deterministic corpus generation and the on-disk corpus layout
//! (line-delimited manifest plus 16-bit PCM WAV files).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{render_utterance, PhoneAlphabet, SpeakerProfile, Utterance, SAMPLE_RATE};
use crate::rng::{derive_seed, Rng};
use crate::{Error, Result};

/// Ranges the synthetic speakers are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeakerRanges {
    pub f0_hz: (f64, f64),
    pub tilt_db_per_octave: (f64, f64),
    pub vibrato_depth: (f64, f64),
    pub vibrato_rate_hz: (f64, f64),
}

impl Default for SpeakerRanges {
    fn default() -> Self {
        SpeakerRanges {
            f0_hz: (90.0, 380.0),
            tilt_db_per_octave: (-2.5, 2.5),
            vibrato_depth: (0.001, 0.004),
            vibrato_rate_hz: (4.5, 6.0),
        }
    }
}

/// Per-split SNR ranges in dB; `None` renders clean audio.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitSnr {
    pub parallel: Option<(f64, f64)>,
    pub audio_only: Option<(f64, f64)>,
    pub eval: Option<(f64, f64)>,
}

/// Everything needed to (re)generate a corpus deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_speakers: usize,
    pub utterances_per_speaker: usize,
    /// Inclusive phone-count range for random texts.
    pub text_len: (usize, usize),
    /// (parallel, audio_only, eval) fractions; must sum to 1.
    pub split_ratios: (f64, f64, f64),
    pub snr: SplitSnr,
    /// Restrict the parallel split to speaker 0 (single-speaker TTS
    /// corpus analog).
    pub parallel_single_speaker: bool,
    /// Number of speakers reserved exclusively for the eval split.
    pub heldout_eval_speakers: usize,
    pub speaker_ranges: SpeakerRanges,
    pub master_seed: u64,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.split_ratios;
        if !(a >= 0.0 && b >= 0.0 && c >= 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid_config("split ratios must sum to 1"));
        }
        if self.n_speakers == 0 || self.utterances_per_speaker == 0 {
            return Err(Error::invalid_config("empty corpus"));
        }
        if self.heldout_eval_speakers >= self.n_speakers {
            return Err(Error::invalid_config(
                "held-out eval speakers must leave at least one training speaker",
            ));
        }
        if c > 0.0 && self.heldout_eval_speakers == 0 && self.n_speakers < 1 {
            return Err(Error::invalid_config("eval split needs speakers"));
        }
        if self.text_len.0 == 0 || self.text_len.0 > self.text_len.1 {
            return Err(Error::invalid_config("bad text length range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Parallel,
    AudioOnly,
    Eval,
}

impl Split {
    pub fn prefix(&self) -> &'static str {
        match self {
            Split::Parallel => "par",
            Split::AudioOnly => "ao",
            Split::Eval => "ev",
        }
    }
}

/// One corpus entry: a stable id plus the rendered utterance.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub id: String,
    pub utterance: Utterance,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub speakers: Vec<SpeakerProfile>,
    pub parallel: Vec<CorpusItem>,
    pub audio_only: Vec<CorpusItem>,
    pub eval: Vec<CorpusItem>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[CorpusItem] {
        match split {
            Split::Parallel => &self.parallel,
            Split::AudioOnly => &self.audio_only,
            Split::Eval => &self.eval,
        }
    }

    pub fn total_len(&self) -> usize {
        self.parallel.len() + self.audio_only.len() + self.eval.len()
    }
}

fn draw_speakers(spec: &CorpusSpec, alphabet_seed: u64) -> Result<Vec<SpeakerProfile>> {
    let mut rng = Rng::new(derive_seed(alphabet_seed, 0x5350_4b52));
    let r = &spec.speaker_ranges;
    let n = spec.n_speakers;
    let mut speakers = Vec::with_capacity(n);
    for i in 0..n {
        // Stratified pitch: one speaker per stratum with interior jitter,
        // which keeps voices distinct and the full range covered.
        let stratum = (i as f64 + 0.2 + 0.6 * rng.uniform()) / n as f64;
        let f0 = r.f0_hz.0 + stratum * (r.f0_hz.1 - r.f0_hz.0);
        let profile = SpeakerProfile {
            speaker_id: i as u32,
            f0_hz: f0,
            spectral_tilt_db_per_octave: rng.uniform_in(r.tilt_db_per_octave.0, r.tilt_db_per_octave.1),
            vibrato_depth: rng.uniform_in(r.vibrato_depth.0, r.vibrato_depth.1),
            vibrato_rate_hz: rng.uniform_in(r.vibrato_rate_hz.0, r.vibrato_rate_hz.1),
        };
        profile.validate()?;
        speakers.push(profile);
    }
    Ok(speakers)
}

/// Generate the three corpus splits deterministically from the spec.
///
/// Speakers within a split are assigned round-robin from the split's
/// speaker pool, so utterances are uniform over the pool whenever the
/// split size divides evenly.
pub fn generate_corpus(alphabet: &PhoneAlphabet, spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let speakers = draw_speakers(spec, spec.master_seed)?;
    let train_speakers: Vec<usize> =
        (0..spec.n_speakers - spec.heldout_eval_speakers).collect();
    let eval_speakers: Vec<usize> = if spec.heldout_eval_speakers > 0 {
        (spec.n_speakers - spec.heldout_eval_speakers..spec.n_speakers).collect()
    } else {
        (0..spec.n_speakers).collect()
    };
    let parallel_speakers: Vec<usize> = if spec.parallel_single_speaker {
        vec![0]
    } else {
        train_speakers.clone()
    };

    let total = spec.n_speakers * spec.utterances_per_speaker;
    let n_par = (spec.split_ratios.0 * total as f64).round() as usize;
    let n_ao = (spec.split_ratios.1 * total as f64).round() as usize;
    let n_ev = total.saturating_sub(n_par + n_ao);

    let mut next_index = 0u64;
    let mut build_split = |split: Split, count: usize, pool: &[usize], snr: Option<(f64, f64)>| -> Result<Vec<CorpusItem>> {
        let mut items = Vec::with_capacity(count);
        for j in 0..count {
            let seed = derive_seed(spec.master_seed, 0x5554_5400 + next_index);
            next_index += 1;
            let mut rng = Rng::new(seed);
            let speaker = &speakers[pool[j % pool.len()]];
            let len = rng.range_inclusive(spec.text_len.0, spec.text_len.1);
            let text = alphabet.random_text(len, &mut rng);
            let snr_db = match snr {
                Some((lo, hi)) => rng.uniform_in(lo, hi),
                None => f64::INFINITY,
            };
            let utterance = render_utterance(alphabet, &text, speaker, snr_db, seed)?;
            items.push(CorpusItem {
                id: format!("{}-{:05}", split.prefix(), j),
                utterance,
            });
        }
        Ok(items)
    };

    let parallel = build_split(Split::Parallel, n_par, &parallel_speakers, spec.snr.parallel)?;
    let audio_only = build_split(Split::AudioOnly, n_ao, &train_speakers, spec.snr.audio_only)?;
    let eval = build_split(Split::Eval, n_ev, &eval_speakers, spec.snr.eval)?;

    Ok(Corpus {
        speakers,
        parallel,
        audio_only,
        eval,
    })
}

/// A deterministic permutation of `0..n`; taking its first k elements
/// yields nested budget subsets (a 1% subset is contained in the 10%
/// subset, and so on).
pub fn nested_subset_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(derive_seed(seed, 0x5355_4253));
    rng.shuffle(&mut order);
    order
}

/// Shannon entropy (bits) of the speaker distribution over the items.
pub fn empirical_speaker_entropy(items: &[CorpusItem]) -> f64 {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for item in items {
        *counts.entry(item.utterance.speaker.speaker_id).or_default() += 1;
    }
    let total = items.len() as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

// --- on-disk layout ------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRecord {
    id: String,
    split: Split,
    speaker_id: u32,
    text: String,
    /// None means clean (infinite SNR).
    snr_db: Option<f64>,
    seed: u64,
    audio: String,
}

/// Write `manifest.jsonl`, `speakers.json` and one WAV per utterance.
pub fn write_corpus_dir(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("wavs"))?;
    let mut manifest = std::io::BufWriter::new(std::fs::File::create(dir.join("manifest.jsonl"))?);
    for (split, items) in [
        (Split::Parallel, &corpus.parallel),
        (Split::AudioOnly, &corpus.audio_only),
        (Split::Eval, &corpus.eval),
    ] {
        for item in items.iter() {
            let audio = format!("wavs/{}.wav", item.id);
            let record = ManifestRecord {
                id: item.id.clone(),
                split,
                speaker_id: item.utterance.speaker.speaker_id,
                text: item.utterance.text.clone(),
                snr_db: if item.utterance.noise_snr_db.is_finite() {
                    Some(item.utterance.noise_snr_db)
                } else {
                    None
                },
                seed: item.utterance.seed,
                audio: audio.clone(),
            };
            serde_json::to_writer(&mut manifest, &record)
                .map_err(|e| Error::format(e.to_string()))?;
            manifest.write_all(b"\n")?;
            crate::wav::write_wav(&dir.join(&audio), &item.utterance.waveform, SAMPLE_RATE)?;
        }
    }
    let speakers = serde_json::to_string_pretty(&corpus.speakers)
        .map_err(|e| Error::format(e.to_string()))?;
    std::fs::write(dir.join("speakers.json"), speakers)?;
    Ok(())
}

/// Read a corpus directory written by [`write_corpus_dir`].
pub fn read_corpus_dir(dir: &Path) -> Result<Corpus> {
    let speakers: Vec<SpeakerProfile> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("speakers.json"))?)
            .map_err(|e| Error::format(e.to_string()))?;
    let mut corpus = Corpus {
        speakers: speakers.clone(),
        parallel: Vec::new(),
        audio_only: Vec::new(),
        eval: Vec::new(),
    };
    let manifest = std::io::BufReader::new(std::fs::File::open(dir.join("manifest.jsonl"))?);
    for line in manifest.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| Error::format(e.to_string()))?;
        let (waveform, rate) = crate::wav::read_wav(&dir.join(&record.audio))?;
        if rate != SAMPLE_RATE {
            return Err(Error::format(format!("unexpected sample rate {rate}")));
        }
        let speaker = speakers
            .iter()
            .find(|s| s.speaker_id == record.speaker_id)
            .ok_or_else(|| Error::format(format!("unknown speaker {}", record.speaker_id)))?
            .clone();
        let item = CorpusItem {
            id: record.id,
            utterance: Utterance {
                text: record.text,
                speaker,
                noise_snr_db: record.snr_db.unwrap_or(f64::INFINITY),
                seed: record.seed,
                waveform,
            },
        };
        match record.split {
            Split::Parallel => corpus.parallel.push(item),
            Split::AudioOnly => corpus.audio_only.push(item),
            Split::Eval => corpus.eval.push(item),
        }
    }
    Ok(corpus)
}
