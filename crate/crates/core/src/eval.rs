//! Metrics: character error rate, speaker classification and diversity,
//! voice preservation, the no-reference quality proxy, and bootstrap
//! confidence intervals.

use crate::dsp::{extract_features, FrameSpec, NormStats};
use crate::rng::Rng;
use crate::synth::{OracleAsr, Utterance, SAMPLE_RATE};
use crate::{Error, Result};

/// Character error rate: Levenshtein distance (unit costs) divided by the
/// reference length. May exceed 1 when the hypothesis is much longer.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::invalid_input("empty CER reference"));
    }
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    Ok(levenshtein(&r, &h) as f64 / r.len() as f64)
}

/// Edit distance with unit insert/delete/substitute costs.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn acoustic_mean_logband(waveform: &[f32]) -> Result<Vec<f64>> {
    // Per band, average the energy over the frames where the band is
    // actually lit (relative threshold on the utterance's peak band).
    // Averaging over active frames only removes the text-dependent duty
    // cycle and leaves the speaker's level pattern; the log then makes
    // gain a common additive offset.
    let feats = extract_features(waveform, SAMPLE_RATE, &FrameSpec::acoustic())?;
    let mut sums = vec![0.0f64; feats.cols];
    let mut counts = vec![0usize; feats.cols];
    let mut peak = 0.0f64;
    for row in feats.rows_iter() {
        for &v in row {
            peak = peak.max(v.exp());
        }
    }
    let threshold = peak * 1e-5;
    for row in feats.rows_iter() {
        for (d, &v) in row.iter().enumerate() {
            let e = v.exp();
            if e > threshold {
                sums[d] += e;
                counts[d] += 1;
            }
        }
    }
    // Bands that never light up are all equally dark; the clamp keeps the
    // depth of silence from dominating the profile geometry.
    Ok((0..feats.cols)
        .map(|d| {
            if counts[d] == 0 {
                -16.0
            } else {
                (sums[d] / counts[d] as f64).ln().max(-16.0)
            }
        })
        .collect())
}

/// Time-averaged acoustic band profile (log of mean band energy),
/// corpus-mean normalized, then projected off the all-ones direction and
/// unit-normalized. The last step makes the embedding invariant to
/// amplitude scaling (a gain shifts every log band by the same constant,
/// up to floor effects).
pub fn speaker_embed(waveform: &[f32], stats: &NormStats) -> Result<Vec<f64>> {
    let mut e = acoustic_mean_logband(waveform)?;
    for (v, m) in e.iter_mut().zip(&stats.mean) {
        *v -= m;
    }
    let own_mean = e.iter().sum::<f64>() / e.len() as f64;
    e.iter_mut().for_each(|v| *v -= own_mean);
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        e.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(e)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Nearest-centroid speaker classifier over unit-norm embeddings.
#[derive(Debug, Clone)]
pub struct SpeakerModel {
    pub stats: NormStats,
    pub speaker_ids: Vec<u32>,
    /// One unit-norm centroid per speaker, same order as `speaker_ids`.
    pub centroids: Vec<Vec<f64>>,
}

/// Build a centroid-per-speaker model from labeled utterances.
pub fn build_speaker_model(utterances: &[&Utterance]) -> Result<SpeakerModel> {
    if utterances.is_empty() {
        return Err(Error::invalid_input("no utterances for speaker model"));
    }
    // Corpus stats in the embedding's own domain: the mean band profile
    // over the labeled set.
    let profiles: Vec<Vec<f64>> = utterances
        .iter()
        .map(|u| acoustic_mean_logband(&u.waveform))
        .collect::<Result<Vec<_>>>()?;
    let dims = profiles[0].len();
    let mut mean = vec![0.0f64; dims];
    for p in &profiles {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= profiles.len() as f64);
    let stats = NormStats {
        mean,
        std: vec![1.0; dims],
        floored: vec![false; dims],
    };
    let mut ids: Vec<u32> = utterances.iter().map(|u| u.speaker.speaker_id).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut centroids = Vec::with_capacity(ids.len());
    for &id in &ids {
        let mut acc: Option<Vec<f64>> = None;
        let mut count = 0usize;
        for u in utterances.iter().filter(|u| u.speaker.speaker_id == id) {
            let e = speaker_embed(&u.waveform, &stats)?;
            let acc = acc.get_or_insert_with(|| vec![0.0f64; e.len()]);
            for (a, v) in acc.iter_mut().zip(&e) {
                *a += v;
            }
            count += 1;
        }
        let mut c = acc.expect("id came from the utterance list");
        c.iter_mut().for_each(|v| *v /= count as f64);
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            c.iter_mut().for_each(|v| *v /= norm);
        }
        centroids.push(c);
    }
    Ok(SpeakerModel {
        stats,
        speaker_ids: ids,
        centroids,
    })
}

/// All model speakers ranked by cosine similarity to the utterance
/// embedding, best first.
pub fn classify_speaker(waveform: &[f32], model: &SpeakerModel) -> Result<Vec<u32>> {
    let e = speaker_embed(waveform, &model.stats)?;
    let mut scored: Vec<(f64, u32)> = model
        .centroids
        .iter()
        .zip(&model.speaker_ids)
        .map(|(c, &id)| (cosine(&e, c), id))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().map(|(_, id)| id).collect())
}

/// Sliding-window variant: classify 1 s windows with a 250 ms hop and
/// majority-vote the per-window top-1 labels.
pub fn classify_speaker_windowed(waveform: &[f32], model: &SpeakerModel) -> Result<Vec<u32>> {
    let window = SAMPLE_RATE as usize;
    let hop = SAMPLE_RATE as usize / 4;
    if waveform.len() <= window {
        return classify_speaker(waveform, model);
    }
    let mut votes: std::collections::BTreeMap<u32, usize> = std::collections::BTreeMap::new();
    let mut start = 0;
    while start + window <= waveform.len() {
        let top = classify_speaker(&waveform[start..start + window], model)?;
        *votes.entry(top[0]).or_default() += 1;
        start += hop;
    }
    let winner = *votes
        .iter()
        .max_by_key(|&(id, &n)| (n, std::cmp::Reverse(*id)))
        .map(|(id, _)| id)
        .expect("at least one window");
    let mut out = vec![winner];
    out.extend(classify_speaker(waveform, model)?.into_iter().filter(|&id| id != winner));
    Ok(out)
}

/// Shannon entropy (bits) of detected top-1 speakers over a set of
/// waveforms.
pub fn diversity_entropy(waveforms: &[Vec<f32>], model: &SpeakerModel) -> Result<f64> {
    let mut counts: std::collections::BTreeMap<u32, usize> = std::collections::BTreeMap::new();
    for w in waveforms {
        let top = classify_speaker(w, model)?;
        *counts.entry(top[0]).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        return Ok(0.0);
    }
    Ok(counts
        .values()
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum())
}

/// Voice preservation: how often the label predicted from the generation
/// matches the label predicted from its prompt (predicted vs predicted,
/// not ground truth). Returns (top-1 rate, top-3 rate).
pub fn preservation_accuracy(
    pairs: &[(Vec<f32>, Vec<f32>)],
    model: &SpeakerModel,
) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::invalid_input("no prompt/generation pairs"));
    }
    let mut top1 = 0usize;
    let mut top3 = 0usize;
    for (prompt, generation) in pairs {
        let prompt_label = classify_speaker(prompt, model)?[0];
        let ranked = classify_speaker(generation, model)?;
        if ranked[0] == prompt_label {
            top1 += 1;
        }
        if ranked.iter().take(3).any(|&id| id == prompt_label) {
            top3 += 1;
        }
    }
    let n = pairs.len() as f64;
    Ok((top1 as f64 / n, top3 as f64 / n))
}

/// No-reference quality proxy in [1, 5]: blind SNR from the harmonic vs
/// residual energy split of each 40 ms frame (the oracle's best template
/// marks the harmonic bands), affinely mapped so <= 0 dB gives 1.0 and
/// >= 30 dB gives 5.0.
pub fn quality_score(oracle: &OracleAsr, waveform: &[f32]) -> f64 {
    let (signal, residual) = oracle.harmonic_residual_energy(waveform);
    let snr_db = if residual <= 0.0 {
        30.0
    } else if signal <= 0.0 {
        0.0
    } else {
        10.0 * (signal / residual).log10()
    };
    1.0 + 4.0 * (snr_db.clamp(0.0, 30.0) / 30.0)
}

/// Percentile bootstrap confidence interval for the mean of `values`.
/// Returns (mean, lo, hi).
pub fn bootstrap_mean_ci(
    values: &[f64],
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> (f64, f64, f64) {
    assert!(!values.is_empty());
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut rng = Rng::new(seed);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut acc = 0.0;
        for _ in 0..values.len() {
            acc += values[rng.below(values.len())];
        }
        means.push(acc / values.len() as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - confidence) / 2.0;
    let lo = means[((resamples as f64 * alpha) as usize).min(resamples - 1)];
    let hi = means[((resamples as f64 * (1.0 - alpha)) as usize).min(resamples - 1)];
    (mean, lo, hi)
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
