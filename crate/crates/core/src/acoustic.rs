//! Acoustic codec: residual vector quantization of 50 Hz filterbank
//! features into multi-level codes, a flattened level-interleaved token
//! layout, and sinusoidal-bank resynthesis back to audio.

use std::io::{Read, Write};

use crate::dsp::{
    self, extract_features, normalize, FeatureMatrix, Filterbank, FrameSpec, NormStats,
    SpectrumAnalyzer,
};
use crate::rng::derive_seed;
use crate::semantic::{kmeans_train, nearest_centroid};
use crate::synth::SAMPLE_RATE;
use crate::{Error, Result};

/// Trained residual quantizer: one codebook per level over normalized
/// acoustic features, plus the stats and framing needed to encode audio.
#[derive(Debug, Clone)]
pub struct RvqCodebooks {
    /// `levels[q]` is a Kc x D codebook; level q quantizes the residual
    /// left by levels 0..q.
    pub levels: Vec<Vec<Vec<f64>>>,
    pub stats: NormStats,
    pub frame: FrameSpec,
}

impl RvqCodebooks {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn codebook_size(&self) -> usize {
        self.levels.first().map_or(0, |l| l.len())
    }

    pub fn dim(&self) -> usize {
        self.levels
            .first()
            .and_then(|l| l.first())
            .map_or(0, |c| c.len())
    }
}

/// Per-frame multi-level codes: a T x Q matrix of codebook indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameCodes {
    pub frames: usize,
    pub q: usize,
    /// Frame-major storage: codes[t*q + level].
    pub codes: Vec<u16>,
}

impl FrameCodes {
    pub fn frame(&self, t: usize) -> &[u16] {
        &self.codes[t * self.q..(t + 1) * self.q]
    }
}

/// Flat acoustic token sequence with level-offset ids: a level-q code c
/// becomes token q*Kc + c, interleaved frame-major, level-minor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcousticSequence {
    pub tokens: Vec<u32>,
    pub q: usize,
    pub kc: usize,
}

/// Level of a flattened token id.
pub fn token_level(token: u32, kc: usize) -> usize {
    token as usize / kc
}

/// Log-energy features to per-band amplitudes. Quantization happens in
/// this domain: averaging amplitude patterns superimposes them (graceful
/// degradation), whereas averaging log patterns collapses distinct
/// harmonic sets into mid-level chimeras that decode to noise.
pub fn to_amplitude_domain(features: &FeatureMatrix) -> FeatureMatrix {
    let mut out = features.clone();
    out.data.iter_mut().for_each(|v| *v = (*v / 2.0).exp());
    out
}

/// Inverse of [`to_amplitude_domain`], with the energy floor reapplied.
pub fn to_log_domain(amplitudes: &FeatureMatrix, log_floor: f64) -> FeatureMatrix {
    let amp_floor = log_floor.sqrt();
    let mut out = amplitudes.clone();
    out.data
        .iter_mut()
        .for_each(|v| *v = 2.0 * v.max(amp_floor).ln());
    out
}

/// Train greedy per-level k-means on residuals. Level 0 clusters the
/// normalized features; each later level clusters what the previous
/// levels left unexplained.
pub fn rvq_train(
    features: &[&FeatureMatrix],
    q: usize,
    kc: usize,
    max_iters: usize,
    seed: u64,
) -> Result<RvqCodebooks> {
    if q == 0 {
        return Err(Error::invalid_config("need at least one quantizer level"));
    }
    let amp: Vec<FeatureMatrix> = features.iter().map(|f| to_amplitude_domain(f)).collect();
    let stats = dsp::fit_norm(amp.iter())?;
    let dim = stats.mean.len();
    let mut rows: Vec<f64> = Vec::new();
    for f in &amp {
        rows.extend_from_slice(&normalize(f, &stats).data);
    }
    let mut levels = Vec::with_capacity(q);
    for level in 0..q {
        let mut fit = kmeans_train(&rows, dim, kc, max_iters, derive_seed(seed, level as u64))?;
        if level > 0 {
            // Snap the smallest centroid of every residual codebook to the
            // origin: leaving a residual unchanged is then always on the
            // menu, so adding a level can never increase any frame's error.
            let (zero_idx, _) = fit
                .centroids
                .iter()
                .enumerate()
                .map(|(i, c)| (i, c.iter().map(|v| v * v).sum::<f64>()))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .expect("nonempty codebook");
            fit.centroids[zero_idx].iter_mut().for_each(|v| *v = 0.0);
        }
        // Subtract the quantization so the next level sees residuals.
        for row in rows.chunks_exact_mut(dim) {
            let (best, _) = nearest_centroid(row, &fit.centroids);
            for (v, c) in row.iter_mut().zip(&fit.centroids[best]) {
                *v -= c;
            }
        }
        levels.push(fit.centroids);
    }
    Ok(RvqCodebooks {
        levels,
        stats,
        frame: FrameSpec::acoustic(),
    })
}

/// Greedy nearest-centroid encoding of already-normalized rows.
pub fn encode_normalized(rows: &FeatureMatrix, books: &RvqCodebooks) -> FrameCodes {
    let q = books.n_levels();
    let mut codes = Vec::with_capacity(rows.rows * q);
    let mut residual = vec![0.0f64; rows.cols];
    for row in rows.rows_iter() {
        residual.copy_from_slice(row);
        for level in &books.levels {
            let (best, _) = nearest_centroid(&residual, level);
            codes.push(best as u16);
            for (v, c) in residual.iter_mut().zip(&level[best]) {
                *v -= c;
            }
        }
    }
    FrameCodes {
        frames: rows.rows,
        q,
        codes,
    }
}

/// Encode log-energy features (normalizes into the quantizer's amplitude
/// domain internally).
pub fn encode_features(features: &FeatureMatrix, books: &RvqCodebooks) -> FrameCodes {
    let amp = to_amplitude_domain(features);
    encode_normalized(&normalize(&amp, &books.stats), books)
}

/// Extract acoustic features from a waveform and encode them.
pub fn rvq_encode(waveform: &[f32], books: &RvqCodebooks) -> Result<FrameCodes> {
    let feats = extract_features(waveform, SAMPLE_RATE, &books.frame)?;
    Ok(encode_features(&feats, books))
}

/// Sum of selected centroids per frame, denormalized back to log-energy
/// features.
pub fn rvq_decode(codes: &FrameCodes, books: &RvqCodebooks) -> Result<FeatureMatrix> {
    if codes.q != books.n_levels() {
        return Err(Error::invalid_input("level count mismatch"));
    }
    let kc = books.codebook_size();
    let dim = books.dim();
    let mut amp = FeatureMatrix::zeros(codes.frames, dim, books.frame.frame_rate_hz());
    for t in 0..codes.frames {
        let row = amp.row_mut(t);
        for (level, &code) in books.levels.iter().zip(codes.frame(t)) {
            if code as usize >= kc {
                return Err(Error::invalid_input(format!(
                    "code {code} out of range for codebook of {kc}"
                )));
            }
            for (v, c) in row.iter_mut().zip(&level[code as usize]) {
                *v += c;
            }
        }
        for (d, v) in row.iter_mut().enumerate() {
            *v = *v * books.stats.std[d] + books.stats.mean[d];
        }
    }
    Ok(to_log_domain(&amp, books.frame.log_floor))
}

/// Interleave per-frame codes frame-major, level-minor with level-offset
/// token ids.
pub fn flatten(codes: &FrameCodes, kc: usize) -> Result<AcousticSequence> {
    let mut tokens = Vec::with_capacity(codes.codes.len());
    for (i, &code) in codes.codes.iter().enumerate() {
        if code as usize >= kc {
            return Err(Error::invalid_input(format!(
                "code {code} out of range for codebook of {kc}"
            )));
        }
        let level = i % codes.q;
        tokens.push((level * kc + code as usize) as u32);
    }
    Ok(AcousticSequence {
        tokens,
        q: codes.q,
        kc,
    })
}

/// Invert [`flatten`], validating length divisibility and that every
/// token sits in the level slot its id encodes.
pub fn unflatten(seq: &AcousticSequence) -> Result<FrameCodes> {
    if seq.q == 0 || seq.kc == 0 {
        return Err(Error::invalid_input("empty layout"));
    }
    if seq.tokens.len() % seq.q != 0 {
        return Err(Error::invalid_input(format!(
            "flat length {} not divisible by {} levels",
            seq.tokens.len(),
            seq.q
        )));
    }
    let mut codes = Vec::with_capacity(seq.tokens.len());
    for (i, &tok) in seq.tokens.iter().enumerate() {
        let level = token_level(tok, seq.kc);
        if level >= seq.q {
            return Err(Error::invalid_input(format!("token {tok} beyond level range")));
        }
        if level != i % seq.q {
            return Err(Error::invalid_input(format!(
                "token {tok} at flat position {i} belongs to level {level}, expected {}",
                i % seq.q
            )));
        }
        codes.push((tok as usize - level * seq.kc) as u16);
    }
    Ok(FrameCodes {
        frames: seq.tokens.len() / seq.q,
        q: seq.q,
        codes,
    })
}

/// Rebuild a waveform from log-energy features: every band contributes a
/// phase-continuous sinusoid at its center frequency, Hann-weighted and
/// overlap-added, then normalized by the window-sum profile. Output length
/// is frames * hop (within one hop of the analyzed length).
pub fn resynthesize(features: &FeatureMatrix, spec: &FrameSpec) -> Vec<f32> {
    let window = spec.window_samples(SAMPLE_RATE);
    let hop = spec.hop_samples(SAMPLE_RATE);
    let analyzer = SpectrumAnalyzer::new(window, SAMPLE_RATE);
    let fb = Filterbank::new(
        spec.n_filters,
        SAMPLE_RATE as f64 / 2.0,
        analyzer.bin_hz(),
        analyzer.n_bins(),
    );
    // Calibrate energy -> amplitude on a mid-band unit sinusoid measured
    // through the same analysis chain.
    let mid = spec.n_filters / 2;
    let probe: Vec<f32> = (0..window)
        .map(|n| {
            let w = 2.0 * std::f64::consts::PI * fb.center_hz(mid) / SAMPLE_RATE as f64;
            (w * n as f64).sin() as f32
        })
        .collect();
    let probe_energy = fb.energies(&analyzer.magnitudes(&probe))[mid];
    let amp_scale = 1.0 / probe_energy.sqrt().max(1e-30);

    let hann: Vec<f64> = (0..window)
        .map(|n| {
            let x = std::f64::consts::PI * n as f64 / window as f64;
            x.sin() * x.sin()
        })
        .collect();
    let total = features.rows * hop;
    let mut out = vec![0.0f64; total + window];
    let mut wsum = vec![0.0f64; total + window];
    let silent_amp = spec.log_floor.sqrt() * amp_scale;
    for t in 0..features.rows {
        let start = t * hop;
        for (band, &log_e) in features.row(t).iter().enumerate() {
            let amp = log_e.exp().max(0.0).sqrt() * amp_scale;
            if amp <= silent_amp * 1.001 {
                continue;
            }
            let omega = 2.0 * std::f64::consts::PI * fb.center_hz(band) / SAMPLE_RATE as f64;
            // Phase tied to the absolute sample index keeps the band
            // coherent across overlapping frames.
            let mut z =
                num_complex::Complex::new((omega * start as f64).cos(), (omega * start as f64).sin());
            let step = num_complex::Complex::new(omega.cos(), omega.sin());
            for n in 0..window {
                out[start + n] += hann[n] * amp * z.im;
                z *= step;
            }
        }
        for n in 0..window {
            wsum[start + n] += hann[n];
        }
    }
    for (o, w) in out.iter_mut().zip(&wsum) {
        if *w > 1e-6 {
            *o /= w;
        }
    }
    out.truncate(total);
    // Peak normalization with a silence guard.
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak >= 1e-3 {
        let scale = 0.95 / peak;
        out.iter_mut().for_each(|v| *v *= scale);
    }
    out.into_iter().map(|v| v as f32).collect()
}

// --- persistence ----------------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
struct BooksHeader {
    q: usize,
    kc: usize,
    dim: usize,
    frame: FrameSpec,
    stats: NormStats,
}

const BOOKS_MAGIC: &[u8; 8] = b"RVQBOOK1";

pub fn write_codebooks<W: Write>(w: &mut W, books: &RvqCodebooks) -> Result<()> {
    w.write_all(BOOKS_MAGIC)?;
    let header = serde_json::to_vec(&BooksHeader {
        q: books.n_levels(),
        kc: books.codebook_size(),
        dim: books.dim(),
        frame: books.frame,
        stats: books.stats.clone(),
    })
    .map_err(|e| Error::format(e.to_string()))?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for level in &books.levels {
        let mut m = FeatureMatrix::zeros(level.len(), books.dim(), 0.0);
        for (r, c) in level.iter().enumerate() {
            m.row_mut(r).copy_from_slice(c);
        }
        dsp::write_matrix(w, &m)?;
    }
    Ok(())
}

pub fn read_codebooks<R: Read>(r: &mut R) -> Result<RvqCodebooks> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BOOKS_MAGIC {
        return Err(Error::format("bad codebook magic"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header: BooksHeader =
        serde_json::from_slice(&header).map_err(|e| Error::format(e.to_string()))?;
    let mut levels = Vec::with_capacity(header.q);
    for _ in 0..header.q {
        let m = dsp::read_matrix(r)?;
        if m.rows != header.kc || m.cols != header.dim {
            return Err(Error::format("codebook shape mismatch"));
        }
        levels.push(m.rows_iter().map(|r| r.to_vec()).collect());
    }
    Ok(RvqCodebooks {
        levels,
        stats: header.stats,
        frame: header.frame,
    })
}

/// Acoustic token files reuse the semantic line format with a leading
/// header line declaring the layout.
pub fn write_acoustic_token_file<W: Write>(
    w: &mut W,
    q: usize,
    kc: usize,
    entries: &[(String, Vec<u32>)],
) -> Result<()> {
    writeln!(w, "#acoustic q={q} kc={kc}")?;
    crate::semantic::write_token_file(w, entries)
}

pub fn read_acoustic_token_file<R: Read>(r: R) -> Result<(usize, usize, Vec<(String, Vec<u32>)>)> {
    let mut reader = std::io::BufReader::new(r);
    let mut header = String::new();
    std::io::BufRead::read_line(&mut reader, &mut header)?;
    let header = header.trim();
    let rest = header
        .strip_prefix("#acoustic q=")
        .ok_or_else(|| Error::format("missing acoustic token header"))?;
    let (q, kc) = rest
        .split_once(" kc=")
        .ok_or_else(|| Error::format("malformed acoustic token header"))?;
    let q: usize = q.parse().map_err(|_| Error::format("bad q"))?;
    let kc: usize = kc.parse().map_err(|_| Error::format("bad kc"))?;
    let entries = crate::semantic::read_token_file(reader)?;
    Ok((q, kc, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::synth::{render_utterance, PhoneAlphabet, SpeakerProfile};

    fn toy_features(seed: u64, rows: usize) -> FeatureMatrix {
        let mut rng = Rng::new(seed);
        let mut m = FeatureMatrix::zeros(rows, 4, 50.0);
        for v in m.data.iter_mut() {
            *v = rng.normal() * 2.0 + 1.0;
        }
        m
    }

    #[test]
    fn single_level_reduces_to_kmeans() {
        let feats = toy_features(3, 200);
        let books = rvq_train(&[&feats], 1, 8, 40, 77).unwrap();
        let amp = to_amplitude_domain(&feats);
        let stats = dsp::fit_norm([&amp]).unwrap();
        let normed = normalize(&amp, &stats);
        let fit = kmeans_train(&normed.data, 4, 8, 40, derive_seed(77, 0)).unwrap();
        assert_eq!(books.levels[0], fit.centroids);
    }

    /// Quantizer-domain distortion of a dataset under the trained books.
    fn distortion(features: &FeatureMatrix, books: &RvqCodebooks) -> f64 {
        let normed = normalize(&to_amplitude_domain(features), &books.stats);
        let codes = encode_normalized(&normed, &books);
        let mut total = 0.0;
        for (t, row) in normed.rows_iter().enumerate() {
            let mut rec = vec![0.0f64; row.len()];
            for (level, &code) in books.levels.iter().zip(codes.frame(t)) {
                for (v, c) in rec.iter_mut().zip(&level[code as usize]) {
                    *v += c;
                }
            }
            total += row
                .iter()
                .zip(&rec)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        total / normed.data.len() as f64
    }

    #[test]
    fn reconstruction_error_non_increasing_in_levels() {
        let train = toy_features(5, 400);
        let held_out = toy_features(6, 100);
        let mut prev = f64::INFINITY;
        for q in 1..=3 {
            let books = rvq_train(&[&train], q, 8, 40, 9).unwrap();
            let mse = distortion(&held_out, &books);
            assert!(mse <= prev + 1e-12, "q={q}: {mse} > {prev}");
            prev = mse;
        }
    }

    #[test]
    fn enough_codes_single_level_zero_distortion() {
        // 6 distinct rows, Kc = 8 >= 6, Q = 1.
        let mut m = FeatureMatrix::zeros(6, 2, 50.0);
        for i in 0..6 {
            m.row_mut(i).copy_from_slice(&[i as f64, (i * i) as f64]);
        }
        let books = rvq_train(&[&m], 1, 6, 60, 1).unwrap();
        let codes = encode_features(&m, &books);
        let decoded = rvq_decode(&codes, &books).unwrap();
        for (a, b) in m.data.iter().zip(&decoded.data) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn residual_norm_no_worse_than_level_zero() {
        let train = toy_features(8, 300);
        let books = rvq_train(&[&train], 3, 8, 40, 2).unwrap();
        let probe = toy_features(9, 50);
        let normed = normalize(&to_amplitude_domain(&probe), &books.stats);
        let codes = encode_normalized(&normed, &books);
        for (t, row) in normed.rows_iter().enumerate() {
            let frame = codes.frame(t);
            // Residual after level 0 only.
            let c0 = &books.levels[0][frame[0] as usize];
            let r0: f64 = row
                .iter()
                .zip(c0)
                .map(|(x, c)| (x - c) * (x - c))
                .sum();
            // Residual after all levels.
            let mut rec = vec![0.0f64; row.len()];
            for (level, &code) in books.levels.iter().zip(frame) {
                for (v, c) in rec.iter_mut().zip(&level[code as usize]) {
                    *v += c;
                }
            }
            let rq: f64 = row
                .iter()
                .zip(&rec)
                .map(|(x, c)| (x - c) * (x - c))
                .sum();
            assert!(rq <= r0 + 1e-12);
        }
    }

    #[test]
    fn constructed_sum_recovers_exact_codes() {
        // Hand-built codebooks with well-separated scales: greedy encoding
        // must walk down the hierarchy exactly.
        let books = RvqCodebooks {
            levels: vec![
                vec![vec![0.0, 0.0], vec![100.0, 0.0], vec![0.0, 100.0]],
                vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]],
                vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            ],
            stats: NormStats {
                mean: vec![0.0, 0.0],
                std: vec![1.0, 1.0],
                floored: vec![false, false],
            },
            frame: FrameSpec::acoustic(),
        };
        // Log features whose amplitude-domain image is (101, 10): the
        // greedy walk picks codes (1, 2, 1) = (100,0)+(0,10)+(1,0).
        let mut m = FeatureMatrix::zeros(1, 2, 50.0);
        m.row_mut(0)
            .copy_from_slice(&[2.0 * 101.0f64.ln(), 2.0 * 10.0f64.ln()]);
        let codes = encode_features(&m, &books);
        assert_eq!(codes.frame(0), &[1, 2, 1]);
        let decoded = rvq_decode(&codes, &books).unwrap();
        for (a, b) in decoded.row(0).iter().zip(m.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_deterministic() {
        let train = toy_features(10, 300);
        let books = rvq_train(&[&train], 2, 8, 40, 4).unwrap();
        let probe = toy_features(11, 40);
        let a = encode_normalized(&normalize(&probe, &books.stats), &books);
        let b = encode_normalized(&normalize(&probe, &books.stats), &books);
        assert_eq!(a, b);
    }

    #[test]
    fn flatten_example_offsets() {
        let codes = FrameCodes {
            frames: 2,
            q: 3,
            codes: vec![5, 7, 9, 2, 0, 1],
        };
        let seq = flatten(&codes, 64).unwrap();
        assert_eq!(seq.tokens, vec![5, 64 + 7, 128 + 9, 2, 64, 128 + 1]);
    }

    #[test]
    fn one_second_is_150_flat_tokens() {
        let alphabet = PhoneAlphabet::default_inventory();
        let spk = SpeakerProfile {
            speaker_id: 0,
            f0_hz: 160.0,
            spectral_tilt_db_per_octave: 0.0,
            vibrato_depth: 0.002,
            vibrato_rate_hz: 5.0,
        };
        let utt = render_utterance(&alphabet, "abcdefghi", &spk, f64::INFINITY, 1).unwrap();
        let feats = extract_features(&utt.waveform[..8000], SAMPLE_RATE, &FrameSpec::acoustic())
            .unwrap();
        let codes = FrameCodes {
            frames: feats.rows,
            q: 3,
            codes: vec![0; feats.rows * 3],
        };
        let seq = flatten(&codes, 64).unwrap();
        assert_eq!(seq.tokens.len(), 150);
    }

    #[test]
    fn flatten_round_trip_random() {
        let mut rng = Rng::new(33);
        for _ in 0..200 {
            let frames = rng.range_inclusive(1, 20);
            let q = rng.range_inclusive(1, 4);
            let kc = rng.range_inclusive(2, 64);
            let codes = FrameCodes {
                frames,
                q,
                codes: (0..frames * q).map(|_| rng.below(kc) as u16).collect(),
            };
            let seq = flatten(&codes, kc).unwrap();
            assert_eq!(seq.tokens.len() % q, 0);
            for (i, &tok) in seq.tokens.iter().enumerate() {
                assert_eq!(token_level(tok, kc), i % q);
            }
            let back = unflatten(&seq).unwrap();
            assert_eq!(back, codes);
        }
    }

    #[test]
    fn unflatten_rejects_bad_sequences() {
        // Length not divisible by q.
        let seq = AcousticSequence {
            tokens: vec![0, 64],
            q: 3,
            kc: 64,
        };
        assert!(unflatten(&seq).is_err());
        // Level slot mismatch: token 0 (level 0) in slot 1.
        let seq = AcousticSequence {
            tokens: vec![0, 0, 128],
            q: 3,
            kc: 64,
        };
        assert!(unflatten(&seq).is_err());
    }

    #[test]
    fn resynthesize_all_floor_is_near_silent() {
        let spec = FrameSpec::acoustic();
        let mut feats = FeatureMatrix::zeros(20, spec.n_filters, 50.0);
        feats.data.fill(spec.log_floor.ln());
        let wave = resynthesize(&feats, &spec);
        let peak = wave.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!(peak < 1e-3, "peak {peak}");
    }

    #[test]
    fn resynthesize_length_within_one_hop() {
        let alphabet = PhoneAlphabet::default_inventory();
        let spk = SpeakerProfile {
            speaker_id: 0,
            f0_hz: 200.0,
            spectral_tilt_db_per_octave: 1.0,
            vibrato_depth: 0.002,
            vibrato_rate_hz: 5.0,
        };
        let spec = FrameSpec::acoustic();
        for text in ["abc", "defg", "hijkl"] {
            let utt = render_utterance(&alphabet, text, &spk, f64::INFINITY, 3).unwrap();
            let feats = extract_features(&utt.waveform, SAMPLE_RATE, &spec).unwrap();
            let wave = resynthesize(&feats, &spec);
            let hop = spec.hop_samples(SAMPLE_RATE);
            assert!(
                wave.len().abs_diff(utt.waveform.len()) <= hop,
                "{} vs {}",
                wave.len(),
                utt.waveform.len()
            );
        }
    }

    #[test]
    fn codebook_file_round_trip() {
        let train = toy_features(21, 300);
        let books = rvq_train(&[&train], 2, 8, 40, 6).unwrap();
        let mut buf = Vec::new();
        write_codebooks(&mut buf, &books).unwrap();
        let back = read_codebooks(&mut buf.as_slice()).unwrap();
        assert_eq!(back.n_levels(), 2);
        assert_eq!(back.codebook_size(), 8);
        assert_eq!(back.dim(), 4);
    }

    #[test]
    fn acoustic_token_file_round_trip() {
        let entries = vec![("ev-00000".to_string(), vec![0u32, 70, 140])];
        let mut buf = Vec::new();
        write_acoustic_token_file(&mut buf, 3, 64, &entries).unwrap();
        let (q, kc, back) = read_acoustic_token_file(buf.as_slice()).unwrap();
        assert_eq!((q, kc), (3, 64));
        assert_eq!(back, entries);
    }
}
