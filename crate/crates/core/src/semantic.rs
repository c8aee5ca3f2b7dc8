//! Semantic tokenizer: k-means over normalized pitch-invariant harmonic
//! features at 25 Hz, plus run-length deduplication of the token stream.

use std::io::{BufRead, Read, Write};

use crate::dsp::{
    self, harmonic_features, normalize, FeatureMatrix, FrameSpec, HarmonicSpec, NormStats,
};
use crate::rng::Rng;
use crate::synth::SAMPLE_RATE;
use crate::{Error, Result};

/// Result of a k-means fit, including the per-iteration inertia trace so
/// convergence behavior is testable.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd's algorithm with k-means++ seeding. Deterministic given the
/// seed; stops when assignments are stable or after `max_iters`. Empty
/// clusters are re-seeded from the point farthest from its centroid.
pub fn kmeans_train(rows: &[f64], dim: usize, k: usize, max_iters: usize, seed: u64) -> Result<KMeansFit> {
    if dim == 0 || rows.len() % dim != 0 {
        return Err(Error::invalid_input("row data not a multiple of dim"));
    }
    let n = rows.len() / dim;
    if k < 2 {
        return Err(Error::invalid_config("k must be at least 2"));
    }
    let distinct = count_distinct_rows(rows, dim);
    if distinct < k {
        return Err(Error::invalid_input(format!(
            "need at least {k} distinct rows, found {distinct}"
        )));
    }
    let row = |i: usize| &rows[i * dim..(i + 1) * dim];
    let mut rng = Rng::new(seed);

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(row(rng.below(n)).to_vec());
    let mut dist2: Vec<f64> = (0..n)
        .map(|i| squared_distance(row(i), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let next = rng
            .weighted(&dist2)
            .expect("distinct rows guarantee a positive weight");
        let c = row(next).to_vec();
        for i in 0..n {
            let d = squared_distance(row(i), &c);
            if d < dist2[i] {
                dist2[i] = d;
            }
        }
        centroids.push(c);
    }

    let mut assignment = vec![usize::MAX; n];
    let mut inertia_trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        // Assignment step (ties go to the lowest centroid id).
        let mut changed = false;
        let mut inertia = 0.0;
        for i in 0..n {
            let (best, d) = nearest_centroid(row(i), &centroids);
            inertia += d;
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        inertia_trace.push(inertia);
        if !changed {
            break;
        }
        // Update step.
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let a = assignment[i];
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed from the point farthest from its own centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = squared_distance(row(a), &centroids[assignment[a]]);
                        let db = squared_distance(row(b), &centroids[assignment[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .expect("nonempty data");
                log::warn!("k-means: re-seeding empty cluster {c} from row {far}");
                centroids[c] = row(far).to_vec();
            } else {
                for (d, s) in centroids[c].iter_mut().zip(&sums[c]) {
                    *d = s / counts[c] as f64;
                }
            }
        }
    }
    for i in 0..k {
        for j in i + 1..k {
            if centroids[i] == centroids[j] {
                return Err(Error::invalid_input(format!(
                    "k-means produced duplicate centroids {i} and {j}"
                )));
            }
        }
    }
    Ok(KMeansFit {
        centroids,
        inertia_trace,
        iterations,
    })
}

fn count_distinct_rows(rows: &[f64], dim: usize) -> usize {
    let mut seen: std::collections::HashSet<Vec<u64>> = std::collections::HashSet::new();
    for row in rows.chunks_exact(dim) {
        seen.insert(row.iter().map(|v| v.to_bits()).collect());
    }
    seen.len()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Index and squared distance of the nearest centroid; ties resolve to
/// the lowest index.
pub(crate) fn nearest_centroid(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(row, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

/// Trained semantic tokenizer: centroids over normalized harmonic
/// features plus everything needed to featurize a waveform.
#[derive(Debug, Clone)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    pub stats: NormStats,
    pub frame: FrameSpec,
    pub harmonics: HarmonicSpec,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

/// Discrete semantic token sequence; `dedup` records whether run-length
/// collapse has been applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticSequence {
    pub tokens: Vec<u32>,
    pub dedup: bool,
}

/// Featurize the audio-only training set and fit the tokenizer.
pub fn train_semantic_tokenizer(
    waveforms: &[&[f32]],
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<KMeansModel> {
    let frame = FrameSpec::semantic();
    let harmonics = HarmonicSpec::default();
    let feats: Vec<FeatureMatrix> = waveforms
        .iter()
        .map(|w| harmonic_features(w, SAMPLE_RATE, &frame, &harmonics))
        .collect::<Result<_>>()?;
    let stats = dsp::fit_norm(feats.iter())?;
    let mut rows = Vec::new();
    for f in &feats {
        let normed = normalize(f, &stats);
        rows.extend_from_slice(&normed.data);
    }
    let fit = kmeans_train(&rows, harmonics.n_harmonics, k, max_iters, seed)?;
    Ok(KMeansModel {
        centroids: fit.centroids,
        stats,
        frame,
        harmonics,
    })
}

/// Per-frame nearest-centroid ids at 25 Hz. Deduplication is not applied
/// here.
pub fn semantic_encode(waveform: &[f32], model: &KMeansModel) -> Result<SemanticSequence> {
    let feats = harmonic_features(waveform, SAMPLE_RATE, &model.frame, &model.harmonics)?;
    let normed = normalize(&feats, &model.stats);
    let tokens = normed
        .rows_iter()
        .map(|row| nearest_centroid(row, &model.centroids).0 as u32)
        .collect();
    Ok(SemanticSequence {
        tokens,
        dedup: false,
    })
}

/// Keep the first element of every maximal run of equal tokens.
pub fn dedup(seq: &SemanticSequence) -> SemanticSequence {
    let mut tokens: Vec<u32> = Vec::with_capacity(seq.tokens.len());
    for &t in &seq.tokens {
        if tokens.last() != Some(&t) {
            tokens.push(t);
        }
    }
    SemanticSequence {
        tokens,
        dedup: true,
    }
}

// --- persistence ----------------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
struct ModelHeader {
    k: usize,
    dim: usize,
    frame: FrameSpec,
    harmonics: HarmonicSpec,
    stats: NormStats,
}

const MODEL_MAGIC: &[u8; 8] = b"SEMKMNS1";

pub fn write_semantic_model<W: Write>(w: &mut W, model: &KMeansModel) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    let dim = model.centroids.first().map_or(0, |c| c.len());
    let header = serde_json::to_vec(&ModelHeader {
        k: model.k(),
        dim,
        frame: model.frame,
        harmonics: model.harmonics,
        stats: model.stats.clone(),
    })
    .map_err(|e| Error::format(e.to_string()))?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    let mut m = FeatureMatrix::zeros(model.k(), dim, 0.0);
    for (r, c) in model.centroids.iter().enumerate() {
        m.row_mut(r).copy_from_slice(c);
    }
    dsp::write_matrix(w, &m)
}

pub fn read_semantic_model<R: Read>(r: &mut R) -> Result<KMeansModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::format("bad semantic model magic"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header: ModelHeader =
        serde_json::from_slice(&header).map_err(|e| Error::format(e.to_string()))?;
    let m = dsp::read_matrix(r)?;
    if m.rows != header.k || m.cols != header.dim {
        return Err(Error::format("semantic model shape mismatch"));
    }
    Ok(KMeansModel {
        centroids: m.rows_iter().map(|r| r.to_vec()).collect(),
        stats: header.stats,
        frame: header.frame,
        harmonics: header.harmonics,
    })
}

/// Write token sequences as line-delimited `id tok tok ...` records.
pub fn write_token_file<W: Write>(w: &mut W, entries: &[(String, Vec<u32>)]) -> Result<()> {
    for (id, tokens) in entries {
        write!(w, "{id}")?;
        for t in tokens {
            write!(w, " {t}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_token_file<R: Read>(r: R) -> Result<Vec<(String, Vec<u32>)>> {
    let mut out = Vec::new();
    for line in std::io::BufReader::new(r).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let id = parts
            .next()
            .ok_or_else(|| Error::format("token line without id"))?
            .to_string();
        let tokens = parts
            .map(|p| p.parse::<u32>().map_err(|e| Error::format(e.to_string())))
            .collect::<Result<Vec<u32>>>()?;
        out.push((id, tokens));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_utterance, PhoneAlphabet, SpeakerProfile};

    #[test]
    fn one_dimensional_two_clusters() {
        let rows = [0.0, 1.0, 10.0, 11.0];
        let fit = kmeans_train(&rows, 1, 2, 50, 3).unwrap();
        let mut centers: Vec<f64> = fit.centroids.iter().map(|c| c[0]).collect();
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(centers, vec![0.5, 10.5]);
    }

    #[test]
    fn inertia_non_increasing() {
        let mut rng = Rng::new(17);
        let rows: Vec<f64> = (0..600).map(|_| rng.normal()).collect();
        let fit = kmeans_train(&rows, 3, 8, 100, 5).unwrap();
        for pair in fit.inertia_trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "inertia increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn k_equals_distinct_points_zero_inertia() {
        let rows = [0.0, 0.0, 3.0, 3.0, 7.0, 9.0, 7.0, 9.0];
        let fit = kmeans_train(&rows, 2, 3, 50, 1).unwrap();
        let last = *fit.inertia_trace.last().unwrap();
        assert!(last < 1e-18, "inertia {last}");
    }

    #[test]
    fn too_few_distinct_rows_rejected() {
        let rows = [1.0, 1.0, 1.0, 2.0];
        assert!(kmeans_train(&rows, 1, 3, 50, 1).is_err());
    }

    fn toy_model() -> (PhoneAlphabet, KMeansModel, SpeakerProfile) {
        let alphabet = PhoneAlphabet::default_inventory();
        let speakers: Vec<SpeakerProfile> = [110.0, 180.0, 290.0]
            .iter()
            .enumerate()
            .map(|(i, &f0)| SpeakerProfile {
                speaker_id: i as u32,
                f0_hz: f0,
                spectral_tilt_db_per_octave: -1.0 + i as f64,
                vibrato_depth: 0.002,
                vibrato_rate_hz: 5.0,
            })
            .collect();
        let mut waves = Vec::new();
        for (i, spk) in speakers.iter().enumerate() {
            for (j, text) in ["abcde", "fghij", "klmno", "pqrst"].iter().enumerate() {
                waves.push(
                    render_utterance(&alphabet, text, spk, f64::INFINITY, (i * 4 + j) as u64)
                        .unwrap()
                        .waveform,
                );
            }
        }
        let refs: Vec<&[f32]> = waves.iter().map(|w| w.as_slice()).collect();
        let model = train_semantic_tokenizer(&refs, 24, 50, 7).unwrap();
        (alphabet, model, speakers[0].clone())
    }

    #[test]
    fn one_second_gives_25_tokens() {
        let (alphabet, model, spk) = toy_model();
        // 1.0 s = 25 semantic frames: render a text whose duration lands
        // at a whole second boundary is impossible with 120 ms phones, so
        // trim a longer rendering to exactly 8000 samples.
        let utt = render_utterance(&alphabet, "abcdefghi", &spk, f64::INFINITY, 9).unwrap();
        let seq = semantic_encode(&utt.waveform[..8000], &model).unwrap();
        assert_eq!(seq.tokens.len(), 25);
        assert!(!seq.dedup);
    }

    #[test]
    fn emitted_ids_minimize_distance() {
        let (alphabet, model, spk) = toy_model();
        let utt = render_utterance(&alphabet, "adgjm", &spk, f64::INFINITY, 4).unwrap();
        let feats =
            harmonic_features(&utt.waveform, SAMPLE_RATE, &model.frame, &model.harmonics)
                .unwrap();
        let normed = normalize(&feats, &model.stats);
        let seq = semantic_encode(&utt.waveform, &model).unwrap();
        for (row, &tok) in normed.rows_iter().zip(&seq.tokens) {
            let d_tok = squared_distance(row, &model.centroids[tok as usize]);
            for c in &model.centroids {
                assert!(d_tok <= squared_distance(row, c) + 1e-15);
            }
        }
    }

    #[test]
    fn encoding_deterministic() {
        let (alphabet, model, spk) = toy_model();
        let utt = render_utterance(&alphabet, "aeiqt", &spk, f64::INFINITY, 2).unwrap();
        let a = semantic_encode(&utt.waveform, &model).unwrap();
        let b = semantic_encode(&utt.waveform, &model).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dedup_collapses_runs() {
        let seq = SemanticSequence {
            tokens: vec![1, 1, 2, 2, 2, 3],
            dedup: false,
        };
        assert_eq!(dedup(&seq).tokens, vec![1, 2, 3]);
    }

    #[test]
    fn dedup_idempotent_and_subsequence() {
        let mut rng = Rng::new(21);
        for _ in 0..100 {
            let len = rng.range_inclusive(0, 30);
            let tokens: Vec<u32> = (0..len).map(|_| rng.below(4) as u32).collect();
            let seq = SemanticSequence {
                tokens,
                dedup: false,
            };
            let once = dedup(&seq);
            let twice = dedup(&once);
            assert_eq!(once.tokens, twice.tokens);
            assert!(once.tokens.len() <= seq.tokens.len());
            assert!(once.tokens.windows(2).all(|w| w[0] != w[1]));
            // Subsequence check.
            let mut it = seq.tokens.iter();
            assert!(once.tokens.iter().all(|t| it.any(|s| s == t)));
        }
    }

    #[test]
    fn all_equal_collapses_to_one() {
        let seq = SemanticSequence {
            tokens: vec![9; 25],
            dedup: false,
        };
        assert_eq!(dedup(&seq).tokens, vec![9]);
    }

    #[test]
    fn model_round_trip() {
        let (_, model, _) = toy_model();
        let mut buf = Vec::new();
        write_semantic_model(&mut buf, &model).unwrap();
        let back = read_semantic_model(&mut buf.as_slice()).unwrap();
        assert_eq!(back.k(), model.k());
        assert_eq!(back.stats.mean, model.stats.mean);
        // Centroids survive the f32 container round trip.
        for (a, b) in model.centroids.iter().zip(&back.centroids) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }

    #[test]
    fn token_file_round_trip() {
        let entries = vec![
            ("ao-00001".to_string(), vec![5u32, 6, 7]),
            ("ao-00002".to_string(), vec![]),
        ];
        let mut buf = Vec::new();
        write_token_file(&mut buf, &entries).unwrap();
        let back = read_token_file(buf.as_slice()).unwrap();
        assert_eq!(back, entries);
    }
}
