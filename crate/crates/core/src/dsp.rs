//! Frame-level feature extraction.
//!
//! Waveforms are cut into Hann-windowed frames and reduced either to
//! triangular-filterbank log energies (the codec-side representation) or to
//! pitch-normalized harmonic amplitude vectors (the semantic-side
//! representation). Both tokenizers, the transcription oracle, and the
//! speaker tools sit on top of this module.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Framing and filterbank parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrameSpec {
    pub window_ms: u32,
    pub hop_ms: u32,
    /// Number of triangular band filters on a linear frequency axis.
    pub n_filters: usize,
    /// Energies are clamped to this floor before the log.
    pub log_floor: f64,
}

impl FrameSpec {
    /// 25 Hz frame rate; feeds the semantic tokenizer.
    pub fn semantic() -> Self {
        FrameSpec {
            window_ms: 40,
            hop_ms: 40,
            n_filters: 24,
            log_floor: 1e-10,
        }
    }

    /// 50 Hz frame rate with 50% overlap; feeds the acoustic codec. The
    /// finer filterbank keeps individual harmonics resolvable so that
    /// resynthesized audio stays intelligible to the oracle.
    pub fn acoustic() -> Self {
        FrameSpec {
            window_ms: 40,
            hop_ms: 20,
            n_filters: 96,
            log_floor: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_ms == 0 || self.window_ms == 0 {
            return Err(Error::invalid_config("window and hop must be positive"));
        }
        if self.hop_ms > self.window_ms {
            return Err(Error::invalid_config("hop must not exceed window"));
        }
        if self.n_filters < 4 {
            return Err(Error::invalid_config("need at least 4 filters"));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::invalid_config("log floor must be positive"));
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_ms as u64 * sample_rate as u64 / 1000) as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_ms as u64 * sample_rate as u64 / 1000) as usize
    }

    pub fn frame_rate_hz(&self) -> f64 {
        1000.0 / self.hop_ms as f64
    }

    /// Number of frames for a waveform of `len` samples; 0 if too short.
    ///
    /// Non-overlapping presets (window == hop) tile the waveform and drop
    /// the final partial frame: `(len - window)/hop + 1`. Overlapped
    /// presets zero-pad the tail instead so the frame rate is exactly
    /// `1/hop` -- one second of audio always yields `frame_rate_hz`
    /// frames, matching the token-rate contract downstream.
    pub fn frame_count(&self, len: usize, sample_rate: u32) -> usize {
        let window = self.window_samples(sample_rate);
        let hop = self.hop_samples(sample_rate);
        if len < window {
            0
        } else if window == hop {
            (len - window) / hop + 1
        } else {
            len.div_ceil(hop)
        }
    }
}

/// Row-major frame-by-dimension matrix of real features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub rate_hz: f64,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize, rate_hz: f64) -> Self {
        FeatureMatrix {
            rows,
            cols,
            rate_hz,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Windowed FFT analysis shared by the filterbank, the pitch tracker and
/// the oracle's template matcher.
pub struct SpectrumAnalyzer {
    window: Vec<f64>,
    window_sum: f64,
    fft: Arc<dyn Fft<f64>>,
    fft_len: usize,
    sample_rate: u32,
}

impl SpectrumAnalyzer {
    pub fn new(window_len: usize, sample_rate: u32) -> Self {
        let fft_len = (window_len * 2).next_power_of_two().max(512);
        let window: Vec<f64> = (0..window_len)
            .map(|n| {
                let x = std::f64::consts::PI * n as f64 / window_len as f64;
                x.sin() * x.sin()
            })
            .collect();
        let window_sum: f64 = window.iter().sum();
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        SpectrumAnalyzer {
            window,
            window_sum,
            fft,
            fft_len,
            sample_rate,
        }
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.fft_len as f64
    }

    pub fn n_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Magnitude spectrum of one frame, scaled so a full-scale sinusoid at
    /// amplitude A peaks near A (2/sum(window) normalization).
    pub fn magnitudes(&self, frame: &[f32]) -> Vec<f64> {
        assert_eq!(frame.len(), self.window.len());
        let mut buf: Vec<Complex<f64>> = Vec::with_capacity(self.fft_len);
        for (x, w) in frame.iter().zip(&self.window) {
            buf.push(Complex::new(*x as f64 * w, 0.0));
        }
        buf.resize(self.fft_len, Complex::new(0.0, 0.0));
        self.fft.process(&mut buf);
        let scale = 2.0 / self.window_sum;
        buf[..self.n_bins()]
            .iter()
            .map(|c| c.norm() * scale)
            .collect()
    }
}

/// Quadratic-interpolated peak location and height around bin `k`.
fn parabolic_peak(mag: &[f64], k: usize) -> (f64, f64) {
    if k == 0 || k + 1 >= mag.len() {
        return (k as f64, mag[k]);
    }
    let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-30 {
        return (k as f64, b);
    }
    let delta = 0.5 * (a - c) / denom;
    let delta = delta.clamp(-0.5, 0.5);
    (k as f64 + delta, b - 0.25 * (a - c) * delta)
}

/// Largest magnitude within +/-`radius` bins of frequency `hz`.
pub fn amplitude_near(mag: &[f64], bin_hz: f64, hz: f64, radius: usize) -> f64 {
    let center = (hz / bin_hz).round() as isize;
    let lo = (center - radius as isize).max(0) as usize;
    let hi = ((center + radius as isize) as usize).min(mag.len().saturating_sub(1));
    if lo > hi {
        return 0.0;
    }
    mag[lo..=hi].iter().cloned().fold(0.0, f64::max)
}

/// Triangular filterbank on a linear frequency axis. Filter `i` peaks at
/// `(i + 1) * delta` and spans two bands, so neighboring filters cross at
/// half height and sum to one between centers.
pub struct Filterbank {
    pub n_filters: usize,
    pub delta_hz: f64,
    bin_hz: f64,
    /// Per filter: first bin index and triangle weights per bin.
    taps: Vec<(usize, Vec<f64>)>,
}

impl Filterbank {
    pub fn new(n_filters: usize, nyquist_hz: f64, bin_hz: f64, n_bins: usize) -> Self {
        let delta = nyquist_hz / (n_filters + 1) as f64;
        let mut taps = Vec::with_capacity(n_filters);
        for i in 0..n_filters {
            let center = (i + 1) as f64 * delta;
            let lo_hz = center - delta;
            let hi_hz = center + delta;
            let lo_bin = (lo_hz / bin_hz).floor().max(0.0) as usize;
            let hi_bin = ((hi_hz / bin_hz).ceil() as usize).min(n_bins - 1);
            let mut weights = Vec::with_capacity(hi_bin - lo_bin + 1);
            for k in lo_bin..=hi_bin {
                let f = k as f64 * bin_hz;
                weights.push(triangle(f, center, delta));
            }
            taps.push((lo_bin, weights));
        }
        Filterbank {
            n_filters,
            delta_hz: delta,
            bin_hz,
            taps,
        }
    }

    pub fn for_spec(spec: &FrameSpec, sample_rate: u32) -> (SpectrumAnalyzer, Filterbank) {
        let analyzer = SpectrumAnalyzer::new(spec.window_samples(sample_rate), sample_rate);
        let fb = Filterbank::new(
            spec.n_filters,
            sample_rate as f64 / 2.0,
            analyzer.bin_hz(),
            analyzer.n_bins(),
        );
        (analyzer, fb)
    }

    pub fn center_hz(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.delta_hz
    }

    /// Triangle response of filter `i` at frequency `hz`.
    pub fn response(&self, i: usize, hz: f64) -> f64 {
        triangle(hz, self.center_hz(i), self.delta_hz)
    }

    /// Weighted power per band from a magnitude spectrum.
    pub fn energies(&self, mag: &[f64]) -> Vec<f64> {
        self.taps
            .iter()
            .map(|(lo, weights)| {
                weights
                    .iter()
                    .zip(&mag[*lo..])
                    .map(|(w, m)| w * m * m)
                    .sum()
            })
            .collect()
    }

    pub fn bin_hz(&self) -> f64 {
        self.bin_hz
    }
}

fn triangle(f: f64, center: f64, delta: f64) -> f64 {
    (1.0 - (f - center).abs() / delta).max(0.0)
}

/// Log triangular-filterbank energies, one row per frame.
pub fn extract_features(
    waveform: &[f32],
    sample_rate: u32,
    spec: &FrameSpec,
) -> Result<FeatureMatrix> {
    spec.validate()?;
    let window = spec.window_samples(sample_rate);
    let hop = spec.hop_samples(sample_rate);
    if waveform.len() < window {
        return Err(Error::invalid_input(format!(
            "waveform of {} samples shorter than analysis window of {}",
            waveform.len(),
            window
        )));
    }
    let (analyzer, fb) = Filterbank::for_spec(spec, sample_rate);
    let frames = spec.frame_count(waveform.len(), sample_rate);
    let mut out = FeatureMatrix::zeros(frames, spec.n_filters, spec.frame_rate_hz());
    let mut buf = vec![0.0f32; window];
    for t in 0..frames {
        let start = t * hop;
        let avail = (waveform.len() - start).min(window);
        buf[..avail].copy_from_slice(&waveform[start..start + avail]);
        buf[avail..].fill(0.0);
        let mag = analyzer.magnitudes(&buf);
        let energies = fb.energies(&mag);
        for (dst, e) in out.row_mut(t).iter_mut().zip(&energies) {
            *dst = e.max(spec.log_floor).ln();
        }
    }
    Ok(out)
}

/// Parameters of the pitch-normalized harmonic analysis.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct HarmonicSpec {
    pub n_harmonics: usize,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// A pitch candidate peak must reach this fraction of the frame's
    /// global spectral maximum.
    pub peak_rel_threshold: f64,
}

impl Default for HarmonicSpec {
    fn default() -> Self {
        HarmonicSpec {
            n_harmonics: 12,
            f0_min_hz: 70.0,
            f0_max_hz: 450.0,
            peak_rel_threshold: 0.15,
        }
    }
}

/// Estimated fundamental of one magnitude spectrum: the lowest local peak
/// above the relative threshold inside the search band. Returns None for
/// unvoiced/silent frames.
pub fn detect_f0(mag: &[f64], bin_hz: f64, spec: &HarmonicSpec, abs_floor: f64) -> Option<f64> {
    let global_max = mag.iter().cloned().fold(0.0, f64::max);
    if global_max < abs_floor {
        return None;
    }
    let threshold = spec.peak_rel_threshold * global_max;
    let lo = (spec.f0_min_hz / bin_hz).floor() as usize;
    let hi = ((spec.f0_max_hz / bin_hz).ceil() as usize).min(mag.len().saturating_sub(2));
    for k in lo.max(1)..=hi {
        if mag[k] >= threshold && mag[k] >= mag[k - 1] && mag[k] > mag[k + 1] {
            let (pos, _) = parabolic_peak(mag, k);
            return Some(pos * bin_hz);
        }
    }
    None
}

/// Pitch-normalized harmonic amplitude vectors, one unit-norm row per
/// frame; unvoiced frames yield zero rows. This is the semantic-side
/// feature: the same phone spoken at different pitches maps to nearly the
/// same row, which is what lets semantic tokens stay speaker-independent.
pub fn harmonic_features(
    waveform: &[f32],
    sample_rate: u32,
    frame: &FrameSpec,
    harmonics: &HarmonicSpec,
) -> Result<FeatureMatrix> {
    frame.validate()?;
    let window = frame.window_samples(sample_rate);
    let hop = frame.hop_samples(sample_rate);
    if waveform.len() < window {
        return Err(Error::invalid_input(format!(
            "waveform of {} samples shorter than analysis window of {}",
            waveform.len(),
            window
        )));
    }
    let analyzer = SpectrumAnalyzer::new(window, sample_rate);
    let bin_hz = analyzer.bin_hz();
    let frames = frame.frame_count(waveform.len(), sample_rate);
    let mut out = FeatureMatrix::zeros(frames, harmonics.n_harmonics, frame.frame_rate_hz());
    let nyquist = sample_rate as f64 / 2.0;
    let mut buf = vec![0.0f32; window];
    for t in 0..frames {
        let start = t * hop;
        let avail = (waveform.len() - start).min(window);
        buf[..avail].copy_from_slice(&waveform[start..start + avail]);
        buf[avail..].fill(0.0);
        let mag = analyzer.magnitudes(&buf);
        let Some(f0) = detect_f0(&mag, bin_hz, harmonics, 1e-7) else {
            continue;
        };
        let row = out.row_mut(t);
        for h in 1..=harmonics.n_harmonics {
            let hz = h as f64 * f0;
            if hz >= nyquist {
                break;
            }
            row[h - 1] = amplitude_near(&mag, bin_hz, hz, 2);
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(out)
}

/// Per-dimension mean and standard deviation over a feature dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Dimensions whose standard deviation had to be floored.
    pub floored: Vec<bool>,
}

pub const STD_FLOOR: f64 = 1e-8;

/// Fit mean/std over all rows of all matrices.
pub fn fit_norm<'a>(matrices: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<NormStats> {
    let mut iter = matrices.into_iter().peekable();
    let first = iter
        .peek()
        .ok_or_else(|| Error::invalid_input("empty dataset"))?;
    let dims = first.cols;
    let mut count = 0usize;
    let mut sum = vec![0.0f64; dims];
    let mut sum2 = vec![0.0f64; dims];
    for m in iter {
        if m.cols != dims {
            return Err(Error::invalid_input("inconsistent feature dimensions"));
        }
        for row in m.rows_iter() {
            for (d, &v) in row.iter().enumerate() {
                sum[d] += v;
                sum2[d] += v * v;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid_input("dataset has no frames"));
    }
    let n = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let mut floored = vec![false; dims];
    let std: Vec<f64> = (0..dims)
        .map(|d| {
            let var = (sum2[d] / n - mean[d] * mean[d]).max(0.0);
            let s = var.sqrt();
            if s < STD_FLOOR {
                floored[d] = true;
                STD_FLOOR
            } else {
                s
            }
        })
        .collect();
    Ok(NormStats { mean, std, floored })
}

/// (x - mean) / std, per dimension.
pub fn normalize(features: &FeatureMatrix, stats: &NormStats) -> FeatureMatrix {
    assert_eq!(features.cols, stats.mean.len());
    let mut out = features.clone();
    for row in out.data.chunks_exact_mut(out.cols) {
        for (d, v) in row.iter_mut().enumerate() {
            *v = (*v - stats.mean[d]) / stats.std[d];
        }
    }
    out
}

// --- binary matrix container -------------------------------------------

const MATRIX_MAGIC: &[u8; 4] = b"FMAT";
const MATRIX_VERSION: u32 = 1;
const DTYPE_F32: u32 = 0;

/// Write a matrix as: magic, version, rows, cols, rate, dtype tag, then
/// row-major little-endian f32 payload.
pub fn write_matrix<W: Write>(w: &mut W, m: &FeatureMatrix) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&MATRIX_VERSION.to_le_bytes())?;
    w.write_all(&(m.rows as u64).to_le_bytes())?;
    w.write_all(&(m.cols as u64).to_le_bytes())?;
    w.write_all(&m.rate_hz.to_le_bytes())?;
    w.write_all(&DTYPE_F32.to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.data.len() * 4);
    for &v in &m.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<FeatureMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::format("bad matrix magic"));
    }
    let version = read_u32(r)?;
    if version != MATRIX_VERSION {
        return Err(Error::format(format!("unsupported matrix version {version}")));
    }
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let mut rate = [0u8; 8];
    r.read_exact(&mut rate)?;
    let rate_hz = f64::from_le_bytes(rate);
    let dtype = read_u32(r)?;
    if dtype != DTYPE_F32 {
        return Err(Error::format(format!("unsupported dtype tag {dtype}")));
    }
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::format("matrix size overflow"))?;
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(FeatureMatrix {
        rows,
        cols,
        rate_hz,
        data,
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_wave(len: usize, seed: u64) -> Vec<f32> {
        let mut rng = Rng::new(seed);
        (0..len).map(|_| (rng.uniform() as f32 - 0.5) * 0.6).collect()
    }

    #[test]
    fn semantic_preset_frame_count() {
        let wave = random_wave(8000, 1);
        let feats = extract_features(&wave, 8000, &FrameSpec::semantic()).unwrap();
        assert_eq!(feats.rows, 25);
        assert_eq!(feats.cols, 24);
        assert_eq!(feats.rate_hz, 25.0);
    }

    #[test]
    fn acoustic_preset_frame_count() {
        // 1.0 s at the 50 Hz preset is exactly 50 frames.
        let wave = random_wave(8000, 2);
        let feats = extract_features(&wave, 8000, &FrameSpec::acoustic()).unwrap();
        assert_eq!(feats.rows, 50);
        assert_eq!(feats.rate_hz, 50.0);
    }

    #[test]
    fn frame_count_formula_exact() {
        // window == hop: the count matches (len - window)/hop + 1 and the
        // final partial frame is dropped. The overlapped preset pads the
        // tail to hold the nominal 50 Hz rate instead.
        let sem = FrameSpec::semantic();
        for len in [320usize, 321, 639, 640, 8000] {
            let wave = random_wave(len, len as u64);
            let feats = extract_features(&wave, 8000, &sem).unwrap();
            assert_eq!(feats.rows, (len - 320) / 320 + 1);
        }
        let aco = FrameSpec::acoustic();
        for len in [320usize, 321, 479, 480, 800, 8001] {
            let wave = random_wave(len, len as u64);
            let feats = extract_features(&wave, 8000, &aco).unwrap();
            assert_eq!(feats.rows, len.div_ceil(160));
        }
    }

    #[test]
    fn zero_waveform_hits_log_floor() {
        let wave = vec![0.0f32; 8000];
        let spec = FrameSpec::semantic();
        let feats = extract_features(&wave, 8000, &spec).unwrap();
        let expected = spec.log_floor.ln();
        assert!(feats.data.iter().all(|&v| v == expected));
    }

    #[test]
    fn too_short_waveform_rejected() {
        let wave = random_wave(100, 3);
        assert!(extract_features(&wave, 8000, &FrameSpec::semantic()).is_err());
    }

    #[test]
    fn amplitude_covariance_in_log_domain() {
        // Doubling the waveform quadruples every band power, so every log
        // energy entry shifts by exactly ln 4 (beyond the floor).
        let wave = random_wave(4000, 4);
        let doubled: Vec<f32> = wave.iter().map(|v| v * 2.0).collect();
        let spec = FrameSpec::acoustic();
        let a = extract_features(&wave, 8000, &spec).unwrap();
        let b = extract_features(&doubled, 8000, &spec).unwrap();
        let ln4 = 4.0f64.ln();
        for (x, y) in a.data.iter().zip(&b.data) {
            if *x > spec.log_floor.ln() + ln4 {
                assert!((y - x - ln4).abs() < 1e-9, "x={x} y={y}");
            }
        }
    }

    #[test]
    fn norm_stats_zero_mean_unit_var() {
        let wave = random_wave(16000, 5);
        let feats = extract_features(&wave, 8000, &FrameSpec::semantic()).unwrap();
        let stats = fit_norm([&feats]).unwrap();
        let normed = normalize(&feats, &stats);
        for d in 0..normed.cols {
            let mut mean = 0.0;
            let mut var = 0.0;
            for r in 0..normed.rows {
                mean += normed.row(r)[d];
            }
            mean /= normed.rows as f64;
            for r in 0..normed.rows {
                let v = normed.row(r)[d] - mean;
                var += v * v;
            }
            var /= normed.rows as f64;
            assert!(mean.abs() < 1e-6, "dim {d} mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "dim {d} var {var}");
        }
    }

    #[test]
    fn fit_norm_one_dimensional_pair() {
        let mut m = FeatureMatrix::zeros(2, 1, 25.0);
        m.data = vec![0.0, 2.0];
        let stats = fit_norm([&m]).unwrap();
        assert!((stats.mean[0] - 1.0).abs() < 1e-12);
        assert!((stats.std[0] - 1.0).abs() < 1e-12);
        assert!(!stats.floored[0]);
    }

    #[test]
    fn constant_dimension_flagged() {
        let mut m = FeatureMatrix::zeros(3, 2, 25.0);
        for r in 0..3 {
            m.row_mut(r)[0] = 7.0;
            m.row_mut(r)[1] = r as f64;
        }
        let stats = fit_norm([&m]).unwrap();
        assert!(stats.floored[0]);
        assert!(!stats.floored[1]);
        assert_eq!(stats.std[0], STD_FLOOR);
    }

    #[test]
    fn double_normalization_is_not_identity() {
        let wave = random_wave(8000, 6);
        let feats = extract_features(&wave, 8000, &FrameSpec::semantic()).unwrap();
        let stats = fit_norm([&feats]).unwrap();
        let once = normalize(&feats, &stats);
        let twice = normalize(&once, &stats);
        assert_ne!(once, twice);
        let identity = NormStats {
            mean: vec![0.0; feats.cols],
            std: vec![1.0; feats.cols],
            floored: vec![false; feats.cols],
        };
        assert_eq!(once, normalize(&once, &identity));
    }

    #[test]
    fn harmonic_features_pitch_invariant() {
        // The same harmonic stack rendered at two different fundamentals
        // should produce nearly identical normalized rows.
        let render = |f0: f64| -> Vec<f32> {
            (0..960)
                .map(|n| {
                    let t = n as f64 / 8000.0;
                    let mut v = 0.0;
                    for (h, a) in [(1.0, 1.0), (3.0, 0.8), (7.0, 0.6)] {
                        v += a * (2.0 * std::f64::consts::PI * h * f0 * t).sin();
                    }
                    (v * 0.1) as f32
                })
                .collect()
        };
        let spec = FrameSpec::semantic();
        let hspec = HarmonicSpec::default();
        let a = harmonic_features(&render(110.0), 8000, &spec, &hspec).unwrap();
        let b = harmonic_features(&render(287.0), 8000, &spec, &hspec).unwrap();
        for (ra, rb) in a.rows_iter().zip(b.rows_iter()) {
            let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
            assert!(dot > 0.98, "cosine {dot}");
        }
    }

    #[test]
    fn harmonic_features_silence_is_zero() {
        let wave = vec![0.0f32; 1600];
        let feats =
            harmonic_features(&wave, 8000, &FrameSpec::semantic(), &HarmonicSpec::default())
                .unwrap();
        assert!(feats.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matrix_container_round_trip() {
        let wave = random_wave(8000, 7);
        let feats = extract_features(&wave, 8000, &FrameSpec::semantic()).unwrap();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &feats).unwrap();
        let back = read_matrix(&mut buf.as_slice()).unwrap();
        assert_eq!(back.rows, feats.rows);
        assert_eq!(back.cols, feats.cols);
        assert_eq!(back.rate_hz, feats.rate_hz);
        for (a, b) in feats.data.iter().zip(&back.data) {
            assert_eq!(*a as f32, *b as f32);
        }
    }
}
