//! Measurement pipeline: spectra, Lorentzian fits, g²(0), blinking
//! histograms and saturation curves.

use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::emitter::TimeTagStream;
use crate::langevin::TimeSeries;
use crate::lsq::{self, LmOptions, LsqError};
use crate::units::{AngularRate, Power};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("series too short: {got} samples give {segments} segments, need at least 4 of length {segment_len}")]
    TooShort {
        got: usize,
        segment_len: usize,
        segments: usize,
    },
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("no spectral peak: SNR {snr:.2} below the required {required}")]
    NoPeak { snr: f64, required: f64 },
    #[error("fit did not converge: {0}")]
    Fit(#[from] LsqError),
    #[error("channel {0} has no events; g²(0) is undefined")]
    EmptyChannel(u8),
    #[error("no side-peak coincidences within ±{0} pulses; g²(0) is undefined")]
    NoSideCoincidences(i64),
    #[error("stream too short: {bins} bins of width {bin_width} s, need at least {required}")]
    TooFewBins {
        bins: usize,
        bin_width: f64,
        required: usize,
    },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            // periodic Hann
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsdOptions {
    pub segment_len: usize,
    /// Fractional overlap of consecutive segments in `[0, 1)`.
    pub overlap: f64,
    pub window: Window,
}

impl Default for PsdOptions {
    fn default() -> Self {
        PsdOptions {
            segment_len: 4096,
            overlap: 0.5,
            window: Window::Hann,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Hz, uniform grid from 0 to Nyquist.
    pub frequencies: Vec<f64>,
    /// One-sided power spectral density, unit²/Hz.
    pub densities: Vec<f64>,
    /// Equivalent noise bandwidth of the window, Hz.
    pub resolution_bandwidth: f64,
    pub averages: usize,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        if self.frequencies.len() > 1 {
            self.frequencies[1] - self.frequencies[0]
        } else {
            0.0
        }
    }

    /// `Σ S·Δf`, equal to the variance of the input.
    pub fn integral(&self) -> f64 {
        self.densities.iter().sum::<f64>() * self.bin_width()
    }
}

/// Averaged-periodogram (Welch) estimate of the one-sided PSD.
///
/// The global mean is removed first; each segment is windowed and normalised
/// by `Σw²`, so the integral of the spectrum equals the mean windowed power
/// and, for a rectangular window without overlap, exactly the variance.
pub fn power_spectral_density(series: &TimeSeries, opts: &PsdOptions) -> Result<Spectrum> {
    let n = opts.segment_len;
    if n < 2 {
        return Err(AnalysisError::InvalidOption("segment length must be at least 2".into()));
    }
    if !(0.0..1.0).contains(&opts.overlap) {
        return Err(AnalysisError::InvalidOption("overlap must lie in [0, 1)".into()));
    }
    let step = ((n as f64) * (1.0 - opts.overlap)).round().max(1.0) as usize;
    let len = series.samples.len();
    let segments = if len >= n { (len - n) / step + 1 } else { 0 };
    if segments < 4 {
        return Err(AnalysisError::TooShort {
            got: len,
            segment_len: n,
            segments,
        });
    }
    let fs = 1.0 / series.dt;
    let mean = series.mean();
    let w = opts.window.coefficients(n);
    let w2: f64 = w.iter().map(|v| v * v).sum();
    let w1: f64 = w.iter().sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let half = n / 2;
    let mut acc = vec![0.0; half + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for s in 0..segments {
        let off = s * step;
        for i in 0..n {
            buf[i] = Complex::new((series.samples[off + i] - mean) * w[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let p = buf[k].norm_sqr();
            let two_sided = k != 0 && !(n % 2 == 0 && k == half);
            *a += if two_sided { 2.0 * p } else { p };
        }
    }
    let scale = 1.0 / (fs * w2 * segments as f64);
    Ok(Spectrum {
        frequencies: (0..=half).map(|k| k as f64 * fs / n as f64).collect(),
        densities: acc.into_iter().map(|a| a * scale).collect(),
        resolution_bandwidth: fs * w2 / (w1 * w1),
        averages: segments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LorentzianPolicy {
    /// After the first pass, restrict the fit to `f0 ± k·HWHM` of the
    /// previous estimate; `None` keeps every bin except DC.
    pub window_halfwidths: Option<f64>,
    pub min_snr: f64,
    pub max_iterations: usize,
    /// Refits with weights `1/L(f)` from the previous pass, matching the
    /// constant relative scatter of an averaged periodogram.
    pub reweight_passes: usize,
}

impl Default for LorentzianPolicy {
    fn default() -> Self {
        LorentzianPolicy {
            window_halfwidths: Some(3.0),
            min_snr: 3.0,
            max_iterations: 200,
            reweight_passes: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center_hz: f64,
    /// Full width at half maximum, Hz. Equals the damping rate Γ/2π.
    pub width_hz: f64,
    pub amplitude: f64,
    pub background: f64,
    pub width_ci95: (f64, f64),
    pub iterations: usize,
    pub residual_norm: f64,
    pub snr: f64,
}

impl LorentzianFit {
    /// Damping rate Γ in rad/s.
    pub fn gamma(&self) -> AngularRate {
        AngularRate::from_hz(self.width_hz)
    }

    pub fn evaluate(&self, f: f64) -> f64 {
        lorentzian(self.amplitude, self.center_hz, self.width_hz / 2.0, self.background, f)
    }
}

/// `A·h²/((f−f0)² + h²) + B` with half-width `h = Γ/4π`.
pub fn lorentzian(amplitude: f64, center: f64, half_width: f64, background: f64, f: f64) -> f64 {
    let h2 = half_width * half_width;
    amplitude * h2 / ((f - center).powi(2) + h2) + background
}

fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Peak prominence over the spectral median, `(max − median)/median`.
pub fn peak_snr(densities: &[f64]) -> f64 {
    let max = densities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let med = median(densities);
    if med > 0.0 {
        (max - med) / med
    } else if max > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Nonlinear least-squares Lorentzian fit.
///
/// Initial guesses: centre at the highest bin, background at the 10th
/// percentile, amplitude as the excess of the peak over background, and
/// half-width from the half-maximum crossings around the peak.
pub fn fit_lorentzian(spec: &Spectrum, policy: &LorentzianPolicy) -> Result<LorentzianFit> {
    let (freqs, dens): (Vec<f64>, Vec<f64>) = spec
        .frequencies
        .iter()
        .zip(&spec.densities)
        .skip(1)
        .map(|(f, d)| (*f, *d))
        .unzip();
    if freqs.len() < 8 {
        return Err(AnalysisError::TooFewPoints {
            needed: 8,
            got: freqs.len(),
        });
    }
    let snr = peak_snr(&dens);
    if !(snr >= policy.min_snr) {
        return Err(AnalysisError::NoPeak {
            snr,
            required: policy.min_snr,
        });
    }
    let f_scale = freqs[freqs.len() - 1];
    let s_scale = dens.iter().copied().fold(0.0, f64::max);
    let x: Vec<f64> = freqs.iter().map(|f| f / f_scale).collect();
    let y: Vec<f64> = dens.iter().map(|d| d / s_scale).collect();

    // guesses come from a lightly smoothed copy so single noisy bins do not
    // set the width
    let ys_smooth = smooth(&y, 2);
    let ipk = ys_smooth
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let mut sorted = ys_smooth.clone();
    sorted.sort_by(f64::total_cmp);
    let b0 = sorted[sorted.len() / 10];
    let a0 = (ys_smooth[ipk] - b0).max(f64::MIN_POSITIVE);
    let half_level = b0 + a0 / 2.0;
    let left = (0..ipk).rev().find(|&i| ys_smooth[i] < half_level);
    let right = (ipk + 1..y.len()).find(|&i| ys_smooth[i] < half_level);
    let dx = x[1] - x[0];
    let h0 = match (left, right) {
        (Some(l), Some(r)) => 0.5 * (x[r] - x[l]),
        (Some(l), None) => x[ipk] - x[l],
        (None, Some(r)) => x[r] - x[ipk],
        (None, None) => 0.25 * (x[x.len() - 1] - x[0]),
    }
    .max(dx);

    let opts = LmOptions {
        max_iterations: policy.max_iterations,
        ..LmOptions::default()
    };
    let run = |p0: DVector<f64>, xs: &[f64], ys: &[f64], weights: &[f64]| {
        let res = |q: &DVector<f64>| {
            DVector::from_iterator(
                xs.len(),
                xs.iter()
                    .zip(ys)
                    .zip(weights)
                    .map(|((&xi, &yi), &w)| w * (lorentzian(q[0], q[1], q[2], q[3], xi) - yi)),
            )
        };
        let jac = |q: &DVector<f64>| {
            DMatrix::from_fn(xs.len(), 4, |i, j| {
                let d = xs[i] - q[1];
                let h2 = q[2] * q[2];
                let den = d * d + h2;
                weights[i]
                    * match j {
                        0 => h2 / den,
                        1 => q[0] * h2 * 2.0 * d / (den * den),
                        2 => q[0] * 2.0 * q[2] * d * d / (den * den),
                        _ => 1.0,
                    }
            })
        };
        lsq::levenberg_marquardt(p0, res, jac, &opts)
    };

    // unweighted pass over the whole spectrum
    let mut last = run(
        DVector::from_vec(vec![a0, x[ipk], h0, b0]),
        &x,
        &y,
        &vec![1.0; x.len()],
    )?;
    let mut p = last.params.clone();
    for _ in 0..policy.reweight_passes {
        let (lo, hi) = match policy.window_halfwidths {
            Some(k) => {
                let reach = k * p[2].abs().max(dx);
                let lo = x.partition_point(|&v| v < p[1] - reach);
                let hi = x.partition_point(|&v| v <= p[1] + reach);
                if hi < lo + 8 {
                    let c = x.partition_point(|&v| v < p[1]).min(x.len() - 1);
                    let lo = c.saturating_sub(4);
                    (lo, (lo + 8).min(x.len()))
                } else {
                    (lo, hi)
                }
            }
            None => (0, x.len()),
        };
        let xs = &x[lo..hi];
        let ys = &y[lo..hi];
        let weights: Vec<f64> = xs
            .iter()
            .map(|&xi| 1.0 / lorentzian(p[0], p[1], p[2], p[3], xi).abs().max(1e-12))
            .collect();
        last = run(p.clone(), xs, ys, &weights)?;
        p = last.params.clone();
    }
    let fit = last;
    let half = p[2].abs();
    let t = lsq::t_quantile(0.95, fit.dof);
    let se_h = fit.std_error(2).unwrap_or(f64::NAN);
    let width = 2.0 * half * f_scale;
    let ci = (
        2.0 * (half - t * se_h) * f_scale,
        2.0 * (half + t * se_h) * f_scale,
    );
    Ok(LorentzianFit {
        center_hz: p[1] * f_scale,
        width_hz: width,
        amplitude: p[0] * s_scale,
        background: p[3] * s_scale,
        width_ci95: ci,
        iterations: fit.iterations,
        residual_norm: fit.residual_norm(),
        snr,
    })
}

/// Frequency bins per fitted linewidth targeted by [`estimate_damping`].
pub const BINS_PER_LINEWIDTH: f64 = 40.0;

/// Two-stage damping measurement on a detector or position series.
///
/// A coarse spectrum (`coarse_segment` samples per segment) gives a first
/// linewidth; the final spectrum uses segments long enough to put
/// [`BINS_PER_LINEWIDTH`] bins across it, limited so that at least eight
/// half-overlapping Hann segments remain.
pub fn estimate_damping(
    series: &TimeSeries,
    coarse_segment: usize,
    policy: &LorentzianPolicy,
) -> Result<(Spectrum, LorentzianFit)> {
    let coarse_opts = PsdOptions {
        segment_len: coarse_segment,
        overlap: 0.5,
        window: Window::Hann,
    };
    let coarse = power_spectral_density(series, &coarse_opts)?;
    let first = fit_lorentzian(&coarse, policy)?;
    let fs = 1.0 / series.dt;
    let wanted = (BINS_PER_LINEWIDTH * fs / first.width_hz.max(coarse.bin_width())).ceil() as usize;
    let cap = series.len() * 2 / 9;
    let mut seg = wanted.next_power_of_two().max(coarse_segment);
    while seg > cap && seg > coarse_segment {
        seg /= 2;
    }
    if seg == coarse_segment {
        return Ok((coarse, first));
    }
    let spec = power_spectral_density(
        series,
        &PsdOptions {
            segment_len: seg,
            ..coarse_opts
        },
    )?;
    let fit = fit_lorentzian(&spec, policy)?;
    Ok((spec, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Result {
    pub g2_zero: f64,
    /// Poissonian uncertainty `g²(0)·√(1/N₀ + 1/N_side)`.
    pub error: f64,
    pub zero_lag_coincidences: u64,
    pub side_coincidences: u64,
    pub side_mean: f64,
    /// `(lag in pulses, coincidences)` for lags in `[-max_lag, max_lag]`.
    pub histogram: Vec<(i64, u64)>,
    pub warnings: Vec<String>,
}

/// Minimum number of events below which g²(0) carries a warning.
pub const G2_RECOMMENDED_EVENTS: usize = 10_000;

fn pulse_runs(stream: &TimeTagStream, channel: u8, period: f64) -> Vec<(i64, u64)> {
    let mut runs: Vec<(i64, u64)> = Vec::new();
    for e in stream.events.iter().filter(|e| e.channel == channel) {
        let p = (e.time / period).round() as i64;
        match runs.last_mut() {
            Some((q, c)) if *q == p => *c += 1,
            _ => runs.push((p, 1)),
        }
    }
    runs.sort_unstable_by_key(|r| r.0);
    // merge duplicates left by jitter reordering
    let mut merged: Vec<(i64, u64)> = Vec::with_capacity(runs.len());
    for (p, c) in runs {
        match merged.last_mut() {
            Some((q, n)) if *q == p => *n += c,
            _ => merged.push((p, c)),
        }
    }
    merged
}

/// Pulse-resolved cross-correlation between detectors 0 and 1.
///
/// Coincidence pairs are histogrammed by pulse lag; g²(0) is the zero-lag
/// count over the mean count of lags `1 ≤ |lag| ≤ max_lag`.
pub fn g2_zero(stream: &TimeTagStream, pulse_period: f64, max_lag: i64) -> Result<G2Result> {
    if !(pulse_period > 0.0) || max_lag < 1 {
        return Err(AnalysisError::InvalidOption(
            "pulse period must be positive and max lag at least 1".into(),
        ));
    }
    let a = pulse_runs(stream, 0, pulse_period);
    let b = pulse_runs(stream, 1, pulse_period);
    if a.is_empty() {
        return Err(AnalysisError::EmptyChannel(0));
    }
    if b.is_empty() {
        return Err(AnalysisError::EmptyChannel(1));
    }
    let m = max_lag;
    let mut hist = vec![0u64; (2 * m + 1) as usize];
    let mut start = 0usize;
    for &(p, ca) in &a {
        while start < b.len() && b[start].0 < p - m {
            start += 1;
        }
        let mut j = start;
        while j < b.len() && b[j].0 <= p + m {
            hist[(b[j].0 - p + m) as usize] += ca * b[j].1;
            j += 1;
        }
    }
    let zero = hist[m as usize];
    let side: u64 = hist
        .iter()
        .enumerate()
        .filter(|(i, _)| *i as i64 != m)
        .map(|(_, c)| *c)
        .sum();
    if side == 0 {
        return Err(AnalysisError::NoSideCoincidences(m));
    }
    let side_mean = side as f64 / (2 * m) as f64;
    let g2 = zero as f64 / side_mean;
    // with no zero-lag counts the one-count Poisson bound sets the error
    let n0 = (zero as f64).max(1.0);
    let error = (n0 / side_mean.powi(2) + g2 * g2 / side as f64).sqrt();
    let mut warnings = Vec::new();
    if stream.len() < G2_RECOMMENDED_EVENTS {
        warnings.push(format!(
            "only {} events; at least {} are recommended",
            stream.len(),
            G2_RECOMMENDED_EVENTS
        ));
    }
    Ok(G2Result {
        g2_zero: g2,
        error,
        zero_lag_coincidences: zero,
        side_coincidences: side,
        side_mean,
        histogram: hist
            .into_iter()
            .enumerate()
            .map(|(i, c)| (i as i64 - m, c))
            .collect(),
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlinkClass {
    GreyStatePeak,
    ExponentialBurst,
    TwoState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlinkOptions {
    pub bin_width: f64,
    pub min_bins: usize,
    /// Minimum R² of the log-linear fit for a clean burst classification.
    pub burst_r2: f64,
    /// Required peak prominence in units of the smoothed histogram's
    /// Poisson standard error.
    pub prominence_sigma: f64,
}

impl Default for BlinkOptions {
    fn default() -> Self {
        BlinkOptions {
            bin_width: 500e-6,
            min_bins: 1000,
            burst_r2: 0.95,
            prominence_sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPeak {
    /// Counts per bin at the peak centre.
    pub mean_counts: f64,
    /// Count rate at the peak centre, 1/s.
    pub mean_rate: f64,
    /// RMS width of the fitted Gaussian, 1/s.
    pub rms_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlinkHistogram {
    pub bin_width: f64,
    /// `histogram[c]` = number of bins holding `c` detections.
    pub histogram: Vec<u64>,
    pub classification: BlinkClass,
    /// Lowest-rate prominent peak, identified with the grey state.
    pub grey_peak: Option<GaussianPeak>,
    /// Highest-rate prominent peak when two states are resolved.
    pub bright_peak: Option<GaussianPeak>,
    /// R² of the log-linear fit to the histogram.
    pub log_linear_r2: Option<f64>,
    pub warnings: Vec<String>,
}

fn smooth(h: &[f64], w: usize) -> Vec<f64> {
    (0..h.len())
        .map(|i| {
            let lo = i.saturating_sub(w);
            let hi = (i + w).min(h.len() - 1);
            h[lo..=hi].iter().sum::<f64>() / (2 * w + 1) as f64
        })
        .collect()
}

/// Peaks at nonzero count with topographic prominence above `k·σ`.
fn prominent_peaks(s: &[f64], w: usize, k: f64) -> Vec<(usize, usize, usize)> {
    let n = s.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i < n {
        let left_ok = s[i] > s[i - 1];
        // walk over plateaus
        let mut j = i;
        while j + 1 < n && s[j + 1] == s[i] {
            j += 1;
        }
        let right_ok = j + 1 >= n || s[j + 1] < s[i];
        if left_ok && right_ok && s[i] > 0.0 {
            let c = (i + j) / 2;
            let mut l = c;
            let mut lmin = s[c];
            let mut lmin_at = c;
            // ties stop the walk on the left only, so of two equal maxima
            // just one keeps its full prominence
            while l > 0 && s[l - 1] < s[c] {
                l -= 1;
                if s[l] < lmin {
                    lmin = s[l];
                    lmin_at = l;
                }
            }
            let mut r = c;
            let mut rmin = s[c];
            let mut rmin_at = c;
            while r + 1 < n && s[r + 1] <= s[c] {
                r += 1;
                if s[r] < rmin {
                    rmin = s[r];
                    rmin_at = r;
                }
            }
            let prominence = s[c] - lmin.max(rmin);
            let sigma = (s[c] / (2 * w + 1) as f64).sqrt().max(1.0 / (2 * w + 1) as f64);
            if prominence > k * sigma {
                out.push((c, lmin_at, rmin_at));
            }
        }
        i = j + 1;
    }
    out
}

fn fit_gaussian_peak(h: &[f64], center: usize, lo: usize, hi: usize, bin_width: f64) -> Option<GaussianPeak> {
    let sd0 = (center as f64).sqrt().max(1.0);
    let span = (3.0 * sd0).ceil() as usize;
    let lo = lo.max(center.saturating_sub(span));
    let hi = hi.min(center + span).min(h.len() - 1);
    if hi <= lo + 2 {
        return Some(GaussianPeak {
            mean_counts: center as f64,
            mean_rate: center as f64 / bin_width,
            rms_width: sd0 / bin_width,
        });
    }
    let xs: Vec<f64> = (lo..=hi).map(|c| c as f64).collect();
    let ys: Vec<f64> = (lo..=hi).map(|c| h[c]).collect();
    let amp0 = ys.iter().copied().fold(0.0, f64::max);
    let res = |q: &DVector<f64>| {
        DVector::from_iterator(
            xs.len(),
            xs.iter()
                .zip(&ys)
                .map(|(&x, &y)| q[0] * (-(x - q[1]).powi(2) / (2.0 * q[2] * q[2])).exp() - y),
        )
    };
    let jac = |q: &DVector<f64>| {
        DMatrix::from_fn(xs.len(), 3, |i, j| {
            let d = xs[i] - q[1];
            let e = (-d * d / (2.0 * q[2] * q[2])).exp();
            match j {
                0 => e,
                1 => q[0] * e * d / (q[2] * q[2]),
                _ => q[0] * e * d * d / q[2].powi(3),
            }
        })
    };
    let start = DVector::from_vec(vec![amp0, center as f64, sd0]);
    let fit = lsq::levenberg_marquardt(start, res, jac, &LmOptions::default()).ok()?;
    let mu = fit.params[1];
    let sd = fit.params[2].abs();
    if !mu.is_finite() || mu < lo as f64 - 1.0 || mu > hi as f64 + 1.0 {
        return None;
    }
    Some(GaussianPeak {
        mean_counts: mu,
        mean_rate: mu / bin_width,
        rms_width: sd / bin_width,
    })
}

fn log_linear_r2(h: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(c, v)| (c as f64, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let line = lsq::linear_regression(&x, &y).ok()?;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let rss: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - line.intercept - line.slope * a).powi(2))
        .sum();
    Some(if tss > 0.0 { 1.0 - rss / tss } else { 1.0 })
}

/// Bin detections into fixed intervals and classify the count-rate histogram.
pub fn blink_analysis(stream: &TimeTagStream, opts: &BlinkOptions) -> Result<BlinkHistogram> {
    if !(opts.bin_width > 0.0) {
        return Err(AnalysisError::InvalidOption("bin width must be positive".into()));
    }
    let n_bins = (stream.duration / opts.bin_width).floor() as usize;
    if n_bins < opts.min_bins {
        return Err(AnalysisError::TooFewBins {
            bins: n_bins,
            bin_width: opts.bin_width,
            required: opts.min_bins,
        });
    }
    let mut counts = vec![0u64; n_bins];
    for e in &stream.events {
        let b = (e.time / opts.bin_width).floor() as usize;
        if b < n_bins {
            counts[b] += 1;
        }
    }
    let max = counts.iter().copied().max().unwrap_or(0) as usize;
    let mut histogram = vec![0u64; max + 2];
    for &c in &counts {
        histogram[c as usize] += 1;
    }
    let hf: Vec<f64> = histogram.iter().map(|&v| v as f64).collect();
    let mean_count = counts.iter().sum::<u64>() as f64 / n_bins as f64;
    let w = ((mean_count.sqrt() / 2.0).floor() as usize).max(1);
    let s = smooth(&hf, w);
    let peaks = prominent_peaks(&s, w, opts.prominence_sigma);
    let r2 = log_linear_r2(&hf);
    let mut warnings = Vec::new();

    let classification = match peaks.len() {
        0 => {
            if r2.is_none_or(|v| v < opts.burst_r2) {
                warnings.push(format!(
                    "no peak at nonzero rate, but the log-linear fit is poor (R² = {:?})",
                    r2
                ));
            }
            BlinkClass::ExponentialBurst
        }
        1 => BlinkClass::GreyStatePeak,
        _ => BlinkClass::TwoState,
    };
    let peak_fit = |(c, l, r): (usize, usize, usize)| fit_gaussian_peak(&hf, c, l, r, opts.bin_width);
    let grey_peak = peaks.first().copied().and_then(peak_fit);
    let bright_peak = if peaks.len() >= 2 {
        peaks.last().copied().and_then(peak_fit)
    } else {
        None
    };
    Ok(BlinkHistogram {
        bin_width: opts.bin_width,
        histogram,
        classification,
        grey_peak,
        bright_peak,
        log_linear_r2: r2,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub p_sat: Power,
    pub p_sat_stderr: Power,
    /// Asymptotic count rate `C`.
    pub amplitude: f64,
    pub amplitude_stderr: f64,
    pub warnings: Vec<String>,
}

/// Fit `rate = C·(1 − exp(−P/P_sat))`.
///
/// A log-spaced scan over `P_sat` (with `C` solved linearly at each point)
/// seeds the nonlinear refinement.
pub fn fit_saturation(points: &[(Power, f64)]) -> Result<SaturationFit> {
    if points.len() < 4 {
        return Err(AnalysisError::TooFewPoints {
            needed: 4,
            got: points.len(),
        });
    }
    if points.iter().any(|(p, r)| !p.is_finite_positive() || !r.is_finite()) {
        return Err(AnalysisError::InvalidOption(
            "powers must be positive and rates finite".into(),
        ));
    }
    let p_scale = points.iter().map(|(p, _)| p.0).fold(0.0, f64::max);
    let r_scale = points.iter().map(|(_, r)| r.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let xs: Vec<f64> = points.iter().map(|(p, _)| p.0 / p_scale).collect();
    let ys: Vec<f64> = points.iter().map(|(_, r)| r / r_scale).collect();

    let best_c = |ps: f64| {
        let g: Vec<f64> = xs.iter().map(|x| 1.0 - (-x / ps).exp()).collect();
        let c = g.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>() / g.iter().map(|a| a * a).sum::<f64>();
        let rss: f64 = g.iter().zip(&ys).map(|(a, b)| (c * a - b).powi(2)).sum();
        (c, rss)
    };
    let (mut ps0, mut c0, mut rss0) = (1.0, 1.0, f64::INFINITY);
    for i in 0..=400 {
        let ps = 10f64.powf(-3.0 + 6.0 * i as f64 / 400.0);
        let (c, rss) = best_c(ps);
        if rss < rss0 {
            ps0 = ps;
            c0 = c;
            rss0 = rss;
        }
    }
    let res = |q: &DVector<f64>| {
        DVector::from_iterator(
            xs.len(),
            xs.iter()
                .zip(&ys)
                .map(|(&x, &y)| q[0] * (1.0 - (-x / q[1]).exp()) - y),
        )
    };
    let jac = |q: &DVector<f64>| {
        DMatrix::from_fn(xs.len(), 2, |i, j| {
            let e = (-xs[i] / q[1]).exp();
            if j == 0 {
                1.0 - e
            } else {
                -q[0] * e * xs[i] / (q[1] * q[1])
            }
        })
    };
    let mut warnings = Vec::new();
    let (c, ps, se_c, se_ps) = match lsq::levenberg_marquardt(
        DVector::from_vec(vec![c0, ps0]),
        res,
        jac,
        &LmOptions::default(),
    ) {
        Ok(fit) if fit.params[1] > 0.0 => (
            fit.params[0],
            fit.params[1],
            fit.std_error(0).unwrap_or(f64::NAN),
            fit.std_error(1).unwrap_or(f64::NAN),
        ),
        Ok(_) | Err(_) => {
            warnings.push("nonlinear refinement failed; reporting the scan optimum".into());
            (c0, ps0, f64::NAN, f64::NAN)
        }
    };
    let min_x = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max_x = xs.iter().copied().fold(0.0, f64::max);
    if max_x < ps || min_x > ps {
        warnings.push(format!(
            "ill-conditioned: measured powers [{:.3e}, {:.3e}] W do not bracket the fitted P_sat {:.3e} W",
            min_x * p_scale,
            max_x * p_scale,
            ps * p_scale
        ));
    }
    Ok(SaturationFit {
        p_sat: Power(ps * p_scale),
        p_sat_stderr: Power(se_ps * p_scale),
        amplitude: c * r_scale,
        amplitude_stderr: se_c * r_scale,
        warnings,
    })
}
