//! Power spectral densities of complex slow-amplitude series.
//!
//! Conventions: for samples x_n at spacing dt the transform is
//! X(ν) = Σ x_n w_n e^{+iνt_n}, so a component e^{−iνt} appears at +ν, the
//! same sense of rotation as the mechanical motion e^{−iωt}. Frequencies are
//! angular. A periodogram is (dt/U)|X(ν)|² with U = Σ w_n², which keeps the
//! level of white noise of variance σ² at σ²·dt for every window, and
//! Σ psd·Δν/2π equals the mean power. Reported frequencies are absolute:
//! frame frequency (Δ₂) plus baseband ν.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

type C64 = Complex64;

/// Minimum series length for [`autocorr_spectrum`].
pub const MIN_AUTOCORR_SAMPLES: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Blackman,
    Hann,
    Rect,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let tau = 2.0 * std::f64::consts::PI / n as f64;
        (0..n)
            .map(|k| {
                let x = tau * k as f64;
                match self {
                    Window::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
                    Window::Hann => 0.5 - 0.5 * x.cos(),
                    Window::Rect => 1.0,
                }
            })
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Blackman => "blackman",
            Window::Hann => "hann",
            Window::Rect => "rect",
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blackman" => Ok(Window::Blackman),
            "hann" => Ok(Window::Hann),
            "rect" => Ok(Window::Rect),
            other => Err(Error::config(format!("unknown window `{other}` (blackman, hann, rect)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Detrend {
    None,
    #[default]
    Mean,
}

/// Welch segmentation, with durations in units of 1/`gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchConfig {
    pub segment_length: f64,
    /// Duration shared by consecutive segments; the stride is
    /// `segment_length − overlap`.
    pub overlap: f64,
    pub window: Window,
    pub detrend: Detrend,
    /// Rate defining the duration unit, normally the mechanical damping γ.
    pub gamma: f64,
}

impl WelchConfig {
    /// Segments of 5/γ overlapping by 2/γ, Blackman window, mean removed.
    pub fn new(gamma: f64) -> Self {
        WelchConfig {
            segment_length: 5.0,
            overlap: 2.0,
            window: Window::Blackman,
            detrend: Detrend::Mean,
            gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::config("Welch reference rate must be positive"));
        }
        if !(self.segment_length > 0.0) || !(self.overlap >= 0.0) || self.overlap >= self.segment_length {
            return Err(Error::config(format!(
                "need 0 <= overlap < segment_length (got {} and {})",
                self.overlap, self.segment_length
            )));
        }
        Ok(())
    }

    /// Segment length and stride in samples.
    pub fn layout(&self, dt: f64) -> Result<(usize, usize)> {
        self.validate()?;
        let seg = (self.segment_length / self.gamma / dt).round() as usize;
        let stride = ((self.segment_length - self.overlap) / self.gamma / dt).round() as usize;
        if seg < 8 || stride == 0 {
            return Err(Error::config(format!(
                "segment of {seg} samples (stride {stride}) is too short for dt = {dt}"
            )));
        }
        Ok((seg, stride))
    }

    /// Number of whole segments in a series of `n` samples.
    pub fn segment_count(&self, n: usize, dt: f64) -> Result<usize> {
        let (seg, stride) = self.layout(dt)?;
        Ok(if n < seg { 0 } else { (n - seg) / stride + 1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    PeakNormalized,
}

/// PSD on the full baseband grid, frequencies ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Absolute angular frequencies, frame frequency plus baseband.
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
    pub normalization: Normalization,
    /// `None` for the autocorrelation estimate.
    pub window_meta: Option<WelchConfig>,
    pub n_segments: usize,
    pub frame_freq: f64,
    /// Sample spacing of the analysed series.
    pub dt: f64,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.freqs.len() as f64 * self.dt)
    }

    pub fn window(&self) -> Window {
        self.window_meta.map(|c| c.window).unwrap_or(Window::Rect)
    }

    /// Pointwise mean of spectra on the same grid (e.g. over seeds).
    pub fn average(spectra: &[Spectrum]) -> Result<Spectrum> {
        let first = spectra.first().ok_or_else(|| Error::config("no spectra to average"))?;
        let mut out = first.clone();
        for s in &spectra[1..] {
            if s.freqs.len() != first.freqs.len() || s.dt != first.dt || s.frame_freq != first.frame_freq {
                return Err(Error::config("spectra to average are on different grids"));
            }
            for (a, b) in out.psd.iter_mut().zip(&s.psd) {
                *a += b;
            }
            out.n_segments += s.n_segments;
        }
        let k = spectra.len() as f64;
        out.psd.iter_mut().for_each(|v| *v /= k);
        Ok(out)
    }
}

struct Transform {
    fft: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
}

impl Transform {
    /// Length-`n` transform with kernel e^{+2πikm/n}.
    fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft(n, FftDirection::Inverse);
        let scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        Transform { fft, scratch }
    }

    fn run(&mut self, buf: &mut [C64]) {
        self.fft.process_with_scratch(buf, &mut self.scratch);
    }
}

/// Bin k of an n-point transform sits at baseband 2πk/(n dt); return the
/// grid in ascending order together with the matching bin permutation.
fn ordered_grid(n: usize, dt: f64, frame: f64) -> (Vec<f64>, Vec<usize>) {
    let dw = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    let neg = n / 2;
    let order: Vec<usize> = (n - neg..n).chain(0..n - neg).collect();
    let freqs = order
        .iter()
        .map(|&k| {
            let signed = if k >= n - neg { k as f64 - n as f64 } else { k as f64 };
            frame + signed * dw
        })
        .collect();
    (freqs, order)
}

/// Wiener–Khinchin estimate: biased autocorrelation, then its transform on
/// the N-point grid (resolution 2π/(N dt)).
pub fn autocorr_spectrum(series: &[C64], dt: f64, frame_freq: f64) -> Result<Spectrum> {
    let n = series.len();
    if n < MIN_AUTOCORR_SAMPLES {
        return Err(Error::config(format!(
            "autocorrelation spectrum needs at least {MIN_AUTOCORR_SAMPLES} samples, got {n}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::config("dt must be positive"));
    }
    // r_j = (1/N) Σ x_{m+j} x_m*, via a zero-padded transform.
    let l = (2 * n).next_power_of_two();
    let mut buf: Vec<C64> = series.iter().copied().chain(std::iter::repeat(C64::new(0.0, 0.0))).take(l).collect();
    FftPlanner::new().plan_fft_forward(l).process(&mut buf);
    for v in buf.iter_mut() {
        *v = C64::new(v.norm_sqr(), 0.0);
    }
    Transform::new(l).run(&mut buf);
    let scale = 1.0 / (l as f64 * n as f64);
    let r = |j: isize| -> C64 {
        if j >= 0 {
            buf[j as usize] * scale
        } else {
            buf[(l as isize + j) as usize] * scale
        }
    };
    // Fold lags onto the N-periodic grid: c_j = r_j + r_{j−N}.
    let mut c: Vec<C64> = (0..n as isize).map(|j| r(j) + if j > 0 { r(j - n as isize) } else { C64::new(0.0, 0.0) }).collect();
    Transform::new(n).run(&mut c);
    let (freqs, order) = ordered_grid(n, dt, frame_freq);
    let psd = order.iter().map(|&k| (c[k].re * dt).max(0.0)).collect();
    Ok(Spectrum {
        freqs,
        psd,
        normalization: Normalization::Raw,
        window_meta: None,
        n_segments: 1,
        frame_freq,
        dt,
    })
}

/// Welch estimate: mean of windowed, overlapping segment periodograms.
pub fn welch_spectrum(series: &[C64], dt: f64, frame_freq: f64, cfg: &WelchConfig) -> Result<Spectrum> {
    if !(dt > 0.0) {
        return Err(Error::config("dt must be positive"));
    }
    let (seg, stride) = cfg.layout(dt)?;
    let count = cfg.segment_count(series.len(), dt)?;
    if count < 2 {
        return Err(Error::config(format!(
            "only {count} Welch segment(s) of {seg} samples fit in {} samples; at least 2 are needed",
            series.len()
        )));
    }
    let w = cfg.window.coefficients(seg);
    let u: f64 = w.iter().map(|v| v * v).sum();
    let mut fft = Transform::new(seg);
    let mut acc = vec![0.0f64; seg];
    let mut buf = vec![C64::new(0.0, 0.0); seg];
    for s in 0..count {
        let chunk = &series[s * stride..s * stride + seg];
        let mean = match cfg.detrend {
            Detrend::Mean => chunk.iter().sum::<C64>() / seg as f64,
            Detrend::None => C64::new(0.0, 0.0),
        };
        for ((b, x), wk) in buf.iter_mut().zip(chunk).zip(&w) {
            *b = (x - mean) * wk;
        }
        fft.run(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let scale = dt / (u * count as f64);
    let (freqs, order) = ordered_grid(seg, dt, frame_freq);
    let psd = order.iter().map(|&k| acc[k] * scale).collect();
    Ok(Spectrum {
        freqs,
        psd,
        normalization: Normalization::Raw,
        window_meta: Some(*cfg),
        n_segments: count,
        frame_freq,
        dt,
    })
}

/// Real quadrature of a complex series, for cross-checks against the complex spectrum.
pub fn real_quadrature(series: &[C64]) -> Vec<C64> {
    series.iter().map(|z| C64::new(z.re, 0.0)).collect()
}

/// Scale the spectrum so its maximum is 1.
pub fn normalize_peak(spec: &Spectrum) -> Result<Spectrum> {
    let max = spec.psd.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::domain("cannot normalize a spectrum without a positive peak"));
    }
    let mut out = spec.clone();
    out.psd.iter_mut().for_each(|v| *v /= max);
    out.normalization = Normalization::PeakNormalized;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeakMethod {
    Argmax,
    #[default]
    Parabolic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakEstimate {
    pub omega_peak: f64,
    pub height: f64,
    pub method: PeakMethod,
    pub uncertainty: f64,
    /// The band holds no clear maximum; `uncertainty` spans the band.
    pub low_confidence: bool,
}

/// Search constraints for [`find_peak`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSearch {
    /// Absolute frequency interval.
    pub band: (f64, f64),
    /// Absolute frequency to exclude together with `exclude_bins` bins on each side.
    pub exclude: Option<f64>,
    pub exclude_bins: usize,
}

impl PeakSearch {
    pub fn band(lo: f64, hi: f64) -> Self {
        PeakSearch {
            band: (lo, hi),
            exclude: None,
            exclude_bins: 5,
        }
    }

    /// Also skip ±5 bins around `freq` (a coherent drive line).
    pub fn excluding(mut self, freq: f64) -> Self {
        self.exclude = Some(freq);
        self
    }
}

/// Peak-to-median ratio below which a band counts as featureless.
pub const MIN_PROMINENCE: f64 = 2.0;

/// Locate the spectral maximum inside a band.
pub fn find_peak(spec: &Spectrum, search: &PeakSearch, method: PeakMethod) -> Result<PeakEstimate> {
    let (lo, hi) = search.band;
    let dw = spec.bin_width();
    let excluded = |k: usize| match search.exclude {
        Some(f) => (spec.freqs[k] - f).abs() <= (search.exclude_bins as f64 + 0.5) * dw,
        None => false,
    };
    let idx: Vec<usize> = (0..spec.freqs.len())
        .filter(|&k| spec.freqs[k] >= lo && spec.freqs[k] <= hi && !excluded(k))
        .collect();
    if idx.is_empty() {
        return Err(Error::domain(format!("no spectral bins in band [{lo}, {hi}]")));
    }
    let &k0 = idx
        .iter()
        .max_by(|a, b| spec.psd[**a].total_cmp(&spec.psd[**b]))
        .expect("non-empty");
    let height = spec.psd[k0];

    let mut vals: Vec<f64> = idx.iter().map(|&k| spec.psd[k]).collect();
    let mid = vals.len() / 2;
    vals.select_nth_unstable_by(mid, f64::total_cmp);
    let median = vals[mid];
    if !(height > 0.0) || height < MIN_PROMINENCE * median {
        return Ok(PeakEstimate {
            omega_peak: spec.freqs[k0],
            height,
            method,
            uncertainty: 0.5 * (hi - lo),
            low_confidence: true,
        });
    }

    let neighbours_ok = k0 > 0
        && k0 + 1 < spec.freqs.len()
        && idx.contains(&(k0 - 1))
        && idx.contains(&(k0 + 1))
        && spec.psd[k0 - 1] > 0.0
        && spec.psd[k0 + 1] > 0.0;
    if method == PeakMethod::Argmax || !neighbours_ok {
        return Ok(PeakEstimate {
            omega_peak: spec.freqs[k0],
            height,
            method: PeakMethod::Argmax,
            uncertainty: 0.5 * dw,
            low_confidence: false,
        });
    }
    let (ym, y0, yp) = (spec.psd[k0 - 1].ln(), height.ln(), spec.psd[k0 + 1].ln());
    let curv = ym - 2.0 * y0 + yp;
    if !(curv < 0.0) {
        return Ok(PeakEstimate {
            omega_peak: spec.freqs[k0],
            height,
            method: PeakMethod::Argmax,
            uncertainty: 0.5 * dw,
            low_confidence: false,
        });
    }
    let delta = 0.5 * (ym - yp) / curv;
    // Width of the Gaussian matching the log-curvature, shrunk by the number
    // of averaged segments.
    let width = dw / (-curv).sqrt();
    Ok(PeakEstimate {
        omega_peak: spec.freqs[k0] + delta * dw,
        height: (y0 - 0.25 * (ym - yp) * delta).exp(),
        method: PeakMethod::Parabolic,
        uncertainty: width / (spec.n_segments.max(1) as f64).sqrt(),
        low_confidence: false,
    })
}

/// Lorentzian line fitted to a spectrum through the estimator's expected value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianFit {
    /// Absolute peak frequency.
    pub omega_peak: f64,
    pub hwhm: f64,
    /// Stationary variance C of the fitted process (R(0) = C).
    pub variance: f64,
    /// Mean squared log residual.
    pub cost: f64,
    pub n_bins: usize,
}

/// Fit a Lorentzian (exponentially correlated process) to the bins within
/// `half_width` (absolute frequency units) of the maximum.
///
/// The model is the exact expectation of the periodogram used to build the
/// spectrum, E[P(ν)] = (dt/U) Σ_m c_m R(m dt) e^{iνm dt} with c_m the
/// window autocorrelation and R(τ) = C e^{−iν₀τ − γ|τ|}, so window
/// broadening and leakage do not bias the width. Residuals are taken in
/// log space with the amplitude profiled out.
pub fn fit_lorentzian(spec: &Spectrum, half_width: f64) -> Result<LorentzianFit> {
    let n = spec.freqs.len();
    let (_, order) = ordered_grid(n, spec.dt, spec.frame_freq);
    let &k_max = (0..n)
        .collect::<Vec<_>>()
        .iter()
        .max_by(|a, b| spec.psd[**a].total_cmp(&spec.psd[**b]))
        .ok_or_else(|| Error::Fit("empty spectrum".into()))?;
    let centre = spec.freqs[k_max];
    let bins: Vec<usize> = (0..n)
        .filter(|&k| (spec.freqs[k] - centre).abs() <= half_width && spec.psd[k] > 0.0)
        .collect();
    if bins.len() < 5 {
        return Err(Error::Fit(format!("only {} bins inside the fit window", bins.len())));
    }
    let w = spec.window().coefficients(n);
    let u: f64 = w.iter().map(|v| v * v).sum();
    let c = window_autocorrelation(&w);
    let mut fft = Transform::new(2 * n);
    let log_data: Vec<f64> = bins.iter().map(|&k| spec.psd[k].ln()).collect();

    // Unit-variance model on the ordered grid.
    let mut model = |nu0: f64, gamma: f64| -> Vec<f64> {
        let mut v = vec![C64::new(0.0, 0.0); 2 * n];
        for (m, cm) in c.iter().enumerate() {
            let tau = m as f64 * spec.dt;
            let r = C64::from_polar((-gamma * tau).exp(), -nu0 * tau) * *cm;
            v[m] += r;
            if m > 0 {
                v[2 * n - m] += r.conj();
            }
        }
        fft.run(&mut v);
        bins.iter().map(|&k| v[2 * order[k]].re * spec.dt / u).collect()
    };
    let mut objective = |x: &[f64; 2]| -> (f64, f64) {
        let m = model(x[0], x[1].exp());
        if m.iter().any(|v| !(*v > 0.0)) {
            return (f64::INFINITY, 0.0);
        }
        let shift = log_data.iter().zip(&m).map(|(d, v)| d - v.ln()).sum::<f64>() / m.len() as f64;
        let cost = log_data
            .iter()
            .zip(&m)
            .map(|(d, v)| (d - v.ln() - shift).powi(2))
            .sum::<f64>()
            / m.len() as f64;
        (cost, shift)
    };

    let dw = spec.bin_width();
    let start = [centre - spec.frame_freq, dw.ln()];
    let steps = [0.5 * dw, 0.7];
    let best = nelder_mead(|x| objective(x).0, start, steps, 400, 1e-12);
    let (cost, shift) = objective(&best);
    if !cost.is_finite() {
        return Err(Error::Fit("Lorentzian fit did not find a valid model".into()));
    }
    Ok(LorentzianFit {
        omega_peak: spec.frame_freq + best[0],
        hwhm: best[1].exp(),
        variance: shift.exp(),
        cost,
        n_bins: bins.len(),
    })
}

/// c_m = Σ_n w_n w_{n+m} for m = 0..n−1.
fn window_autocorrelation(w: &[f64]) -> Vec<f64> {
    let n = w.len();
    let l = (2 * n).next_power_of_two();
    let mut buf: Vec<C64> = w.iter().map(|&v| C64::new(v, 0.0)).chain(std::iter::repeat(C64::new(0.0, 0.0))).take(l).collect();
    FftPlanner::new().plan_fft_forward(l).process(&mut buf);
    for v in buf.iter_mut() {
        *v = C64::new(v.norm_sqr(), 0.0);
    }
    FftPlanner::new().plan_fft_inverse(l).process(&mut buf);
    buf[..n].iter().map(|v| v.re / l as f64).collect()
}

/// Minimal Nelder–Mead simplex search in two dimensions.
fn nelder_mead(f: impl FnMut(&[f64; 2]) -> f64, start: [f64; 2], step: [f64; 2], max_iter: usize, tol: f64) -> [f64; 2] {
    let mut f = f;
    let mut pts = [start, [start[0] + step[0], start[1]], [start[0], start[1] + step[1]]];
    let mut vals = pts.map(|p| f(&p));
    for _ in 0..max_iter {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|a, b| vals[*a].total_cmp(&vals[*b]));
        pts = idx.map(|i| pts[i]);
        vals = idx.map(|i| vals[i]);
        if (vals[2] - vals[0]).abs() <= tol * (vals[0].abs() + tol) {
            break;
        }
        let centroid = [(pts[0][0] + pts[1][0]) / 2.0, (pts[0][1] + pts[1][1]) / 2.0];
        let along = |t: f64| [centroid[0] + t * (pts[2][0] - centroid[0]), centroid[1] + t * (pts[2][1] - centroid[1])];
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < vals[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                pts[2] = expanded;
                vals[2] = fe;
            } else {
                pts[2] = reflected;
                vals[2] = fr;
            }
        } else if fr < vals[1] {
            pts[2] = reflected;
            vals[2] = fr;
        } else {
            let contracted = if fr < vals[2] { along(-0.5) } else { along(0.5) };
            let fc = f(&contracted);
            if fc < vals[2].min(fr) {
                pts[2] = contracted;
                vals[2] = fc;
            } else {
                for i in 1..3 {
                    pts[i] = [(pts[i][0] + pts[0][0]) / 2.0, (pts[i][1] + pts[0][1]) / 2.0];
                    vals[i] = f(&pts[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|a, b| vals[*a].total_cmp(&vals[*b])).expect("three points");
    pts[best]
}
