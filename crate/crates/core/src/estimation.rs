//! Measurement protocol: scatter of (|Ā_b|², ω′) over drive powers, straight
//! line fit, β′_NL = slope/ω̄ and the resolution limit in β_NL.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::modes::{time_avg_amplitude, SlowAmplitudeSeries};
use crate::noise::NoiseSettings;
use crate::sde::{default_stride, simulate, IntegratorConfig, Scheme};
use crate::spectrum::{find_peak, welch_spectrum, PeakMethod, PeakSearch, WelchConfig};
use crate::units::SystemParams;

/// One measured point of the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    /// |Ā_b|², the squared time-averaged bright amplitude.
    pub amp_sq: f64,
    /// Dark-mode spectral peak ω′_b.
    pub omega_peak: f64,
    /// Peak-location uncertainty, giving the weight 1/σ².
    pub sigma_omega: f64,
    /// Drive power P_h in W (NaN for synthetic points).
    pub power: f64,
    pub seed: u64,
    pub stream: u64,
    pub low_confidence: bool,
}

impl ScatterPoint {
    pub fn new(amp_sq: f64, omega_peak: f64, sigma_omega: f64) -> Self {
        ScatterPoint {
            amp_sq,
            omega_peak,
            sigma_omega,
            power: f64::NAN,
            seed: 0,
            stream: 0,
            low_confidence: false,
        }
    }

    pub fn weight(&self) -> f64 {
        1.0 / (self.sigma_omega * self.sigma_omega)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScatterSet {
    pub points: Vec<ScatterPoint>,
}

impl ScatterSet {
    pub fn new(points: Vec<ScatterPoint>) -> Self {
        ScatterSet { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.points.len() < 3 {
            return Err(Error::Fit(format!("need at least 3 points, got {}", self.points.len())));
        }
        for p in &self.points {
            if !(p.amp_sq >= 0.0) || !p.omega_peak.is_finite() {
                return Err(Error::Fit(format!("invalid point ({}, {})", p.amp_sq, p.omega_peak)));
            }
            if !(p.sigma_omega > 0.0) || !p.sigma_omega.is_finite() {
                return Err(Error::Fit(format!("point uncertainty must be positive, got {}", p.sigma_omega)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub beta_nl_est: f64,
    pub r_squared: f64,
    /// 95% interval on β′_NL.
    pub ci95: (f64, f64),
    pub slope_stderr: f64,
    pub dof: usize,
    pub n_points: usize,
}

/// Weighted straight-line fit ω′ = intercept + slope·|Ā_b|², with β′_NL = slope/ω̄
/// for ω̄ = 1.
pub fn linear_fit(scatter: &ScatterSet) -> Result<FitResult> {
    linear_fit_with_reference(scatter, 1.0)
}

/// As [`linear_fit`] with an explicit mean mechanical frequency ω̄.
///
/// R² = 1 − Σw(y − ŷ)²/Σw(y − ȳ_w)², which is the unweighted definition when
/// all uncertainties agree. The slope error uses the residual scale, so the
/// interval does not depend on the absolute size of the uncertainties. When
/// all ω′ coincide R² is reported as 0.
pub fn linear_fit_with_reference(scatter: &ScatterSet, omega_bar: f64) -> Result<FitResult> {
    scatter.validate()?;
    if !(omega_bar > 0.0) {
        return Err(Error::Fit("reference frequency must be positive".into()));
    }
    let pts = &scatter.points;
    let sw: f64 = pts.iter().map(|p| p.weight()).sum();
    let xm = pts.iter().map(|p| p.weight() * p.amp_sq).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| p.weight() * p.omega_peak).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.amp_sq - xm, p.omega_peak - ym);
        sxx += p.weight() * dx * dx;
        sxy += p.weight() * dx * dy;
        syy += p.weight() * dy * dy;
    }
    let x_scale = pts.iter().map(|p| p.weight() * p.amp_sq * p.amp_sq).sum::<f64>() / sw;
    if !(sxx > 1e-24 * x_scale * sw) {
        return Err(Error::Fit("degenerate abscissa: all |A_b|^2 values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = pts
        .iter()
        .map(|p| p.weight() * (p.omega_peak - intercept - slope * p.amp_sq).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - rss / syy).clamp(0.0, 1.0) } else { 0.0 };
    let dof = pts.len() - 2;
    let slope_stderr = (rss / dof as f64 / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof as f64)
        .map_err(|e| Error::Fit(format!("Student-t: {e}")))?
        .inverse_cdf(0.975);
    let beta = slope / omega_bar;
    let half = t * slope_stderr / omega_bar;
    Ok(FitResult {
        slope,
        intercept,
        beta_nl_est: beta,
        r_squared,
        ci95: (beta - half, beta + half),
        slope_stderr,
        dof,
        n_points: pts.len(),
    })
}

/// Settings of [`run_protocol`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub dt: f64,
    /// Integrated but not analysed.
    pub t_transient: f64,
    /// Analysed record length.
    pub t_record: f64,
    pub scheme: Scheme,
    /// `None` keeps 16 samples per Δ₂ period.
    pub record_stride: Option<usize>,
    pub welch: WelchConfig,
    pub peak_method: PeakMethod,
    /// Peak search band relative to ω̄, in units of `welch.gamma`.
    pub band: (f64, f64),
    /// Skip bins around the coherent drive line at Δ₂.
    pub exclude_coherent: bool,
    /// E_h per √W: the hot-drive amplitude is `drive_per_sqrt_watt · √P_h`.
    pub drive_per_sqrt_watt: f64,
    pub master_seed: u64,
    /// Independent trajectories per power; each contributes its own point.
    pub repeats: usize,
    pub noise: bool,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl ProtocolConfig {
    /// Record of `gamma_t` decay times after a transient of `transient_gamma_t`.
    pub fn new(gamma: f64, dt: f64, gamma_t: f64, transient_gamma_t: f64, drive_per_sqrt_watt: f64) -> Self {
        ProtocolConfig {
            dt,
            t_transient: transient_gamma_t / gamma,
            t_record: gamma_t / gamma,
            scheme: Scheme::HeunDrift,
            record_stride: None,
            welch: WelchConfig::new(gamma),
            peak_method: PeakMethod::Parabolic,
            band: (-20.0, 40.0),
            exclude_coherent: true,
            drive_per_sqrt_watt,
            master_seed: 0,
            repeats: 1,
            noise: true,
            workers: 0,
        }
    }

    pub fn integrator(&self, params: &SystemParams) -> IntegratorConfig {
        let stride = self.record_stride.unwrap_or_else(|| default_stride(self.dt, params.delta2));
        IntegratorConfig {
            dt: self.dt,
            t_total: self.t_transient + self.t_record,
            t_discard: self.t_transient,
            scheme: self.scheme,
            record_stride: stride,
        }
    }

    /// Noise stream of run (`power_index`, `repeat`). It does not depend on
    /// β_NL, so sweeps compare β values on common random numbers.
    pub fn noise_for(&self, params: &SystemParams, power_index: usize, repeat: usize) -> NoiseSettings {
        if !self.noise {
            return NoiseSettings::disabled();
        }
        NoiseSettings::new(self.master_seed, [params.nbar1, params.nbar2])
            .with_stream((power_index * self.repeats.max(1) + repeat) as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub power: f64,
    pub repeat: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutcome {
    pub scatter: ScatterSet,
    pub fit: FitResult,
    pub failures: Vec<RunFailure>,
}

/// Measured quantities of a single protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeasurement {
    pub point: ScatterPoint,
    pub mean_abs_ab: f64,
    pub mean_abs_ad: f64,
    /// Dark-mode Welch spectrum restricted to the search band, as (ω, PSD).
    pub band_spectrum: Vec<(f64, f64)>,
}

/// Simulate one power and extract (|Ā_b|², ω′, σ).
pub fn measure_point(params: &SystemParams, cfg: &ProtocolConfig, noise: &NoiseSettings) -> Result<RunMeasurement> {
    let integ = cfg.integrator(params);
    let traj = simulate(params, &integ, noise)?;
    let slow = SlowAmplitudeSeries::from_trajectory(&traj)?;
    let t0 = slow.times[0];
    let mean_ab = time_avg_amplitude(&slow.times, &slow.ab, t0)?;
    let mean_ad = time_avg_amplitude(&slow.times, &slow.ad, t0)?;
    let spec = welch_spectrum(&slow.ad, slow.dt(), params.delta2, &cfg.welch)?;
    let g = cfg.welch.gamma;
    let centre = params.mean_omega();
    let mut search = PeakSearch::band(centre + cfg.band.0 * g, centre + cfg.band.1 * g);
    if cfg.exclude_coherent {
        search = search.excluding(params.delta2);
    }
    let peak = find_peak(&spec, &search, cfg.peak_method)?;
    let band_spectrum = spec
        .freqs
        .iter()
        .zip(&spec.psd)
        .filter(|(f, _)| **f >= search.band.0 && **f <= search.band.1)
        .map(|(f, p)| (*f, *p))
        .collect();
    Ok(RunMeasurement {
        point: ScatterPoint {
            amp_sq: mean_ab * mean_ab,
            omega_peak: peak.omega_peak,
            sigma_omega: peak.uncertainty,
            power: f64::NAN,
            seed: noise.seed,
            stream: noise.stream,
            low_confidence: peak.low_confidence,
        },
        mean_abs_ab: mean_ab,
        mean_abs_ad: mean_ad,
        band_spectrum,
    })
}

pub(crate) fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Run the protocol over a grid of hot-drive powers (W) and fit the scatter.
///
/// Runs that fail are dropped with a warning; fewer than three surviving
/// points is an error. The output is fully determined by the master seed.
pub fn run_protocol(params_base: &SystemParams, power_grid: &[f64], cfg: &ProtocolConfig) -> Result<ProtocolOutcome> {
    run_protocol_detailed(params_base, power_grid, cfg).map(|(outcome, _)| outcome)
}

/// As [`run_protocol`], also returning the measurement of every surviving run
/// in (power, repeat) order.
pub fn run_protocol_detailed(
    params_base: &SystemParams,
    power_grid: &[f64],
    cfg: &ProtocolConfig,
) -> Result<(ProtocolOutcome, Vec<RunMeasurement>)> {
    if power_grid.len() < 3 {
        return Err(Error::Protocol(format!("need at least 3 powers, got {}", power_grid.len())));
    }
    if power_grid.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::Protocol("powers must be finite and non-negative".into()));
    }
    params_base.validate()?;
    let repeats = cfg.repeats.max(1);
    let tasks: Vec<(usize, usize)> = (0..power_grid.len())
        .flat_map(|i| (0..repeats).map(move |r| (i, r)))
        .collect();
    let results: Vec<Result<RunMeasurement>> = with_pool(cfg.workers, || {
        tasks
            .par_iter()
            .map(|&(i, r)| {
                let mut p = params_base.clone();
                p.drive_h = cfg.drive_per_sqrt_watt * power_grid[i].sqrt();
                let noise = cfg.noise_for(&p, i, r);
                measure_point(&p, cfg, &noise).map(|mut m| {
                    m.point.power = power_grid[i];
                    m
                })
            })
            .collect()
    })?;

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for ((i, r), res) in tasks.iter().zip(results) {
        match res {
            Ok(m) => runs.push(m),
            Err(e) => {
                log::warn!("protocol run at P = {} W (repeat {r}) dropped: {e}", power_grid[*i]);
                failures.push(RunFailure {
                    power: power_grid[*i],
                    repeat: *r,
                    message: e.to_string(),
                });
            }
        }
    }
    if runs.len() < 3 {
        return Err(Error::Protocol(format!(
            "only {} runs succeeded; at least 3 are needed",
            runs.len()
        )));
    }
    let scatter = ScatterSet::new(runs.iter().map(|m| m.point.clone()).collect());
    let fit = linear_fit_with_reference(&scatter, params_base.mean_omega())?;
    Ok((
        ProtocolOutcome {
            scatter,
            fit,
            failures,
        },
        runs,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepBoundary {
    /// R² is below threshold everywhere; the limit lies above the grid.
    AboveGrid,
    /// R² is above threshold everywhere; the limit lies below the grid.
    BelowGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub beta_nl: f64,
    pub outcome: ProtocolOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub beta_nl_lim: f64,
    pub boundary: Option<SweepBoundary>,
    pub threshold: f64,
    pub points: Vec<SweepPoint>,
}

/// Default R² threshold of the resolution limit.
pub const DEFAULT_R2_THRESHOLD: f64 = 0.1;

/// Run the protocol at every β_NL of an ascending log-spaced grid and locate
/// the smallest β_NL whose R² reaches `threshold`.
pub fn resolution_sweep(
    params_base: &SystemParams,
    beta_grid: &[f64],
    power_grid: &[f64],
    cfg: &ProtocolConfig,
    threshold: f64,
) -> Result<SweepResult> {
    let mut grid = beta_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    if grid.len() < 2 || grid[0] <= 0.0 {
        return Err(Error::Protocol("beta grid needs at least two positive values".into()));
    }
    if grid[grid.len() - 1] / grid[0] < 10.0 * (1.0 - 1e-9) {
        return Err(Error::Protocol("beta grid must span at least a decade".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &beta in &grid {
        let mut p = params_base.clone();
        p.beta_nl = beta;
        let outcome = run_protocol(&p, power_grid, cfg)?;
        log::info!("beta_nl = {beta:.3e}: R^2 = {:.4}", outcome.fit.r_squared);
        points.push(SweepPoint { beta_nl: beta, outcome });
    }
    let r2: Vec<f64> = points.iter().map(|p| p.outcome.fit.r_squared).collect();
    for w in r2.windows(2) {
        if w[1] < w[0] && w[0] >= 0.3 {
            log::warn!("R^2 decreased along the beta grid ({:.3} -> {:.3})", w[0], w[1]);
        }
    }
    let (beta_nl_lim, boundary) = locate_threshold(&grid, &r2, threshold);
    Ok(SweepResult {
        beta_nl_lim,
        boundary,
        threshold,
        points,
    })
}

/// Crossing of `threshold` searched from the top of the grid downwards,
/// interpolated linearly in log β.
pub fn locate_threshold(betas: &[f64], r2: &[f64], threshold: f64) -> (f64, Option<SweepBoundary>) {
    let n = betas.len();
    if r2[n - 1] < threshold {
        return (betas[n - 1], Some(SweepBoundary::AboveGrid));
    }
    for i in (0..n - 1).rev() {
        if r2[i] < threshold {
            let (lo, hi) = (betas[i].ln(), betas[i + 1].ln());
            let f = (threshold - r2[i]) / (r2[i + 1] - r2[i]);
            return ((lo + f * (hi - lo)).exp(), None);
        }
    }
    (betas[0], Some(SweepBoundary::BelowGrid))
}
