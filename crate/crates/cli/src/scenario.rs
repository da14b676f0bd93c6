//! Scenario pipelines and the single-purpose commands built on them.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use darkmode_core::analytic::{predicted_shift, steady_bright_amplitude, supermode_rates};
use darkmode_core::estimation::{measure_point, resolution_sweep, run_protocol_detailed, SweepBoundary};
use darkmode_core::io::{
    read_trajectory, write_fit_csv, write_scatter_csv, write_slow_series, write_slow_series_csv, write_spectrum_csv,
    write_table_csv, write_trajectory, write_trajectory_csv,
};
use darkmode_core::modes::{smooth_for_reporting, time_avg_amplitude};
use darkmode_core::sde::simulate;
use darkmode_core::spectrum::{find_peak, welch_spectrum, PeakMethod, PeakSearch, Spectrum};
use darkmode_core::{Error, ProtocolConfig, Result, SlowAmplitudeSeries, SystemParams, Trajectory};

use crate::manifest::{Artifacts, Manifest};
use crate::preset::{Resolved, ScenarioConfig, ScenarioKind};

/// Rows kept in time-trace tables.
const TRACE_ROWS: usize = 5000;

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

struct SingleRun {
    slow: SlowAmplitudeSeries,
    mean_ab: f64,
    mean_ad: f64,
}

fn single_run(params: &SystemParams, cfg: &ProtocolConfig, stream: usize) -> Result<SingleRun> {
    let traj = simulate(params, &cfg.integrator(params), &cfg.noise_for(params, stream, 0))?;
    let slow = SlowAmplitudeSeries::from_trajectory(&traj)?;
    let t0 = slow.times[0];
    let mean_ab = time_avg_amplitude(&slow.times, &slow.ab, t0)?;
    let mean_ad = time_avg_amplitude(&slow.times, &slow.ad, t0)?;
    Ok(SingleRun { slow, mean_ab, mean_ad })
}

fn trace_rows(slow: &SlowAmplitudeSeries) -> Result<Vec<Vec<f64>>> {
    let smooth = smooth_for_reporting(&slow.ab, slow.dt(), slow.frame_freq)?;
    let step = slow.len().div_ceil(TRACE_ROWS).max(1);
    Ok((0..slow.len())
        .step_by(step)
        .map(|k| vec![slow.times[k], slow.ab[k].norm(), slow.ad[k].norm(), smooth[k].norm()])
        .collect())
}

const TRACE_HEADER: [&str; 4] = [
    "t [1/omega_b]",
    "abs_ab [sqrt(quanta)]",
    "abs_ad [sqrt(quanta)]",
    "abs_ab_smoothed [sqrt(quanta)]",
];

/// Run the configured scenario and write its artifacts and manifest.
pub fn run_scenario(cfg: &ScenarioConfig, workers: usize) -> Result<Manifest> {
    let start = Instant::now();
    let resolved = cfg.resolve()?;
    let mut art = Artifacts::new(&cfg.output_dir)?;
    for w in &resolved.params.warnings {
        art.note(w.clone());
    }
    match resolved.scenario {
        ScenarioKind::Fig2Amplitude => amplitude_scenario(&resolved, workers, &mut art)?,
        ScenarioKind::Fig3Spectrum => protocol_scenario(&resolved, workers, &mut art, true)?,
        ScenarioKind::Fig4Resolution => resolution_scenario(&resolved, workers, &mut art, true)?,
        ScenarioKind::Fig5Mismatch => mismatch_scenario(&resolved, workers, &mut art)?,
        ScenarioKind::Fig6PeakVsBeta => peak_vs_beta_scenario(&resolved, workers, &mut art)?,
        ScenarioKind::Custom => protocol_scenario(&resolved, workers, &mut art, false)?,
    }
    art.finish(&format!("scenario {}", resolved.scenario), Some(&resolved), start.elapsed())
}

/// Bright/dark mean amplitudes over the power grid and a trace at the top power.
fn amplitude_scenario(r: &Resolved, workers: usize, art: &mut Artifacts) -> Result<()> {
    let cfg = r.protocol(workers)?;
    let powers = r.run.power_grid()?;
    let last = powers.len() - 1;
    let results: Vec<Result<(Vec<f64>, Option<Vec<Vec<f64>>>)>> = in_pool(workers, || {
        powers
            .par_iter()
            .enumerate()
            .map(|(i, &pw)| {
                let mut p = r.system().clone();
                p.drive_h = cfg.drive_per_sqrt_watt * pw.sqrt();
                let run = single_run(&p, &cfg, i)?;
                let (steady, xi) = match steady_bright_amplitude(&p) {
                    Ok(s) => (s.amplitude.norm(), s.coefficients.xi),
                    Err(e) => {
                        log::warn!("no analytic steady state at P_h = {pw} W: {e}");
                        (f64::NAN, f64::NAN)
                    }
                };
                let trace = if i == last { Some(trace_rows(&run.slow)?) } else { None };
                Ok((vec![pw, p.drive_h, run.mean_ab, run.mean_ad, steady, xi], trace))
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    for (pw, res) in powers.iter().zip(results) {
        match res {
            Ok((row, trace)) => {
                rows.push(row);
                if let Some(t) = trace {
                    art.csv("amplitude_trace.csv", |w| write_table_csv(w, &TRACE_HEADER, &t))?;
                }
            }
            Err(e) => art.fail(format!("power {pw:e} W"), &e),
        }
    }
    if rows.is_empty() {
        return Err(Error::Protocol("every amplitude run failed".into()));
    }
    let header = [
        "power_h [W]",
        "drive_h [1]",
        "abs_ab_mean [sqrt(quanta)]",
        "abs_ad_mean [sqrt(quanta)]",
        "abs_ab_steady [sqrt(quanta)]",
        "xi [1]",
    ];
    art.csv("amplitude_vs_power.csv", |w| write_table_csv(w, &header, &rows))
}

/// Protocol over the power grid: scatter, fit and (optionally) the spectra.
fn protocol_scenario(r: &Resolved, workers: usize, art: &mut Artifacts, spectra: bool) -> Result<()> {
    let cfg = r.protocol(workers)?;
    let powers = r.run.power_grid()?;
    let (outcome, runs) = run_protocol_detailed(r.system(), &powers, &cfg)?;
    for f in &outcome.failures {
        art.fail(
            format!("power {:e} W repeat {}", f.power, f.repeat),
            &Error::Protocol(f.message.clone()),
        );
    }
    art.csv("scatter.csv", |w| write_scatter_csv(w, &outcome.scatter))?;
    art.csv("fit.csv", |w| write_fit_csv(w, &outcome.fit))?;
    if spectra {
        let mut rows = Vec::new();
        for m in &runs {
            let peak = m.band_spectrum.iter().map(|(_, p)| *p).fold(0.0, f64::max);
            for (f, p) in &m.band_spectrum {
                rows.push(vec![m.point.power, m.point.stream as f64, *f, *p, p / peak]);
            }
        }
        let header = [
            "power_h [W]",
            "stream [1]",
            "freq [omega_b]",
            "psd [quanta/omega_b]",
            "psd_normalized [1]",
        ];
        art.csv("spectra.csv", |w| write_table_csv(w, &header, &rows))?;
    }
    Ok(())
}

/// Resolution sweep at the base record length and, if requested, at
/// `record_factor` times it.
fn resolution_scenario(r: &Resolved, workers: usize, art: &mut Artifacts, extended: bool) -> Result<()> {
    let powers = r.run.power_grid()?;
    let betas = r.run.beta_grid()?;
    let mut factors = vec![1.0];
    if extended && r.run.record_factor != 1.0 {
        factors.push(r.run.record_factor);
    }
    let mut rows = Vec::new();
    let mut limits = Vec::new();
    for factor in factors {
        let mut cfg = r.protocol(workers)?;
        let gt = r.run.record_gamma_t * factor;
        cfg.t_record = gt / r.gamma();
        let sweep = match resolution_sweep(r.system(), &betas, &powers, &cfg, r.run.r2_threshold) {
            Ok(s) => s,
            Err(e) => {
                art.fail(format!("sweep at gamma_t = {gt}"), &e);
                continue;
            }
        };
        for pt in &sweep.points {
            for f in &pt.outcome.failures {
                art.fail(
                    format!("beta {:e}, power {:e} W, repeat {}, gamma_t {gt}", pt.beta_nl, f.power, f.repeat),
                    &Error::Protocol(f.message.clone()),
                );
            }
            let fit = &pt.outcome.fit;
            rows.push(vec![
                gt,
                pt.beta_nl,
                fit.r_squared,
                fit.beta_nl_est,
                fit.ci95.0,
                fit.ci95.1,
                fit.n_points as f64,
            ]);
        }
        let flag = match sweep.boundary {
            None => 0.0,
            Some(SweepBoundary::AboveGrid) => 1.0,
            Some(SweepBoundary::BelowGrid) => -1.0,
        };
        limits.push(vec![gt, sweep.beta_nl_lim, flag, sweep.threshold]);
    }
    if limits.is_empty() {
        return Err(Error::Protocol("no sweep completed".into()));
    }
    let header = [
        "record_gamma_t [1]",
        "beta_nl [1]",
        "r2 [1]",
        "beta_nl_est [1]",
        "ci_low [1]",
        "ci_high [1]",
        "n_points [1]",
    ];
    art.csv("sweep.csv", |w| write_table_csv(w, &header, &rows))?;
    let header = [
        "record_gamma_t [1]",
        "beta_nl_lim [1]",
        "boundary [-1 below grid/0 inside/1 above grid]",
        "r2_threshold [1]",
    ];
    art.csv("limits.csv", |w| write_table_csv(w, &header, &limits))
}

/// Outcome of one mismatched-resonator run.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchSummary {
    pub delta: f64,
    pub delta_p: f64,
    pub mean_ab: f64,
    pub mean_ad: f64,
    pub ratio: f64,
    pub predicted_ratio: f64,
    pub coherent_peak: f64,
    pub noise_peak: f64,
    pub noise_peak_low_confidence: bool,
    /// |noise peak − coherent peak| in units of γ.
    pub separation: f64,
}

/// Simulate mismatched resonators and locate both dark-mode peaks.
pub fn mismatch_run(r: &Resolved, params: &SystemParams, cfg: &ProtocolConfig) -> Result<(MismatchSummary, Spectrum, SingleRunTrace)> {
    let run = single_run(params, cfg, 0)?;
    let g = r.gamma();
    let spec = welch_spectrum(&run.slow.ad, run.slow.dt(), params.delta2, &cfg.welch)?;
    let d2 = params.delta2;
    let coherent = find_peak(&spec, &PeakSearch::band(d2 - 5.0 * g, d2 + 5.0 * g), PeakMethod::Parabolic)?;
    let centre = params.mean_omega();
    let noise = find_peak(
        &spec,
        &PeakSearch::band(centre + cfg.band.0 * g, centre + cfg.band.1 * g).excluding(d2),
        PeakMethod::Parabolic,
    )?;
    let rates = supermode_rates(params);
    let summary = MismatchSummary {
        delta: params.delta(),
        delta_p: centre - d2,
        mean_ab: run.mean_ab,
        mean_ad: run.mean_ad,
        ratio: run.mean_ad / run.mean_ab,
        predicted_ratio: rates.mu.norm() / rates.gamma_d.norm(),
        coherent_peak: coherent.omega_peak,
        noise_peak: noise.omega_peak,
        noise_peak_low_confidence: noise.low_confidence,
        separation: (noise.omega_peak - coherent.omega_peak).abs() / g,
    };
    let trace = SingleRunTrace(trace_rows(&run.slow)?);
    Ok((summary, spec, trace))
}

/// Downsampled |A_b|, |A_d| trace of a run.
pub struct SingleRunTrace(pub Vec<Vec<f64>>);

fn crop(spec: &Spectrum, lo: f64, hi: f64) -> Spectrum {
    let keep: Vec<usize> = (0..spec.freqs.len())
        .filter(|&k| spec.freqs[k] >= lo && spec.freqs[k] <= hi)
        .collect();
    Spectrum {
        freqs: keep.iter().map(|&k| spec.freqs[k]).collect(),
        psd: keep.iter().map(|&k| spec.psd[k]).collect(),
        ..spec.clone()
    }
}

fn mismatch_scenario(r: &Resolved, workers: usize, art: &mut Artifacts) -> Result<()> {
    let cfg = r.protocol(workers)?;
    let params = r.single_run_params()?;
    let (s, spec, trace) = mismatch_run(r, &params, &cfg)?;
    let g = r.gamma();
    let lo = params.delta2.min(params.mean_omega()) - 20.0 * g;
    let hi = params.delta2.max(params.mean_omega()) + 40.0 * g;
    let spec = darkmode_core::spectrum::normalize_peak(&crop(&spec, lo, hi))?;
    art.csv("spectrum.csv", |w| write_spectrum_csv(w, &spec))?;
    art.csv("amplitude_trace.csv", |w| write_table_csv(w, &TRACE_HEADER, &trace.0))?;
    let header = [
        "delta [omega_b]",
        "delta_p [omega_b]",
        "abs_ab_mean [sqrt(quanta)]",
        "abs_ad_mean [sqrt(quanta)]",
        "ratio [1]",
        "ratio_predicted [1]",
        "coherent_peak [omega_b]",
        "noise_peak [omega_b]",
        "separation [gamma]",
        "noise_peak_low_confidence [0/1]",
    ];
    let row = vec![
        s.delta,
        s.delta_p,
        s.mean_ab,
        s.mean_ad,
        s.ratio,
        s.predicted_ratio,
        s.coherent_peak,
        s.noise_peak,
        s.separation,
        s.noise_peak_low_confidence as u8 as f64,
    ];
    art.csv("summary.csv", |w| write_table_csv(w, &header, &[row]))
}

fn peak_vs_beta_scenario(r: &Resolved, workers: usize, art: &mut Artifacts) -> Result<()> {
    let cfg = r.protocol(workers)?;
    let base = r.single_run_params()?;
    let betas = r.run.beta_grid()?;
    // Every β reuses stream 0, so the points differ only through β.
    let results: Vec<Result<Vec<f64>>> = in_pool(workers, || {
        betas
            .par_iter()
            .map(|&beta| {
                let mut p = base.clone();
                p.beta_nl = beta;
                let m = measure_point(&p, &cfg, &cfg.noise_for(&p, 0, 0))?;
                let predicted = predicted_shift(p.mean_omega(), beta, m.mean_abs_ab);
                Ok(vec![
                    beta,
                    m.point.omega_peak,
                    m.point.sigma_omega,
                    predicted,
                    m.mean_abs_ab,
                    m.mean_abs_ad,
                ])
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    for (beta, res) in betas.iter().zip(results) {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => art.fail(format!("beta {beta:e}"), &e),
        }
    }
    let header = [
        "beta_nl [1]",
        "omega_peak [omega_b]",
        "sigma_omega [omega_b]",
        "omega_predicted [omega_b]",
        "abs_ab_mean [sqrt(quanta)]",
        "abs_ad_mean [sqrt(quanta)]",
    ];
    art.csv("peak_vs_beta.csv", |w| write_table_csv(w, &header, &rows))?;

    let deltas = r.run.mismatch_grid()?;
    let results: Vec<Result<Vec<f64>>> = in_pool(workers, || {
        deltas
            .par_iter()
            .map(|&d| {
                let p = base.clone().with_mismatch(d);
                let run = single_run(&p, &cfg, 0)?;
                let rates = supermode_rates(&p);
                Ok(vec![
                    d,
                    run.mean_ab,
                    run.mean_ad,
                    run.mean_ad / run.mean_ab,
                    rates.mu.norm() / rates.gamma_d.norm(),
                ])
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    for (d, res) in deltas.iter().zip(results) {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => art.fail(format!("delta {d:e}"), &e),
        }
    }
    let header = [
        "delta [omega_b]",
        "abs_ab_mean [sqrt(quanta)]",
        "abs_ad_mean [sqrt(quanta)]",
        "ratio [1]",
        "ratio_predicted [1]",
    ];
    art.csv("amplitude_vs_delta.csv", |w| write_table_csv(w, &header, &rows))
}

/// Integrate one trajectory and store it as a container (and optionally CSV).
pub fn simulate_command(cfg: &ScenarioConfig, csv: bool) -> Result<Manifest> {
    let start = Instant::now();
    let r = cfg.resolve()?;
    let mut art = Artifacts::new(&cfg.output_dir)?;
    let params = r.single_run_params()?;
    let pc = r.protocol(1)?;
    let traj = simulate(&params, &pc.integrator(&params), &pc.noise_for(&params, 0, 0))?;
    let mut buf = Vec::new();
    write_trajectory(&mut buf, &traj)?;
    art.write("trajectory.omg1", &buf)?;
    if csv {
        art.csv("trajectory.csv", |w| write_trajectory_csv(w, &traj))?;
    }
    art.finish("simulate", Some(&r), start.elapsed())
}

/// Demodulate a stored trajectory and estimate the dark-mode spectrum.
pub fn analyze_command(input: &Path, out: &Path, csv: bool) -> Result<Manifest> {
    let start = Instant::now();
    let bytes = std::fs::read(input)?;
    let traj: Trajectory = read_trajectory(&mut bytes.as_slice())?;
    let p = &traj.params_snapshot;
    let mut art = Artifacts::new(out)?;
    let slow = SlowAmplitudeSeries::from_trajectory(&traj)?;
    let mut buf = Vec::new();
    write_slow_series(&mut buf, &slow, &traj.noise_provenance)?;
    art.write("slow.omg2", &buf)?;
    if csv {
        art.csv("slow.csv", |w| write_slow_series_csv(w, &slow))?;
    }
    let gamma = (p.gamma1 + p.gamma2) / 2.0;
    let welch = darkmode_core::WelchConfig::new(gamma);
    let spec = welch_spectrum(&slow.ad, slow.dt(), p.delta2, &welch)?;
    art.csv("spectrum.csv", |w| write_spectrum_csv(w, &spec))?;
    let centre = p.mean_omega();
    let peak = find_peak(
        &spec,
        &PeakSearch::band(centre - 20.0 * gamma, centre + 40.0 * gamma),
        PeakMethod::Parabolic,
    )?;
    let t0 = slow.times[0];
    let row = vec![
        peak.omega_peak,
        peak.uncertainty,
        peak.low_confidence as u8 as f64,
        time_avg_amplitude(&slow.times, &slow.ab, t0)?,
        time_avg_amplitude(&slow.times, &slow.ad, t0)?,
    ];
    let header = [
        "omega_peak [omega_b]",
        "sigma_omega [omega_b]",
        "low_confidence [0/1]",
        "abs_ab_mean [sqrt(quanta)]",
        "abs_ad_mean [sqrt(quanta)]",
    ];
    art.csv("peak.csv", |w| write_table_csv(w, &header, &[row]))?;
    art.finish("analyze", None, start.elapsed())
}

/// Protocol run from a configuration: scatter and fit.
pub fn protocol_command(cfg: &ScenarioConfig, workers: usize) -> Result<Manifest> {
    let start = Instant::now();
    let r = cfg.resolve()?;
    let mut art = Artifacts::new(&cfg.output_dir)?;
    protocol_scenario(&r, workers, &mut art, true)?;
    art.finish("protocol", Some(&r), start.elapsed())
}

/// Resolution sweep at the configured record length only.
pub fn sweep_command(cfg: &ScenarioConfig, workers: usize) -> Result<Manifest> {
    let start = Instant::now();
    let r = cfg.resolve()?;
    let mut art = Artifacts::new(&cfg.output_dir)?;
    resolution_scenario(&r, workers, &mut art, false)?;
    art.finish("sweep", Some(&r), start.elapsed())
}

/// Print the resolved parameters of a configuration file with its warnings.
pub fn validate_text(text: &str, mut out: impl Write) -> Result<Resolved> {
    let cfg = ScenarioConfig::from_text(text)?;
    let r = cfg.resolve()?;
    write!(out, "{}", r.echo())?;
    for w in &r.params.warnings {
        writeln!(out, "note: {w}")?;
    }
    if let Err(e) = r.protocol(1).and_then(|pc| pc.integrator(r.system()).validate(r.system())) {
        writeln!(out, "note: {e}")?;
    }
    Ok(r)
}

/// Single runs over one parameter (for example `power_h_w`, `power_c_w`,
/// `delta2` or `delta`), one row per value.
pub fn parameter_sweep(cfg: &ScenarioConfig, key: &str, values: &[f64], workers: usize) -> Result<Manifest> {
    let start = Instant::now();
    let base = cfg.resolve()?;
    let mut art = Artifacts::new(&cfg.output_dir)?;
    let mut runs = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = cfg.clone();
        c.set(&format!("{key}={v:e}"))?;
        runs.push((v, c.resolve()?));
    }
    let results: Vec<Result<Vec<f64>>> = in_pool(workers, || {
        runs.par_iter()
            .map(|(v, r)| {
                let p = r.single_run_params()?;
                let pc = r.protocol(1)?;
                let m = measure_point(&p, &pc, &pc.noise_for(&p, 0, 0))?;
                Ok(vec![*v, m.mean_abs_ab, m.mean_abs_ad, m.point.omega_peak, m.point.sigma_omega])
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    for (v, res) in values.iter().zip(results) {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => art.fail(format!("{key} = {v:e}"), &e),
        }
    }
    let first = format!("{key} [as configured]");
    let header = [
        first.as_str(),
        "abs_ab_mean [sqrt(quanta)]",
        "abs_ad_mean [sqrt(quanta)]",
        "omega_peak [omega_b]",
        "sigma_omega [omega_b]",
    ];
    art.csv("parameter_sweep.csv", |w| write_table_csv(w, &header, &rows))?;
    art.finish(&format!("sweep {key}"), Some(&base), start.elapsed())
}
