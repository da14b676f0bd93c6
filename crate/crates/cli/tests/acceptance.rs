//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test -p darkmode-cli --test acceptance -- 1 4 10`.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;

use darkmode_cli::preset::{Resolved, Scale, ScenarioConfig, ScenarioKind};
use darkmode_cli::scenario::mismatch_run;
use darkmode_core::analytic::{steady_bright_amplitude, CavityResponse};
use darkmode_core::estimation::{linear_fit, resolution_sweep, run_protocol};
use darkmode_core::modes::time_avg_amplitude;
use darkmode_core::noise::{gen_complex_white_noise, Channel, ChannelRng};
use darkmode_core::sde::{default_stride, simulate, simulate_single};
use darkmode_core::spectrum::{fit_lorentzian, welch_spectrum};
use darkmode_core::{
    IntegratorConfig, NoiseSettings, OscillatorParams, Result, ScatterPoint, ScatterSet, SlowAmplitudeSeries,
    Spectrum, SystemParams, WelchConfig,
};

type C64 = Complex64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn desk(kind: ScenarioKind) -> Resolved {
    ScenarioConfig::new(kind, Scale::Desk).resolve().expect("desk preset resolves")
}

fn criterion_1() -> Result<Outcome> {
    let p = OscillatorParams {
        omega: 1.0,
        gamma: 1e-6,
        beta_nl: 1e-8,
        nbar: 0.0,
    };
    let integ = IntegratorConfig::new(0.01, 2000.0, 0.0, 1.0).with_stride(1);
    let tr = simulate_single(&p, &integ, &NoiseSettings::disabled(), Some(C64::new(1e3, 0.0)))?;
    let turned: f64 = tr.b.windows(2).map(|w| (w[1] / w[0]).arg()).sum();
    let freq = -turned / (tr.times[tr.times.len() - 1] - tr.times[0]);
    let err = (freq / 1.01 - 1.0).abs();
    outcome(err < 0.01, format!("frequency {freq:.6} vs 1.01 (relative error {err:.2e}, tolerance 1e-2)"))
}

fn criterion_2() -> Result<Outcome> {
    const SEEDS: u64 = 16;
    let gamma = 1e-3;
    let p = OscillatorParams {
        omega: 1.0,
        gamma,
        beta_nl: 0.0,
        nbar: 40.0,
    };
    // Heun advances the phase by ω(ω dt)²/6 too fast: 0.017γ at this step.
    let dt = 0.01;
    let integ = IntegratorConfig::new(dt, 20.0 / gamma, 0.0, 1.0).with_stride(default_stride(dt, 1.0));
    // Offset frame keeps the line away from DC.
    let frame = 1.0 - 40.0 * gamma;
    let welch = WelchConfig::new(gamma);
    let mut spectra: Vec<Spectrum> = Vec::new();
    for seed in 0..SEEDS {
        let tr = simulate_single(&p, &integ, &NoiseSettings::new(100 + seed, [40.0, 40.0]), None)?;
        let slow: Vec<C64> = tr.times.iter().zip(&tr.b).map(|(t, b)| b * C64::from_polar(1.0, frame * t)).collect();
        spectra.push(welch_spectrum(&slow, tr.times[1] - tr.times[0], frame, &welch)?);
    }
    let fit = fit_lorentzian(&Spectrum::average(&spectra)?, 10.0 * gamma)?;
    let peak_err = (fit.omega_peak - 1.0).abs() / gamma;
    let width_err = (fit.hwhm / gamma - 1.0).abs();
    outcome(
        peak_err < 0.2 && width_err < 0.15,
        format!(
            "peak offset {peak_err:.3} gamma (tolerance 0.2), HWHM {:.3} gamma (tolerance 15%), {SEEDS} seeds",
            fit.hwhm / gamma
        ),
    )
}

fn criterion_3() -> Result<Outcome> {
    let r = desk(ScenarioKind::Fig3Spectrum);
    let mut p = r.system().clone();
    p.drive_h = r.drive_per_sqrt_watt()? * 0.16e-6f64.sqrt();
    let g = r.gamma();
    let integ = IntegratorConfig::new(0.02, 3.0 / g, 0.0, p.delta2);
    let traj = simulate(&p, &integ, &NoiseSettings::disabled())?;
    let slow = SlowAmplitudeSeries::from_trajectory(&traj)?;
    let max = |s: &[C64]| s.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let ratio = max(&slow.ad) / max(&slow.ab);
    outcome(ratio < 1e-6, format!("max|A_d|/max|A_b| = {ratio:.2e} (tolerance 1e-6)"))
}

/// Direct RK4 integration of the cavity equation under prescribed motion.
fn cavity_ode(p: &SystemParams, abs_ab: f64, theta: f64, a0: C64, t_end: f64, dt: f64) -> Vec<(f64, C64)> {
    let gb = p.g_bright();
    let rhs = |t: f64, a: C64| {
        let x = 2.0 * gb * abs_ab * (p.delta2 * t - theta).cos();
        C64::new(-p.kappa, x - p.delta1) * a + C64::from_polar(p.drive_h, -p.delta2 * t) + p.drive_c
    };
    let n = (t_end / dt).round() as usize;
    let mut a = a0;
    let mut out = Vec::with_capacity(n / 10 + 1);
    for k in 0..n {
        let t = k as f64 * dt;
        if k % 10 == 0 {
            out.push((t, a));
        }
        let k1 = rhs(t, a);
        let k2 = rhs(t + dt / 2.0, a + k1 * (dt / 2.0));
        let k3 = rhs(t + dt / 2.0, a + k2 * (dt / 2.0));
        let k4 = rhs(t + dt, a + k3 * dt);
        a += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    out
}

fn criterion_4() -> Result<Outcome> {
    let mut p = SystemParams::paper_baseline();
    p.drive_c = 26085.2228;
    p.drive_h = 494.932304;
    let theta = 0.3;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for xi in [0.5, 3.0, 10.0] {
        let abs_ab = xi * p.delta2 / (2.0 * p.g_bright());
        let resp = CavityResponse::new(abs_ab, theta, &p)?;
        let t_end = 50.0 * 2.0 * PI / p.delta2;
        let ode = cavity_ode(&p, abs_ab, theta, resp.eval(0.0), t_end, 2e-4);
        let (mut num, mut den) = (0.0, 0.0);
        for (t, a) in &ode {
            let c = resp.eval(*t);
            num += (a - c).norm_sqr();
            den += c.norm_sqr();
        }
        let err = (num / den).sqrt();
        worst = worst.max(err);
        parts.push(format!("xi={xi}: {err:.1e}"));
    }
    outcome(worst < 1e-3, format!("relative L2 {} (tolerance 1e-3)", parts.join(", ")))
}

fn criterion_5() -> Result<Outcome> {
    let r = desk(ScenarioKind::Fig3Spectrum);
    let mut p = r.system().clone();
    p.beta_nl = 0.0;
    p.drive_h = r.drive_per_sqrt_watt()? * 0.16e-6f64.sqrt();
    let g = r.gamma();
    let fixed = steady_bright_amplitude(&p)?.amplitude.norm();
    let integ = IntegratorConfig::new(0.02, 13.0 / g, 3.0 / g, p.delta2);
    let traj = simulate(&p, &integ, &NoiseSettings::new(5, [p.nbar1, p.nbar2]))?;
    let slow = SlowAmplitudeSeries::from_trajectory(&traj)?;
    let sde = time_avg_amplitude(&slow.times, &slow.ab, slow.times[0])?;
    let err = (sde / fixed - 1.0).abs();
    outcome(
        err < 0.05,
        format!("SDE |A_b| {sde:.1} vs fixed point {fixed:.1} (relative error {err:.3}, tolerance 0.05)"),
    )
}

fn criterion_6() -> Result<Outcome> {
    let r = desk(ScenarioKind::Fig3Spectrum);
    let cfg = r.protocol(0)?;
    let powers = r.run.power_grid()?;
    let beta = r.system().beta_nl;
    let strong = run_protocol(r.system(), &powers, &cfg)?.fit;
    let mut weak_params = r.system().clone();
    weak_params.beta_nl = beta / 100.0;
    let weak = run_protocol(&weak_params, &powers, &cfg)?.fit;
    let rel = (strong.beta_nl_est / beta - 1.0).abs();
    outcome(
        rel < 0.15 && strong.r_squared > 0.9 && weak.r_squared < 0.1,
        format!(
            "beta' / beta = {:.3} (tolerance 15%), R2 = {:.3} (> 0.9); beta/100: R2 = {:.3} (< 0.1)",
            strong.beta_nl_est / beta,
            strong.r_squared,
            weak.r_squared
        ),
    )
}

fn criterion_7() -> Result<Outcome> {
    let r = desk(ScenarioKind::Fig4Resolution);
    let powers = r.run.power_grid()?;
    let betas = r.run.beta_grid()?;
    let mut limits = Vec::new();
    let mut r2 = Vec::new();
    for factor in [1.0, r.run.record_factor] {
        let mut cfg = r.protocol(0)?;
        cfg.t_record *= factor;
        let sweep = resolution_sweep(r.system(), &betas, &powers, &cfg, r.run.r2_threshold)?;
        r2.push(
            sweep
                .points
                .iter()
                .map(|p| format!("{:.2}", p.outcome.fit.r_squared))
                .collect::<Vec<_>>()
                .join("/"),
        );
        limits.push((sweep.beta_nl_lim, sweep.boundary));
    }
    let (short, long) = (limits[0], limits[1]);
    let gt = r.run.record_gamma_t;
    outcome(
        long.0 < short.0 && long.1.is_none() && short.1.is_none(),
        format!(
            "limit {:.3e} at gamma*t={gt} (R2 {}), {:.3e} at gamma*t={} (R2 {})",
            short.0,
            r2[0],
            long.0,
            gt * r.run.record_factor,
            r2[1]
        ),
    )
}

fn criterion_8() -> Result<Outcome> {
    let r = desk(ScenarioKind::Fig5Mismatch);
    let cfg = r.protocol(0)?;
    let base = r.single_run_params()?;
    let delta_p = base.mean_omega() - base.delta2;
    let mut pass = true;
    let mut parts = Vec::new();
    for delta in [1e-5, 1e-4] {
        let p = base.clone().with_mismatch(delta);
        let (s, _, _) = mismatch_run(&r, &p, &cfg)?;
        let target = delta / delta_p;
        let err = (s.ratio / target - 1.0).abs();
        let separated = s.separation > 10.0 && !s.noise_peak_low_confidence;
        pass &= err < 0.25 && separated;
        parts.push(format!(
            "delta/delta_p={target:.3}: ratio {:.3e} (error {err:.2}), peaks {:.1} gamma apart",
            s.ratio, s.separation
        ));
    }
    outcome(pass, format!("{} (tolerance 25%, separation > 10 gamma)", parts.join("; ")))
}

fn criterion_9() -> Result<Outcome> {
    let r = desk(ScenarioKind::Fig2Amplitude);
    let cfg = r.protocol(0)?;
    let powers = r.run.power_grid()?;
    let mut amps = Vec::new();
    for (i, pw) in powers.iter().enumerate() {
        let mut p = r.system().clone();
        p.drive_h = cfg.drive_per_sqrt_watt * pw.sqrt();
        let traj = simulate(&p, &cfg.integrator(&p), &cfg.noise_for(&p, i, 0))?;
        let slow = SlowAmplitudeSeries::from_trajectory(&traj)?;
        amps.push(time_avg_amplitude(&slow.times, &slow.ab, slow.times[0])?);
    }
    let inc: Vec<f64> = amps.windows(2).map(|w| w[1] - w[0]).collect();
    let knee = (0..inc.len()).max_by(|a, b| inc[*a].total_cmp(&inc[*b])).unwrap_or(0);
    let monotone = inc.iter().all(|d| *d >= 0.0);
    let decreasing = inc[knee..].windows(2).all(|w| w[1] < w[0]);
    let n = powers.len() - 1;
    let top_slope = (amps[n] / amps[n - 1]).ln() / (powers[n] / powers[n - 1]).ln();
    outcome(
        // A bare √P law also has shrinking increments; saturation needs a
        // log-slope below ½ at the top of the grid.
        monotone && decreasing && knee + 2 < inc.len() && top_slope < 0.5,
        format!(
            "|A_b| {:.3e} .. {:.3e}, knee after point {}, top log-slope {top_slope:.2} (sqrt law 0.5)",
            amps[0],
            amps[n],
            knee + 1
        ),
    )
}

fn criterion_10() -> Result<Outcome> {
    let (dt, occ) = (0.1, 40.0);
    let mut rng = ChannelRng::new(77, 0, Channel::Mechanical1);
    let n = 1_000_000;
    let second: f64 = (0..n).map(|_| gen_complex_white_noise(&mut rng, dt, occ).norm_sqr()).sum::<f64>() / n as f64;
    let var_err = (second * dt / (occ + 0.5) - 1.0).abs();

    let p = OscillatorParams {
        omega: 1.0,
        gamma: 0.05,
        beta_nl: 0.0,
        nbar: 40.0,
    };
    let integ = IntegratorConfig::new(0.02, 2e5, 0.0, 1.0).with_stride(16);
    let tr = simulate_single(&p, &integ, &NoiseSettings::new(9, [40.0, 40.0]), None)?;
    let mean_sq = tr.b.iter().map(|b| b.norm_sqr()).sum::<f64>() / tr.b.len() as f64;
    let fdt_err = (mean_sq / 40.5 - 1.0).abs();

    let truth = 0.02;
    let mut rng = ChannelRng::new(2024, 1, Channel::Cavity);
    let mut covered = 0;
    for _ in 0..1000 {
        let pts = (0..10)
            .map(|i| {
                let x = i as f64;
                let e = rng.unit_complex().re * 2f64.sqrt() * 0.05;
                ScatterPoint::new(x, 1.0 + truth * x + e, 0.05)
            })
            .collect();
        let f = linear_fit(&ScatterSet::new(pts))?;
        if f.ci95.0 <= truth && truth <= f.ci95.1 {
            covered += 1;
        }
    }
    let coverage = covered as f64 / 1000.0;
    outcome(
        var_err < 0.01 && fdt_err < 0.03 && (coverage - 0.95).abs() <= 0.02,
        format!(
            "noise variance error {var_err:.2e} (< 1e-2), stationary <|b|^2> {mean_sq:.2} vs 40.5 (error {fdt_err:.3}, < 3e-2), CI coverage {coverage:.3} (0.95 +- 0.02)"
        ),
    )
}

fn main() {
    let criteria: [(usize, fn() -> Result<Outcome>); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2}: {} {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} criterion/criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
