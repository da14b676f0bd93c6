//! Stochastic integration of the semiclassical Langevin equations.
//!
//! Two models are supported: a single anharmonic oscillator
//!
//! ```text
//! ḃ = (−iω − γ) b + iω(β/3)(b − b*)³ + √(2γ) b_in
//! ```
//!
//! and the cavity coupled to two mechanical resonators, written in the frame
//! rotating with the reference laser frequency:
//!
//! ```text
//! ȧ  = {i[−Δ₁ + Σ g_j (b_j + b_j*)] − κ} a + E_h e^{−iΔ₂t} + E_c + √(2κ) a_in
//! ḃ_j = (−iω_j − γ_j) b_j + iω_j(β/3)(b_j − b_j*)³ + i g_j |a|² + √(2γ_j) b_in,j
//! ```
//!
//! The cubic term is real: iω(β/3)(b − b*)³ = (8/3)ωβ (Im b)³.
//!
//! Noise is additive, so the stochastic Heun scheme uses the same increment in
//! the predictor and the corrector. Both schemes consume exactly one complex
//! normal per channel and step.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noise::{gen_complex_white_noise, Channel, ChannelRng, NoiseSettings, CAVITY_OCCUPANCY};
use crate::units::SystemParams;

/// Divergence guard: |a| may not exceed this multiple of its running median.
pub const RUNAWAY_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    EulerMaruyama,
    /// Heun predictor–corrector for the drift, additive noise.
    #[default]
    HeunDrift,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler_maruyama" => Ok(Scheme::EulerMaruyama),
            "heun_drift" => Ok(Scheme::HeunDrift),
            other => Err(Error::config(format!(
                "unknown scheme `{other}` (expected euler_maruyama or heun_drift)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_total: f64,
    /// Samples before this time are integrated but not recorded.
    pub t_discard: f64,
    pub scheme: Scheme,
    /// Keep one sample every `record_stride` steps.
    pub record_stride: usize,
}

impl IntegratorConfig {
    /// Heun integration with the default stride for beat frequency `delta2`.
    pub fn new(dt: f64, t_total: f64, t_discard: f64, delta2: f64) -> Self {
        IntegratorConfig {
            dt,
            t_total,
            t_discard,
            scheme: Scheme::HeunDrift,
            record_stride: default_stride(dt, delta2),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    /// Largest step resolving the cavity decay and the fastest oscillation.
    pub fn max_dt(params: &SystemParams) -> f64 {
        let fastest = params.omega_b1.max(params.omega_b2).max(params.delta2);
        (0.1 / params.kappa).min(0.05 / fastest)
    }

    fn check_common(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_discard >= 0.0) || self.t_discard >= self.t_total {
            return Err(Error::config(format!(
                "need 0 <= t_discard < t_total (got {} and {})",
                self.t_discard, self.t_total
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::config("record_stride must be at least 1"));
        }
        Ok(())
    }

    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        self.check_common()?;
        let bound = Self::max_dt(params);
        if self.dt > bound * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "dt = {} does not resolve the fastest time scale (max {bound:.4e})",
                self.dt
            )));
        }
        let fastest = params.omega_b1.max(params.omega_b2);
        let growth = heun_growth_rate(fastest, self.dt);
        let gamma = params.gamma1.min(params.gamma2);
        if self.scheme == Scheme::HeunDrift && growth > 0.02 * gamma {
            log::warn!(
                "Heun phase error adds an effective gain of {growth:.2e} per unit time against \
                 mechanical damping {gamma:.2e}; reduce dt"
            );
        }
        Ok(())
    }

    fn n_steps(&self) -> u64 {
        (self.t_total / self.dt).round() as u64
    }

    fn first_recorded(&self) -> u64 {
        (self.t_discard / self.dt).ceil() as u64
    }
}

/// Spurious amplitude growth rate of the Heun drift step for an undamped
/// oscillation at `omega`: |1 − iωdt − (ωdt)²/2| exceeds 1 by (ωdt)⁴/8.
pub fn heun_growth_rate(omega: f64, dt: f64) -> f64 {
    let x = omega * dt;
    x.powi(4) / 8.0 / dt
}

/// Stride keeping at least 16 samples per period of `delta2`.
pub fn default_stride(dt: f64, delta2: f64) -> usize {
    let period = 2.0 * std::f64::consts::PI / delta2;
    ((period / 16.0 / dt).floor() as usize).max(1)
}

/// Complex state of the cavity and both resonators.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub a: Complex64,
    pub b1: Complex64,
    pub b2: Complex64,
}

impl State {
    fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b1.is_finite() && self.b2.is_finite()
    }

    fn axpy(&self, k: &State, h: f64, w: &State) -> State {
        State {
            a: self.a + k.a * h + w.a,
            b1: self.b1 + k.b1 * h + w.b1,
            b2: self.b2 + k.b2 * h + w.b2,
        }
    }
}

/// Uniformly sampled output of [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub a: Vec<Complex64>,
    pub b1: Vec<Complex64>,
    pub b2: Vec<Complex64>,
    pub params_snapshot: SystemParams,
    pub noise_provenance: NoiseSettings,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Sampling interval.
    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

/// Output of [`simulate_single`].
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorTrace {
    pub times: Vec<f64>,
    pub b: Vec<Complex64>,
}

/// Parameters of the isolated anharmonic oscillator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorParams {
    pub omega: f64,
    pub gamma: f64,
    pub beta_nl: f64,
    pub nbar: f64,
}

/// Per-resonator drift coefficients, precomputed once per run.
#[derive(Debug, Clone, Copy)]
struct MechCoeffs {
    /// −γ − iω
    linear: Complex64,
    /// (8/3) ω β
    cubic: f64,
}

impl MechCoeffs {
    fn new(omega: f64, gamma: f64, beta: f64) -> Self {
        MechCoeffs {
            linear: Complex64::new(-gamma, -omega),
            cubic: 8.0 / 3.0 * omega * beta,
        }
    }

    #[inline(always)]
    fn drift(&self, b: Complex64) -> Complex64 {
        let y = b.im;
        self.linear * b + Complex64::new(self.cubic * y * y * y, 0.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct SystemCoeffs {
    m1: MechCoeffs,
    m2: MechCoeffs,
    g1: f64,
    g2: f64,
    delta1: f64,
    kappa: f64,
    drive_h: f64,
    drive_c: f64,
}

impl SystemCoeffs {
    fn new(p: &SystemParams) -> Self {
        SystemCoeffs {
            m1: MechCoeffs::new(p.omega_b1, p.gamma1, p.beta_nl),
            m2: MechCoeffs::new(p.omega_b2, p.gamma2, p.beta_nl),
            g1: p.g1,
            g2: p.g2,
            delta1: p.delta1,
            kappa: p.kappa,
            drive_h: p.drive_h,
            drive_c: p.drive_c,
        }
    }

    /// `rot` is e^{−iΔ₂t} at the evaluation time.
    #[inline(always)]
    fn drift(&self, s: &State, rot: Complex64) -> State {
        let x = 2.0 * (self.g1 * s.b1.re + self.g2 * s.b2.re);
        let a = Complex64::new(-self.kappa, x - self.delta1) * s.a + rot * self.drive_h
            + Complex64::new(self.drive_c, 0.0);
        let n = s.a.norm_sqr();
        State {
            a,
            b1: self.m1.drift(s.b1) + Complex64::new(0.0, self.g1 * n),
            b2: self.m2.drift(s.b2) + Complex64::new(0.0, self.g2 * n),
        }
    }
}

/// Noise sources of a full-system run; `None` when noise is disabled.
struct SystemNoise {
    cavity: ChannelRng,
    m1: ChannelRng,
    m2: ChannelRng,
    /// √(2κ)·dt, √(2γ₁)·dt, √(2γ₂)·dt
    scale: [f64; 3],
    occ: [f64; 2],
    dt: f64,
}

impl SystemNoise {
    fn new(settings: &NoiseSettings, p: &SystemParams, dt: f64) -> Option<Self> {
        if !settings.enabled {
            return None;
        }
        Some(SystemNoise {
            cavity: settings.channel(Channel::Cavity),
            m1: settings.channel(Channel::Mechanical1),
            m2: settings.channel(Channel::Mechanical2),
            scale: [
                (2.0 * p.kappa).sqrt() * dt,
                (2.0 * p.gamma1).sqrt() * dt,
                (2.0 * p.gamma2).sqrt() * dt,
            ],
            occ: settings.occupancies,
            dt,
        })
    }

    #[inline]
    fn increment(&mut self) -> State {
        State {
            a: gen_complex_white_noise(&mut self.cavity, self.dt, CAVITY_OCCUPANCY) * self.scale[0],
            b1: gen_complex_white_noise(&mut self.m1, self.dt, self.occ[0]) * self.scale[1],
            b2: gen_complex_white_noise(&mut self.m2, self.dt, self.occ[1]) * self.scale[2],
        }
    }
}

/// Advance the single oscillator by one step.
///
/// `noise_increment` is √(2γ)·η·dt for this step (zero when noise is off).
pub fn step_single_oscillator(
    b: Complex64,
    p: &OscillatorParams,
    noise_increment: Complex64,
    dt: f64,
    scheme: Scheme,
) -> Complex64 {
    step_mech(b, &MechCoeffs::new(p.omega, p.gamma, p.beta_nl), noise_increment, dt, scheme)
}

#[inline(always)]
fn step_mech(b: Complex64, c: &MechCoeffs, w: Complex64, dt: f64, scheme: Scheme) -> Complex64 {
    let k1 = c.drift(b);
    match scheme {
        Scheme::EulerMaruyama => b + k1 * dt + w,
        Scheme::HeunDrift => {
            let pred = b + k1 * dt + w;
            let k2 = c.drift(pred);
            b + (k1 + k2) * (0.5 * dt) + w
        }
    }
}

/// Advance the three-mode system by one step from time `t`.
///
/// `rot0` and `rot1` are e^{−iΔ₂t} at `t` and `t + dt`; `noise` holds the
/// per-channel increments √(2·rate)·η·dt.
pub fn step_full_system(
    state: &State,
    params: &SystemParams,
    noise: &State,
    t: f64,
    dt: f64,
    scheme: Scheme,
) -> State {
    let c = SystemCoeffs::new(params);
    let rot0 = Complex64::from_polar(1.0, -params.delta2 * t);
    let rot1 = Complex64::from_polar(1.0, -params.delta2 * (t + dt));
    step_system(state, &c, noise, rot0, rot1, dt, scheme)
}

#[inline(always)]
fn step_system(
    s: &State,
    c: &SystemCoeffs,
    w: &State,
    rot0: Complex64,
    rot1: Complex64,
    dt: f64,
    scheme: Scheme,
) -> State {
    let k1 = c.drift(s, rot0);
    match scheme {
        Scheme::EulerMaruyama => s.axpy(&k1, dt, w),
        Scheme::HeunDrift => {
            let pred = s.axpy(&k1, dt, w);
            let k2 = c.drift(&pred, rot1);
            let k = State {
                a: k1.a + k2.a,
                b1: k1.b1 + k2.b1,
                b2: k1.b2 + k2.b2,
            };
            s.axpy(&k, 0.5 * dt, w)
        }
    }
}

/// Thermal initial state: cavity empty, resonators drawn with variance n̄ + ½.
///
/// Returns the vacuum when noise is disabled. Draws come from the resonators'
/// own channels before any step noise.
fn initial_state(noise: &mut Option<SystemNoise>) -> State {
    match noise {
        None => State::default(),
        Some(n) => State {
            a: Complex64::new(0.0, 0.0),
            b1: n.m1.unit_complex() * (n.occ[0] + 0.5).sqrt(),
            b2: n.m2.unit_complex() * (n.occ[1] + 0.5).sqrt(),
        },
    }
}

/// Integrate the three-mode system from a thermal initial state.
pub fn simulate(params: &SystemParams, integ: &IntegratorConfig, noise: &NoiseSettings) -> Result<Trajectory> {
    simulate_with(params, integ, noise, None)
}

/// As [`simulate`], optionally starting from a prescribed state.
pub fn simulate_with(
    params: &SystemParams,
    integ: &IntegratorConfig,
    noise: &NoiseSettings,
    initial: Option<State>,
) -> Result<Trajectory> {
    params.validate()?;
    integ.validate(params)?;

    let dt = integ.dt;
    let coeffs = SystemCoeffs::new(params);
    let mut src = SystemNoise::new(noise, params, dt);
    let drawn = initial_state(&mut src);
    let mut s = initial.unwrap_or(drawn);

    let n_steps = integ.n_steps();
    let first = integ.first_recorded();
    let stride = integ.record_stride as u64;
    let cap = if n_steps >= first { ((n_steps - first) / stride + 1) as usize } else { 0 };

    let mut traj = Trajectory {
        times: Vec::with_capacity(cap),
        a: Vec::with_capacity(cap),
        b1: Vec::with_capacity(cap),
        b2: Vec::with_capacity(cap),
        params_snapshot: params.clone(),
        noise_provenance: noise.clone(),
    };
    let mut guard = RunawayGuard::new();
    let zero = State::default();
    let mut rot = Complex64::new(1.0, 0.0);

    for n in 0..=n_steps {
        if n >= first && (n - first) % stride == 0 {
            if !s.is_finite() {
                return Err(divergence(n, &s));
            }
            guard.check(n, s.a.norm())?;
            traj.times.push(n as f64 * dt);
            traj.a.push(s.a);
            traj.b1.push(s.b1);
            traj.b2.push(s.b2);
        }
        if n == n_steps {
            break;
        }
        let t1 = (n + 1) as f64 * dt;
        let (sin, cos) = (params.delta2 * t1).sin_cos();
        let rot1 = Complex64::new(cos, -sin);
        let w = match src.as_mut() {
            Some(src) => src.increment(),
            None => zero,
        };
        s = step_system(&s, &coeffs, &w, rot, rot1, dt, integ.scheme);
        rot = rot1;
        if !s.is_finite() {
            return Err(divergence(n + 1, &s));
        }
    }
    Ok(traj)
}

fn divergence(step: u64, s: &State) -> Error {
    Error::Divergence {
        step,
        detail: format!("non-finite state a={} b1={} b2={}", s.a, s.b1, s.b2),
    }
}

/// Flags cavity runaway against a running median of recorded |a|.
struct RunawayGuard {
    ring: Vec<f64>,
    next: usize,
    seen: usize,
    median: f64,
}

impl RunawayGuard {
    const LEN: usize = 257;
    const REFRESH: usize = 64;

    fn new() -> Self {
        RunawayGuard {
            ring: vec![0.0; Self::LEN],
            next: 0,
            seen: 0,
            median: 0.0,
        }
    }

    fn check(&mut self, step: u64, abs_a: f64) -> Result<()> {
        let floor = self.median.max(1.0);
        if self.seen >= Self::REFRESH && abs_a > RUNAWAY_FACTOR * floor {
            return Err(Error::Divergence {
                step,
                detail: format!(
                    "cavity amplitude {abs_a:.3e} exceeds {RUNAWAY_FACTOR:e} x running median {:.3e} (unstable regime)",
                    self.median
                ),
            });
        }
        self.ring[self.next] = abs_a;
        self.next = (self.next + 1) % Self::LEN;
        self.seen += 1;
        if self.seen % Self::REFRESH == 0 {
            let k = self.seen.min(Self::LEN);
            let mut buf = self.ring[..k].to_vec();
            let mid = k / 2;
            buf.select_nth_unstable_by(mid, f64::total_cmp);
            self.median = buf[mid];
        }
        Ok(())
    }
}

/// Integrate the isolated oscillator.
///
/// Uses the `Mechanical1` channel of `noise`, so with g₁ = 0 it reproduces
/// resonator 1 of [`simulate_with`] given the same settings and initial value.
pub fn simulate_single(
    p: &OscillatorParams,
    integ: &IntegratorConfig,
    noise: &NoiseSettings,
    initial: Option<Complex64>,
) -> Result<OscillatorTrace> {
    integ.check_common()?;
    if !(p.gamma >= 0.0) || !(p.omega > 0.0) {
        return Err(Error::domain("oscillator needs omega > 0 and gamma >= 0"));
    }
    if integ.dt > 0.05 / p.omega * (1.0 + 1e-12) {
        return Err(Error::config(format!(
            "dt = {} does not resolve the oscillation (max {:.4e})",
            integ.dt,
            0.05 / p.omega
        )));
    }
    let dt = integ.dt;
    let coeffs = MechCoeffs::new(p.omega, p.gamma, p.beta_nl);
    let mut rng = noise.enabled.then(|| noise.channel(Channel::Mechanical1));
    let drawn = match rng.as_mut() {
        Some(r) => r.unit_complex() * (p.nbar + 0.5).sqrt(),
        None => Complex64::new(0.0, 0.0),
    };
    let mut b = initial.unwrap_or(drawn);
    let scale = (2.0 * p.gamma).sqrt() * dt;

    let n_steps = integ.n_steps();
    let first = integ.first_recorded();
    let stride = integ.record_stride as u64;
    let cap = if n_steps >= first { ((n_steps - first) / stride + 1) as usize } else { 0 };
    let mut out = OscillatorTrace {
        times: Vec::with_capacity(cap),
        b: Vec::with_capacity(cap),
    };
    for n in 0..=n_steps {
        if n >= first && (n - first) % stride == 0 {
            out.times.push(n as f64 * dt);
            out.b.push(b);
        }
        if n == n_steps {
            break;
        }
        let w = match rng.as_mut() {
            Some(r) => gen_complex_white_noise(r, dt, p.nbar) * scale,
            None => Complex64::new(0.0, 0.0),
        };
        b = step_mech(b, &coeffs, w, dt, integ.scheme);
        if !b.is_finite() {
            return Err(Error::Divergence {
                step: n + 1,
                detail: format!("non-finite oscillator state {b}"),
            });
        }
    }
    Ok(out)
}

/// Result of [`assess_stability`].
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub converged: bool,
    /// Largest relative envelope drift over the window among a, b₁, b₂.
    pub residual: f64,
    pub window: f64,
}

/// Relative drift tolerated over the assessment window.
pub const STABILITY_TOLERANCE: f64 = 0.01;

/// Decide whether the final `window` of a trajectory is stationary.
///
/// The envelope of each variable is the per-drive-period maximum modulus. A
/// least-squares line through the envelopes gives the drift across the window,
/// measured relative to the mean envelope (floored at 10⁻⁶ of the largest
/// envelope in the record, so fully decayed signals count as stationary).
pub fn assess_stability(traj: &Trajectory, window: f64) -> Result<StabilityReport> {
    let period = 2.0 * std::f64::consts::PI / traj.params_snapshot.delta2;
    let series: [&[Complex64]; 3] = [&traj.a, &traj.b1, &traj.b2];
    let residual = series
        .iter()
        .map(|s| envelope_drift(&traj.times, s, period, window))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(StabilityReport {
        converged: residual < STABILITY_TOLERANCE,
        residual,
        window,
    })
}

/// Relative drift of the per-period envelope over the final `window` of a series.
pub fn envelope_drift(times: &[f64], values: &[Complex64], period: f64, window: f64) -> Result<f64> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::config("series too short for a stability assessment"));
    }
    let duration = times[times.len() - 1] - times[0];
    if window >= duration {
        return Err(Error::config(format!(
            "window {window} must be shorter than the record ({duration})"
        )));
    }
    if window < 10.0 * period {
        return Err(Error::config(format!(
            "window {window} spans fewer than 10 drive periods ({period:.4})"
        )));
    }

    let t_end = times[times.len() - 1];
    let t_start = t_end - window;
    let n_periods = (window / period).floor() as usize;
    let mut env = vec![0.0f64; n_periods];
    for (t, v) in times.iter().zip(values) {
        if *t < t_start {
            continue;
        }
        let k = ((t - t_start) / period) as usize;
        if k < n_periods {
            env[k] = env[k].max(v.norm());
        }
    }
    let peak = values.iter().map(|v| v.norm()).fold(0.0, f64::max);

    let n = env.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = env.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, e) in env.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (e - ym);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let scale = ym.max(1e-6 * peak).max(f64::MIN_POSITIVE);
    Ok((slope * (n - 1.0)).abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn osc(omega: f64, gamma: f64, beta: f64) -> OscillatorParams {
        OscillatorParams {
            omega,
            gamma,
            beta_nl: beta,
            nbar: 0.0,
        }
    }

    #[test]
    fn free_rotation_conserves_modulus() {
        let p = osc(1.0, 0.0, 0.0);
        let mut b = Complex64::new(1.0, 0.0);
        let mut worst: f64 = 0.0;
        for _ in 0..100_000 {
            b = step_single_oscillator(b, &p, Complex64::new(0.0, 0.0), 0.01, Scheme::HeunDrift);
            worst = worst.max((b.norm() - 1.0).abs());
        }
        // Heun's amplification factor exceeds 1 by (ω dt)^4/8 per step.
        assert!(worst < 1.3e-4, "{worst}");
    }

    #[test]
    fn linear_solution() {
        let p = osc(1.0, 0.05, 0.0);
        let dt = 1e-3;
        let mut b = Complex64::new(0.3, -0.7);
        let b0 = b;
        for _ in 0..10_000 {
            b = step_single_oscillator(b, &p, Complex64::new(0.0, 0.0), dt, Scheme::HeunDrift);
        }
        let exact = b0 * (Complex64::new(-0.05, -1.0) * 10.0).exp();
        assert!((b - exact).norm() < 1e-6, "{}", (b - exact).norm());
    }

    #[test]
    fn vacuum_stays_at_rest() {
        let p = SystemParams::paper_baseline();
        let integ = IntegratorConfig::new(0.02, 200.0, 0.0, p.delta2);
        let tr = simulate(&p, &integ, &NoiseSettings::disabled()).unwrap();
        assert!(tr.a.iter().chain(&tr.b1).chain(&tr.b2).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn rejects_coarse_step() {
        let p = SystemParams::paper_baseline();
        let integ = IntegratorConfig::new(0.05, 200.0, 0.0, p.delta2);
        assert!(matches!(simulate(&p, &integ, &NoiseSettings::disabled()), Err(Error::Config(_))));
        let bad = IntegratorConfig::new(0.02, 10.0, 20.0, p.delta2);
        assert!(simulate(&p, &bad, &NoiseSettings::disabled()).is_err());
    }

    #[test]
    fn stride_keeps_sixteen_samples_per_period() {
        let s = default_stride(0.02, 1.0);
        let per_period = 2.0 * std::f64::consts::PI / (s as f64 * 0.02);
        assert!(per_period >= 16.0);
        assert_eq!(s, 19);
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let p = osc(1.0, 0.0, 1.0);
        let integ = IntegratorConfig::new(0.01, 100.0, 0.0, 1.0);
        let err = simulate_single(&p, &integ, &NoiseSettings::disabled(), Some(Complex64::new(0.0, 1e3)))
            .unwrap_err();
        assert!(matches!(err, Error::Divergence { step, .. } if step > 0));
    }

    fn synthetic(env: impl Fn(f64) -> f64) -> Trajectory {
        let p = SystemParams::paper_baseline();
        let dt = 0.1;
        let times: Vec<f64> = (0..20_000).map(|i| i as f64 * dt).collect();
        let z: Vec<Complex64> = times.iter().map(|&t| Complex64::from_polar(env(t), -t)).collect();
        Trajectory {
            a: z.clone(),
            b1: z.clone(),
            b2: z,
            times,
            params_snapshot: p,
            noise_provenance: NoiseSettings::disabled(),
        }
    }

    #[test]
    fn stability_classification() {
        let decayed = synthetic(|t| (-0.05 * t).exp());
        let r = assess_stability(&decayed, 500.0).unwrap();
        assert!(r.converged, "{r:?}");

        let growing = synthetic(|t| 1.0 + 0.01 * t);
        let r = assess_stability(&growing, 500.0).unwrap();
        assert!(!r.converged, "{r:?}");

        assert!(assess_stability(&growing, 30.0).is_err());
        assert!(assess_stability(&growing, 5000.0).is_err());
    }
    #[test]
    fn gup_term_preserves_modulus_on_average() {
        let p = osc(1.0, 0.0, 1e-8);
        let integ = IntegratorConfig::new(0.01, 3000.0, 0.0, 1.0).with_stride(50);
        let tr = simulate_single(&p, &integ, &NoiseSettings::disabled(), Some(Complex64::new(1e3, 0.0))).unwrap();
        // |b| wobbles within each cycle at relative order β|b|²; compare
        // averages over ~20 cycles at both ends of the run.
        let avg = |s: &[Complex64]| s.iter().map(|b| b.norm()).sum::<f64>() / s.len() as f64;
        let n = tr.b.len();
        let (head, tail) = (avg(&tr.b[..250]), avg(&tr.b[n - 250..]));
        assert!((tail / head - 1.0).abs() < 1e-3, "{head} -> {tail}");
    }

    fn final_error(scheme: Scheme, dt: f64) -> f64 {
        let p = osc(1.0, 0.1, 0.0);
        let mut b = Complex64::new(1.0, 0.5);
        let b0 = b;
        let n = (10.0 / dt).round() as usize;
        for _ in 0..n {
            b = step_single_oscillator(b, &p, Complex64::new(0.0, 0.0), dt, scheme);
        }
        (b - b0 * Complex64::new(-1.0, -10.0).exp()).norm()
    }

    #[test]
    fn deterministic_convergence_order() {
        let heun = final_error(Scheme::HeunDrift, 0.02) / final_error(Scheme::HeunDrift, 0.01);
        let euler = final_error(Scheme::EulerMaruyama, 0.02) / final_error(Scheme::EulerMaruyama, 0.01);
        assert!((heun - 4.0).abs() < 0.2, "{heun}");
        assert!((euler - 2.0).abs() < 0.2, "{euler}");
    }

    #[test]
    fn uncoupled_resonator_matches_single_oscillator() {
        let mut params = SystemParams::identical(1e-3, 0.0, 4.1905, 1.2857, 1.0, 5.0);
        params.beta_nl = 1e-6;
        params.drive_c = 100.0;
        let integ = IntegratorConfig::new(0.02, 400.0, 0.0, 1.0).with_stride(7);
        let noise = NoiseSettings::new(99, [5.0, 5.0]).with_stream(3);
        let full = simulate(&params, &integ, &noise).unwrap();
        let single = simulate_single(&osc_with_nbar(1.0, 1e-3, 1e-6, 5.0), &integ, &noise, None).unwrap();
        assert_eq!(full.times, single.times);
        for (x, y) in full.b1.iter().zip(&single.b) {
            assert!((x - y).norm() <= 1e-12 * y.norm().max(1.0), "{x} vs {y}");
        }
    }

    fn osc_with_nbar(omega: f64, gamma: f64, beta: f64, nbar: f64) -> OscillatorParams {
        OscillatorParams { nbar, ..osc(omega, gamma, beta) }
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let mut params = SystemParams::identical(1e-3, 1e-4, 4.1905, 1.2857, 1.0, 5.0);
        params.drive_c = 10.0;
        params.drive_h = 1.0;
        let integ = IntegratorConfig::new(0.02, 100.0, 0.0, 1.0);
        let noise = NoiseSettings::new(5, [5.0, 5.0]);
        let a = simulate(&params, &integ, &noise).unwrap();
        let b = simulate(&params, &integ, &noise).unwrap();
        assert_eq!(a, b);
        let c = simulate(&params, &integ, &noise.clone().with_stream(1)).unwrap();
        assert_ne!(a.b1, c.b1);
    }
}
