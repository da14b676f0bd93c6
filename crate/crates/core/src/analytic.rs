//! Closed-form layer of the model.
//!
//! With the mechanical motion b_j = A_j e^{−iΔ₂t}, the cavity sees a phase
//! modulation ψ(t) = ξ sin(Δ₂t − θ), ξ = 2g_b|A_b|/Δ₂, θ = arg A_b, and the
//! Jacobi–Anger expansion gives
//!
//! ```text
//! a(t) = e^{iψ} Σₙ Jₙ(−ξ) e^{in(Δ₂t−θ)} [E_h e^{−iΔ₂t}/(inΔ₂ − L_h) + E_c/(inΔ₂ − L_c)]
//! L_h = −i(Δ₁ − Δ₂) − κ,   L_c = −iΔ₁ − κ
//! ```
//!
//! Writing |a|² = Σ_k P_k e^{ikΔ₂t}, the component P₋₁ resonantly drives the
//! bright mode: Ȧ_b = −Γ_b A_b + i g_b P₋₁. It splits as
//! P₋₁ = A_b F1 + F2 + A_b² F3 with F1, F2, F3 depending on |A_b| only.

use num_complex::Complex64;

use crate::bessel::symmetric_table;
use crate::error::{Error, Result};
use crate::units::SystemParams;

type C64 = Complex64;

/// Relative size of the neglected Bessel tail.
pub const TAIL_TOLERANCE: f64 = 1e-12;
/// Largest index window tried before giving up.
pub const MAX_TRUNCATION: usize = 500;
/// Modulation index used to evaluate the |A_b| → 0 limits of F1 and F3.
const XI_LIMIT: f64 = 1e-7;

/// Sideband functions at one bright-mode amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandCoefficients {
    pub f1: C64,
    pub f2: C64,
    pub f3: C64,
    pub p_minus1: C64,
    /// Time-averaged intracavity intensity P₀.
    pub p0: f64,
    pub xi: f64,
    pub truncation_order: usize,
    pub tail_bound: f64,
}

impl SidebandCoefficients {
    /// Im(F1)/|F1|: zero when the back-action on the bright mode is a pure
    /// frequency shift.
    pub fn f1_phase_diagnostic(&self) -> f64 {
        let m = self.f1.norm();
        if m == 0.0 {
            0.0
        } else {
            self.f1.im / m
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Poles {
    lh: C64,
    lc: C64,
    d2: f64,
    eh: f64,
    ec: f64,
}

impl Poles {
    fn new(p: &SystemParams, delta1: f64) -> Self {
        Poles {
            lh: C64::new(-p.kappa, -(delta1 - p.delta2)),
            lc: C64::new(-p.kappa, -delta1),
            d2: p.delta2,
            eh: p.drive_h,
            ec: p.drive_c,
        }
    }

    #[inline]
    fn h(&self, n: i64, j: f64) -> C64 {
        self.eh * j / (C64::new(0.0, n as f64 * self.d2) - self.lh)
    }

    #[inline]
    fn c(&self, n: i64, j: f64) -> C64 {
        self.ec * j / (C64::new(0.0, n as f64 * self.d2) - self.lc)
    }
}

/// θ-free sums HH + CC, HC, CH and P₀ over indices |n| ≤ order.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    first: C64,
    matched: C64,
    cross: C64,
    /// Σ|h|² + |c|² and Σ h_{m+1} c_m*, so that P₀ = diag + 2 Re(e^{−iθ}·mixed).
    p0_diag: f64,
    p0_mixed: C64,
}

impl Sums {
    fn p0(&self, theta: f64) -> f64 {
        self.p0_diag + 2.0 * (C64::from_polar(1.0, -theta) * self.p0_mixed).re
    }
}

fn sums(poles: &Poles, xi: f64, order: usize, table: &[f64], half: usize) -> Sums {
    let n = order as i64;
    // table holds J_k(−ξ) at index k + half.
    let jm = |k: i64| -> f64 {
        if k.abs() > n {
            0.0
        } else {
            table[(k + half as i64) as usize]
        }
    };
    let _ = xi;
    let h = |k: i64| poles.h(k, jm(k));
    let c = |k: i64| poles.c(k, jm(k));
    let mut s = Sums::default();
    for m in -n - 2..=n + 1 {
        let (hm1, hm2, cm, cm1) = (h(m + 1), h(m + 2), c(m), c(m + 1));
        s.first += hm1 * hm2.conj() + cm * cm1.conj();
        s.matched += hm1 * cm1.conj();
        s.cross += cm * hm2.conj();
        s.p0_diag += hm1.norm_sqr() + cm.norm_sqr();
        s.p0_mixed += hm1 * cm.conj();
    }
    s
}

fn converged_sums(poles: &Poles, xi: f64) -> Result<(Sums, usize, f64)> {
    let mut order = xi.ceil() as usize + 20;
    loop {
        let wide = order + 10;
        let table = symmetric_table(wide, -xi)?;
        let coarse = sums(poles, xi, order, &table, wide);
        let fine = sums(poles, xi, wide, &table, wide);
        let rel = |a: C64, b: C64| {
            let d = (a - b).norm();
            if d == 0.0 {
                0.0
            } else {
                d / b.norm().max(f64::MIN_POSITIVE)
            }
        };
        let tail = rel(coarse.first, fine.first)
            .max(rel(coarse.matched, fine.matched))
            .max(rel(coarse.cross, fine.cross))
            .max(rel(C64::new(coarse.p0_diag, 0.0), C64::new(fine.p0_diag, 0.0)))
            .max(rel(coarse.p0_mixed, fine.p0_mixed));
        if tail <= TAIL_TOLERANCE {
            return Ok((fine, wide, tail));
        }
        if order >= MAX_TRUNCATION {
            return Err(Error::Numerical(format!(
                "sideband sums not converged at N = {order}: xi = {xi:.4e}, relative tail {tail:.3e}"
            )));
        }
        order = (order + 20).min(MAX_TRUNCATION);
    }
}

/// Evaluate F1, F2, F3 and P₋₁ at bright amplitude |A_b| and phase θ.
pub fn sideband_coefficients(abs_ab: f64, theta: f64, params: &SystemParams) -> Result<SidebandCoefficients> {
    sideband_coefficients_at(abs_ab, theta, params, params.delta1)
}

fn sideband_coefficients_at(
    abs_ab: f64,
    theta: f64,
    params: &SystemParams,
    delta1: f64,
) -> Result<SidebandCoefficients> {
    if !(abs_ab >= 0.0) || !abs_ab.is_finite() {
        return Err(Error::domain(format!("|A_b| must be finite and non-negative, got {abs_ab}")));
    }
    if !(params.delta2 > 0.0) {
        return Err(Error::domain("delta2 must be positive"));
    }
    let g_b = params.g_bright();
    let poles = Poles::new(params, delta1);
    let xi = 2.0 * g_b * abs_ab / params.delta2;
    let (s, order, tail) = converged_sums(&poles, xi)?;

    // F1 and F3 carry 1/|A_b| and 1/|A_b|²; at rest take the small-ξ limit.
    let (f1, f3) = if g_b == 0.0 {
        (C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    } else if abs_ab == 0.0 {
        let amp = XI_LIMIT * params.delta2 / (2.0 * g_b);
        let (l, _, _) = converged_sums(&poles, XI_LIMIT)?;
        (l.first / amp, l.cross / (amp * amp))
    } else {
        (s.first / abs_ab, s.cross / (abs_ab * abs_ab))
    };
    let e1 = C64::from_polar(1.0, theta);
    let p_minus1 = e1 * s.first + s.matched + e1 * e1 * s.cross;
    Ok(SidebandCoefficients {
        f1,
        f2: s.matched,
        f3,
        p_minus1,
        p0: s.p0(theta),
        xi,
        truncation_order: order,
        tail_bound: tail,
    })
}

/// Stationary cavity field for a prescribed bright-mode motion.
#[derive(Debug, Clone)]
pub struct CavityResponse {
    xi: f64,
    theta: f64,
    delta2: f64,
    /// (n, e^{−inθ}·h_n, e^{−inθ}·c_n)
    terms: Vec<(i64, C64, C64)>,
}

impl CavityResponse {
    pub fn new(abs_ab: f64, theta: f64, params: &SystemParams) -> Result<Self> {
        if !(abs_ab >= 0.0) || !(params.delta2 > 0.0) {
            return Err(Error::domain("need |A_b| >= 0 and delta2 > 0"));
        }
        let poles = Poles::new(params, params.delta1);
        let xi = 2.0 * params.g_bright() * abs_ab / params.delta2;
        let (_, order, _) = converged_sums(&poles, xi)?;
        let table = symmetric_table(order, -xi)?;
        let n = order as i64;
        let terms = (-n..=n)
            .map(|k| {
                let j = table[(k + n) as usize];
                let ph = C64::from_polar(1.0, -(k as f64) * theta);
                (k, ph * poles.h(k, j), ph * poles.c(k, j))
            })
            .collect();
        Ok(CavityResponse {
            xi,
            theta,
            delta2: params.delta2,
            terms,
        })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn eval(&self, t: f64) -> C64 {
        let phase = self.delta2 * t;
        let psi = self.xi * (phase - self.theta).sin();
        let mut sum = C64::new(0.0, 0.0);
        for &(n, h, c) in &self.terms {
            let z = C64::from_polar(1.0, n as f64 * phase);
            sum += z * (h * C64::from_polar(1.0, -phase) + c);
        }
        C64::from_polar(1.0, psi) * sum
    }
}

/// Closed-form cavity field a(t) for a stationary bright amplitude.
pub fn cavity_closed_form(t: f64, abs_ab: f64, theta: f64, params: &SystemParams) -> Result<C64> {
    Ok(CavityResponse::new(abs_ab, theta, params)?.eval(t))
}

/// Effective rates of the supermode equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupermodeParams {
    pub gamma_b: C64,
    pub gamma_d: C64,
    pub mu: C64,
    pub g_b: f64,
    /// Mean mechanical frequency minus Δ₂; equals Im Γ_b.
    pub delta_p: f64,
}

/// Γ_b = Γ_d = i(Δω₁ + Δω₂)/2 + (γ₁ + γ₂)/2, μ = i(ω₂ − ω₁)/2 + (γ₂ − γ₁)/2,
/// with Δω_j = ω_j − Δ₂.
pub fn supermode_rates(params: &SystemParams) -> SupermodeParams {
    let dw1 = params.omega_b1 - params.delta2;
    let dw2 = params.omega_b2 - params.delta2;
    let gamma = C64::new((params.gamma1 + params.gamma2) / 2.0, (dw1 + dw2) / 2.0);
    SupermodeParams {
        gamma_b: gamma,
        gamma_d: gamma,
        mu: C64::new(
            (params.gamma2 - params.gamma1) / 2.0,
            (params.omega_b2 - params.omega_b1) / 2.0,
        ),
        g_b: params.g_bright(),
        delta_p: gamma.im,
    }
}

/// Stationary bright-mode solution of the slow flow.
#[derive(Debug, Clone, PartialEq)]
pub struct BrightSteadyState {
    pub amplitude: C64,
    /// |Γ_b A_b − i g_b P₋₁| / (|Γ_b| |A_b|) at the solution (absolute at A_b = 0).
    pub residual: f64,
    pub coefficients: SidebandCoefficients,
    /// Cavity detuning including the static radiation-pressure displacement.
    pub effective_delta1: f64,
    pub continuation_steps: usize,
    pub warnings: Vec<String>,
}

const NEWTON_MAX_ITER: usize = 40;
const NEWTON_TOL: f64 = 1e-13;
const MIN_CONTINUATION_STEP: f64 = 1e-6;

/// Solve 0 = −Γ_b A_b + i g_b P₋₁(A_b) with A_d = 0 and the GUP terms dropped.
///
/// The branch is followed from zero drive by continuation in the drive
/// amplitudes, with a Newton solve (finite-difference Jacobian) at each step.
/// The static displacement β_{j,0} = i g_j P₀/(γ_j + iω_j) shifts the cavity
/// detuning and is iterated to self-consistency.
pub fn steady_bright_amplitude(params: &SystemParams) -> Result<BrightSteadyState> {
    params.validate()?;
    let rates = supermode_rates(params);
    let mut warnings = Vec::new();

    let static_shift = |p0: f64| -> f64 {
        let beta = |g: f64, w: f64, gam: f64| (C64::new(0.0, g * p0) / C64::new(gam, w)).re;
        2.0 * (params.g1 * beta(params.g1, params.omega_b1, params.gamma1)
            + params.g2 * beta(params.g2, params.omega_b2, params.gamma2))
    };

    let mut delta1 = params.delta1;
    let mut z = C64::new(0.0, 0.0);
    let mut steps = 0;
    let mut converged = false;
    for _ in 0..100 {
        let (sol, n) = continuation(params, &rates, delta1, &mut warnings)?;
        z = sol;
        steps += n;
        let p0 = sideband_coefficients_at(z.norm(), z.arg(), params, delta1)?.p0;
        let next = params.delta1 - static_shift(p0);
        let change = (next - delta1).abs();
        delta1 = next;
        if change <= 1e-14 * params.delta1.abs().max(params.kappa) {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push("static radiation-pressure detuning did not settle in 100 passes".to_string());
    }
    let coefficients = sideband_coefficients_at(z.norm(), z.arg(), params, delta1)?;
    let g = rates.gamma_b * z - C64::new(0.0, rates.g_b) * coefficients.p_minus1;
    let residual = if z.norm() > 0.0 {
        g.norm() / (rates.gamma_b.norm() * z.norm())
    } else {
        g.norm() / rates.gamma_b.norm()
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(BrightSteadyState {
        amplitude: z,
        residual,
        coefficients,
        effective_delta1: delta1,
        continuation_steps: steps,
        warnings,
    })
}

/// Follow the branch from zero drive at fixed cavity detuning.
fn continuation(
    params: &SystemParams,
    rates: &SupermodeParams,
    delta1: f64,
    warnings: &mut Vec<String>,
) -> Result<(C64, usize)> {
    if params.drive_h == 0.0 && params.drive_c == 0.0 {
        return Ok((C64::new(0.0, 0.0), 0));
    }
    let mut lambda = 0.0f64;
    let mut step = 0.05f64;
    let mut z = C64::new(0.0, 0.0);
    let mut steps = 0;
    while lambda < 1.0 {
        let target = (lambda + step).min(1.0);
        let mut scaled = params.clone();
        scaled.drive_h *= target;
        scaled.drive_c *= target;
        // P₋₁ scales with the square of the drive at low amplitude.
        let guess = if lambda > 0.0 { z * (target / lambda).powi(2) } else { z };
        match newton(&scaled, rates, delta1, guess) {
            Ok(sol) => {
                let jump = (sol - z).norm();
                if lambda > 0.0 && jump > 0.5 * sol.norm().max(z.norm()) && step > 1e-3 {
                    // Large jumps hint at a fold; refine before accepting.
                    step /= 4.0;
                    continue;
                }
                z = sol;
                lambda = target;
                steps += 1;
                step = (step * 1.5).min(0.1);
            }
            Err(e) => {
                step /= 2.0;
                if step < MIN_CONTINUATION_STEP {
                    warnings.push(format!(
                        "continuation stalled at drive fraction {lambda:.6}: possible bistability"
                    ));
                    return Err(Error::Numerical(format!(
                        "steady bright amplitude: no continuous branch beyond drive fraction {lambda:.6} ({e})"
                    )));
                }
            }
        }
    }
    Ok((z, steps))
}

fn residual_fn(params: &SystemParams, rates: &SupermodeParams, delta1: f64, z: C64) -> Result<C64> {
    let c = sideband_coefficients_at(z.norm(), z.arg(), params, delta1)?;
    Ok(-z + C64::new(0.0, rates.g_b) * c.p_minus1 / rates.gamma_b)
}

fn newton(params: &SystemParams, rates: &SupermodeParams, delta1: f64, start: C64) -> Result<C64> {
    let mut z = start;
    let mut f = residual_fn(params, rates, delta1, z)?;
    for _ in 0..NEWTON_MAX_ITER {
        let h = 1e-7 * z.norm().max(1e-3);
        let fx = (residual_fn(params, rates, delta1, z + C64::new(h, 0.0))? - f) / h;
        let fy = (residual_fn(params, rates, delta1, z + C64::new(0.0, h))? - f) / h;
        let det = fx.re * fy.im - fy.re * fx.im;
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Numerical("singular Jacobian in bright-mode Newton solve".into()));
        }
        let dx = (-f.re * fy.im + fy.re * f.im) / det;
        let dy = (-fx.re * f.im + fx.im * f.re) / det;
        let mut delta = C64::new(dx, dy);
        // Backtracking keeps the iterate from overshooting near folds.
        let mut accepted = false;
        for _ in 0..20 {
            let cand = z + delta;
            let fc = residual_fn(params, rates, delta1, cand)?;
            if fc.norm() < f.norm() || fc.norm() <= NEWTON_TOL * cand.norm() {
                z = cand;
                f = fc;
                accepted = true;
                break;
            }
            delta *= 0.5;
        }
        if !accepted {
            return Err(Error::Numerical("Newton line search failed".into()));
        }
        if delta.norm() <= NEWTON_TOL * z.norm().max(f64::MIN_POSITIVE) || f.norm() <= NEWTON_TOL * z.norm() {
            return Ok(z);
        }
    }
    Err(Error::Numerical(format!(
        "Newton did not converge in {NEWTON_MAX_ITER} iterations (|residual| = {:.3e})",
        f.norm()
    )))
}

/// Low-drive limit of the steady state, i g_b F2/Γ_b with F2 at rest.
pub fn low_drive_bright_amplitude(params: &SystemParams) -> Result<C64> {
    let rates = supermode_rates(params);
    let c = sideband_coefficients(0.0, 0.0, params)?;
    Ok(C64::new(0.0, rates.g_b) * c.f2 / rates.gamma_b)
}

/// Steady bright amplitude when the beat frequency sits `delta_p` below the
/// mean mechanical frequency (Δ₂ = ω̄ − Δ_p).
pub fn detuned_bright_amplitude(params: &SystemParams, delta_p: f64) -> Result<C64> {
    if delta_p == 0.0 {
        return Err(Error::domain("delta_p must be non-zero"));
    }
    let mut p = params.clone();
    p.delta2 = params.mean_omega() - delta_p;
    Ok(steady_bright_amplitude(&p)?.amplitude)
}

/// Large-detuning estimate |g_b F2/Δ_p| of the bright amplitude.
pub fn detuned_bright_magnitude_estimate(params: &SystemParams, delta_p: f64) -> Result<f64> {
    if delta_p == 0.0 {
        return Err(Error::domain("delta_p must be non-zero"));
    }
    let c = sideband_coefficients(0.0, 0.0, params)?;
    Ok((params.g_bright() * c.f2 / delta_p).norm())
}

/// Coherent dark amplitude sustained by the bright mode through μ.
///
/// From Ȧ_d = −Γ_d A_d − μ A_b (with A_d = (g₁A₂ − g₂A₁)/g_b) the stationary
/// value is −(μ/Γ_d) A_b; its modulus is ≈ (δ/Δ_p)|A_b| when Δ_p ≫ γ.
pub fn dark_excitation_estimate(ab: C64, mu: C64, gamma_d: C64) -> C64 {
    if mu == C64::new(0.0, 0.0) {
        return C64::new(0.0, 0.0);
    }
    -(mu / gamma_d) * ab
}

/// Symmetrized thermal noise spectrum γ(n̄ + ½)/((|ω| − ω_p)² + γ²).
///
/// The two-sided PSD of a complex amplitude with stationary variance n̄ + ½
/// and correlation e^{−γ|τ|} is twice this value.
pub fn lorentzian_spectrum(omega: f64, omega_peak: f64, gamma: f64, occupancy: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::domain("gamma must be positive"));
    }
    let d = omega.abs() - omega_peak;
    Ok(gamma * (occupancy + 0.5) / (d * d + gamma * gamma))
}

/// Validity bound on β_NL|A|² for the amplitude-dependent frequency.
pub const SHIFT_VALIDITY: f64 = 0.1;

/// Frequency ω_b(1 + β_NL|A|²) of the anharmonic oscillator.
pub fn predicted_shift(omega_b: f64, beta_nl: f64, amp: f64) -> f64 {
    let x = beta_nl * amp * amp;
    if x >= SHIFT_VALIDITY {
        log::warn!("beta_nl*|A|^2 = {x:.3} is outside the small-shift regime (< {SHIFT_VALIDITY})");
    }
    omega_b * (1.0 + x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::bessel_j;

    /// Paper couplings with the 0.036 µW and 100 µW drives.
    fn paper() -> SystemParams {
        let mut p = SystemParams::paper_baseline();
        p.drive_h = 494.932304;
        p.drive_c = 26085.2228;
        p
    }

    #[test]
    fn rest_collapse() {
        let p = paper();
        let c = sideband_coefficients(0.0, 0.3, &p).unwrap();
        let lh = C64::new(-p.kappa, -(p.delta1 - p.delta2));
        let lc = C64::new(-p.kappa, -p.delta1);
        // Only the n = 0 matched term survives: E_h E_c / [(−L_h)(−L_c)*].
        let want = p.drive_h * p.drive_c / ((-lh) * (-lc).conj());
        assert!((c.f2 - want).norm() < 1e-12 * want.norm());
        assert_eq!(c.xi, 0.0);
        assert!((c.p_minus1 - c.f2).norm() < 1e-12 * want.norm());
    }

    #[test]
    fn single_tone_limit() {
        let mut p = paper();
        p.drive_c = 0.0;
        let c = sideband_coefficients(2e4, 0.7, &p).unwrap();
        assert_eq!(c.f2, C64::new(0.0, 0.0));
        assert_eq!(c.f3, C64::new(0.0, 0.0));
        assert!(c.f1.norm() > 0.0);
    }

    #[test]
    fn decomposition_matches_direct_sum() {
        // P₋₁ = Σ_m s_m s*_{m+1} with s_m = h_{m+1} + c_m built from scratch.
        let p = paper();
        let (amp, theta) = (4.0e5, 0.9);
        let c = sideband_coefficients(amp, theta, &p).unwrap();
        let xi = 2.0 * p.g_bright() * amp / p.delta2;
        let lh = C64::new(-p.kappa, -(p.delta1 - p.delta2));
        let lc = C64::new(-p.kappa, -p.delta1);
        let coef = |n: i64, e: f64, l: C64| {
            e * bessel_j(n, -xi).unwrap() * C64::from_polar(1.0, -(n as f64) * theta)
                / (C64::new(0.0, n as f64 * p.delta2) - l)
        };
        let s = |m: i64| coef(m + 1, p.drive_h, lh) + coef(m, p.drive_c, lc);
        let direct: C64 = (-60..60).map(|m| s(m) * s(m + 1).conj()).sum();
        let amp_c = C64::from_polar(amp, theta);
        let split = amp_c * c.f1 + c.f2 + amp_c * amp_c * c.f3;
        assert!((direct - c.p_minus1).norm() < 1e-10 * direct.norm());
        assert!((split - c.p_minus1).norm() < 1e-10 * direct.norm());
    }

    #[test]
    fn truncation_is_converged() {
        let p = paper();
        for amp in [0.0, 1e4, 3e5, 2e6] {
            let c = sideband_coefficients(amp, 0.0, &p).unwrap();
            assert!(c.tail_bound <= TAIL_TOLERANCE);
            let poles = Poles::new(&p, p.delta1);
            let wide = c.truncation_order + 40;
            let table = symmetric_table(wide, -c.xi).unwrap();
            let s = sums(&poles, c.xi, wide, &table, wide);
            assert!((s.matched - c.f2).norm() <= 1e-10 * c.f2.norm());
        }
    }

    #[test]
    fn limits_are_continuous() {
        let p = paper();
        let zero = sideband_coefficients(0.0, 0.0, &p).unwrap();
        let tiny = sideband_coefficients(1e-2, 0.0, &p).unwrap();
        assert!((zero.f1 - tiny.f1).norm() < 1e-6 * zero.f1.norm());
        assert!((zero.f3 - tiny.f3).norm() < 1e-5 * zero.f3.norm());
    }

    #[test]
    fn cavity_without_coupling() {
        let mut p = paper();
        p.g1 = 0.0;
        p.g2 = 0.0;
        let lh = C64::new(-p.kappa, -(p.delta1 - p.delta2));
        let lc = C64::new(-p.kappa, -p.delta1);
        for t in [0.0, 1.3, 7.7] {
            let a = cavity_closed_form(t, 1e5, 0.2, &p).unwrap();
            let want = p.drive_h * C64::from_polar(1.0, -p.delta2 * t) / (-lh) + p.drive_c / (-lc);
            assert!((a - want).norm() < 1e-12 * want.norm());
        }
    }

    #[test]
    fn mean_intensity_is_p0() {
        let p = paper();
        let amp = 3.0 * p.delta2 / (2.0 * p.g_bright());
        let resp = CavityResponse::new(amp, 0.4, &p).unwrap();
        let c = sideband_coefficients(amp, 0.4, &p).unwrap();
        let period = 2.0 * std::f64::consts::PI / p.delta2;
        let n = 4096;
        let mean = (0..n).map(|k| resp.eval(k as f64 * period / n as f64).norm_sqr()).sum::<f64>() / n as f64;
        assert!((mean - c.p0).abs() < 1e-10 * c.p0);
    }

    #[test]
    fn supermode_rate_examples() {
        let p = paper();
        let r = supermode_rates(&p);
        assert_eq!(r.mu, C64::new(0.0, 0.0));
        assert_eq!(r.gamma_b, r.gamma_d);
        assert_eq!(r.gamma_b.im, 0.0);

        let d = 1.9048e-6;
        let m = supermode_rates(&p.clone().with_mismatch(d));
        assert_eq!(m.mu.re, 0.0);
        assert!((m.mu.norm() - d).abs() < 1e-15);
    }

    #[test]
    fn steady_state_zero_drive() {
        let mut p = paper();
        p.drive_h = 0.0;
        p.drive_c = 0.0;
        let s = steady_bright_amplitude(&p).unwrap();
        assert_eq!(s.amplitude, C64::new(0.0, 0.0));
    }

    fn desk() -> SystemParams {
        let mut p = SystemParams::identical(1e-4, 1.9048e-6, 4.1905, 1.2857, 1.0, 40.0);
        p.drive_h = 494.932304;
        p.drive_c = 26085.2228;
        p
    }

    #[test]
    fn steady_state_residual() {
        let p = desk();
        let s = steady_bright_amplitude(&p).unwrap();
        assert!(s.amplitude.norm() > 1.0);
        assert!(s.residual < 1e-10, "{}", s.residual);
    }

    #[test]
    fn low_drive_matches_linearization() {
        let mut p = desk();
        p.drive_h *= 1e-3;
        p.drive_c *= 1e-3;
        let full = steady_bright_amplitude(&p).unwrap().amplitude;
        let lin = low_drive_bright_amplitude(&p).unwrap();
        assert!((full - lin).norm() < 1e-3 * lin.norm(), "{full} vs {lin}");
    }

    #[test]
    fn amplitude_monotone_in_drive_power() {
        let base = desk();
        let mut last = 0.0;
        for k in 1..=6 {
            let mut p = base.clone();
            p.drive_h = base.drive_h * (k as f64 / 6.0).sqrt();
            let a = steady_bright_amplitude(&p).unwrap().amplitude.norm();
            assert!(a >= last, "{a} < {last}");
            last = a;
        }
    }

    #[test]
    fn detuned_amplitude_scales_inversely() {
        let p = desk();
        let a1 = detuned_bright_magnitude_estimate(&p, 1e-2).unwrap();
        let a2 = detuned_bright_magnitude_estimate(&p, 2e-2).unwrap();
        assert!((a1 / a2 - 2.0).abs() < 1e-12);
        assert!(detuned_bright_amplitude(&p, 0.0).is_err());
    }

    #[test]
    fn dark_estimate_ratio() {
        let gamma = C64::new(1e-7, 480.0 * 1e-5);
        let mu = C64::new(0.0, 1e-5);
        let ad = dark_excitation_estimate(C64::new(1e4, 0.0), mu, gamma);
        assert!((ad.norm() / 1e4 - 1.0 / 480.0).abs() < 1e-6);
        assert_eq!(dark_excitation_estimate(C64::new(1e4, 0.0), C64::new(0.0, 0.0), gamma).norm(), 0.0);
    }

    #[test]
    fn lorentzian_properties() {
        let (w0, g, n) = (1.0, 1e-3, 40.0);
        assert!((lorentzian_spectrum(w0, w0, g, n).unwrap() - (n + 0.5) / g).abs() < 1e-9);
        let half = lorentzian_spectrum(w0 + g, w0, g, n).unwrap();
        assert!((half / ((n + 0.5) / g) - 0.5).abs() < 1e-12);
        // ∫ over ±500 linewidths by the midpoint rule, tails added analytically.
        let h = g / 200.0;
        let span = 500.0 * g;
        let steps = (2.0 * span / h) as usize;
        let integral: f64 = (0..steps)
            .map(|k| lorentzian_spectrum(w0 - span + (k as f64 + 0.5) * h, w0, g, n).unwrap() * h)
            .sum();
        let tails = 2.0 * (n + 0.5) * (g / span).atan();
        let want = std::f64::consts::PI * (n + 0.5);
        assert!(((integral + tails) - want).abs() < 1e-5 * want);
        assert!(lorentzian_spectrum(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn shift_formula() {
        assert_eq!(predicted_shift(1.0, 0.0, 1e5), 1.0);
        assert!((predicted_shift(1.0, 1e-15, 1e5) - (1.0 + 1e-5)).abs() < 1e-15);
    }
}
