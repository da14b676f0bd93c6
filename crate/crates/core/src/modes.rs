//! Slow amplitudes and supermodes.
//!
//! A resonator trajectory is modelled as b_j(t) = β_{j,0} + A_j(t) e^{−iΔ₂t}
//! with a slowly varying A_j. The static offset is removed, the remainder is
//! shifted to baseband and the pair (A₁, A₂) is rotated into the bright mode
//! A_b (the combination the cavity couples to) and the dark mode A_d.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sde::Trajectory;

type C64 = Complex64;

/// Minimum number of Δ₂ periods in an offset window.
pub const MIN_OFFSET_PERIODS: usize = 10;

/// Demodulated amplitudes of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowAmplitudeSeries {
    pub times: Vec<f64>,
    pub a1: Vec<C64>,
    pub a2: Vec<C64>,
    pub ab: Vec<C64>,
    pub ad: Vec<C64>,
    pub beta_offset1: C64,
    pub beta_offset2: C64,
    pub frame_freq: f64,
}

impl SlowAmplitudeSeries {
    /// Demodulate both resonators, estimating each offset over the whole record.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        Self::from_trajectory_with_window(traj, traj.duration())
    }

    /// As [`from_trajectory`](Self::from_trajectory) with the offsets
    /// estimated over the final `offset_window` of the record.
    pub fn from_trajectory_with_window(traj: &Trajectory, offset_window: f64) -> Result<Self> {
        let p = &traj.params_snapshot;
        let d2 = p.delta2;
        let o1 = estimate_static_offset(&traj.times, &traj.b1, d2, offset_window)?;
        let o2 = estimate_static_offset(&traj.times, &traj.b2, d2, offset_window)?;
        let a1 = demodulate(&traj.times, &traj.b1, o1.value, d2);
        let a2 = demodulate(&traj.times, &traj.b2, o2.value, d2);
        let (ab, ad) = supermode_transform(&a1, &a2, p.g1, p.g2)?;
        Ok(SlowAmplitudeSeries {
            times: traj.times.clone(),
            a1,
            a2,
            ab,
            ad,
            beta_offset1: o1.value,
            beta_offset2: o2.value,
            frame_freq: d2,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

/// Result of [`estimate_static_offset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticOffset {
    pub value: C64,
    /// Duration actually used: a whole number of Δ₂ periods.
    pub window: f64,
    pub periods: usize,
    /// The requested window was shortened to a whole number of periods.
    pub truncated: bool,
}

/// Static displacement β_{j,0} from the final `t_window` of a resonator series.
///
/// The window is cut to a whole number of Δ₂ periods. Offset and fast
/// amplitude are fitted jointly by least squares to b = β₀ + A e^{−iΔ₂t},
/// which equals the window mean up to sampling effects and is exact on
/// ansatz-shaped input.
pub fn estimate_static_offset(times: &[f64], bj: &[C64], delta2: f64, t_window: f64) -> Result<StaticOffset> {
    if times.len() != bj.len() || times.len() < 2 {
        return Err(Error::config("offset estimation needs matching series of at least two samples"));
    }
    if !(delta2 > 0.0) {
        return Err(Error::domain("delta2 must be positive"));
    }
    let period = 2.0 * std::f64::consts::PI / delta2;
    let t_end = times[times.len() - 1];
    let available = t_end - times[0];
    let requested = t_window.min(available + 0.5 * (times[1] - times[0]));
    let periods = (requested / period + 1e-9).floor() as usize;
    if periods < MIN_OFFSET_PERIODS {
        return Err(Error::config(format!(
            "offset window {t_window} holds {periods} periods of 2pi/delta2; at least {MIN_OFFSET_PERIODS} are needed"
        )));
    }
    let window = periods as f64 * period;
    let truncated = (requested - window).abs() > 1e-9 * period || t_window > available + 1e-9 * period;
    if truncated {
        log::debug!("offset window {t_window} truncated to {periods} whole periods ({window})");
    }

    // Normal equations for the basis (1, e^{−iΔ₂t}) over samples in [t_end − window, t_end].
    let t_start = t_end - window;
    let (mut n, mut s_e, mut s_b, mut s_be) = (0.0f64, C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    let eps = 1e-9 * (times[1] - times[0]);
    for (t, b) in times.iter().zip(bj) {
        if *t < t_start - eps {
            continue;
        }
        let e = C64::from_polar(1.0, -delta2 * t);
        n += 1.0;
        s_e += e;
        s_b += b;
        s_be += b * e.conj();
    }
    // [n  s_e; s_e*  n] [β₀; A] = [s_b; s_be]
    let det = n * n - s_e.norm_sqr();
    let value = if det > 1e-12 * n * n {
        (s_b * n - s_e * s_be) / det
    } else {
        s_b / n
    };
    Ok(StaticOffset {
        value,
        window,
        periods,
        truncated,
    })
}

/// A_j(t) = (b_j(t) − β_{j,0}) e^{+iΔ₂t}.
pub fn demodulate(times: &[f64], bj: &[C64], beta_offset: C64, delta2: f64) -> Vec<C64> {
    times
        .iter()
        .zip(bj)
        .map(|(t, b)| (b - beta_offset) * C64::from_polar(1.0, delta2 * t))
        .collect()
}

fn bright_norm(g1: f64, g2: f64) -> Result<f64> {
    let gb = g1.hypot(g2);
    if !(gb > 0.0) {
        return Err(Error::domain("supermodes need g1^2 + g2^2 > 0"));
    }
    Ok(gb)
}

/// A_b = (g₁A₁ + g₂A₂)/g_b, A_d = (g₁A₂ − g₂A₁)/g_b with g_b = √(g₁² + g₂²).
pub fn supermode_transform(a1: &[C64], a2: &[C64], g1: f64, g2: f64) -> Result<(Vec<C64>, Vec<C64>)> {
    let gb = bright_norm(g1, g2)?;
    if a1.len() != a2.len() {
        return Err(Error::config("supermode inputs differ in length"));
    }
    let (c1, c2) = (g1 / gb, g2 / gb);
    Ok(a1
        .iter()
        .zip(a2)
        .map(|(x, y)| (x * c1 + y * c2, y * c1 - x * c2))
        .unzip())
}

/// Inverse of [`supermode_transform`].
pub fn inverse_supermode_transform(ab: &[C64], ad: &[C64], g1: f64, g2: f64) -> Result<(Vec<C64>, Vec<C64>)> {
    let gb = bright_norm(g1, g2)?;
    if ab.len() != ad.len() {
        return Err(Error::config("supermode inputs differ in length"));
    }
    let (c1, c2) = (g1 / gb, g2 / gb);
    Ok(ab
        .iter()
        .zip(ad)
        .map(|(b, d)| (b * c1 - d * c2, b * c2 + d * c1))
        .unzip())
}

/// Mean of |A(t)| over samples with t ≥ t_start.
pub fn time_avg_amplitude(times: &[f64], series: &[C64], t_start: f64) -> Result<f64> {
    let (sum, n) = times
        .iter()
        .zip(series)
        .filter(|(t, _)| **t >= t_start)
        .fold((0.0, 0usize), |(s, n), (_, a)| (s + a.norm(), n + 1));
    if n == 0 {
        return Err(Error::domain(format!("no samples at or after t = {t_start}")));
    }
    Ok(sum / n as f64)
}

/// Zero-phase 4th-order Butterworth low-pass (forward and backward passes of a
/// 2nd-order design). Used for amplitude reporting only.
pub fn lowpass_zero_phase(series: &[C64], dt: f64, cutoff: f64) -> Result<Vec<C64>> {
    if !(dt > 0.0) || !(cutoff > 0.0) {
        return Err(Error::domain("lowpass needs positive dt and cutoff"));
    }
    let nyquist = std::f64::consts::PI / dt;
    if cutoff >= nyquist {
        return Err(Error::domain(format!("cutoff {cutoff} at or above Nyquist {nyquist}")));
    }
    if series.is_empty() {
        return Ok(Vec::new());
    }
    let section = Biquad::butterworth(cutoff * dt / 2.0, std::f64::consts::FRAC_1_SQRT_2);
    let pad = 12.min(series.len() - 1);
    // Odd extension about each end suppresses start-up transients.
    let first = series[0];
    let last = series[series.len() - 1];
    let mut ext = Vec::with_capacity(series.len() + 2 * pad);
    ext.extend((1..=pad).rev().map(|k| first * 2.0 - series[k]));
    ext.extend_from_slice(series);
    ext.extend((1..=pad).map(|k| last * 2.0 - series[series.len() - 1 - k]));

    section.run(&mut ext);
    ext.reverse();
    section.run(&mut ext);
    ext.reverse();
    Ok(ext[pad..pad + series.len()].to_vec())
}

/// Smoothed amplitude for reporting: low-pass at Δ₂/4.
pub fn smooth_for_reporting(series: &[C64], dt: f64, delta2: f64) -> Result<Vec<C64>> {
    lowpass_zero_phase(series, dt, delta2 / 4.0)
}

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// Bilinear-transform low-pass with prewarped half-angle `k_arg` = ω_c·dt/2.
    fn butterworth(k_arg: f64, q: f64) -> Self {
        let k = k_arg.tan();
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b0 = k * k * norm;
        Biquad {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
        }
    }

    fn run(&self, x: &mut [C64]) {
        let Some(&x0) = x.first() else { return };
        // Start from the steady state for a constant input equal to x[0].
        let mut z2 = x0 * (self.b[2] - self.a[1]);
        let mut z1 = x0 * (1.0 - self.b[0]);
        for v in x.iter_mut() {
            let input = *v;
            let y = input * self.b[0] + z1;
            z1 = input * self.b[1] - y * self.a[0] + z2;
            z2 = input * self.b[2] - y * self.a[1];
            *v = y;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn offset_of_ansatz_input() {
        let d2 = 1.0;
        let t = grid(4000, 0.37);
        let b: Vec<C64> = t.iter().map(|&t| C64::new(3.0, 0.0) + 2.0 * C64::from_polar(1.0, -d2 * t)).collect();
        let o = estimate_static_offset(&t, &b, d2, 1000.0).unwrap();
        assert!((o.value - C64::new(3.0, 0.0)).norm() < 1e-12);

        let pure: Vec<C64> = t.iter().map(|&t| C64::from_polar(5.0, -d2 * t + 0.3)).collect();
        let o = estimate_static_offset(&t, &pure, d2, 1000.0).unwrap();
        assert!(o.value.norm() < 1e-10 * 5.0);
    }

    #[test]
    fn offset_window_rules() {
        let t = grid(1000, 0.1);
        let b = vec![C64::new(1.0, 0.0); 1000];
        assert!(estimate_static_offset(&t, &b, 1.0, 30.0).is_err());
        let o = estimate_static_offset(&t, &b, 1.0, 70.0).unwrap();
        assert!(o.truncated);
        assert_eq!(o.periods, 11);
        let exact = estimate_static_offset(&t, &b, 1.0, 11.0 * TWO_PI).unwrap();
        assert!(!exact.truncated);
    }

    #[test]
    fn offset_under_white_noise() {
        let sigma = 0.5;
        let t = grid(20_000, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b: Vec<C64> = t
            .iter()
            .map(|&t| {
                let n: f64 = StandardNormal.sample(&mut rng);
                let m: f64 = StandardNormal.sample(&mut rng);
                C64::new(-2.0, 1.0) + C64::from_polar(4.0, -t) + C64::new(n, m) * (sigma / 2f64.sqrt())
            })
            .collect();
        let o = estimate_static_offset(&t, &b, 1.0, 1e9).unwrap();
        let n = (o.window / 0.3) as f64;
        assert!((o.value - C64::new(-2.0, 1.0)).norm() < 5.0 * sigma / n.sqrt());
    }

    #[test]
    fn demodulation_recovers_amplitude() {
        let d2 = 1.0;
        let amp = C64::new(0.7, -1.1);
        let t = grid(2000, 0.35);
        let b: Vec<C64> = t.iter().map(|&t| C64::new(-4.0, 2.5) + amp * C64::from_polar(1.0, -d2 * t)).collect();
        let o = estimate_static_offset(&t, &b, d2, 600.0).unwrap();
        assert!((o.value - C64::new(-4.0, 2.5)).norm() < 1e-9 * 4.0);
        for a in demodulate(&t, &b, o.value, d2) {
            assert!((a - amp).norm() < 1e-9 * amp.norm());
        }
    }

    #[test]
    fn two_tone_sideband() {
        let (d2, dw, eps) = (1.0, 0.05, 0.01);
        let a = C64::new(1.0, 0.5);
        let t = grid(500, 0.2);
        let b: Vec<C64> = t
            .iter()
            .map(|&t| a * C64::from_polar(1.0, -d2 * t) + eps * C64::from_polar(1.0, -(d2 + dw) * t))
            .collect();
        let out = demodulate(&t, &b, C64::new(0.0, 0.0), d2);
        for (t, v) in t.iter().zip(out) {
            let want = a + eps * C64::from_polar(1.0, -dw * t);
            assert!((v - want).norm() < 1e-12);
        }
    }

    #[test]
    fn supermode_examples() {
        let a = C64::new(0.3, 0.4);
        let (b, d) = supermode_transform(&[a], &[a], 1.0, 1.0).unwrap();
        assert!((b[0] - a * 2f64.sqrt()).norm() < 1e-15);
        assert_eq!(d[0], C64::new(0.0, 0.0));

        let (b, d) = supermode_transform(&[C64::new(1.0, 0.0)], &[C64::new(0.0, 0.0)], 2.0, 2.0).unwrap();
        assert!((d[0].re + 0.5f64.sqrt()).abs() < 1e-15);
        assert!((b[0].re - 0.5f64.sqrt()).abs() < 1e-15);

        assert!(matches!(supermode_transform(&[a], &[a], 0.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn averaging() {
        let t = grid(100, 0.1);
        let c = vec![C64::new(3.0, -4.0); 100];
        assert!((time_avg_amplitude(&t, &c, 2.0).unwrap() - 5.0).abs() < 1e-12);
        let rot: Vec<C64> = t.iter().map(|&t| C64::from_polar(1.0, 0.7 * t)).collect();
        assert!((time_avg_amplitude(&t, &rot, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(time_avg_amplitude(&t, &rot, 100.0).is_err());
    }

    #[test]
    fn lowpass_passes_dc_and_blocks_high_tones() {
        let dt = 0.2;
        let t = grid(4000, dt);
        let x: Vec<C64> = t
            .iter()
            .map(|&t| C64::new(2.0, 1.0) + 0.5 * C64::from_polar(1.0, -1.0 * t))
            .collect();
        let y = lowpass_zero_phase(&x, dt, 0.25).unwrap();
        for v in &y[500..3500] {
            assert!((v - C64::new(2.0, 1.0)).norm() < 0.5 * 0.1);
        }
        // Slow tones go through with negligible phase shift.
        let slow: Vec<C64> = t.iter().map(|&t| C64::from_polar(1.0, 0.01 * t)).collect();
        let y = lowpass_zero_phase(&slow, dt, 0.25).unwrap();
        for (a, b) in y[500..3500].iter().zip(&slow[500..3500]) {
            assert!((a - b).norm() < 1e-3);
        }
    }

    proptest! {
        #[test]
        fn transform_round_trip(g1 in 0.0f64..3.0, g2 in 0.01f64..3.0,
                                re1 in -1e3f64..1e3, im1 in -1e3f64..1e3, re2 in -1e3f64..1e3, im2 in -1e3f64..1e3) {
            let (x, y) = (C64::new(re1, im1), C64::new(re2, im2));
            let (b, d) = supermode_transform(&[x], &[y], g1, g2).unwrap();
            let scale = x.norm_sqr() + y.norm_sqr();
            prop_assert!((b[0].norm_sqr() + d[0].norm_sqr() - scale).abs() <= 1e-12 * scale.max(1e-300));
            let (u, v) = inverse_supermode_transform(&b, &d, g1, g2).unwrap();
            prop_assert!((u[0] - x).norm() <= 1e-12 * scale.sqrt().max(1e-300));
            prop_assert!((v[0] - y).norm() <= 1e-12 * scale.sqrt().max(1e-300));
        }
    }
}
