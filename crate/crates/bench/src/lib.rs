//! Fixtures shared by the benchmarks.

use darkmode_core::SystemParams;

/// Paper-scale parameters with the hot drive at 0.036 µW.
pub fn paper_params() -> SystemParams {
    let mut p = SystemParams::paper_baseline();
    p.drive_c = 26085.2228;
    p.drive_h = 494.932304;
    p
}

/// Deterministic complex test signal: a tone at `freq` plus a slow chirp.
pub fn test_signal(n: usize, dt: f64, freq: f64) -> Vec<num_complex::Complex64> {
    (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            num_complex::Complex64::from_polar(1.0, freq * t + 1e-6 * t * t)
        })
        .collect()
}
