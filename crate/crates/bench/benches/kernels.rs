use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use darkmode_bench::{paper_params, test_signal};
use darkmode_core::analytic::{sideband_coefficients, steady_bright_amplitude};
use darkmode_core::bessel::bessel_j_symmetric;
use darkmode_core::estimation::linear_fit;
use darkmode_core::sde::{simulate, step_full_system};
use darkmode_core::spectrum::welch_spectrum;
use darkmode_core::{IntegratorConfig, NoiseSettings, ScatterPoint, ScatterSet, Scheme, State, WelchConfig};
use num_complex::Complex64;

fn integrator(c: &mut Criterion) {
    let p = paper_params();
    let noise = State::default();
    c.bench_function("heun_step_1000", |b| {
        b.iter(|| {
            let mut s = State {
                a: Complex64::new(100.0, 0.0),
                b1: Complex64::new(400.0, 0.0),
                b2: Complex64::new(400.0, 0.0),
            };
            let mut t = 0.0;
            for _ in 0..1000 {
                s = step_full_system(&s, &p, &noise, t, 0.02, Scheme::HeunDrift);
                t += 0.02;
            }
            black_box(s)
        })
    });
    let integ = IntegratorConfig::new(0.02, 2000.0, 0.0, p.delta2);
    let settings = NoiseSettings::new(7, [p.nbar1, p.nbar2]);
    c.bench_function("simulate_1e5_steps_noisy", |b| {
        b.iter(|| black_box(simulate(&p, &integ, &settings).unwrap().len()))
    });
}

fn analytic(c: &mut Criterion) {
    let p = paper_params();
    c.bench_function("bessel_symmetric_xi3", |b| b.iter(|| bessel_j_symmetric(black_box(24), black_box(3.0)).unwrap()));
    c.bench_function("sideband_coefficients", |b| {
        b.iter(|| sideband_coefficients(black_box(476.0), 0.3, &p).unwrap())
    });
    c.bench_function("steady_bright_amplitude", |b| b.iter(|| steady_bright_amplitude(black_box(&p)).unwrap()));
}

fn spectral(c: &mut Criterion) {
    let dt = 0.38;
    let signal = test_signal(200_000, dt, 1e-3);
    let cfg = WelchConfig::new(1e-4);
    c.bench_function("welch_200k", |b| b.iter(|| welch_spectrum(black_box(&signal), dt, 0.996, &cfg).unwrap()));
    c.bench_function("linear_fit_32", |b| {
        b.iter_batched(
            || {
                ScatterSet::new(
                    (0..32)
                        .map(|k| ScatterPoint::new(k as f64 * 10.0, 1.0 + 1e-9 * k as f64 * 10.0, 1e-6))
                        .collect(),
                )
            },
            |s| linear_fit(&s).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, integrator, analytic, spectral);
criterion_main!(benches);
