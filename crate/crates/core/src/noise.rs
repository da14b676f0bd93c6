//! Reproducible complex Gaussian input noise.
//!
//! Each noise channel (cavity, resonator 1, resonator 2) owns an independent
//! ChaCha stream keyed by `(seed, stream, channel)`, so a run can be replayed
//! channel by channel and sweep points never share random numbers.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Occupancy of the cavity input: vacuum, giving the ½ of the c-number correlator.
pub const CAVITY_OCCUPANCY: f64 = 0.0;

/// Noise configuration of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSettings {
    pub seed: u64,
    /// Sub-stream index, typically the run index within a sweep.
    pub stream: u64,
    pub enabled: bool,
    /// Thermal occupancies n̄₁, n̄₂ of the mechanical baths.
    pub occupancies: [f64; 2],
}

impl NoiseSettings {
    pub fn new(seed: u64, occupancies: [f64; 2]) -> Self {
        NoiseSettings {
            seed,
            stream: 0,
            enabled: true,
            occupancies,
        }
    }

    pub fn disabled() -> Self {
        NoiseSettings {
            seed: 0,
            stream: 0,
            enabled: false,
            occupancies: [0.0, 0.0],
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn channel(&self, channel: Channel) -> ChannelRng {
        ChannelRng::new(self.seed, self.stream, channel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Cavity = 0,
    Mechanical1 = 1,
    Mechanical2 = 2,
}

/// Random source dedicated to one noise channel.
#[derive(Debug, Clone)]
pub struct ChannelRng {
    rng: ChaCha8Rng,
}

impl ChannelRng {
    pub fn new(seed: u64, stream: u64, channel: Channel) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.wrapping_mul(4).wrapping_add(channel as u64));
        ChannelRng { rng }
    }

    /// Complex normal with E|z|² = 1 (independent real and imaginary parts of variance ½).
    #[inline]
    pub fn unit_complex(&mut self) -> Complex64 {
        let re: f64 = StandardNormal.sample(&mut self.rng);
        let im: f64 = StandardNormal.sample(&mut self.rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }
}

/// Discrete white-noise sample η with ⟨η*η⟩ = (n̄ + ½)/dt.
///
/// Mechanical channels pass their occupancy; the cavity passes
/// [`CAVITY_OCCUPANCY`].
#[inline]
pub fn gen_complex_white_noise(rng: &mut ChannelRng, dt: f64, occupancy: f64) -> Complex64 {
    rng.unit_complex() * ((occupancy + 0.5) / dt).sqrt()
}
