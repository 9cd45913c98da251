//! Output-referred noise: white Gaussian plus a 1/f (pink) component.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{HgeError, Result};

/// Additive output noise. `white_std` and `pink_amplitude` are in output units
/// (A, or nA-equivalent for the surrogate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(default)]
    pub white_std: f64,
    #[serde(default)]
    pub pink_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseModel {
    pub fn white(std: f64, seed: u64) -> Self {
        Self {
            white_std: std,
            pink_amplitude: 0.0,
            seed,
        }
    }

    pub fn pink(amplitude: f64, seed: u64) -> Self {
        Self {
            white_std: 0.0,
            pink_amplitude: amplitude,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("white_std", self.white_std),
            ("pink_amplitude", self.pink_amplitude),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(HgeError::InvalidParameter(format!(
                    "noise {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_silent(&self) -> bool {
        self.white_std == 0.0 && self.pink_amplitude == 0.0
    }

    /// Same noise parameters on an independent stream derived from `stream`.
    pub fn derive(&self, stream: u64) -> Self {
        Self {
            seed: stream_seed(self.seed, stream),
            ..*self
        }
    }

    /// Generates `n_samples` of noise. The pink component is synthesised by
    /// shaping a Gaussian spectrum with 1/sqrt(f) and inverse transforming, then
    /// normalised to standard deviation `pink_amplitude`.
    pub fn generate(&self, n_samples: usize, sample_rate: f64) -> Result<Vec<f64>> {
        self.validate()?;
        if n_samples == 0 {
            return Err(HgeError::InvalidParameter("n_samples must be >= 1".into()));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(HgeError::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        let mut out = vec![0.0; n_samples];
        if self.white_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.seed, 0));
            for s in out.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *s += self.white_std * g;
            }
        }
        if self.pink_amplitude > 0.0 && n_samples > 1 {
            let pink = pink_unit(n_samples, stream_seed(self.seed, 1));
            for (s, p) in out.iter_mut().zip(pink) {
                *s += self.pink_amplitude * p;
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`NoiseModel::generate`].
pub fn generate_noise(noise: &NoiseModel, n_samples: usize, sample_rate: f64) -> Result<Vec<f64>> {
    noise.generate(n_samples, sample_rate)
}

/// Unit-variance pink noise of length `n` (n >= 2).
fn pink_unit(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    let half = n / 2;
    for k in 1..=half {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let scale = 1.0 / (k as f64).sqrt();
        let c = if 2 * k == n {
            // Nyquist bin must be real
            Complex::new(re * scale, 0.0)
        } else {
            Complex::new(re * scale, im * scale)
        };
        spectrum[k] = c;
        if 2 * k != n {
            spectrum[n - k] = c.conj();
        }
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut spectrum);
    let mut out: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let mean = out.iter().sum::<f64>() / n as f64;
    let var = out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let norm = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
    for x in out.iter_mut() {
        *x = (*x - mean) * norm;
    }
    out
}

/// SplitMix64 mix of a base seed and a stream index.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
