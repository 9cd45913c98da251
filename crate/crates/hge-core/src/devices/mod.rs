//! Simulated multi-terminal devices with exact gradient oracles.
//!
//! Devices are static and memoryless: the output at a sample depends only on
//! the input voltages at that sample.

mod mlp;
mod noise;

use serde::{Deserialize, Serialize};

use crate::error::{HgeError, Result};
use crate::signals::InputTraces;

pub use mlp::{
    DenseLayer, MlpScratch, MlpSurrogate, WeightScales, BIAS_STD, HIDDEN_GAIN, OUTPUT_SCALE, REFERENCE_LAYERS,
    REFERENCE_SEED,
};
pub use noise::{generate_noise, stream_seed, NoiseModel};

/// Per-terminal DC voltages (V).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct VoltageVector(Vec<f64>);

impl VoltageVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HgeError::NonFinite("voltage vector"));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for VoltageVector {
    type Error = HgeError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<VoltageVector> for Vec<f64> {
    fn from(v: VoltageVector) -> Self {
        v.0
    }
}

impl std::ops::Deref for VoltageVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Output current time series.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTrace {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

impl OutputTrace {
    pub fn new(sample_rate: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(HgeError::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if samples.is_empty() {
            return Err(HgeError::EmptyTrace);
        }
        Ok(Self {
            sample_rate,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

/// A simulated device `I(V_1, ..., V_N)`.
///
/// `Linear`: `c + w.V`. `Quadratic`: `c + w.V + V'QV` with symmetric `Q`.
/// `Cubic`: separable `c + sum(w_i V_i + q_i V_i^2 + k_i V_i^3)`, used to probe
/// the truncation error of the first-order response model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceModel {
    Linear {
        offset: f64,
        weights: Vec<f64>,
    },
    Quadratic {
        offset: f64,
        weights: Vec<f64>,
        q: Vec<Vec<f64>>,
    },
    Cubic {
        offset: f64,
        weights: Vec<f64>,
        quadratic: Vec<f64>,
        cubic: Vec<f64>,
    },
    Mlp(MlpSurrogate),
}

impl DeviceModel {
    pub fn linear(offset: f64, weights: Vec<f64>) -> Result<Self> {
        let d = Self::Linear { offset, weights };
        d.validate()?;
        Ok(d)
    }

    pub fn quadratic(offset: f64, weights: Vec<f64>, q: Vec<Vec<f64>>) -> Result<Self> {
        let d = Self::Quadratic { offset, weights, q };
        d.validate()?;
        Ok(d)
    }

    pub fn cubic(offset: f64, weights: Vec<f64>, quadratic: Vec<f64>, cubic: Vec<f64>) -> Result<Self> {
        let d = Self::Cubic {
            offset,
            weights,
            quadratic,
            cubic,
        };
        d.validate()?;
        Ok(d)
    }

    /// The seed-42, 7-20-10-1 tanh surrogate used throughout the experiments.
    pub fn reference_surrogate() -> Self {
        Self::Mlp(MlpSurrogate::reference())
    }

    pub fn terminal_count(&self) -> usize {
        match self {
            Self::Linear { weights, .. }
            | Self::Quadratic { weights, .. }
            | Self::Cubic { weights, .. } => weights.len(),
            Self::Mlp(net) => net.input_width(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            Self::Linear { offset, weights } => {
                if !offset.is_finite() || !finite(weights) {
                    return Err(HgeError::NonFinite("linear device parameters"));
                }
            }
            Self::Quadratic { offset, weights, q } => {
                if !offset.is_finite() || !finite(weights) || q.iter().any(|r| !finite(r)) {
                    return Err(HgeError::NonFinite("quadratic device parameters"));
                }
                let n = weights.len();
                if q.len() != n {
                    return Err(HgeError::DimensionMismatch {
                        expected: n,
                        got: q.len(),
                    });
                }
                for row in q {
                    if row.len() != n {
                        return Err(HgeError::DimensionMismatch {
                            expected: n,
                            got: row.len(),
                        });
                    }
                }
                #[allow(clippy::needless_range_loop)]
                for i in 0..n {
                    for j in 0..i {
                        if q[i][j] != q[j][i] {
                            return Err(HgeError::InvalidParameter(format!(
                                "quadratic matrix not symmetric at ({i}, {j})"
                            )));
                        }
                    }
                }
            }
            Self::Cubic {
                offset,
                weights,
                quadratic,
                cubic,
            } => {
                if !offset.is_finite() || !finite(weights) || !finite(quadratic) || !finite(cubic) {
                    return Err(HgeError::NonFinite("cubic device parameters"));
                }
                for v in [quadratic, cubic] {
                    if v.len() != weights.len() {
                        return Err(HgeError::DimensionMismatch {
                            expected: weights.len(),
                            got: v.len(),
                        });
                    }
                }
            }
            Self::Mlp(net) => net.validate()?,
        }
        if self.terminal_count() == 0 {
            return Err(HgeError::InvalidParameter("device has no terminals".into()));
        }
        Ok(())
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        let n = self.terminal_count();
        if v.len() != n {
            return Err(HgeError::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Noiseless output at DC voltages `v`.
    pub fn eval_static(&self, v: &[f64]) -> Result<f64> {
        self.check_len(v)?;
        Ok(self.eval_unchecked(v, &mut MlpScratch::default()))
    }

    fn eval_unchecked(&self, v: &[f64], scratch: &mut MlpScratch) -> f64 {
        match self {
            Self::Linear { offset, weights } => {
                offset + weights.iter().zip(v).map(|(w, x)| w * x).sum::<f64>()
            }
            Self::Quadratic { offset, weights, q } => {
                let lin: f64 = weights.iter().zip(v).map(|(w, x)| w * x).sum();
                let quad: f64 = q
                    .iter()
                    .zip(v)
                    .map(|(row, xi)| xi * row.iter().zip(v).map(|(a, xj)| a * xj).sum::<f64>())
                    .sum();
                offset + lin + quad
            }
            Self::Cubic {
                offset,
                weights,
                quadratic,
                cubic,
            } => {
                offset
                    + v.iter()
                        .enumerate()
                        .map(|(i, x)| weights[i] * x + quadratic[i] * x * x + cubic[i] * x * x * x)
                        .sum::<f64>()
            }
            Self::Mlp(net) => net.forward_with(v, scratch),
        }
    }

    /// Exact gradient of the output with respect to the terminal voltages.
    pub fn analytic_gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        Ok(match self {
            Self::Linear { weights, .. } => weights.clone(),
            Self::Quadratic { weights, q, .. } => weights
                .iter()
                .zip(q)
                .map(|(w, row)| w + 2.0 * row.iter().zip(v).map(|(a, x)| a * x).sum::<f64>())
                .collect(),
            Self::Cubic {
                weights,
                quadratic,
                cubic,
                ..
            } => v
                .iter()
                .enumerate()
                .map(|(i, x)| weights[i] + 2.0 * quadratic[i] * x + 3.0 * cubic[i] * x * x)
                .collect(),
            Self::Mlp(net) => net.input_gradient(v),
        })
    }

    /// Central finite differences with step `h` (V).
    pub fn finite_difference_gradient(&self, v: &[f64], h: f64) -> Result<Vec<f64>> {
        self.check_len(v)?;
        if !(h.is_finite() && h > 0.0) {
            return Err(HgeError::InvalidParameter(format!(
                "finite-difference step must be positive, got {h}"
            )));
        }
        let mut scratch = MlpScratch::default();
        let mut x = v.to_vec();
        Ok((0..v.len())
            .map(|i| {
                x[i] = v[i] + h;
                let up = self.eval_unchecked(&x, &mut scratch);
                x[i] = v[i] - h;
                let down = self.eval_unchecked(&x, &mut scratch);
                x[i] = v[i];
                (up - down) / (2.0 * h)
            })
            .collect())
    }

    /// Sample-wise evaluation of per-terminal input traces, plus additive noise.
    pub fn eval_trace(&self, inputs: &InputTraces, noise: Option<&NoiseModel>) -> Result<OutputTrace> {
        let n = self.terminal_count();
        if inputs.terminal_count() != n {
            return Err(HgeError::DimensionMismatch {
                expected: n,
                got: inputs.terminal_count(),
            });
        }
        let len = inputs.len();
        let mut scratch = MlpScratch::default();
        let mut v = vec![0.0; n];
        let mut samples = Vec::with_capacity(len);
        for k in 0..len {
            for (slot, trace) in v.iter_mut().zip(inputs.traces()) {
                *slot = trace[k];
            }
            samples.push(self.eval_unchecked(&v, &mut scratch));
        }
        if let Some(noise) = noise {
            if !noise.is_silent() {
                let extra = noise.generate(len, inputs.sample_rate())?;
                for (s, e) in samples.iter_mut().zip(extra) {
                    *s += e;
                }
            }
        }
        OutputTrace::new(inputs.sample_rate(), samples)
    }
}

/// Free-function form of [`DeviceModel::eval_static`].
pub fn eval_static(device: &DeviceModel, v: &VoltageVector) -> Result<f64> {
    device.eval_static(v)
}

/// Free-function form of [`DeviceModel::analytic_gradient`].
pub fn analytic_gradient(device: &DeviceModel, v: &VoltageVector) -> Result<Vec<f64>> {
    device.analytic_gradient(v)
}

/// Free-function form of [`DeviceModel::finite_difference_gradient`].
pub fn finite_difference_gradient(device: &DeviceModel, v: &VoltageVector, h: f64) -> Result<Vec<f64>> {
    device.finite_difference_gradient(v, h)
}
