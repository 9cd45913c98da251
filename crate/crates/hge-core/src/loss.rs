//! Losses over the four logic-case outputs and their gradients with respect
//! to those outputs.

use serde::{Deserialize, Serialize};

use crate::error::{HgeError, Result};

/// Outputs for inputs 00, 01, 10, 11 and the target logic levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOutputs {
    pub y: [f64; 4],
    pub labels: [bool; 4],
}

impl GateOutputs {
    pub fn new(y: [f64; 4], labels: [bool; 4]) -> Result<Self> {
        if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
            return Err(HgeError::InvalidParameter(
                "labels need at least one high and one low case".into(),
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(HgeError::NonFinite("gate outputs"));
        }
        Ok(Self { y, labels })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossEval {
    pub value: f64,
    pub grad_y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    CorrSigmoid,
    /// Mean squared error against explicit per-case targets.
    Mse { targets: [f64; 4] },
}

impl LossKind {
    /// Evaluates the loss. Correlation targets are the labels as 0/1.
    pub fn evaluate(&self, outputs: &GateOutputs) -> Result<LossEval> {
        match self {
            Self::CorrSigmoid => {
                let z = outputs.labels.map(|l| if l { 1.0 } else { 0.0 });
                corr_sigmoid_loss(outputs, &z)
            }
            Self::Mse { targets } => mse_loss(outputs, targets),
        }
    }
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Pearson correlation coefficient.
pub fn pearson(y: &[f64], z: &[f64]) -> Result<f64> {
    if y.len() != z.len() {
        return Err(HgeError::DimensionMismatch {
            expected: y.len(),
            got: z.len(),
        });
    }
    if y.len() < 2 {
        return Err(HgeError::InvalidParameter("pearson needs at least two entries".into()));
    }
    let (yc, zc) = (centered(y), centered(z));
    let (ny, nz) = (norm(&yc), norm(&zc));
    if ny == 0.0 {
        return Err(HgeError::ZeroVariance("outputs"));
    }
    if nz == 0.0 {
        return Err(HgeError::ZeroVariance("targets"));
    }
    let r = yc.iter().zip(&zc).map(|(a, b)| a * b).sum::<f64>() / (ny * nz);
    Ok(r.clamp(-1.0, 1.0))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(1 - rho(y, z)) / sigmoid(y_sep)` where `y_sep` is the lowest high-labelled
/// output minus the highest low-labelled output.
///
/// The separation term is differentiated through the attaining entries;
/// ties share the gradient equally.
pub fn corr_sigmoid_loss(outputs: &GateOutputs, z: &[f64]) -> Result<LossEval> {
    let y = &outputs.y;
    if z.len() != 4 {
        return Err(HgeError::DimensionMismatch { expected: 4, got: z.len() });
    }
    let high = |i: usize| outputs.labels[i];
    let min_high = (0..4).filter(|&i| high(i)).map(|i| z[i]).fold(f64::INFINITY, f64::min);
    let max_low = (0..4).filter(|&i| !high(i)).map(|i| z[i]).fold(f64::NEG_INFINITY, f64::max);
    if min_high <= max_low {
        return Err(HgeError::InvalidParameter(
            "targets must place every high case above every low case".into(),
        ));
    }

    let rho = pearson(y, z)?;
    let (yc, zc) = (centered(y), centered(z));
    let (ny, nz) = (norm(&yc), norm(&zc));
    // d rho / d y_i; the vector already sums to zero so centering needs no correction
    let drho: Vec<f64> = (0..4)
        .map(|i| zc[i] / (ny * nz) - rho * yc[i] / (ny * ny))
        .collect();

    let y_high = (0..4).filter(|&i| high(i)).map(|i| y[i]).fold(f64::INFINITY, f64::min);
    let y_low = (0..4).filter(|&i| !high(i)).map(|i| y[i]).fold(f64::NEG_INFINITY, f64::max);
    let sep = y_high - y_low;
    let s = sigmoid(sep);

    let high_ties: Vec<usize> = (0..4).filter(|&i| high(i) && y[i] == y_high).collect();
    let low_ties: Vec<usize> = (0..4).filter(|&i| !high(i) && y[i] == y_low).collect();
    let mut dsep = [0.0; 4];
    for &i in &high_ties {
        dsep[i] += 1.0 / high_ties.len() as f64;
    }
    for &i in &low_ties {
        dsep[i] -= 1.0 / low_ties.len() as f64;
    }

    let value = (1.0 - rho) / s;
    // d/dy [(1 - rho) / s] = -rho'/s - (1 - rho) s'/s^2, with s'/s^2 = (1 - s)/s
    let grad_y = (0..4)
        .map(|i| -drho[i] / s - (1.0 - rho) * (1.0 - s) / s * dsep[i])
        .collect();
    Ok(LossEval { value, grad_y })
}

/// Mean squared error against `targets`.
pub fn mse_loss(outputs: &GateOutputs, targets: &[f64]) -> Result<LossEval> {
    mse(&outputs.y, targets)
}

/// Mean squared error over arbitrary equal-length slices.
pub fn mse(y: &[f64], z: &[f64]) -> Result<LossEval> {
    if y.len() != z.len() {
        return Err(HgeError::DimensionMismatch {
            expected: y.len(),
            got: z.len(),
        });
    }
    if y.is_empty() {
        return Err(HgeError::InvalidParameter("mse needs at least one entry".into()));
    }
    let n = y.len() as f64;
    let value = y.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    let grad_y = y.iter().zip(z).map(|(a, b)| 2.0 * (a - b) / n).collect();
    Ok(LossEval { value, grad_y })
}
