//! Small tanh multilayer perceptron used as a differentiable device surrogate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{HgeError, Result};

/// Gain applied to the He-style hidden-layer weight scale. Values above one push
/// the tanh units into their curved region over the ±1 V input range.
pub const HIDDEN_GAIN: f64 = 2.5;
/// Standard deviation of the hidden-layer biases. Zero biases make the
/// network odd-symmetric, so the reference output at the origin is exactly 0.
pub const BIAS_STD: f64 = 0.0;
/// Output scale in nA-equivalent units; outputs span roughly ±10 over the
/// input ranges used by the experiments.
pub const OUTPUT_SCALE: f64 = 10.0;

/// Seed and layer sizes of the reference surrogate.
pub const REFERENCE_SEED: u64 = 42;
pub const REFERENCE_LAYERS: [usize; 4] = [7, 20, 10, 1];

/// One fully connected layer, `weights` stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn validate(&self) -> Result<()> {
        if self.weights.len() != self.inputs * self.outputs {
            return Err(HgeError::DimensionMismatch {
                expected: self.inputs * self.outputs,
                got: self.weights.len(),
            });
        }
        if self.bias.len() != self.outputs {
            return Err(HgeError::DimensionMismatch {
                expected: self.outputs,
                got: self.bias.len(),
            });
        }
        if self.weights.iter().chain(&self.bias).any(|w| !w.is_finite()) {
            return Err(HgeError::NonFinite("surrogate weights"));
        }
        Ok(())
    }

    #[inline]
    fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }
}

/// Feed-forward network: tanh on every hidden layer, affine output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSurrogate {
    pub layers: Vec<DenseLayer>,
}

/// Scales of the seeded weight distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightScales {
    pub hidden_gain: f64,
    pub bias_std: f64,
    pub output_scale: f64,
}

impl Default for WeightScales {
    fn default() -> Self {
        Self {
            hidden_gain: HIDDEN_GAIN,
            bias_std: BIAS_STD,
            output_scale: OUTPUT_SCALE,
        }
    }
}

impl MlpSurrogate {
    /// Builds a network with weights drawn from a seeded distribution using
    /// the default [`WeightScales`].
    pub fn generate(seed: u64, sizes: &[usize]) -> Result<Self> {
        Self::generate_with(seed, sizes, WeightScales::default())
    }

    /// Hidden weights are `N(0, (gain / sqrt(fan_in))^2)`, hidden biases
    /// `N(0, bias_std^2)`, output weights `N(0, (output_scale / sqrt(fan_in))^2)`
    /// and the output bias is zero.
    pub fn generate_with(seed: u64, sizes: &[usize], scales: WeightScales) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(HgeError::InvalidParameter(format!(
                "layer sizes must have at least two non-zero entries, got {sizes:?}"
            )));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(HgeError::InvalidParameter(
                "surrogate output width must be 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let n_layers = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (inputs, outputs) = (w[0], w[1]);
                let last = l + 1 == n_layers;
                let scale = if last {
                    scales.output_scale / (inputs as f64).sqrt()
                } else {
                    scales.hidden_gain / (inputs as f64).sqrt()
                };
                let weights = (0..inputs * outputs)
                    .map(|_| scale * unit.sample(&mut rng))
                    .collect();
                let bias = (0..outputs)
                    .map(|_| {
                        let b = unit.sample(&mut rng);
                        if last {
                            0.0
                        } else {
                            scales.bias_std * b
                        }
                    })
                    .collect();
                DenseLayer {
                    inputs,
                    outputs,
                    weights,
                    bias,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// The 7-20-10-1 network generated from seed 42.
    pub fn reference() -> Self {
        Self::generate(REFERENCE_SEED, &REFERENCE_LAYERS).expect("reference sizes are valid")
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(HgeError::InvalidParameter("surrogate has no layers".into()));
        }
        for l in &self.layers {
            l.validate()?;
        }
        for pair in self.layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(HgeError::DimensionMismatch {
                    expected: pair[0].outputs,
                    got: pair[1].inputs,
                });
            }
        }
        if self.layers.last().unwrap().outputs != 1 {
            return Err(HgeError::InvalidParameter(
                "surrogate output width must be 1".into(),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut scratch = MlpScratch::default();
        self.forward_with(x, &mut scratch)
    }

    /// Forward pass reusing `scratch` to avoid per-call allocation.
    pub fn forward_with(&self, x: &[f64], scratch: &mut MlpScratch) -> f64 {
        let n_layers = self.layers.len();
        scratch.a.clear();
        scratch.a.extend_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            scratch.b.clear();
            for o in 0..layer.outputs {
                let z = layer.bias[o]
                    + layer
                        .row(o)
                        .iter()
                        .zip(&scratch.a)
                        .map(|(w, a)| w * a)
                        .sum::<f64>();
                scratch.b.push(if l + 1 == n_layers { z } else { z.tanh() });
            }
            std::mem::swap(&mut scratch.a, &mut scratch.b);
        }
        scratch.a[0]
    }

    /// Reverse-mode gradient of the scalar output with respect to the inputs.
    pub fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        let n_layers = self.layers.len();
        // activations[l] is the input to layer l
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let z: Vec<f64> = (0..layer.outputs)
                .map(|o| {
                    layer.bias[o]
                        + layer.row(o).iter().zip(&a).map(|(w, v)| w * v).sum::<f64>()
                })
                .collect();
            let next = if l + 1 == n_layers {
                z
            } else {
                z.iter().map(|v| v.tanh()).collect()
            };
            activations.push(std::mem::replace(&mut a, next));
        }

        let mut delta = vec![1.0];
        for (l, layer) in self.layers.iter().enumerate().rev() {
            // delta is dOut/dz for layer l; tanh' = 1 - tanh^2 of the layer output
            let mut upstream = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                for (u, w) in upstream.iter_mut().zip(layer.row(o)) {
                    *u += d * w;
                }
            }
            if l > 0 {
                for (u, h) in upstream.iter_mut().zip(&activations[l]) {
                    *u *= 1.0 - h * h;
                }
            }
            delta = upstream;
        }
        delta
    }
}

/// Reusable buffers for [`MlpSurrogate::forward_with`].
#[derive(Debug, Default, Clone)]
pub struct MlpScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Per-neuron evaluation written out with explicit loops and no scratch reuse.
    #[allow(clippy::needless_range_loop)]
    fn hand_forward(net: &MlpSurrogate, x: &[f64]) -> f64 {
        let mut a: Vec<f64> = x.to_vec();
        for (l, layer) in net.layers.iter().enumerate() {
            let mut next = Vec::new();
            for o in 0..layer.outputs {
                let mut z = layer.bias[o];
                for i in 0..layer.inputs {
                    z += layer.weights[o * layer.inputs + i] * a[i];
                }
                next.push(if l + 1 < net.layers.len() { z.tanh() } else { z });
            }
            a = next;
        }
        a[0]
    }

    #[test]
    fn reference_shape() {
        let net = MlpSurrogate::reference();
        net.validate().unwrap();
        let sizes: Vec<usize> = net.layers.iter().map(|l| l.inputs).collect();
        assert_eq!(sizes, vec![7, 20, 10]);
        assert_eq!(net.layers[2].outputs, 1);
    }

    #[test]
    fn forward_matches_hand_evaluation() {
        let net = MlpSurrogate::reference();
        for x in [[0.0; 7], PROBE] {
            let got = net.forward(&x);
            let want = hand_forward(&net, &x);
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    const PROBE: [f64; 7] = [0.3, -0.7, 0.1, 0.9, -1.0, 0.5, -0.2];
    // recorded from the forward pass and cross-checked by hand_forward
    const REFERENCE_OUTPUT_AT_PROBE: f64 = -7.385_716_697_684_686;

    #[test]
    fn reference_values_are_frozen() {
        let net = MlpSurrogate::reference();
        assert_eq!(net.forward(&[0.0; 7]), 0.0);
        assert_eq!(hand_forward(&net, &[0.0; 7]), 0.0);
        let v = net.forward(&PROBE);
        assert!((v - REFERENCE_OUTPUT_AT_PROBE).abs() < 1e-12, "got {v:.17}");
        assert!((hand_forward(&net, &PROBE) - REFERENCE_OUTPUT_AT_PROBE).abs() < 1e-12);
    }

    #[test]
    fn reference_is_odd_symmetric() {
        let net = MlpSurrogate::reference();
        let neg: Vec<f64> = PROBE.iter().map(|x| -x).collect();
        assert!((net.forward(&PROBE) + net.forward(&neg)).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(
            MlpSurrogate::generate(9, &[3, 4, 1]).unwrap(),
            MlpSurrogate::generate(9, &[3, 4, 1]).unwrap()
        );
        assert_ne!(
            MlpSurrogate::generate(9, &[3, 4, 1]).unwrap(),
            MlpSurrogate::generate(10, &[3, 4, 1]).unwrap()
        );
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(MlpSurrogate::generate(1, &[3]).is_err());
        assert!(MlpSurrogate::generate(1, &[3, 0, 1]).is_err());
        assert!(MlpSurrogate::generate(1, &[3, 2]).is_err());
    }
}
