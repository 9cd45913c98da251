//! Homodyne (lock-in) demodulation of the output trace.
//!
//! The trace is stripped of its mean, multiplied by sine and cosine references
//! at each plan frequency and averaged over the window. With an integer number
//! of cycles the average is exact, so tones at other plan frequencies cancel.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::devices::{DeviceModel, NoiseModel, OutputTrace, VoltageVector};
use crate::error::{HgeError, Result};
use crate::par;
use crate::signals::{build_inputs, sample_phase, PerturbationPlan};

const INTEGER_TOL: f64 = 1e-9;

/// In-phase/quadrature averages and the amplitude/phase they encode.
///
/// For a component `I sin(2 pi f t + phi)` measured against the reference
/// `sin(2 pi f t)`, `x = (I/2) cos(phi)` and `y = (I/2) sin(phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DemodResult {
    pub x: f64,
    pub y: f64,
    pub amplitude: f64,
    /// Radians in (-pi, pi].
    pub phase: f64,
}

impl DemodResult {
    pub fn from_xy(x: f64, y: f64) -> Self {
        let mut phase = y.atan2(x);
        if phase <= -PI {
            phase = PI;
        }
        Self {
            x,
            y,
            amplitude: 2.0 * x.hypot(y),
            phase,
        }
    }

    /// +1 when the response is in phase with the reference (|phase| <= pi/2),
    /// -1 otherwise. The boundary maps to +1.
    pub fn sign(&self) -> i8 {
        if self.phase.abs() <= FRAC_PI_2 {
            1
        } else {
            -1
        }
    }
}

/// Demodulation outcome for one terminal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalEstimate {
    pub freq_hz: f64,
    pub amp_v: f64,
    pub demod: DemodResult,
    pub sign: i8,
    /// `sign * amplitude / amp_v`; `None` when the terminal was not perturbed.
    pub derivative: Option<f64>,
}

/// Per-terminal derivative estimates from one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientEstimate {
    pub terminals: Vec<TerminalEstimate>,
    pub window_s: f64,
}

impl GradientEstimate {
    pub fn derivatives(&self) -> Vec<Option<f64>> {
        self.terminals.iter().map(|t| t.derivative).collect()
    }

    /// Derivative of terminal `m`, or an error if it was not measured.
    pub fn derivative(&self, m: usize) -> Result<f64> {
        self.terminals
            .get(m)
            .ok_or(HgeError::DimensionMismatch {
                expected: self.terminals.len(),
                got: m + 1,
            })?
            .derivative
            .ok_or_else(|| HgeError::InvalidParameter(format!("terminal {} was not perturbed", m + 1)))
    }

    /// Derivatives at `indices`, all of which must have been measured.
    pub fn select(&self, indices: &[usize]) -> Result<Vec<f64>> {
        indices.iter().map(|&m| self.derivative(m)).collect()
    }
}

/// Subtracts the window mean.
pub fn remove_dc(trace: &OutputTrace) -> Result<OutputTrace> {
    if trace.is_empty() {
        return Err(HgeError::EmptyTrace);
    }
    let mean = trace.mean();
    OutputTrace::new(
        trace.sample_rate,
        trace.samples.iter().map(|s| s - mean).collect(),
    )
}

fn check_cycles(len: usize, rate: f64, freq_hz: f64) -> Result<()> {
    let cycles = freq_hz * len as f64 / rate;
    if (cycles - cycles.round()).abs() > INTEGER_TOL * cycles.max(1.0) || cycles.round() < 1.0 {
        return Err(HgeError::NonIntegerCycles { freq_hz, cycles });
    }
    Ok(())
}

fn check_nyquist(rate: f64, freq_hz: f64) -> Result<()> {
    if !(freq_hz > 0.0 && freq_hz < rate / 2.0) {
        return Err(HgeError::AboveNyquist {
            freq_hz,
            nyquist_hz: rate / 2.0,
        });
    }
    Ok(())
}

/// Time averages of `samples * sin(ref)` and `samples * cos(ref)`.
fn mix_and_average(samples: &[f64], rate: f64, freq_hz: f64, phase: f64) -> DemodResult {
    let (mut sx, mut sy) = (0.0, 0.0);
    for (k, s) in samples.iter().enumerate() {
        let (sin, cos) = (sample_phase(freq_hz, k, rate) + phase).sin_cos();
        sx += s * sin;
        sy += s * cos;
    }
    let n = samples.len() as f64;
    DemodResult::from_xy(sx / n, sy / n)
}

/// Lock-in demodulation at `freq_hz` against `sin(2 pi f t + injected_phase)`.
///
/// The window must hold an integer number of cycles of `freq_hz`.
pub fn demodulate(trace: &OutputTrace, freq_hz: f64, injected_phase: f64) -> Result<DemodResult> {
    if trace.is_empty() {
        return Err(HgeError::EmptyTrace);
    }
    check_nyquist(trace.sample_rate, freq_hz)?;
    check_cycles(trace.len(), trace.sample_rate, freq_hz)?;
    Ok(mix_and_average(&trace.samples, trace.sample_rate, freq_hz, injected_phase))
}

/// As [`demodulate`] but without the integer-cycle requirement. The result
/// carries spectral leakage from every other component of the trace.
pub fn demodulate_leaky(trace: &OutputTrace, freq_hz: f64, injected_phase: f64) -> Result<DemodResult> {
    if trace.is_empty() {
        return Err(HgeError::EmptyTrace);
    }
    check_nyquist(trace.sample_rate, freq_hz)?;
    Ok(mix_and_average(&trace.samples, trace.sample_rate, freq_hz, injected_phase))
}

/// Removes DC, demodulates every plan frequency and divides by the amplitudes.
pub fn extract_gradient(trace: &OutputTrace, plan: &PerturbationPlan) -> Result<GradientEstimate> {
    let expected_len = plan.window_samples()?;
    if trace.sample_rate != plan.sample_rate_hz || trace.len() != expected_len {
        return Err(HgeError::TraceMismatch(format!(
            "trace has {} samples at {} Hz, plan expects {} at {} Hz",
            trace.len(),
            trace.sample_rate,
            expected_len,
            plan.sample_rate_hz
        )));
    }
    if plan.amps_v.len() != plan.terminal_count() || plan.phases_rad.len() != plan.terminal_count() {
        return Err(HgeError::InvalidPlan("amplitude/phase count mismatch".into()));
    }
    let ac = remove_dc(trace)?;
    let terminals = par::try_map_range(plan.terminal_count(), |m| {
        let (f, a, p) = (plan.freqs_hz[m], plan.amps_v[m], plan.phases_rad[m]);
        let demod = if plan.allow_leakage {
            demodulate_leaky(&ac, f, p)?
        } else {
            demodulate(&ac, f, p)?
        };
        let sign = demod.sign();
        let derivative = (a > 0.0).then(|| sign as f64 * demod.amplitude / a);
        Ok(TerminalEstimate {
            freq_hz: f,
            amp_v: a,
            demod,
            sign,
            derivative,
        })
    })?;
    Ok(GradientEstimate {
        terminals,
        window_s: plan.window_seconds(),
    })
}

/// A gradient estimate together with the window mean of the noiseless trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub mean_output: f64,
    pub estimate: GradientEstimate,
}

/// Full pipeline: perturbed inputs, device response, demodulation.
pub fn measure(
    device: &DeviceModel,
    v_dc: &VoltageVector,
    plan: &PerturbationPlan,
    noise: Option<&NoiseModel>,
) -> Result<Measurement> {
    let inputs = build_inputs(v_dc, plan)?;
    let mut trace = device.eval_trace(&inputs, None)?;
    let mean_output = trace.mean();
    if let Some(noise) = noise.filter(|n| !n.is_silent()) {
        let extra = noise.generate(trace.len(), trace.sample_rate)?;
        for (s, e) in trace.samples.iter_mut().zip(extra) {
            *s += e;
        }
    }
    let estimate = extract_gradient(&trace, plan)?;
    Ok(Measurement {
        mean_output,
        estimate,
    })
}

/// [`measure`] without the mean output.
pub fn hge_measure(
    device: &DeviceModel,
    v_dc: &VoltageVector,
    plan: &PerturbationPlan,
    noise: Option<&NoiseModel>,
) -> Result<GradientEstimate> {
    measure(device, v_dc, plan, noise).map(|m| m.estimate)
}
