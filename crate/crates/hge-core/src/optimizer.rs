//! Gradient descent on the control voltages of a device to realise a Boolean gate.
//!
//! Each iteration measures the device under the four data-input cases, builds
//! the loss from the four mean currents, and forms the batch gradient
//! `sum_case dE/dy_case * grad_controls I(case)` from the HGE derivatives.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::devices::{DeviceModel, NoiseModel, VoltageVector};
use crate::error::{HgeError, Result};
use crate::lockin::{measure, GradientEstimate};
use crate::loss::{GateOutputs, LossEval, LossKind};
use crate::par;
use crate::signals::{validate_plan, PerturbationPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Gate {
    And,
    Or,
    Nand,
    Nor,
    Xor,
    Xnor,
}

impl Gate {
    pub const ALL: [Gate; 6] = [Gate::And, Gate::Or, Gate::Nand, Gate::Nor, Gate::Xor, Gate::Xnor];

    /// Target levels for inputs 00, 01, 10, 11.
    pub fn truth_table(self) -> [bool; 4] {
        let f = |a: bool, b: bool| match self {
            Gate::And => a && b,
            Gate::Or => a || b,
            Gate::Nand => !(a && b),
            Gate::Nor => !(a || b),
            Gate::Xor => a ^ b,
            Gate::Xnor => !(a ^ b),
        };
        [f(false, false), f(false, true), f(true, false), f(true, true)]
    }

    /// Early-stop loss threshold: 0.3 for XOR/XNOR, 0.15 otherwise.
    pub fn default_stop_threshold(self) -> f64 {
        match self {
            Gate::Xor | Gate::Xnor => 0.3,
            _ => 0.15,
        }
    }

    /// MSE targets: 0 for low and 10 for high, except XNOR whose high target is 1.
    pub fn mse_targets(self) -> [f64; 4] {
        let high = if self == Gate::Xnor { 1.0 } else { 10.0 };
        self.truth_table().map(|l| if l { high } else { 0.0 })
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Gate::And => "AND",
            Gate::Or => "OR",
            Gate::Nand => "NAND",
            Gate::Nor => "NOR",
            Gate::Xor => "XOR",
            Gate::Xnor => "XNOR",
        };
        f.write_str(s)
    }
}

impl FromStr for Gate {
    type Err = HgeError;
    fn from_str(s: &str) -> Result<Self> {
        Gate::ALL
            .into_iter()
            .find(|g| g.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| HgeError::InvalidParameter(format!("unknown gate {s:?}")))
    }
}

/// Which terminals carry data, which are optimised, and the voltage levels.
/// Terminal indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateTask {
    pub gate: Gate,
    pub data_terminals: [usize; 2],
    pub control_terminals: Vec<usize>,
    pub low_voltage: f64,
    pub high_voltage: f64,
    pub control_range: (f64, f64),
}

impl GateTask {
    pub const DEFAULT_DATA_TERMINALS: [usize; 2] = [1, 2];
    pub const DEFAULT_LOW_VOLTAGE: f64 = -1.2;
    pub const DEFAULT_HIGH_VOLTAGE: f64 = 0.6;
    pub const DEFAULT_CONTROL_RANGE: (f64, f64) = (-1.2, 0.9);

    /// Data on the second and third terminals, every other terminal a control.
    pub fn new(gate: Gate, n_terminals: usize) -> Self {
        Self::with_data_terminals(gate, n_terminals, Self::DEFAULT_DATA_TERMINALS)
    }

    pub fn with_data_terminals(gate: Gate, n_terminals: usize, data: [usize; 2]) -> Self {
        Self {
            gate,
            data_terminals: data,
            control_terminals: (0..n_terminals).filter(|i| !data.contains(i)).collect(),
            low_voltage: Self::DEFAULT_LOW_VOLTAGE,
            high_voltage: Self::DEFAULT_HIGH_VOLTAGE,
            control_range: Self::DEFAULT_CONTROL_RANGE,
        }
    }

    pub fn terminal_count(&self) -> usize {
        self.control_terminals.len() + 2
    }

    pub fn validate(&self, n_terminals: usize) -> Result<()> {
        let [a, b] = self.data_terminals;
        if a == b {
            return Err(HgeError::InvalidParameter("data terminals must differ".into()));
        }
        let mut seen = vec![false; n_terminals];
        for &t in self.data_terminals.iter().chain(&self.control_terminals) {
            if t >= n_terminals {
                return Err(HgeError::InvalidParameter(format!(
                    "terminal {} out of range for a {n_terminals}-terminal device",
                    t + 1
                )));
            }
            if std::mem::replace(&mut seen[t], true) {
                return Err(HgeError::InvalidParameter(format!(
                    "terminal {} assigned twice",
                    t + 1
                )));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(HgeError::InvalidParameter(
                "data and control terminals must cover every terminal".into(),
            ));
        }
        if self.control_terminals.is_empty() {
            return Err(HgeError::InvalidParameter("no control terminals".into()));
        }
        if !(self.low_voltage.is_finite() && self.high_voltage.is_finite())
            || self.low_voltage >= self.high_voltage
        {
            return Err(HgeError::InvalidParameter(
                "low voltage must be below high voltage".into(),
            ));
        }
        let (lo, hi) = self.control_range;
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(HgeError::InvalidParameter("control range is empty".into()));
        }
        Ok(())
    }

    /// Full terminal voltage vector for `case` (0..4, bit 1 = first data terminal).
    pub fn voltages(&self, controls: &[f64], case: usize) -> Result<VoltageVector> {
        if controls.len() != self.control_terminals.len() {
            return Err(HgeError::DimensionMismatch {
                expected: self.control_terminals.len(),
                got: controls.len(),
            });
        }
        if case > 3 {
            return Err(HgeError::InvalidParameter(format!("case {case} out of range 0..4")));
        }
        let mut v = vec![0.0; self.terminal_count()];
        for (&t, &c) in self.control_terminals.iter().zip(controls) {
            v[t] = c;
        }
        let level = |bit: bool| if bit { self.high_voltage } else { self.low_voltage };
        v[self.data_terminals[0]] = level(case & 2 != 0);
        v[self.data_terminals[1]] = level(case & 1 != 0);
        VoltageVector::new(v)
    }

    /// The plan with the data terminals left unperturbed.
    pub fn case_plan(&self, plan: &PerturbationPlan) -> PerturbationPlan {
        let mut p = plan.clone();
        for &d in &self.data_terminals {
            if let Some(a) = p.amps_v.get_mut(d) {
                *a = 0.0;
            }
        }
        p
    }
}

/// Hyper-parameters of [`train_gate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub max_iters: usize,
    pub stop_threshold: f64,
    pub plan: PerturbationPlan,
    pub loss: LossKind,
    /// Seed for the control initialisation.
    pub seed: u64,
    pub noise: Option<NoiseModel>,
}

impl TrainConfig {
    pub const DEFAULT_ETA: f64 = 0.02;
    pub const DEFAULT_MAX_ITERS: usize = 100;

    /// Learning rate 0.02, 100 iterations, the gate's stop threshold and the
    /// correlation/sigmoid loss.
    pub fn for_gate(gate: Gate, plan: PerturbationPlan, seed: u64) -> Self {
        Self {
            eta: Self::DEFAULT_ETA,
            max_iters: Self::DEFAULT_MAX_ITERS,
            stop_threshold: gate.default_stop_threshold(),
            plan,
            loss: LossKind::CorrSigmoid,
            seed,
            noise: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(HgeError::InvalidParameter(format!("eta must be >= 0, got {}", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(HgeError::InvalidParameter("max_iters must be >= 1".into()));
        }
        if self.stop_threshold.is_nan() || self.stop_threshold <= 0.0 {
            return Err(HgeError::InvalidParameter("stop_threshold must be > 0".into()));
        }
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        let report = validate_plan(&self.plan);
        if !report.is_ok() {
            return Err(HgeError::InvalidPlan(report.error_summary()));
        }
        Ok(())
    }
}

/// `v - eta * grad`, clamped to `range`.
pub fn gd_step(v: &[f64], grad: &[f64], eta: f64, range: (f64, f64)) -> Vec<f64> {
    v.iter()
        .zip(grad)
        .map(|(x, g)| (x - eta * g).clamp(range.0, range.1))
        .collect()
}

/// Mean output and control-terminal derivatives for one data-input case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseMeasurement {
    pub case: usize,
    pub mean_output: f64,
    pub control_gradient: Vec<f64>,
    pub estimate: GradientEstimate,
}

pub fn case_measure(
    device: &DeviceModel,
    task: &GateTask,
    controls: &[f64],
    case: usize,
    plan: &PerturbationPlan,
    noise: Option<&NoiseModel>,
) -> Result<CaseMeasurement> {
    let (lo, hi) = task.control_range;
    if controls.iter().any(|c| !(lo..=hi).contains(c)) {
        return Err(HgeError::InvalidParameter("controls outside control range".into()));
    }
    let v = task.voltages(controls, case)?;
    let m = measure(device, &v, &task.case_plan(plan), noise)?;
    let control_gradient = m.estimate.select(&task.control_terminals)?;
    Ok(CaseMeasurement {
        case,
        mean_output: m.mean_output,
        control_gradient,
        estimate: m.estimate,
    })
}

/// Loss on the four case outputs and its gradient with respect to the controls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchGradient {
    pub outputs: [f64; 4],
    pub loss: LossEval,
    pub gradient: Vec<f64>,
    pub cases: Vec<CaseMeasurement>,
}

/// Four case measurements, run concurrently with independent noise streams
/// `noise.derive(case)`.
pub fn measure_cases(
    device: &DeviceModel,
    task: &GateTask,
    controls: &[f64],
    plan: &PerturbationPlan,
    noise: Option<&NoiseModel>,
) -> Result<Vec<CaseMeasurement>> {
    par::try_map_range(4, |case| {
        let n = noise.map(|n| n.derive(case as u64));
        case_measure(device, task, controls, case, plan, n.as_ref())
    })
}

/// Chain rule over already measured cases.
pub fn combine_cases(task: &GateTask, cases: Vec<CaseMeasurement>, loss: &LossKind) -> Result<BatchGradient> {
    let mut outputs = [0.0; 4];
    for c in &cases {
        outputs[c.case] = c.mean_output;
    }
    let loss_eval = loss.evaluate(&GateOutputs::new(outputs, task.gate.truth_table())?)?;
    let mut gradient = vec![0.0; task.control_terminals.len()];
    for c in &cases {
        for (g, d) in gradient.iter_mut().zip(&c.control_gradient) {
            *g += loss_eval.grad_y[c.case] * d;
        }
    }
    Ok(BatchGradient {
        outputs,
        loss: loss_eval,
        gradient,
        cases,
    })
}

pub fn batch_gradient(
    device: &DeviceModel,
    task: &GateTask,
    controls: &[f64],
    plan: &PerturbationPlan,
    loss: &LossKind,
    noise: Option<&NoiseModel>,
) -> Result<BatchGradient> {
    let cases = measure_cases(device, task, controls, plan, noise)?;
    combine_cases(task, cases, loss)
}

/// Noiseless static outputs for the four cases, the midpoint decision boundary
/// and whether the high and low cases are separated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateEvaluation {
    pub outputs: [f64; 4],
    pub boundary: f64,
    pub separation: f64,
    pub success: bool,
}

pub fn evaluate_gate(device: &DeviceModel, task: &GateTask, controls: &[f64]) -> Result<GateEvaluation> {
    let mut outputs = [0.0; 4];
    for (case, out) in outputs.iter_mut().enumerate() {
        *out = device.eval_static(&task.voltages(controls, case)?)?;
    }
    Ok(classify(outputs, task.gate.truth_table()))
}

/// Boundary and success for given case outputs.
pub fn classify(outputs: [f64; 4], labels: [bool; 4]) -> GateEvaluation {
    let min_high = (0..4).filter(|&i| labels[i]).map(|i| outputs[i]).fold(f64::INFINITY, f64::min);
    let max_low = (0..4).filter(|&i| !labels[i]).map(|i| outputs[i]).fold(f64::NEG_INFINITY, f64::max);
    let separation = min_high - max_low;
    GateEvaluation {
        outputs,
        boundary: 0.5 * (min_high + max_low),
        separation,
        success: separation > 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub controls: Vec<f64>,
    pub outputs: [f64; 4],
    /// `None` for a degenerate iteration (outputs with zero variance).
    pub loss: Option<f64>,
    pub gradient: Vec<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainRecord {
    pub gate: Gate,
    pub seed: u64,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations_used: usize,
    pub final_controls: Vec<f64>,
    pub evaluation: GateEvaluation,
    /// Converged below the stop threshold with positive separation.
    pub success: bool,
}

impl TrainRecord {
    pub fn loss_trace(&self) -> Vec<Option<f64>> {
        self.iterations.iter().map(|r| r.loss).collect()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.iterations.last().and_then(|r| r.loss)
    }
}

/// Uniform initial controls inside the task's control range.
pub fn initial_controls(task: &GateTask, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = task.control_range;
    (0..task.control_terminals.len())
        .map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo })
        .collect()
}

/// Iterates batch gradient and update until the loss falls below the stop
/// threshold or `max_iters` measurements have been made.
///
/// A degenerate iteration (zero-variance outputs) records no loss and leaves
/// the controls unchanged.
pub fn train_gate(device: &DeviceModel, task: &GateTask, config: &TrainConfig) -> Result<TrainRecord> {
    task.validate(device.terminal_count())?;
    config.validate()?;
    if config.plan.terminal_count() != device.terminal_count() {
        return Err(HgeError::DimensionMismatch {
            expected: device.terminal_count(),
            got: config.plan.terminal_count(),
        });
    }
    if task
        .control_terminals
        .iter()
        .any(|&c| config.plan.amps_v[c] <= 0.0)
    {
        return Err(HgeError::InvalidPlan(
            "every control terminal needs a non-zero perturbation amplitude".into(),
        ));
    }

    let mut controls = initial_controls(task, config.seed);
    let mut iterations = Vec::with_capacity(config.max_iters);
    let mut converged = false;
    for it in 0..config.max_iters {
        let noise = config.noise.map(|n| n.derive(it as u64));
        let cases = measure_cases(device, task, &controls, &config.plan, noise.as_ref())?;
        let outputs = {
            let mut o = [0.0; 4];
            for c in &cases {
                o[c.case] = c.mean_output;
            }
            o
        };
        match combine_cases(task, cases, &config.loss) {
            Ok(batch) => {
                let loss = batch.loss.value;
                iterations.push(IterationRecord {
                    iteration: it,
                    controls: controls.clone(),
                    outputs,
                    loss: Some(loss),
                    gradient: batch.gradient.clone(),
                    degenerate: false,
                });
                if loss < config.stop_threshold {
                    converged = true;
                    break;
                }
                controls = gd_step(&controls, &batch.gradient, config.eta, task.control_range);
            }
            Err(HgeError::ZeroVariance(_)) => {
                iterations.push(IterationRecord {
                    iteration: it,
                    controls: controls.clone(),
                    outputs,
                    loss: None,
                    gradient: vec![0.0; controls.len()],
                    degenerate: true,
                });
            }
            Err(e) => return Err(e),
        }
    }
    let evaluation = evaluate_gate(device, task, &controls)?;
    Ok(TrainRecord {
        gate: task.gate,
        seed: config.seed,
        iterations_used: iterations.len(),
        iterations,
        converged,
        success: converged && evaluation.success,
        final_controls: controls,
        evaluation,
    })
}

/// Linear ramps of `ramp_samples` between consecutive cases, for realistic
/// input waveforms. Returns per-terminal traces for cases 00, 01, 10, 11 in
/// sequence (ramp, then the DC case window of `window_samples`).
pub fn case_sequence_voltages(
    task: &GateTask,
    controls: &[f64],
    window_samples: usize,
    ramp_samples: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = task.terminal_count();
    let mut traces = vec![Vec::new(); n];
    let mut prev: Option<VoltageVector> = None;
    for case in 0..4 {
        let v = task.voltages(controls, case)?;
        if let Some(p) = &prev {
            for (t, trace) in traces.iter_mut().enumerate() {
                for k in 1..=ramp_samples {
                    let frac = k as f64 / (ramp_samples + 1) as f64;
                    trace.push(p[t] + frac * (v[t] - p[t]));
                }
            }
        }
        for (t, trace) in traces.iter_mut().enumerate() {
            trace.extend(std::iter::repeat_n(v[t], window_samples));
        }
        prev = Some(v);
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::presets;

    fn toy_and_device() -> DeviceModel {
        // I = s [u1 u2 + c (u1 + u2)] with u = (V_data - low) / (high - low):
        // exact AND at c = 0
        let s = 10.0;
        let (lo, hi) = (GateTask::DEFAULT_LOW_VOLTAGE, GateTask::DEFAULT_HIGH_VOLTAGE);
        let k = 1.0 / (hi - lo);
        // terminal order: control, data a, data b
        // u1 u2 = k^2 (a - lo)(b - lo); c (u1 + u2) = c k (a + b - 2 lo)
        let q_ab = s * k * k / 2.0;
        let q_ca = s * k / 2.0;
        let offset = s * k * k * lo * lo;
        let w = vec![-2.0 * s * k * lo, -s * k * k * lo, -s * k * k * lo];
        DeviceModel::quadratic(
            offset,
            w,
            vec![
                vec![0.0, q_ca, q_ca],
                vec![q_ca, 0.0, q_ab],
                vec![q_ca, q_ab, 0.0],
            ],
        )
        .unwrap()
    }

    fn toy_plan() -> PerturbationPlan {
        PerturbationPlan::new(vec![20.0, 60.0, 100.0], vec![0.01, 0.01, 0.01], 1000.0, 1)
    }

    #[test]
    fn truth_tables() {
        assert_eq!(Gate::And.truth_table(), [false, false, false, true]);
        assert_eq!(Gate::Xor.truth_table(), [false, true, true, false]);
        assert_eq!(Gate::Nor.truth_table(), [true, false, false, false]);
        assert_eq!(Gate::Xnor.mse_targets(), [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(Gate::Or.mse_targets(), [0.0, 10.0, 10.0, 10.0]);
        assert_eq!("xnor".parse::<Gate>().unwrap(), Gate::Xnor);
        assert!("nope".parse::<Gate>().is_err());
    }

    #[test]
    fn toy_device_is_and_at_zero_control() {
        let d = toy_and_device();
        let task = GateTask::with_data_terminals(Gate::And, 3, [1, 2]);
        let e = evaluate_gate(&d, &task, &[0.0]).unwrap();
        for (o, w) in e.outputs.iter().zip([0.0, 0.0, 0.0, 10.0]) {
            assert!((o - w).abs() < 1e-12, "{:?}", e.outputs);
        }
        assert!(e.success);
    }

    #[test]
    fn gd_step_cases() {
        assert_eq!(gd_step(&[0.1, -0.3], &[0.0, 0.0], 0.02, (-1.2, 0.9)), vec![0.1, -0.3]);
        let v = gd_step(&[0.0, 0.0], &[1.0, 1.0], 0.02, (-1.2, 0.9));
        assert!(v.iter().all(|&x| (x + 0.02).abs() < 1e-15));
        assert_eq!(gd_step(&[0.85, -1.15], &[-10.0, 10.0], 0.02, (-1.2, 0.9)), vec![0.9, -1.2]);
    }

    #[test]
    fn evaluate_gate_classification() {
        let and = Gate::And.truth_table();
        let e = classify([0.0, 0.0, 0.0, 10.0], and);
        assert!(e.success && e.boundary == 5.0);
        assert!(!classify([0.0, 10.0, 0.0, 10.0], and).success);
        let e = classify([3.0; 4], and);
        assert!(!e.success && e.separation == 0.0);
    }

    #[test]
    fn task_validation() {
        let t = GateTask::new(Gate::And, 7);
        assert_eq!(t.control_terminals, vec![0, 3, 4, 5, 6]);
        t.validate(7).unwrap();
        assert!(t.validate(8).is_err());
        let mut bad = t.clone();
        bad.data_terminals = [1, 1];
        assert!(bad.validate(7).is_err());
        let mut bad = t.clone();
        bad.low_voltage = 1.0;
        assert!(bad.validate(7).is_err());
        let mut bad = t;
        bad.control_range = (1.0, -1.0);
        assert!(bad.validate(7).is_err());
    }

    #[test]
    fn case_voltages_follow_bit_order() {
        let t = GateTask::with_data_terminals(Gate::And, 3, [1, 2]);
        let v = t.voltages(&[0.5], 1).unwrap();
        assert_eq!(v.as_slice(), &[0.5, -1.2, 0.6]);
        let v = t.voltages(&[0.5], 2).unwrap();
        assert_eq!(v.as_slice(), &[0.5, 0.6, -1.2]);
    }

    #[test]
    fn linear_device_case_gradients() {
        let w = vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.25, -2.0];
        let d = DeviceModel::linear(0.0, w.clone()).unwrap();
        let task = GateTask::new(Gate::Or, 7);
        let controls = vec![0.1; 5];
        let plan = presets::fig3_high_freq();
        let want: Vec<f64> = task.control_terminals.iter().map(|&c| w[c]).collect();
        for case in 0..4 {
            let m = case_measure(&d, &task, &controls, case, &plan, None).unwrap();
            for (g, w) in m.control_gradient.iter().zip(&want) {
                assert!((g - w).abs() < 1e-9 * w.abs());
            }
            assert!(m.estimate.terminals[1].derivative.is_none());
        }
    }

    #[test]
    fn linear_device_mse_batch_gradient_closed_form() {
        let w = vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.25, -2.0];
        let d = DeviceModel::linear(0.2, w.clone()).unwrap();
        let task = GateTask::new(Gate::And, 7);
        let controls = vec![0.1, -0.2, 0.3, 0.0, 0.5];
        let targets = Gate::And.mse_targets();
        let loss = LossKind::Mse { targets };
        let b = batch_gradient(&d, &task, &controls, &presets::fig3_high_freq(), &loss, None).unwrap();
        let coef: f64 = (0..4)
            .map(|c| {
                let y = d.eval_static(&task.voltages(&controls, c).unwrap()).unwrap();
                2.0 * (y - targets[c]) / 4.0
            })
            .sum();
        for (g, &t) in b.gradient.iter().zip(&task.control_terminals) {
            let want = coef * w[t];
            assert!((g - want).abs() <= 1e-9 * want.abs().max(1.0), "{g} vs {want}");
        }
    }

    #[test]
    fn mse_at_target_gives_zero_gradient() {
        // the toy device is an exact AND with highs at 10
        let d = toy_and_device();
        let task = GateTask::with_data_terminals(Gate::And, 3, [1, 2]);
        let loss = LossKind::Mse { targets: [0.0, 0.0, 0.0, 10.0] };
        // perturbation only on the control; its mean output is unaffected by
        // the sinusoid because the device is linear in the control
        let b = batch_gradient(&d, &task, &[0.0], &toy_plan(), &loss, None).unwrap();
        assert!(b.loss.value < 1e-20);
        assert!(b.gradient.iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn batch_gradient_is_sum_of_case_terms() {
        let d = DeviceModel::reference_surrogate();
        let task = GateTask::new(Gate::Xor, 7);
        let controls = vec![0.2, -0.5, 0.1, 0.7, -0.9];
        let plan = presets::fig3_high_freq();
        let b = batch_gradient(&d, &task, &controls, &plan, &LossKind::CorrSigmoid, None).unwrap();
        let mut want = vec![0.0; 5];
        for case in 0..4 {
            let m = case_measure(&d, &task, &controls, case, &plan, None).unwrap();
            assert_eq!(m.mean_output, b.outputs[case]);
            for (w, g) in want.iter_mut().zip(&m.control_gradient) {
                *w += b.loss.grad_y[case] * g;
            }
        }
        assert_eq!(want, b.gradient);
    }

    #[test]
    fn eta_zero_freezes_controls() {
        let d = DeviceModel::reference_surrogate();
        let task = GateTask::new(Gate::And, 7);
        let mut cfg = TrainConfig::for_gate(Gate::And, presets::fig3_high_freq(), 3);
        cfg.eta = 0.0;
        cfg.max_iters = 5;
        cfg.stop_threshold = 1e-12;
        let r = train_gate(&d, &task, &cfg).unwrap();
        assert_eq!(r.iterations_used, 5);
        let first = &r.iterations[0];
        for it in &r.iterations {
            assert_eq!(it.controls, first.controls);
            assert_eq!(it.loss, first.loss);
        }
    }

    #[test]
    fn toy_and_converges_for_most_seeds() {
        let d = toy_and_device();
        let task = GateTask::with_data_terminals(Gate::And, 3, [1, 2]);
        let ok = (0..10)
            .filter(|&seed| {
                let cfg = TrainConfig::for_gate(Gate::And, toy_plan(), seed);
                let r = train_gate(&d, &task, &cfg).unwrap();
                r.success && r.final_loss().unwrap() < 0.15
            })
            .count();
        assert!(ok > 5, "{ok}/10 seeds converged");
    }

    #[test]
    fn training_is_deterministic_and_in_range() {
        let d = DeviceModel::reference_surrogate();
        let task = GateTask::new(Gate::Nand, 7);
        let mut cfg = TrainConfig::for_gate(Gate::Nand, presets::fig3_high_freq(), 11);
        cfg.max_iters = 20;
        cfg.noise = Some(NoiseModel::white(0.05, 2));
        let a = train_gate(&d, &task, &cfg).unwrap();
        let b = train_gate(&d, &task, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iterations.len(), a.iterations_used);
        for it in &a.iterations {
            assert!(it.controls.iter().all(|c| (-1.2..=0.9).contains(c)));
        }
        if a.success {
            assert!(a.evaluation.success);
        }
    }

    #[test]
    fn ramps_do_not_touch_case_windows() {
        let task = GateTask::new(Gate::And, 7);
        let controls = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        let traces = case_sequence_voltages(&task, &controls, 10, 4).unwrap();
        assert_eq!(traces[0].len(), 4 * 10 + 3 * 4);
        // data terminal a: cases 00 and 01 low, then ramp up to high
        assert!(traces[1][..24].iter().all(|&v| v == -1.2));
        let ramp = &traces[1][24..28];
        assert!(ramp.windows(2).all(|w| w[1] > w[0]));
        assert!(traces[1][28..38].iter().all(|&v| v == 0.6));
        assert!(traces[0].iter().all(|&v| v == 0.1));
    }
}
