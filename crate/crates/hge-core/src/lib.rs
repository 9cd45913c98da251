//! Homodyne gradient extraction (HGE) for black-box multi-input devices.
//!
//! Every input of a device is perturbed with a small sinusoid at its own
//! frequency. Lock-in demodulation of the single output at each frequency
//! recovers the amplitude and sign of the response, and dividing by the
//! perturbation amplitude gives the partial derivative for that input. The
//! gradient then drives plain gradient descent on the control voltages, here
//! used to turn simulated devices into Boolean gates.
//!
//! Modules:
//! - [`devices`]: simulated devices with exact gradient oracles and noise
//! - [`signals`]: perturbation plans, presets and input synthesis
//! - [`lockin`]: demodulation and gradient extraction
//! - [`loss`]: gate losses and their output gradients
//! - [`optimizer`]: batch gradients and the training loop
//! - [`validation`]: accuracy experiments and summary statistics

pub mod devices;
pub mod error;
pub mod lockin;
pub mod loss;
pub mod optimizer;
pub mod par;
pub mod signals;
pub mod validation;

pub use devices::{DeviceModel, MlpSurrogate, NoiseModel, OutputTrace, VoltageVector};
pub use error::{HgeError, Result};
pub use lockin::{demodulate, extract_gradient, hge_measure, measure, remove_dc, DemodResult, GradientEstimate};
pub use loss::{corr_sigmoid_loss, mse_loss, pearson, GateOutputs, LossEval, LossKind};
pub use optimizer::{
    batch_gradient, case_measure, evaluate_gate, gd_step, train_gate, Gate, GateTask, TrainConfig, TrainRecord,
};
pub use signals::{build_inputs, suggest_frequencies, validate_plan, InputTraces, PerturbationPlan, PlanReport};
pub use validation::{ScatterReport, ScatterStats, SweepResult};
