//! Experiment configuration: a TOML file with named sections.
//!
//! Units are fixed: frequencies in Hz, perturbation amplitudes in mV, phases
//! in degrees, voltages in V. Terminal numbers are one-based here and
//! zero-based in the library.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hge_core::devices::{stream_seed, DeviceModel, MlpSurrogate, NoiseModel, VoltageVector};
use hge_core::optimizer::{Gate, GateTask, TrainConfig};
use hge_core::signals::{presets, validate_plan, PerturbationPlan};
use hge_core::validation::Oracle;
use hge_core::LossKind;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Noise, control initialisation and sweep points derive
    /// from it.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub device: DeviceSection,
    pub noise: Option<NoiseSection>,
    pub plan: PlanSection,
    pub task: TaskSection,
    pub train: TrainSection,
    pub extract: ExtractSection,
    pub sweep: SweepSection,
}

/// Inline device or a reference to a device file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeviceSection {
    Surrogate {
        #[serde(default = "default_device_seed")]
        seed: u64,
        #[serde(default = "default_layers")]
        layers: Vec<usize>,
    },
    Linear {
        #[serde(default)]
        offset: f64,
        weights: Vec<f64>,
    },
    Quadratic {
        #[serde(default)]
        offset: f64,
        weights: Vec<f64>,
        q: Vec<Vec<f64>>,
    },
    Cubic {
        #[serde(default)]
        offset: f64,
        weights: Vec<f64>,
        quadratic: Vec<f64>,
        cubic: Vec<f64>,
    },
    File {
        path: PathBuf,
    },
}

fn default_device_seed() -> u64 {
    42
}

fn default_layers() -> Vec<usize> {
    vec![7, 20, 10, 1]
}

impl Default for DeviceSection {
    fn default() -> Self {
        Self::Surrogate {
            seed: default_device_seed(),
            layers: default_layers(),
        }
    }
}

/// Output noise in device output units. The seed comes from the master seed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub white_std: f64,
    pub pink_amplitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    /// Starting point; explicit fields below override it.
    pub preset: Option<String>,
    pub freqs_hz: Option<Vec<f64>>,
    pub amps_mv: Option<Vec<f64>>,
    pub phases_deg: Option<Vec<f64>>,
    pub sample_rate_hz: Option<f64>,
    pub n_cycles: Option<u32>,
    pub allow_leakage: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub gate: Gate,
    /// One-based.
    pub data_terminals: [usize; 2],
    pub low_v: f64,
    pub high_v: f64,
    pub control_range_v: [f64; 2],
}

impl Default for TaskSection {
    fn default() -> Self {
        let [a, b] = GateTask::DEFAULT_DATA_TERMINALS;
        let (lo, hi) = GateTask::DEFAULT_CONTROL_RANGE;
        Self {
            gate: Gate::And,
            data_terminals: [a + 1, b + 1],
            low_v: GateTask::DEFAULT_LOW_VOLTAGE,
            high_v: GateTask::DEFAULT_HIGH_VOLTAGE,
            control_range_v: [lo, hi],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    #[default]
    CorrSigmoid,
    Mse,
}

impl LossName {
    pub fn name(self) -> &'static str {
        match self {
            Self::CorrSigmoid => "corr_sigmoid",
            Self::Mse => "mse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub eta: f64,
    pub max_iters: usize,
    /// Defaults to 0.3 for XOR/XNOR and 0.15 otherwise.
    pub stop_threshold: Option<f64>,
    pub loss: LossName,
    /// Case targets for `mse`; 0 and 10 (1 for XNOR) when absent.
    pub mse_targets: Option<[f64; 4]>,
    /// Independent restarts with seeds `seed, seed + 1, ...`.
    pub restarts: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            eta: TrainConfig::DEFAULT_ETA,
            max_iters: TrainConfig::DEFAULT_MAX_ITERS,
            stop_threshold: None,
            loss: LossName::CorrSigmoid,
            mse_targets: None,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    /// Operating point; zeros when absent.
    pub v_dc: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepKind {
    #[default]
    Scatter,
    SingleVsMulti,
    SamplingTime,
    Amplitude,
    FrequencyFactor,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Scatter => "scatter",
            Self::SingleVsMulti => "single_vs_multi",
            Self::SamplingTime => "sampling_time",
            Self::Amplitude => "amplitude",
            Self::FrequencyFactor => "frequency_factor",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, Self::Scatter | Self::SingleVsMulti)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub kind: SweepKind,
    pub n_points: usize,
    pub input_range_v: [f64; 2],
    pub oracle: Oracle,
    pub max_cycles: u32,
    pub repeats: usize,
    pub ladder_mv: Option<Vec<Vec<f64>>>,
    pub factors: Option<Vec<f64>>,
    /// Operating point for the sweeps; zeros when absent.
    pub v_dc: Option<Vec<f64>>,
    /// White noise std as a fraction of the largest `|dI/dV_m| * amplitude_m`
    /// at `v_dc`. Replaces `noise.white_std` when set.
    pub noise_fraction: Option<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            kind: SweepKind::Scatter,
            n_points: 3000,
            input_range_v: [-1.0, 1.0],
            oracle: Oracle::Analytic,
            max_cycles: 20,
            repeats: 10,
            ladder_mv: None,
            factors: None,
            v_dc: None,
            noise_fraction: None,
        }
    }
}

/// Device file: the keys of a `[device]` section plus an optional `[noise]`
/// table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
struct DeviceFile {
    #[serde(flatten)]
    device: DeviceSection,
    noise: Option<NoiseSection>,
}

/// Config text plus where it came from, kept verbatim for the run record.
#[derive(Debug, Clone, Default)]
pub struct LoadedConfig {
    pub path: Option<PathBuf>,
    pub text: String,
    pub config: ExperimentConfig,
}

/// Parses config text. Errors carry the line and column.
pub fn parse_config(text: &str, origin: &str) -> anyhow::Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| UsageError(format!("{origin}: {e}")).into())
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<LoadedConfig> {
    let Some(path) = path else {
        return Ok(LoadedConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let config = parse_config(&text, &path.display().to_string())?;
    Ok(LoadedConfig {
        path: Some(path.to_path_buf()),
        text,
        config,
    })
}

/// Everything a command needs, in library units and zero-based indices.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub device: DeviceModel,
    pub noise: Option<NoiseModel>,
    pub plan: PerturbationPlan,
}

impl ExperimentConfig {
    /// The plan after applying the preset and explicit fields. Not validated.
    pub fn plan(&self) -> anyhow::Result<PerturbationPlan> {
        let p = &self.plan;
        let mut plan = match &p.preset {
            Some(name) => presets::by_name(name).ok_or_else(|| {
                UsageError(format!(
                    "unknown preset {name:?}; expected one of {}",
                    presets::NAMES.join(", ")
                ))
            })?,
            None => {
                let (Some(freqs), Some(amps)) = (&p.freqs_hz, &p.amps_mv) else {
                    return Err(UsageError("plan needs a preset or both freqs_hz and amps_mv".into()).into());
                };
                PerturbationPlan::new(
                    freqs.clone(),
                    amps.clone(),
                    presets::SAMPLE_RATE_HZ,
                    10,
                )
            }
        };
        if let Some(f) = &p.freqs_hz {
            plan.freqs_hz = f.clone();
        }
        if let Some(a) = &p.amps_mv {
            plan.amps_v = a.iter().map(|mv| mv * 1e-3).collect();
        }
        match &p.phases_deg {
            Some(ph) => plan.phases_rad = ph.iter().map(|d| d.to_radians()).collect(),
            None if plan.phases_rad.len() != plan.freqs_hz.len() => {
                plan.phases_rad = vec![0.0; plan.freqs_hz.len()];
            }
            None => {}
        }
        if let Some(r) = p.sample_rate_hz {
            plan.sample_rate_hz = r;
        }
        if let Some(c) = p.n_cycles {
            plan.n_cycles = c;
        }
        if let Some(l) = p.allow_leakage {
            plan.allow_leakage = l;
        }
        Ok(plan)
    }

    /// Resolves device, noise and plan, and checks the plan against the
    /// device. `base` is the directory relative device paths start from.
    pub fn resolve(&self, base: &Path) -> anyhow::Result<Resolved> {
        let (device, file_noise) = self.device(base)?;
        let noise = self.noise.or(file_noise).map(|n| NoiseModel {
            white_std: n.white_std,
            pink_amplitude: n.pink_amplitude,
            seed: self.noise_seed(),
        });
        if let Some(n) = &noise {
            n.validate().context("noise section")?;
        }
        let plan = self.plan()?;
        let report = validate_plan(&plan);
        if !report.is_ok() {
            return Err(PlanRejected(report.error_summary()).into());
        }
        if plan.terminal_count() != device.terminal_count() {
            bail!(UsageError(format!(
                "plan has {} terminals but the device has {}",
                plan.terminal_count(),
                device.terminal_count()
            )));
        }
        Ok(Resolved { device, noise, plan })
    }

    fn device(&self, base: &Path) -> anyhow::Result<(DeviceModel, Option<NoiseSection>)> {
        if let DeviceSection::File { path } = &self.device {
            let full = base.join(path);
            let text = std::fs::read_to_string(&full)
                .map_err(|e| UsageError(format!("cannot read device file {}: {e}", full.display())))?;
            let file: DeviceFile =
                toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", full.display())))?;
            if matches!(file.device, DeviceSection::File { .. }) {
                bail!(UsageError(format!("{}: a device file cannot point to another file", full.display())));
            }
            return Ok((build_device(&file.device)?, file.noise));
        }
        Ok((build_device(&self.device)?, None))
    }

    pub fn noise_seed(&self) -> u64 {
        stream_seed(self.seed, 1)
    }

    /// Seed of the first training restart.
    pub fn train_seed(&self) -> u64 {
        self.seed
    }

    pub fn sweep_seed(&self) -> u64 {
        stream_seed(self.seed, 2)
    }

    pub fn task(&self, n_terminals: usize) -> anyhow::Result<GateTask> {
        let t = &self.task;
        let [a, b] = t.data_terminals;
        if a == 0 || b == 0 {
            bail!(UsageError("task.data_terminals are one-based".into()));
        }
        let mut task = GateTask::with_data_terminals(t.gate, n_terminals, [a - 1, b - 1]);
        task.low_voltage = t.low_v;
        task.high_voltage = t.high_v;
        task.control_range = (t.control_range_v[0], t.control_range_v[1]);
        task.validate(n_terminals).context("task section")?;
        Ok(task)
    }

    pub fn train_config(&self, gate: Gate, plan: PerturbationPlan, noise: Option<NoiseModel>) -> anyhow::Result<TrainConfig> {
        let t = &self.train;
        if t.restarts == 0 {
            bail!(UsageError("train.restarts must be >= 1".into()));
        }
        let loss = match t.loss {
            LossName::CorrSigmoid => LossKind::CorrSigmoid,
            LossName::Mse => LossKind::Mse {
                targets: t.mse_targets.unwrap_or_else(|| gate.mse_targets()),
            },
        };
        let config = TrainConfig {
            eta: t.eta,
            max_iters: t.max_iters,
            stop_threshold: t.stop_threshold.unwrap_or_else(|| gate.default_stop_threshold()),
            plan,
            loss,
            seed: self.train_seed(),
            noise,
        };
        config.validate().context("train section")?;
        Ok(config)
    }
}

pub fn build_device(section: &DeviceSection) -> anyhow::Result<DeviceModel> {
    let device = match section {
        DeviceSection::Surrogate { seed, layers } => {
            DeviceModel::Mlp(MlpSurrogate::generate(*seed, layers).context("surrogate device")?)
        }
        DeviceSection::Linear { offset, weights } => DeviceModel::linear(*offset, weights.clone())?,
        DeviceSection::Quadratic { offset, weights, q } => DeviceModel::quadratic(*offset, weights.clone(), q.clone())?,
        DeviceSection::Cubic {
            offset,
            weights,
            quadratic,
            cubic,
        } => DeviceModel::cubic(*offset, weights.clone(), quadratic.clone(), cubic.clone())?,
        DeviceSection::File { .. } => unreachable!("resolved by the caller"),
    };
    Ok(device)
}

/// An operating point from config, or zeros.
pub fn operating_point(v: &Option<Vec<f64>>, n: usize, what: &str) -> anyhow::Result<VoltageVector> {
    match v {
        Some(v) if v.len() != n => bail!(UsageError(format!("{what} has {} entries, expected {n}", v.len()))),
        Some(v) => Ok(VoltageVector::new(v.clone()).with_context(|| what.to_string())?),
        None => Ok(VoltageVector::zeros(n)),
    }
}

/// A plan that failed validation; exit code 1.
#[derive(Debug)]
pub struct PlanRejected(pub String);

impl std::fmt::Display for PlanRejected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid plan: {}", self.0)
    }
}

impl std::error::Error for PlanRejected {}
