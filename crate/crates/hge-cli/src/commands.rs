use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hge_core::devices::{DeviceModel, NoiseModel};
use hge_core::lockin::measure;
use hge_core::optimizer::train_gate;
use hge_core::signals::{presets, validate_plan};
use hge_core::validation::{
    amplitude_sweep, frequency_factor_sweep, gradient_scatter, random_points, sampling_time_sweep, single_vs_multi,
    ScatterConfig, ScatterReport, ScatterStats, SweepResult,
};
use hge_core::{par, TrainRecord};
use serde::Serialize;

use crate::config::{operating_point, DeviceSection, ExperimentConfig, LoadedConfig, PlanSection, SweepKind};
use crate::output::{json_bytes, num, opt, write_atomic, Table};
use crate::{Common, UsageError};

const DEFAULT_OUT: &str = "hge-out";

/// Settings shared by every command after flags are applied.
struct Run {
    loaded: LoadedConfig,
    config: ExperimentConfig,
    common: Common,
}

impl Run {
    fn new(common: &Common) -> anyhow::Result<Self> {
        let loaded = crate::config::load_config(common.config.as_deref())?;
        let mut config = loaded.config.clone();
        if let Some(seed) = common.seed {
            config.seed = seed;
        }
        if let Some(preset) = &common.preset {
            config.plan = PlanSection {
                preset: Some(preset.clone()),
                ..PlanSection::default()
            };
        }
        Ok(Self {
            loaded,
            config,
            common: common.clone(),
        })
    }

    fn base_dir(&self) -> PathBuf {
        self.loaded
            .path
            .as_deref()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_default()
    }

    fn out_dir(&self) -> PathBuf {
        self.common
            .out
            .clone()
            .or_else(|| self.config.output_dir.as_ref().map(|d| self.base_dir().join(d)))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    fn record<T: Serialize>(&self, command: &str, seeds: Seeds, outputs: T, started: Option<u64>) -> RunRecord<'_, T> {
        RunRecord {
            artifact: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_path: self.loaded.path.as_ref().map(|p| p.display().to_string()),
            config_snapshot: &self.loaded.text,
            overrides: Overrides {
                seed: self.common.seed,
                preset: self.common.preset.clone(),
            },
            seeds,
            timestamps: started.map(|start| Timestamps {
                started_unix_s: start,
                finished_unix_s: unix_now(),
            }),
            outputs,
        }
    }

    fn started(&self) -> Option<u64> {
        self.common.timestamps.then(unix_now)
    }

    fn write_record<T: Serialize>(&self, record: &RunRecord<'_, T>) -> anyhow::Result<PathBuf> {
        write_atomic(&self.out_dir(), "run_record.json", &json_bytes(record)?)
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Everything needed to repeat a run: the config text verbatim, the flag
/// overrides and the seeds that were derived from them.
#[derive(Debug, Serialize)]
pub struct RunRecord<'a, T> {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_path: Option<String>,
    pub config_snapshot: &'a str,
    pub overrides: Overrides,
    pub seeds: Seeds,
    /// Only with `--timestamps`; off by default so reruns are byte-identical.
    pub timestamps: Option<Timestamps>,
    pub outputs: T,
}

#[derive(Debug, Serialize)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<String>,
}

#[derive(Debug, Default, Serialize)]
pub struct Seeds {
    pub master: u64,
    pub device: Option<u64>,
    pub noise: Option<u64>,
    pub train: Vec<u64>,
    pub sweep: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct Timestamps {
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
}

fn seeds(config: &ExperimentConfig, noise: Option<&NoiseModel>) -> Seeds {
    Seeds {
        master: config.seed,
        device: match config.device {
            DeviceSection::Surrogate { seed, .. } => Some(seed),
            _ => None,
        },
        noise: noise.map(|n| n.seed),
        ..Seeds::default()
    }
}

/// Checks the plan. Exit code 1 if it has errors; warnings are printed only.
pub fn validate_plan_cmd(common: &Common) -> anyhow::Result<u8> {
    let ctx = Run::new(common)?;
    let plan = ctx.config.plan()?;
    let report = validate_plan(&plan);
    println!("terminals: {}", plan.terminal_count());
    if report.is_ok() {
        let samples = plan.window_samples()?;
        println!(
            "window: {} s, {} samples at {} Hz, resolution bandwidth {} Hz",
            plan.window_seconds(),
            samples,
            plan.sample_rate_hz,
            plan.resolution_bandwidth()
        );
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    for e in &report.errors {
        println!("error: {e}");
    }
    if report.is_ok() {
        println!("plan ok ({} warnings)", report.warnings.len());
        Ok(0)
    } else {
        println!("plan rejected ({} errors)", report.errors.len());
        Ok(1)
    }
}

pub const EXTRACT_HEADER: [&str; 10] = [
    "terminal",
    "freq_hz",
    "amp_v",
    "x",
    "y",
    "amplitude",
    "phase_rad",
    "sign",
    "derivative",
    "measured",
];

pub fn extract_cmd(common: &Common) -> anyhow::Result<u8> {
    let ctx = Run::new(common)?;
    let started = ctx.started();
    let r = ctx.config.resolve(&ctx.base_dir())?;
    let v_dc = operating_point(&ctx.config.extract.v_dc, r.device.terminal_count(), "extract.v_dc")?;
    let m = measure(&r.device, &v_dc, &r.plan, r.noise.as_ref()).context("extraction failed")?;

    let mut table = Table::new(&EXTRACT_HEADER)?;
    println!(
        "{:>4} {:>10} {:>9} {:>13} {:>13} {:>13} {:>9} {:>4} {:>13}",
        "term", "freq_hz", "amp_mv", "x", "y", "amplitude", "phase", "sign", "derivative"
    );
    for (i, t) in m.estimate.terminals.iter().enumerate() {
        let d = &t.demod;
        table.row([
            (i + 1).to_string(),
            num(t.freq_hz),
            num(t.amp_v),
            num(d.x),
            num(d.y),
            num(d.amplitude),
            num(d.phase),
            t.sign.to_string(),
            opt(t.derivative),
            t.derivative.is_some().to_string(),
        ])?;
        let deriv = t.derivative.map_or_else(|| "not measured".to_string(), |v| format!("{v:.6e}"));
        println!(
            "{:>4} {:>10} {:>9.3} {:>13.5e} {:>13.5e} {:>13.5e} {:>9.4} {:>4} {:>13}",
            i + 1,
            t.freq_hz,
            t.amp_v * 1e3,
            d.x,
            d.y,
            d.amplitude,
            d.phase,
            t.sign,
            deriv
        );
    }
    println!("mean output: {}", num(m.mean_output));
    let dir = ctx.out_dir();
    let csv = write_atomic(&dir, "extract.csv", &table.into_bytes()?)?;

    let seeds = seeds(&ctx.config, r.noise.as_ref());
    let record = ctx.record("extract", seeds, &m, started);
    let rec = ctx.write_record(&record)?;
    println!("wrote {} and {}", csv.display(), rec.display());
    Ok(0)
}

/// Acceptance statistics of a scatter comparison.
#[derive(Debug, Serialize)]
pub struct ScatterSummary {
    pub n_points: usize,
    pub slope: f64,
    pub intercept: f64,
    pub median_abs_error: f64,
    pub p95_abs_error: f64,
    pub median_rel_error: f64,
    pub histogram: HistogramSummary,
}

/// Histogram of `estimate - reference`.
#[derive(Debug, Serialize)]
pub struct HistogramSummary {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub bin_width: f64,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl From<&ScatterStats> for ScatterSummary {
    fn from(s: &ScatterStats) -> Self {
        Self {
            n_points: s.n_points,
            slope: s.slope,
            intercept: s.intercept,
            median_abs_error: s.median_abs_error,
            p95_abs_error: s.p95_abs_error,
            median_rel_error: s.median_rel_error,
            histogram: HistogramSummary {
                mean: s.diff_mean,
                std: s.diff_std,
                skewness: s.diff_skewness,
                bin_width: s.histogram.bin_width,
                edges: s.histogram.edges.clone(),
                counts: s.histogram.counts.clone(),
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SweepPointSummary {
    pub value: f64,
    pub n_cycles: u32,
    pub coherent: bool,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub reference_mean: Vec<f64>,
    pub reference_std: Vec<f64>,
    /// Largest `|mean - reference_mean|` over terminals.
    pub max_abs_deviation: f64,
}

#[derive(Debug, Serialize)]
pub struct RejectedSummary {
    pub value: f64,
    pub reason: String,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub parameter: String,
    pub oracle: Vec<f64>,
    pub points: Vec<SweepPointSummary>,
    pub rejected: Vec<RejectedSummary>,
}

impl From<&SweepResult> for SweepSummary {
    fn from(s: &SweepResult) -> Self {
        Self {
            parameter: s.parameter.clone(),
            oracle: s.oracle.clone(),
            points: s
                .points
                .iter()
                .map(|p| SweepPointSummary {
                    value: p.value,
                    n_cycles: p.n_cycles,
                    coherent: p.coherent,
                    mean: p.mean.clone(),
                    std: p.std.clone(),
                    reference_mean: p.reference_mean.clone(),
                    reference_std: p.reference_std.clone(),
                    max_abs_deviation: p
                        .mean
                        .iter()
                        .zip(&p.reference_mean)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max),
                })
                .collect(),
            rejected: s
                .rejected
                .iter()
                .map(|r| RejectedSummary {
                    value: r.value,
                    reason: r.reason.clone(),
                })
                .collect(),
        }
    }
}

/// Contents of `<kind>_summary.json`; see `schemas/summary.schema.json`.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub kind: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub noise_white_std: f64,
    pub scatter: Option<ScatterSummary>,
    pub sweep: Option<SweepSummary>,
}

pub const SCATTER_HEADER: [&str; 6] = ["point", "terminal", "voltage_v", "reference", "estimate", "error"];
pub const SWEEP_HEADER: [&str; 12] = [
    "value",
    "terminal",
    "n_cycles",
    "coherent",
    "freq_hz",
    "amp_v",
    "mean",
    "std",
    "reference_mean",
    "reference_std",
    "oracle",
    "repeats",
];
pub const ESTIMATES_HEADER: [&str; 4] = ["value", "repeat", "terminal", "estimate"];

fn scatter_table(report: &ScatterReport) -> anyhow::Result<Vec<u8>> {
    let mut t = Table::new(&SCATTER_HEADER)?;
    for p in &report.pairs {
        t.row([
            p.point.to_string(),
            (p.terminal + 1).to_string(),
            num(p.voltage),
            num(p.reference),
            num(p.estimate),
            num(p.estimate - p.reference),
        ])?;
    }
    t.into_bytes()
}

fn sweep_tables(result: &SweepResult) -> anyhow::Result<(Vec<u8>, Vec<u8>)> {
    let mut summary = Table::new(&SWEEP_HEADER)?;
    let mut raw = Table::new(&ESTIMATES_HEADER)?;
    for p in &result.points {
        for m in 0..p.mean.len() {
            summary.row([
                num(p.value),
                (m + 1).to_string(),
                p.n_cycles.to_string(),
                p.coherent.to_string(),
                num(p.freqs_hz[m]),
                num(p.amps_v[m]),
                num(p.mean[m]),
                num(p.std[m]),
                num(p.reference_mean[m]),
                num(p.reference_std[m]),
                num(result.oracle[m]),
                p.estimates.len().to_string(),
            ])?;
        }
        for (r, row) in p.estimates.iter().enumerate() {
            for (m, e) in row.iter().enumerate() {
                raw.row([num(p.value), r.to_string(), (m + 1).to_string(), num(*e)])?;
            }
        }
    }
    Ok((summary.into_bytes()?, raw.into_bytes()?))
}

/// Largest response amplitude `|g_m| * alpha_m` at the operating point.
fn largest_response(device: &DeviceModel, v_dc: &[f64], amps_v: &[f64]) -> anyhow::Result<f64> {
    let g = device.analytic_gradient(v_dc)?;
    Ok(g.iter().zip(amps_v).map(|(g, a)| (g * a).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Serialize)]
enum SweepOutput<'a> {
    Scatter(&'a ScatterReport),
    Sweep(&'a SweepResult),
}

/// Runs a comparison or sweep and writes `<kind>.csv`, `<kind>_summary.json`
/// and `run_record.json` (plus `<kind>_estimates.csv` for sweeps).
pub fn sweep_cmd(common: &Common, kind: Option<SweepKind>, comparisons_only: bool) -> anyhow::Result<u8> {
    let ctx = Run::new(common)?;
    let started = ctx.started();
    let kind = kind.unwrap_or(ctx.config.sweep.kind);
    if comparisons_only && !kind.is_comparison() {
        bail!(UsageError(format!(
            "compare runs scatter or single_vs_multi, not {}; use the sweep command",
            kind.name()
        )));
    }
    let s = &ctx.config.sweep;
    let r = ctx.config.resolve(&ctx.base_dir())?;
    let n = r.device.terminal_count();
    let seed = ctx.config.sweep_seed();
    let range = (s.input_range_v[0], s.input_range_v[1]);
    if kind.is_comparison() && s.n_points == 0 {
        bail!(UsageError("sweep.n_points must be >= 1".into()));
    }

    let mut noise = r.noise;
    let v_dc = operating_point(&s.v_dc, n, "sweep.v_dc")?;
    if let Some(frac) = s.noise_fraction {
        if kind.is_comparison() {
            bail!(UsageError("sweep.noise_fraction applies to sweeps at one operating point".into()));
        }
        if !(frac.is_finite() && frac >= 0.0) {
            bail!(UsageError(format!("sweep.noise_fraction must be >= 0, got {frac}")));
        }
        let scale = largest_response(&r.device, &v_dc, &r.plan.amps_v)?;
        let base = noise.unwrap_or(NoiseModel::white(0.0, ctx.config.noise_seed()));
        noise = Some(NoiseModel {
            white_std: frac * scale,
            ..base
        });
    }

    let (report, result) = match kind {
        SweepKind::Scatter => {
            let cfg = ScatterConfig {
                n_points: s.n_points,
                input_range: range,
                oracle: s.oracle,
                seed,
            };
            (Some(gradient_scatter(&r.device, &r.plan, &cfg, noise.as_ref())?), None)
        }
        SweepKind::SingleVsMulti => {
            let points = random_points(s.n_points, n, range, seed);
            (Some(single_vs_multi(&r.device, &points, &r.plan, noise.as_ref())?), None)
        }
        SweepKind::SamplingTime => {
            let res = sampling_time_sweep(&r.device, &v_dc, &r.plan, s.max_cycles, s.repeats, noise.as_ref())?;
            (None, Some(res))
        }
        SweepKind::Amplitude => {
            let ladder: Vec<Vec<f64>> = match &s.ladder_mv {
                Some(l) if l.is_empty() => bail!(UsageError("sweep.ladder_mv is empty".into())),
                Some(l) => l.clone(),
                None => presets::AMPLITUDE_LADDER_MV.iter().map(|r| r.to_vec()).collect(),
            };
            if let Some(row) = ladder.iter().find(|row| row.len() != n) {
                bail!(UsageError(format!("sweep.ladder_mv rows need {n} entries, found {}", row.len())));
            }
            let ladder_v: Vec<Vec<f64>> = ladder.iter().map(|row| row.iter().map(|mv| mv * 1e-3).collect()).collect();
            let res = amplitude_sweep(&r.device, &v_dc, &r.plan, &ladder_v, s.repeats, noise.as_ref())?;
            (None, Some(res))
        }
        SweepKind::FrequencyFactor => {
            let factors = match &s.factors {
                Some(f) if f.is_empty() => bail!(UsageError("sweep.factors is empty".into())),
                Some(f) => f.clone(),
                None => presets::FREQUENCY_FACTORS.to_vec(),
            };
            let res = frequency_factor_sweep(&r.device, &v_dc, &r.plan, &factors, s.repeats, noise.as_ref())?;
            (None, Some(res))
        }
    };

    let name = kind.name();
    let dir = ctx.out_dir();
    let summary = Summary {
        kind: name,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        noise_white_std: noise.map_or(0.0, |n| n.white_std),
        scatter: report.as_ref().map(|r| ScatterSummary::from(&r.stats)),
        sweep: result.as_ref().map(SweepSummary::from),
    };
    let mut written = Vec::new();
    if let Some(rep) = &report {
        written.push(write_atomic(&dir, &format!("{name}.csv"), &scatter_table(rep)?)?);
        let st = &rep.stats;
        println!(
            "{name}: {} pairs, slope {:.5}, intercept {:.3e}, median |err| {:.3e}, median rel err {:.4}",
            st.n_points, st.slope, st.intercept, st.median_abs_error, st.median_rel_error
        );
        println!(
            "error histogram: mean {:.3e}, std {:.3e}, mean/std {:.4}",
            st.diff_mean,
            st.diff_std,
            st.diff_mean / st.diff_std
        );
    }
    if let Some(res) = &result {
        let (table, raw) = sweep_tables(res)?;
        written.push(write_atomic(&dir, &format!("{name}.csv"), &table)?);
        written.push(write_atomic(&dir, &format!("{name}_estimates.csv"), &raw)?);
        println!("{name}: {} values, {} rejected", res.points.len(), res.rejected.len());
        for p in &res.points {
            let worst_std = p.std.iter().copied().fold(0.0, f64::max);
            println!(
                "  {} = {}: cycles {}, coherent {}, largest std {:.3e}",
                res.parameter, p.value, p.n_cycles, p.coherent, worst_std
            );
        }
        for rej in &res.rejected {
            println!("  {} = {} rejected: {}", res.parameter, rej.value, rej.reason);
        }
    }
    written.push(write_atomic(&dir, &format!("{name}_summary.json"), &json_bytes(&summary)?)?);

    let mut seeds = seeds(&ctx.config, noise.as_ref());
    seeds.sweep = Some(seed);
    let outputs = match (&report, &result) {
        (Some(rep), _) => SweepOutput::Scatter(rep),
        (_, Some(res)) => SweepOutput::Sweep(res),
        _ => unreachable!(),
    };
    written.push(ctx.write_record(&ctx.record(name, seeds, outputs, started))?);
    for w in written {
        println!("wrote {}", w.display());
    }
    Ok(0)
}

#[derive(Debug, Serialize)]
struct TrainOutputs<'a> {
    /// Effective hyper-parameters after defaults.
    gate: String,
    eta: f64,
    max_iters: usize,
    stop_threshold: f64,
    best_restart: usize,
    restarts: &'a [TrainRecord],
}

/// Trains the configured gate, prints the report and writes `train.csv` and
/// `run_record.json`.
pub fn train_cmd(common: &Common) -> anyhow::Result<u8> {
    let ctx = Run::new(common)?;
    let started = ctx.started();
    let r = ctx.config.resolve(&ctx.base_dir())?;
    let n = r.device.terminal_count();
    let task = ctx.config.task(n)?;
    let base = ctx.config.train_config(task.gate, r.plan.clone(), r.noise)?;
    let restarts = ctx.config.train.restarts;

    println!("gate = {}", task.gate);
    println!("eta = {}", base.eta);
    println!("max_iters = {}", base.max_iters);
    println!("stop_threshold = {}", base.stop_threshold);
    println!("loss = {}", ctx.config.train.loss.name());
    println!("restarts = {restarts}");

    let records = par::try_map_range(restarts, |k| {
        let mut cfg = base.clone();
        cfg.seed = base.seed.wrapping_add(k as u64);
        train_gate(&r.device, &task, &cfg)
    })
    .context("training failed")?;

    for (k, rec) in records.iter().enumerate() {
        for it in &rec.iterations {
            let loss = it.loss.map_or_else(|| "degenerate".into(), |l| format!("{l:.6}"));
            println!("restart {k} iter {} loss {loss}", it.iteration);
        }
        println!(
            "restart {k} (seed {}): converged {}, success {}",
            rec.seed, rec.converged, rec.success
        );
    }

    let best = records
        .iter()
        .position(|r| r.success)
        .or_else(|| {
            records
                .iter()
                .enumerate()
                .filter_map(|(k, r)| r.final_loss().map(|l| (k, l)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, _)| k)
        })
        .unwrap_or(0);
    let rec = &records[best];
    let e = &rec.evaluation;
    println!("best restart: {best} (seed {})", rec.seed);
    for (case, label) in ["00", "01", "10", "11"].iter().enumerate() {
        println!("  case {label}: output {:.6}", e.outputs[case]);
    }
    println!("decision boundary: {:.6}", e.boundary);
    println!("separation: {:.6}", e.separation);
    println!("success: {}", rec.success);

    let mut header: Vec<String> = ["restart", "seed", "iteration", "loss", "degenerate", "out_00", "out_01", "out_10", "out_11"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(task.control_terminals.iter().map(|t| format!("v_t{}", t + 1)));
    header.extend(task.control_terminals.iter().map(|t| format!("grad_t{}", t + 1)));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::new(&header_refs)?;
    for (k, rec) in records.iter().enumerate() {
        for it in &rec.iterations {
            let mut row = vec![
                k.to_string(),
                rec.seed.to_string(),
                it.iteration.to_string(),
                opt(it.loss),
                it.degenerate.to_string(),
            ];
            row.extend(it.outputs.iter().map(|&o| num(o)));
            row.extend(it.controls.iter().map(|&c| num(c)));
            row.extend(it.gradient.iter().map(|&g| num(g)));
            table.row(row)?;
        }
    }
    let dir = ctx.out_dir();
    let csv = write_atomic(&dir, "train.csv", &table.into_bytes()?)?;

    let mut seeds = seeds(&ctx.config, r.noise.as_ref());
    seeds.train = records.iter().map(|r| r.seed).collect();
    let outputs = TrainOutputs {
        gate: task.gate.to_string(),
        eta: base.eta,
        max_iters: base.max_iters,
        stop_threshold: base.stop_threshold,
        best_restart: best,
        restarts: &records,
    };
    let rec_path = ctx.write_record(&ctx.record("train", seeds, outputs, started))?;
    println!("wrote {} and {}", csv.display(), rec_path.display());
    Ok(0)
}
