//! Statistical reproductions of the gradient-accuracy experiments: scatter
//! against an oracle, sampling-time, amplitude and frequency sweeps, and
//! single- versus multi-input comparisons.
//!
//! Every experiment fans out over independent points with [`crate::par`] and
//! reduces in index order, so results are identical with or without rayon.

mod stats;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::devices::{DeviceModel, NoiseModel, VoltageVector};
use crate::error::{HgeError, Result};
use crate::lockin::hge_measure;
use crate::par;
use crate::signals::{validate_plan, PerturbationPlan, PlanIssue};

pub use stats::{histogram, mean, ols, quantile_sorted, sample_std, skewness, Histogram, ScatterStats};

/// Reference used by [`gradient_scatter`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oracle {
    /// Exact device gradient.
    Analytic,
    /// HGE with only the terminal of interest perturbed.
    SingleInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterConfig {
    pub n_points: usize,
    pub input_range: (f64, f64),
    pub oracle: Oracle,
    pub seed: u64,
}

/// One (point, terminal) comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPair {
    pub point: usize,
    pub terminal: usize,
    pub voltage: f64,
    pub reference: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterReport {
    pub pairs: Vec<ScatterPair>,
    pub stats: ScatterStats,
}

impl ScatterReport {
    fn from_pairs(pairs: Vec<ScatterPair>) -> Result<Self> {
        let reference: Vec<f64> = pairs.iter().map(|p| p.reference).collect();
        let estimate: Vec<f64> = pairs.iter().map(|p| p.estimate).collect();
        let stats = ScatterStats::from_pairs(&reference, &estimate)
            .ok_or_else(|| HgeError::InvalidParameter("no measured terminals".into()))?;
        Ok(Self { pairs, stats })
    }
}

/// `n` points drawn uniformly from `range` on every terminal.
pub fn random_points(n: usize, n_terminals: usize, range: (f64, f64), seed: u64) -> Vec<VoltageVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v = (0..n_terminals)
                .map(|_| if range.1 > range.0 { rng.random_range(range.0..range.1) } else { range.0 })
                .collect();
            VoltageVector::new(v).expect("finite range")
        })
        .collect()
}

fn check_plan(plan: &PerturbationPlan, device: &DeviceModel) -> Result<()> {
    let report = validate_plan(plan);
    if !report.is_ok() {
        return Err(HgeError::InvalidPlan(report.error_summary()));
    }
    if plan.terminal_count() != device.terminal_count() {
        return Err(HgeError::DimensionMismatch {
            expected: device.terminal_count(),
            got: plan.terminal_count(),
        });
    }
    Ok(())
}

/// Single-input HGE derivatives for every perturbed terminal; unperturbed
/// terminals yield `None`. Terminal `m` uses noise stream `stream_base + m`.
fn single_input_derivatives(
    device: &DeviceModel,
    v: &VoltageVector,
    plan: &PerturbationPlan,
    noise: Option<&NoiseModel>,
    stream_base: u64,
) -> Result<Vec<Option<f64>>> {
    (0..plan.terminal_count())
        .map(|m| {
            if plan.amps_v[m] == 0.0 {
                return Ok(None);
            }
            let n = noise.map(|n| n.derive(stream_base + m as u64));
            let est = hge_measure(device, v, &plan.single_terminal(m), n.as_ref())?;
            est.derivative(m).map(Some)
        })
        .collect()
}

fn compare_at_points(
    device: &DeviceModel,
    points: &[VoltageVector],
    plan: &PerturbationPlan,
    oracle: Oracle,
    noise: Option<&NoiseModel>,
) -> Result<ScatterReport> {
    check_plan(plan, device)?;
    let n = plan.terminal_count() as u64;
    let per_point = par::try_map_range(points.len(), |i| {
        let v = &points[i];
        let base = i as u64 * (n + 1);
        let multi = hge_measure(device, v, plan, noise.map(|x| x.derive(base)).as_ref())?;
        let reference: Vec<Option<f64>> = match oracle {
            Oracle::Analytic => device.analytic_gradient(v)?.into_iter().map(Some).collect(),
            Oracle::SingleInput => single_input_derivatives(device, v, plan, noise, base + 1)?,
        };
        Ok::<_, HgeError>(
            multi
                .derivatives()
                .into_iter()
                .zip(reference)
                .enumerate()
                .filter_map(|(m, (est, r))| {
                    Some(ScatterPair {
                        point: i,
                        terminal: m,
                        voltage: v[m],
                        reference: r?,
                        estimate: est?,
                    })
                })
                .collect::<Vec<_>>(),
        )
    })?;
    ScatterReport::from_pairs(per_point.into_iter().flatten().collect())
}

/// Multi-input HGE against `config.oracle` at uniformly random points.
pub fn gradient_scatter(
    device: &DeviceModel,
    plan: &PerturbationPlan,
    config: &ScatterConfig,
    noise: Option<&NoiseModel>,
) -> Result<ScatterReport> {
    if config.n_points == 0 {
        return Err(HgeError::InvalidParameter("n_points must be >= 1".into()));
    }
    let points = random_points(config.n_points, device.terminal_count(), config.input_range, config.seed);
    compare_at_points(device, &points, plan, config.oracle, noise)
}

/// Multi-input HGE against single-input HGE at the given points.
pub fn single_vs_multi(
    device: &DeviceModel,
    points: &[VoltageVector],
    plan: &PerturbationPlan,
    noise: Option<&NoiseModel>,
) -> Result<ScatterReport> {
    if points.is_empty() {
        return Err(HgeError::InvalidParameter("no points".into()));
    }
    compare_at_points(device, points, plan, Oracle::SingleInput, noise)
}

/// Derivative statistics at one swept value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub freqs_hz: Vec<f64>,
    pub amps_v: Vec<f64>,
    pub n_cycles: u32,
    /// False when some tone does not complete an integer number of cycles.
    pub coherent: bool,
    /// Multi-input estimates, `[repeat][terminal]`.
    pub estimates: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Reference per terminal: single-input HGE, or the analytic gradient
    /// (with zero spread) for the sampling-time sweep.
    pub reference_mean: Vec<f64>,
    pub reference_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedValue {
    pub value: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub parameter: String,
    pub points: Vec<SweepPoint>,
    pub rejected: Vec<RejectedValue>,
    /// Analytic gradient at the sweep's DC point.
    pub oracle: Vec<f64>,
}

impl SweepResult {
    pub fn point(&self, value: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.value == value)
    }
}

fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.first().map_or(0, Vec::len);
    (0..n)
        .map(|m| {
            let col: Vec<f64> = rows.iter().map(|r| r[m]).collect();
            (mean(&col), sample_std(&col))
        })
        .unzip()
}

fn check_sweep_inputs(
    device: &DeviceModel,
    v_dc: &VoltageVector,
    plan: &PerturbationPlan,
    repeats: usize,
) -> Result<()> {
    if repeats < 2 {
        return Err(HgeError::InvalidParameter("repeats must be >= 2".into()));
    }
    if v_dc.len() != device.terminal_count() || plan.terminal_count() != device.terminal_count() {
        return Err(HgeError::DimensionMismatch {
            expected: device.terminal_count(),
            got: v_dc.len(),
        });
    }
    Ok(())
}

fn all_measured(plan: &PerturbationPlan) -> Result<()> {
    if plan.amps_v.iter().any(|&a| a <= 0.0) {
        return Err(HgeError::InvalidPlan(
            "sweeps need a non-zero amplitude on every terminal".into(),
        ));
    }
    Ok(())
}

/// An admitted plan and whether it is coherent, or the rejection reason.
type Admitted = std::result::Result<(PerturbationPlan, bool), String>;

/// Resolves a candidate plan: as is if valid, with leakage tolerated if only
/// the integer-cycle rule fails, otherwise rejected with the reason.
fn admit(plan: PerturbationPlan) -> Admitted {
    let report = validate_plan(&plan);
    if report.is_ok() {
        let coherent = !report
            .warnings
            .iter()
            .any(|w| matches!(w, PlanIssue::NonIntegerCycles { .. }));
        return Ok((plan, coherent));
    }
    let only_leakage = report
        .errors
        .iter()
        .all(|e| matches!(e, PlanIssue::NonIntegerCycles { .. }));
    if only_leakage {
        return Ok((plan.with_allow_leakage(true), false));
    }
    Err(report.error_summary())
}

/// Multi-input estimates over repeats plus the chosen reference for one plan.
#[allow(clippy::too_many_arguments)]
fn sweep_point(
    device: &DeviceModel,
    v_dc: &VoltageVector,
    plan: &PerturbationPlan,
    value: f64,
    coherent: bool,
    repeats: usize,
    noise: Option<&NoiseModel>,
    stream: u64,
    single_reference: bool,
) -> Result<SweepPoint> {
    let n = plan.terminal_count() as u64;
    // each repeat owns streams [base, base + n]
    let runs = par::try_map_range(repeats, |r| {
        let base = (stream << 20) + r as u64 * (n + 1);
        let est = hge_measure(device, v_dc, plan, noise.map(|x| x.derive(base)).as_ref())?;
        let multi = est.select(&(0..plan.terminal_count()).collect::<Vec<_>>())?;
        let single = if single_reference {
            single_input_derivatives(device, v_dc, plan, noise, base + 1)?
                .into_iter()
                .map(|d| d.expect("every terminal perturbed"))
                .collect()
        } else {
            Vec::new()
        };
        Ok::<_, HgeError>((multi, single))
    })?;
    let (estimates, singles): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let (mean, std) = column_stats(&estimates);
    let (reference_mean, reference_std) = if single_reference {
        column_stats(&singles)
    } else {
        let g = device.analytic_gradient(v_dc)?;
        let z = vec![0.0; g.len()];
        (g, z)
    };
    Ok(SweepPoint {
        value,
        freqs_hz: plan.freqs_hz.clone(),
        amps_v: plan.amps_v.clone(),
        n_cycles: plan.n_cycles,
        coherent,
        estimates,
        mean,
        std,
        reference_mean,
        reference_std,
    })
}

/// Derivative estimates for windows of 1..=`max_cycles` cycles of the lowest
/// frequency, each repeated with fresh noise. Windows in which some tone does
/// not complete an integer number of cycles are run with leakage tolerated
/// and flagged `coherent: false`.
pub fn sampling_time_sweep(
    device: &DeviceModel,
    v_dc: &VoltageVector,
    plan: &PerturbationPlan,
    max_cycles: u32,
    repeats: usize,
    noise: Option<&NoiseModel>,
) -> Result<SweepResult> {
    if max_cycles == 0 {
        return Err(HgeError::InvalidParameter("max_cycles must be >= 1".into()));
    }
    check_sweep_inputs(device, v_dc, plan, repeats)?;
    all_measured(plan)?;
    let candidates: Vec<(u32, _)> = (1..=max_cycles)
        .map(|c| (c, admit(plan.clone().with_cycles(c).with_allow_leakage(false))))
        .collect();
    run_sweep("cycles", device, v_dc, candidates, repeats, noise, false)
}

/// Multi-input derivatives for each row of per-terminal amplitudes (V), with
/// single-input HGE at the same amplitudes as reference. Swept value is the
/// one-based row number.
pub fn amplitude_sweep(
    device: &DeviceModel,
    v_dc: &VoltageVector,
    base_plan: &PerturbationPlan,
    ladder: &[Vec<f64>],
    repeats: usize,
    noise: Option<&NoiseModel>,
) -> Result<SweepResult> {
    if ladder.is_empty() {
        return Err(HgeError::InvalidParameter("amplitude ladder is empty".into()));
    }
    check_sweep_inputs(device, v_dc, base_plan, repeats)?;
    let candidates = ladder
        .iter()
        .enumerate()
        .map(|(j, row)| {
            let plan = base_plan.clone().with_amps(row.clone());
            let admitted = all_measured(&plan)
                .map_err(|e| e.to_string())
                .and_then(|_| admit(plan));
            ((j + 1) as u32, admitted)
        })
        .collect();
    run_sweep("amplitude_row", device, v_dc, candidates, repeats, noise, true)
}

/// Derivatives with every frequency multiplied by each factor, multi- and
/// single-input. Factors whose plan fails validation are reported in
/// `rejected`.
pub fn frequency_factor_sweep(
    device: &DeviceModel,
    v_dc: &VoltageVector,
    base_plan: &PerturbationPlan,
    factors: &[f64],
    repeats: usize,
    noise: Option<&NoiseModel>,
) -> Result<SweepResult> {
    if factors.is_empty() {
        return Err(HgeError::InvalidParameter("no frequency factors".into()));
    }
    check_sweep_inputs(device, v_dc, base_plan, repeats)?;
    all_measured(base_plan)?;
    let mut points = Vec::new();
    let mut rejected = Vec::new();
    for (idx, &factor) in factors.iter().enumerate() {
        let plan = base_plan.scaled_freqs(factor);
        let report = validate_plan(&plan);
        if !report.is_ok() {
            rejected.push(RejectedValue {
                value: factor,
                reason: report.error_summary(),
            });
            continue;
        }
        let coherent = plan.freqs_hz.iter().enumerate().all(|(i, _)| {
            let c = plan.cycles_of(i);
            (c - c.round()).abs() <= 1e-9 * c.max(1.0)
        });
        points.push((idx, factor, plan, coherent));
    }
    let computed = par::try_map_slice(&points, |(idx, factor, plan, coherent)| {
        sweep_point(device, v_dc, plan, *factor, *coherent, repeats, noise, *idx as u64, true)
    })?;
    Ok(SweepResult {
        parameter: "frequency_factor".into(),
        points: computed,
        rejected,
        oracle: device.analytic_gradient(v_dc)?,
    })
}

fn run_sweep(
    parameter: &str,
    device: &DeviceModel,
    v_dc: &VoltageVector,
    candidates: Vec<(u32, Admitted)>,
    repeats: usize,
    noise: Option<&NoiseModel>,
    single_reference: bool,
) -> Result<SweepResult> {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (value, c) in candidates {
        match c {
            Ok((plan, coherent)) => accepted.push((value, plan, coherent)),
            Err(reason) => rejected.push(RejectedValue {
                value: value as f64,
                reason,
            }),
        }
    }
    let points = par::try_map_slice(&accepted, |(value, plan, coherent)| {
        sweep_point(
            device,
            v_dc,
            plan,
            *value as f64,
            *coherent,
            repeats,
            noise,
            *value as u64,
            single_reference,
        )
    })?;
    Ok(SweepResult {
        parameter: parameter.into(),
        points,
        rejected,
        oracle: device.analytic_gradient(v_dc)?,
    })
}
