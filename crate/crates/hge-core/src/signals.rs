//! Multi-frequency perturbation plans and the input voltage traces they produce.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::devices::VoltageVector;
use crate::error::{HgeError, Result};

/// Tolerance used when deciding whether a cycle or sample count is an integer.
const INTEGER_TOL: f64 = 1e-9;

/// Per-terminal sinusoidal perturbations and the sampling window.
///
/// Amplitudes are in volts and phases in radians. The window is `n_cycles`
/// periods of the lowest frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub freqs_hz: Vec<f64>,
    pub amps_v: Vec<f64>,
    pub phases_rad: Vec<f64>,
    pub sample_rate_hz: f64,
    pub n_cycles: u32,
    /// Accept tones that do not complete an integer number of cycles in the
    /// window. Leakage then becomes a warning instead of an error.
    #[serde(default)]
    pub allow_leakage: bool,
}

impl PerturbationPlan {
    /// Plan with zero injection phases. Not validated; see [`validate_plan`].
    pub fn new(freqs_hz: Vec<f64>, amps_v: Vec<f64>, sample_rate_hz: f64, n_cycles: u32) -> Self {
        let n = freqs_hz.len();
        Self {
            freqs_hz,
            amps_v,
            phases_rad: vec![0.0; n],
            sample_rate_hz,
            n_cycles,
            allow_leakage: false,
        }
    }

    pub fn with_phases(mut self, phases_rad: Vec<f64>) -> Self {
        self.phases_rad = phases_rad;
        self
    }

    pub fn with_amps(mut self, amps_v: Vec<f64>) -> Self {
        self.amps_v = amps_v;
        self
    }

    pub fn with_cycles(mut self, n_cycles: u32) -> Self {
        self.n_cycles = n_cycles;
        self
    }

    pub fn with_allow_leakage(mut self, allow: bool) -> Self {
        self.allow_leakage = allow;
        self
    }

    /// Frequencies multiplied by `factor`; everything else unchanged.
    pub fn scaled_freqs(&self, factor: f64) -> Self {
        Self {
            freqs_hz: self.freqs_hz.iter().map(|f| f * factor).collect(),
            ..self.clone()
        }
    }

    /// Same plan with every amplitude except terminal `m` set to zero.
    pub fn single_terminal(&self, m: usize) -> Self {
        let amps_v = self
            .amps_v
            .iter()
            .enumerate()
            .map(|(i, &a)| if i == m { a } else { 0.0 })
            .collect();
        Self {
            amps_v,
            ..self.clone()
        }
    }

    pub fn terminal_count(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn min_freq(&self) -> f64 {
        self.freqs_hz.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Window length in seconds.
    pub fn window_seconds(&self) -> f64 {
        self.n_cycles as f64 / self.min_freq()
    }

    /// Resolution bandwidth `1 / window` in Hz.
    pub fn resolution_bandwidth(&self) -> f64 {
        1.0 / self.window_seconds()
    }

    /// Window length in samples; errors when it is not a positive integer.
    pub fn window_samples(&self) -> Result<usize> {
        let exact = self.window_seconds() * self.sample_rate_hz;
        let rounded = exact.round();
        if !exact.is_finite() || rounded < 1.0 || (exact - rounded).abs() > INTEGER_TOL * exact.max(1.0) {
            return Err(HgeError::InvalidPlan(format!(
                "window of {} cycles at {} Hz spans {exact} samples, not a positive integer",
                self.n_cycles,
                self.min_freq()
            )));
        }
        Ok(rounded as usize)
    }

    /// Number of cycles tone `i` completes within the window.
    pub fn cycles_of(&self, i: usize) -> f64 {
        self.freqs_hz[i] * self.window_seconds()
    }

    /// Validates and returns `self`, or the joined error messages.
    pub fn validated(self) -> Result<Self> {
        let report = validate_plan(&self);
        if report.is_ok() {
            Ok(self)
        } else {
            Err(HgeError::InvalidPlan(report.error_summary()))
        }
    }
}

/// A single finding of [`validate_plan`]. Terminal indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum PlanIssue {
    LengthMismatch { field: &'static str, expected: usize, got: usize },
    NoTerminals,
    BadFrequency { terminal: usize, freq_hz: f64 },
    BadAmplitude { terminal: usize, amp_v: f64 },
    BadPhase { terminal: usize },
    BadSampleRate { sample_rate_hz: f64 },
    ZeroCycles,
    DuplicateFrequency { first: usize, second: usize, freq_hz: f64 },
    Nyquist { sample_rate_hz: f64, required_above_hz: f64 },
    NonIntegerWindow { samples: f64 },
    NonIntegerCycles { terminal: usize, cycles: f64 },
    /// `f_i + f_j` (or `|f_i - f_j|`) lies within the resolution bandwidth of `f_k`.
    Intermodulation { i: usize, j: usize, k: usize, sum: bool, offset_hz: f64 },
}

impl fmt::Display for PlanIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // terminals are printed one-based
        match *self {
            Self::LengthMismatch { field, expected, got } => {
                write!(f, "{field} has {got} entries, expected {expected}")
            }
            Self::NoTerminals => write!(f, "plan has no terminals"),
            Self::BadFrequency { terminal, freq_hz } => {
                write!(f, "terminal {}: frequency {freq_hz} Hz must be finite and > 0", terminal + 1)
            }
            Self::BadAmplitude { terminal, amp_v } => {
                write!(f, "terminal {}: amplitude {amp_v} V must be finite and >= 0", terminal + 1)
            }
            Self::BadPhase { terminal } => write!(f, "terminal {}: phase is not finite", terminal + 1),
            Self::BadSampleRate { sample_rate_hz } => {
                write!(f, "sample rate {sample_rate_hz} Hz must be finite and > 0")
            }
            Self::ZeroCycles => write!(f, "n_cycles must be >= 1"),
            Self::DuplicateFrequency { first, second, freq_hz } => write!(
                f,
                "terminals {} and {} share frequency {freq_hz} Hz",
                first + 1,
                second + 1
            ),
            Self::Nyquist { sample_rate_hz, required_above_hz } => write!(
                f,
                "sample rate {sample_rate_hz} Hz must exceed twice the sum of the two highest frequencies ({required_above_hz} Hz)"
            ),
            Self::NonIntegerWindow { samples } => {
                write!(f, "window spans {samples} samples, not an integer")
            }
            Self::NonIntegerCycles { terminal, cycles } => write!(
                f,
                "terminal {}: window spans {cycles} cycles, not an integer (spectral leakage)",
                terminal + 1
            ),
            Self::Intermodulation { i, j, k, sum, offset_hz } => {
                let op = if sum { '+' } else { '-' };
                write!(
                    f,
                    "f{} {op} f{} lies {offset_hz} Hz from f{} (within the resolution bandwidth)",
                    i + 1,
                    j + 1,
                    k + 1
                )
            }
        }
    }
}

/// Outcome of [`validate_plan`]: errors make the plan unusable, warnings do not.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlanReport {
    pub errors: Vec<PlanIssue>,
    pub warnings: Vec<PlanIssue>,
}

impl PlanReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error_summary(&self) -> String {
        self.errors
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Checks a plan for structural errors, Nyquist and integer-cycle violations,
/// and second-order intermodulation products landing near a plan frequency.
pub fn validate_plan(plan: &PerturbationPlan) -> PlanReport {
    let mut report = PlanReport::default();
    let n = plan.freqs_hz.len();
    if n == 0 {
        report.errors.push(PlanIssue::NoTerminals);
        return report;
    }
    for (field, len) in [("amps", plan.amps_v.len()), ("phases", plan.phases_rad.len())] {
        if len != n {
            report.errors.push(PlanIssue::LengthMismatch {
                field,
                expected: n,
                got: len,
            });
        }
    }
    for (i, &f) in plan.freqs_hz.iter().enumerate() {
        if !(f.is_finite() && f > 0.0) {
            report.errors.push(PlanIssue::BadFrequency {
                terminal: i,
                freq_hz: f,
            });
        }
    }
    for (i, &a) in plan.amps_v.iter().enumerate() {
        if !(a.is_finite() && a >= 0.0) {
            report.errors.push(PlanIssue::BadAmplitude { terminal: i, amp_v: a });
        }
    }
    for (i, p) in plan.phases_rad.iter().enumerate() {
        if !p.is_finite() {
            report.errors.push(PlanIssue::BadPhase { terminal: i });
        }
    }
    let rate = plan.sample_rate_hz;
    if !(rate.is_finite() && rate > 0.0) {
        report.errors.push(PlanIssue::BadSampleRate { sample_rate_hz: rate });
    }
    if plan.n_cycles == 0 {
        report.errors.push(PlanIssue::ZeroCycles);
    }
    if !report.errors.is_empty() {
        return report;
    }

    for i in 0..n {
        for j in i + 1..n {
            if plan.freqs_hz[i] == plan.freqs_hz[j] {
                report.errors.push(PlanIssue::DuplicateFrequency {
                    first: i,
                    second: j,
                    freq_hz: plan.freqs_hz[i],
                });
            }
        }
    }

    let mut sorted = plan.freqs_hz.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // a single tone still mixes with itself at 2f
    let top_two = sorted[0] + sorted.get(1).copied().unwrap_or(sorted[0]);
    if rate <= 2.0 * top_two {
        report.errors.push(PlanIssue::Nyquist {
            sample_rate_hz: rate,
            required_above_hz: 2.0 * top_two,
        });
    }

    let samples = plan.window_seconds() * rate;
    if (samples - samples.round()).abs() > INTEGER_TOL * samples.max(1.0) || samples.round() < 1.0 {
        report.errors.push(PlanIssue::NonIntegerWindow { samples });
    }

    for i in 0..n {
        let cycles = plan.cycles_of(i);
        if (cycles - cycles.round()).abs() > INTEGER_TOL * cycles.max(1.0) {
            let issue = PlanIssue::NonIntegerCycles { terminal: i, cycles };
            if plan.allow_leakage {
                report.warnings.push(issue);
            } else {
                report.errors.push(issue);
            }
        }
    }

    report.warnings.extend(intermodulation_warnings(&plan.freqs_hz, plan.resolution_bandwidth()));
    report
}

fn intermodulation_warnings(freqs: &[f64], rbw: f64) -> Vec<PlanIssue> {
    let n = freqs.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            for k in 0..n {
                let sum_off = (freqs[i] + freqs[j] - freqs[k]).abs();
                if sum_off < rbw {
                    out.push(PlanIssue::Intermodulation {
                        i,
                        j,
                        k,
                        sum: true,
                        offset_hz: sum_off,
                    });
                }
                if i != j {
                    let diff_off = ((freqs[i] - freqs[j]).abs() - freqs[k]).abs();
                    if diff_off < rbw {
                        out.push(PlanIssue::Intermodulation {
                            i,
                            j,
                            k,
                            sum: false,
                            offset_hz: diff_off,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Per-terminal input voltage time series.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTraces {
    sample_rate: f64,
    traces: Vec<Vec<f64>>,
}

impl InputTraces {
    pub fn new(sample_rate: f64, traces: Vec<Vec<f64>>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(HgeError::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if let Some(first) = traces.first() {
            if let Some(bad) = traces.iter().find(|t| t.len() != first.len()) {
                return Err(HgeError::TraceMismatch(format!(
                    "terminal traces have unequal lengths ({} vs {})",
                    first.len(),
                    bad.len()
                )));
            }
        }
        Ok(Self { sample_rate, traces })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn traces(&self) -> &[Vec<f64>] {
        &self.traces
    }

    pub fn terminal_count(&self) -> usize {
        self.traces.len()
    }

    /// Samples per terminal.
    pub fn len(&self) -> usize {
        self.traces.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Value of `sin(2 pi f k / rate + phase)`, reducing the cycle count first to
/// keep the argument small.
#[inline]
pub(crate) fn sample_phase(freq_hz: f64, k: usize, rate: f64) -> f64 {
    let cycles = freq_hz * k as f64 / rate;
    2.0 * PI * (cycles - cycles.floor())
}

/// Terminal `i` carries `v_dc[i] + amp_i sin(2 pi f_i t + phase_i)` over the plan window.
pub fn build_inputs(v_dc: &VoltageVector, plan: &PerturbationPlan) -> Result<InputTraces> {
    let report = validate_plan(plan);
    if !report.is_ok() {
        return Err(HgeError::InvalidPlan(report.error_summary()));
    }
    if v_dc.len() != plan.terminal_count() {
        return Err(HgeError::DimensionMismatch {
            expected: plan.terminal_count(),
            got: v_dc.len(),
        });
    }
    let len = plan.window_samples()?;
    let rate = plan.sample_rate_hz;
    let traces = (0..plan.terminal_count())
        .map(|i| {
            let (f, a, p, v) = (plan.freqs_hz[i], plan.amps_v[i], plan.phases_rad[i], v_dc[i]);
            if a == 0.0 {
                vec![v; len]
            } else {
                (0..len)
                    .map(|k| v + a * (sample_phase(f, k, rate) + p).sin())
                    .collect()
            }
        })
        .collect();
    InputTraces::new(rate, traces)
}

/// Picks `n` distinct integer multiples of `base_hz`, lowest first, such that
/// no second-order sum or difference of two picks coincides with a pick and
/// the plan satisfies the Nyquist rule at `sample_rate_hz`.
pub fn suggest_frequencies(n_terminals: usize, base_hz: f64, sample_rate_hz: f64) -> Result<Vec<f64>> {
    if n_terminals == 0 {
        return Err(HgeError::InvalidParameter("n_terminals must be >= 1".into()));
    }
    if !(base_hz.is_finite() && base_hz > 0.0 && sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(HgeError::InvalidParameter(
            "base frequency and sample rate must be positive".into(),
        ));
    }
    // work in integer multiples of base; the largest two picks must sum to
    // strictly less than sample_rate / (2 base)
    let limit = sample_rate_hz / (2.0 * base_hz);
    let mut picks: Vec<u64> = Vec::with_capacity(n_terminals);
    let mut m: u64 = 1;
    while picks.len() < n_terminals {
        let top = picks.last().copied().unwrap_or(m);
        if (top + m) as f64 >= limit {
            return Err(HgeError::Infeasible(format!(
                "cannot fit {n_terminals} frequencies that are multiples of {base_hz} Hz below the Nyquist limit at {sample_rate_hz} Hz"
            )));
        }
        if second_order_free(&picks, m) {
            picks.push(m);
        }
        m += 1;
    }
    Ok(picks.iter().map(|&m| m as f64 * base_hz).collect())
}

/// True when adding `c` to the sum-free multiset `set` keeps it free of
/// `a + b = d` and `|a - b| = d` relations.
fn second_order_free(set: &[u64], c: u64) -> bool {
    let mut all = set.to_vec();
    all.push(c);
    for (x, &a) in all.iter().enumerate() {
        for &b in &all[x..] {
            for &d in &all {
                let involves_c = a == c || b == c || d == c;
                if involves_c && (a + b == d || (a != b && a.abs_diff(b) == d)) {
                    return false;
                }
            }
        }
    }
    true
}

/// Frequency and amplitude sets used in the reference experiments.
pub mod presets {
    use super::PerturbationPlan;

    /// Per-terminal amplitudes (mV) shared by all presets.
    pub const AMPS_MV: [f64; 7] = [30.0, 20.0, 20.0, 10.0, 10.0, 5.0, 5.0];
    pub const SAMPLE_RATE_HZ: f64 = 10_000.0;

    pub const FIG3_LOW_FREQ_HZ: [f64; 7] = [20.0, 50.0, 30.0, 90.0, 130.0, 190.0, 230.0];
    pub const FIG3_HIGH_FREQ_HZ: [f64; 7] = [80.0, 200.0, 120.0, 360.0, 520.0, 760.0, 920.0];
    pub const DNN_MODEL_HZ: [f64; 7] = [80.0, 200.0, 120.0, 270.0, 520.0, 760.0, 920.0];
    pub const HARMONIC_HZ: [f64; 7] = [80.0, 160.0, 240.0, 320.0, 400.0, 480.0, 560.0];
    pub const SI_B_HZ: [f64; 7] = [6.0, 15.0, 9.0, 27.0, 39.0, 57.0, 69.0];
    /// Base set for the frequency-factor sweep.
    pub const FACTOR_BASE_HZ: [f64; 7] = [2.0, 5.0, 3.0, 9.0, 13.0, 19.0, 23.0];
    pub const FREQUENCY_FACTORS: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0];

    /// Amplitude ladder (mV), one row per step, one column per terminal.
    pub const AMPLITUDE_LADDER_MV: [[f64; 7]; 6] = [
        [5.0, 2.5, 2.5, 1.25, 1.25, 0.675, 0.675],
        [10.0, 5.0, 5.0, 2.5, 2.5, 1.25, 1.25],
        [20.0, 10.0, 10.0, 5.0, 5.0, 2.5, 2.5],
        [30.0, 20.0, 20.0, 10.0, 10.0, 5.0, 5.0],
        [50.0, 30.0, 30.0, 20.0, 20.0, 10.0, 10.0],
        [80.0, 60.0, 60.0, 30.0, 30.0, 20.0, 20.0],
    ];

    pub const NAMES: [&str; 6] = [
        "fig3-low-freq",
        "fig3-high-freq",
        "dnn-model",
        "harmonic",
        "si-b-base",
        "factor-base",
    ];

    fn plan(freqs: &[f64], n_cycles: u32) -> PerturbationPlan {
        PerturbationPlan::new(
            freqs.to_vec(),
            AMPS_MV.iter().map(|mv| mv * 1e-3).collect(),
            SAMPLE_RATE_HZ,
            n_cycles,
        )
    }

    /// 0.5 s window: ten cycles of 20 Hz.
    pub fn fig3_low_freq() -> PerturbationPlan {
        plan(&FIG3_LOW_FREQ_HZ, 10)
    }

    /// Four times the low set, with terminal 4 at 360 Hz.
    pub fn fig3_high_freq() -> PerturbationPlan {
        plan(&FIG3_HIGH_FREQ_HZ, 10)
    }

    /// The surrogate-validation set. 270 Hz completes 33.75 cycles in the
    /// 0.125 s window, so leakage is tolerated for this preset.
    pub fn dnn_model() -> PerturbationPlan {
        plan(&DNN_MODEL_HZ, 10).with_allow_leakage(true)
    }

    /// Harmonics of 80 Hz.
    pub fn harmonic() -> PerturbationPlan {
        plan(&HARMONIC_HZ, 10)
    }

    /// Low-frequency set; six cycles of 6 Hz is the shortest window in which
    /// every tone completes an integer number of cycles.
    pub fn si_b_base() -> PerturbationPlan {
        plan(&SI_B_HZ, 6)
    }

    /// Base plan of the frequency-factor sweep; two cycles of the lowest tone.
    pub fn factor_base() -> PerturbationPlan {
        plan(&FACTOR_BASE_HZ, 2)
    }

    pub fn by_name(name: &str) -> Option<PerturbationPlan> {
        Some(match name {
            "fig3-low-freq" => fig3_low_freq(),
            "fig3-high-freq" => fig3_high_freq(),
            "dnn-model" => dnn_model(),
            "harmonic" => harmonic(),
            "si-b-base" => si_b_base(),
            "factor-base" => factor_base(),
            _ => return None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn has_duplicate(r: &PlanReport) -> bool {
        r.errors.iter().any(|e| matches!(e, PlanIssue::DuplicateFrequency { .. }))
    }

    #[test]
    fn zero_amplitude_gives_constant_traces() {
        let v = VoltageVector::new(vec![0.1, -0.4]).unwrap();
        let plan = PerturbationPlan::new(vec![10.0, 30.0], vec![0.0, 0.0], 1000.0, 2);
        let t = build_inputs(&v, &plan).unwrap();
        assert_eq!(t.len(), 200);
        assert!(t.traces()[0].iter().all(|&x| x == 0.1));
        assert!(t.traces()[1].iter().all(|&x| x == -0.4));
    }

    #[test]
    fn fig3_low_freq_window_is_5000_samples() {
        let plan = presets::fig3_low_freq();
        let t = build_inputs(&VoltageVector::zeros(7), &plan).unwrap();
        assert_eq!(t.len(), 5000);
        assert!((plan.window_seconds() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sine_peak_location() {
        let plan = PerturbationPlan::new(vec![1.0], vec![1.0], 1000.0, 1);
        let v1 = 0.3;
        let t = build_inputs(&VoltageVector::new(vec![v1]).unwrap(), &plan).unwrap();
        let trace = &t.traces()[0];
        let (k_max, &max) = trace
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!((max - (v1 + 1.0)).abs() < 1e-12);
        assert!((k_max as f64 / 1000.0 - 0.25).abs() <= 1.0 / 1000.0);
    }

    #[test]
    fn inputs_match_closed_form() {
        let plan = presets::fig3_high_freq().with_phases(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        let v = VoltageVector::new(vec![0.5, -0.5, 0.2, 0.0, -1.0, 0.9, 0.1]).unwrap();
        let t = build_inputs(&v, &plan).unwrap();
        for i in 0..7 {
            for (k, x) in t.traces()[i].iter().enumerate() {
                let time = k as f64 / plan.sample_rate_hz;
                let want = v[i]
                    + plan.amps_v[i] * (2.0 * PI * plan.freqs_hz[i] * time + plan.phases_rad[i]).sin();
                assert!((x - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn fig3_high_freq_has_no_errors() {
        let r = validate_plan(&presets::fig3_high_freq());
        assert!(r.is_ok(), "{:?}", r.errors);
    }

    #[test]
    fn every_preset_is_accepted() {
        for name in presets::NAMES {
            let plan = presets::by_name(name).unwrap();
            let r = validate_plan(&plan);
            assert!(r.is_ok(), "{name}: {:?}", r.errors);
        }
        assert!(validate_plan(&presets::factor_base()).is_ok());
        for f in presets::FREQUENCY_FACTORS {
            assert!(validate_plan(&presets::factor_base().scaled_freqs(f)).is_ok(), "factor {f}");
        }
    }

    #[test]
    fn duplicate_frequencies_are_errors() {
        let plan = PerturbationPlan::new(vec![100.0, 100.0], vec![0.01, 0.01], 10_000.0, 1);
        let r = validate_plan(&plan);
        assert!(has_duplicate(&r));
        assert!(r.errors[0].to_string().contains("terminals 1 and 2"));
    }

    #[test]
    fn harmonic_preset_warns_but_passes() {
        let r = validate_plan(&presets::harmonic());
        assert!(r.is_ok());
        assert!(r.warnings.iter().any(|w| matches!(
            w,
            PlanIssue::Intermodulation { i: 0, j: 1, k: 2, sum: true, .. }
        )));
    }

    #[test]
    fn nyquist_violation() {
        let plan = PerturbationPlan::new(vec![2000.0, 3000.0], vec![0.01, 0.01], 10_000.0, 1);
        let r = validate_plan(&plan);
        assert!(r.errors.iter().any(|e| matches!(e, PlanIssue::Nyquist { .. })));
        // exactly at the bound is still a violation
        let plan = PerturbationPlan::new(vec![2000.0, 500.0], vec![0.01, 0.01], 5000.0, 1);
        assert!(!validate_plan(&plan).is_ok());
    }

    #[test]
    fn non_integer_cycles() {
        let strict = presets::dnn_model().with_allow_leakage(false);
        let r = validate_plan(&strict);
        assert!(r.errors.iter().any(|e| matches!(e, PlanIssue::NonIntegerCycles { terminal: 3, .. })));
        let r = validate_plan(&presets::dnn_model());
        assert!(r.is_ok());
        assert!(r.warnings.iter().any(|e| matches!(e, PlanIssue::NonIntegerCycles { terminal: 3, .. })));
        // window itself not an integer number of samples
        let plan = PerturbationPlan::new(vec![3.0], vec![0.01], 1000.0, 1);
        assert!(validate_plan(&plan)
            .errors
            .iter()
            .any(|e| matches!(e, PlanIssue::NonIntegerWindow { .. })));
    }

    #[test]
    fn structural_errors() {
        let mut plan = PerturbationPlan::new(vec![10.0, -1.0], vec![0.01], 1000.0, 0);
        plan.phases_rad = vec![0.0, f64::NAN];
        let r = validate_plan(&plan);
        assert!(r.errors.contains(&PlanIssue::ZeroCycles));
        assert!(r.errors.iter().any(|e| matches!(e, PlanIssue::LengthMismatch { field: "amps", .. })));
        assert!(r.errors.iter().any(|e| matches!(e, PlanIssue::BadFrequency { terminal: 1, .. })));
        assert!(r.errors.contains(&PlanIssue::BadPhase { terminal: 1 }));
        assert!(!validate_plan(&PerturbationPlan::new(vec![], vec![], 1.0, 1)).is_ok());
    }

    #[test]
    fn build_inputs_rejects_invalid() {
        let plan = PerturbationPlan::new(vec![100.0, 100.0], vec![0.01, 0.01], 10_000.0, 1);
        assert!(build_inputs(&VoltageVector::zeros(2), &plan).is_err());
        let plan = PerturbationPlan::new(vec![100.0], vec![0.01], 10_000.0, 1);
        assert!(matches!(
            build_inputs(&VoltageVector::zeros(2), &plan),
            Err(HgeError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn suggest_single_frequency() {
        assert_eq!(suggest_frequencies(1, 10.0, 10_000.0).unwrap(), vec![10.0]);
    }

    #[test]
    fn suggest_infeasible() {
        assert!(matches!(
            suggest_frequencies(7, 2000.0, 10_000.0),
            Err(HgeError::Infeasible(_))
        ));
        assert!(suggest_frequencies(0, 10.0, 10_000.0).is_err());
    }

    /// Exhaustive oracle: does any `n`-subset of multiples `1..limit` avoid all
    /// second-order relations while keeping its top two below the limit?
    fn exists_free_subset(n: usize, limit: u64) -> bool {
        fn rec(start: u64, limit: u64, n: usize, set: &mut Vec<u64>) -> bool {
            if set.len() == n {
                return true;
            }
            for m in start..limit {
                let top = set.last().copied().unwrap_or(m);
                if top + m >= limit {
                    break;
                }
                if second_order_free(set, m) {
                    set.push(m);
                    if rec(m + 1, limit, n, set) {
                        return true;
                    }
                    set.pop();
                }
            }
            false
        }
        rec(1, limit, n, &mut Vec::new())
    }

    #[test]
    fn suggest_seven_is_warning_free() {
        let freqs = suggest_frequencies(7, 10.0, 10_000.0).unwrap();
        assert_eq!(freqs.len(), 7);
        for n_cycles in [1, 10] {
            let plan = PerturbationPlan::new(freqs.clone(), vec![0.01; 7], 10_000.0, n_cycles);
            let r = validate_plan(&plan);
            assert!(r.is_ok() && r.warnings.is_empty(), "{r:?}");
        }
    }

    #[test]
    fn suggest_agrees_with_exhaustive_search() {
        for n in 1..=5 {
            for limit in 2..=24u64 {
                // limit = sample_rate / (2 base) with base 1 Hz
                let greedy = suggest_frequencies(n, 1.0, 2.0 * limit as f64).is_ok();
                assert_eq!(greedy, exists_free_subset(n, limit), "n={n} limit={limit}");
            }
        }
    }
}
