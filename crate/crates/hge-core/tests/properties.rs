use hge_core::devices::{DeviceModel, OutputTrace, VoltageVector};
use hge_core::lockin::{extract_gradient, hge_measure};
use hge_core::optimizer::{train_gate, Gate, GateTask, TrainConfig};
use hge_core::signals::{presets, suggest_frequencies, PerturbationPlan};
use proptest::prelude::*;

fn volts(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.2f64..0.9, n)
}

fn phases(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-std::f64::consts::PI..std::f64::consts::PI, n)
}

/// Symmetric 3x3 matrix from six free entries.
fn sym3(e: &[f64]) -> Vec<Vec<f64>> {
    vec![
        vec![e[0], e[1], e[2]],
        vec![e[1], e[3], e[4]],
        vec![e[2], e[4], e[5]],
    ]
}

fn clean_plan() -> PerturbationPlan {
    let freqs = suggest_frequencies(3, 10.0, 2000.0).unwrap();
    PerturbationPlan::new(freqs, vec![0.02, 0.01, 0.015], 2000.0, 1)
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-12))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn demodulation_is_linear_in_the_trace(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        t1 in prop::collection::vec(-1.0f64..1.0, 1250),
        t2 in prop::collection::vec(-1.0f64..1.0, 1250),
    ) {
        let plan = presets::fig3_high_freq();
        let rate = plan.sample_rate_hz;
        let mix: Vec<f64> = t1.iter().zip(&t2).map(|(x, y)| a * x + b * y).collect();
        let e1 = extract_gradient(&OutputTrace::new(rate, t1).unwrap(), &plan).unwrap();
        let e2 = extract_gradient(&OutputTrace::new(rate, t2).unwrap(), &plan).unwrap();
        let em = extract_gradient(&OutputTrace::new(rate, mix).unwrap(), &plan).unwrap();
        for m in 0..plan.terminal_count() {
            let (d1, d2, dm) = (&e1.terminals[m].demod, &e2.terminals[m].demod, &em.terminals[m].demod);
            prop_assert!((dm.x - (a * d1.x + b * d2.x)).abs() <= 1e-12);
            prop_assert!((dm.y - (a * d1.y + b * d2.y)).abs() <= 1e-12);
        }
    }

    #[test]
    fn linear_derivatives_ignore_injection_phase(
        w in prop::collection::vec(-5.0f64..5.0, 7),
        v in volts(7),
        ph in phases(7),
    ) {
        let device = DeviceModel::linear(0.3, w.clone()).unwrap();
        let v = VoltageVector::new(v).unwrap();
        let plan = presets::fig3_high_freq();
        let base = hge_measure(&device, &v, &plan, None).unwrap().select(&(0..7).collect::<Vec<_>>()).unwrap();
        let shifted = hge_measure(&device, &v, &plan.clone().with_phases(ph), None)
            .unwrap()
            .select(&(0..7).collect::<Vec<_>>())
            .unwrap();
        for (s, b) in shifted.iter().zip(&base) {
            prop_assert!((s - b).abs() <= 1e-9 * b.abs().max(1e-3));
        }
        prop_assert!(max_rel(&base, &w) <= 1e-9);
    }

    #[test]
    fn quadratic_hge_is_exact_without_intermodulation(
        w in prop::collection::vec(-2.0f64..2.0, 3),
        q in prop::collection::vec(-2.0f64..2.0, 6),
        v in volts(3),
        ph in phases(3),
    ) {
        let device = DeviceModel::quadratic(0.1, w, sym3(&q)).unwrap();
        let v = VoltageVector::new(v).unwrap();
        let exact = device.analytic_gradient(&v).unwrap();
        let plan = clean_plan().with_phases(ph);
        let est = hge_measure(&device, &v, &plan, None).unwrap().select(&[0, 1, 2]).unwrap();
        for (e, x) in est.iter().zip(&exact) {
            prop_assert!((e - x).abs() <= 1e-9 * x.abs().max(1e-3), "{est:?} vs {exact:?}");
        }
    }

    #[test]
    fn controls_stay_in_range(eta in 0.0f64..5.0, seed in 0u64..1000) {
        let device = DeviceModel::reference_surrogate();
        let task = GateTask::new(Gate::Xor, 7);
        let mut cfg = TrainConfig::for_gate(Gate::Xor, presets::fig3_high_freq(), seed);
        cfg.eta = eta;
        cfg.max_iters = 5;
        let rec = train_gate(&device, &task, &cfg).unwrap();
        let (lo, hi) = task.control_range;
        for it in &rec.iterations {
            prop_assert!(it.controls.iter().all(|c| (lo..=hi).contains(c)));
        }
        prop_assert!(rec.final_controls.iter().all(|c| (lo..=hi).contains(c)));
    }
}

#[test]
fn small_steps_descend() {
    // small eta and small perturbations: the loss should fall in nearly every
    // iteration; exact monotonicity is not expected because HGE has O(alpha)
    // bias
    let device = DeviceModel::reference_surrogate();
    let plan = presets::fig3_high_freq();
    let small = plan.amps_v.iter().map(|a| a * 0.1).collect();
    let plan = plan.with_amps(small);
    for gate in Gate::ALL {
        let task = GateTask::new(gate, 7);
        let mut cfg = TrainConfig::for_gate(gate, plan.clone(), 1);
        cfg.eta = 0.0005;
        cfg.max_iters = 40;
        cfg.stop_threshold = 1e-9;
        let rec = train_gate(&device, &task, &cfg).unwrap();
        let losses: Vec<f64> = rec.loss_trace().into_iter().flatten().collect();
        let steps = losses.len() - 1;
        let down = losses.windows(2).filter(|w| w[1] <= w[0]).count();
        assert!(down * 10 >= steps * 9, "{gate}: {down}/{steps} non-increasing {losses:?}");
    }
}
