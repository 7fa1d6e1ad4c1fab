//! Helpers shared by the integration tests.
#![allow(dead_code)]

use fewbit::model::{Architecture, LabeledSample, WeightAssignment};
use fewbit::solver::ProcessBackend;
use fewbit::train::TrainedNet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tolerance of the invariant checks on continuous expressions.
pub const CHECK_TOL: f64 = 1e-6;

/// The CBC backend; the solver tests need it installed.
pub fn solver() -> ProcessBackend {
    ProcessBackend::cbc().expect("these tests need the CBC solver on PATH or in FEWBIT_SOLVER")
}

/// Pre-activations of every layer, recomputed from scratch with
/// `ρ(x) = +1` for `x ≥ 0` and `−1` otherwise.
pub fn pre_activations(w: &WeightAssignment, x: &[f64]) -> Vec<Vec<f64>> {
    let arch = w.architecture();
    let mut input: Vec<f64> = x.to_vec();
    let mut out = Vec::new();
    for l in 1..=arch.depth() {
        let width = arch.width(l);
        let mut pre = vec![0.0; width];
        for (i, &a) in input.iter().enumerate() {
            for (j, p) in pre.iter_mut().enumerate() {
                *p += a * f64::from(w.get(l, i, j));
            }
        }
        input = pre.iter().map(|&p| if p >= 0.0 { 1.0 } else { -1.0 }).collect();
        out.push(pre);
    }
    out
}

/// Whether `w` realises `margins[l-1][j]` on every sample of `ids`.
pub fn satisfies_margins(w: &WeightAssignment, data: &[LabeledSample], ids: &[usize], margins: &[Vec<f64>]) -> bool {
    let depth = w.architecture().depth();
    ids.iter().all(|&k| {
        let pre = pre_activations(w, &data[k].features);
        (0..depth).all(|l| {
            pre[l].iter().enumerate().all(|(j, &p)| {
                let value = if l + 1 == depth { f64::from(data[k].targets[j]) * p } else { p.abs() };
                value >= margins[l][j] - CHECK_TOL
            })
        })
    })
}

/// The pipeline invariants that must hold after every training run:
/// (a) the Sat-Margin weights are Max-Margin feasible at `m = ε` on T̂,
/// (b) the weights entering Min-Weight meet the fixed margins,
/// (c) the final weights meet the fixed margins,
/// (d) Min-Weight never adds links.
pub fn check_pipeline_invariants(net: &TrainedNet, data: &[LabeledSample]) {
    let arch = net.weights.architecture();
    let floor: Vec<Vec<f64>> = (1..=arch.depth()).map(|l| vec![net.epsilon; arch.width(l)]).collect();
    assert!(
        satisfies_margins(&net.sat_margin_weights, data, &net.t_hat, &floor),
        "(a) Sat-Margin weights miss the ε margins on T̂"
    );
    if let Some(mm) = &net.max_margin_weights {
        assert!(satisfies_margins(mm, data, &net.t_hat, &floor), "Max-Margin weights miss ε");
    }
    if let Some(margins) = &net.fixed_margins {
        assert!(
            margins.iter().flatten().all(|&m| m >= net.epsilon - CHECK_TOL),
            "fixed margins below ε"
        );
        let entering = net.max_margin_weights.as_ref().unwrap_or(&net.sat_margin_weights);
        assert!(
            satisfies_margins(entering, data, &net.t_hat, margins),
            "(b) weights entering Min-Weight miss the fixed margins"
        );
        assert!(
            satisfies_margins(&net.weights, data, &net.t_hat, margins),
            "(c) final weights miss the fixed margins"
        );
        if let Some(mw) = &net.min_weight_weights {
            assert!(mw.nonzero_count() <= entering.nonzero_count(), "(d) Min-Weight added links");
        }
    }
}

/// Four integer samples with two features in `−2..=2` and random targets.
/// Seed 0 is a fixed hand-made instance.
pub fn oracle_instance(seed: u64) -> Vec<LabeledSample> {
    if seed == 0 {
        return [([2.0, 1.0], 1), ([1.0, 2.0], 1), ([-1.0, -2.0], -1), ([-2.0, 1.0], -1)]
            .into_iter()
            .map(|(x, y)| LabeledSample::new(x.to_vec(), vec![y]).unwrap())
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..4)
        .map(|_| {
            let x = vec![f64::from(rng.gen_range(-2..=2)), f64::from(rng.gen_range(-2..=2))];
            let y = if rng.gen_bool(0.5) { 1 } else { -1 };
            LabeledSample::new(x, vec![y]).unwrap()
        })
        .collect()
}

/// Uniform random weights.
pub fn random_weights(arch: &Architecture, rng: &mut impl Rng) -> WeightAssignment {
    let p = arch.weight_bound();
    let flat: Vec<i32> = (0..arch.total_links()).map(|_| rng.gen_range(-p..=p)).collect();
    WeightAssignment::from_flat(arch, &flat).unwrap()
}
