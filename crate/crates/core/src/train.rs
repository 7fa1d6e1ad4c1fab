//! The lexicographic training chain: Sat-Margin, then Max-Margin and
//! Min-Weight on the confidently classified samples `T̂`.
//!
//! Each stage is warm-started from the previous stage's weights, so a stage
//! can only improve on what came before. Every incumbent is re-checked
//! against the guarantees its stage promises; an incumbent that fails is
//! discarded in favour of the previous stage's weights.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristic::{local_search, prune_links};
use crate::inference::forward;
use crate::milp::{
    assignment_from_weights, build_mm, build_mw, build_sm, extract_margins, extract_weights,
    implied_margins, output_scale, MilpModel, Tolerances,
};
use crate::model::{Architecture, LabeledSample, WeightAssignment};
use crate::solver::{solve, Backend, RolloverBudget, SolveResult, SolveStatus};

/// Slack for floating-point comparisons on recomputed pre-activations.
const CHECK_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    SatMargin,
    MaxMargin,
    MinWeight,
}

impl Stage {
    pub fn short(self) -> &'static str {
        match self {
            Stage::SatMargin => "SM",
            Stage::MaxMargin => "MM",
            Stage::MinWeight => "MW",
        }
    }
}

/// Time budgets per stage; `None` skips the stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageBudget {
    pub sat_margin: Duration,
    pub max_margin: Option<Duration>,
    pub min_weight: Option<Duration>,
    /// Add a stage's unused time to the next enabled stage.
    pub rollover: bool,
}

impl StageBudget {
    pub fn new(sat_margin: Duration, max_margin: Option<Duration>, min_weight: Option<Duration>) -> Result<Self> {
        let all = [Some(sat_margin), max_margin, min_weight];
        if all.iter().flatten().any(|d| d.is_zero()) {
            return Err(Error::invalid("stage budgets must be positive"));
        }
        Ok(StageBudget {
            sat_margin,
            max_margin,
            min_weight,
            rollover: true,
        })
    }

    /// Budget for a stage plan `sm`, `sm+mm`, `sm+mw` or `sm+mm+mw`
    /// (case-insensitive); budgets of disabled stages are ignored.
    pub fn for_plan(plan: &str, sat_margin: Duration, max_margin: Duration, min_weight: Duration) -> Result<Self> {
        let (mm, mw) = match plan.to_ascii_lowercase().as_str() {
            "sm" => (false, false),
            "sm+mm" => (true, false),
            "sm+mw" => (false, true),
            "sm+mm+mw" => (true, true),
            other => {
                return Err(Error::invalid(format!(
                    "unknown stage plan {other:?}; expected sm, sm+mm, sm+mw or sm+mm+mw"
                )))
            }
        };
        Self::new(sat_margin, mm.then_some(max_margin), mw.then_some(min_weight))
    }

    /// Stage names joined by `+`, e.g. `SM+MM+MW`.
    pub fn label(&self) -> String {
        let mut parts = vec!["SM"];
        if self.max_margin.is_some() {
            parts.push("MM");
        }
        if self.min_weight.is_some() {
            parts.push("MW");
        }
        parts.join("+")
    }
}

/// Knobs besides the stage budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub tolerances: Tolerances,
    /// Seed for the warm-start heuristics.
    pub seed: u64,
    /// Move budget of the Sat-Margin warm-start local search; 0 starts
    /// from the all-zero network.
    pub search_moves: usize,
}

impl TrainOptions {
    pub const DEFAULT_SEARCH_MOVES: usize = 200_000;

    pub fn new(tolerances: Tolerances, seed: u64) -> Self {
        TrainOptions {
            tolerances,
            seed,
            search_moves: Self::DEFAULT_SEARCH_MOVES,
        }
    }
}

/// Outcome of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub time_limit_s: f64,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub mip_gap: Option<f64>,
    pub gap_definition: String,
    pub wall_time_s: f64,
    pub from_warm_start: bool,
    /// The stage's weights were kept for the next stage.
    pub accepted: bool,
    /// Nonzero weights of the network in force after this stage.
    pub nonzeros: usize,
    pub note: String,
}

impl StageReport {
    fn from_solve(stage: Stage, limit: Duration, result: &SolveResult) -> Self {
        StageReport {
            stage,
            time_limit_s: limit.as_secs_f64(),
            status: result.status,
            objective: result.objective,
            mip_gap: result.mip_gap,
            gap_definition: result.gap_definition.clone(),
            wall_time_s: result.wall_time_s,
            from_warm_start: result.from_warm_start,
            accepted: false,
            nonzeros: 0,
            note: result.message.clone(),
        }
    }
}

/// A network together with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedNet {
    pub weights: WeightAssignment,
    /// Weights after each stage that produced an incumbent.
    pub sat_margin_weights: WeightAssignment,
    pub max_margin_weights: Option<WeightAssignment>,
    pub min_weight_weights: Option<WeightAssignment>,
    /// Indices of the confidently classified training samples.
    pub t_hat: Vec<usize>,
    /// Margins fixed in the Min-Weight stage, `[layer - 1][neuron]`.
    pub fixed_margins: Option<Vec<Vec<f64>>>,
    pub epsilon: f64,
    pub stages: Vec<StageReport>,
}

impl TrainedNet {
    pub fn stage(&self, stage: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// Accepted stages joined by `+`, e.g. `SM+MM+MW`.
    pub fn stage_reached(&self) -> String {
        self.stages
            .iter()
            .filter(|s| s.accepted)
            .map(|s| s.stage.short())
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Samples whose every output bit is confidently correct (`y·ŷ ≥ 1/2`) and
/// whose hidden pre-activations all clear zero by `ε`.
pub fn compute_t_hat(
    weights: &WeightAssignment,
    data: &[LabeledSample],
    tol: &Tolerances,
) -> Result<Vec<usize>> {
    let arch = weights.architecture();
    let scale = output_scale(arch);
    let eps = tol.epsilon();
    let mut t_hat = Vec::new();
    for (k, sample) in data.iter().enumerate() {
        let trace = forward(weights, &sample.features)?;
        let confident = (0..arch.output_width()).all(|j| {
            f64::from(sample.targets[j]) * scale * trace.pre_activation(arch.depth(), j)
                >= 0.5 - CHECK_TOLERANCE
        });
        let untied = (1..arch.depth()).all(|l| {
            (0..arch.width(l)).all(|j| trace.pre_activation(l, j).abs() >= eps - CHECK_TOLERANCE)
        });
        if confident && untied {
            t_hat.push(k);
        }
    }
    Ok(t_hat)
}

/// Whether `weights` realise at least `margins` on every sample of `ids`:
/// `|pre| ≥ m` for hidden neurons and `y·pre ≥ m` for output neurons.
pub fn meets_margins(
    weights: &WeightAssignment,
    data: &[LabeledSample],
    ids: &[usize],
    margins: &[Vec<f64>],
) -> Result<bool> {
    let implied = implied_margins(weights, data, ids)?;
    Ok(implied
        .iter()
        .flatten()
        .zip(margins.iter().flatten())
        .all(|(got, want)| *got >= want - CHECK_TOLERANCE))
}

fn run_stage(
    backend: &dyn Backend,
    mut model: MilpModel,
    warm: Vec<f64>,
    limit: Duration,
    budget: &mut RolloverBudget,
    rollover: bool,
) -> Result<(MilpModel, SolveResult)> {
    model.set_warm_start(warm)?;
    log::info!(
        "{}: {} variables, {} rows, limit {:.1}s",
        model.name,
        model.vars().len(),
        model.constraints().len(),
        limit.as_secs_f64()
    );
    let result = solve(backend, &model, limit)?;
    if rollover {
        budget.spend(limit, Duration::from_secs_f64(result.wall_time_s));
    }
    log::info!(
        "{}: {:?}, objective {:?}, gap {:?}, {:.1}s",
        model.name,
        result.status,
        result.objective,
        result.mip_gap,
        result.wall_time_s
    );
    Ok((model, result))
}

/// Train a network on `data` with the enabled stages.
pub fn train(
    backend: &dyn Backend,
    arch: &Architecture,
    data: &[LabeledSample],
    budget: &StageBudget,
    options: &TrainOptions,
) -> Result<TrainedNet> {
    let tol = &options.tolerances;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    for s in data {
        s.check_dims(arch)?;
    }
    let mut clock = RolloverBudget::new();
    let mut stages = Vec::new();

    // Sat-Margin, warm-started from a local search that begins at the
    // all-zero network (always feasible)
    let limit = clock.limit(budget.sat_margin);
    let model = build_sm(arch, data, tol)?;
    let start = local_search(
        &WeightAssignment::zeros(arch),
        data,
        tol,
        options.search_moves,
        options.seed,
    )?;
    let warm = assignment_from_weights(&model, data, &start, None)?;
    let (model, result) = run_stage(backend, model, warm, limit, &mut clock, budget.rollover)?;
    let mut report = StageReport::from_solve(Stage::SatMargin, limit, &result);
    let values = result.values.as_ref().ok_or_else(|| {
        Error::TrainingFailure(format!("Sat-Margin returned no incumbent: {}", result.message))
    })?;
    let sm_weights = extract_weights(&model, values, arch)?;
    let t_hat = compute_t_hat(&sm_weights, data, tol)?;
    let confident_bits = result.objective.unwrap_or(0.0).round() as usize;
    if t_hat.len() * arch.output_width() > confident_bits {
        report.note = format!(
            "{}; recomputed T̂ is larger than the objective implies",
            report.note
        );
    }
    report.accepted = true;
    report.nonzeros = sm_weights.nonzero_count();
    stages.push(report);

    let mut current = sm_weights.clone();
    let mut mm_weights = None;
    let mut mw_weights = None;
    let mut fixed_margins = None;
    let mut mm_margins: Option<Vec<Vec<f64>>> = None;

    if t_hat.is_empty() && (budget.max_margin.is_some() || budget.min_weight.is_some()) {
        log::warn!("no confidently classified samples; margin stages are skipped");
    }

    if let (Some(base), false) = (budget.max_margin, t_hat.is_empty()) {
        let limit = clock.limit(base);
        let model = build_mm(arch, data, &t_hat, tol)?;
        let warm = assignment_from_weights(&model, data, &current, None)?;
        let (model, result) = run_stage(backend, model, warm, limit, &mut clock, budget.rollover)?;
        let mut report = StageReport::from_solve(Stage::MaxMargin, limit, &result);
        if let Some(values) = &result.values {
            let w = extract_weights(&model, values, arch)?;
            let m = extract_margins(&model, values, arch)?;
            let floor: Vec<Vec<f64>> = m.iter().map(|l| vec![tol.epsilon(); l.len()]).collect();
            if meets_margins(&w, data, &t_hat, &floor)? {
                current = w.clone();
                mm_weights = Some(w);
                mm_margins = Some(m);
                report.accepted = true;
            } else {
                report.note = format!("{}; incumbent misclassifies T̂, kept previous weights", report.note);
            }
        }
        report.nonzeros = current.nonzero_count();
        stages.push(report);
    }

    if let (Some(base), false) = (budget.min_weight, t_hat.is_empty()) {
        let limit = clock.limit(base);
        let margins = match &mm_margins {
            // the solver's margins, capped by what the rounded weights realise
            Some(m) => {
                let realised = implied_margins(&current, data, &t_hat)?;
                m.iter()
                    .zip(&realised)
                    .map(|(ml, rl)| {
                        ml.iter()
                            .zip(rl)
                            .map(|(a, b)| a.min(*b).max(tol.epsilon()))
                            .collect()
                    })
                    .collect()
            }
            None => (1..=arch.depth())
                .map(|l| vec![tol.epsilon(); arch.width(l)])
                .collect::<Vec<Vec<f64>>>(),
        };
        let model = build_mw(arch, data, &t_hat, &margins, tol)?;
        let sparse = prune_links(&current, data, &t_hat, &margins, options.seed)?;
        let warm = assignment_from_weights(&model, data, &sparse, None)?;
        let (model, result) = run_stage(backend, model, warm, limit, &mut clock, budget.rollover)?;
        let mut report = StageReport::from_solve(Stage::MinWeight, limit, &result);
        if let Some(values) = &result.values {
            let w = extract_weights(&model, values, arch)?;
            if !meets_margins(&w, data, &t_hat, &margins)? {
                report.note = format!("{}; incumbent loses the fixed margins, kept previous weights", report.note);
            } else if w.nonzero_count() > current.nonzero_count() {
                report.note = format!("{}; incumbent has more links, kept previous weights", report.note);
            } else {
                current = w.clone();
                mw_weights = Some(w);
                report.accepted = true;
            }
        }
        fixed_margins = Some(margins);
        report.nonzeros = current.nonzero_count();
        stages.push(report);
    }

    Ok(TrainedNet {
        weights: current,
        sat_margin_weights: sm_weights,
        max_margin_weights: mm_weights,
        min_weight_weights: mw_weights,
        t_hat,
        fixed_margins,
        epsilon: tol.epsilon(),
        stages,
    })
}

/// Fraction of samples whose every output bit matches its target.
pub fn training_accuracy(weights: &WeightAssignment, data: &[LabeledSample]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for s in data {
        if forward(weights, &s.features)?.output() == s.targets.as_slice() {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_labels() {
        let s = Duration::from_secs(1);
        assert_eq!(StageBudget::new(s, Some(s), Some(s)).unwrap().label(), "SM+MM+MW");
        assert_eq!(StageBudget::new(s, None, Some(s)).unwrap().label(), "SM+MW");
        assert!(StageBudget::new(Duration::ZERO, None, None).is_err());
    }

    #[test]
    fn t_hat_of_a_perfect_single_layer() {
        let arch = Architecture::new(vec![1, 1], 1).unwrap();
        let w = WeightAssignment::from_flat(&arch, &[1]).unwrap();
        let data = vec![
            LabeledSample::new(vec![2.0], vec![1]).unwrap(),
            LabeledSample::new(vec![-2.0], vec![-1]).unwrap(),
            LabeledSample::new(vec![0.5], vec![1]).unwrap(),
        ];
        // scale = 2 / (1·2) = 1, so y·ŷ ≥ 1/2 needs |x| ≥ 1/2
        let tol = Tolerances::new(0.1).unwrap();
        assert_eq!(compute_t_hat(&w, &data, &tol).unwrap(), vec![0, 1, 2]);
        let w0 = WeightAssignment::zeros(&arch);
        assert!(compute_t_hat(&w0, &data, &tol).unwrap().is_empty());
    }
}
