//! Solver gateway: hands a model to a backend, then audits whatever comes
//! back before anyone else sees it.
//!
//! The gateway never trusts the backend's objective or feasibility claims.
//! Integral variables are rounded (rejecting anything farther than
//! [`INTEGRALITY_TOLERANCE`] from an integer), equality-pinned continuous
//! variables are recomputed, every row is re-checked at
//! [`FEASIBILITY_TOLERANCE`], and the objective is recomputed from the
//! result. When the incumbent fails the audit, or is worse than a valid
//! warm start, the warm start is returned instead.

mod cbc;
mod lp;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{MilpModel, ObjSense};

pub use cbc::{parse_cbc_solution, parse_solution, ProcessBackend, SolutionFormat, SOLVER_PATH_ENV};
pub use lp::{parse_lp, parse_name_values, write_lp, write_start_values};

/// Largest distance from an integer accepted for integral variables.
pub const INTEGRALITY_TOLERANCE: f64 = 1e-5;
/// Absolute row tolerance (scaled by `1 + |rhs|`) used by the audit.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    FeasibleLimit,
    Infeasible,
    NoIncumbent,
    Error,
}

impl SolveStatus {
    pub fn has_incumbent(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleLimit)
    }
}

/// What a backend reports, before auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSolution {
    pub status: SolveStatus,
    /// Values in model variable order; `None` when there is no incumbent.
    pub values: Option<Vec<f64>>,
    /// Relative gap as reported by the backend.
    pub mip_gap: Option<f64>,
    /// Free-form diagnostics (e.g. the backend's status line).
    pub message: String,
}

/// A MILP backend.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    /// How the backend defines the reported relative gap.
    fn gap_definition(&self) -> &str;
    /// Solve `model` (honouring its warm start, if any) within `time_limit`.
    fn run(&self, model: &MilpModel, time_limit: Duration) -> Result<RawSolution>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Audited incumbent in model variable order.
    #[serde(skip)]
    pub values: Option<Vec<f64>>,
    /// Objective recomputed from `values`.
    pub objective: Option<f64>,
    pub mip_gap: Option<f64>,
    pub gap_definition: String,
    pub wall_time_s: f64,
    /// The returned incumbent is the warm start rather than a backend solution.
    pub from_warm_start: bool,
    pub message: String,
}

/// Round integral variables and clamp continuous ones into their bounds.
/// Fails when an integral variable is farther than
/// [`INTEGRALITY_TOLERANCE`] from an integer.
pub fn round_integral(model: &MilpModel, values: &mut [f64]) -> Result<()> {
    if values.len() != model.vars().len() {
        return Err(Error::Dimension {
            what: "solution values",
            expected: model.vars().len(),
            actual: values.len(),
        });
    }
    for (var, x) in model.vars().iter().zip(values.iter_mut()) {
        if !x.is_finite() {
            return Err(Error::Solver(format!("{} has non-finite value {x}", var.name)));
        }
        if var.kind.is_integral() {
            let r = x.round();
            if (*x - r).abs() > INTEGRALITY_TOLERANCE + 1e-12 {
                return Err(Error::Solver(format!(
                    "{} = {x} is not within {INTEGRALITY_TOLERANCE} of an integer",
                    var.name
                )));
            }
            *x = r;
        } else if *x < var.lower && *x >= var.lower - FEASIBILITY_TOLERANCE {
            *x = var.lower;
        } else if *x > var.upper && *x <= var.upper + FEASIBILITY_TOLERANCE {
            *x = var.upper;
        }
    }
    Ok(())
}

/// Round, complete and verify `values`; returns the cleaned vector.
pub fn audit(model: &MilpModel, values: &[f64]) -> Result<Vec<f64>> {
    let mut clean = values.to_vec();
    round_integral(model, &mut clean)?;
    model.complete_equalities(&mut clean);
    let violations = model.violations(&clean, FEASIBILITY_TOLERANCE);
    if let Some(first) = violations.first() {
        return Err(Error::Solver(format!(
            "incumbent fails the audit with {} violation(s), first: {first}",
            violations.len()
        )));
    }
    Ok(clean)
}

fn better(sense: ObjSense, a: f64, b: f64) -> bool {
    match sense {
        ObjSense::Maximize => a > b + 1e-9,
        ObjSense::Minimize => a < b - 1e-9,
    }
}

/// Solve `model` with `backend` and audit the outcome.
///
/// A model whose warm start passes the audit never comes back without an
/// incumbent, and the returned objective is never worse than the warm
/// start's.
pub fn solve(backend: &dyn Backend, model: &MilpModel, time_limit: Duration) -> Result<SolveResult> {
    if time_limit.is_zero() {
        return Err(Error::invalid("time limit must be positive"));
    }
    if model.vars().is_empty() {
        return Err(Error::Model("model has no variables".into()));
    }
    let warm = model.warm_start().and_then(|w| audit(model, w).ok());
    if model.warm_start().is_some() && warm.is_none() {
        log::warn!("{}: warm start fails the audit and is ignored", model.name);
    }

    let started = Instant::now();
    let raw = backend.run(model, time_limit);
    let wall_time_s = started.elapsed().as_secs_f64();

    let (mut status, incumbent, mip_gap, mut message) = match raw {
        Ok(raw) => {
            let audited = match (&raw.values, raw.status.has_incumbent()) {
                (Some(values), true) => match audit(model, values) {
                    Ok(clean) => Some(clean),
                    Err(e) => {
                        log::warn!("{}: {e}", model.name);
                        None
                    }
                },
                _ => None,
            };
            let status = match (&audited, raw.status) {
                (None, s) if s.has_incumbent() => SolveStatus::Error,
                (_, s) => s,
            };
            let gap = match status {
                SolveStatus::Optimal => Some(raw.mip_gap.unwrap_or(0.0)),
                SolveStatus::FeasibleLimit => raw.mip_gap,
                _ => None,
            };
            (status, audited, gap, raw.message)
        }
        Err(e) => (SolveStatus::Error, None, None, e.to_string()),
    };

    let sense = model.objective().sense;
    let mut from_warm_start = false;
    let values = match (incumbent, warm) {
        (Some(inc), Some(warm)) => {
            if better(sense, model.objective_value(&warm), model.objective_value(&inc)) {
                from_warm_start = true;
                status = SolveStatus::FeasibleLimit;
                Some(warm)
            } else {
                Some(inc)
            }
        }
        (Some(inc), None) => Some(inc),
        (None, Some(warm)) if status != SolveStatus::Infeasible => {
            from_warm_start = true;
            message = format!("{message}; falling back to the warm start");
            status = SolveStatus::FeasibleLimit;
            Some(warm)
        }
        (None, _) => None,
    };
    let mip_gap = if from_warm_start { None } else { mip_gap };
    Ok(SolveResult {
        status,
        objective: values.as_ref().map(|v| model.objective_value(v)),
        values,
        mip_gap,
        gap_definition: backend.gap_definition().to_string(),
        wall_time_s,
        from_warm_start,
        message,
    })
}

/// Per-stage time budgets where unused time rolls forward to later stages.
#[derive(Debug, Clone, Default)]
pub struct RolloverBudget {
    carry: Duration,
}

impl RolloverBudget {
    pub fn new() -> Self {
        Self::default()
    }

    /// Limit for a stage with base budget `base`, including carried time.
    pub fn limit(&self, base: Duration) -> Duration {
        base + self.carry
    }

    /// Record that a stage given `limit` used `used`.
    pub fn spend(&mut self, limit: Duration, used: Duration) {
        self.carry = limit.saturating_sub(used);
    }

    pub fn carried(&self) -> Duration {
        self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{Cmp, Constraint, Role, VarKind};

    struct Canned(RawSolution);

    impl Backend for Canned {
        fn name(&self) -> &str {
            "canned"
        }
        fn gap_definition(&self) -> &str {
            "none"
        }
        fn run(&self, _: &MilpModel, _: Duration) -> Result<RawSolution> {
            Ok(self.0.clone())
        }
    }

    fn knapsack() -> MilpModel {
        // max q0 + q1  s.t.  q0 + q1 ≤ 1
        let mut m = MilpModel::new("k", ObjSense::Maximize);
        let a = m.add_var(Role::Q, &[0, 0], VarKind::Binary, 0.0, 1.0).unwrap();
        let b = m.add_var(Role::Q, &[1, 0], VarKind::Binary, 0.0, 1.0).unwrap();
        m.add_constraint(Constraint {
            name: "cap".into(),
            terms: vec![(a, 1.0), (b, 1.0)],
            cmp: Cmp::Le,
            rhs: 1.0,
        })
        .unwrap();
        m.set_objective(ObjSense::Maximize, vec![(a, 1.0), (b, 1.0)]);
        m
    }

    fn raw(status: SolveStatus, values: Option<Vec<f64>>) -> RawSolution {
        RawSolution {
            status,
            values,
            mip_gap: None,
            message: String::new(),
        }
    }

    const SEC: Duration = Duration::from_secs(1);

    #[test]
    fn near_integral_values_are_rounded() {
        let m = knapsack();
        let r = solve(&Canned(raw(SolveStatus::Optimal, Some(vec![0.99999, 0.0]))), &m, SEC).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.values, Some(vec![1.0, 0.0]));
        assert_eq!(r.objective, Some(1.0));
        assert_eq!(r.mip_gap, Some(0.0));
    }

    #[test]
    fn infeasible_incumbent_is_an_error_without_warm_start() {
        let m = knapsack();
        let r = solve(&Canned(raw(SolveStatus::Optimal, Some(vec![1.0, 1.0]))), &m, SEC).unwrap();
        assert_eq!(r.status, SolveStatus::Error);
        assert!(r.values.is_none());
    }

    #[test]
    fn fractional_incumbent_falls_back_to_warm_start() {
        let mut m = knapsack();
        m.set_warm_start(vec![0.0, 1.0]).unwrap();
        let r = solve(&Canned(raw(SolveStatus::Optimal, Some(vec![0.5, 0.5]))), &m, SEC).unwrap();
        assert_eq!(r.status, SolveStatus::FeasibleLimit);
        assert!(r.from_warm_start);
        assert_eq!(r.values, Some(vec![0.0, 1.0]));
    }

    #[test]
    fn warm_start_prevents_no_incumbent() {
        let mut m = knapsack();
        m.set_warm_start(vec![0.0, 0.0]).unwrap();
        let r = solve(&Canned(raw(SolveStatus::NoIncumbent, None)), &m, SEC).unwrap();
        assert_eq!(r.status, SolveStatus::FeasibleLimit);
        assert_eq!(r.objective, Some(0.0));
    }

    #[test]
    fn worse_incumbent_loses_to_warm_start() {
        let mut m = knapsack();
        m.set_warm_start(vec![1.0, 0.0]).unwrap();
        let r = solve(&Canned(raw(SolveStatus::FeasibleLimit, Some(vec![0.0, 0.0]))), &m, SEC)
            .unwrap();
        assert_eq!(r.objective, Some(1.0));
        assert!(r.from_warm_start);
    }

    #[test]
    fn zero_time_limit_is_rejected() {
        let m = knapsack();
        assert!(solve(&Canned(raw(SolveStatus::Optimal, None)), &m, Duration::ZERO).is_err());
    }

    #[test]
    fn rollover_carries_unused_time_forward() {
        let mut budget = RolloverBudget::new();
        let limit = budget.limit(Duration::from_secs(60));
        budget.spend(limit, Duration::from_secs(20));
        assert_eq!(budget.limit(Duration::from_secs(60)), Duration::from_secs(100));
        budget.spend(Duration::from_secs(100), Duration::from_secs(130));
        assert_eq!(budget.carried(), Duration::ZERO);
    }
}
