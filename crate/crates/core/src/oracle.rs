//! Exhaustive training oracle for tiny instances: enumerates every weight
//! assignment, evaluates each stage objective by a direct forward pass and
//! returns the true optimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristic::sat_margin_score;
use crate::milp::{implied_margins, layer_box, Tolerances};
use crate::model::{compute_data_bound, Architecture, LabeledSample, WeightAssignment};
use crate::train::meets_margins;

/// Largest number of assignments the oracle will enumerate.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleObjective {
    /// Number of confidently correct output bits (maximize).
    SatMargin,
    /// Sum of implied margins on `t_hat`, each at least `ε` (maximize).
    MaxMargin { t_hat: Vec<usize> },
    /// Nonzero weights subject to `margins` on `t_hat` (minimize).
    MinWeight {
        t_hat: Vec<usize>,
        margins: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub optimum: f64,
    /// First optimizer in enumeration order.
    pub weights: WeightAssignment,
    pub assignments: u64,
}

/// Number of weight assignments of `arch`.
pub fn assignment_count(arch: &Architecture) -> f64 {
    f64::from(2 * arch.weight_bound() + 1).powi(arch.total_links() as i32)
}

/// Enumerate all weight assignments and return the best by `objective`.
pub fn brute_force_train(
    arch: &Architecture,
    data: &[LabeledSample],
    tol: &Tolerances,
    objective: &OracleObjective,
) -> Result<OracleResult> {
    let count = assignment_count(arch);
    if count > ENUMERATION_LIMIT as f64 {
        return Err(Error::EnumerationTooLarge {
            assignments: count,
            limit: ENUMERATION_LIMIT,
        });
    }
    for s in data {
        s.check_dims(arch)?;
    }
    let (maximize, ids) = match objective {
        OracleObjective::SatMargin => (true, Vec::new()),
        OracleObjective::MaxMargin { t_hat } => (true, t_hat.clone()),
        OracleObjective::MinWeight { t_hat, .. } => (false, t_hat.clone()),
    };
    if let Some(&k) = ids.iter().find(|&&k| k >= data.len()) {
        return Err(Error::invalid(format!("sample index {k} is out of range")));
    }
    let margin_caps: Vec<f64> = match objective {
        OracleObjective::MaxMargin { t_hat } if !t_hat.is_empty() => {
            let selected: Vec<LabeledSample> = t_hat.iter().map(|&k| data[k].clone()).collect();
            let bound = compute_data_bound(&selected)?.value();
            (1..=arch.depth()).map(|l| layer_box(arch, l, bound)).collect()
        }
        _ => vec![f64::INFINITY; arch.depth()],
    };

    let p = arch.weight_bound();
    let mut flat = vec![-p; arch.total_links()];
    let mut best: Option<(f64, Vec<i32>)> = None;
    let mut enumerated = 0u64;
    loop {
        enumerated += 1;
        let weights = WeightAssignment::from_flat(arch, &flat)?;
        let value = match objective {
            OracleObjective::SatMargin => sat_margin_score(&weights, data, tol)?.map(|v| v as f64),
            OracleObjective::MaxMargin { t_hat } => {
                let implied = implied_margins(&weights, data, t_hat)?;
                let feasible = implied.iter().flatten().all(|&m| m >= tol.epsilon());
                feasible.then(|| {
                    implied
                        .iter()
                        .zip(&margin_caps)
                        .map(|(layer, &cap)| layer.iter().map(|m| m.min(cap)).sum::<f64>())
                        .sum()
                })
            }
            OracleObjective::MinWeight { t_hat, margins } => meets_margins(&weights, data, t_hat, margins)?
                .then(|| weights.nonzero_count() as f64),
        };
        if let Some(v) = value {
            let improves = match &best {
                None => true,
                Some((b, _)) if maximize => v > *b,
                Some((b, _)) => v < *b,
            };
            if improves {
                best = Some((v, flat.clone()));
            }
        }
        // odometer step
        let mut pos = 0;
        loop {
            if pos == flat.len() {
                let (optimum, flat) = best.ok_or_else(|| {
                    Error::TrainingFailure("no weight assignment is feasible".into())
                })?;
                return Ok(OracleResult {
                    optimum,
                    weights: WeightAssignment::from_flat(arch, &flat)?,
                    assignments: enumerated,
                });
            }
            if flat[pos] < p {
                flat[pos] += 1;
                break;
            }
            flat[pos] = -p;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_every_assignment_of_a_tiny_net() {
        let arch = Architecture::new(vec![2, 2, 1], 1).unwrap();
        let data = vec![LabeledSample::new(vec![1.0, 2.0], vec![1]).unwrap()];
        let tol = Tolerances::new(0.1).unwrap();
        let r = brute_force_train(&arch, &data, &tol, &OracleObjective::SatMargin).unwrap();
        assert_eq!(r.assignments, 729);
        assert_eq!(r.optimum, 1.0);
    }

    #[test]
    fn guard_refuses_large_instances() {
        let arch = Architecture::new(vec![10, 10, 10, 1], 1).unwrap();
        let tol = Tolerances::new(0.1).unwrap();
        assert!(matches!(
            brute_force_train(&arch, &[], &tol, &OracleObjective::SatMargin),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }
}
