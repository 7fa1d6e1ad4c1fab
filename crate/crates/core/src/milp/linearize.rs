//! Big-M gadgets for indicator implications and `(2u - 1)·w` products.

use super::{Cmp, Constraint, LinExpr, VarId};
use crate::error::{Error, Result};

/// `indicator == active_when  ⇒  lhs cmp rhs`.
#[derive(Debug, Clone)]
pub struct Implication {
    pub indicator: VarId,
    pub active_when: bool,
    pub lhs: LinExpr,
    pub cmp: Cmp,
    pub rhs: LinExpr,
}

impl Implication {
    /// The single big-M row that enforces the implication and is slack
    /// otherwise, provided `big_m` bounds the worst violation on the box.
    pub fn linearize(&self, name: impl Into<String>, big_m: f64) -> Result<Constraint> {
        if !big_m.is_finite() || big_m <= 0.0 {
            return Err(Error::invalid(format!("big-M must be positive, got {big_m}")));
        }
        // relax by M when the indicator sits at the inactive value:
        // active_when = 1 gives slack M·(1 - b), active_when = 0 gives M·b
        let (coef_b, shift) = if self.active_when {
            (-big_m, big_m)
        } else {
            (big_m, 0.0)
        };
        let mut rhs = self.rhs.clone();
        match self.cmp {
            Cmp::Ge => {
                // lhs ≥ rhs − slack
                rhs.add(self.indicator, -coef_b);
                rhs = rhs.plus_constant(-shift);
            }
            Cmp::Le => {
                // lhs ≤ rhs + slack
                rhs.add(self.indicator, coef_b);
                rhs = rhs.plus_constant(shift);
            }
            Cmp::Eq => {
                return Err(Error::invalid("equality implications need two rows"));
            }
        }
        Ok(Constraint::from_exprs(name, &self.lhs, self.cmp, &rhs))
    }
}

/// Smallest big-M that keeps `lhs cmp rhs` slack when `lhs - rhs` ranges
/// over `[diff_min, diff_max]`.
pub fn required_big_m(cmp: Cmp, diff_min: f64, diff_max: f64) -> f64 {
    match cmp {
        Cmp::Ge => (-diff_min).max(0.0),
        Cmp::Le => diff_max.max(0.0),
        Cmp::Eq => (-diff_min).max(diff_max).max(0.0),
    }
}

/// The pair `(b = 1 ⇒ expr ≥ threshold)` and `(b = 0 ⇒ expr ≤ threshold − ε)`.
pub fn linearize_indicator(
    name: &str,
    indicator: VarId,
    expr: &LinExpr,
    threshold: f64,
    epsilon: f64,
    big_m: f64,
) -> Result<[Constraint; 2]> {
    let on = Implication {
        indicator,
        active_when: true,
        lhs: expr.clone(),
        cmp: Cmp::Ge,
        rhs: LinExpr::constant(threshold),
    };
    let off = Implication {
        indicator,
        active_when: false,
        lhs: expr.clone(),
        cmp: Cmp::Le,
        rhs: LinExpr::constant(threshold - epsilon),
    };
    Ok([
        on.linearize(format!("{name}_on"), big_m)?,
        off.linearize(format!("{name}_off"), big_m)?,
    ])
}

/// Four rows forcing `c = (2u − 1)·w` for binary `u` and `w ∈ [−P, P]`.
pub fn linearize_bilinear(
    name: &str,
    c: VarId,
    u: VarId,
    w: VarId,
    weight_bound: i32,
) -> [Constraint; 4] {
    let two_p = 2.0 * f64::from(weight_bound);
    let row = |suffix: &str, w_coef: f64, u_coef: f64, cmp: Cmp, rhs: f64| Constraint {
        name: format!("{name}{suffix}"),
        terms: vec![(c, 1.0), (w, w_coef), (u, u_coef)],
        cmp,
        rhs,
    };
    [
        // c ≥ w − 2P(1 − u)
        row("a", -1.0, -two_p, Cmp::Ge, -two_p),
        // c ≤ w + 2P(1 − u)
        row("b", -1.0, two_p, Cmp::Le, two_p),
        // c ≥ −w − 2Pu
        row("c", 1.0, two_p, Cmp::Ge, 0.0),
        // c ≤ −w + 2Pu
        row("d", 1.0, -two_p, Cmp::Le, 0.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn holds(rows: &[Constraint], values: &[f64]) -> bool {
        rows.iter().all(|r| r.violation(values) <= 1e-9)
    }

    #[test]
    fn bilinear_substitution_examples() {
        // variables: c = 0, u = 1, w = 2
        let rows = linearize_bilinear("b", VarId(0), VarId(1), VarId(2), 3);
        assert!(holds(&rows, &[-3.0, 1.0, -3.0]));
        assert!(!holds(&rows, &[3.0, 1.0, -3.0]));
        assert!(holds(&rows, &[-2.0, 0.0, 2.0]));
        assert!(!holds(&rows, &[2.0, 0.0, 2.0]));
    }

    #[test]
    fn bilinear_truth_table_p1() {
        let rows = linearize_bilinear("b", VarId(0), VarId(1), VarId(2), 1);
        for u in [0.0, 1.0] {
            for w in [-1.0, 0.0, 1.0] {
                for c in [-1.0, 0.0, 1.0] {
                    let expected = (2.0 * u - 1.0) * w == c;
                    assert_eq!(holds(&rows, &[c, u, w]), expected, "u={u} w={w} c={c}");
                }
            }
        }
    }

    #[test]
    fn indicator_with_empty_support_reduces_to_sign_checks() {
        let rows = linearize_indicator("e", VarId(0), &LinExpr::new(), 0.0, 0.1, 1.0).unwrap();
        // b = 1 needs 0 ≥ 0, b = 0 needs 0 ≤ −0.1
        assert!(holds(&rows, &[1.0]));
        assert!(!holds(&rows, &[0.0]));
        let rows = linearize_indicator("e", VarId(0), &LinExpr::new(), 1.0, 0.1, 2.0).unwrap();
        assert!(!holds(&rows, &[1.0]));
        assert!(holds(&rows, &[0.0]));
    }

    #[test]
    fn nonpositive_big_m_is_rejected() {
        let expr = LinExpr::term(VarId(1), 1.0);
        assert!(linearize_indicator("e", VarId(0), &expr, 0.0, 0.1, 0.0).is_err());
        assert!(linearize_indicator("e", VarId(0), &expr, 0.0, 0.1, -1.0).is_err());
    }

    #[test]
    fn required_big_m_covers_the_box() {
        // layer-1 neuron over two inputs with |x| ≤ 7 and P = 1
        let m = required_big_m(Cmp::Le, -14.0, 14.0) + 0.1;
        assert!((m - 14.1).abs() < 1e-12);
        assert_eq!(required_big_m(Cmp::Ge, -4.0, 4.0), 4.0);
    }
}
