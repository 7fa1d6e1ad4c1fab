//! Solver-agnostic linear models and the three training stages built on them.

mod linearize;
mod stages;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use linearize::{
    linearize_bilinear, linearize_indicator, required_big_m, Implication,
};
pub use stages::{
    assignment_from_weights, build_mm, build_mw, build_sm, extract_margins, extract_weights,
    first_layer_box, implied_margins, layer_box, output_scale, Tolerances,
    DEFAULT_EPSILON_CONTINUOUS, DEFAULT_EPSILON_INTEGER,
};

/// What a variable stands for in the training models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    /// weight `w_{l,i,j}`
    W,
    /// hidden activation indicator `u_{k,l,j}`
    U,
    /// signed contribution `c_{k,l,i,j}`
    C,
    /// confidently-correct flag `q_{k,j}`
    Q,
    /// scaled output `ŷ_{k,j}`
    Yhat,
    /// neuron margin `m_{l,j}`
    M,
    /// link indicator `v_{l,i,j}`
    V,
}

impl Role {
    pub const ALL: [Role; 7] = [Role::W, Role::U, Role::C, Role::Q, Role::Yhat, Role::M, Role::V];

    pub fn prefix(self) -> &'static str {
        match self {
            Role::W => "w",
            Role::U => "u",
            Role::C => "c",
            Role::Q => "q",
            Role::Yhat => "yhat",
            Role::M => "m",
            Role::V => "v",
        }
    }

    /// Number of index components in names of this role.
    pub fn arity(self) -> usize {
        match self {
            Role::W | Role::U | Role::V => 3,
            Role::C => 4,
            Role::Q | Role::Yhat | Role::M => 2,
        }
    }

    fn from_prefix(p: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.prefix() == p)
    }
}

/// Variable name for a role and index tuple, e.g. `w_1_0_3`.
pub fn var_name(role: Role, index: &[usize]) -> String {
    let mut name = role.prefix().to_string();
    for i in index {
        name.push('_');
        name.push_str(&i.to_string());
    }
    name
}

/// Inverse of [`var_name`].
pub fn parse_var_name(name: &str) -> Option<(Role, Vec<usize>)> {
    let mut parts = name.split('_');
    let role = Role::from_prefix(parts.next()?)?;
    let index: Vec<usize> = parts
        .map(|p| {
            if p.is_empty() || (p.len() > 1 && p.starts_with('0')) {
                None
            } else {
                p.parse().ok()
            }
        })
        .collect::<Option<_>>()?;
    (index.len() == role.arity()).then_some((role, index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub role: Role,
    pub index: Vec<usize>,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cmp::Le => "<=",
            Cmp::Eq => "=",
            Cmp::Ge => ">=",
        })
    }
}

/// Affine expression `Σ a_i x_i + constant`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn term(var: VarId, coef: f64) -> Self {
        LinExpr {
            terms: vec![(var, coef)],
            constant: 0.0,
        }
    }

    pub fn add(&mut self, var: VarId, coef: f64) -> &mut Self {
        self.terms.push((var, coef));
        self
    }

    pub fn with(mut self, var: VarId, coef: f64) -> Self {
        self.terms.push((var, coef));
        self
    }

    pub fn plus_constant(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    pub fn extend(&mut self, other: &LinExpr, scale: f64) {
        self.terms
            .extend(other.terms.iter().map(|&(v, a)| (v, a * scale)));
        self.constant += other.constant * scale;
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|&(v, a)| a * values[v.0])
                .sum::<f64>()
    }

    /// Merge repeated variables and drop zero coefficients.
    pub fn normalized(&self) -> LinExpr {
        let mut order = Vec::new();
        let mut acc: HashMap<VarId, f64> = HashMap::new();
        for &(v, a) in &self.terms {
            if !acc.contains_key(&v) {
                order.push(v);
            }
            *acc.entry(v).or_insert(0.0) += a;
        }
        LinExpr {
            terms: order
                .into_iter()
                .filter_map(|v| {
                    let a = acc[&v];
                    (a != 0.0).then_some((v, a))
                })
                .collect(),
            constant: self.constant,
        }
    }
}

/// `Σ terms  cmp  rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

impl Constraint {
    /// Build from `lhs cmp rhs`, moving constants to the right-hand side.
    pub fn from_exprs(name: impl Into<String>, lhs: &LinExpr, cmp: Cmp, rhs: &LinExpr) -> Self {
        let mut diff = lhs.clone();
        diff.extend(rhs, -1.0);
        let diff = diff.normalized();
        Constraint {
            name: name.into(),
            terms: diff.terms,
            cmp,
            rhs: -diff.constant,
        }
    }

    pub fn lhs_value(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violate this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.lhs_value(values);
        match self.cmp {
            Cmp::Le => (lhs - self.rhs).max(0.0),
            Cmp::Ge => (self.rhs - lhs).max(0.0),
            Cmp::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjSense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub sense: ObjSense,
    pub terms: Vec<(VarId, f64)>,
}

/// A violated bound, integrality requirement or row.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Bound { var: String, value: f64 },
    Integrality { var: String, value: f64 },
    Row { name: String, amount: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Bound { var, value } => write!(f, "{var} = {value} is out of bounds"),
            Violation::Integrality { var, value } => write!(f, "{var} = {value} is not integral"),
            Violation::Row { name, amount } => write!(f, "row {name} violated by {amount}"),
        }
    }
}

/// Variables, rows, an objective and an optional warm start.
#[derive(Debug, Clone)]
pub struct MilpModel {
    pub name: String,
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Objective,
    warm_start: Option<Vec<f64>>,
    by_name: HashMap<String, VarId>,
    row_names: HashMap<String, usize>,
}

impl MilpModel {
    pub fn new(name: impl Into<String>, sense: ObjSense) -> Self {
        MilpModel {
            name: name.into(),
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Objective {
                sense,
                terms: Vec::new(),
            },
            warm_start: None,
            by_name: HashMap::new(),
            row_names: HashMap::new(),
        }
    }

    pub fn add_var(
        &mut self,
        role: Role,
        index: &[usize],
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> Result<VarId> {
        if index.len() != role.arity() {
            return Err(Error::Model(format!(
                "{} needs {} indices, got {}",
                role.prefix(),
                role.arity(),
                index.len()
            )));
        }
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::Model(format!(
                "empty domain [{lower}, {upper}] for {}",
                var_name(role, index)
            )));
        }
        let name = var_name(role, index);
        if self.by_name.contains_key(&name) || self.row_names.contains_key(&name) {
            return Err(Error::Model(format!("name collision on {name}")));
        }
        let id = VarId(self.vars.len());
        self.by_name.insert(name.clone(), id);
        self.vars.push(Variable {
            name,
            role,
            index: index.to_vec(),
            kind,
            lower,
            upper,
        });
        Ok(id)
    }

    /// Add a row; repeated variables are merged and zero coefficients dropped.
    pub fn add_constraint(&mut self, mut constraint: Constraint) -> Result<()> {
        if let Some(&(v, _)) = constraint.terms.iter().find(|(v, _)| v.0 >= self.vars.len()) {
            return Err(Error::Model(format!(
                "row {} references undeclared variable {}",
                constraint.name, v.0
            )));
        }
        if !constraint.rhs.is_finite() || constraint.terms.iter().any(|(_, a)| !a.is_finite()) {
            return Err(Error::Model(format!(
                "row {} has a non-finite coefficient",
                constraint.name
            )));
        }
        if self.row_names.contains_key(&constraint.name)
            || self.by_name.contains_key(&constraint.name)
        {
            return Err(Error::Model(format!("name collision on {}", constraint.name)));
        }
        constraint.terms = LinExpr {
            terms: std::mem::take(&mut constraint.terms),
            constant: 0.0,
        }
        .normalized()
        .terms;
        self.row_names
            .insert(constraint.name.clone(), self.constraints.len());
        self.constraints.push(constraint);
        Ok(())
    }

    pub fn set_objective(&mut self, sense: ObjSense, terms: Vec<(VarId, f64)>) {
        let terms = LinExpr { terms, constant: 0.0 }.normalized().terms;
        self.objective = Objective { sense, terms };
    }

    pub fn set_warm_start(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.vars.len() {
            return Err(Error::Dimension {
                what: "warm start values",
                expected: self.vars.len(),
                actual: values.len(),
            });
        }
        self.warm_start = Some(values);
        Ok(())
    }

    pub fn clear_warm_start(&mut self) {
        self.warm_start = None;
    }

    pub fn warm_start(&self) -> Option<&[f64]> {
        self.warm_start.as_deref()
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn lookup_role(&self, role: Role, index: &[usize]) -> Option<VarId> {
        self.lookup(&var_name(role, index))
    }

    pub fn role_count(&self, role: Role) -> usize {
        self.vars.iter().filter(|v| v.role == role).count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective
            .terms
            .iter()
            .map(|&(v, a)| a * values[v.0])
            .sum()
    }

    /// Every bound, integrality and row violation of `values`, using the
    /// absolute tolerance `tol` scaled by `1 + |rhs|` for rows.
    pub fn violations(&self, values: &[f64], tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        for (var, &x) in self.vars.iter().zip(values) {
            if x < var.lower - tol || x > var.upper + tol || !x.is_finite() {
                out.push(Violation::Bound {
                    var: var.name.clone(),
                    value: x,
                });
            }
            if var.kind.is_integral() && (x - x.round()).abs() > tol {
                out.push(Violation::Integrality {
                    var: var.name.clone(),
                    value: x,
                });
            }
        }
        for row in &self.constraints {
            let amount = row.violation(values);
            if amount > tol * (1.0 + row.rhs.abs()) {
                out.push(Violation::Row {
                    name: row.name.clone(),
                    amount,
                });
            }
        }
        out
    }

    pub fn has_row(&self, name: &str) -> bool {
        self.row_names.contains_key(name)
    }

    pub fn is_feasible(&self, values: &[f64], tol: f64) -> bool {
        values.len() == self.vars.len() && self.violations(values, tol).is_empty()
    }

    /// Recompute continuous variables pinned by an equality row whose other
    /// variables are all known, iterating until nothing changes. Integral
    /// variables are left untouched.
    pub fn complete_equalities(&self, values: &mut [f64]) {
        let mut settled: Vec<bool> = self.vars.iter().map(|v| v.kind.is_integral()).collect();
        loop {
            let mut progressed = false;
            for row in self.constraints.iter().filter(|r| r.cmp == Cmp::Eq) {
                let open: Vec<&(VarId, f64)> =
                    row.terms.iter().filter(|(v, _)| !settled[v.0]).collect();
                if open.len() != 1 {
                    continue;
                }
                let &(target, coef) = open[0];
                let rest: f64 = row
                    .terms
                    .iter()
                    .filter(|(v, _)| *v != target)
                    .map(|&(v, a)| a * values[v.0])
                    .sum();
                values[target.0] = (row.rhs - rest) / coef;
                settled[target.0] = true;
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
    }

    /// Structural summary used for equality checks across serializations.
    pub fn structure(&self) -> ModelStructure {
        let mut vars: Vec<(String, VarKind, u64, u64)> = self
            .vars
            .iter()
            .map(|v| (v.name.clone(), v.kind, v.lower.to_bits(), v.upper.to_bits()))
            .collect();
        vars.sort_by(|a, b| a.0.cmp(&b.0));
        let mut rows: Vec<RowStructure> = self
            .constraints
            .iter()
            .map(|c| {
                let mut terms: Vec<(String, u64)> = c
                    .terms
                    .iter()
                    .map(|&(v, a)| (self.vars[v.0].name.clone(), a.to_bits()))
                    .collect();
                terms.sort();
                (c.name.clone(), terms, c.cmp, c.rhs.to_bits())
            })
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut objective: Vec<(String, u64)> = self
            .objective
            .terms
            .iter()
            .map(|&(v, a)| (self.vars[v.0].name.clone(), a.to_bits()))
            .collect();
        objective.sort();
        ModelStructure {
            sense: self.objective.sense,
            objective,
            vars,
            rows,
        }
    }
}

/// A row by name: sorted `(variable, coefficient bits)` terms, sense and
/// right-hand-side bits.
pub type RowStructure = (String, Vec<(String, u64)>, Cmp, u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelStructure {
    pub sense: ObjSense,
    pub objective: Vec<(String, u64)>,
    pub vars: Vec<(String, VarKind, u64, u64)>,
    pub rows: Vec<RowStructure>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for (role, index) in [
            (Role::W, vec![1, 0, 3]),
            (Role::C, vec![12, 2, 0, 1]),
            (Role::Yhat, vec![4, 0]),
            (Role::M, vec![3, 9]),
        ] {
            let name = var_name(role, &index);
            assert_eq!(parse_var_name(&name), Some((role, index)));
        }
        assert_eq!(var_name(Role::W, &[1, 0, 0]), "w_1_0_0");
        assert_eq!(parse_var_name("w_1_0"), None);
        assert_eq!(parse_var_name("w_1_00_0"), None);
        assert_eq!(parse_var_name("z_1_0_0"), None);
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut m = MilpModel::new("t", ObjSense::Maximize);
        m.add_var(Role::Q, &[0, 0], VarKind::Binary, 0.0, 1.0).unwrap();
        assert!(m.add_var(Role::Q, &[0, 0], VarKind::Binary, 0.0, 1.0).is_err());
        let row = Constraint {
            name: "q_0_0".into(),
            terms: vec![],
            cmp: Cmp::Le,
            rhs: 0.0,
        };
        assert!(m.add_constraint(row).is_err());
    }

    #[test]
    fn undeclared_variables_are_rejected() {
        let mut m = MilpModel::new("t", ObjSense::Maximize);
        let row = Constraint {
            name: "r".into(),
            terms: vec![(VarId(3), 1.0)],
            cmp: Cmp::Le,
            rhs: 0.0,
        };
        assert!(m.add_constraint(row).is_err());
    }

    #[test]
    fn violations_and_equality_completion() {
        let mut m = MilpModel::new("t", ObjSense::Minimize);
        let w = m.add_var(Role::W, &[1, 0, 0], VarKind::Integer, -3.0, 3.0).unwrap();
        let c = m
            .add_var(Role::C, &[0, 1, 0, 0], VarKind::Continuous, -30.0, 30.0)
            .unwrap();
        m.add_constraint(Constraint {
            name: "in_0_0_0".into(),
            terms: vec![(c, 1.0), (w, -7.0)],
            cmp: Cmp::Eq,
            rhs: 0.0,
        })
        .unwrap();
        let mut values = vec![2.0, 0.0];
        assert_eq!(m.violations(&values, 1e-6).len(), 1);
        m.complete_equalities(&mut values);
        assert_eq!(values, vec![2.0, 14.0]);
        assert!(m.is_feasible(&values, 1e-6));
        values[0] = 2.5;
        assert!(matches!(
            m.violations(&values, 1e-6)[0],
            Violation::Integrality { .. }
        ));
    }
}
