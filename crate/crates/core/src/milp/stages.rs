//! Sat-Margin, Max-Margin and Min-Weight models over a training set.
//!
//! Sample `k` in every variable and row name is the sample's position in the
//! full training list, so warm starts and incumbents line up across stages
//! that see different subsets.
//!
//! Shared structure for each sample `k` and layer `l`:
//!
//! * `c_{k,1,i,j} = x_i · w_{1,i,j}` as an equality row (fixed at zero when `x_i = 0`),
//! * `c_{k,l,i,j} = (2u_{k,l-1,i} − 1) · w_{l,i,j}` for `l ≥ 2` via four big-M rows,
//! * the pre-activation of neuron `(l, j)` is `Σ_i c_{k,l,i,j}`.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::linearize::{linearize_bilinear, linearize_indicator, Implication};
use super::{Cmp, Constraint, LinExpr, MilpModel, ObjSense, Role, VarId, VarKind};
use crate::error::{Error, Result};
use crate::inference::{forward, ActivationTrace};
use crate::model::{compute_data_bound, Architecture, LabeledSample, WeightAssignment};

/// Strict-inequality offset for integer-valued data.
pub const DEFAULT_EPSILON_INTEGER: f64 = 0.1;
/// Strict-inequality offset for continuous data.
pub const DEFAULT_EPSILON_CONTINUOUS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    epsilon: f64,
}

impl Tolerances {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Tolerances { epsilon })
    }

    /// Default offset keyed on whether every feature is an integer.
    pub fn for_data(samples: &[LabeledSample]) -> Self {
        Self::for_features(samples.iter().flat_map(|s| s.features.iter()))
    }

    /// Default offset for the given feature values.
    pub fn for_features<'a>(features: impl IntoIterator<Item = &'a f64>) -> Self {
        let integral = features.into_iter().all(|x| x.fract() == 0.0);
        Tolerances {
            epsilon: if integral {
                DEFAULT_EPSILON_INTEGER
            } else {
                DEFAULT_EPSILON_CONTINUOUS
            },
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `ε / (2P·(n_{L−1} + 1))`, the offset on the scaled output.
    pub fn epsilon_hat(&self, arch: &Architecture) -> f64 {
        let p = f64::from(arch.weight_bound());
        let n_prev = arch.width(arch.depth() - 1) as f64;
        self.epsilon / (2.0 * p * (n_prev + 1.0))
    }
}

/// Scale `2 / (P·(n_{L−1} + 1))` linking the last-layer sum to `ŷ`.
pub fn output_scale(arch: &Architecture) -> f64 {
    let p = f64::from(arch.weight_bound());
    let n_prev = arch.width(arch.depth() - 1) as f64;
    2.0 / (p * (n_prev + 1.0))
}

/// Bound on `|Σ_i c_{k,l,i,j}|` from the variable domains: `n_0·P·𝔟` for the
/// first layer and `n_{l−1}·P` afterwards.
pub fn layer_box(arch: &Architecture, l: usize, data_bound: f64) -> f64 {
    let p = f64::from(arch.weight_bound());
    let n_prev = arch.width(l - 1) as f64;
    if l == 1 {
        n_prev * p * data_bound
    } else {
        n_prev * p
    }
}

/// Per-sample bound `P·Σ_i |x_i|` on a first-layer pre-activation.
pub fn first_layer_box(arch: &Architecture, x: &[f64]) -> f64 {
    f64::from(arch.weight_bound()) * x.iter().map(|v| v.abs()).sum::<f64>()
}

fn sample_box(arch: &Architecture, l: usize, x: &[f64]) -> f64 {
    if l == 1 {
        first_layer_box(arch, x)
    } else {
        layer_box(arch, l, 0.0)
    }
}

fn validate(arch: &Architecture, data: &[LabeledSample], ids: &[usize]) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::invalid("a training model needs at least one sample"));
    }
    for &k in ids {
        let sample = data
            .get(k)
            .ok_or_else(|| Error::invalid(format!("sample index {k} is out of range")))?;
        sample.check_dims(arch)?;
    }
    Ok(())
}

struct SampleVars {
    k: usize,
    /// `u[l - 1][j]` for hidden layers
    u: Vec<Vec<VarId>>,
    /// `pre[l - 1][j] = Σ_i c_{k,l,i,j}`
    pre: Vec<Vec<LinExpr>>,
    /// `out[j] = Σ_i c_{k,L,i,j}` (same as the last entry of `pre`)
    out: Vec<LinExpr>,
}

struct Core {
    samples: Vec<SampleVars>,
    weights: Vec<Vec<VarId>>,
    data_bound: f64,
}

fn add_core(
    model: &mut MilpModel,
    arch: &Architecture,
    data: &[LabeledSample],
    ids: &[usize],
) -> Result<Core> {
    let selected: Vec<LabeledSample> = ids.iter().map(|&k| data[k].clone()).collect();
    let data_bound = compute_data_bound(&selected)?.value();
    let p = f64::from(arch.weight_bound());
    let depth = arch.depth();

    let mut weights = Vec::with_capacity(depth);
    for l in 1..=depth {
        let mut layer = Vec::with_capacity(arch.links_into(l));
        for i in 0..arch.width(l - 1) {
            for j in 0..arch.width(l) {
                layer.push(model.add_var(Role::W, &[l, i, j], VarKind::Integer, -p, p)?);
            }
        }
        weights.push(layer);
    }
    let w = |l: usize, i: usize, j: usize| weights[l - 1][i * arch.width(l) + j];

    let mut samples = Vec::with_capacity(ids.len());
    for &k in ids {
        let x = &data[k].features;
        let mut u = Vec::new();
        for l in 1..depth {
            let mut layer = Vec::with_capacity(arch.width(l));
            for j in 0..arch.width(l) {
                layer.push(model.add_var(Role::U, &[k, l, j], VarKind::Binary, 0.0, 1.0)?);
            }
            u.push(layer);
        }
        let mut pre = Vec::with_capacity(depth);
        for l in 1..=depth {
            let mut sums = vec![LinExpr::new(); arch.width(l)];
            for i in 0..arch.width(l - 1) {
                for (j, sum) in sums.iter_mut().enumerate() {
                    let c = if l == 1 {
                        // |c| ≤ P·|x_i| ≤ P·𝔟; a zero feature pins c to zero
                        let bound = p * x[i].abs();
                        let c = model.add_var(
                            Role::C,
                            &[k, l, i, j],
                            VarKind::Continuous,
                            -bound,
                            bound,
                        )?;
                        if x[i] != 0.0 {
                            model.add_constraint(Constraint {
                                name: format!("in_{k}_{i}_{j}"),
                                terms: vec![(c, 1.0), (w(l, i, j), -x[i])],
                                cmp: Cmp::Eq,
                                rhs: 0.0,
                            })?;
                        }
                        c
                    } else {
                        let c = model.add_var(Role::C, &[k, l, i, j], VarKind::Integer, -p, p)?;
                        for row in linearize_bilinear(
                            &format!("bil_{k}_{l}_{i}_{j}"),
                            c,
                            u[l - 2][i],
                            w(l, i, j),
                            arch.weight_bound(),
                        ) {
                            model.add_constraint(row)?;
                        }
                        c
                    };
                    sum.add(c, 1.0);
                }
            }
            pre.push(sums);
        }
        let out = pre[depth - 1].clone();
        samples.push(SampleVars { k, u, pre, out });
    }
    Ok(Core {
        samples,
        weights,
        data_bound,
    })
}

/// Sat-Margin: maximize the number of confidently correct output bits.
///
/// Besides the activation indicators, every hidden neuron of a sample whose
/// output bits are all confident must clear zero by `ε`, so that samples kept
/// for the margin stages carry no activation ties.
#[allow(clippy::needless_range_loop)]
pub fn build_sm(
    arch: &Architecture,
    data: &[LabeledSample],
    tol: &Tolerances,
) -> Result<MilpModel> {
    let ids: Vec<usize> = (0..data.len()).collect();
    validate(arch, data, &ids)?;
    let eps = tol.epsilon();
    let eps_hat = tol.epsilon_hat(arch);
    let scale = output_scale(arch);
    let depth = arch.depth();
    let n_out = arch.output_width();

    let mut model = MilpModel::new("sat_margin", ObjSense::Maximize);
    let core = add_core(&mut model, arch, data, &ids)?;
    let mut objective = Vec::new();

    for sv in &core.samples {
        let k = sv.k;
        let x = &data[k].features;
        let q: Vec<VarId> = (0..n_out)
            .map(|j| model.add_var(Role::Q, &[k, j], VarKind::Binary, 0.0, 1.0))
            .collect::<Result<_>>()?;
        objective.extend(q.iter().map(|&v| (v, 1.0)));

        for l in 1..depth {
            let big_m = sample_box(arch, l, x) + eps;
            for j in 0..arch.width(l) {
                let u = sv.u[l - 1][j];
                let expr = &sv.pre[l - 1][j];
                for row in linearize_indicator(&format!("act_{k}_{l}_{j}"), u, expr, 0.0, eps, big_m)? {
                    model.add_constraint(row)?;
                }
                let mut lhs = expr.clone();
                for &qj in &q {
                    lhs.add(qj, -eps);
                }
                let tie = Implication {
                    indicator: u,
                    active_when: true,
                    lhs,
                    cmp: Cmp::Ge,
                    rhs: LinExpr::constant(-eps * (n_out as f64 - 1.0)),
                };
                model.add_constraint(tie.linearize(format!("tie_{k}_{l}_{j}"), big_m)?)?;
            }
        }

        let yhat_max = scale * sample_box(arch, depth, x);
        for j in 0..n_out {
            let y = f64::from(data[k].targets[j]);
            let yhat = model.add_var(Role::Yhat, &[k, j], VarKind::Continuous, -yhat_max, yhat_max)?;
            let mut pred = LinExpr::term(yhat, 1.0);
            pred.extend(&sv.out[j], -scale);
            model.add_constraint(Constraint::from_exprs(
                format!("pred_{k}_{j}"),
                &pred,
                Cmp::Eq,
                &LinExpr::new(),
            ))?;
            let signed = LinExpr::term(yhat, y);
            let on = Implication {
                indicator: q[j],
                active_when: true,
                lhs: signed.clone(),
                cmp: Cmp::Ge,
                rhs: LinExpr::constant(0.5),
            };
            model.add_constraint(on.linearize(format!("sat_{k}_{j}_on"), 0.5 + yhat_max)?)?;
            let off = Implication {
                indicator: q[j],
                active_when: false,
                lhs: signed,
                cmp: Cmp::Le,
                rhs: LinExpr::constant(0.5 - eps_hat),
            };
            let big_m = (yhat_max - 0.5 + eps_hat).max(eps_hat);
            model.add_constraint(off.linearize(format!("sat_{k}_{j}_off"), big_m)?)?;
        }
    }
    model.set_objective(ObjSense::Maximize, objective);
    Ok(model)
}

/// Margin constraints shared by MM (variable margins) and MW (fixed margins).
fn add_margin_rows(
    model: &mut MilpModel,
    arch: &Architecture,
    data: &[LabeledSample],
    core: &Core,
    margin: &dyn Fn(usize, usize) -> (LinExpr, f64),
) -> Result<()> {
    let depth = arch.depth();
    for sv in &core.samples {
        let k = sv.k;
        let x = &data[k].features;
        for l in 1..depth {
            for j in 0..arch.width(l) {
                let (m, m_upper) = margin(l, j);
                let big_m = sample_box(arch, l, x) + m_upper;
                let expr = &sv.pre[l - 1][j];
                let on = Implication {
                    indicator: sv.u[l - 1][j],
                    active_when: true,
                    lhs: expr.clone(),
                    cmp: Cmp::Ge,
                    rhs: m.clone(),
                };
                model.add_constraint(on.linearize(format!("mon_{k}_{l}_{j}"), big_m)?)?;
                let mut neg = LinExpr::new();
                neg.extend(&m, -1.0);
                let off = Implication {
                    indicator: sv.u[l - 1][j],
                    active_when: false,
                    lhs: expr.clone(),
                    cmp: Cmp::Le,
                    rhs: neg,
                };
                model.add_constraint(off.linearize(format!("moff_{k}_{l}_{j}"), big_m)?)?;
            }
        }
        for j in 0..arch.output_width() {
            let y = f64::from(data[k].targets[j]);
            let mut signed = LinExpr::new();
            signed.extend(&sv.out[j], y);
            let (m, _) = margin(depth, j);
            model.add_constraint(Constraint::from_exprs(
                format!("mout_{k}_{j}"),
                &signed,
                Cmp::Ge,
                &m,
            ))?;
        }
    }
    Ok(())
}

/// Max-Margin over the confidently classified samples `t_hat`.
pub fn build_mm(
    arch: &Architecture,
    data: &[LabeledSample],
    t_hat: &[usize],
    tol: &Tolerances,
) -> Result<MilpModel> {
    validate(arch, data, t_hat)?;
    let eps = tol.epsilon();
    let mut model = MilpModel::new("max_margin", ObjSense::Maximize);
    let core = add_core(&mut model, arch, data, t_hat)?;

    let mut margins = Vec::with_capacity(arch.depth());
    let mut objective = Vec::new();
    for l in 1..=arch.depth() {
        let upper = layer_box(arch, l, core.data_bound);
        let mut layer = Vec::with_capacity(arch.width(l));
        for j in 0..arch.width(l) {
            let m = model.add_var(Role::M, &[l, j], VarKind::Continuous, eps, upper)?;
            objective.push((m, 1.0));
            layer.push((m, upper));
        }
        margins.push(layer);
    }
    add_margin_rows(&mut model, arch, data, &core, &|l, j| {
        let (m, upper) = margins[l - 1][j];
        (LinExpr::term(m, 1.0), upper)
    })?;
    model.set_objective(ObjSense::Maximize, objective);
    Ok(model)
}

/// Min-Weight over `t_hat` with the margins fixed to `fixed_margins[l - 1][j]`.
pub fn build_mw(
    arch: &Architecture,
    data: &[LabeledSample],
    t_hat: &[usize],
    fixed_margins: &[Vec<f64>],
    tol: &Tolerances,
) -> Result<MilpModel> {
    validate(arch, data, t_hat)?;
    check_margin_shape(arch, fixed_margins)?;
    let eps = tol.epsilon();
    for (idx, layer) in fixed_margins.iter().enumerate() {
        if let Some((j, m)) = layer.iter().enumerate().find(|(_, &m)| m.is_nan() || m < eps) {
            return Err(Error::invalid(format!(
                "fixed margin {m} of neuron ({}, {j}) is below epsilon {eps}",
                idx + 1
            )));
        }
    }
    let mut model = MilpModel::new("min_weight", ObjSense::Minimize);
    let core = add_core(&mut model, arch, data, t_hat)?;
    add_margin_rows(&mut model, arch, data, &core, &|l, j| {
        let m = fixed_margins[l - 1][j];
        (LinExpr::constant(m), m)
    })?;

    let p = f64::from(arch.weight_bound());
    let mut objective = Vec::new();
    for l in 1..=arch.depth() {
        for i in 0..arch.width(l - 1) {
            for j in 0..arch.width(l) {
                let v = model.add_var(Role::V, &[l, i, j], VarKind::Binary, 0.0, 1.0)?;
                let w = core.weights[l - 1][i * arch.width(l) + j];
                objective.push((v, 1.0));
                model.add_constraint(Constraint {
                    name: format!("lnk_{l}_{i}_{j}_lo"),
                    terms: vec![(w, 1.0), (v, p)],
                    cmp: Cmp::Ge,
                    rhs: 0.0,
                })?;
                model.add_constraint(Constraint {
                    name: format!("lnk_{l}_{i}_{j}_hi"),
                    terms: vec![(w, 1.0), (v, -p)],
                    cmp: Cmp::Le,
                    rhs: 0.0,
                })?;
            }
        }
    }
    model.set_objective(ObjSense::Minimize, objective);
    Ok(model)
}

fn check_margin_shape(arch: &Architecture, margins: &[Vec<f64>]) -> Result<()> {
    if margins.len() != arch.depth() {
        return Err(Error::Dimension {
            what: "margin layers",
            expected: arch.depth(),
            actual: margins.len(),
        });
    }
    for (idx, layer) in margins.iter().enumerate() {
        if layer.len() != arch.width(idx + 1) {
            return Err(Error::Dimension {
                what: "margins in layer",
                expected: arch.width(idx + 1),
                actual: layer.len(),
            });
        }
    }
    Ok(())
}

/// Margins realised by `weights` on the samples `ids`: the smallest `|pre|`
/// of each hidden neuron and the smallest `y·pre` of each output neuron.
// indices address the trace, the targets and the margins alike
#[allow(clippy::needless_range_loop)]
pub fn implied_margins(
    weights: &WeightAssignment,
    data: &[LabeledSample],
    ids: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let arch = weights.architecture();
    let depth = arch.depth();
    let mut margins: Vec<Vec<f64>> = (1..=depth)
        .map(|l| vec![f64::INFINITY; arch.width(l)])
        .collect();
    for &k in ids {
        let trace = forward(weights, &data[k].features)?;
        for l in 1..=depth {
            for j in 0..arch.width(l) {
                let pre = trace.pre_activation(l, j);
                let value = if l == depth {
                    f64::from(data[k].targets[j]) * pre
                } else {
                    pre.abs()
                };
                let slot = &mut margins[l - 1][j];
                *slot = slot.min(value);
            }
        }
    }
    Ok(margins)
}

/// Full variable assignment of `model` induced by `weights`: every derived
/// variable is recomputed by a forward pass. Margin variables take
/// `margins` when given and the implied margins otherwise, clamped into
/// their domains.
pub fn assignment_from_weights(
    model: &MilpModel,
    data: &[LabeledSample],
    weights: &WeightAssignment,
    margins: Option<&[Vec<f64>]>,
) -> Result<Vec<f64>> {
    let arch = weights.architecture();
    let depth = arch.depth();
    let scale = output_scale(arch);
    let mut traces: HashMap<usize, ActivationTrace> = HashMap::new();
    for var in model.vars() {
        if matches!(var.role, Role::U | Role::C | Role::Q | Role::Yhat) {
            let k = var.index[0];
            if let Entry::Vacant(slot) = traces.entry(k) {
                let sample = data
                    .get(k)
                    .ok_or_else(|| Error::invalid(format!("sample index {k} is out of range")))?;
                slot.insert(forward(weights, &sample.features)?);
            }
        }
    }
    let implied = match margins {
        Some(_) => None,
        None if model.role_count(Role::M) > 0 => {
            let mut ids: Vec<usize> = traces.keys().copied().collect();
            ids.sort_unstable();
            Some(implied_margins(weights, data, &ids)?)
        }
        None => None,
    };

    let mut values = Vec::with_capacity(model.vars().len());
    for var in model.vars() {
        let ix = &var.index;
        let value = match var.role {
            Role::W => f64::from(weights.get(ix[0], ix[1], ix[2])),
            Role::U => {
                if traces[&ix[0]].activation(ix[1], ix[2]) > 0 {
                    1.0
                } else {
                    0.0
                }
            }
            Role::C => {
                let (k, l, i, j) = (ix[0], ix[1], ix[2], ix[3]);
                let w = f64::from(weights.get(l, i, j));
                if l == 1 {
                    data[k].features[i] * w
                } else {
                    f64::from(traces[&k].activation(l - 1, i)) * w
                }
            }
            Role::Q => {
                let (k, j) = (ix[0], ix[1]);
                let y = f64::from(data[k].targets[j]);
                let yhat = scale * traces[&k].pre_activation(depth, j);
                if y * yhat >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            Role::Yhat => scale * traces[&ix[0]].pre_activation(depth, ix[1]),
            Role::M => {
                let m = match (margins, &implied) {
                    (Some(given), _) => given[ix[0] - 1][ix[1]],
                    (None, Some(implied)) => implied[ix[0] - 1][ix[1]],
                    (None, None) => var.lower,
                };
                m.clamp(var.lower, var.upper)
            }
            Role::V => {
                if weights.get(ix[0], ix[1], ix[2]) != 0 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        values.push(value);
    }
    Ok(values)
}

/// Weights held by an incumbent, rounded to the nearest integer.
pub fn extract_weights(
    model: &MilpModel,
    values: &[f64],
    arch: &Architecture,
) -> Result<WeightAssignment> {
    let mut weights = WeightAssignment::zeros(arch);
    for (l, i, j, _) in WeightAssignment::zeros(arch).iter() {
        let id = model
            .lookup_role(Role::W, &[l, i, j])
            .ok_or_else(|| Error::Model(format!("model has no weight ({l}, {i}, {j})")))?;
        let w = values[id.0].round() as i32;
        weights.set(l, i, j, w)?;
    }
    Ok(weights)
}

/// Margin variable values `m[l - 1][j]` of an incumbent.
pub fn extract_margins(
    model: &MilpModel,
    values: &[f64],
    arch: &Architecture,
) -> Result<Vec<Vec<f64>>> {
    (1..=arch.depth())
        .map(|l| {
            (0..arch.width(l))
                .map(|j| {
                    model
                        .lookup_role(Role::M, &[l, j])
                        .map(|id| values[id.0])
                        .ok_or_else(|| Error::Model(format!("model has no margin ({l}, {j})")))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (Architecture, Vec<LabeledSample>) {
        let arch = Architecture::new(vec![2, 2, 1], 1).unwrap();
        let data = vec![LabeledSample::new(vec![3.0, -1.0], vec![1]).unwrap()];
        (arch, data)
    }

    #[test]
    fn sm_variable_counts_on_tiny_instance() {
        let (arch, data) = tiny();
        let model = build_sm(&arch, &data, &Tolerances::new(0.1).unwrap()).unwrap();
        assert_eq!(model.role_count(Role::W), 6);
        assert_eq!(model.role_count(Role::U), 2);
        assert_eq!(model.role_count(Role::Q), 1);
        assert_eq!(model.role_count(Role::Yhat), 1);
        assert_eq!(model.role_count(Role::C), 6);
        assert_eq!(model.objective().sense, ObjSense::Maximize);
    }

    #[test]
    fn sm_on_mnist_shape_has_all_links() {
        let arch = Architecture::new(vec![784, 4, 4, 1], 1).unwrap();
        let data = vec![LabeledSample::new(vec![1.0; 784], vec![-1]).unwrap()];
        let model = build_sm(&arch, &data, &Tolerances::new(0.1).unwrap()).unwrap();
        assert_eq!(model.role_count(Role::W), 3156);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let (arch, _) = tiny();
        assert!(build_sm(&arch, &[], &Tolerances::new(0.1).unwrap()).is_err());
        assert!(build_mm(&arch, &tiny().1, &[], &Tolerances::new(0.1).unwrap()).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (arch, _) = tiny();
        let data = vec![LabeledSample::new(vec![1.0, 2.0, 3.0], vec![1]).unwrap()];
        assert!(build_sm(&arch, &data, &Tolerances::new(0.1).unwrap()).is_err());
    }

    #[test]
    fn epsilon_hat_and_scale() {
        let arch = Architecture::new(vec![784, 4, 4, 1], 1).unwrap();
        let tol = Tolerances::new(0.1).unwrap();
        assert!((tol.epsilon_hat(&arch) - 0.01).abs() < 1e-15);
        assert!((output_scale(&arch) - 0.4).abs() < 1e-15);
        assert!(Tolerances::new(0.0).is_err());
    }

    #[test]
    fn mm_margin_variables_and_bounds() {
        let arch = Architecture::new(vec![784, 4, 4, 1], 1).unwrap();
        let data = vec![LabeledSample::new(vec![2.0; 784], vec![1]).unwrap()];
        let model = build_mm(&arch, &data, &[0], &Tolerances::new(0.1).unwrap()).unwrap();
        assert_eq!(model.role_count(Role::M), 9);
        for var in model.vars().iter().filter(|v| v.role == Role::M) {
            assert_eq!(var.lower, 0.1);
        }
    }

    #[test]
    fn mw_has_one_link_indicator_per_weight() {
        let arch = Architecture::new(vec![784, 10, 3, 1], 1).unwrap();
        let data = vec![LabeledSample::new(vec![2.0; 784], vec![1]).unwrap()];
        let margins = vec![vec![0.1; 10], vec![0.1; 3], vec![0.1]];
        let model =
            build_mw(&arch, &data, &[0], &margins, &Tolerances::new(0.1).unwrap()).unwrap();
        assert_eq!(model.role_count(Role::V), 7873);
        assert_eq!(model.objective().sense, ObjSense::Minimize);
    }

    #[test]
    fn mw_rejects_margins_below_epsilon() {
        let (arch, data) = tiny();
        let margins = vec![vec![0.1, 0.05], vec![0.1]];
        assert!(build_mw(&arch, &data, &[0], &margins, &Tolerances::new(0.1).unwrap()).is_err());
    }

    #[test]
    fn zero_weights_are_a_feasible_sm_start() {
        let (arch, data) = tiny();
        let model = build_sm(&arch, &data, &Tolerances::new(0.1).unwrap()).unwrap();
        let values =
            assignment_from_weights(&model, &data, &WeightAssignment::zeros(&arch), None).unwrap();
        assert!(model.is_feasible(&values, 1e-9));
        assert_eq!(model.objective_value(&values), 0.0);
    }

    #[test]
    fn link_coupling_forces_zero_weight() {
        let (arch, data) = tiny();
        let margins = vec![vec![0.1, 0.1], vec![0.1]];
        let model =
            build_mw(&arch, &data, &[0], &margins, &Tolerances::new(0.1).unwrap()).unwrap();
        let w = model.lookup_role(Role::W, &[1, 0, 0]).unwrap();
        let v = model.lookup_role(Role::V, &[1, 0, 0]).unwrap();
        let rows: Vec<_> = model
            .constraints()
            .iter()
            .filter(|r| r.name.starts_with("lnk_1_0_0"))
            .collect();
        assert_eq!(rows.len(), 2);
        let mut values = vec![0.0; model.vars().len()];
        values[w.0] = 1.0;
        values[v.0] = 0.0;
        assert!(rows.iter().any(|r| r.violation(&values) > 0.0));
        values[v.0] = 1.0;
        assert!(rows.iter().all(|r| r.violation(&values) == 0.0));
    }
}
