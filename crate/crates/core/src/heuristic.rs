//! Primal heuristics that hand the MILP stages a good warm start.
//!
//! * [`sat_margin_score`] evaluates the Sat-Margin objective of a weight
//!   assignment directly, without a solver.
//! * [`local_search`] is a seeded hill climb on the weights that drives
//!   every output towards confident correctness.
//! * [`prune_links`] greedily zeroes links while the fixed margins still
//!   hold, giving Min-Weight a sparse feasible start.
//!
//! They never replace the solver: the stages still optimize from these
//! starts and the gateway still audits the result.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::inference::forward;
use crate::milp::{output_scale, Tolerances};
use crate::model::{Architecture, LabeledSample, WeightAssignment};
use crate::train::meets_margins;

/// Sat-Margin objective value of `weights`: the number of confidently
/// correct output bits, or `None` when no completion of the model's
/// indicator variables is feasible.
///
/// A completion exists exactly when no hidden pre-activation lies in
/// `(−ε, 0)`, no scaled output lies strictly between `1/2 − ε̂` and `1/2`,
/// and every sample whose outputs are all confident has its hidden
/// pre-activations outside `(−ε, ε)`.
pub fn sat_margin_score(
    weights: &WeightAssignment,
    data: &[LabeledSample],
    tol: &Tolerances,
) -> Result<Option<usize>> {
    let arch = weights.architecture();
    let mut total = 0;
    for s in data {
        let trace = forward(weights, &s.features)?;
        match sample_score(arch, tol, &trace.pre, &s.targets) {
            Some(n) => total += n,
            None => return Ok(None),
        }
    }
    Ok(Some(total))
}

fn sample_score(arch: &Architecture, tol: &Tolerances, pre: &[Vec<f64>], targets: &[i8]) -> Option<usize> {
    let eps = tol.epsilon();
    let eps_hat = tol.epsilon_hat(arch);
    let scale = output_scale(arch);
    let depth = arch.depth();
    let hidden = &pre[..depth - 1];
    if hidden.iter().flatten().any(|&p| p < 0.0 && p > -eps) {
        return None;
    }
    let mut confident = 0;
    for (j, &y) in targets.iter().enumerate() {
        let v = f64::from(y) * scale * pre[depth - 1][j];
        if v > 0.5 - eps_hat && v < 0.5 {
            return None;
        }
        if v >= 0.5 {
            confident += 1;
        }
    }
    if confident == targets.len() && hidden.iter().flatten().any(|&p| p.abs() < eps) {
        return None;
    }
    Some(confident)
}

/// Per-sample cached pre-activations for incremental moves.
struct SearchState<'a> {
    arch: &'a Architecture,
    data: &'a [LabeledSample],
    weights: WeightAssignment,
    /// `first[k][j]`: first-layer pre-activation of sample `k`
    first: Vec<Vec<f64>>,
    scale: f64,
    eps: f64,
}

impl<'a> SearchState<'a> {
    fn new(weights: WeightAssignment, data: &'a [LabeledSample], arch: &'a Architecture, eps: f64) -> Result<Self> {
        let first = data
            .iter()
            .map(|s| forward(&weights, &s.features).map(|t| t.pre[0].clone()))
            .collect::<Result<_>>()?;
        Ok(SearchState {
            arch,
            data,
            weights,
            first,
            scale: output_scale(arch),
            eps,
        })
    }

    /// Pre-activations of every layer given the first layer's.
    fn upper_layers(&self, first: &[f64]) -> Vec<Vec<f64>> {
        let mut pre = vec![first.to_vec()];
        for l in 2..=self.arch.depth() {
            let width = self.arch.width(l);
            let w = self.weights.layer(l);
            let prev = &pre[l - 2];
            let mut sums = vec![0.0; width];
            for (i, &p) in prev.iter().enumerate() {
                let z = if p >= 0.0 { 1 } else { -1 };
                for (j, s) in sums.iter_mut().enumerate() {
                    *s += f64::from(z * w[i * width + j]);
                }
            }
            pre.push(sums);
        }
        pre
    }

    /// Smooth search objective for one sample: capped signed outputs, with
    /// a small penalty for hidden pre-activations inside `(−ε, ε)`.
    fn fitness_of(&self, pre: &[Vec<f64>], targets: &[i8]) -> f64 {
        let depth = self.arch.depth();
        let mut f = 0.0;
        for (j, &y) in targets.iter().enumerate() {
            f += (f64::from(y) * self.scale * pre[depth - 1][j]).min(1.0);
        }
        for p in pre[..depth - 1].iter().flatten() {
            if p.abs() < self.eps {
                f -= 0.25;
            }
        }
        f
    }

    fn fitness(&self) -> f64 {
        self.data
            .iter()
            .zip(&self.first)
            .map(|(s, first)| self.fitness_of(&self.upper_layers(first), &s.targets))
            .sum()
    }
}

/// Seeded hill climb over single-weight changes, starting from `start`.
/// Sideways moves are accepted. Returns the best assignment by
/// [`sat_margin_score`] seen, and stops early once every bit is confident.
pub fn local_search(
    start: &WeightAssignment,
    data: &[LabeledSample],
    tol: &Tolerances,
    max_moves: usize,
    seed: u64,
) -> Result<WeightAssignment> {
    let arch = start.architecture().clone();
    let target = data.len() * arch.output_width();
    let mut best = start.clone();
    let mut best_score = sat_margin_score(start, data, tol)?;
    if data.is_empty() || best_score == Some(target) {
        return Ok(best);
    }
    let mut state = SearchState::new(start.clone(), data, &arch, tol.epsilon())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = arch.weight_bound();

    // only inputs that are nonzero somewhere can change anything
    let active_inputs: Vec<usize> = (0..arch.input_width())
        .filter(|&i| data.iter().any(|s| s.features[i] != 0.0))
        .collect();
    let first_links = active_inputs.len() * arch.width(1);
    let upper_links: usize = (2..=arch.depth()).map(|l| arch.links_into(l)).sum();
    if first_links + upper_links == 0 {
        return Ok(best);
    }

    let mut fitness = state.fitness();
    let check_every = 64;
    for step in 0..max_moves {
        let pick = rng.gen_range(0..first_links + upper_links);
        let (l, i, j) = if pick < first_links {
            (1, active_inputs[pick / arch.width(1)], pick % arch.width(1))
        } else {
            let mut r = pick - first_links;
            let mut l = 2;
            while r >= arch.links_into(l) {
                r -= arch.links_into(l);
                l += 1;
            }
            (l, r / arch.width(l), r % arch.width(l))
        };
        let old = state.weights.get(l, i, j);
        let mut new = rng.gen_range(-p..p);
        if new >= old {
            new += 1;
        }
        state.weights.set(l, i, j, new)?;
        let delta = f64::from(new - old);
        let new_fitness: f64 = if l == 1 {
            data.iter()
                .zip(&state.first)
                .map(|(s, first)| {
                    let mut f = first.clone();
                    f[j] += s.features[i] * delta;
                    state.fitness_of(&state.upper_layers(&f), &s.targets)
                })
                .sum()
        } else {
            state.fitness()
        };
        if new_fitness >= fitness {
            fitness = new_fitness;
            if l == 1 {
                for (s, first) in data.iter().zip(state.first.iter_mut()) {
                    first[j] += s.features[i] * delta;
                }
            }
        } else {
            state.weights.set(l, i, j, old)?;
        }
        if step % check_every == 0 || step + 1 == max_moves {
            let score = sat_margin_score(&state.weights, data, tol)?;
            if score > best_score {
                best_score = score;
                best = state.weights.clone();
                if best_score == Some(target) {
                    break;
                }
            }
        }
    }
    log::debug!("local search reached score {best_score:?} of {target}");
    Ok(best)
}

/// Greedily zero links of `weights` (in a seeded order) as long as the
/// samples `ids` keep at least `margins`.
pub fn prune_links(
    weights: &WeightAssignment,
    data: &[LabeledSample],
    ids: &[usize],
    margins: &[Vec<f64>],
    seed: u64,
) -> Result<WeightAssignment> {
    let mut current = weights.clone();
    if !meets_margins(&current, data, ids, margins)? {
        return Ok(current);
    }
    let mut links: Vec<(usize, usize, usize)> = current
        .iter()
        .filter(|&(_, _, _, w)| w != 0)
        .map(|(l, i, j, _)| (l, i, j))
        .collect();
    use rand::seq::SliceRandom;
    links.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (l, i, j) in links {
        let old = current.get(l, i, j);
        current.set(l, i, j, 0)?;
        if !meets_margins(&current, data, ids, margins)? {
            current.set(l, i, j, old)?;
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::new(0.1).unwrap()
    }

    #[test]
    fn zero_network_scores_zero() {
        let arch = Architecture::new(vec![2, 2, 1], 1).unwrap();
        let data = vec![LabeledSample::new(vec![3.0, 1.0], vec![1]).unwrap()];
        assert_eq!(
            sat_margin_score(&WeightAssignment::zeros(&arch), &data, &tol()).unwrap(),
            Some(0)
        );
    }

    #[test]
    fn confident_sample_with_tied_hidden_neuron_is_infeasible() {
        // hidden neuron 1 has zero weights, so its pre-activation is exactly 0
        let arch = Architecture::new(vec![1, 2, 1], 1).unwrap();
        let w = WeightAssignment::from_layers(&arch, vec![vec![1, 0], vec![1, 1]]).unwrap();
        let data = vec![LabeledSample::new(vec![2.0], vec![1]).unwrap()];
        assert_eq!(sat_margin_score(&w, &data, &tol()).unwrap(), None);
    }

    #[test]
    fn local_search_separates_two_points() {
        let arch = Architecture::new(vec![2, 2, 1], 1).unwrap();
        let data = vec![
            LabeledSample::new(vec![3.0, 0.0], vec![1]).unwrap(),
            LabeledSample::new(vec![0.0, 3.0], vec![-1]).unwrap(),
        ];
        let w = local_search(&WeightAssignment::zeros(&arch), &data, &tol(), 5_000, 1).unwrap();
        assert_eq!(sat_margin_score(&w, &data, &tol()).unwrap(), Some(2));
    }

    #[test]
    fn pruning_keeps_margins() {
        let arch = Architecture::new(vec![2, 1], 1).unwrap();
        let w = WeightAssignment::from_flat(&arch, &[1, 1]).unwrap();
        let data = vec![LabeledSample::new(vec![2.0, 0.0], vec![1]).unwrap()];
        let pruned = prune_links(&w, &data, &[0], &[vec![1.0]], 0).unwrap();
        assert_eq!(pruned.flat(), vec![1, 0]);
    }
}
