//! Exact forward pass with sign activations and output decoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{MilpModel, Role};
use crate::model::{ClassEncoding, ClassId, WeightAssignment};

/// Activations and pre-activations of every weighted layer for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationTrace {
    /// `pre[l - 1][j] = Σ_i z_{l-1,i} · w_{i,l,j}`
    pub pre: Vec<Vec<f64>>,
    /// `z[l - 1][j] = ρ(pre)`, exactly ±1
    pub z: Vec<Vec<i8>>,
}

impl ActivationTrace {
    pub fn output(&self) -> &[i8] {
        self.z.last().expect("at least one weighted layer")
    }

    pub fn pre_activation(&self, l: usize, j: usize) -> f64 {
        self.pre[l - 1][j]
    }

    pub fn activation(&self, l: usize, j: usize) -> i8 {
        self.z[l - 1][j]
    }
}

/// `ρ(x) = 2·1(x ≥ 0) − 1`; zero maps to +1.
#[inline]
pub fn sign_activation(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

pub fn forward(net: &WeightAssignment, x: &[f64]) -> Result<ActivationTrace> {
    let arch = net.architecture();
    if x.len() != arch.input_width() {
        return Err(Error::Dimension {
            what: "input features",
            expected: arch.input_width(),
            actual: x.len(),
        });
    }
    let mut pre = Vec::with_capacity(arch.depth());
    let mut z: Vec<Vec<i8>> = Vec::with_capacity(arch.depth());
    for l in 1..=arch.depth() {
        let width = arch.width(l);
        let weights = net.layer(l);
        let mut sums = vec![0.0; width];
        if l == 1 {
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &weights[i * width..(i + 1) * width];
                for (s, &w) in sums.iter_mut().zip(row) {
                    *s += xi * f64::from(w);
                }
            }
        } else {
            let prev = &z[l - 2];
            for (i, &zi) in prev.iter().enumerate() {
                let row = &weights[i * width..(i + 1) * width];
                for (s, &w) in sums.iter_mut().zip(row) {
                    *s += f64::from(i32::from(zi) * w);
                }
            }
        }
        z.push(sums.iter().map(|&s| sign_activation(s)).collect());
        pre.push(sums);
    }
    Ok(ActivationTrace { pre, z })
}

/// Output bits of the network for `x`.
pub fn predict_bits(net: &WeightAssignment, x: &[f64]) -> Result<Vec<i8>> {
    Ok(forward(net, x)?.output().to_vec())
}

/// Class for an output pattern, `None` for unassigned patterns.
pub fn decode(bits: &[i8], enc: &ClassEncoding) -> Option<ClassId> {
    enc.decode(bits)
}

pub fn classify(net: &WeightAssignment, enc: &ClassEncoding, x: &[f64]) -> Result<Option<ClassId>> {
    Ok(decode(forward(net, x)?.output(), enc))
}

/// Check that the `u` and `c` values an incumbent holds for sample `k` agree
/// with the ones recomputed from `trace` and the weights.
#[allow(clippy::needless_range_loop)]
pub fn verify_against_milp(
    net: &WeightAssignment,
    x: &[f64],
    trace: &ActivationTrace,
    model: &MilpModel,
    values: &[f64],
    k: usize,
) -> Result<bool> {
    let arch = net.architecture();
    if trace.z.len() != arch.depth() || values.len() != model.vars().len() {
        return Err(Error::Dimension {
            what: "trace layers",
            expected: arch.depth(),
            actual: trace.z.len(),
        });
    }
    let lookup = |role: Role, index: &[usize]| {
        model.lookup_role(role, index).ok_or_else(|| {
            Error::Model(format!(
                "incumbent has no {} for index {index:?}",
                role.prefix()
            ))
        })
    };
    for l in 1..arch.depth() {
        for j in 0..arch.width(l) {
            let id = lookup(Role::U, &[k, l, j])?;
            let expected = if trace.activation(l, j) > 0 { 1.0 } else { 0.0 };
            if values[id.0].round() != expected {
                return Ok(false);
            }
        }
    }
    for l in 1..=arch.depth() {
        for i in 0..arch.width(l - 1) {
            for j in 0..arch.width(l) {
                let id = lookup(Role::C, &[k, l, i, j])?;
                let w = f64::from(net.get(l, i, j));
                let source = if l == 1 {
                    x[i]
                } else {
                    f64::from(trace.activation(l - 1, i))
                };
                let expected = source * w;
                let got = values[id.0];
                let same = if l == 1 {
                    (got - expected).abs() <= 1e-6 * (1.0 + expected.abs())
                } else {
                    got.round() == expected
                };
                if !same {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Bit-packed evaluator for binarized (`P = 1`) networks. Layers after the
/// first work on ±1 activations packed into words.
#[derive(Debug, Clone)]
pub struct PackedNet {
    first_layer: WeightAssignment,
    // per layer >= 2, per target neuron: (positive mask, negative mask)
    hidden: Vec<Vec<(Vec<u64>, Vec<u64>)>>,
}

impl PackedNet {
    pub fn new(net: &WeightAssignment) -> Result<Self> {
        let arch = net.architecture();
        if arch.weight_bound() != 1 {
            return Err(Error::invalid("packed evaluation needs weights in {-1, 0, 1}"));
        }
        let mut hidden = Vec::new();
        for l in 2..=arch.depth() {
            let words = arch.width(l - 1).div_ceil(64);
            let mut neurons = Vec::with_capacity(arch.width(l));
            for j in 0..arch.width(l) {
                let mut pos = vec![0u64; words];
                let mut neg = vec![0u64; words];
                for i in 0..arch.width(l - 1) {
                    match net.get(l, i, j) {
                        1 => pos[i / 64] |= 1 << (i % 64),
                        -1 => neg[i / 64] |= 1 << (i % 64),
                        _ => {}
                    }
                }
                neurons.push((pos, neg));
            }
            hidden.push(neurons);
        }
        Ok(PackedNet {
            first_layer: net.clone(),
            hidden,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<i8>> {
        let arch = self.first_layer.architecture();
        if x.len() != arch.input_width() {
            return Err(Error::Dimension {
                what: "input features",
                expected: arch.input_width(),
                actual: x.len(),
            });
        }
        let width = arch.width(1);
        let weights = self.first_layer.layer(1);
        let mut sums = vec![0.0; width];
        for (i, &xi) in x.iter().enumerate() {
            for (j, s) in sums.iter_mut().enumerate() {
                *s += xi * f64::from(weights[i * width + j]);
            }
        }
        let mut bits: Vec<bool> = sums.iter().map(|&s| s >= 0.0).collect();
        for neurons in &self.hidden {
            let words = bits.len().div_ceil(64);
            let mut plus = vec![0u64; words];
            for (i, &b) in bits.iter().enumerate() {
                if b {
                    plus[i / 64] |= 1 << (i % 64);
                }
            }
            let full: Vec<u64> = (0..words)
                .map(|w| {
                    let n = (bits.len() - w * 64).min(64);
                    if n == 64 {
                        u64::MAX
                    } else {
                        (1u64 << n) - 1
                    }
                })
                .collect();
            bits = neurons
                .iter()
                .map(|(pos, neg)| {
                    let mut s: i64 = 0;
                    for w in 0..words {
                        let minus = !plus[w] & full[w];
                        s += i64::from((pos[w] & plus[w]).count_ones())
                            - i64::from((pos[w] & minus).count_ones())
                            - i64::from((neg[w] & plus[w]).count_ones())
                            + i64::from((neg[w] & minus).count_ones());
                    }
                    s >= 0
                })
                .collect();
        }
        Ok(bits.into_iter().map(|b| if b { 1 } else { -1 }).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_encoding, Architecture};

    #[test]
    fn single_layer_sign() {
        let arch = Architecture::new(vec![2, 1], 1).unwrap();
        let net = WeightAssignment::from_flat(&arch, &[1, -1]).unwrap();
        let trace = forward(&net, &[3.0, 5.0]).unwrap();
        assert_eq!(trace.pre_activation(1, 0), -2.0);
        assert_eq!(trace.output(), &[-1]);
    }

    #[test]
    fn zero_pre_activation_fires() {
        let arch = Architecture::new(vec![2, 1], 1).unwrap();
        let net = WeightAssignment::from_flat(&arch, &[1, 1]).unwrap();
        assert_eq!(predict_bits(&net, &[2.0, -2.0]).unwrap(), vec![1]);
    }

    #[test]
    fn zero_weights_give_all_plus() {
        let arch = Architecture::new(vec![3, 4, 2], 2).unwrap();
        let net = WeightAssignment::zeros(&arch);
        let trace = forward(&net, &[5.0, -1.0, 9.0]).unwrap();
        assert!(trace.z.iter().flatten().all(|&z| z == 1));
    }

    #[test]
    fn dimension_mismatch() {
        let arch = Architecture::new(vec![3, 1], 1).unwrap();
        assert!(forward(&WeightAssignment::zeros(&arch), &[1.0]).is_err());
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode(&[1], &make_encoding(&[4, 9]).unwrap()), Some(4));
        assert_eq!(decode(&[-1, -1], &make_encoding(&[0, 1, 2]).unwrap()), None);
        assert_eq!(decode(&[1, -1], &make_encoding(&[0, 1, 2, 3]).unwrap()), Some(1));
    }

    #[test]
    fn packed_matches_reference_on_hand_net() {
        let arch = Architecture::new(vec![2, 3, 2], 1).unwrap();
        let net = WeightAssignment::from_flat(&arch, &[1, -1, 0, 1, 1, -1, 1, 0, -1, 1, 0, -1])
            .unwrap();
        let packed = PackedNet::new(&net).unwrap();
        for x in [[3.0, 1.0], [-2.0, 5.0], [0.0, 0.0], [4.0, -4.0]] {
            assert_eq!(packed.predict(&x).unwrap(), predict_bits(&net, &x).unwrap());
        }
    }
}
