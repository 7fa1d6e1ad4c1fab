//! Domain types shared by the builder, trainer, inference and ensemble code.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class identifier. Digits use their face value.
pub type ClassId = u32;

/// Layer widths `[n_0, ..., n_L]` plus the weight magnitude bound `P`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    layer_sizes: Vec<usize>,
    weight_bound: i32,
}

impl Architecture {
    pub fn new(layer_sizes: Vec<usize>, weight_bound: i32) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid(
                "an architecture needs an input layer and at least one weighted layer",
            ));
        }
        if let Some(pos) = layer_sizes.iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("layer {pos} has zero neurons")));
        }
        if weight_bound < 1 {
            return Err(Error::invalid(format!(
                "weight bound must be at least 1, got {weight_bound}"
            )));
        }
        Ok(Architecture {
            layer_sizes,
            weight_bound,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Number of weighted layers `L`.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Width of layer `l` (0 is the input layer).
    pub fn width(&self, l: usize) -> usize {
        self.layer_sizes[l]
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        self.layer_sizes[self.depth()]
    }

    pub fn weight_bound(&self) -> i32 {
        self.weight_bound
    }

    /// Links feeding layer `l >= 1`.
    pub fn links_into(&self, l: usize) -> usize {
        self.layer_sizes[l - 1] * self.layer_sizes[l]
    }

    pub fn total_links(&self) -> usize {
        (1..=self.depth()).map(|l| self.links_into(l)).sum()
    }

    /// Neurons carrying an activation, i.e. every layer except the input.
    pub fn neuron_count(&self) -> usize {
        self.layer_sizes[1..].iter().sum()
    }
}

/// Integer weights `w[l][i][j]` in `[-P, P]`, stored densely per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightAssignment {
    arch: Architecture,
    layers: Vec<Vec<i32>>,
}

impl WeightAssignment {
    pub fn zeros(arch: &Architecture) -> Self {
        let layers = (1..=arch.depth())
            .map(|l| vec![0; arch.links_into(l)])
            .collect();
        WeightAssignment {
            arch: arch.clone(),
            layers,
        }
    }

    /// Build from per-layer matrices laid out source-major (`i * n_l + j`).
    pub fn from_layers(arch: &Architecture, layers: Vec<Vec<i32>>) -> Result<Self> {
        if layers.len() != arch.depth() {
            return Err(Error::Dimension {
                what: "weight layers",
                expected: arch.depth(),
                actual: layers.len(),
            });
        }
        let p = arch.weight_bound();
        for (idx, layer) in layers.iter().enumerate() {
            let l = idx + 1;
            if layer.len() != arch.links_into(l) {
                return Err(Error::Dimension {
                    what: "links in layer",
                    expected: arch.links_into(l),
                    actual: layer.len(),
                });
            }
            if let Some(w) = layer.iter().find(|w| w.abs() > p) {
                return Err(Error::invalid(format!(
                    "weight {w} in layer {l} is outside [-{p}, {p}]"
                )));
            }
        }
        Ok(WeightAssignment {
            arch: arch.clone(),
            layers,
        })
    }

    /// Build from a flat vector in `(l, i, j)` lexicographic order.
    pub fn from_flat(arch: &Architecture, flat: &[i32]) -> Result<Self> {
        if flat.len() != arch.total_links() {
            return Err(Error::Dimension {
                what: "flat weights",
                expected: arch.total_links(),
                actual: flat.len(),
            });
        }
        let mut layers = Vec::with_capacity(arch.depth());
        let mut offset = 0;
        for l in 1..=arch.depth() {
            let n = arch.links_into(l);
            layers.push(flat[offset..offset + n].to_vec());
            offset += n;
        }
        Self::from_layers(arch, layers)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn get(&self, l: usize, i: usize, j: usize) -> i32 {
        self.layers[l - 1][i * self.arch.width(l) + j]
    }

    pub fn set(&mut self, l: usize, i: usize, j: usize, value: i32) -> Result<()> {
        let p = self.arch.weight_bound();
        if value.abs() > p {
            return Err(Error::invalid(format!(
                "weight {value} is outside [-{p}, {p}]"
            )));
        }
        let width = self.arch.width(l);
        self.layers[l - 1][i * width + j] = value;
        Ok(())
    }

    pub fn layer(&self, l: usize) -> &[i32] {
        &self.layers[l - 1]
    }

    pub fn layers(&self) -> &[Vec<i32>] {
        &self.layers
    }

    /// `(l, i, j, w)` for every link, in lexicographic index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, i32)> + '_ {
        self.layers.iter().enumerate().flat_map(move |(idx, layer)| {
            let l = idx + 1;
            let width = self.arch.width(l);
            layer
                .iter()
                .enumerate()
                .map(move |(pos, &w)| (l, pos / width, pos % width, w))
        })
    }

    pub fn flat(&self) -> Vec<i32> {
        self.layers.iter().flatten().copied().collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.layers.iter().flatten().filter(|&&w| w != 0).count()
    }

    /// Counts per weight value, index `w + P`.
    pub fn value_histogram(&self) -> Vec<usize> {
        let p = self.arch.weight_bound();
        let mut counts = vec![0; (2 * p + 1) as usize];
        for &w in self.layers.iter().flatten() {
            counts[(w + p) as usize] += 1;
        }
        counts
    }
}

/// Feature vector with its `±1` target bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub targets: Vec<i8>,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, targets: Vec<i8>) -> Result<Self> {
        if let Some(t) = targets.iter().find(|t| t.abs() != 1) {
            return Err(Error::invalid(format!("target bit {t} is not ±1")));
        }
        Ok(LabeledSample { features, targets })
    }

    pub fn check_dims(&self, arch: &Architecture) -> Result<()> {
        if self.features.len() != arch.input_width() {
            return Err(Error::Dimension {
                what: "sample features",
                expected: arch.input_width(),
                actual: self.features.len(),
            });
        }
        if self.targets.len() != arch.output_width() {
            return Err(Error::Dimension {
                what: "sample targets",
                expected: arch.output_width(),
                actual: self.targets.len(),
            });
        }
        Ok(())
    }
}

/// Largest absolute feature value over a training set.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DataBound(pub f64);

impl DataBound {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn compute_data_bound(samples: &[LabeledSample]) -> Result<DataBound> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot bound an empty sample list"));
    }
    let bound = samples
        .iter()
        .flat_map(|s| s.features.iter())
        .fold(0.0_f64, |acc, x| acc.max(x.abs()));
    Ok(DataBound(bound))
}

/// Bijection between classes and `±1` output patterns of width
/// `ceil(log2 |classes|)`.
///
/// The first class takes the all-plus pattern and later classes take the
/// following patterns in descending order, reading `+1` as the larger digit.
/// Patterns left over decode to "unclassified".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEncoding {
    classes: Vec<ClassId>,
    bit_width: usize,
}

pub fn make_encoding(classes: &[ClassId]) -> Result<ClassEncoding> {
    if classes.len() < 2 {
        return Err(Error::invalid(format!(
            "an encoding needs at least two classes, got {}",
            classes.len()
        )));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = classes.iter().find(|c| !seen.insert(**c)) {
        return Err(Error::invalid(format!("class {dup} listed twice")));
    }
    let bit_width = usize::BITS as usize - (classes.len() - 1).leading_zeros() as usize;
    Ok(ClassEncoding {
        classes: classes.to_vec(),
        bit_width: bit_width.max(1),
    })
}

impl ClassEncoding {
    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn bit_width(&self) -> usize {
        self.bit_width
    }

    fn code_of_rank(&self, rank: usize) -> Vec<i8> {
        let top = (1usize << self.bit_width) - 1;
        let code = top - rank;
        (0..self.bit_width)
            .rev()
            .map(|b| if code >> b & 1 == 1 { 1 } else { -1 })
            .collect()
    }

    pub fn encode(&self, class: ClassId) -> Option<Vec<i8>> {
        let rank = self.classes.iter().position(|&c| c == class)?;
        Some(self.code_of_rank(rank))
    }

    /// Class for an output pattern, `None` when the pattern is unassigned.
    pub fn decode(&self, bits: &[i8]) -> Option<ClassId> {
        if bits.len() != self.bit_width {
            return None;
        }
        let top = (1usize << self.bit_width) - 1;
        let code = bits
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | usize::from(b > 0));
        self.classes.get(top - code).copied()
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.classes.contains(&class)
    }
}
