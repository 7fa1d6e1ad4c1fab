//! Subset-vote ensembles: one network per `m`-subset of the classes,
//! majority voting with dominant-label resolution, and the seven label
//! statuses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inference::forward;
use crate::model::{make_encoding, Architecture, ClassEncoding, ClassId, LabeledSample, WeightAssignment};
use crate::solver::Backend;
use crate::train::{train, StageBudget, StageReport, TrainOptions, TrainedNet};

/// All `m`-subsets of `classes` (sorted, deduplicated) in lexicographic order.
pub fn subsets(classes: &[ClassId], m: usize) -> Vec<Vec<ClassId>> {
    let sorted: Vec<ClassId> = classes.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut out = Vec::new();
    let mut pick = Vec::with_capacity(m);
    fn rec(items: &[ClassId], m: usize, start: usize, pick: &mut Vec<ClassId>, out: &mut Vec<Vec<ClassId>>) {
        if pick.len() == m {
            out.push(pick.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < m - pick.len() {
                break;
            }
            pick.push(items[i]);
            rec(items, m, i + 1, pick, out);
            pick.pop();
        }
    }
    if m <= sorted.len() {
        rec(&sorted, m, 0, &mut pick, &mut out);
    }
    out
}

/// `n choose k`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Training provenance kept with each member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberMeta {
    /// e.g. `SM+MM+MW`
    pub stage_reached: String,
    pub stages: Vec<StageReport>,
    pub train_samples: usize,
    pub t_hat_size: usize,
}

impl MemberMeta {
    pub fn from_trained(net: &TrainedNet, train_samples: usize) -> Self {
        MemberMeta {
            stage_reached: net.stage_reached(),
            stages: net.stages.clone(),
            train_samples,
            t_hat_size: net.t_hat.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub subset: Vec<ClassId>,
    pub encoding: ClassEncoding,
    pub weights: WeightAssignment,
    pub meta: MemberMeta,
}

impl Member {
    pub fn predict(&self, x: &[f64]) -> Result<Option<ClassId>> {
        Ok(self.encoding.decode(forward(&self.weights, x)?.output()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    classes: Vec<ClassId>,
    m: usize,
    members: Vec<Member>,
}

impl Ensemble {
    /// Assemble from members; checks there is exactly one member per subset.
    pub fn new(classes: &[ClassId], m: usize, members: Vec<Member>) -> Result<Self> {
        Self::assemble(classes, m, members, true)
    }

    /// Assemble from the members that trained successfully; subsets may be
    /// missing, and their votes are simply absent.
    pub fn partial(classes: &[ClassId], m: usize, members: Vec<Member>) -> Result<Self> {
        Self::assemble(classes, m, members, false)
    }

    fn assemble(classes: &[ClassId], m: usize, mut members: Vec<Member>, complete: bool) -> Result<Self> {
        let expected = subsets(classes, m);
        if m < 2 || expected.is_empty() {
            return Err(Error::invalid(format!(
                "subset size must lie in 2..={}, got {m}",
                classes.len()
            )));
        }
        members.sort_by(|a, b| a.subset.cmp(&b.subset));
        let got: Vec<Vec<ClassId>> = members.iter().map(|mb| mb.subset.clone()).collect();
        let unique = got.windows(2).all(|w| w[0] != w[1]);
        let known = got.iter().all(|s| expected.binary_search(s).is_ok());
        if !unique || !known || (complete && got.len() != expected.len()) {
            return Err(Error::invalid("members do not cover each subset exactly once"));
        }
        for mb in &members {
            if mb.encoding.classes() != mb.subset.as_slice() {
                return Err(Error::invalid("member encoding does not match its subset"));
            }
            if mb.weights.architecture().output_width() != mb.encoding.bit_width() {
                return Err(Error::invalid("member output width does not match its encoding"));
            }
        }
        let mut classes: Vec<ClassId> = classes.to_vec();
        classes.sort_unstable();
        classes.dedup();
        Ok(Ensemble { classes, m, members })
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn member(&self, subset: &[ClassId]) -> Option<&Member> {
        self.members
            .binary_search_by(|mb| mb.subset.as_slice().cmp(subset))
            .ok()
            .map(|i| &self.members[i])
    }

    /// Whether every subset has a member.
    pub fn is_complete(&self) -> bool {
        self.members.len() == binomial(self.classes.len(), self.m)
    }

    pub fn total_parameters(&self) -> usize {
        self.members
            .iter()
            .map(|mb| mb.weights.architecture().total_links())
            .sum()
    }
}

/// Labeled samples for a member trained on `subset`.
pub fn member_training_set(
    subset: &[ClassId],
    per_class: &BTreeMap<ClassId, Vec<Vec<f64>>>,
) -> Result<(ClassEncoding, Vec<LabeledSample>)> {
    let encoding = make_encoding(subset)?;
    let mut samples = Vec::new();
    for &class in subset {
        let features = per_class
            .get(&class)
            .filter(|f| !f.is_empty())
            .ok_or_else(|| Error::invalid(format!("no training samples for class {class}")))?;
        let target = encoding.encode(class).expect("subset class");
        for x in features {
            samples.push(LabeledSample::new(x.clone(), target.clone())?);
        }
    }
    Ok((encoding, samples))
}

/// Outcome of training every member, including failures.
#[derive(Debug)]
pub struct MemberBuild {
    pub members: Vec<Member>,
    pub failures: Vec<(Vec<ClassId>, Error)>,
}

/// Train one network per `m`-subset on `workers` threads. Member `i` (in
/// lexicographic subset order) uses seed `options.seed + i`.
#[allow(clippy::too_many_arguments)]
pub fn build_members(
    backend: &dyn Backend,
    classes: &[ClassId],
    m: usize,
    per_class: &BTreeMap<ClassId, Vec<Vec<f64>>>,
    arch: &Architecture,
    budget: &StageBudget,
    options: &TrainOptions,
    workers: usize,
) -> Result<MemberBuild> {
    if m < 2 || m > classes.len() {
        return Err(Error::invalid(format!(
            "subset size must lie in 2..={}, got {m}",
            classes.len()
        )));
    }
    let jobs = subsets(classes, m);
    let needed_bits = make_encoding(&jobs[0])?.bit_width();
    if arch.output_width() != needed_bits {
        return Err(Error::invalid(format!(
            "subsets of {m} classes need {needed_bits} output neurons, architecture has {}",
            arch.output_width()
        )));
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<std::result::Result<Member, Error>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let run = |idx: usize| -> Result<Member> {
        let subset = &jobs[idx];
        let (encoding, samples) = member_training_set(subset, per_class)?;
        let opts = TrainOptions {
            seed: options.seed.wrapping_add(idx as u64),
            ..*options
        };
        log::info!("training member {subset:?} on {} samples", samples.len());
        let net = train(backend, arch, &samples, budget, &opts)?;
        Ok(Member {
            subset: subset.clone(),
            encoding,
            meta: MemberMeta::from_trained(&net, samples.len()),
            weights: net.weights,
        })
    };
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, jobs.len()) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= jobs.len() {
                    break;
                }
                let outcome = run(idx);
                results.lock().unwrap_or_else(|e| e.into_inner())[idx] = Some(outcome);
            });
        }
    });
    let mut members = Vec::new();
    let mut failures = Vec::new();
    for (subset, outcome) in jobs.into_iter().zip(results.into_inner().unwrap_or_else(|e| e.into_inner())) {
        match outcome {
            Some(Ok(member)) => members.push(member),
            Some(Err(e)) => failures.push((subset, e)),
            None => failures.push((subset, Error::TrainingFailure("job did not run".into()))),
        }
    }
    Ok(MemberBuild { members, failures })
}

/// [`build_members`], failing if any member fails.
#[allow(clippy::too_many_arguments)]
pub fn build_ensemble(
    backend: &dyn Backend,
    classes: &[ClassId],
    m: usize,
    per_class: &BTreeMap<ClassId, Vec<Vec<f64>>>,
    arch: &Architecture,
    budget: &StageBudget,
    options: &TrainOptions,
    workers: usize,
) -> Result<Ensemble> {
    let built = build_members(backend, classes, m, per_class, arch, budget, options, workers)?;
    if !built.failures.is_empty() {
        for (subset, e) in &built.failures {
            log::error!("member {subset:?} failed: {e}");
        }
        return Err(Error::EnsembleBuild {
            failed: built.failures.into_iter().map(|(s, _)| s).collect(),
        });
    }
    Ensemble::new(classes, m, built.members)
}

/// Votes of every member for one input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteTally {
    m: usize,
    /// Label of each member, `None` for unassigned output patterns.
    labels: BTreeMap<Vec<ClassId>, Option<ClassId>>,
    /// `|C_b|` for every class `b`.
    counts: BTreeMap<ClassId, usize>,
}

impl VoteTally {
    /// Tally from member labels; classes absent from `labels` keys still
    /// get a zero count.
    pub fn from_labels(
        classes: &[ClassId],
        m: usize,
        labels: BTreeMap<Vec<ClassId>, Option<ClassId>>,
    ) -> Self {
        let mut counts: BTreeMap<ClassId, usize> = classes.iter().map(|&c| (c, 0)).collect();
        for label in labels.values().flatten() {
            *counts.entry(*label).or_insert(0) += 1;
        }
        VoteTally { m, labels, counts }
    }

    /// Tally from vote counts directly, with member labels only for the
    /// subsets given (used to replay published tallies).
    pub fn from_counts(
        m: usize,
        counts: BTreeMap<ClassId, usize>,
        labels: BTreeMap<Vec<ClassId>, Option<ClassId>>,
    ) -> Self {
        VoteTally { m, labels, counts }
    }

    pub fn count(&self, class: ClassId) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<ClassId, usize> {
        &self.counts
    }

    pub fn label(&self, subset: &[ClassId]) -> Option<ClassId> {
        self.labels.get(subset).copied().flatten()
    }

    /// Classes whose count is maximal (every class when nobody voted).
    pub fn dominant(&self) -> Vec<ClassId> {
        let top = self.counts.values().copied().max().unwrap_or(0);
        self.counts
            .iter()
            .filter(|(_, &c)| c == top)
            .map(|(&b, _)| b)
            .collect()
    }
}

/// Run every member on `x`.
pub fn tally(x: &[f64], ens: &Ensemble) -> Result<VoteTally> {
    let labels = ens
        .members
        .iter()
        .map(|mb| Ok((mb.subset.clone(), mb.predict(x)?)))
        .collect::<Result<_>>()?;
    Ok(VoteTally::from_labels(&ens.classes, ens.m, labels))
}

/// Final label: the unique dominant class, the tie-breaker member's label
/// when exactly `m` classes dominate, otherwise `None` (unclassified).
pub fn resolve(tally: &VoteTally) -> Option<ClassId> {
    let d = tally.dominant();
    if d.len() == 1 {
        Some(d[0])
    } else if d.len() == tally.m {
        tally.label(&d)
    } else {
        None
    }
}

/// The seven outcome categories of a voted prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelStatus {
    /// one dominant label, correct
    OneCorrect,
    /// one dominant label, incorrect
    OneIncorrect,
    /// `m` dominant labels, tie-breaker correct
    TieCorrect,
    /// `m` dominant labels, tie-breaker wrong but the truth dominates
    TieIncorrectDominant,
    /// `m` dominant labels, truth not among them
    TieIncorrectOther,
    /// other number of dominant labels, truth among them
    OtherDominant,
    /// other number of dominant labels, truth not among them
    OtherMissing,
}

impl LabelStatus {
    pub const ALL: [LabelStatus; 7] = [
        LabelStatus::OneCorrect,
        LabelStatus::OneIncorrect,
        LabelStatus::TieCorrect,
        LabelStatus::TieIncorrectDominant,
        LabelStatus::TieIncorrectOther,
        LabelStatus::OtherDominant,
        LabelStatus::OtherMissing,
    ];

    /// Short name with `m` substituted, e.g. `2I′`.
    pub fn render(self, m: usize) -> String {
        match self {
            LabelStatus::OneCorrect => "1C".into(),
            LabelStatus::OneIncorrect => "1I".into(),
            LabelStatus::TieCorrect => format!("{m}C"),
            LabelStatus::TieIncorrectDominant => format!("{m}I′"),
            LabelStatus::TieIncorrectOther => format!("{m}I″"),
            LabelStatus::OtherDominant => "oI′".into(),
            LabelStatus::OtherMissing => "oI″".into(),
        }
    }

    pub fn is_correct(self) -> bool {
        matches!(self, LabelStatus::OneCorrect | LabelStatus::TieCorrect)
    }

    pub fn is_unclassified(self) -> bool {
        matches!(self, LabelStatus::OtherDominant | LabelStatus::OtherMissing)
    }
}

impl fmt::Display for LabelStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(2))
    }
}

/// Status of `prediction` for a sample whose true class is `truth`.
///
/// A tie-breaker member that abstains (unassigned pattern) gives an
/// unclassified prediction, reported as `mI′` or `mI″`.
pub fn status(prediction: Option<ClassId>, tally: &VoteTally, truth: ClassId) -> LabelStatus {
    let d = tally.dominant();
    let truth_dominates = d.contains(&truth);
    if d.len() == 1 {
        if prediction == Some(truth) {
            LabelStatus::OneCorrect
        } else {
            LabelStatus::OneIncorrect
        }
    } else if d.len() == tally.m {
        if prediction == Some(truth) {
            LabelStatus::TieCorrect
        } else if truth_dominates {
            LabelStatus::TieIncorrectDominant
        } else {
            LabelStatus::TieIncorrectOther
        }
    } else if truth_dominates {
        LabelStatus::OtherDominant
    } else {
        LabelStatus::OtherMissing
    }
}

/// Current version of the serialized ensemble document.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MemberDoc {
    subset: Vec<ClassId>,
    layer_sizes: Vec<usize>,
    weight_bound: i32,
    /// `weights[l - 1][i * n_l + j]`
    weights: Vec<Vec<i32>>,
    meta: MemberMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnsembleDoc {
    format: String,
    version: u32,
    classes: Vec<ClassId>,
    m: usize,
    members: Vec<MemberDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SignedDoc {
    #[serde(flatten)]
    body: EnsembleDoc,
    /// SHA-256 of the compact JSON encoding of every other field.
    digest: String,
}

fn body_of(ens: &Ensemble) -> EnsembleDoc {
    EnsembleDoc {
        format: "fewbit-ensemble".into(),
        version: FORMAT_VERSION,
        classes: ens.classes.clone(),
        m: ens.m,
        members: ens
            .members
            .iter()
            .map(|mb| MemberDoc {
                subset: mb.subset.clone(),
                layer_sizes: mb.weights.architecture().layer_sizes().to_vec(),
                weight_bound: mb.weights.architecture().weight_bound(),
                weights: mb.weights.layers().to_vec(),
                meta: mb.meta.clone(),
            })
            .collect(),
    }
}

fn digest_of(body: &EnsembleDoc) -> Result<String> {
    let bytes = serde_json::to_vec(body).map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Serialize to a pretty-printed JSON document with a content digest.
pub fn serialize_ensemble(ens: &Ensemble) -> Result<String> {
    let body = body_of(ens);
    let digest = digest_of(&body)?;
    serde_json::to_string_pretty(&SignedDoc { body, digest })
        .map_err(|e| Error::Serialization(e.to_string()))
}

/// Digest recorded in serialized documents.
pub fn ensemble_digest(ens: &Ensemble) -> Result<String> {
    digest_of(&body_of(ens))
}

/// Parse a document written by [`serialize_ensemble`], verifying its digest.
pub fn deserialize_ensemble(text: &str) -> Result<Ensemble> {
    let doc: SignedDoc =
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
    if doc.body.format != "fewbit-ensemble" || doc.body.version != FORMAT_VERSION {
        return Err(Error::Serialization(format!(
            "unsupported document {} v{}",
            doc.body.format, doc.body.version
        )));
    }
    if digest_of(&doc.body)? != doc.digest {
        return Err(Error::Serialization("digest mismatch".into()));
    }
    let members = doc
        .body
        .members
        .into_iter()
        .map(|md| {
            let arch = Architecture::new(md.layer_sizes, md.weight_bound)?;
            Ok(Member {
                encoding: make_encoding(&md.subset)?,
                subset: md.subset,
                weights: WeightAssignment::from_layers(&arch, md.weights)?,
                meta: md.meta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::partial(&doc.body.classes, doc.body.m, members)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_counts() {
        let ten: Vec<ClassId> = (0..10).collect();
        assert_eq!(subsets(&ten, 2).len(), 45);
        assert_eq!(subsets(&[0, 1, 2, 3], 2).len(), 6);
        assert_eq!(subsets(&[0, 1, 2, 3], 4), vec![vec![0, 1, 2, 3]]);
        assert_eq!(subsets(&[3, 1, 2], 2), vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(binomial(10, 2), 45);
        assert_eq!(binomial(3, 2), 3);
    }

    #[test]
    fn status_tree() {
        let counts = |pairs: &[(ClassId, usize)]| pairs.iter().copied().collect();
        let unique = VoteTally::from_counts(2, counts(&[(0, 3), (1, 1), (2, 2)]), BTreeMap::new());
        assert_eq!(resolve(&unique), Some(0));
        assert_eq!(status(Some(0), &unique, 0), LabelStatus::OneCorrect);
        assert_eq!(status(Some(0), &unique, 2), LabelStatus::OneIncorrect);
        let tie = VoteTally::from_counts(
            2,
            counts(&[(0, 2), (1, 2), (2, 0)]),
            [(vec![0, 1], Some(1))].into_iter().collect(),
        );
        assert_eq!(resolve(&tie), Some(1));
        assert_eq!(status(Some(1), &tie, 1), LabelStatus::TieCorrect);
        assert_eq!(status(Some(1), &tie, 0), LabelStatus::TieIncorrectDominant);
        assert_eq!(status(Some(1), &tie, 2), LabelStatus::TieIncorrectOther);
        let all = VoteTally::from_counts(2, counts(&[(0, 1), (1, 1), (2, 1)]), BTreeMap::new());
        assert_eq!(resolve(&all), None);
        assert_eq!(status(None, &all, 2), LabelStatus::OtherDominant);
        assert_eq!(LabelStatus::TieIncorrectDominant.render(3), "3I′");
    }
}
