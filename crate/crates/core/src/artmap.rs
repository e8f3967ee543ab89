//! ARTMAP substrate: complement coding, choice-function activation,
//! vigilance-gated resonance search with reset and match tracking, fast/slow
//! learning and node commitment.
//!
//! All vector norms are city-block (L1) norms and `∧` is the element-wise
//! minimum. For a raw feature vector `a ∈ [0,1]^d` the complement-coded input
//! is `A = (a, 1 - a)` of length `M = 2d`, so `|A| = d` for every input.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for every floating-point equality check in the crate.
pub const TOLERANCE: f64 = 1e-9;

/// Internal class index. Valid classes are numbered from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Raw feature vector with every element in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfDomain { index, value });
            }
        }
        Ok(Self(values))
    }

    /// Builds a feature vector by clamping every element into `[0, 1]`.
    /// Non-finite elements become 0.
    pub fn clamped(values: impl IntoIterator<Item = f64>) -> Self {
        Self(
            values
                .into_iter()
                .map(|v| {
                    if v.is_finite() {
                        v.clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// Complement-coded input `A = (a, 1 - a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplementVector(Vec<f64>);

impl ComplementVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `M`, the complement-coded length.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn raw_dimension(&self) -> usize {
        self.0.len() / 2
    }

    pub fn norm(&self) -> f64 {
        city_block(&self.0)
    }
}

/// Complement-codes `a`, checking its length against `raw_dimension`.
pub fn complement_code(a: &FeatureVector, raw_dimension: usize) -> Result<ComplementVector> {
    if a.len() != raw_dimension {
        return Err(Error::Dimension {
            expected: raw_dimension,
            got: a.len(),
        });
    }
    let mut values = Vec::with_capacity(2 * raw_dimension);
    values.extend_from_slice(a.as_slice());
    values.extend(a.as_slice().iter().map(|x| 1.0 - x));
    Ok(ComplementVector(values))
}

pub fn city_block(v: &[f64]) -> f64 {
    v.iter().sum()
}

/// `|x ∧ y|`. Callers guarantee equal lengths.
pub fn fuzzy_and_norm(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a.min(*b)).sum()
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

/// Choice function `T = |A ∧ w| + (1 - α)(M - |w|)`.
pub fn activation(a: &ComplementVector, w: &[f64], alpha: f64) -> Result<f64> {
    check_len(a.len(), w.len())?;
    Ok(activation_unchecked(a.as_slice(), w, alpha))
}

fn activation_unchecked(a: &[f64], w: &[f64], alpha: f64) -> f64 {
    let m = a.len() as f64;
    fuzzy_and_norm(a, w) + (1.0 - alpha) * (m - city_block(w))
}

/// Indices whose activation clears the signal threshold `T > αM`.
pub fn candidate_subset(activations: &[f64], alpha: f64, m: usize) -> Vec<usize> {
    let threshold = alpha * m as f64;
    activations
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > threshold)
        .map(|(j, _)| j)
        .collect()
}

/// Match ratio `|A ∧ w| / |A|`.
pub fn match_ratio(a: &ComplementVector, w: &[f64]) -> Result<f64> {
    check_len(a.len(), w.len())?;
    Ok(fuzzy_and_norm(a.as_slice(), w) / a.norm())
}

/// Containment-normalised overlap `|A ∧ w| / min(|A|, |w|)`.
///
/// Equals 1 whenever either vector dominates the other element-wise. A zero
/// denominator yields 0.
pub fn overlap(a: &ComplementVector, w: &[f64]) -> Result<f64> {
    check_len(a.len(), w.len())?;
    let denom = a.norm().min(city_block(w));
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok(fuzzy_and_norm(a.as_slice(), w) / denom)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRule {
    /// `|A ∧ w_J| / |A| ≥ ρ`
    Ratio,
    /// `T_J / M ≥ ρ`
    RawActivation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtmapParams {
    /// Signal-rule parameter, `0 < α < 1`.
    pub alpha: f64,
    /// Learning fraction, `0 < β ≤ 1`. `β = 1` is fast learning.
    pub beta: f64,
    /// Match-tracking increment, `-1 < ε < 1`.
    pub epsilon: f64,
    /// Vigilance used for read-only classification.
    pub rho_baseline: f64,
    pub match_rule: MatchRule,
}

impl Default for ArtmapParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta: 1.0,
            epsilon: -0.001,
            rho_baseline: 0.0,
            match_rule: MatchRule::Ratio,
        }
    }
}

impl ArtmapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(
                "alpha",
                format!("{} not in (0, 1)", self.alpha),
            ));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::param("beta", format!("{} not in (0, 1]", self.beta)));
        }
        if !(self.epsilon > -1.0 && self.epsilon < 1.0) {
            return Err(Error::param(
                "epsilon",
                format!("{} not in (-1, 1)", self.epsilon),
            ));
        }
        if !(0.0..=1.0).contains(&self.rho_baseline) {
            return Err(Error::param(
                "rho_baseline",
                format!("{} not in [0, 1]", self.rho_baseline),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryNode {
    pub weights: Vec<f64>,
    pub label: ClassId,
    pub support: u64,
    pub created_frame: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LearnKind {
    UpdatedExisting { node: usize },
    CommittedNew { node: usize, label: ClassId },
    SearchExhausted,
}

/// Result of one resonance search.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnOutcome {
    pub kind: LearnKind,
    /// Vigilance in force when the search ended.
    pub final_rho: f64,
    /// Match value of the resonating node, or of the last node examined.
    pub match_value: f64,
    /// Winners rejected for failing vigilance.
    pub resets: u32,
    /// Winners rejected for a supervised-label mismatch.
    pub match_tracks: u32,
    /// Winner selections performed.
    pub iterations: u32,
    /// The activated subset ordered by descending activation (ties by index).
    pub ranked_candidates: Vec<usize>,
    /// Activation of every node, indexed by node.
    pub activations: Vec<f64>,
}

/// Read-only classification result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub label: Option<ClassId>,
    pub winner: Option<usize>,
    pub activation: f64,
    pub match_value: f64,
}

impl Classification {
    const UNKNOWN: Self = Self {
        label: None,
        winner: None,
        activation: 0.0,
        match_value: 0.0,
    };
}

/// Parameters of a single resonance search.
pub struct SearchRequest<'a> {
    pub rho_start: f64,
    pub supervised_label: Option<ClassId>,
    pub learning: bool,
    /// Nodes whose label fails this predicate never enter the candidate set.
    pub eligible: &'a dyn Fn(ClassId) -> bool,
}

fn always(_: ClassId) -> bool {
    true
}

impl<'a> SearchRequest<'a> {
    pub fn new(rho_start: f64) -> Self {
        Self {
            rho_start,
            supervised_label: None,
            learning: true,
            eligible: &always,
        }
    }

    pub fn supervised(mut self, label: Option<ClassId>) -> Self {
        self.supervised_label = label;
        self
    }

    pub fn learning(mut self, learning: bool) -> Self {
        self.learning = learning;
        self
    }

    pub fn eligible(mut self, eligible: &'a dyn Fn(ClassId) -> bool) -> Self {
        self.eligible = eligible;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtmapNetwork {
    pub params: ArtmapParams,
    raw_dimension: usize,
    nodes: Vec<CategoryNode>,
    label_count: u32,
}

impl ArtmapNetwork {
    pub fn new(raw_dimension: usize, params: ArtmapParams) -> Result<Self> {
        params.validate()?;
        if raw_dimension == 0 {
            return Err(Error::param("raw_dimension", "must be positive"));
        }
        Ok(Self {
            params,
            raw_dimension,
            nodes: Vec::new(),
            label_count: 0,
        })
    }

    /// Reassembles a network from stored parts, validating every node.
    pub fn from_parts(
        raw_dimension: usize,
        params: ArtmapParams,
        nodes: Vec<CategoryNode>,
        label_count: u32,
    ) -> Result<Self> {
        let mut net = Self::new(raw_dimension, params)?;
        for (j, node) in nodes.iter().enumerate() {
            check_len(2 * raw_dimension, node.weights.len())?;
            if let Some((index, &value)) = node
                .weights
                .iter()
                .enumerate()
                .find(|(_, w)| !(0.0..=1.0).contains(*w))
            {
                return Err(Error::OutOfDomain { index, value });
            }
            if node.label.0 == 0 || node.label.0 > label_count {
                return Err(Error::Malformed(format!(
                    "node {j} has label {} outside 1..={label_count}",
                    node.label
                )));
            }
        }
        net.nodes = nodes;
        net.label_count = label_count;
        Ok(net)
    }

    pub fn raw_dimension(&self) -> usize {
        self.raw_dimension
    }

    /// `M`
    pub fn coded_dimension(&self) -> usize {
        2 * self.raw_dimension
    }

    pub fn nodes(&self) -> &[CategoryNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn label_count(&self) -> u32 {
        self.label_count
    }

    /// Raises the known label count to at least `n`.
    pub fn register_labels(&mut self, n: u32) {
        self.label_count = self.label_count.max(n);
    }

    pub fn complement(&self, a: &FeatureVector) -> Result<ComplementVector> {
        complement_code(a, self.raw_dimension)
    }

    fn check_input(&self, a: &ComplementVector) -> Result<()> {
        check_len(self.coded_dimension(), a.len())
    }

    pub fn activations(&self, a: &ComplementVector) -> Result<Vec<f64>> {
        self.check_input(a)?;
        Ok(self
            .nodes
            .iter()
            .map(|n| activation_unchecked(a.as_slice(), &n.weights, self.params.alpha))
            .collect())
    }

    /// Match value of node `j` under the configured match rule.
    pub fn match_value(&self, a: &ComplementVector, j: usize) -> Result<f64> {
        self.check_input(a)?;
        let node = self.nodes.get(j).ok_or(Error::NodeNotFound(j))?;
        Ok(self.match_of(a, &node.weights))
    }

    fn match_of(&self, a: &ComplementVector, w: &[f64]) -> f64 {
        match self.params.match_rule {
            MatchRule::Ratio => fuzzy_and_norm(a.as_slice(), w) / a.norm(),
            MatchRule::RawActivation => {
                activation_unchecked(a.as_slice(), w, self.params.alpha) / a.len() as f64
            }
        }
    }

    fn ranked(&self, activations: &[f64], eligible: &dyn Fn(ClassId) -> bool) -> Vec<usize> {
        let mut ranked: Vec<usize> =
            candidate_subset(activations, self.params.alpha, self.coded_dimension())
                .into_iter()
                .filter(|&j| eligible(self.nodes[j].label))
                .collect();
        // Stable sort keeps ascending index order among equal activations.
        ranked.sort_by(|&x, &y| activations[y].total_cmp(&activations[x]));
        ranked
    }

    /// `w_J ← β(A ∧ w_J) + (1 - β) w_J`, and bumps the node's support.
    pub fn learn_into(&mut self, j: usize, a: &ComplementVector) -> Result<()> {
        self.check_input(a)?;
        let beta = self.params.beta;
        let node = self.nodes.get_mut(j).ok_or(Error::NodeNotFound(j))?;
        for (w, &x) in node.weights.iter_mut().zip(a.as_slice()) {
            let fused = x.min(*w);
            // β = 1 stays exact so fast learning is idempotent bit-for-bit.
            *w = if beta == 1.0 {
                fused
            } else {
                (beta * fused + (1.0 - beta) * *w).min(*w)
            };
        }
        node.support += 1;
        Ok(())
    }

    /// Appends a node with `w = A`. The label must be a positive class index.
    pub fn commit_new_node(
        &mut self,
        a: &ComplementVector,
        label: ClassId,
        frame: u64,
    ) -> Result<usize> {
        self.check_input(a)?;
        if label.0 == 0 {
            return Err(Error::ClassNotFound(label));
        }
        self.register_labels(label.0);
        self.nodes.push(CategoryNode {
            weights: a.as_slice().to_vec(),
            label,
            support: 1,
            created_frame: frame,
        });
        Ok(self.nodes.len() - 1)
    }

    /// Winner-take-all search with reset and match tracking.
    ///
    /// Winners are visited in descending activation. A winner whose match is
    /// below ρ is reset. A winner that passes vigilance but carries a label
    /// other than the supervised one raises ρ to `max(ρ, m_J + ε)` and is
    /// reset. The first winner that survives both checks resonates and, when
    /// learning is enabled, learns the input.
    pub fn resonance_search(
        &mut self,
        a: &ComplementVector,
        request: &SearchRequest<'_>,
    ) -> Result<LearnOutcome> {
        let activations = self.activations(a)?;
        let ranked = self.ranked(&activations, request.eligible);
        let mut rho = request.rho_start;
        let mut outcome = LearnOutcome {
            kind: LearnKind::SearchExhausted,
            final_rho: rho,
            match_value: 0.0,
            resets: 0,
            match_tracks: 0,
            iterations: 0,
            ranked_candidates: Vec::new(),
            activations: Vec::new(),
        };

        let mut winner = None;
        for &j in &ranked {
            outcome.iterations += 1;
            let m = self.match_of(a, &self.nodes[j].weights);
            outcome.match_value = m;
            if m < rho {
                outcome.resets += 1;
                continue;
            }
            if let Some(label) = request.supervised_label {
                if self.nodes[j].label != label {
                    rho = rho.max(m + self.params.epsilon);
                    outcome.match_tracks += 1;
                    continue;
                }
            }
            winner = Some(j);
            break;
        }

        if let Some(j) = winner {
            if request.learning {
                self.learn_into(j, a)?;
            }
            outcome.kind = LearnKind::UpdatedExisting { node: j };
        }
        outcome.final_rho = rho;
        outcome.ranked_candidates = ranked;
        outcome.activations = activations;
        Ok(outcome)
    }

    /// Read-only classification at the baseline vigilance.
    pub fn classify(&self, a: &ComplementVector) -> Result<Classification> {
        self.classify_filtered(a, &always)
    }

    pub fn classify_filtered(
        &self,
        a: &ComplementVector,
        eligible: &dyn Fn(ClassId) -> bool,
    ) -> Result<Classification> {
        let activations = self.activations(a)?;
        let rho = self.params.rho_baseline;
        for j in self.ranked(&activations, eligible) {
            let m = self.match_of(a, &self.nodes[j].weights);
            if m >= rho {
                return Ok(Classification {
                    label: Some(self.nodes[j].label),
                    winner: Some(j),
                    activation: activations[j],
                    match_value: m,
                });
            }
        }
        Ok(Classification::UNKNOWN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < TOLERANCE
    }

    fn coded(v: &[f64]) -> ComplementVector {
        complement_code(&fv(v), v.len()).unwrap()
    }

    /// A complement vector taken verbatim, for weight-like probes.
    fn raw(values: &[f64]) -> ComplementVector {
        ComplementVector(values.to_vec())
    }

    #[test]
    fn complement_code_examples() {
        let a = coded(&[0.2, 0.7]);
        let expect = [0.2, 0.7, 0.8, 0.3];
        assert!(a.as_slice().iter().zip(expect).all(|(x, y)| close(*x, y)));
        assert_eq!(coded(&[0.0, 0.0]).as_slice(), &[0.0, 0.0, 1.0, 1.0]);
        assert!(close(a.norm(), 2.0));
    }

    #[test]
    fn complement_code_errors() {
        assert!(matches!(
            FeatureVector::new(vec![0.5, 1.2]),
            Err(Error::OutOfDomain { index: 1, .. })
        ));
        assert!(matches!(
            complement_code(&fv(&[0.1, 0.2, 0.3]), 2),
            Err(Error::Dimension {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn activation_examples() {
        let a = coded(&[0.2, 0.7]);
        let t = activation(&a, &[0.1, 0.5, 0.6, 0.3], 0.01).unwrap();
        assert!(close(t, 3.975), "{t}");
        let t = activation(&a, &[1.0; 4], 0.01).unwrap();
        assert!(close(t, 2.0));
        let t = activation(&a, a.as_slice(), 0.01).unwrap();
        assert!(close(t, 3.98));
        assert!(activation(&a, &[0.0; 3], 0.01).is_err());
    }

    #[test]
    fn candidate_subset_examples() {
        assert_eq!(candidate_subset(&[3.975, 0.02], 0.01, 4), vec![0]);
        assert!(candidate_subset(&[0.04, 0.01], 0.01, 4).is_empty());
        assert!(candidate_subset(&[], 0.01, 4).is_empty());
    }

    #[test]
    fn match_ratio_examples() {
        let a = coded(&[0.2, 0.7]);
        assert_eq!(match_ratio(&a, a.as_slice()).unwrap(), 1.0);
        assert!(close(match_ratio(&a, &[0.1, 0.5, 0.6, 0.3]).unwrap(), 0.75));
        assert!(close(match_ratio(&a, &[1.0; 4]).unwrap(), 1.0));
    }

    #[test]
    fn overlap_examples() {
        let a = coded(&[0.2, 0.7]);
        assert!(close(overlap(&a, a.as_slice()).unwrap(), 1.0));
        assert!(close(overlap(&a, &[0.1, 0.5, 0.6, 0.3]).unwrap(), 1.0));
    }

    fn net_with(weights: &[&[f64]], labels: &[u32], beta: f64) -> ArtmapNetwork {
        let dim = weights[0].len() / 2;
        let params = ArtmapParams {
            beta,
            ..ArtmapParams::default()
        };
        let mut net = ArtmapNetwork::new(dim, params).unwrap();
        for (w, &l) in weights.iter().zip(labels) {
            net.commit_new_node(&raw(w), ClassId(l), 0).unwrap();
        }
        net
    }

    #[test]
    fn learn_into_examples() {
        let a = coded(&[0.2, 0.7]);
        let mut fast = net_with(&[&[0.3, 0.5, 0.9, 0.3]], &[1], 1.0);
        fast.learn_into(0, &a).unwrap();
        let w = fast.nodes()[0].weights.clone();
        assert!(w
            .iter()
            .zip([0.2, 0.5, 0.8, 0.3])
            .all(|(x, y)| close(*x, y)));
        fast.learn_into(0, &a).unwrap();
        assert_eq!(fast.nodes()[0].weights, w);
        assert_eq!(fast.nodes()[0].support, 3);

        let mut slow = net_with(&[&[0.3, 0.5, 0.9, 0.3]], &[1], 0.5);
        slow.learn_into(0, &a).unwrap();
        let w = &slow.nodes()[0].weights;
        assert!(w
            .iter()
            .zip([0.25, 0.5, 0.85, 0.3])
            .all(|(x, y)| close(*x, y)));

        assert!(matches!(
            slow.learn_into(4, &a),
            Err(Error::NodeNotFound(4))
        ));
    }

    #[test]
    fn commit_new_node_examples() {
        let mut net = ArtmapNetwork::new(2, ArtmapParams::default()).unwrap();
        let a = coded(&[0.2, 0.7]);
        let j = net.commit_new_node(&a, ClassId(1), 3).unwrap();
        assert_eq!(net.node_count(), 1);
        assert_eq!(net.nodes()[j].weights, a.as_slice());
        assert_eq!(net.nodes()[j].support, 1);
        let b = coded(&[0.9, 0.1]);
        net.commit_new_node(&b, ClassId(2), 4).unwrap();
        assert_eq!(net.node_count(), 2);
        assert_eq!(net.nodes()[0].weights, a.as_slice());

        let c = net.classify(&a).unwrap();
        assert_eq!(c.label, Some(ClassId(1)));
        assert_eq!(c.match_value, 1.0);
        assert!(net.commit_new_node(&a, ClassId(0), 0).is_err());
    }

    #[test]
    fn resonance_perfect_match() {
        let a = coded(&[0.2, 0.7]);
        let mut net = net_with(&[a.as_slice()], &[1], 1.0);
        let out = net
            .resonance_search(&a, &SearchRequest::new(0.75).supervised(Some(ClassId(1))))
            .unwrap();
        assert_eq!(out.kind, LearnKind::UpdatedExisting { node: 0 });
        assert_eq!(out.match_value, 1.0);
        assert_eq!(out.resets + out.match_tracks, 0);
    }

    #[test]
    fn resonance_label_mismatch_match_tracks() {
        let a = coded(&[0.2, 0.7]);
        let mut net = net_with(&[a.as_slice()], &[1], 1.0);
        let out = net
            .resonance_search(&a, &SearchRequest::new(0.75).supervised(Some(ClassId(2))))
            .unwrap();
        assert_eq!(out.kind, LearnKind::SearchExhausted);
        assert_eq!(out.match_tracks, 1);
        // ρ = max(0.75, 1.0 - 0.001)
        assert!(close(out.final_rho, 0.999));
        assert_eq!(net.nodes()[0].support, 1);
    }

    #[test]
    fn resonance_reset_then_runner_up() {
        // Node 0 is a large box containing A (high activation, low match);
        // node 1 sits just outside A with a high match.
        let a = coded(&[0.5, 0.5]);
        let w_big = [0.3, 0.3, 0.0, 0.0];
        let w_tight = [0.6, 0.5, 0.4, 0.5];
        let mut net = net_with(&[&w_big, &w_tight], &[1, 1], 1.0);

        // Brute-force scan of both nodes.
        let alpha = net.params.alpha;
        let t: Vec<f64> = [w_big, w_tight]
            .iter()
            .map(|w| {
                let and: f64 = a.as_slice().iter().zip(w).map(|(x, y)| x.min(*y)).sum();
                and + (1.0 - alpha) * (4.0 - w.iter().sum::<f64>())
            })
            .collect();
        let m: Vec<f64> = [w_big, w_tight]
            .iter()
            .map(|w| {
                a.as_slice()
                    .iter()
                    .zip(w)
                    .map(|(x, y)| x.min(*y))
                    .sum::<f64>()
                    / 2.0
            })
            .collect();
        assert!(t[0] > t[1]);
        let rho = 0.75;
        assert!(m[0] < rho && m[1] >= rho);

        let out = net.resonance_search(&a, &SearchRequest::new(rho)).unwrap();
        assert_eq!(out.kind, LearnKind::UpdatedExisting { node: 1 });
        assert_eq!(out.resets, 1);
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn search_respects_eligibility() {
        let a = coded(&[0.2, 0.7]);
        let mut net = net_with(&[a.as_slice()], &[1], 1.0);
        let never = |_: ClassId| false;
        let out = net
            .resonance_search(&a, &SearchRequest::new(0.0).eligible(&never))
            .unwrap();
        assert_eq!(out.kind, LearnKind::SearchExhausted);
        assert!(out.ranked_candidates.is_empty());
        assert_eq!(net.classify_filtered(&a, &never).unwrap().label, None);
    }

    #[test]
    fn classify_empty_and_recall() {
        let net = ArtmapNetwork::new(2, ArtmapParams::default()).unwrap();
        let a = coded(&[0.2, 0.7]);
        assert_eq!(net.classify(&a).unwrap().label, None);
        let net = net_with(&[a.as_slice()], &[2], 1.0);
        let c = net.classify(&a).unwrap();
        assert_eq!((c.label, c.match_value), (Some(ClassId(2)), 1.0));
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let a = coded(&[0.2, 0.7]);
        let net = net_with(&[a.as_slice(), a.as_slice()], &[3, 4], 1.0);
        assert_eq!(net.classify(&a).unwrap().winner, Some(0));
    }

    #[test]
    fn raw_activation_rule() {
        let a = coded(&[0.2, 0.7]);
        let mut net = net_with(&[&[0.1, 0.5, 0.6, 0.3]], &[1], 1.0);
        net.params.match_rule = MatchRule::RawActivation;
        assert!(close(net.match_value(&a, 0).unwrap(), 3.975 / 4.0));
    }

    #[test]
    fn params_validation() {
        let bad = [
            ArtmapParams {
                alpha: 1.5,
                ..Default::default()
            },
            ArtmapParams {
                beta: 0.0,
                ..Default::default()
            },
            ArtmapParams {
                epsilon: 1.0,
                ..Default::default()
            },
            ArtmapParams {
                rho_baseline: -0.1,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
        assert!(ArtmapParams::default().validate().is_ok());
    }
}
