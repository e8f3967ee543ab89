//! The uncertainty-modulated decision loop.
//!
//! Each detection passes through five criteria:
//!
//! 1. **Detection** (`psi1`): objectness gate; rejected detections are skipped.
//! 2. **Category fit** (`psi2`): starting vigilance of the resonance search,
//!    raised by match tracking on supervised label mismatches.
//! 3. **Similarity** (`psi3`): when the search is exhausted and no label is
//!    available, the top activated nodes are checked for containment overlap.
//! 4. **Relevance** (`psi4`): self-generated classes that gather too little
//!    support within a window are deactivated.
//! 5. **Persistence** (`psi5`): a hypothesis is only finalised once its modal
//!    frequency in the object's hypothesis buffer is high enough.
//!
//! A detection that passes the first gate takes exactly one of the
//! resonance, similarity or commitment paths.

mod buffer;
mod registry;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use buffer::HypothesisBuffer;
pub use registry::{
    exemplar_digest, relevance_threshold, ClassOrigin, ClassRecord, ClassRegistry, LabelRequest,
    LABEL_REQUEST_SUPPORT,
};

use crate::artmap::{
    overlap, ArtmapNetwork, ArtmapParams, ClassId, ComplementVector, FeatureVector, LearnKind,
    SearchRequest,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UncertaintyCriteria {
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    pub psi4: f64,
    pub psi5: f64,
    /// Hypothesis buffer length `K`.
    pub buffer_len: usize,
    /// Relevance window `W`, in frames.
    pub relevance_window: u64,
    /// Number of top-activation nodes examined by the similarity stage.
    pub similarity_fanout: usize,
}

impl Default for UncertaintyCriteria {
    fn default() -> Self {
        Self {
            psi1: 0.5,
            psi2: 0.75,
            psi3: 0.85,
            psi4: 0.06,
            psi5: 0.6,
            buffer_len: 10,
            relevance_window: 50,
            similarity_fanout: 5,
        }
    }
}

impl UncertaintyCriteria {
    pub fn validate(&self) -> Result<()> {
        let psis = [
            ("psi1", self.psi1),
            ("psi2", self.psi2),
            ("psi3", self.psi3),
            ("psi4", self.psi4),
            ("psi5", self.psi5),
        ];
        for (name, v) in psis {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::param(name, format!("{v} not in (0, 1)")));
            }
        }
        if self.buffer_len == 0 {
            return Err(Error::param("buffer_len", "must be at least 1"));
        }
        if self.relevance_window == 0 {
            return Err(Error::param("relevance_window", "must be at least 1"));
        }
        if self.similarity_fanout == 0 {
            return Err(Error::param("similarity_fanout", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub features: FeatureVector,
    pub objectness: f64,
    pub object_id: u64,
    pub position: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supervised_label: Option<ClassId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningMode {
    /// Labels come from the detection itself.
    Supervised,
    /// Labels come from a [`LabelOracle`] such as spatial memory.
    SelfSupervised,
    /// No labels; novel inputs found new classes.
    Unsupervised,
    /// Read-only: no weight changes, no class creation, no pruning.
    Frozen,
}

impl std::str::FromStr for LearningMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(Self::Supervised),
            "self_supervised" | "self-supervised" => Ok(Self::SelfSupervised),
            "unsupervised" => Ok(Self::Unsupervised),
            "frozen" => Ok(Self::Frozen),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Source of labels for self-supervised learning.
pub trait LabelOracle {
    fn label_for(&self, det: &Detection) -> Option<ClassId>;
}

/// Step-1 gate: pass iff `objectness ≥ psi1`.
pub fn gate_detection(det: &Detection, psi1: f64) -> bool {
    det.objectness >= psi1
}

/// Similarity fallback over the top `fanout` nodes of the original candidate
/// ranking. Returns the first node whose overlap with `a` reaches `psi3`.
pub fn similarity_stage(
    network: &ArtmapNetwork,
    a: &ComplementVector,
    ranked: &[usize],
    fanout: usize,
    psi3: f64,
) -> Result<Option<usize>> {
    for &j in ranked.iter().take(fanout) {
        let node = network.nodes().get(j).ok_or(Error::NodeNotFound(j))?;
        if overlap(a, &node.weights)? >= psi3 {
            return Ok(Some(j));
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionPath {
    /// Rejected at the detection gate.
    None,
    /// Read-only classification (frozen mode).
    Classified,
    /// Learned into a resonating node.
    Resonance,
    /// Learned into a node accepted by the similarity stage.
    Similarity,
    /// Committed a new node for an existing (supervised) class.
    Committed,
    /// Committed a new node under a newly allocated class.
    OneShot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "class")]
pub enum DecisionKind {
    RejectedDetection,
    Hypothesis(ClassId),
    Unknown,
    NewClassCreated(ClassId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub path: DecisionPath,
    /// Category assigned to this single detection before persistence.
    pub category: Option<ClassId>,
    pub resets: u32,
    pub match_tracked: u32,
    pub similarity_used: bool,
    pub buffer_frequency: f64,
    pub final_rho: f64,
    pub match_value: f64,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            path: DecisionPath::None,
            category: None,
            resets: 0,
            match_tracked: 0,
            similarity_used: false,
            buffer_frequency: 0.0,
            final_rho: 0.0,
            match_value: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub frame: u64,
    pub object_id: u64,
    pub kind: DecisionKind,
    /// Final hypothesis `H`; `None` encodes "I don't know" (`H = -1`).
    pub hypothesis: Option<ClassId>,
    pub diagnostics: Diagnostics,
}

/// The learning ensemble: network, class registry, criteria and the
/// per-object hypothesis buffers.
///
/// All mutation goes through `&mut self`; one frame's detections are
/// processed strictly in order.
#[derive(Clone, Debug)]
pub struct Learner {
    pub network: ArtmapNetwork,
    pub registry: ClassRegistry,
    pub criteria: UncertaintyCriteria,
    /// Off for offline dataset experiments, where `H` is the single-detection
    /// category.
    pub buffers_enabled: bool,
    clock: u64,
    buffers: BTreeMap<u64, HypothesisBuffer>,
    touched: BTreeSet<u64>,
    requested: BTreeSet<ClassId>,
    label_events: Vec<LabelRequest>,
}

impl Learner {
    pub fn new(
        raw_dimension: usize,
        params: ArtmapParams,
        criteria: UncertaintyCriteria,
    ) -> Result<Self> {
        criteria.validate()?;
        Ok(Self::from_parts(
            ArtmapNetwork::new(raw_dimension, params)?,
            ClassRegistry::default(),
            criteria,
            0,
        ))
    }

    pub fn from_parts(
        network: ArtmapNetwork,
        registry: ClassRegistry,
        criteria: UncertaintyCriteria,
        clock: u64,
    ) -> Self {
        Self {
            network,
            registry,
            criteria,
            buffers_enabled: false,
            clock,
            buffers: BTreeMap::new(),
            touched: BTreeSet::new(),
            requested: BTreeSet::new(),
            label_events: Vec::new(),
        }
    }

    /// Current frame index.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn raw_dimension(&self) -> usize {
        self.network.raw_dimension()
    }

    pub fn buffer(&self, object_id: u64) -> Option<&HypothesisBuffer> {
        self.buffers.get(&object_id)
    }

    pub fn tracked_objects(&self) -> impl Iterator<Item = u64> + '_ {
        self.buffers.keys().copied()
    }

    pub fn clear_buffers(&mut self) {
        self.buffers.clear();
        self.touched.clear();
    }

    /// Supervised class for a human-readable name, allocated on first use.
    pub fn supervised_class(&mut self, name: &str) -> ClassId {
        let id = self.registry.ensure_supervised(name, self.clock);
        self.network.register_labels(self.registry.len());
        id
    }

    /// Display name for a final hypothesis.
    pub fn display(&self, hypothesis: Option<ClassId>) -> String {
        match hypothesis {
            Some(c) => self.registry.display_label(c),
            None => "unknown".to_owned(),
        }
    }

    pub fn drain_label_requests(&mut self) -> Vec<LabelRequest> {
        std::mem::take(&mut self.label_events)
    }

    pub fn assign_human_label(&mut self, ids: &[ClassId], label: &str) -> Result<()> {
        self.registry.assign_human_label(ids, label)
    }

    /// Frozen-mode category for a single detection, without touching buffers
    /// or the clock. `None` when the detection is rejected or nothing matches.
    pub fn classify(&self, det: &Detection) -> Result<Option<ClassId>> {
        if !gate_detection(det, self.criteria.psi1) {
            return Ok(None);
        }
        let a = self.network.complement(&det.features)?;
        let eligible = |c: ClassId| self.registry.is_active(c);
        Ok(self.network.classify_filtered(&a, &eligible)?.label)
    }

    /// Runs one detection through the full decision ladder.
    pub fn evaluate_detection(
        &mut self,
        det: &Detection,
        mode: LearningMode,
        oracle: Option<&dyn LabelOracle>,
    ) -> Result<GateDecision> {
        let frame = self.clock;
        if !gate_detection(det, self.criteria.psi1) {
            return Ok(GateDecision {
                frame,
                object_id: det.object_id,
                kind: DecisionKind::RejectedDetection,
                hypothesis: None,
                diagnostics: Diagnostics::default(),
            });
        }

        let a = self.network.complement(&det.features)?;
        let mut diag = Diagnostics::default();
        let mut created = None;

        let category = if mode == LearningMode::Frozen {
            let registry = &self.registry;
            let eligible = |c: ClassId| registry.is_active(c);
            let c = self.network.classify_filtered(&a, &eligible)?;
            diag.path = DecisionPath::Classified;
            diag.final_rho = self.network.params.rho_baseline;
            diag.match_value = c.match_value;
            c.label
        } else {
            let supervised = match mode {
                LearningMode::Supervised => det.supervised_label,
                LearningMode::SelfSupervised => oracle.and_then(|o| o.label_for(det)),
                _ => None,
            };
            if let Some(label) = supervised {
                match self.registry.get(label) {
                    None => return Err(Error::ClassNotFound(label)),
                    Some(c) if !c.active => return Err(Error::ClassInactive(label)),
                    Some(_) => {}
                }
            }
            let (category, new_class) = self.learn(det, &a, supervised, &mut diag)?;
            created = new_class;
            Some(category)
        };
        diag.category = category;

        let hypothesis = if self.buffers_enabled {
            let k = self.criteria.buffer_len;
            self.buffers
                .entry(det.object_id)
                .or_insert_with(|| HypothesisBuffer::new(det.object_id, k, frame))
                .push(category, frame);
            self.touched.insert(det.object_id);
            let (h, freq) = self.persistence_finalize(det.object_id);
            diag.buffer_frequency = freq;
            h
        } else {
            category
        };

        let kind = match (created, hypothesis) {
            (Some(n), _) => DecisionKind::NewClassCreated(n),
            (None, Some(h)) => DecisionKind::Hypothesis(h),
            (None, None) => DecisionKind::Unknown,
        };
        Ok(GateDecision {
            frame,
            object_id: det.object_id,
            kind,
            hypothesis,
            diagnostics: diag,
        })
    }

    /// Resonance → similarity → commitment. Returns the learned category and
    /// the newly allocated class, if any.
    fn learn(
        &mut self,
        det: &Detection,
        a: &ComplementVector,
        supervised: Option<ClassId>,
        diag: &mut Diagnostics,
    ) -> Result<(ClassId, Option<ClassId>)> {
        let frame = self.clock;
        let outcome = {
            let registry = &self.registry;
            let eligible = |c: ClassId| registry.is_active(c);
            let request = SearchRequest::new(self.criteria.psi2)
                .supervised(supervised)
                .eligible(&eligible);
            self.network.resonance_search(a, &request)?
        };
        diag.resets = outcome.resets;
        diag.match_tracked = outcome.match_tracks;
        diag.final_rho = outcome.final_rho;
        diag.match_value = outcome.match_value;

        if let LearnKind::UpdatedExisting { node } = outcome.kind {
            let label = self.network.nodes()[node].label;
            self.registry.record_support(label);
            diag.path = DecisionPath::Resonance;
            return Ok((label, None));
        }

        if let Some(label) = supervised {
            // Supervised exhaustion always commits under the given label so a
            // learned node never disagrees with its supervisor.
            self.network.commit_new_node(a, label, frame)?;
            self.registry.record_support(label);
            diag.path = DecisionPath::Committed;
            return Ok((label, None));
        }

        if let Some(j) = similarity_stage(
            &self.network,
            a,
            &outcome.ranked_candidates,
            self.criteria.similarity_fanout,
            self.criteria.psi3,
        )? {
            self.network.learn_into(j, a)?;
            let label = self.network.nodes()[j].label;
            self.registry.record_support(label);
            diag.path = DecisionPath::Similarity;
            diag.similarity_used = true;
            return Ok((label, None));
        }

        let n = self.one_shot_create(det, a)?;
        diag.path = DecisionPath::OneShot;
        Ok((n, Some(n)))
    }

    /// Allocates `N = n + 1` and commits a node with `w = A` under it.
    fn one_shot_create(&mut self, det: &Detection, a: &ComplementVector) -> Result<ClassId> {
        let frame = self.clock;
        let n = self.registry.allocate(
            ClassOrigin::SelfGenerated,
            None,
            frame,
            exemplar_digest(&det.features),
        );
        self.network.register_labels(self.registry.len());
        self.network.commit_new_node(a, n, frame)?;
        self.registry.record_support(n);
        Ok(n)
    }

    /// Final hypothesis for an object plus the modal buffer frequency.
    /// Enqueues a label request the first time an unlabeled self-generated
    /// class is finalised.
    pub fn persistence_finalize(&mut self, object_id: u64) -> (Option<ClassId>, f64) {
        let Some(buffer) = self.buffers.get(&object_id) else {
            return (None, 0.0);
        };
        let freq = buffer.frequency();
        let h = buffer.finalize(self.criteria.psi5);
        if let Some(c) = h {
            if let Some(rec) = self.registry.get(c) {
                if rec.origin == ClassOrigin::SelfGenerated
                    && rec.human_label.is_none()
                    && self.requested.insert(c)
                {
                    self.label_events.push(LabelRequest {
                        class_index: c,
                        support_count: rec.support,
                        exemplar: rec.exemplar.clone(),
                    });
                }
            }
        }
        (h, freq)
    }

    /// Closes the current frame: decays buffers of objects not seen in it,
    /// drops objects unseen for the relevance window, applies relevance
    /// pruning (unless frozen) and advances the clock.
    pub fn end_frame(&mut self, mode: LearningMode) -> Vec<ClassId> {
        let frame = self.clock;
        let window = self.criteria.relevance_window;
        for (id, buf) in self.buffers.iter_mut() {
            if !self.touched.contains(id) {
                buf.push_empty();
            }
        }
        self.buffers
            .retain(|_, b| frame.saturating_sub(b.last_update_frame) < window);
        self.touched.clear();
        let pruned = if mode == LearningMode::Frozen {
            Vec::new()
        } else {
            self.registry
                .relevance_prune(frame, self.criteria.psi4, window)
        };
        self.clock += 1;
        pruned
    }

    /// Evaluates every detection of one frame in order, then closes it.
    pub fn process_frame(
        &mut self,
        detections: &[Detection],
        mode: LearningMode,
        oracle: Option<&dyn LabelOracle>,
    ) -> Result<Vec<GateDecision>> {
        let decisions = detections
            .iter()
            .map(|d| self.evaluate_detection(d, mode, oracle))
            .collect::<Result<Vec<_>>>()?;
        self.end_frame(mode);
        Ok(decisions)
    }
}
