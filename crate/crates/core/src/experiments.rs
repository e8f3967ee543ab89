//! Training, scoring and the experiment protocols run against the simulator.
//!
//! Dataset experiments score frozen classifications with hypothesis buffers
//! off: a sample is correct when the display label of its category equals the
//! ground-truth name. Rejected and unknown samples count as wrong. The mission
//! protocol turns buffers on and scores the persistent per-object hypothesis.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artmap::{ArtmapParams, ClassId};
use crate::error::{Error, Result};
use crate::gate::{DecisionKind, Learner, LearningMode, UncertaintyCriteria};
use crate::simenv::{
    mix_seed, DatasetBundle, ScenarioSpec, SetId, SimFrame, SimWorld, ViewCondition,
};
use crate::spatial::SpatialMemory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OneShotConfig {
    /// Similarity threshold used while learning the novel set.
    pub psi3: f64,
    pub label: String,
}

impl Default for OneShotConfig {
    fn default() -> Self {
        Self {
            psi3: 0.6,
            label: "fire_truck".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeightsConfig {
    pub set: SetId,
    /// Training altitudes; the multi-height arm visits them in order.
    pub train_altitudes: Vec<f64>,
    pub train_samples: usize,
    pub eval_altitudes: Vec<f64>,
    pub eval_samples: usize,
}

impl Default for HeightsConfig {
    fn default() -> Self {
        Self {
            set: SetId::A,
            train_altitudes: vec![10.0, 20.0],
            train_samples: 150,
            eval_altitudes: (0..=6).map(|i| 5.0 * i as f64).collect(),
            eval_samples: 150,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub home: String,
    pub second: String,
    pub survey_altitude: f64,
    pub acquire_altitude: f64,
    pub climb_altitudes: Vec<f64>,
    pub azimuths: Vec<f64>,
    pub frames_per_step: u64,
    pub validation_altitude: f64,
    pub validation_frames: u64,
    /// Sets scored in the survey and validation passes.
    pub scored_sets: Vec<SetId>,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            home: "set_a".into(),
            second: "set_ab".into(),
            survey_altitude: 30.0,
            acquire_altitude: 2.0,
            climb_altitudes: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            azimuths: vec![0.0, 45.0, 90.0],
            frames_per_step: 25,
            validation_altitude: 20.0,
            validation_frames: 10,
            scored_sets: vec![SetId::A, SetId::B, SetId::O, SetId::C],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenario: ScenarioSpec,
    pub params: ArtmapParams,
    pub criteria: UncertaintyCriteria,
    /// Curve checkpoints in percent, strictly increasing in (0, 100].
    pub checkpoints: Vec<f64>,
    pub oneshot: OneShotConfig,
    pub heights: HeightsConfig,
    pub mission: MissionConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            scenario: ScenarioSpec::default(),
            params: ArtmapParams::default(),
            criteria: UncertaintyCriteria::default(),
            checkpoints: (1..=10).map(|i| 10.0 * i as f64).collect(),
            oneshot: OneShotConfig::default(),
            heights: HeightsConfig::default(),
            mission: MissionConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.params.validate()?;
        self.criteria.validate()?;
        let mut prev = 0.0;
        for &c in &self.checkpoints {
            if !(c > prev && c <= 100.0) {
                return Err(Error::Config(format!(
                    "checkpoints must be strictly increasing in (0, 100], got {:?}",
                    self.checkpoints
                )));
            }
            prev = c;
        }
        if !(0.0..=1.0).contains(&self.oneshot.psi3) {
            return Err(Error::Config("oneshot.psi3 must lie in [0, 1]".into()));
        }
        if self.oneshot.label.trim().is_empty() {
            return Err(Error::Config("oneshot.label must not be empty".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn new_learner(&self) -> Result<Learner> {
        Learner::new(
            self.scenario.raw_dimension(),
            self.params.clone(),
            self.criteria.clone(),
        )
    }
}

/// Scoring result for one test set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub correct: usize,
    pub unknown: usize,
    pub total: usize,
}

impl Score {
    /// Percent correct; 0 for an empty set.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }
}

/// Counts collected while training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub samples: usize,
    pub supervised_samples: usize,
    pub new_classes: usize,
    pub resets: u64,
    pub match_tracks: u64,
    /// Whether the first sample seen founded a new class.
    pub first_created: bool,
}

impl TrainStats {
    fn merge(&mut self, other: &TrainStats) {
        if self.samples == 0 {
            self.first_created = other.first_created;
        }
        self.samples += other.samples;
        self.supervised_samples += other.supervised_samples;
        self.new_classes += other.new_classes;
        self.resets += other.resets;
        self.match_tracks += other.match_tracks;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub experiment: String,
    pub phase: String,
    /// Share of the phase's training data seen, in percent.
    pub fraction: f64,
    pub accuracies: BTreeMap<String, f64>,
    pub new_classes: usize,
    pub resets: u64,
    pub match_tracks: u64,
    pub label_requests: usize,
}

impl MetricsRecord {
    pub fn accuracy(&self, testset: &str) -> Option<f64> {
        self.accuracies.get(testset).copied()
    }
}

/// Frozen-mode score of every detection in `frames`.
pub fn score(learner: &Learner, frames: &[SimFrame]) -> Result<Score> {
    let mut s = Score::default();
    for det in frames.iter().flat_map(|f| &f.detections) {
        s.total += 1;
        match learner.classify(&det.to_detection(None))? {
            Some(c) => {
                if learner.registry.display_label(c) == det.truth {
                    s.correct += 1;
                }
            }
            None => s.unknown += 1,
        }
    }
    Ok(s)
}

/// Indices `0..n` in a seeded random order.
pub fn shuffled_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Presents each frame once, in the given order. In supervised mode each
/// detection carries its ground-truth class; otherwise labels are stripped.
pub fn train_frames<'a>(
    learner: &mut Learner,
    frames: impl IntoIterator<Item = &'a SimFrame>,
    mode: LearningMode,
) -> Result<TrainStats> {
    let mut stats = TrainStats::default();
    for frame in frames {
        let mut dets = Vec::with_capacity(frame.detections.len());
        for d in &frame.detections {
            let label = match mode {
                LearningMode::Supervised => Some(learner.supervised_class(&d.truth)),
                _ => None,
            };
            dets.push(d.to_detection(label));
        }
        let decisions = learner.process_frame(&dets, mode, None)?;
        for (det, dec) in dets.iter().zip(&decisions) {
            let created = matches!(dec.kind, DecisionKind::NewClassCreated(_));
            if stats.samples == 0 {
                stats.first_created = created;
            }
            stats.samples += 1;
            stats.supervised_samples += usize::from(det.supervised_label.is_some());
            stats.new_classes += usize::from(created);
            stats.resets += u64::from(dec.diagnostics.resets);
            stats.match_tracks += u64::from(dec.diagnostics.match_tracked);
        }
    }
    Ok(stats)
}

pub type TestSets<'a> = [(&'a str, &'a [SimFrame])];

fn record(
    learner: &Learner,
    experiment: &str,
    phase: &str,
    fraction: f64,
    tests: &TestSets<'_>,
    stats: &TrainStats,
) -> Result<MetricsRecord> {
    let mut accuracies = BTreeMap::new();
    for (name, frames) in tests {
        accuracies.insert((*name).to_owned(), score(learner, frames)?.accuracy());
    }
    Ok(MetricsRecord {
        experiment: experiment.to_owned(),
        phase: phase.to_owned(),
        fraction,
        accuracies,
        new_classes: stats.new_classes,
        resets: stats.resets,
        match_tracks: stats.match_tracks,
        label_requests: learner.registry.flag_label_requests().len(),
    })
}

/// Trains on `train` in seeded random order, scoring every test set before
/// training and at each checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn train_curve(
    learner: &mut Learner,
    train: &[SimFrame],
    mode: LearningMode,
    checkpoints: &[f64],
    tests: &TestSets<'_>,
    experiment: &str,
    phase: &str,
    seed: u64,
) -> Result<(Vec<MetricsRecord>, TrainStats)> {
    let order = shuffled_order(train.len(), seed);
    let mut stats = TrainStats::default();
    let mut rows = vec![record(learner, experiment, phase, 0.0, tests, &stats)?];
    let mut done = 0;
    for &pct in checkpoints {
        let upto = ((pct / 100.0) * train.len() as f64 + 1e-9).floor() as usize;
        let upto = upto.min(train.len());
        let chunk = train_frames(learner, order[done..upto].iter().map(|&i| &train[i]), mode)?;
        stats.merge(&chunk);
        done = upto;
        rows.push(record(learner, experiment, phase, pct, tests, &stats)?);
    }
    Ok((rows, stats))
}

/// The simulated world and its generated datasets.
pub struct Workbench {
    pub world: SimWorld,
    pub data: DatasetBundle,
}

impl Workbench {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let world = SimWorld::build(&cfg.scenario)?;
        let data = world.generate_datasets();
        Ok(Self { world, data })
    }

    pub fn stream(&self, name: &str) -> Result<&[SimFrame]> {
        self.data
            .streams
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Config(format!("dataset has no stream named {name}")))
    }
}

fn phase_seed(cfg: &ExperimentConfig, phase: &str) -> u64 {
    let tag = phase
        .bytes()
        .fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(u64::from(b)));
    mix_seed(&[cfg.seed, tag])
}

pub struct GroundResult {
    pub learner: Learner,
    pub record: MetricsRecord,
    pub stats: TrainStats,
}

/// Supervised training on the ground stream, scored on the same stream.
pub fn train_ground(cfg: &ExperimentConfig, bench: &Workbench) -> Result<GroundResult> {
    let ground = bench.stream("ground")?;
    let mut learner = cfg.new_learner()?;
    let order = shuffled_order(ground.len(), phase_seed(cfg, "ground"));
    let stats = train_frames(
        &mut learner,
        order.iter().map(|&i| &ground[i]),
        LearningMode::Supervised,
    )?;
    let record = record(
        &learner,
        "ground",
        "after_ground",
        100.0,
        &[("ground", ground)],
        &stats,
    )?;
    Ok(GroundResult {
        learner,
        record,
        stats,
    })
}

pub struct PhaseResult {
    pub learner: Learner,
    pub records: Vec<MetricsRecord>,
}

fn aerial_a_training(bench: &Workbench) -> Result<Vec<SimFrame>> {
    let mut train = bench.stream("aerial_a_train")?.to_vec();
    train.extend_from_slice(bench.stream("aerial_o_train")?);
    Ok(train)
}

/// Ground model → sequential supervised training on aerial views of sets A
/// and O, with the ground and aerial test sets scored along the way.
pub fn exp_transfer(
    cfg: &ExperimentConfig,
    bench: &Workbench,
    ground: &Learner,
) -> Result<PhaseResult> {
    let mut learner = ground.clone();
    let train = aerial_a_training(bench)?;
    let tests = [
        ("ground", bench.stream("ground")?),
        ("aerial_a", bench.stream("aerial_a_test")?),
        ("aerial_b", bench.stream("aerial_b_test")?),
    ];
    let (records, _) = train_curve(
        &mut learner,
        &train,
        LearningMode::Supervised,
        &cfg.checkpoints,
        &tests,
        "transfer",
        "aerial_a",
        phase_seed(cfg, "aerial_a"),
    )?;
    Ok(PhaseResult { learner, records })
}

/// Transfer followed by sequential supervised training on aerial set B.
pub fn exp_boundary(
    cfg: &ExperimentConfig,
    bench: &Workbench,
    ground: &Learner,
) -> Result<PhaseResult> {
    let transfer = exp_transfer(cfg, bench, ground)?;
    let mut learner = transfer.learner;
    let mut records: Vec<MetricsRecord> = transfer
        .records
        .into_iter()
        .map(|mut r| {
            r.experiment = "boundary".into();
            r
        })
        .collect();
    let tests = [
        ("ground", bench.stream("ground")?),
        ("aerial_a", bench.stream("aerial_a_test")?),
        ("aerial_b", bench.stream("aerial_b_test")?),
    ];
    let (b_rows, _) = train_curve(
        &mut learner,
        bench.stream("aerial_b_train")?,
        LearningMode::Supervised,
        &cfg.checkpoints,
        &tests,
        "boundary",
        "aerial_b",
        phase_seed(cfg, "aerial_b"),
    )?;
    records.extend(b_rows);
    Ok(PhaseResult { learner, records })
}

/// Human-label assignments keyed by class index, with `*` matching every
/// flagged class not listed explicitly.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelMap {
    pub by_class: BTreeMap<ClassId, String>,
    pub wildcard: Option<String>,
}

impl LabelMap {
    pub fn all(label: &str) -> Self {
        Self {
            by_class: BTreeMap::new(),
            wildcard: Some(label.to_owned()),
        }
    }

    /// Parses `{"3": "fire_truck", "*": "other"}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text)?;
        let mut map = Self::default();
        for (key, label) in raw {
            let label = label.trim();
            if label.is_empty() {
                return Err(Error::Malformed(format!("empty label for key {key:?}")));
            }
            if key == "*" {
                map.wildcard = Some(label.to_owned());
                continue;
            }
            let id: u32 = key.trim().parse().map_err(|_| {
                Error::Malformed(format!("label map key {key:?} is not a class index"))
            })?;
            if id == 0 {
                return Err(Error::Malformed("class indices start at 1".into()));
            }
            map.by_class.insert(ClassId(id), label.to_owned());
        }
        Ok(map)
    }

    pub fn label_for(&self, class: ClassId) -> Option<&str> {
        self.by_class
            .get(&class)
            .or(self.wildcard.as_ref())
            .map(String::as_str)
    }

    /// Labels every currently flagged class the map covers. Returns the
    /// `(class, label)` pairs applied; unmapped classes stay flagged.
    pub fn apply(&self, learner: &mut Learner) -> Result<Vec<(ClassId, String)>> {
        let mut applied = Vec::new();
        for class in learner.registry.flag_label_requests() {
            if let Some(label) = self.label_for(class) {
                learner.assign_human_label(&[class], label)?;
                applied.push((class, label.to_owned()));
            }
        }
        Ok(applied)
    }
}

pub struct OneShotResult {
    pub learner: Learner,
    pub records: Vec<MetricsRecord>,
    pub stats: TrainStats,
    /// Classes flagged for labeling after learning the novel set.
    pub flagged: Vec<ClassId>,
    pub applied: Vec<(ClassId, String)>,
    /// Share of novel test samples whose category is self-generated and
    /// unlabeled, before labeling.
    pub unknown_before_labeling: f64,
}

/// Unsupervised learning of aerial set C on the post-boundary model, then
/// human labeling of the flagged classes.
pub fn exp_oneshot(
    cfg: &ExperimentConfig,
    bench: &Workbench,
    model: &Learner,
    labels: &LabelMap,
) -> Result<OneShotResult> {
    let mut learner = model.clone();
    let tests = [
        ("ground", bench.stream("ground")?),
        ("aerial_a", bench.stream("aerial_a_test")?),
        ("aerial_b", bench.stream("aerial_b_test")?),
        ("aerial_c", bench.stream("aerial_c_test")?),
    ];
    let none = TrainStats::default();
    let mut records = vec![record(&learner, "oneshot", "initial", 0.0, &tests, &none)?];

    let train = bench.stream("aerial_c_train")?;
    let order = shuffled_order(train.len(), phase_seed(cfg, "aerial_c"));
    let saved_psi3 = learner.criteria.psi3;
    learner.criteria.psi3 = cfg.oneshot.psi3;
    let stats = train_frames(
        &mut learner,
        order.iter().map(|&i| &train[i]),
        LearningMode::Unsupervised,
    )?;
    learner.criteria.psi3 = saved_psi3;
    records.push(record(
        &learner,
        "oneshot",
        "after_learning",
        100.0,
        &tests,
        &stats,
    )?);

    let c_test = bench.stream("aerial_c_test")?;
    let mut unknown = 0usize;
    let mut total = 0usize;
    for det in c_test.iter().flat_map(|f| &f.detections) {
        total += 1;
        let self_generated = learner
            .classify(&det.to_detection(None))?
            .and_then(|c| learner.registry.get(c))
            .is_none_or(|r| r.human_label.is_none());
        unknown += usize::from(self_generated);
    }
    let unknown_before_labeling = if total == 0 {
        0.0
    } else {
        100.0 * unknown as f64 / total as f64
    };

    let flagged = learner.registry.flag_label_requests();
    let applied = labels.apply(&mut learner)?;
    records.push(record(
        &learner,
        "oneshot",
        "after_labeling",
        100.0,
        &tests,
        &stats,
    )?);
    Ok(OneShotResult {
        learner,
        records,
        stats,
        flagged,
        applied,
        unknown_before_labeling,
    })
}

pub struct HeightsResult {
    /// Arm name → accuracy per evaluation altitude.
    pub curves: BTreeMap<String, Vec<(f64, f64)>>,
    pub records: Vec<MetricsRecord>,
}

/// Ground model plus one training height per single arm, and one arm that
/// visits every training height in sequence, each scored across altitudes.
pub fn exp_heights(
    cfg: &ExperimentConfig,
    bench: &Workbench,
    ground: &Learner,
) -> Result<HeightsResult> {
    let h = &cfg.heights;
    let world = &bench.world;
    let train_at = |alt: f64, k: usize| {
        world.sample_stream(h.set, [alt, alt], h.train_samples, 0x4854_0000 + k as u64)
    };
    let tests: Vec<(String, Vec<SimFrame>)> = h
        .eval_altitudes
        .iter()
        .enumerate()
        .map(|(k, &alt)| {
            (
                format!("{alt}"),
                world.sample_stream(h.set, [alt, alt], h.eval_samples, 0x4845_0000 + k as u64),
            )
        })
        .collect();
    let test_refs: Vec<(&str, &[SimFrame])> = tests
        .iter()
        .map(|(n, f)| (n.as_str(), f.as_slice()))
        .collect();

    let mut arms: Vec<(String, Vec<usize>)> = vec![("ground".into(), Vec::new())];
    for k in 0..h.train_altitudes.len() {
        arms.push((format!("single_{}", h.train_altitudes[k]), vec![k]));
    }
    if h.train_altitudes.len() > 1 {
        let names: Vec<String> = h.train_altitudes.iter().map(|a| a.to_string()).collect();
        arms.push((
            format!("multi_{}", names.join("_")),
            (0..h.train_altitudes.len()).collect(),
        ));
    }

    let train_sets: Vec<Vec<SimFrame>> = h
        .train_altitudes
        .iter()
        .enumerate()
        .map(|(k, &alt)| train_at(alt, k))
        .collect();

    let mut curves = BTreeMap::new();
    let mut records = Vec::new();
    for (name, steps) in arms {
        let mut learner = ground.clone();
        let mut stats = TrainStats::default();
        for &k in &steps {
            let set = &train_sets[k];
            let order = shuffled_order(set.len(), phase_seed(cfg, &format!("height_{k}")));
            let s = train_frames(
                &mut learner,
                order.iter().map(|&i| &set[i]),
                LearningMode::Supervised,
            )?;
            stats.merge(&s);
        }
        let rec = record(&learner, "heights", &name, 100.0, &test_refs, &stats)?;
        let curve = h
            .eval_altitudes
            .iter()
            .map(|&alt| (alt, rec.accuracies[&format!("{alt}")]))
            .collect();
        curves.insert(name, curve);
        records.push(rec);
    }
    Ok(HeightsResult { curves, records })
}

/// Per-object outcome of a mission survey or validation pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectCall {
    pub object_id: u64,
    pub truth: String,
    pub called: String,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissionPass {
    pub phase: String,
    pub intersection: String,
    pub altitude: f64,
    pub calls: Vec<ObjectCall>,
}

impl MissionPass {
    pub fn accuracy(&self) -> f64 {
        if self.calls.is_empty() {
            return 0.0;
        }
        100.0 * self.calls.iter().filter(|c| c.correct).count() as f64 / self.calls.len() as f64
    }
}

pub struct MissionResult {
    pub learner: Learner,
    pub passes: Vec<MissionPass>,
    pub learning: TrainStats,
    pub records: Vec<MetricsRecord>,
}

struct Mission<'a> {
    cfg: &'a ExperimentConfig,
    world: &'a SimWorld,
    learner: Learner,
    memory: SpatialMemory,
    frame: u64,
    passes: Vec<MissionPass>,
    learning: TrainStats,
}

impl Mission<'_> {
    fn view(&self, altitude: f64, azimuth: f64) -> ViewCondition {
        ViewCondition::new(altitude, azimuth, mix_seed(&[self.cfg.seed, self.frame]))
    }

    fn intersection(&self, name: &str) -> Result<usize> {
        self.world
            .intersection_index(name)
            .ok_or_else(|| Error::Config(format!("scenario has no intersection named {name}")))
    }

    /// Frozen observation with persistence buffers; scores each object's
    /// final hypothesis after the last frame.
    fn survey(&mut self, phase: &str, name: &str, altitude: f64, frames: u64) -> Result<()> {
        let at = self.intersection(name)?;
        self.learner.clear_buffers();
        self.learner.buffers_enabled = true;
        for _ in 0..frames {
            let frame = self
                .world
                .render_frame(self.view(altitude, 0.0), self.frame, at);
            let dets: Vec<_> = frame
                .detections
                .iter()
                .map(|d| d.to_detection(None))
                .collect();
            self.learner
                .process_frame(&dets, LearningMode::Frozen, None)?;
            self.frame += 1;
        }
        let scored = &self.cfg.mission.scored_sets;
        let mut calls = Vec::new();
        for obj in self
            .world
            .objects_at(at)
            .filter(|o| scored.contains(&o.set))
        {
            let (h, _) = self.learner.persistence_finalize(obj.object_id);
            let called = self.learner.display(h);
            calls.push(ObjectCall {
                object_id: obj.object_id,
                truth: obj.label.clone(),
                correct: called == obj.label,
                called,
            });
        }
        self.passes.push(MissionPass {
            phase: phase.to_owned(),
            intersection: name.to_owned(),
            altitude,
            calls,
        });
        Ok(())
    }

    /// Close-range pass storing identities and positions in spatial memory.
    fn acquire(&mut self, name: &str) -> Result<()> {
        let at = self.intersection(name)?;
        let altitude = self.cfg.mission.acquire_altitude;
        let frame = self
            .world
            .render_frame(self.view(altitude, 0.0), self.frame, at);
        let confidence = self.world.identification_confidence(altitude);
        for det in &frame.detections {
            let class = self.learner.supervised_class(&det.truth);
            self.memory
                .acquire(det.object_id, det.position, class, confidence, self.frame);
        }
        self.frame += 1;
        Ok(())
    }

    /// Self-supervised climb at every azimuth, labels drawn from spatial
    /// memory.
    fn learn(&mut self, name: &str) -> Result<()> {
        let at = self.intersection(name)?;
        let m = &self.cfg.mission;
        self.learner.clear_buffers();
        self.learner.buffers_enabled = true;
        for &azimuth in &m.azimuths {
            for &altitude in &m.climb_altitudes {
                for _ in 0..m.frames_per_step {
                    let frame =
                        self.world
                            .render_frame(self.view(altitude, azimuth), self.frame, at);
                    let dets: Vec<_> = frame
                        .detections
                        .iter()
                        .map(|d| d.to_detection(None))
                        .collect();
                    let decisions = self.learner.process_frame(
                        &dets,
                        LearningMode::SelfSupervised,
                        Some(&self.memory),
                    )?;
                    for dec in &decisions {
                        if dec.kind == DecisionKind::RejectedDetection {
                            continue;
                        }
                        self.learning.samples += 1;
                        self.learning.new_classes +=
                            usize::from(matches!(dec.kind, DecisionKind::NewClassCreated(_)));
                        self.learning.resets += u64::from(dec.diagnostics.resets);
                        self.learning.match_tracks += u64::from(dec.diagnostics.match_tracked);
                    }
                    self.frame += 1;
                }
            }
        }
        Ok(())
    }
}

/// Scripted self-supervised mission: survey, acquire, climb and learn at the
/// home intersection, repeat at the second one, then validate at home.
pub fn exp_mission(
    cfg: &ExperimentConfig,
    bench: &Workbench,
    ground: &Learner,
) -> Result<MissionResult> {
    let m = &cfg.mission;
    let mut mission = Mission {
        cfg,
        world: &bench.world,
        learner: ground.clone(),
        memory: SpatialMemory::default(),
        frame: 0,
        passes: Vec::new(),
        learning: TrainStats::default(),
    };
    let k = m.validation_frames;
    mission.survey("initial", &m.home, m.survey_altitude, k)?;
    mission.acquire(&m.home)?;
    mission.learn(&m.home)?;
    mission.survey("after_learning", &m.home, m.validation_altitude, k)?;
    mission.survey("initial", &m.second, m.survey_altitude, k)?;
    mission.acquire(&m.second)?;
    mission.learn(&m.second)?;
    mission.survey("after_learning", &m.second, m.validation_altitude, k)?;
    mission.survey("validation", &m.home, m.validation_altitude, k)?;

    let mut learner = mission.learner;
    learner.buffers_enabled = false;
    learner.clear_buffers();
    let records = mission
        .passes
        .iter()
        .map(|p| {
            let mut accuracies = BTreeMap::new();
            accuracies.insert(p.intersection.clone(), p.accuracy());
            MetricsRecord {
                experiment: "mission".into(),
                phase: p.phase.clone(),
                fraction: 100.0,
                accuracies,
                new_classes: mission.learning.new_classes,
                resets: mission.learning.resets,
                match_tracks: mission.learning.match_tracks,
                label_requests: learner.registry.flag_label_requests().len(),
            }
        })
        .collect();
    Ok(MissionResult {
        learner,
        passes: mission.passes,
        learning: mission.learning,
        records,
    })
}

/// Long-format CSV: one row per record and test set.
pub fn write_metrics_csv<W: Write>(records: &[MetricsRecord], mut out: W) -> Result<()> {
    writeln!(
        out,
        "experiment,phase,fraction,testset,accuracy,new_classes,resets,match_tracks,label_requests"
    )?;
    for r in records {
        for (testset, acc) in &r.accuracies {
            writeln!(
                out,
                "{},{},{},{},{:.4},{},{},{},{}",
                r.experiment,
                r.phase,
                r.fraction,
                testset,
                acc,
                r.new_classes,
                r.resets,
                r.match_tracks,
                r.label_requests
            )?;
        }
    }
    Ok(())
}
