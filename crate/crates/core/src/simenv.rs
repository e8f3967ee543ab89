//! Deterministic synthetic multi-view environment.
//!
//! Objects of four sets (A: sedans, B: vans, O: other traffic objects,
//! C: fire trucks) live as clusters in a `[0,1]^d` feature space split into
//! three blocks:
//!
//! * identity block: the set's characteristic pattern;
//! * rise block: flat at ground level, rising with altitude for every set;
//! * structure block: low for A/B/O, high for C.
//!
//! Every object carries a ground appearance signature and an independent
//! aerial one. A view at altitude `h` and azimuth `θ` renders
//!
//! ```text
//! clip(center + ground_sig + (h/30)·drift + λ(h)·(aerial_sig - ground_sig)
//!      + azimuth_mix·((cos θ - 1)·u + sin θ·v) + N(0, σ(h)²))
//! ```
//!
//! where `λ(h) = min(1, h / appearance_full_altitude)` and `σ` grows with
//! altitude. A and B drift toward O's identity pattern, so from the air they
//! overlap each other while C stays apart.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::artmap::{ClassId, FeatureVector};
use crate::error::{Error, Result};
use crate::gate::Detection;

/// Altitude at which drift reaches its full magnitude.
pub const FULL_DRIFT_ALTITUDE: f64 = 30.0;
const SPREAD: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SetId {
    A,
    B,
    O,
    C,
}

impl SetId {
    pub const ALL: [SetId; 4] = [SetId::A, SetId::B, SetId::O, SetId::C];

    fn tag(self) -> u64 {
        match self {
            SetId::A => 1,
            SetId::B => 2,
            SetId::O => 3,
            SetId::C => 4,
        }
    }
}

impl fmt::Display for SetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SetId::A => "A",
            SetId::B => "B",
            SetId::O => "O",
            SetId::C => "C",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutSpec {
    pub identity_dims: usize,
    pub rise_dims: usize,
    pub structure_dims: usize,
}

impl LayoutSpec {
    pub fn raw_dimension(&self) -> usize {
        self.identity_dims + self.rise_dims + self.structure_dims
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    /// Rise-block level at ground.
    pub rise_base: f64,
    /// Rise-block increase per dimension at 30 m.
    pub aerial_rise: f64,
    /// Altitude at which the aerial appearance signature fully replaces the
    /// ground one.
    pub appearance_full_altitude: f64,
    pub azimuth_mix: f64,
    pub noise_ground: f64,
    /// Extra noise standard deviation at 30 m.
    pub noise_per_30m: f64,
    pub objectness_ground: f64,
    pub objectness_30m: f64,
    pub objectness_concentration: f64,
    /// Loss of identification confidence per 30 m of altitude.
    pub confidence_per_30m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "of")]
pub enum IdentityPattern {
    /// Random ±gain pattern drawn from the scenario seed.
    Random,
    /// The negated pattern of another set.
    Mirror(SetId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSetSpec {
    pub set: SetId,
    pub label: String,
    pub identity_gain: f64,
    pub identity_pattern: IdentityPattern,
    pub structure_level: f64,
    /// Per-dimension std of the appearance signatures.
    pub instance_spread: f64,
    /// Set whose identity pattern the aerial view drifts toward.
    #[serde(default)]
    pub aerial_target: Option<SetId>,
    /// Fraction of the identity gap closed at 30 m.
    #[serde(default)]
    pub convergence: f64,
    pub ground_samples: usize,
    pub aerial_samples: usize,
    /// Share of aerial samples used for training; the rest is test data.
    pub aerial_train_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementSpec {
    pub set: SetId,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionSpec {
    pub name: String,
    pub center: [f64; 2],
    pub members: Vec<PlacementSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub ground_altitude: [f64; 2],
    pub aerial_altitude: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub layout: LayoutSpec,
    pub view: ViewSpec,
    pub domains: DomainSpec,
    /// Detector floor applied when collecting dataset samples.
    pub detection_floor: f64,
    /// Spacing of objects placed at an intersection.
    pub object_spacing: f64,
    pub sets: Vec<ObjectSetSpec>,
    pub intersections: Vec<IntersectionSpec>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        let set =
            |set, label: &str, gain, pattern, structure, target, conv, ground, aerial, frac| {
                ObjectSetSpec {
                    set,
                    label: label.to_owned(),
                    identity_gain: gain,
                    identity_pattern: pattern,
                    structure_level: structure,
                    instance_spread: SPREAD,
                    aerial_target: target,
                    convergence: conv,
                    ground_samples: ground,
                    aerial_samples: aerial,
                    aerial_train_fraction: frac,
                }
            };
        let place = |set, count| PlacementSpec { set, count };
        Self {
            seed: 42,
            layout: LayoutSpec {
                identity_dims: 16,
                rise_dims: 8,
                structure_dims: 8,
            },
            view: ViewSpec {
                rise_base: 0.1,
                aerial_rise: 0.8,
                appearance_full_altitude: 15.0,
                azimuth_mix: 0.02,
                noise_ground: 0.008,
                noise_per_30m: 0.04,
                objectness_ground: 0.9,
                objectness_30m: 0.65,
                objectness_concentration: 20.0,
                confidence_per_30m: 0.5,
            },
            domains: DomainSpec {
                ground_altitude: [1.0, 2.0],
                aerial_altitude: [15.0, 25.0],
            },
            detection_floor: 0.5,
            object_spacing: 5.0,
            sets: vec![
                set(
                    SetId::A,
                    "sedan",
                    0.2,
                    IdentityPattern::Random,
                    0.1,
                    Some(SetId::O),
                    1.5,
                    677,
                    645,
                    0.7,
                ),
                set(
                    SetId::B,
                    "van",
                    0.2,
                    IdentityPattern::Random,
                    0.1,
                    Some(SetId::O),
                    1.5,
                    1097,
                    1390,
                    0.5,
                ),
                set(
                    SetId::O,
                    "other",
                    0.2,
                    IdentityPattern::Random,
                    0.1,
                    None,
                    0.0,
                    316,
                    75,
                    0.7,
                ),
                set(
                    SetId::C,
                    "fire_truck",
                    0.4,
                    IdentityPattern::Mirror(SetId::O),
                    0.9,
                    None,
                    0.0,
                    0,
                    298,
                    0.1,
                ),
            ],
            intersections: vec![
                IntersectionSpec {
                    name: "set_a".into(),
                    center: [0.0, 0.0],
                    members: vec![place(SetId::A, 4), place(SetId::O, 4)],
                },
                IntersectionSpec {
                    name: "set_ab".into(),
                    center: [120.0, 0.0],
                    members: vec![place(SetId::A, 2), place(SetId::B, 6), place(SetId::O, 4)],
                },
                IntersectionSpec {
                    name: "set_c".into(),
                    center: [0.0, 120.0],
                    members: vec![place(SetId::C, 3)],
                },
            ],
        }
    }
}

impl ScenarioSpec {
    /// A scenario with no sets and no objects.
    pub fn empty() -> Self {
        Self {
            sets: Vec::new(),
            intersections: Vec::new(),
            ..Self::default()
        }
    }

    pub fn raw_dimension(&self) -> usize {
        self.layout.raw_dimension()
    }

    pub fn set_spec(&self, set: SetId) -> Option<&ObjectSetSpec> {
        self.sets.iter().find(|s| s.set == set)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.raw_dimension() == 0 {
            return bad("layout has zero dimensions".into());
        }
        let v = &self.view;
        let finite = [
            v.rise_base,
            v.aerial_rise,
            v.appearance_full_altitude,
            v.azimuth_mix,
            v.noise_ground,
            v.noise_per_30m,
            v.objectness_ground,
            v.objectness_30m,
            v.objectness_concentration,
            v.confidence_per_30m,
            self.detection_floor,
            self.object_spacing,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return bad("non-finite view parameter".into());
        }
        if v.noise_ground < 0.0 || v.noise_per_30m < 0.0 || v.azimuth_mix < 0.0 {
            return bad("noise and mix parameters must be non-negative".into());
        }
        if v.appearance_full_altitude <= 0.0 || v.objectness_concentration <= 0.0 {
            return bad("appearance altitude and objectness concentration must be positive".into());
        }
        for p in [v.objectness_ground, v.objectness_30m] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("objectness mean {p} not in (0, 1)"));
            }
        }
        for r in [self.domains.ground_altitude, self.domains.aerial_altitude] {
            if !(r[0].is_finite() && r[1].is_finite() && 0.0 <= r[0] && r[0] <= r[1]) {
                return bad(format!("invalid altitude range {r:?}"));
            }
        }
        let mut seen = Vec::new();
        for s in &self.sets {
            if seen.contains(&s.set) {
                return bad(format!("set {} listed twice", s.set));
            }
            seen.push(s.set);
            let nums = [
                s.identity_gain,
                s.structure_level,
                s.instance_spread,
                s.convergence,
            ];
            if nums.iter().any(|x| !x.is_finite()) || s.instance_spread < 0.0 {
                return bad(format!("set {} has invalid geometry", s.set));
            }
            if !(0.0..=1.0).contains(&s.aerial_train_fraction) {
                return bad(format!("set {} train fraction out of [0, 1]", s.set));
            }
            if let IdentityPattern::Mirror(other) = s.identity_pattern {
                if other == s.set || !self.sets.iter().any(|o| o.set == other) {
                    return bad(format!("set {} mirrors unknown set {other}", s.set));
                }
            }
            if let Some(t) = s.aerial_target {
                if !self.sets.iter().any(|o| o.set == t) {
                    return bad(format!("set {} drifts toward unknown set {t}", s.set));
                }
            }
        }
        for i in &self.intersections {
            for m in &i.members {
                if self.set_spec(m.set).is_none() {
                    return bad(format!(
                        "intersection {} places unknown set {}",
                        i.name, m.set
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Camera state for one frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewCondition {
    pub altitude: f64,
    pub azimuth: f64,
    pub seed: u64,
}

impl ViewCondition {
    pub fn new(altitude: f64, azimuth: f64, seed: u64) -> Self {
        Self {
            altitude,
            azimuth,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimObject {
    pub object_id: u64,
    pub set: SetId,
    pub label: String,
    pub intersection: usize,
    pub position: [f64; 2],
    /// Ground appearance: set center plus the ground signature.
    pub base: Vec<f64>,
    ground_signature: Vec<f64>,
    aerial_signature: Vec<f64>,
    azimuth_u: Vec<f64>,
    azimuth_v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
struct SetGeometry {
    center: Vec<f64>,
    drift: Vec<f64>,
}

/// Objects placed at intersections together with their set geometry.
#[derive(Clone, Debug)]
pub struct SimWorld {
    pub spec: ScenarioSpec,
    pub objects: Vec<SimObject>,
    geometry: BTreeMap<SetId, SetGeometry>,
}

/// SplitMix64 finaliser over a sequence of words.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(parts))
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

const TAG_GEOMETRY: u64 = 0x6765_6f6d;
const TAG_OBJECT: u64 = 0x6f62_6a65;
const TAG_FRAME: u64 = 0x6672_616d;
const TAG_SAMPLE: u64 = 0x7361_6d70;
const TAG_SPLIT: u64 = 0x7370_6c74;
const TAG_EXPORT: u64 = 0x6578_706f;

impl SimWorld {
    /// Builds the world: set geometry from the seed, then objects placed on a
    /// grid around each intersection center.
    pub fn build(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let layout = &spec.layout;
        let d = layout.raw_dimension();
        let id_range = 0..layout.identity_dims;
        let rise_range = layout.identity_dims..layout.identity_dims + layout.rise_dims;

        let mut patterns: BTreeMap<SetId, Vec<f64>> = BTreeMap::new();
        for s in &spec.sets {
            let mut rng = rng_for(&[spec.seed, TAG_GEOMETRY, s.set.tag()]);
            let signs: Vec<f64> = (0..layout.identity_dims)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            patterns.insert(s.set, signs);
        }
        let mut identity: BTreeMap<SetId, Vec<f64>> = BTreeMap::new();
        for s in &spec.sets {
            let signs = match s.identity_pattern {
                IdentityPattern::Random => patterns[&s.set].clone(),
                IdentityPattern::Mirror(other) => patterns[&other].iter().map(|x| -x).collect(),
            };
            identity.insert(
                s.set,
                signs.iter().map(|x| 0.5 + s.identity_gain * x).collect(),
            );
        }

        let mut geometry = BTreeMap::new();
        for s in &spec.sets {
            let mut center = vec![0.0; d];
            center[id_range.clone()].copy_from_slice(&identity[&s.set]);
            for x in &mut center[rise_range.clone()] {
                *x = spec.view.rise_base;
            }
            for x in &mut center[rise_range.end..] {
                *x = s.structure_level;
            }
            let mut drift = vec![0.0; d];
            if let Some(target) = s.aerial_target {
                for (i, dx) in drift[id_range.clone()].iter_mut().enumerate() {
                    *dx = s.convergence * (identity[&target][i] - identity[&s.set][i]);
                }
            }
            for dx in &mut drift[rise_range.clone()] {
                *dx = spec.view.aerial_rise;
            }
            geometry.insert(s.set, SetGeometry { center, drift });
        }

        let mut objects = Vec::new();
        let mut next_id = 1u64;
        for (ii, inter) in spec.intersections.iter().enumerate() {
            let total: usize = inter.members.iter().map(|m| m.count).sum();
            let cols = (total as f64).sqrt().ceil().max(1.0) as usize;
            let mut slot = 0usize;
            for m in &inter.members {
                let set_spec = spec.set_spec(m.set).expect("validated");
                let geo = &geometry[&m.set];
                for _ in 0..m.count {
                    let mut rng = rng_for(&[spec.seed, TAG_OBJECT, next_id]);
                    let spread = set_spec.instance_spread;
                    let ground_signature = gaussian_vec(&mut rng, d, spread);
                    let aerial_signature = gaussian_vec(&mut rng, d, spread);
                    let azimuth_u = gaussian_vec(&mut rng, d, 1.0);
                    let azimuth_v = gaussian_vec(&mut rng, d, 1.0);
                    let base = geo
                        .center
                        .iter()
                        .zip(&ground_signature)
                        .map(|(c, g)| (c + g).clamp(0.0, 1.0))
                        .collect();
                    let (row, col) = (slot / cols, slot % cols);
                    let half = (cols as f64 - 1.0) / 2.0;
                    let position = [
                        inter.center[0] + (col as f64 - half) * spec.object_spacing,
                        inter.center[1] + (row as f64 - half) * spec.object_spacing,
                    ];
                    objects.push(SimObject {
                        object_id: next_id,
                        set: m.set,
                        label: set_spec.label.clone(),
                        intersection: ii,
                        position,
                        base,
                        ground_signature,
                        aerial_signature,
                        azimuth_u,
                        azimuth_v,
                    });
                    next_id += 1;
                    slot += 1;
                }
            }
        }

        // Zero-mean aerial signatures per set: from the air, sets differ only
        // through their instances.
        for s in &spec.sets {
            let members: Vec<usize> = (0..objects.len())
                .filter(|&i| objects[i].set == s.set)
                .collect();
            if members.is_empty() {
                continue;
            }
            let n = members.len() as f64;
            let mean: Vec<f64> = (0..d)
                .map(|k| {
                    members
                        .iter()
                        .map(|&i| objects[i].aerial_signature[k])
                        .sum::<f64>()
                        / n
                })
                .collect();
            for &i in &members {
                for (x, m) in objects[i].aerial_signature.iter_mut().zip(&mean) {
                    *x -= m;
                }
            }
        }

        Ok(Self {
            spec: spec.clone(),
            objects,
            geometry,
        })
    }

    pub fn raw_dimension(&self) -> usize {
        self.spec.raw_dimension()
    }

    pub fn objects_of(&self, set: SetId) -> impl Iterator<Item = &SimObject> {
        self.objects.iter().filter(move |o| o.set == set)
    }

    pub fn objects_at(&self, intersection: usize) -> impl Iterator<Item = &SimObject> {
        self.objects
            .iter()
            .filter(move |o| o.intersection == intersection)
    }

    pub fn intersection_index(&self, name: &str) -> Option<usize> {
        self.spec.intersections.iter().position(|i| i.name == name)
    }

    /// The full 30 m drift vector of a set.
    pub fn drift(&self, set: SetId) -> Option<&[f64]> {
        self.geometry.get(&set).map(|g| g.drift.as_slice())
    }

    /// Euclidean norm of a set's drift vector.
    pub fn drift_magnitude(&self, set: SetId) -> f64 {
        self.drift(set)
            .map_or(0.0, |d| d.iter().map(|x| x * x).sum::<f64>().sqrt())
    }

    pub fn noise_std(&self, altitude: f64) -> f64 {
        let v = &self.spec.view;
        v.noise_ground + v.noise_per_30m * altitude / FULL_DRIFT_ALTITUDE
    }

    pub fn mean_objectness(&self, altitude: f64) -> f64 {
        let v = &self.spec.view;
        let t = altitude / FULL_DRIFT_ALTITUDE;
        (v.objectness_ground + (v.objectness_30m - v.objectness_ground) * t).clamp(0.01, 0.99)
    }

    /// Confidence of a segmentation-based identification at this altitude.
    pub fn identification_confidence(&self, altitude: f64) -> f64 {
        (1.0 - self.spec.view.confidence_per_30m * altitude / FULL_DRIFT_ALTITUDE).clamp(0.0, 1.0)
    }

    /// Renders the features of `obj` under `view`, drawing noise from `rng`.
    pub fn view_transform(
        &self,
        obj: &SimObject,
        view: &ViewCondition,
        rng: &mut ChaCha8Rng,
    ) -> FeatureVector {
        let v = &self.spec.view;
        let drift = &self.geometry[&obj.set].drift;
        let t = view.altitude / FULL_DRIFT_ALTITUDE;
        let lambda = (view.altitude / v.appearance_full_altitude).clamp(0.0, 1.0);
        let theta = view.azimuth.to_radians();
        let (cu, sv) = (theta.cos() - 1.0, theta.sin());
        let sigma = self.noise_std(view.altitude);
        FeatureVector::clamped((0..obj.base.len()).map(|i| {
            let noise = if sigma > 0.0 {
                sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            obj.base[i]
                + t * drift[i]
                + lambda * (obj.aerial_signature[i] - obj.ground_signature[i])
                + v.azimuth_mix * (cu * obj.azimuth_u[i] + sv * obj.azimuth_v[i])
                + noise
        }))
    }

    fn objectness(&self, altitude: f64, rng: &mut ChaCha8Rng) -> f64 {
        let mean = self.mean_objectness(altitude);
        let k = self.spec.view.objectness_concentration;
        Beta::new(mean * k, (1.0 - mean) * k)
            .map(|b| b.sample(rng))
            .unwrap_or(mean)
            .clamp(0.0, 1.0)
    }

    fn detect(&self, obj: &SimObject, view: &ViewCondition, rng: &mut ChaCha8Rng) -> SimDetection {
        let features = self.view_transform(obj, view, rng);
        let objectness = self.objectness(view.altitude, rng);
        let jitter = [
            0.2 * rng.sample::<f64, _>(StandardNormal),
            0.2 * rng.sample::<f64, _>(StandardNormal),
        ];
        SimDetection {
            object_id: obj.object_id,
            set: obj.set,
            truth: obj.label.clone(),
            objectness,
            position: [obj.position[0] + jitter[0], obj.position[1] + jitter[1]],
            features,
        }
    }

    /// Renders one frame of every object at `intersection`. Deterministic in
    /// `(world seed, view seed, frame)`.
    pub fn render_frame(&self, view: ViewCondition, frame: u64, intersection: usize) -> SimFrame {
        let detections = self
            .objects_at(intersection)
            .map(|obj| {
                let mut rng =
                    rng_for(&[self.spec.seed, TAG_FRAME, view.seed, frame, obj.object_id]);
                self.detect(obj, &view, &mut rng)
            })
            .collect();
        SimFrame {
            frame,
            intersection: Some(intersection),
            view,
            detections,
        }
    }

    /// Draws `count` single-detection frames of `set` with altitudes uniform
    /// in `altitudes`. Samples below the detection floor are redrawn, as a
    /// detector would never have reported them.
    pub fn sample_stream(
        &self,
        set: SetId,
        altitudes: [f64; 2],
        count: usize,
        stream_tag: u64,
    ) -> Vec<SimFrame> {
        let objects: Vec<&SimObject> = self.objects_of(set).collect();
        if objects.is_empty() {
            return Vec::new();
        }
        (0..count)
            .map(|k| {
                let mut rng =
                    rng_for(&[self.spec.seed, TAG_SAMPLE, stream_tag, set.tag(), k as u64]);
                let obj = objects[rng.random_range(0..objects.len())];
                let altitude = if altitudes[1] > altitudes[0] {
                    rng.random_range(altitudes[0]..=altitudes[1])
                } else {
                    altitudes[0]
                };
                let azimuth = rng.random_range(0.0..360.0);
                let view = ViewCondition::new(altitude, azimuth, rng.random());
                let mut det = self.detect(obj, &view, &mut rng);
                for _ in 0..1000 {
                    if det.objectness >= self.spec.detection_floor {
                        break;
                    }
                    det.objectness = self.objectness(altitude, &mut rng);
                }
                SimFrame {
                    frame: k as u64,
                    intersection: Some(obj.intersection),
                    view,
                    detections: vec![det],
                }
            })
            .collect()
    }

    /// Ground and aerial datasets with seeded train/test splits.
    pub fn generate_datasets(&self) -> DatasetBundle {
        let mut streams = BTreeMap::new();
        let mut manifest = BTreeMap::new();
        let domains = self.spec.domains.clone();

        let mut ground = Vec::new();
        for s in &self.spec.sets {
            ground.extend(self.sample_stream(s.set, domains.ground_altitude, s.ground_samples, 0));
        }
        renumber(&mut ground);
        manifest.insert(
            "ground".to_owned(),
            ManifestEntry {
                sets: self.spec.sets.iter().map(|s| s.set).collect(),
                domain: "ground".into(),
                count: ground.len(),
                fraction: 1.0,
            },
        );
        streams.insert("ground".to_owned(), ground);

        for s in &self.spec.sets {
            let mut aerial =
                self.sample_stream(s.set, domains.aerial_altitude, s.aerial_samples, 1);
            let mut order: Vec<usize> = (0..aerial.len()).collect();
            order.shuffle(&mut rng_for(&[self.spec.seed, TAG_SPLIT, s.set.tag()]));
            let n_train = (s.aerial_train_fraction * aerial.len() as f64 + 1e-9).floor() as usize;
            let mut slots: Vec<Option<SimFrame>> = aerial.drain(..).map(Some).collect();
            let mut take = |idx: &[usize]| -> Vec<SimFrame> {
                let mut v: Vec<SimFrame> = idx.iter().filter_map(|&i| slots[i].take()).collect();
                renumber(&mut v);
                v
            };
            let mut train_idx = order[..n_train].to_vec();
            let mut test_idx = order[n_train..].to_vec();
            train_idx.sort_unstable();
            test_idx.sort_unstable();
            let train = take(&train_idx);
            let test = take(&test_idx);
            let lower = s.set.to_string().to_lowercase();
            for (suffix, frames, fraction) in [
                ("train", train, s.aerial_train_fraction),
                ("test", test, 1.0 - s.aerial_train_fraction),
            ] {
                let name = format!("aerial_{lower}_{suffix}");
                manifest.insert(
                    name.clone(),
                    ManifestEntry {
                        sets: vec![s.set],
                        domain: "aerial".into(),
                        count: frames.len(),
                        fraction,
                    },
                );
                streams.insert(name, frames);
            }
        }
        DatasetBundle { streams, manifest }
    }

    /// Writes `(set_id, altitude, f0..)` rows for every object under every
    /// view.
    pub fn export_features<W: Write>(&self, views: &[ViewCondition], mut out: W) -> Result<usize> {
        let d = self.raw_dimension();
        let header: Vec<String> = ["set_id".to_owned(), "altitude".to_owned()]
            .into_iter()
            .chain((0..d).map(|i| format!("f{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        let mut rows = 0;
        for (vi, view) in views.iter().enumerate() {
            for obj in &self.objects {
                let mut rng = rng_for(&[
                    self.spec.seed,
                    TAG_EXPORT,
                    view.seed,
                    vi as u64,
                    obj.object_id,
                ]);
                let f = self.view_transform(obj, view, &mut rng);
                let cols: Vec<String> = f.as_slice().iter().map(|x| format!("{x:.6}")).collect();
                writeln!(out, "{},{},{}", obj.set, view.altitude, cols.join(","))?;
                rows += 1;
            }
        }
        Ok(rows)
    }
}

fn renumber(frames: &mut [SimFrame]) {
    for (i, f) in frames.iter_mut().enumerate() {
        f.frame = i as u64;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimDetection {
    pub object_id: u64,
    pub set: SetId,
    /// Ground-truth label name.
    pub truth: String,
    pub objectness: f64,
    pub position: [f64; 2],
    pub features: FeatureVector,
}

impl SimDetection {
    pub fn to_detection(&self, supervised_label: Option<ClassId>) -> Detection {
        Detection {
            features: self.features.clone(),
            objectness: self.objectness,
            object_id: self.object_id,
            position: self.position,
            supervised_label,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimFrame {
    pub frame: u64,
    #[serde(default)]
    pub intersection: Option<usize>,
    pub view: ViewCondition,
    pub detections: Vec<SimDetection>,
}

impl SimFrame {
    /// Parses one JSON-lines record, validating ranges.
    pub fn from_json_line(line: &str) -> Result<Self> {
        let frame: SimFrame = serde_json::from_str(line)?;
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.view.altitude.is_finite() || !self.view.azimuth.is_finite() {
            return Err(Error::Malformed(format!(
                "frame {}: non-finite view",
                self.frame
            )));
        }
        let dim = self.detections.first().map(|d| d.features.len());
        for d in &self.detections {
            if !(0.0..=1.0).contains(&d.objectness) {
                return Err(Error::Malformed(format!(
                    "frame {}: objectness {} outside [0, 1]",
                    self.frame, d.objectness
                )));
            }
            if Some(d.features.len()) != dim {
                return Err(Error::Malformed(format!(
                    "frame {}: detections disagree on feature length",
                    self.frame
                )));
            }
            if !d.position.iter().all(|p| p.is_finite()) {
                return Err(Error::Malformed(format!(
                    "frame {}: non-finite position",
                    self.frame
                )));
            }
        }
        Ok(())
    }
}

pub fn write_stream<W: Write>(frames: &[SimFrame], mut out: W) -> Result<()> {
    for f in frames {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_stream<R: BufRead>(input: R) -> Result<Vec<SimFrame>> {
    let mut frames = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame = SimFrame::from_json_line(&line)
            .map_err(|e| Error::Malformed(format!("line {}: {e}", n + 1)))?;
        frames.push(frame);
    }
    Ok(frames)
}

pub fn save_stream(path: &Path, frames: &[SimFrame]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_stream(frames, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_stream(path: &Path) -> Result<Vec<SimFrame>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_owned()));
    }
    read_stream(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sets: Vec<SetId>,
    pub domain: String,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub streams: BTreeMap<String, Vec<SimFrame>>,
    pub manifest: BTreeMap<String, ManifestEntry>,
}

impl DatasetBundle {
    pub fn stream(&self, name: &str) -> &[SimFrame] {
        self.streams.get(name).map_or(&[], Vec::as_slice)
    }

    /// Writes `<name>.jsonl` per stream plus `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, frames) in &self.streams {
            save_stream(&dir.join(format!("{name}.jsonl")), frames)?;
        }
        let manifest = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(dir.join("manifest.json"), manifest + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        let manifest: BTreeMap<String, ManifestEntry> =
            serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        let mut streams = BTreeMap::new();
        for name in manifest.keys() {
            streams.insert(
                name.clone(),
                load_stream(&dir.join(format!("{name}.jsonl")))?,
            );
        }
        Ok(Self { streams, manifest })
    }
}
