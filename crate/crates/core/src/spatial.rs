//! Spatial memory of behaviourally relevant objects, used as the label source
//! for self-supervised learning.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::artmap::ClassId;
use crate::gate::{Detection, LabelOracle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedObject {
    pub object_id: u64,
    pub position: [f64; 2],
    pub acquired_label: Option<ClassId>,
    pub acquisition_confidence: f64,
    pub last_seen_frame: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialMemory {
    objects: BTreeMap<u64, TrackedObject>,
    pub association_radius: f64,
    pub confidence_floor: f64,
}

impl Default for SpatialMemory {
    fn default() -> Self {
        Self::new(2.0, 0.95)
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl SpatialMemory {
    pub fn new(association_radius: f64, confidence_floor: f64) -> Self {
        Self {
            objects: BTreeMap::new(),
            association_radius,
            confidence_floor,
        }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, object_id: u64) -> Option<&TrackedObject> {
        self.objects.get(&object_id)
    }

    pub fn objects(&self) -> impl Iterator<Item = &TrackedObject> {
        self.objects.values()
    }

    /// Upserts an object. The label is stored only when `confidence` reaches
    /// the floor; a lower-confidence sighting never clears an earlier label.
    pub fn acquire(
        &mut self,
        object_id: u64,
        position: [f64; 2],
        label: ClassId,
        confidence: f64,
        frame: u64,
    ) {
        let confident = confidence >= self.confidence_floor;
        let entry = self.objects.entry(object_id).or_insert(TrackedObject {
            object_id,
            position,
            acquired_label: None,
            acquisition_confidence: 0.0,
            last_seen_frame: frame,
        });
        entry.position = position;
        entry.last_seen_frame = frame;
        if confident {
            entry.acquired_label = Some(label);
            entry.acquisition_confidence = confidence;
        }
    }

    /// Label of the nearest labeled object within the association radius.
    /// Ties resolve to the lower object id.
    pub fn self_supervision_label(&self, det: &Detection) -> Option<ClassId> {
        self.objects
            .values()
            .filter_map(|o| {
                o.acquired_label
                    .map(|l| (distance(o.position, det.position), o, l))
            })
            .filter(|(d, _, _)| *d <= self.association_radius)
            .min_by(|(da, oa, _), (db, ob, _)| {
                da.total_cmp(db).then(oa.object_id.cmp(&ob.object_id))
            })
            .map(|(_, _, l)| l)
    }

    /// Removes objects unseen for more than `max_age` frames.
    pub fn prune_stale(&mut self, frame: u64, max_age: u64) {
        self.objects
            .retain(|_, o| frame.saturating_sub(o.last_seen_frame) <= max_age);
    }
}

impl LabelOracle for SpatialMemory {
    fn label_for(&self, det: &Detection) -> Option<ClassId> {
        self.self_supervision_label(det)
    }
}
