use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artmap::{ClassId, FeatureVector};
use crate::error::{Error, Result};

/// Support a self-generated class needs before it is offered for labeling.
pub const LABEL_REQUEST_SUPPORT: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassOrigin {
    Supervised,
    SelfGenerated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub id: ClassId,
    pub origin: ClassOrigin,
    pub human_label: Option<String>,
    /// Samples learned into any node of this class.
    pub support: u64,
    pub created_frame: u64,
    pub active: bool,
    /// Set once the relevance window has elapsed and the class was judged.
    pub relevance_settled: bool,
    /// Short digest of the features that founded the class.
    pub exemplar: String,
}

/// Label-request event emitted for a persistent, unlabeled self-generated
/// class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub class_index: ClassId,
    pub support_count: u64,
    pub exemplar: String,
}

/// Dense class table `1..=n`. Classes are never removed, only deactivated.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassRegistry {
    classes: Vec<ClassRecord>,
}

pub fn exemplar_digest(features: &FeatureVector) -> String {
    let mut hasher = Sha256::new();
    for x in features.as_slice() {
        hasher.update(x.to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl ClassRegistry {
    pub fn from_records(classes: Vec<ClassRecord>) -> Result<Self> {
        for (i, c) in classes.iter().enumerate() {
            if c.id.0 as usize != i + 1 {
                return Err(Error::Malformed(format!(
                    "class record {i} carries index {}, expected {}",
                    c.id,
                    i + 1
                )));
            }
        }
        Ok(Self { classes })
    }

    pub fn records(&self) -> &[ClassRecord] {
        &self.classes
    }

    /// `n`, the number of labels allocated so far.
    pub fn len(&self) -> u32 {
        self.classes.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn get(&self, id: ClassId) -> Option<&ClassRecord> {
        (id.0 as usize)
            .checked_sub(1)
            .and_then(|i| self.classes.get(i))
    }

    pub(crate) fn get_mut(&mut self, id: ClassId) -> Option<&mut ClassRecord> {
        (id.0 as usize)
            .checked_sub(1)
            .and_then(|i| self.classes.get_mut(i))
    }

    pub fn is_active(&self, id: ClassId) -> bool {
        self.get(id).is_some_and(|c| c.active)
    }

    /// Allocates `N = n + 1`.
    pub fn allocate(
        &mut self,
        origin: ClassOrigin,
        human_label: Option<String>,
        frame: u64,
        exemplar: String,
    ) -> ClassId {
        let id = ClassId(self.len() + 1);
        self.classes.push(ClassRecord {
            id,
            origin,
            human_label,
            support: 0,
            created_frame: frame,
            active: true,
            relevance_settled: false,
            exemplar,
        });
        id
    }

    pub fn supervised_class(&self, name: &str) -> Option<ClassId> {
        self.classes
            .iter()
            .find(|c| c.origin == ClassOrigin::Supervised && c.human_label.as_deref() == Some(name))
            .map(|c| c.id)
    }

    /// Returns the supervised class named `name`, allocating it if needed.
    pub fn ensure_supervised(&mut self, name: &str, frame: u64) -> ClassId {
        match self.supervised_class(name) {
            Some(id) => id,
            None => self.allocate(
                ClassOrigin::Supervised,
                Some(name.to_owned()),
                frame,
                String::new(),
            ),
        }
    }

    /// Human-facing name of a class: its human label, or `Unknown-class-N`.
    pub fn display_label(&self, id: ClassId) -> String {
        match self.get(id).and_then(|c| c.human_label.clone()) {
            Some(label) => label,
            None => format!("Unknown-class-{id}"),
        }
    }

    pub(crate) fn record_support(&mut self, id: ClassId) {
        if let Some(c) = self.get_mut(id) {
            c.support += 1;
        }
    }

    /// Active self-generated classes with enough support and no human label.
    pub fn flag_label_requests(&self) -> Vec<ClassId> {
        self.classes
            .iter()
            .filter(|c| {
                c.active
                    && c.origin == ClassOrigin::SelfGenerated
                    && c.human_label.is_none()
                    && c.support >= LABEL_REQUEST_SUPPORT
            })
            .map(|c| c.id)
            .collect()
    }

    /// Attaches one human label to every listed class. Validates all indices
    /// before touching any record.
    pub fn assign_human_label(&mut self, ids: &[ClassId], label: &str) -> Result<()> {
        for &id in ids {
            match self.get(id) {
                None => return Err(Error::ClassNotFound(id)),
                Some(c) if !c.active => return Err(Error::ClassInactive(id)),
                Some(_) => {}
            }
        }
        for &id in ids {
            if let Some(c) = self.get_mut(id) {
                c.human_label = Some(label.to_owned());
            }
        }
        Ok(())
    }

    /// Marks self-generated classes inactive when their support is below
    /// `ceil(psi4 · window)` once `window` frames have passed since creation.
    /// Returns the classes deactivated by this call.
    pub fn relevance_prune(&mut self, frame: u64, psi4: f64, window: u64) -> Vec<ClassId> {
        let threshold = relevance_threshold(psi4, window);
        let mut pruned = Vec::new();
        for c in &mut self.classes {
            if c.origin != ClassOrigin::SelfGenerated || !c.active || c.relevance_settled {
                continue;
            }
            if frame >= c.created_frame + window {
                c.relevance_settled = true;
                if c.support < threshold {
                    c.active = false;
                    pruned.push(c.id);
                }
            }
        }
        pruned
    }
}

pub fn relevance_threshold(psi4: f64, window: u64) -> u64 {
    // Guard against 0.06 * 50 landing a hair above 3.
    (psi4 * window as f64 - 1e-9).ceil().max(0.0) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn self_generated(reg: &mut ClassRegistry, frame: u64, support: u64) -> ClassId {
        let id = reg.allocate(ClassOrigin::SelfGenerated, None, frame, String::new());
        reg.get_mut(id).unwrap().support = support;
        id
    }

    #[test]
    fn allocation_is_dense() {
        let mut reg = ClassRegistry::default();
        let a = reg.ensure_supervised("sedan", 0);
        let b = reg.ensure_supervised("van", 0);
        assert_eq!((a, b), (ClassId(1), ClassId(2)));
        assert_eq!(reg.ensure_supervised("sedan", 5), a);
        let n = self_generated(&mut reg, 0, 0);
        assert_eq!(n, ClassId(3));
        assert_eq!(reg.display_label(n), "Unknown-class-3");
        assert_eq!(reg.display_label(a), "sedan");
    }

    #[test]
    fn relevance_examples() {
        assert_eq!(relevance_threshold(0.06, 50), 3);
        let mut reg = ClassRegistry::default();
        let sup = reg.ensure_supervised("sedan", 100);
        let weak = self_generated(&mut reg, 100, 1);
        let strong = self_generated(&mut reg, 100, 5);
        assert!(reg.relevance_prune(149, 0.06, 50).is_empty());
        assert_eq!(reg.relevance_prune(150, 0.06, 50), vec![weak]);
        assert!(!reg.is_active(weak));
        assert!(reg.is_active(strong));
        assert!(reg.is_active(sup));
        // Judged once; later support changes do not revive or re-prune.
        assert!(reg.relevance_prune(500, 0.06, 50).is_empty());
    }

    #[test]
    fn flag_examples() {
        let mut reg = ClassRegistry::default();
        let three = self_generated(&mut reg, 0, 3);
        let two = self_generated(&mut reg, 0, 2);
        let labeled = self_generated(&mut reg, 0, 5);
        reg.assign_human_label(&[labeled], "fire_truck").unwrap();
        assert_eq!(reg.flag_label_requests(), vec![three]);
        assert!(!reg.flag_label_requests().contains(&two));
    }

    #[test]
    fn assign_label_examples() {
        let mut reg = ClassRegistry::default();
        let ids: Vec<_> = (0..3).map(|_| self_generated(&mut reg, 0, 3)).collect();
        let sibling = self_generated(&mut reg, 0, 3);
        reg.assign_human_label(&ids, "fire_truck").unwrap();
        for &id in &ids {
            assert_eq!(reg.display_label(id), "fire_truck");
        }
        assert_eq!(
            reg.display_label(sibling),
            format!("Unknown-class-{sibling}")
        );
        assert_eq!(reg.flag_label_requests(), vec![sibling]);

        let before = reg.clone();
        assert!(matches!(
            reg.assign_human_label(&[sibling, ClassId(99)], "x"),
            Err(Error::ClassNotFound(ClassId(99)))
        ));
        assert_eq!(reg, before);
    }

    #[test]
    fn from_records_rejects_gaps() {
        let mut reg = ClassRegistry::default();
        reg.ensure_supervised("a", 0);
        reg.ensure_supervised("b", 0);
        let mut records = reg.records().to_vec();
        records.remove(0);
        assert!(ClassRegistry::from_records(records).is_err());
    }
}
