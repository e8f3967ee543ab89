use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::artmap::ClassId;

/// Ring buffer of the most recent per-frame categories for one object.
///
/// Slots hold a class index or 0 for "no detection this frame".
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisBuffer {
    pub object_id: u64,
    capacity: usize,
    slots: VecDeque<u32>,
    pub last_update_frame: u64,
}

impl HypothesisBuffer {
    pub fn new(object_id: u64, capacity: usize, frame: u64) -> Self {
        assert!(capacity > 0, "buffer length must be positive");
        Self {
            object_id,
            capacity,
            slots: VecDeque::with_capacity(capacity),
            last_update_frame: frame,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn slots(&self) -> impl Iterator<Item = u32> + '_ {
        self.slots.iter().copied()
    }

    fn push_slot(&mut self, value: u32) {
        if self.slots.len() == self.capacity {
            self.slots.pop_front();
        }
        self.slots.push_back(value);
    }

    pub fn push(&mut self, category: Option<ClassId>, frame: u64) {
        self.push_slot(category.map_or(0, |c| c.0));
        self.last_update_frame = frame;
    }

    pub fn push_empty(&mut self) {
        self.push_slot(0);
    }

    /// Most frequent non-zero category and its count. Ties go to the lower
    /// class index.
    pub fn modal(&self) -> Option<(ClassId, usize)> {
        let mut counts: Vec<(u32, usize)> = Vec::new();
        for s in self.slots.iter().copied().filter(|&s| s != 0) {
            match counts.iter_mut().find(|(c, _)| *c == s) {
                Some((_, n)) => *n += 1,
                None => counts.push((s, 1)),
            }
        }
        counts
            .into_iter()
            .max_by(|(ca, na), (cb, nb)| na.cmp(nb).then(cb.cmp(ca)))
            .map(|(c, n)| (ClassId(c), n))
    }

    /// Modal frequency as a fraction of the buffer length.
    pub fn frequency(&self) -> f64 {
        self.modal()
            .map_or(0.0, |(_, n)| n as f64 / self.capacity as f64)
    }

    /// `Some(modal class)` when its frequency reaches `psi5`.
    pub fn finalize(&self, psi5: f64) -> Option<ClassId> {
        let (class, _) = self.modal()?;
        (self.frequency() >= psi5).then_some(class)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(seq: &[u32]) -> HypothesisBuffer {
        let mut b = HypothesisBuffer::new(1, 10, 0);
        for (f, &c) in seq.iter().enumerate() {
            b.push((c != 0).then_some(ClassId(c)), f as u64);
        }
        b
    }

    #[test]
    fn fill_and_decay() {
        let mut b = filled(&[3; 10]);
        assert!(b.slots().all(|s| s == 3));
        for _ in 0..10 {
            b.push_empty();
        }
        assert!(b.slots().all(|s| s == 0));
        assert_eq!(b.slots().count(), 10);
    }

    #[test]
    fn seen_seven_of_ten() {
        let mut b = HypothesisBuffer::new(9, 10, 0);
        let seen = [
            true, true, false, true, true, false, true, true, false, true,
        ];
        for (f, s) in seen.into_iter().enumerate() {
            if s {
                b.push(Some(ClassId(3)), f as u64);
            } else {
                b.push_empty();
            }
        }
        assert_eq!(b.slots().filter(|&s| s == 3).count(), 7);
        assert_eq!(b.slots().filter(|&s| s == 0).count(), 3);
    }

    #[test]
    fn persistence_examples() {
        let b = filled(&[3, 3, 3, 3, 3, 3, 3, 0, 0, 0]);
        assert_eq!(b.finalize(0.6), Some(ClassId(3)));
        let b = filled(&[3, 3, 3, 3, 3, 0, 0, 0, 0, 0]);
        assert_eq!(b.finalize(0.6), None);
        let b = filled(&[0; 10]);
        assert_eq!(b.finalize(0.6), None);
        assert_eq!(b.modal(), None);
    }

    #[test]
    fn modal_tie_prefers_lower_class() {
        let b = filled(&[5, 2, 5, 2]);
        assert_eq!(b.modal(), Some((ClassId(2), 2)));
    }
}
