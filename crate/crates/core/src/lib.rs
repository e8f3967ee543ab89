//! Uncertainty-modulated lifelong learning on top of a fuzzy ARTMAP
//! classifier, with a synthetic multi-view environment to exercise it.

pub mod artmap;
pub mod error;
pub mod experiments;
pub mod gate;
pub mod simenv;
pub mod spatial;
pub mod store;

pub use artmap::{ArtmapNetwork, ArtmapParams, ClassId, FeatureVector};
pub use error::{Error, Result};
pub use gate::{Detection, Learner, LearningMode, UncertaintyCriteria};
pub use spatial::SpatialMemory;
