//! Versioned model snapshots.
//!
//! A model file is canonical JSON: object keys sorted, two-space indent, and
//! every float written in scientific notation with 17 significant digits, so
//! equal states always produce equal bytes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::artmap::{ArtmapNetwork, ArtmapParams, CategoryNode};
use crate::error::{Error, Result};
use crate::gate::{ClassRecord, ClassRegistry, GateDecision, Learner, UncertaintyCriteria};

pub const FORMAT_VERSION: u32 = 1;

/// Conventional extension for model files.
pub const MODEL_EXTENSION: &str = "uml.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub format_version: u32,
    pub params: ArtmapParams,
    pub criteria: UncertaintyCriteria,
    pub raw_dimension: usize,
    pub clock: u64,
    pub nodes: Vec<CategoryNode>,
    pub classes: Vec<ClassRecord>,
}

impl ModelSnapshot {
    pub fn capture(learner: &Learner) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            params: learner.network.params.clone(),
            criteria: learner.criteria.clone(),
            raw_dimension: learner.raw_dimension(),
            clock: learner.clock(),
            nodes: learner.network.nodes().to_vec(),
            classes: learner.registry.records().to_vec(),
        }
    }

    /// Rebuilds a learner, validating every part before returning it.
    pub fn restore(self) -> Result<Learner> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: self.format_version,
                expected: FORMAT_VERSION,
            });
        }
        self.criteria.validate()?;
        let registry = ClassRegistry::from_records(self.classes)?;
        let network =
            ArtmapNetwork::from_parts(self.raw_dimension, self.params, self.nodes, registry.len())?;
        Ok(Learner::from_parts(
            network,
            registry,
            self.criteria,
            self.clock,
        ))
    }

    pub fn to_canonical_json(&self) -> Result<String> {
        canonical_json(&serde_json::to_value(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let found = value
            .get("format_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Malformed("missing format_version".into()))?;
        if found != u64::from(FORMAT_VERSION) {
            return Err(Error::Version {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: FORMAT_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Renders a JSON value canonically.
pub fn canonical_json(value: &Value) -> Result<String> {
    let mut out = String::new();
    write_value(&mut out, value, 0)?;
    out.push('\n');
    Ok(out)
}

fn write_value(out: &mut String, value: &Value, depth: usize) -> Result<()> {
    let indent = |out: &mut String, d: usize| {
        out.push('\n');
        for _ in 0..d {
            out.push_str("  ");
        }
    };
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().unwrap_or(f64::NAN);
                if !x.is_finite() {
                    return Err(Error::Malformed(format!("non-finite float {x}")));
                }
                write!(out, "{x:.16e}").expect("write to String");
            } else {
                write!(out, "{n}").expect("write to String");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s)?),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return Ok(());
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                indent(out, depth + 1);
                write_value(out, item, depth + 1)?;
            }
            indent(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return Ok(());
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                indent(out, depth + 1);
                out.push_str(&serde_json::to_string(key)?);
                out.push_str(": ");
                write_value(out, &map[key], depth + 1)?;
            }
            indent(out, depth);
            out.push('}');
        }
    }
    Ok(())
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// SHA-256 of the canonical learnable state of `learner`: parameters,
/// criteria, nodes and classes. The frame clock is left out.
pub fn state_digest(learner: &Learner) -> Result<String> {
    let mut value = serde_json::to_value(ModelSnapshot::capture(learner))?;
    if let Value::Object(map) = &mut value {
        map.remove("clock");
    }
    Ok(hex_digest(canonical_json(&value)?.as_bytes()))
}

/// SHA-256 over the canonical rendering of a decision log.
pub fn decision_digest(decisions: &[GateDecision]) -> Result<String> {
    Ok(hex_digest(
        canonical_json(&serde_json::to_value(decisions)?)?.as_bytes(),
    ))
}

/// Writes the snapshot through a temporary file in the same directory and
/// renames it into place.
pub fn save(learner: &Learner, path: &Path) -> Result<()> {
    let text = ModelSnapshot::capture(learner).to_canonical_json()?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Learner> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_owned()));
    }
    ModelSnapshot::from_json(&std::fs::read_to_string(path)?)?.restore()
}

/// Loads a model and checks it against the dimension an experiment expects.
pub fn load_expecting(path: &Path, raw_dimension: usize) -> Result<Learner> {
    let learner = load(path)?;
    if learner.raw_dimension() != raw_dimension {
        return Err(Error::Dimension {
            expected: raw_dimension,
            got: learner.raw_dimension(),
        });
    }
    Ok(learner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artmap::FeatureVector;
    use crate::gate::{Detection, LearningMode};

    fn trained() -> Learner {
        let mut l =
            Learner::new(3, ArtmapParams::default(), UncertaintyCriteria::default()).unwrap();
        let a = l.supervised_class("a");
        let b = l.supervised_class("b");
        for (i, (f, c)) in [
            ([0.1, 0.2, 0.3], a),
            ([0.8, 0.9, 0.7], b),
            ([0.15, 0.25, 0.3], a),
        ]
        .into_iter()
        .enumerate()
        {
            let det = Detection {
                features: FeatureVector::new(f.to_vec()).unwrap(),
                objectness: 0.9,
                object_id: i as u64,
                position: [0.0, 0.0],
                supervised_label: Some(c),
            };
            l.process_frame(&[det], LearningMode::Supervised, None)
                .unwrap();
        }
        l
    }

    #[test]
    fn floats_render_with_seventeen_digits() {
        let text = canonical_json(&serde_json::json!({"b": 0.1, "a": [1, 2.5]})).unwrap();
        assert_eq!(
            text,
            "{\n  \"a\": [\n    1,\n    2.5000000000000000e0\n  ],\n  \"b\": 1.0000000000000001e-1\n}\n"
        );
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["b"].as_f64(), Some(0.1));
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("m1.uml.json");
        let p2 = dir.path().join("m2.uml.json");
        let l = trained();
        save(&l, &p1).unwrap();
        save(&load(&p1).unwrap(), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(
            state_digest(&load(&p1).unwrap()).unwrap(),
            state_digest(&l).unwrap()
        );
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.uml.json");
        save(&trained(), &p).unwrap();
        assert!(matches!(
            load_expecting(&p, 32),
            Err(Error::Dimension {
                expected: 32,
                got: 3
            })
        ));
        assert!(load_expecting(&p, 3).is_ok());
    }

    #[test]
    fn version_and_malformed_errors() {
        let snap = ModelSnapshot::capture(&trained());
        let mut v = serde_json::to_value(&snap).unwrap();
        v["format_version"] = 99.into();
        assert!(matches!(
            ModelSnapshot::from_json(&v.to_string()),
            Err(Error::Version { found: 99, .. })
        ));
        assert!(ModelSnapshot::from_json("{\"format_version\": 1}").is_err());
        assert!(ModelSnapshot::from_json("not json").is_err());

        let mut bad = snap.clone();
        bad.nodes[0].weights.pop();
        assert!(bad.restore().is_err());
        let mut bad = snap;
        bad.classes.truncate(1);
        assert!(bad.restore().is_err());
    }

    #[test]
    fn missing_file_names_the_artifact() {
        let err = load(Path::new("/nonexistent/model.uml.json")).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
        assert!(err.to_string().contains("/nonexistent/model.uml.json"));
    }
}
