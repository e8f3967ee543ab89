//! Independent reference implementations used as test oracles, plus the
//! randomized property checks shared by the property and acceptance suites.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use uml_core::artmap::{
    complement_code, ArtmapNetwork, ArtmapParams, CategoryNode, ClassId, FeatureVector,
    SearchRequest,
};
use uml_core::gate::{Detection, HypothesisBuffer, Learner, LearningMode, UncertaintyCriteria};
use uml_core::store;

/// `(a, 1 - a)` written out longhand.
pub fn complement(a: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    v.extend(a.iter().map(|x| 1.0 - x));
    v
}

pub fn choice(a: &[f64], w: &[f64], alpha: f64) -> f64 {
    let mut and = 0.0;
    let mut size = 0.0;
    for i in 0..a.len() {
        and += if a[i] < w[i] { a[i] } else { w[i] };
        size += w[i];
    }
    and + (1.0 - alpha) * (a.len() as f64 - size)
}

/// Full scan: highest choice value among nodes above the signal threshold,
/// first index on ties. Baseline vigilance 0 accepts any candidate.
pub fn brute_classify(nodes: &[CategoryNode], a: &[f64], alpha: f64) -> Option<ClassId> {
    let coded = complement(a);
    let threshold = alpha * coded.len() as f64;
    let mut best: Option<(f64, usize)> = None;
    for (j, n) in nodes.iter().enumerate() {
        let t = choice(&coded, &n.weights, alpha);
        if t <= threshold {
            continue;
        }
        if best.is_none_or(|(bt, _)| t > bt) {
            best = Some((t, j));
        }
    }
    best.map(|(_, j)| nodes[j].label)
}

/// Element-wise minimum over the complement codes of `samples`.
pub fn min_fold(samples: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = complement(&samples[0]);
    for s in &samples[1..] {
        for (x, y) in acc.iter_mut().zip(complement(s)) {
            if y < *x {
                *x = y;
            }
        }
    }
    acc
}

/// Final hypothesis over the last `k` slots (0 = empty), counted by hand.
pub fn brute_persistence(slots: &[u32], k: usize, psi5: f64) -> Option<u32> {
    let window = &slots[slots.len().saturating_sub(k)..];
    let mut best: Option<(u32, usize)> = None;
    for c in 1..=window.iter().copied().max().unwrap_or(0) {
        let n = window.iter().filter(|&&s| s == c).count();
        if n > 0 && best.is_none_or(|(_, bn)| n > bn) {
            best = Some((c, n));
        }
    }
    let (c, n) = best?;
    (n as f64 / k as f64 >= psi5).then_some(c)
}

pub fn random_features(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

/// A network of random hyperboxes with labels in `1..=labels`.
pub fn random_network(rng: &mut ChaCha8Rng, d: usize, nodes: usize, labels: u32) -> ArtmapNetwork {
    let nodes = (0..nodes)
        .map(|_| {
            let mut lo = Vec::with_capacity(d);
            let mut hi = Vec::with_capacity(d);
            for _ in 0..d {
                let x: f64 = rng.random();
                let y: f64 = rng.random();
                lo.push(x.min(y));
                hi.push(x.max(y));
            }
            let mut weights = lo;
            weights.extend(hi.iter().map(|h| 1.0 - h));
            CategoryNode {
                weights,
                label: ClassId(rng.random_range(1..=labels)),
                support: 1,
                created_frame: 0,
            }
        })
        .collect();
    ArtmapNetwork::from_parts(d, ArtmapParams::default(), nodes, labels).unwrap()
}

pub fn detection(features: Vec<f64>, label: Option<ClassId>, object_id: u64) -> Detection {
    Detection {
        features: FeatureVector::new(features).unwrap(),
        objectness: 0.9,
        object_id,
        position: [0.0, 0.0],
        supervised_label: label,
    }
}

/// A learner trained on a few random supervised samples.
pub fn random_learner(rng: &mut ChaCha8Rng, d: usize, samples: usize) -> Learner {
    let mut l = Learner::new(d, ArtmapParams::default(), UncertaintyCriteria::default()).unwrap();
    let classes = [l.supervised_class("a"), l.supervised_class("b")];
    for i in 0..samples {
        let det = detection(
            random_features(rng, d),
            Some(classes[rng.random_range(0..2)]),
            i as u64,
        );
        l.process_frame(&[det], LearningMode::Supervised, None)
            .unwrap();
    }
    l
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

pub fn check_norm_conservation(rng: &mut ChaCha8Rng, n: usize) -> Result<(), String> {
    for _ in 0..n {
        let d = rng.random_range(1..16);
        let a = random_features(rng, d);
        let coded = complement_code(&FeatureVector::new(a.clone()).unwrap(), d).unwrap();
        if !close(coded.norm(), d as f64) {
            return Err(format!("|A| = {} for d = {d}", coded.norm()));
        }
    }
    Ok(())
}

pub fn check_monotone_weights(rng: &mut ChaCha8Rng, n: usize) -> Result<(), String> {
    for _ in 0..n {
        let d = rng.random_range(1..6);
        let mut net = random_network(rng, d, 1, 1);
        net.params = ArtmapParams {
            beta: if rng.random_bool(0.5) {
                1.0
            } else {
                rng.random_range(0.01..1.0)
            },
            ..ArtmapParams::default()
        };
        for _ in 0..5 {
            let before = net.nodes()[0].weights.clone();
            let a = net
                .complement(&FeatureVector::new(random_features(rng, d)).unwrap())
                .unwrap();
            net.learn_into(0, &a).unwrap();
            if net.nodes()[0]
                .weights
                .iter()
                .zip(&before)
                .any(|(w, b)| w > b)
            {
                return Err(format!(
                    "weight increased: {before:?} -> {:?}",
                    net.nodes()[0].weights
                ));
            }
        }
    }
    Ok(())
}

pub fn check_fast_learning(rng: &mut ChaCha8Rng, n: usize) -> Result<(), String> {
    for _ in 0..n {
        let d = rng.random_range(1..6);
        let samples: Vec<Vec<f64>> = (0..rng.random_range(1..8))
            .map(|_| random_features(rng, d))
            .collect();
        let mut net = ArtmapNetwork::new(d, ArtmapParams::default()).unwrap();
        let first = net
            .complement(&FeatureVector::new(samples[0].clone()).unwrap())
            .unwrap();
        net.commit_new_node(&first, ClassId(1), 0).unwrap();
        for s in &samples[1..] {
            let a = net
                .complement(&FeatureVector::new(s.clone()).unwrap())
                .unwrap();
            net.learn_into(0, &a).unwrap();
        }
        if net.nodes()[0].weights != min_fold(&samples) {
            return Err("template differs from the min-fold of its samples".into());
        }
        let last = net
            .complement(&FeatureVector::new(samples[samples.len() - 1].clone()).unwrap())
            .unwrap();
        let once = net.nodes()[0].weights.clone();
        net.learn_into(0, &last).unwrap();
        if net.nodes()[0].weights != once {
            return Err("relearning the same sample changed the template".into());
        }
    }
    Ok(())
}

pub fn check_search_termination(rng: &mut ChaCha8Rng, n: usize) -> Result<(), String> {
    for _ in 0..n {
        let d = rng.random_range(1..5);
        let count = rng.random_range(0..10);
        let mut net = random_network(rng, d, count, 3);
        let a = net
            .complement(&FeatureVector::new(random_features(rng, d)).unwrap())
            .unwrap();
        let label = Some(ClassId(rng.random_range(1..=3)));
        let rho = rng.random::<f64>();
        let out = net
            .resonance_search(
                &a,
                &SearchRequest::new(rho).supervised(label).learning(true),
            )
            .map_err(|e| e.to_string())?;
        let resolved = u32::from(!matches!(
            out.kind,
            uml_core::artmap::LearnKind::SearchExhausted
        ));
        if out.iterations as usize > count {
            return Err(format!("{} iterations over {count} nodes", out.iterations));
        }
        if out.resets + out.match_tracks + resolved != out.iterations {
            return Err("iterations do not account for every visited node".into());
        }
        if out.final_rho < rho {
            return Err("vigilance decreased during search".into());
        }
    }
    Ok(())
}

pub fn check_classify_oracle(rng: &mut ChaCha8Rng, n: usize) -> Result<(), String> {
    for i in 0..n {
        let d = rng.random_range(1..5);
        let count = rng.random_range(0..12);
        let net = random_network(rng, d, count, 4);
        let a = random_features(rng, d);
        let got = net
            .classify(
                &net.complement(&FeatureVector::new(a.clone()).unwrap())
                    .unwrap(),
            )
            .unwrap()
            .label;
        let want = brute_classify(net.nodes(), &a, net.params.alpha);
        if got != want {
            return Err(format!("instance {i}: classify {got:?}, scan {want:?}"));
        }
    }
    Ok(())
}

pub fn check_frozen_invariance(rng: &mut ChaCha8Rng, n: usize) -> Result<(), String> {
    for _ in 0..n {
        let d = rng.random_range(1..5);
        let mut l = random_learner(rng, d, 8);
        l.buffers_enabled = rng.random_bool(0.5);
        let before = store::state_digest(&l).unwrap();
        for f in 0..5 {
            let det = detection(random_features(rng, d), None, f);
            l.process_frame(&[det], LearningMode::Frozen, None).unwrap();
        }
        if store::state_digest(&l).unwrap() != before {
            return Err("frozen processing changed the learnable state".into());
        }
    }
    Ok(())
}

pub fn check_save_load_decisions(
    rng: &mut ChaCha8Rng,
    n: usize,
    dir: &std::path::Path,
) -> Result<(), String> {
    for i in 0..n {
        let d = rng.random_range(1..5);
        let original = random_learner(rng, d, 10);
        let path = dir.join(format!("m{i}.uml.json"));
        store::save(&original, &path).map_err(|e| e.to_string())?;
        let mut loaded = store::load(&path).map_err(|e| e.to_string())?;
        let mut original = original;
        let mode = [
            LearningMode::Supervised,
            LearningMode::Unsupervised,
            LearningMode::Frozen,
        ][rng.random_range(0..3)];
        let stream: Vec<Detection> = (0..20)
            .map(|k| {
                let label =
                    (mode == LearningMode::Supervised).then(|| ClassId(rng.random_range(1..=2)));
                detection(random_features(rng, d), label, k % 3)
            })
            .collect();
        let mut logs = [Vec::new(), Vec::new()];
        for det in &stream {
            logs[0].extend(
                original
                    .process_frame(std::slice::from_ref(det), mode, None)
                    .unwrap(),
            );
            logs[1].extend(
                loaded
                    .process_frame(std::slice::from_ref(det), mode, None)
                    .unwrap(),
            );
        }
        if store::decision_digest(&logs[0]).unwrap() != store::decision_digest(&logs[1]).unwrap() {
            return Err(format!("decision logs diverge after reload ({mode:?})"));
        }
    }
    Ok(())
}

pub fn check_persistence_oracle(rng: &mut ChaCha8Rng, n: usize) -> Result<(), String> {
    for _ in 0..n {
        let k = rng.random_range(1..12);
        let psi5 = rng.random::<f64>();
        let mut buf = HypothesisBuffer::new(0, k, 0);
        let mut slots = Vec::new();
        for f in 0..rng.random_range(0..25) {
            let s = if rng.random_bool(0.2) {
                0
            } else {
                rng.random_range(1..4)
            };
            buf.push((s != 0).then_some(ClassId(s)), f);
            slots.push(s);
        }
        let got = buf.finalize(psi5).map(|c| c.0);
        let want = brute_persistence(&slots, k, psi5);
        if got != want {
            return Err(format!(
                "slots {slots:?} k {k} psi5 {psi5}: {got:?} vs {want:?}"
            ));
        }
    }
    Ok(())
}
