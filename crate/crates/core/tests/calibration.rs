//! Separability and degradation checks on the default scenario. Centroids
//! and errors are computed here from the raw streams, independently of the
//! learner.

use uml_core::experiments::{score, train_ground, ExperimentConfig, Workbench};
use uml_core::simenv::{DatasetBundle, ScenarioSpec, SetId, SimWorld, ViewCondition};

type Labeled = Vec<(SetId, Vec<f64>)>;

fn samples(data: &DatasetBundle, names: &[&str]) -> Labeled {
    names
        .iter()
        .flat_map(|n| data.stream(n))
        .flat_map(|f| &f.detections)
        .map(|d| (d.set, d.features.as_slice().to_vec()))
        .collect()
}

fn centroid<'a>(xs: impl Iterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let xs: Vec<&Vec<f64>> = xs.collect();
    (0..xs[0].len())
        .map(|i| xs.iter().map(|x| x[i]).sum::<f64>() / xs.len() as f64)
        .collect()
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn bench() -> Workbench {
    Workbench::build(&ExperimentConfig::default()).unwrap()
}

#[test]
fn aerial_a_and_b_overlap() {
    let b = bench();
    let ab = samples(
        &b.data,
        &[
            "aerial_a_train",
            "aerial_a_test",
            "aerial_b_train",
            "aerial_b_test",
        ],
    );
    let ca = centroid(ab.iter().filter(|x| x.0 == SetId::A).map(|x| &x.1));
    let cb = centroid(ab.iter().filter(|x| x.0 == SetId::B).map(|x| &x.1));
    let wrong = ab
        .iter()
        .filter(|(s, f)| (dist(f, &ca) < dist(f, &cb)) != (*s == SetId::A))
        .count();
    let err = wrong as f64 / ab.len() as f64;
    assert!(err >= 0.15, "nearest-centroid A/B error {err:.3}");
}

#[test]
fn aerial_c_separates_from_a_and_b() {
    let b = bench();
    let ab = samples(
        &b.data,
        &[
            "aerial_a_train",
            "aerial_a_test",
            "aerial_b_train",
            "aerial_b_test",
        ],
    );
    let c = samples(&b.data, &["aerial_c_train", "aerial_c_test"]);
    let cab = centroid(ab.iter().map(|x| &x.1));
    let cc = centroid(c.iter().map(|x| &x.1));
    let wrong = ab
        .iter()
        .chain(&c)
        .filter(|(s, f)| (dist(f, &cc) < dist(f, &cab)) != (*s == SetId::C))
        .count();
    let err = wrong as f64 / (ab.len() + c.len()) as f64;
    assert!(err <= 0.02, "nearest-centroid C error {err:.4}");
}

#[test]
fn ground_model_degrades_with_altitude() {
    let cfg = ExperimentConfig::default();
    let b = Workbench::build(&cfg).unwrap();
    let ground = train_ground(&cfg, &b).unwrap().learner;
    let at = |alt: f64| {
        let frames = b.world.sample_stream(SetId::A, [alt, alt], 200, 77);
        score(&ground, &frames).unwrap().accuracy()
    };
    assert!(at(0.0) >= 95.0, "altitude 0: {}", at(0.0));
    for alt in [25.0, 30.0] {
        assert!(at(alt) <= 35.0, "altitude {alt}: {}", at(alt));
    }
}

#[test]
fn export_covers_all_sets_and_places_c_far_from_a() {
    let world = SimWorld::build(&ScenarioSpec::default()).unwrap();
    let views: Vec<ViewCondition> = (0..5)
        .map(|i| ViewCondition::new(20.0, 72.0 * i as f64, i))
        .collect();
    let mut buf = Vec::new();
    let rows = world.export_features(&views, &mut buf).unwrap();
    assert_eq!(rows, world.objects.len() * views.len());

    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("set_id,altitude,f0"));
    let parsed: Vec<(String, Vec<f64>)> = lines
        .map(|l| {
            let mut cols = l.split(',');
            let set = cols.next().unwrap().to_owned();
            cols.next();
            (set, cols.map(|c| c.parse().unwrap()).collect())
        })
        .collect();
    assert_eq!(parsed.len(), rows);
    for set in ["A", "B", "O", "C"] {
        assert!(parsed.iter().any(|(s, _)| s == set), "set {set} missing");
    }
    let of = |set: &str| centroid(parsed.iter().filter(|(s, _)| s == set).map(|(_, f)| f));
    let (a, b, c) = (of("A"), of("B"), of("C"));
    assert!(dist(&c, &a) > dist(&a, &b));
}

#[test]
fn sample_counts_and_splits() {
    let b = bench();
    let count = |n: &str| b.data.stream(n).len();
    assert_eq!(count("ground"), 677 + 1097 + 316);
    assert_eq!(count("aerial_a_train") + count("aerial_a_test"), 645);
    assert_eq!(count("aerial_b_train") + count("aerial_b_test"), 1390);
    assert_eq!(count("aerial_o_train") + count("aerial_o_test"), 75);
    assert_eq!(count("aerial_c_train") + count("aerial_c_test"), 298);
    assert_eq!(count("aerial_a_train"), 451);
    assert_eq!(count("aerial_b_train"), 695);
    assert_eq!(count("aerial_c_train"), 29);
    for (name, entry) in &b.data.manifest {
        assert_eq!(entry.count, count(name));
    }
    let ground_sets: Vec<SetId> = b
        .data
        .stream("ground")
        .iter()
        .map(|f| f.detections[0].set)
        .collect();
    assert!(!ground_sets.contains(&SetId::C));
    for f in b.data.streams.values().flatten() {
        for d in &f.detections {
            assert!(d.objectness >= 0.5);
        }
    }
}
