//! Serialization round trips: LP documents, ensemble files and IDX data.

mod common;

use fewbit::data::{load_idx, load_idx_files};
use fewbit::ensemble::{deserialize_ensemble, resolve, serialize_ensemble, subsets, tally, Ensemble, Member, MemberMeta};
use fewbit::milp::{Cmp, Constraint, MilpModel, ObjSense, Role, VarId, VarKind};
use fewbit::model::{make_encoding, Architecture, ClassId};
use fewbit::solver::{parse_lp, write_lp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_coefficient(rng: &mut impl Rng) -> f64 {
    let magnitude = match rng.gen_range(0..4) {
        0 => f64::from(rng.gen_range(1..=9)),
        1 => rng.gen_range(0.0..1.0),
        2 => 10f64.powi(rng.gen_range(-9..=9)) * rng.gen_range(1.0..10.0),
        _ => 1.0 / f64::from(rng.gen_range(1..=97)),
    };
    if rng.gen_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

fn random_model(seed: u64) -> MilpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sense = if rng.gen_bool(0.5) { ObjSense::Maximize } else { ObjSense::Minimize };
    let mut model = MilpModel::new(format!("random_{seed}"), sense);
    let n = rng.gen_range(1..40);
    let mut ids = Vec::new();
    for t in 0..n {
        let (role, index) = match rng.gen_range(0..4) {
            0 => (Role::W, vec![1 + t % 3, t, rng.gen_range(0..5)]),
            1 => (Role::U, vec![t, 1, rng.gen_range(0..5)]),
            2 => (Role::C, vec![t, 2, 0, rng.gen_range(0..5)]),
            _ => (Role::M, vec![t, rng.gen_range(0..5)]),
        };
        let (kind, lower, upper) = match rng.gen_range(0..6) {
            0 => (VarKind::Binary, 0.0, 1.0),
            1 => {
                let p = f64::from(rng.gen_range(1..=15));
                (VarKind::Integer, -p, p)
            }
            2 => {
                let v = f64::from(rng.gen_range(-3..=3));
                (VarKind::Integer, v, v)
            }
            3 => (VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY),
            4 => (VarKind::Continuous, random_coefficient(&mut rng).min(0.0), rng.gen_range(0.0..1e3)),
            _ => (VarKind::Continuous, 1e-6, 7.5),
        };
        ids.push(model.add_var(role, &index, kind, lower, upper).unwrap());
    }
    for r in 0..rng.gen_range(0..30) {
        let len = rng.gen_range(0..=ids.len().min(25));
        let terms: Vec<(VarId, f64)> = (0..len)
            .map(|_| (ids[rng.gen_range(0..ids.len())], random_coefficient(&mut rng)))
            .collect();
        let cmp = [Cmp::Le, Cmp::Eq, Cmp::Ge][rng.gen_range(0..3)];
        let rhs = if rng.gen_bool(0.3) { 0.0 } else { random_coefficient(&mut rng) };
        model
            .add_constraint(Constraint {
                name: format!("row_{r}"),
                terms,
                cmp,
                rhs,
            })
            .unwrap();
    }
    let mut objective = Vec::new();
    for &v in &ids {
        if rng.gen_bool(0.6) {
            objective.push((v, random_coefficient(&mut rng)));
        }
    }
    model.set_objective(sense, objective);
    model
}

#[test]
fn lp_documents_round_trip_on_random_models() {
    for seed in 0..100 {
        let model = random_model(seed);
        let text = write_lp(&model).unwrap();
        let back = parse_lp(&text).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{text}"));
        assert_eq!(back.structure(), model.structure(), "seed {seed}\n{text}");
        // variables come back in order of first appearance, so compare structure
        assert_eq!(parse_lp(&write_lp(&back).unwrap()).unwrap().structure(), model.structure());
    }
}

fn random_ensemble(classes: &[ClassId], m: usize, arch_hidden: &[usize], p: i32, seed: u64) -> Ensemble {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members = subsets(classes, m)
        .into_iter()
        .map(|subset| {
            let encoding = make_encoding(&subset).unwrap();
            let mut layers = arch_hidden.to_vec();
            layers.push(encoding.bit_width());
            let arch = Architecture::new(layers, p).unwrap();
            Member {
                weights: common::random_weights(&arch, &mut rng),
                encoding,
                subset,
                meta: MemberMeta {
                    stage_reached: "SM+MM+MW".into(),
                    stages: Vec::new(),
                    train_samples: 20,
                    t_hat_size: 19,
                },
            }
        })
        .collect();
    Ensemble::new(classes, m, members).unwrap()
}

#[test]
fn ensembles_round_trip_with_identical_predictions() {
    for (m, p) in [(2, 1), (2, 7), (3, 3)] {
        let ens = random_ensemble(&[0, 3, 5, 8], m, &[12, 5, 4], p, m as u64 * 100 + p as u64);
        let text = serialize_ensemble(&ens).unwrap();
        let back = deserialize_ensemble(&text).unwrap();
        assert_eq!(back, ens);
        for (a, b) in ens.members().iter().zip(back.members()) {
            assert_eq!(a.weights.flat(), b.weights.flat());
        }
        assert_eq!(serialize_ensemble(&back).unwrap(), text);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..12).map(|_| f64::from(rng.gen_range(0..=255u8))).collect();
            let (t1, t2) = (tally(&x, &ens).unwrap(), tally(&x, &back).unwrap());
            assert_eq!(t1, t2);
            assert_eq!(resolve(&t1), resolve(&t2));
        }
    }
}

#[test]
fn tampered_ensembles_are_rejected() {
    let ens = random_ensemble(&[0, 1, 2], 2, &[4, 3], 1, 1);
    let text = serialize_ensemble(&ens).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let w = &mut doc["members"][0]["weights"][0][0];
    *w = serde_json::json!(if w.as_i64() == Some(1) { 0 } else { 1 });
    assert!(deserialize_ensemble(&doc.to_string()).is_err());
}

#[test]
fn idx_fixture_loads_byte_exactly() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let images = std::fs::read(dir.join("tiny-images-idx3-ubyte")).unwrap();
    let labels = std::fs::read(dir.join("tiny-labels-idx1-ubyte")).unwrap();
    let ds = load_idx_files(&dir, "tiny", "tiny").unwrap();
    assert_eq!(ds, {
        let mut d = load_idx(&images, &labels).unwrap();
        d.name = "tiny".into();
        d
    });
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.image_shape, Some((4, 3)));
    let pixels: Vec<u8> = ds.samples.iter().flat_map(|s| s.features.iter().map(|&v| v as u8)).collect();
    assert_eq!(pixels.as_slice(), &images[16..]);
    let classes: Vec<ClassId> = ds.samples.iter().map(|s| s.class).collect();
    assert_eq!(classes, vec![7, 0, 9]);
    assert!(ds.samples.iter().flat_map(|s| &s.features).all(|v| v.fract() == 0.0));
    assert_eq!(ds.digest.len(), 64);
}
