mod common;

use cgd::geometry::{fps, kabsch, knn, rotation_rmse, translation_rmse, wrap_deg, Point3, PointCloud, RigidTransform};
use common::suites::{brute_fps, brute_knn, geometric_oracles};
use common::*;
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cloud_strategy(max: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-2.0f64..2.0), 4..=max)
}

fn lattice_strategy(max: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3((0i32..3).prop_map(f64::from)), 4..=max)
}

#[test]
fn knn_fps_kabsch_against_oracles() {
    let v = geometric_oracles();
    println!("{}", v.detail);
    assert!(v.pass, "{}", v.detail);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knn_matches_brute_force(pts in cloud_strategy(48), k_frac in 0.0f64..1.0) {
        let c = PointCloud::from_xyz(&pts).unwrap();
        let k = 1 + ((c.len() - 2) as f64 * k_frac) as usize;
        let g = knn(&c, k).unwrap();
        let expect = brute_knn(c.points(), k);
        for i in 0..c.len() {
            prop_assert_eq!(g.row(i), expect[i].as_slice());
            prop_assert!(!g.row(i).contains(&i));
        }
    }

    #[test]
    fn knn_ties_go_to_lower_index(pts in lattice_strategy(40), k_frac in 0.0f64..1.0) {
        let c = PointCloud::from_xyz(&pts).unwrap();
        let k = 1 + ((c.len() - 2) as f64 * k_frac) as usize;
        let g = knn(&c, k).unwrap();
        let expect = brute_knn(c.points(), k);
        for i in 0..c.len() {
            prop_assert_eq!(g.row(i), expect[i].as_slice());
        }
    }

    #[test]
    fn fps_matches_brute_force(pts in lattice_strategy(40), m_frac in 0.0f64..1.0, s_frac in 0.0f64..1.0) {
        let c = PointCloud::from_xyz(&pts).unwrap();
        let m = 1 + ((c.len() - 1) as f64 * m_frac) as usize;
        let start = ((c.len() - 1) as f64 * s_frac) as usize;
        let got = fps(&c, m, start).unwrap();
        prop_assert_eq!(&got, &brute_fps(c.points(), m, start));
        let mut sorted = got.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), m);
    }

    #[test]
    fn kabsch_recovers_rigid_motion(pts in cloud_strategy(40), seed in any::<u64>()) {
        let src = PointCloud::from_xyz(&pts).unwrap();
        let t = random_transform(&mut ChaCha8Rng::seed_from_u64(seed));
        let est = kabsch(src.points(), t.apply(&src).points()).unwrap();
        prop_assert!(rotation_rmse(&est, &t) < 1e-6);
        prop_assert!((est.translation() - t.translation()).norm() < 1e-9);
    }

    #[test]
    fn inverse_round_trip(pts in cloud_strategy(20), seed in any::<u64>()) {
        let c = PointCloud::from_xyz(&pts).unwrap();
        let t = random_transform(&mut ChaCha8Rng::seed_from_u64(seed));
        let back = t.inverse().apply(&t.apply(&c));
        for (a, b) in back.points().iter().zip(c.points()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn rotation_rmse_is_relative(sa in any::<u64>(), sb in any::<u64>()) {
        let a = random_transform(&mut ChaCha8Rng::seed_from_u64(sa));
        let b = random_transform(&mut ChaCha8Rng::seed_from_u64(sb));
        let rel = b.inverse().compose(&a);
        let lhs = rotation_rmse(&a, &b);
        let rhs = rotation_rmse(&rel, &RigidTransform::identity());
        prop_assert!((lhs - rhs).abs() < 1e-7, "{} vs {}", lhs, rhs);
        prop_assert!(lhs >= 0.0);
    }

    #[test]
    fn wrap_stays_in_half_open_range(a in -1e4f64..1e4) {
        let w = wrap_deg(a);
        prop_assert!(w > -180.0 && w <= 180.0);
        prop_assert!(((a - w) / 360.0 - ((a - w) / 360.0).round()).abs() < 1e-9);
    }
}

#[test]
fn metric_examples() {
    let i = RigidTransform::identity();
    assert_eq!(rotation_rmse(&i, &i), 0.0);
    let r10 = RigidTransform::rot_z_deg(10.0);
    assert!((rotation_rmse(&r10, &i) - 10.0 / 3f64.sqrt()).abs() < 1e-9);
    let wrap = rotation_rmse(&RigidTransform::rot_z_deg(-170.0), &RigidTransform::rot_z_deg(175.0));
    assert!((wrap - 15.0 / 3f64.sqrt()).abs() < 1e-9);
    let dt = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
    assert!((translation_rmse(&dt, &i) - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    let d1 = RigidTransform::from_translation(Vector3::new(1.0, 1.0, 1.0));
    assert!((translation_rmse(&d1, &i) - 1.0).abs() < 1e-12);
}

#[test]
fn kabsch_quarter_turn_and_collinear() {
    let src = [Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
    let rz = RigidTransform::rot_z_deg(90.0);
    let dst: Vec<Point3> = src.iter().map(|p| rz.apply_point(p)).collect();
    let est = kabsch(&src, &dst).unwrap();
    assert!((est.rotation() - rz.rotation()).norm() < 1e-12);
    assert!(est.translation().norm() < 1e-12);
    let line = [Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)];
    assert!(kabsch(&line, &line).is_err());
}

#[test]
fn fps_hand_traced_examples() {
    let line = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
    assert_eq!(fps(&line, 2, 0).unwrap(), vec![0, 3]);
    assert_eq!(fps(&line, 3, 0).unwrap(), vec![0, 3, 1]);
    assert!(fps(&line, 5, 0).is_err());
    assert!(knn(&line, 4).is_err());
}
