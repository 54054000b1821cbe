mod oracles;

use std::path::PathBuf;

use mono3d_core::codec::keep_object;
use mono3d_core::geometry::wrap_angle;
use mono3d_core::kitti::{load_detections, load_frames, parse_calib_file, KittiError};
use mono3d_core::metrics::{average_precision, evaluate, EvalConfig, EvalFrame, IouKind, MatchSpec, RecallPoints};
use mono3d_core::Execution;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/kitti")
}

fn eval_frames() -> Vec<EvalFrame> {
    let frames = load_frames(&root()).unwrap();
    let ids: Vec<String> = frames.iter().map(|f| f.id.clone()).collect();
    let mut dets = load_detections(&root().join("detections"), &ids).unwrap();
    frames
        .into_iter()
        .map(|f| EvalFrame { dets: dets.remove(&f.id).unwrap_or_default(), id: f.id, gts: f.objects })
        .collect()
}

#[test]
fn fixture_loads() {
    let frames = load_frames(&root()).unwrap();
    assert_eq!(frames.len(), 8);
    let p = frames[0].projection.matrix();
    assert_eq!(p[0], [721.5377, 0.0, 609.5593, 44.85728]);
    assert_eq!(p[2][3], 0.002745884);
    let car = frames[2].objects.iter().find(|o| o.location[2] == 46.70).unwrap();
    assert_eq!(car.dims.to_array(), [1.65, 1.67, 3.64]);
    assert_eq!(car.location, [-0.65, 1.71, 46.70]);
    assert!(frames[1].objects.iter().any(|o| o.is_dont_care()));
}

#[test]
fn stored_alpha_matches_yaw_and_ray() {
    let mut checked = 0;
    for f in load_frames(&root()).unwrap() {
        for o in f.objects.iter().filter(|o| !o.is_dont_care() && o.truncated == 0.0) {
            let theta = o.alpha + (o.location[0] / o.location[2]).atan();
            assert!(wrap_angle(theta - o.rotation_y).abs() < 0.02, "{} {}: {o:?}", f.id, o.kind);
            checked += 1;
        }
    }
    assert!(checked > 20);
}

#[test]
fn filter_fraction_matches_direct_projection() {
    let (w, h) = (1242.0, 375.0);
    let (mut total, mut dropped, mut oracle_dropped) = (0, 0, 0);
    for f in load_frames(&root()).unwrap() {
        let p = f.projection.matrix();
        for o in f.objects.iter().filter(|o| !o.is_dont_care()) {
            total += 1;
            if !keep_object(&f.projection, &o.to_box3d(0).unwrap(), w, h) {
                dropped += 1;
            }
            let c = [o.location[0], o.location[1] - o.dims.h / 2.0, o.location[2], 1.0];
            let r: Vec<f64> = p.iter().map(|row| row.iter().zip(&c).map(|(a, b)| a * b).sum()).collect();
            let (u, v) = (r[0] / r[2], r[1] / r[2]);
            if !(r[2] > 0.0 && (0.0..w).contains(&u) && (0.0..h).contains(&v)) {
                oracle_dropped += 1;
            }
        }
    }
    assert_eq!(dropped, oracle_dropped);
    assert!(dropped > 0 && dropped < total);
    println!("filter drops {dropped}/{total}");
}

#[test]
fn fixture_ap_matches_brute_force() {
    let frames = eval_frames();
    let report = evaluate(&frames, &EvalConfig::kitti_car(), Execution::Parallel);
    for e in &report.entries {
        let spec = MatchSpec { class: "Car", iou: e.iou, threshold: e.threshold, difficulty: e.difficulty };
        assert_eq!(e.curve.ap, oracles::brute_force_ap(&frames, &spec, report.recall));
    }
    let loose = MatchSpec { class: "Car", iou: IouKind::Box2d, threshold: 0.5, difficulty: None };
    let ap = average_precision(&frames, &loose, RecallPoints::R40, Execution::Sequential).ap;
    assert!(ap > 0.1, "{ap}");
}

#[test]
fn calib_validation() {
    let seq = "P2: 1 2 3 4 5 6 7 8 9 10 11 12\n";
    assert!(matches!(parse_calib_file(seq), Err(KittiError::MalformedMatrix(_))));
    assert!(matches!(parse_calib_file("P0: 1 0 0 0 0 1 0 0 0 0 1 0\n"), Err(KittiError::MissingKey(_))));
}
