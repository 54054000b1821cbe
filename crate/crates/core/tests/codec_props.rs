mod oracles;

use mono3d_core::codec::{
    augment, decode_detections, encode_batch, encode_targets, ideal_outputs,
    AugmentPolicy, Scene,
};
use mono3d_core::codec::container::{read_targets, write_targets
};
use mono3d_core::geometry::{box_corners, wrap_angle};
use mono3d_core::{CodecConfig, Execution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oracles::{random_projection, random_visible_box};

#[test]
fn ideal_outputs_decode_to_ground_truth() {
    let cfg = CodecConfig::kitti_car();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut recovered = 0;
    for _ in 0..200 {
        let proj = random_projection(&mut rng);
        let n = rng.random_range(0..8);
        let objs: Vec<_> = (0..n).map(|_| random_visible_box(&mut rng, &proj)).collect();
        let t = encode_targets(&objs, &proj, &cfg).unwrap();
        let (hm, reg) = ideal_outputs(&t);
        let dets = decode_detections(&hm, &reg, &proj, &cfg).unwrap();
        assert_eq!(dets.len(), t.entries.len());
        for e in &t.entries {
            let d = dets.iter().find(|d| d.cell == e.cell).expect("entry decoded");
            let (a, b) = (d.box3d, e.gt);
            for k in 0..3 {
                assert!((a.location[k] - b.location[k]).abs() < 1e-6);
            }
            for (x, y) in a.dims.to_array().into_iter().zip(b.dims.to_array()) {
                assert!(((x - y) / y).abs() < 1e-9);
            }
            assert!(wrap_angle(a.yaw - b.yaw).abs() < 1e-9);
            recovered += 1;
        }
        assert_eq!(t.entries.len() + t.dropped.len(), objs.len());
    }
    assert!(recovered > 300);
}

#[test]
fn offsets_lie_in_unit_square() {
    let cfg = CodecConfig::kitti_car();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let proj = random_projection(&mut rng);
        let b = random_visible_box(&mut rng, &proj);
        for e in encode_targets(&[b], &proj, &cfg).unwrap().entries {
            assert!((0.0..1.0).contains(&e.tuple.delta_xc) && (0.0..1.0).contains(&e.tuple.delta_yc));
            assert_eq!(e.cell.col, (e.keypoint[0] / 4.0).floor() as usize);
            assert_eq!(e.cell.row, (e.keypoint[1] / 4.0).floor() as usize);
        }
    }
}

#[test]
fn batch_strategies_agree() {
    let cfg = CodecConfig::kitti_car();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scenes: Vec<_> = (0..40)
        .map(|_| {
            let proj = random_projection(&mut rng);
            ((0..4).map(|_| random_visible_box(&mut rng, &proj)).collect::<Vec<_>>(), proj)
        })
        .collect();
    let seq = encode_batch(&scenes, &cfg, Execution::Sequential);
    let par = encode_batch(&scenes, &cfg, Execution::Parallel);
    for (a, b) in seq.into_iter().zip(par) {
        assert_eq!(a.unwrap(), b.unwrap());
    }
}

#[test]
fn flip_twice_is_identity_on_random_scenes() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let proj = random_projection(&mut rng);
        let objects: Vec<_> = (0..3).map(|_| random_visible_box(&mut rng, &proj)).collect();
        let scene = Scene { image: None, objects, projection: proj, image_w: 1280, image_h: 384 };
        let once = augment(&scene, &mut rng, AugmentPolicy::Flip).unwrap();
        let twice = augment(&once.scene, &mut rng, AugmentPolicy::Flip).unwrap();
        for (a, b) in scene.objects.iter().zip(&twice.scene.objects) {
            assert!(box_corners(a).max_abs_diff(&box_corners(b)) < 1e-8);
        }
    }
}

#[test]
fn container_round_trip_on_random_scenes() {
    let cfg = CodecConfig::kitti_car();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let proj = random_projection(&mut rng);
        let objs: Vec<_> = (0..5).map(|_| random_visible_box(&mut rng, &proj)).collect();
        let t = encode_targets(&objs, &proj, &cfg).unwrap();
        let mut buf = Vec::new();
        write_targets(&mut buf, &t).unwrap();
        assert_eq!(read_targets(&mut buf.as_slice()).unwrap(), t);
    }
}
