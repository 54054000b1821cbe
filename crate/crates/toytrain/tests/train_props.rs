use mono3d_core::losses::LossVariant;
use mono3d_core::Execution;
use mono3d_toytrain::checkpoint::{load, save};
use mono3d_toytrain::scene::scene_seed;
use mono3d_toytrain::train::{FixedBatch, SceneStream, GATE_LIMIT};
use mono3d_toytrain::{
    ablate, generate_scene, gradient_gate, train, Model, ModelSpec, Optimizer, SceneConfig, ToyError, TrainConfig,
};
use proptest::prelude::*;

fn quick(iterations: usize) -> TrainConfig {
    TrainConfig { iterations, batch_size: 2, eval_scenes: 4, gate: false, ..TrainConfig::default() }
}

fn fixed(n: u64) -> FixedBatch {
    let cfg = SceneConfig::default();
    FixedBatch((0..n).map(|i| generate_scene(&cfg, scene_seed(7, i)).unwrap()).collect())
}

#[test]
fn one_iteration_moves_weights() {
    let mut model = Model::init(ModelSpec::default(), 0).unwrap();
    let before = model.params.clone();
    let log = train(&mut model, &mut fixed(2), &SceneConfig::default(), &quick(1), Execution::Parallel).unwrap();
    assert_eq!(log.entries.len(), 1);
    assert!(log.entries[0].loss.total.is_finite());
    assert!(model.params.iter().zip(&before).any(|(a, b)| a != b));
}

#[test]
fn overfits_a_fixed_batch() {
    let mut model = Model::init(ModelSpec::default(), 1).unwrap();
    let cfg = TrainConfig { milestones: vec![], ..quick(200) };
    let log = train(&mut model, &mut fixed(2), &SceneConfig::default(), &cfg, Execution::Parallel).unwrap();
    let first = log.entries[0].loss.total;
    let last = log.entries.last().unwrap().loss.total;
    assert!(last <= 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn same_seed_same_log() {
    let scene = SceneConfig::default();
    let run = |exec| {
        let mut model = Model::init(ModelSpec::default(), 3).unwrap();
        let mut stream = SceneStream { cfg: scene.clone(), seed: 3, exec };
        let log = train(&mut model, &mut stream, &scene, &quick(4), exec).unwrap();
        (log.to_text(), model.params)
    };
    let a = run(Execution::Parallel);
    assert_eq!(a, run(Execution::Parallel));
    assert_eq!(a, run(Execution::Sequential));
}

#[test]
fn divergence_is_reported() {
    let mut model = Model::init(ModelSpec::default(), 0).unwrap();
    let cfg = TrainConfig { lr: 1e6, clip_norm: None, optimizer: Optimizer::MOMENTUM, ..quick(50) };
    let err = train(&mut model, &mut fixed(2), &SceneConfig::default(), &cfg, Execution::Parallel).unwrap_err();
    assert!(matches!(err, ToyError::NonFiniteLoss { .. }), "{err}");
}

#[test]
fn gate_passes_for_every_variant() {
    let cfg = SceneConfig::default();
    let model = Model::init(ModelSpec::default(), 5).unwrap();
    for variant in LossVariant::ALL {
        let loss = mono3d_core::losses::LossConfig::with_variant(variant);
        let err = gradient_gate(&model, fixed(2).0, &cfg.codec(), &loss, 0).unwrap();
        assert!(err < GATE_LIMIT, "{variant:?}: {err}");
    }
}

#[test]
fn gate_runs_inside_train() {
    let mut model = Model::init(ModelSpec::default(), 0).unwrap();
    let cfg = TrainConfig { gate: true, ..quick(1) };
    let log = train(&mut model, &mut fixed(2), &SceneConfig::default(), &cfg, Execution::Parallel).unwrap();
    assert!(log.gate_error.unwrap() < GATE_LIMIT);
}

#[test]
fn ablation_table_shape() {
    let scene = SceneConfig::default();
    let cfg = quick(2);
    let variants = [LossVariant::DisentangledL1, LossVariant::PlainL1];
    let seeds = [0, 1, 2];
    let t = ablate(&variants, &seeds, &ModelSpec::default(), &scene, &cfg, Execution::Parallel).unwrap();
    assert_eq!(t.rows.len(), 2);
    for row in &t.rows {
        assert_eq!(row.runs.iter().map(|r| r.0).collect::<Vec<_>>(), seeds);
        for (_, m) in &row.runs {
            for v in [m.ap3d_25, m.ap3d_50, m.ap_bev_50] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
    assert!(t.to_text().lines().count() >= 3);
    let again = ablate(&variants, &seeds, &ModelSpec::default(), &scene, &cfg, Execution::Sequential).unwrap();
    assert_eq!(t.to_text(), again.to_text());
    assert!(matches!(
        ablate(&variants, &[0, 1], &ModelSpec::default(), &scene, &cfg, Execution::Parallel),
        Err(ToyError::InvalidConfig(_))
    ));
}

#[test]
fn checkpoint_survives_training() {
    let mut model = Model::init(ModelSpec::default(), 0).unwrap();
    train(&mut model, &mut fixed(2), &SceneConfig::default(), &quick(2), Execution::Parallel).unwrap();
    let mut buf = Vec::new();
    save(&mut buf, &model, "train.iterations=2\n").unwrap();
    let (back, echo) = load(&mut buf.as_slice()).unwrap();
    assert_eq!(back.params, model.params);
    assert_eq!(echo, "train.iterations=2\n");
    let scene = generate_scene(&SceneConfig::default(), 11).unwrap();
    let a = model.forward(&scene.chw(), scene.height, scene.width).unwrap();
    let b = back.forward(&scene.chw(), scene.height, scene.width).unwrap();
    assert_eq!(a.heatmap, b.heatmap);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scenes_are_deterministic_and_bounded(seed in any::<u64>()) {
        let cfg = SceneConfig::default();
        let a = generate_scene(&cfg, seed).unwrap();
        prop_assert_eq!(&a.image, &generate_scene(&cfg, seed).unwrap().image);
        prop_assert!(a.objects.len() >= cfg.min_objects && a.objects.len() <= cfg.max_objects);
        prop_assert!(a.image.iter().all(|v| (0.0..=1.0).contains(v)));
        for o in &a.objects {
            prop_assert!(o.location[2] >= cfg.depth_range.0 && o.location[2] <= cfg.depth_range.1);
            let painted = a.owner.iter().filter(|&&k| k.is_some_and(|k| a.objects[k] == *o)).count();
            prop_assert!(painted > 0);
        }
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), echo in "[a-z.=0-9\n]{0,40}") {
        let model = Model::init(ModelSpec::default(), seed).unwrap();
        let mut buf = Vec::new();
        save(&mut buf, &model, &echo).unwrap();
        let (back, e) = load(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back.params, model.params);
        prop_assert_eq!(e, echo);
    }
}
