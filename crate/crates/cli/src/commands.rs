use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mono3d_core::codec::container::{read_outputs, write_outputs, write_targets, OutputMaps};
use mono3d_core::codec::{decode_detections, encode_targets, ideal_outputs};
use mono3d_core::geometry::Rect2;
use mono3d_core::kitti::{
    compute_stats, load_detections, load_frames, parse_calib_file, write_detections, DetectionRecord, Frame,
    GtObject,
};
use mono3d_core::metrics::{depth_error_report, evaluate, EvalFrame};
use mono3d_core::{Box3D, Execution};
use mono3d_toytrain::checkpoint;
use mono3d_toytrain::eval::detect;
use mono3d_toytrain::scene::scene_seed;
use mono3d_toytrain::train::{SceneStream, GATE_LIMIT};
use mono3d_toytrain::{ablate, evaluate_model, generate_scene, gradient_gate, heldout_scenes, train, Model, ModelSpec, SceneSource};

use crate::config::{dims_text, RunConfig};
use crate::render::{bev_svg, draw_box, image_from_hwc, DET_COLOR, GT_COLOR};
use crate::{CliError, Command};

const EXEC: Execution = Execution::Parallel;

pub fn execute(cmd: &Command, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    match cmd {
        Command::Stats { data } => stats(cfg, data, out),
        Command::Encode { data, ideal } => encode(cfg, data, *ideal, out),
        Command::Decode { outputs, calib } => decode(cfg, outputs, calib, out),
        Command::Eval { data, dets } => eval(cfg, data, dets, out),
        Command::DepthReport { data, dets } => depth_report(cfg, data, dets, out),
        Command::TrainToy => train_toy(cfg, out),
        Command::Ablate => run_ablation(cfg, out),
        Command::Gradcheck { checkpoint } => gradcheck(cfg, checkpoint.as_deref(), out),
        Command::Render { data, dets, checkpoint } => render(cfg, data.as_deref(), dets.as_deref(), checkpoint.as_deref(), out),
    }
}

fn subdir(out: &Path, name: &str) -> Result<PathBuf, CliError> {
    let dir = out.join(name);
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn class_boxes(cfg: &RunConfig, objects: &[GtObject]) -> Result<Vec<Box3D>, CliError> {
    objects
        .iter()
        .filter(|o| o.kind == cfg.class)
        .map(|o| o.to_box3d(0).map_err(|e| CliError::Invalid(e.to_string())))
        .collect()
}

fn eval_frames(data: &Path, dets: &Path) -> Result<(Vec<Frame>, Vec<EvalFrame>), CliError> {
    let frames = load_frames(data)?;
    let ids: Vec<String> = frames.iter().map(|f| f.id.clone()).collect();
    let mut all = load_detections(dets, &ids)?;
    let eval = frames
        .iter()
        .map(|f| EvalFrame { id: f.id.clone(), gts: f.objects.clone(), dets: all.remove(&f.id).unwrap_or_default() })
        .collect();
    Ok((frames, eval))
}

fn stats(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), CliError> {
    let frames = load_frames(data)?;
    let labels: Vec<GtObject> = frames.into_iter().flat_map(|f| f.objects).collect();
    let classes: Vec<&str> = cfg.stats_classes.iter().map(String::as_str).collect();
    let stats = compute_stats(&labels, &classes, cfg.stats_std)?;
    let mut s = String::from("# class count h w l depth_mean depth_std\n");
    for c in &classes {
        if let Some(st) = stats.get(c) {
            let _ = writeln!(s, "{} {} {} {:.4} {:.4}", st.class, st.count, dims_text(st.mean_dims), st.depth_mean, st.depth_std);
        }
    }
    print!("{s}");
    write(&out.join("stats.txt"), &s)?;
    if let Some(st) = stats.get(&cfg.class) {
        let p = st.to_prior();
        let snippet = format!(
            "codec.class = {}\ncodec.prior.h = {}\ncodec.prior.w = {}\ncodec.prior.l = {}\ncodec.prior.depth_mean = {}\ncodec.prior.depth_std = {}\n",
            cfg.class, p.mean_dims.h, p.mean_dims.w, p.mean_dims.l, p.depth_mean, p.depth_std
        );
        write(&out.join("prior.cfg"), snippet)?;
    }
    Ok(())
}

fn encode(cfg: &RunConfig, data: &Path, ideal: bool, out: &Path) -> Result<(), CliError> {
    let frames = load_frames(data)?;
    let targets_dir = subdir(out, "targets")?;
    let outputs_dir = if ideal { Some(subdir(out, "outputs")?) } else { None };
    let mut summary = String::from("# frame objects encoded dropped\n");
    for f in &frames {
        let boxes = class_boxes(cfg, &f.objects)?;
        let t = encode_targets(&boxes, &f.projection, &cfg.codec)?;
        let mut buf = Vec::new();
        write_targets(&mut buf, &t)?;
        write(&targets_dir.join(format!("{}.m3dt", f.id)), buf)?;
        if let Some(dir) = &outputs_dir {
            let (heatmap, regression) = ideal_outputs(&t);
            let mut buf = Vec::new();
            write_outputs(&mut buf, &OutputMaps { heatmap, regression, stride: t.stride })?;
            write(&dir.join(format!("{}.m3dp", f.id)), buf)?;
        }
        let _ = writeln!(summary, "{} {} {} {}", f.id, boxes.len(), t.entries.len(), t.dropped.len());
    }
    write(&out.join("encode.txt"), summary)?;
    println!("encoded {} frames into {}", frames.len(), targets_dir.display());
    Ok(())
}

fn ids_with_extension(dir: &Path, ext: &str) -> Result<Vec<String>, CliError> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

fn to_record(class: &str, d: &mono3d_core::Detection) -> DetectionRecord {
    let bbox = d.box2d.unwrap_or(Rect2 { xmin: 0.0, ymin: 0.0, xmax: 0.0, ymax: 0.0 });
    DetectionRecord { object: GtObject::from_box3d(class, &d.box3d, bbox), score: d.score }
}

fn decode(cfg: &RunConfig, outputs: &Path, calib: &Path, out: &Path) -> Result<(), CliError> {
    let ids = ids_with_extension(outputs, "m3dp")?;
    let mut all = BTreeMap::new();
    for id in &ids {
        let maps = read_outputs(&mut open(&outputs.join(format!("{id}.m3dp")))?)?;
        if maps.stride != cfg.codec.stride {
            return Err(CliError::Invalid(format!("{id}.m3dp has stride {}, config has {}", maps.stride, cfg.codec.stride)));
        }
        let calib_path = calib.join(format!("{id}.txt"));
        let text = fs::read_to_string(&calib_path).map_err(|e| CliError::Io(format!("{}: {e}", calib_path.display())))?;
        let proj = parse_calib_file(&text)?;
        let dets = decode_detections(&maps.heatmap, &maps.regression, &proj, &cfg.codec)?;
        all.insert(id.clone(), dets.iter().map(|d| to_record(&cfg.class, d)).collect::<Vec<_>>());
    }
    let dir = subdir(out, "detections")?;
    write_detections(&dir, &all)?;
    println!("decoded {} frames, {} detections", ids.len(), all.values().map(Vec::len).sum::<usize>());
    Ok(())
}

fn eval(cfg: &RunConfig, data: &Path, dets: &Path, out: &Path) -> Result<(), CliError> {
    let (_, frames) = eval_frames(data, dets)?;
    let report = evaluate(&frames, &cfg.eval, EXEC);
    print!("{}", report.to_text());
    write(&out.join("eval.txt"), report.to_text())?;
    write(&out.join("eval_machine.txt"), report.to_machine())
}

fn depth_report(cfg: &RunConfig, data: &Path, dets: &Path, out: &Path) -> Result<(), CliError> {
    let (_, frames) = eval_frames(data, dets)?;
    let report = depth_error_report(&frames, &cfg.eval.class, cfg.depth_min_iou);
    print!("{}", report.to_text());
    write(&out.join("depth_report.txt"), report.to_text())
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    Ok(checkpoint::load(&mut std::io::BufReader::new(open(path)?))?.0)
}

fn train_toy(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let mut model = Model::init(ModelSpec::default(), cfg.seed)?;
    let mut stream = SceneStream { cfg: cfg.scene.clone(), seed: cfg.seed, exec: EXEC };
    let log = train(&mut model, &mut stream, &cfg.scene, &cfg.train, EXEC)?;
    let heldout = heldout_scenes(&cfg.scene, cfg.train.eval_scenes, EXEC)?;
    let metrics = evaluate_model(&model, &heldout, &cfg.scene.codec(), EXEC)?;
    let mut buf = Vec::new();
    checkpoint::save(&mut buf, &model, &cfg.to_text())?;
    write(&out.join("model.ckpt"), buf)?;
    write(&out.join("train_log.txt"), log.to_text())?;
    if !log.snapshots.is_empty() {
        write(&out.join("snapshots.txt"), log.snapshots_text())?;
    }
    let gate = log.gate_error.map_or("gate skipped".to_string(), |g| format!("gate max_rel_error {g:.3e}"));
    let text = format!("{metrics}\n{gate}\n");
    print!("{text}");
    write(&out.join("metrics.txt"), text)
}

fn run_ablation(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let table = ablate(&cfg.ablate_variants, &cfg.ablate_seeds, &ModelSpec::default(), &cfg.scene, &cfg.train, EXEC)?;
    print!("{}", table.to_text());
    write(&out.join("ablation.txt"), table.to_text())
}

fn gradcheck(cfg: &RunConfig, ckpt: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let model = match ckpt {
        Some(p) => load_model(p)?,
        None => Model::init(ModelSpec::default(), cfg.seed)?,
    };
    let mut stream = SceneStream { cfg: cfg.scene.clone(), seed: cfg.seed, exec: EXEC };
    let scenes = stream.batch(0, 2)?;
    let err = gradient_gate(&model, scenes, &cfg.scene.codec(), &cfg.loss, cfg.seed)?;
    let verdict = if err < GATE_LIMIT { "ok" } else { "FAILED" };
    let text = format!("max relative error {err:.6e} (limit {GATE_LIMIT:.0e}) {verdict}\n");
    print!("{text}");
    write(&out.join("gradcheck.txt"), &text)?;
    if err < GATE_LIMIT {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("gradient check failed: {err:.3e} >= {GATE_LIMIT:.0e}")))
    }
}

fn save_png(img: &image::RgbImage, path: &Path) -> Result<(), CliError> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    write(path, buf.into_inner())
}

fn render(cfg: &RunConfig, data: Option<&Path>, dets: Option<&Path>, ckpt: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let dir = subdir(out, "render")?;
    let (hw, depth) = cfg.bev_range;
    let mut n = 0;
    if let Some(data) = data {
        let frames = load_frames(data)?;
        let ids: Vec<String> = frames.iter().map(|f| f.id.clone()).collect();
        let all = match dets {
            Some(d) => load_detections(d, &ids)?,
            None => BTreeMap::new(),
        };
        for f in &frames {
            let image_path = data.join("image_2").join(format!("{}.png", f.id));
            let mut img = if image_path.exists() {
                image::open(&image_path)?.to_rgb8()
            } else {
                image::RgbImage::from_pixel(cfg.codec.image_w as u32, cfg.codec.image_h as u32, image::Rgb([96, 96, 96]))
            };
            let gts = class_boxes(cfg, &f.objects)?;
            let det_boxes: Vec<(Box3D, f64)> = all
                .get(&f.id)
                .into_iter()
                .flatten()
                .filter(|d| d.object.kind == cfg.class)
                .filter_map(|d| d.object.to_box3d(0).ok().map(|b| (b, d.score)))
                .collect();
            gts.iter().for_each(|b| _ = draw_box(&mut img, &f.projection, b, GT_COLOR));
            det_boxes.iter().for_each(|(b, _)| _ = draw_box(&mut img, &f.projection, b, DET_COLOR));
            save_png(&img, &dir.join(format!("{}.png", f.id)))?;
            write(&dir.join(format!("{}_bev.svg", f.id)), bev_svg(&gts, &det_boxes, hw, depth))?;
            n += 1;
        }
    } else {
        let model = ckpt.map(load_model).transpose()?;
        let codec = cfg.scene.codec();
        for i in 0..cfg.render_scenes {
            let scene = generate_scene(&cfg.scene, scene_seed(cfg.seed, i as u64))?;
            let mut img = image_from_hwc(scene.width, scene.height, &scene.image);
            let det_boxes: Vec<(Box3D, f64)> = match &model {
                Some(m) => detect(m, &scene, &codec)?.iter().map(|d| (d.box3d, d.score)).collect(),
                None => Vec::new(),
            };
            scene.objects.iter().for_each(|b| _ = draw_box(&mut img, &scene.projection, b, GT_COLOR));
            det_boxes.iter().for_each(|(b, _)| _ = draw_box(&mut img, &scene.projection, b, DET_COLOR));
            let id = format!("scene_{i:03}");
            save_png(&img, &dir.join(format!("{id}.png")))?;
            write(&dir.join(format!("{id}_bev.svg")), bev_svg(&scene.objects, &det_boxes, hw, depth))?;
            n += 1;
        }
    }
    println!("rendered {n} frames into {}", dir.display());
    Ok(())
}
