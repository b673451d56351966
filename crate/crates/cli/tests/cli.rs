//! End-to-end tests of the `terrain` binary: argument handling, exit codes,
//! artifact layout, and byte-level determinism.

use std::path::Path;
use std::process::{Command, Output};

use terrain_core::cloud::{
    filter_by_label, read_native_cloud, voxel_centroids, write_native_cloud, PointCloud,
};
use terrain_core::dataset::{
    read_sample, synth_scene, write_masks, BevMaskSet, BevProjection, SceneKind, SceneParams,
    ROAD_LABEL,
};
use terrain_core::model::{init_state, load_checkpoint, ModelConfig};
use terrain_core::objective::MetricReport;

fn terrain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_terrain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "expected exit {code}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// `eval --report P` writes `P.json` and `P.txt`.
fn suffixed(prefix: &Path, suffix: &str) -> std::path::PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    std::path::PathBuf::from(s)
}

/// Config selecting the small architecture, for fast training tests.
fn write_tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    std::fs::write(
        &path,
        "[model]\nn_fps = 16\nn_proxy = 4\nk_edge = 4\nd_model = 8\nn_heads = 2\nn_layers = 2\nq = 2\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

/// A native scan/ground-truth pair derived from a synthetic scene.
fn write_pair(dir: &Path, id: &str, seed: u64) {
    let params = SceneParams::for_kind(SceneKind::LCorner);
    let (scan, grid) = synth_scene(SceneKind::LCorner, &params, seed).unwrap();
    let road = [ROAD_LABEL].into_iter().collect();
    let gt = voxel_centroids(&grid, Some(&road)).unwrap();
    write_native_cloud(&dir.join(format!("{id}.scan.tepc")), &scan).unwrap();
    write_native_cloud(&dir.join(format!("{id}.gt.tepc")), &gt).unwrap();
}

#[test]
fn help_lists_every_subcommand() {
    let out = terrain(&["--help"]);
    assert_exit(&out, 0);
    let text = stdout(&out);
    for name in ["gen-data", "synth", "train", "predict", "eval", "gradcheck"] {
        assert!(text.contains(name), "--help does not mention {name}:\n{text}");
    }
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = terrain(&["synth", "--kind", "l-corner", "--output", "/tmp/x", "--bogus"]);
    assert_exit(&out, 1);
}

#[test]
fn invalid_scene_kind_is_usage_error() {
    let out = terrain(&["synth", "--kind", "hexagon", "--output", "/tmp/x"]);
    assert_exit(&out, 1);
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[model]\nwidth = 3\n").unwrap();
    let out = terrain(&[
        "--config",
        cfg.to_str().unwrap(),
        "synth",
        "--kind",
        "l-corner",
        "--output",
        dir.path().join("s").to_str().unwrap(),
    ]);
    assert_exit(&out, 1);
    assert!(stderr(&out).contains("width"), "{}", stderr(&out));
}

#[test]
fn synth_writes_complete_sample_directories() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples");
    let out = terrain(&[
        "synth",
        "--kind",
        "l-corner",
        "--count",
        "2",
        "--seed",
        "9",
        "--output",
        samples.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    for id in ["l-corner-0000", "l-corner-0001"] {
        let sample_dir = samples.join(id);
        for file in ["manifest.json", "input.tepc", "target.tepc", "masks.json"] {
            assert!(sample_dir.join(file).is_file(), "{id}/{file} missing");
        }
        let sample = read_sample(&sample_dir).unwrap();
        assert!(!sample.input.is_empty());
        assert!(!sample.target.is_empty());
        assert_eq!(sample.source_id, id);
    }
    // Consecutive scenes use consecutive seeds.
    assert_eq!(read_sample(&samples.join("l-corner-0000")).unwrap().seed, 9);
    assert_eq!(read_sample(&samples.join("l-corner-0001")).unwrap().seed, 10);
}

#[test]
fn synth_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = terrain(&[
            "synth",
            "--kind",
            "t-intersection",
            "--count",
            "1",
            "--seed",
            "3",
            "--output",
            out_dir.to_str().unwrap(),
        ]);
        assert_exit(&out, 0);
    }
    for file in ["manifest.json", "input.tepc", "target.tepc", "masks.json"] {
        let pa = a.join("t-intersection-0000").join(file);
        let pb = b.join("t-intersection-0000").join(file);
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap(), "{file} differs");
    }
}

#[test]
fn synth_count_zero_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples");
    let out = terrain(&[
        "synth",
        "--kind",
        "straight",
        "--count",
        "0",
        "--output",
        samples.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert!(!samples.exists());
}

#[test]
fn gen_data_native_pairs_with_one_rejection() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw");
    std::fs::create_dir_all(&input).unwrap();
    write_pair(&input, "scene-a", 1);
    write_pair(&input, "scene-b", 2);
    // A pair whose ground truth is the scan's own road points leaves no
    // target after buffering and must be skipped, not fatal.
    let params = SceneParams::for_kind(SceneKind::LCorner);
    let (scan, _) = synth_scene(SceneKind::LCorner, &params, 3).unwrap();
    let road = [ROAD_LABEL].into_iter().collect();
    let own_road = filter_by_label(&scan, &road).unwrap();
    write_native_cloud(&input.join("scene-c.scan.tepc"), &scan).unwrap();
    write_native_cloud(&input.join("scene-c.gt.tepc"), &own_road).unwrap();

    let output = dir.path().join("samples");
    let out = terrain(&[
        "gen-data",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert!(stdout(&out).contains("accepted 2, rejected 1"), "{}", stdout(&out));
    assert!(output.join("scene-a").join("manifest.json").is_file());
    assert!(output.join("scene-b").join("manifest.json").is_file());
    assert!(!output.join("scene-c").exists());
}

#[test]
fn gen_data_d_y_flag_reaches_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw");
    std::fs::create_dir_all(&input).unwrap();
    write_pair(&input, "scene", 4);
    let output = dir.path().join("samples");
    let out = terrain(&[
        "gen-data",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
        "--d-y",
        "1.5",
    ]);
    assert_exit(&out, 0);
    let sample = read_sample(&output.join("scene")).unwrap();
    assert_eq!(sample.d_y, 1.5);
    let manifest = std::fs::read_to_string(output.join("scene").join("manifest.json")).unwrap();
    assert!(manifest.contains("1.5"), "{manifest}");
}

#[test]
fn gen_data_uses_precomputed_masks_when_present() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw");
    std::fs::create_dir_all(&input).unwrap();
    write_pair(&input, "scene", 5);
    let masks = BevMaskSet::new(
        BevProjection { origin_xy: [-2.0, -14.0], meters_per_pixel: 0.1, width: 300, height: 300 },
        vec![vec![[0.0, 0.0], [300.0, 0.0], [300.0, 300.0], [0.0, 300.0]]],
    )
    .unwrap();
    write_masks(&input.join("scene.masks.json"), &masks).unwrap();

    let output = dir.path().join("samples");
    let out = terrain(&[
        "gen-data",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert_eq!(read_sample(&output.join("scene")).unwrap().masks, masks);
}

#[test]
fn gen_data_empty_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw");
    std::fs::create_dir_all(&input).unwrap();
    let out = terrain(&[
        "gen-data",
        "--input",
        input.to_str().unwrap(),
        "--output",
        dir.path().join("samples").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(stdout(&out).contains("accepted 0"), "{}", stdout(&out));
}

#[test]
fn gen_data_reads_scan_label_voxel_triples() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw");
    for sub in ["velodyne", "labels", "voxels"] {
        std::fs::create_dir_all(input.join(sub)).unwrap();
    }

    // An 8 x 8 x 1 grid of 0.5 m voxels, centers at z = 0, fully occupied
    // road. The scan's road points cover only the strip x < 1.2, so the
    // far centers survive the buffer.
    let (nx, ny, nz) = (8usize, 8usize, 1usize);
    let mut scan_bytes = Vec::new();
    let mut label_bytes = Vec::new();
    let mut push_point = |x: f32, y: f32, z: f32, label: u32| {
        for v in [x, y, z, 0.5f32] {
            scan_bytes.extend_from_slice(&v.to_le_bytes());
        }
        label_bytes.extend_from_slice(&label.to_le_bytes());
    };
    for i in 0..4 {
        for j in 0..8 {
            push_point(0.15 + 0.3 * i as f32, -1.75 + 0.5 * j as f32, 0.0, ROAD_LABEL);
        }
    }
    push_point(1.0, 1.9, 0.2, 50); // non-road point, must be filtered out
    std::fs::write(input.join("velodyne/000000.bin"), &scan_bytes).unwrap();
    std::fs::write(input.join("labels/000000.label"), &label_bytes).unwrap();

    let n = nx * ny * nz;
    let occupancy = vec![0xFFu8; n.div_ceil(8)];
    let mut voxel_labels = Vec::new();
    for _ in 0..n {
        voxel_labels.extend_from_slice(&(ROAD_LABEL as u16).to_le_bytes());
    }
    std::fs::write(input.join("voxels/000000.bin"), &occupancy).unwrap();
    std::fs::write(input.join("voxels/000000.label"), &voxel_labels).unwrap();

    let cfg = dir.path().join("kitti.toml");
    std::fs::write(
        &cfg,
        "[dataset]\nd_y = 0.6\nvoxel_dims = [8, 8, 1]\nvoxel_origin = [0.0, -2.0, -0.25]\nvoxel_resolution = 0.5\n",
    )
    .unwrap();

    let output = dir.path().join("samples");
    let out = terrain(&[
        "--config",
        cfg.to_str().unwrap(),
        "gen-data",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert!(stdout(&out).contains("accepted 1"), "{}", stdout(&out));

    let sample = read_sample(&output.join("000000")).unwrap();
    assert_eq!(sample.input.len(), 32, "road points of the scan");
    assert!(!sample.target.is_empty());
    // Every target is a voxel center at least d_y from every input point.
    for t in sample.target.points() {
        assert_eq!((t.x / 0.25).round() as i32 % 2, 1, "x {} not a center", t.x);
        let min = sample
            .input
            .points()
            .iter()
            .map(|p| {
                let (dx, dy, dz) = (p.x - t.x, p.y - t.y, p.z - t.z);
                ((dx * dx + dy * dy + dz * dz) as f64).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(min >= 0.6, "target center {min} m from the scan");
    }
}

#[test]
fn train_writes_checkpoint_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples");
    assert_exit(
        &terrain(&["synth", "--kind", "l-corner", "--output", samples.to_str().unwrap()]),
        0,
    );
    let cfg = write_tiny_config(dir.path());
    let ckpt = dir.path().join("model.temd");
    let out = terrain(&[
        "--config",
        &cfg,
        "train",
        "--data",
        samples.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--steps",
        "5",
    ]);
    assert_exit(&out, 0);

    let state = load_checkpoint(&ckpt).unwrap();
    assert_eq!(state.step, 5);
    assert_eq!(state.config, ModelConfig::tiny());

    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.trace.json")).unwrap())
            .unwrap();
    assert_eq!(trace["steps"], 5);
    assert_eq!(trace["diverged_at"], serde_json::Value::Null);
    assert_eq!(trace["loss"].as_array().unwrap().len(), 5);
}

#[test]
fn train_zero_steps_equals_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples");
    assert_exit(
        &terrain(&["synth", "--kind", "l-corner", "--output", samples.to_str().unwrap()]),
        0,
    );
    let cfg = write_tiny_config(dir.path());
    let ckpt = dir.path().join("init.temd");
    let out = terrain(&[
        "--config",
        &cfg,
        "train",
        "--data",
        samples.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--steps",
        "0",
        "--seed",
        "11",
    ]);
    assert_exit(&out, 0);
    let state = load_checkpoint(&ckpt).unwrap();
    let fresh = init_state(&ModelConfig::tiny(), 11).unwrap();
    assert_eq!(state, fresh);
}

#[test]
fn train_resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples");
    assert_exit(
        &terrain(&["synth", "--kind", "l-corner", "--output", samples.to_str().unwrap()]),
        0,
    );
    let cfg = write_tiny_config(dir.path());
    let data = samples.to_str().unwrap().to_string();

    let first = dir.path().join("first.temd");
    let resumed = dir.path().join("resumed.temd");
    let straight = dir.path().join("straight.temd");
    let run = |args: &[&str]| assert_exit(&terrain(args), 0);
    run(&["--config", &cfg, "train", "--data", &data, "--out", first.to_str().unwrap(), "--steps", "3"]);
    run(&[
        "--config",
        &cfg,
        "train",
        "--data",
        &data,
        "--out",
        resumed.to_str().unwrap(),
        "--resume",
        first.to_str().unwrap(),
        "--steps",
        "4",
    ]);
    run(&["--config", &cfg, "train", "--data", &data, "--out", straight.to_str().unwrap(), "--steps", "7"]);

    assert_eq!(load_checkpoint(&resumed).unwrap().step, 7);
    assert_eq!(
        std::fs::read(&resumed).unwrap(),
        std::fs::read(&straight).unwrap(),
        "resumed checkpoint differs from the uninterrupted run"
    );
}

#[test]
fn train_divergence_exits_nonzero_and_keeps_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples");
    assert_exit(
        &terrain(&["synth", "--kind", "l-corner", "--output", samples.to_str().unwrap()]),
        0,
    );
    let cfg = write_tiny_config(dir.path());
    let ckpt = dir.path().join("diverged.temd");
    let out = terrain(&[
        "--config",
        &cfg,
        "train",
        "--data",
        samples.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--steps",
        "50",
        "--lr",
        "1e150",
    ]);
    assert_exit(&out, 3);
    assert!(stderr(&out).contains("diverged"), "{}", stderr(&out));
    // The retained checkpoint still loads and holds finite values.
    load_checkpoint(&ckpt).unwrap();
    let trace: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("diverged.trace.json")).unwrap(),
    )
    .unwrap();
    assert!(trace["diverged_at"].is_u64(), "{trace}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples");
    assert_exit(
        &terrain(&["synth", "--kind", "l-corner", "--output", samples.to_str().unwrap()]),
        0,
    );
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        "[model]\nn_fps = 16\nn_proxy = 4\nk_edge = 4\nd_model = 8\nn_heads = 2\nn_layers = 2\nq = 2\n\n[train]\nsteps = 3\n",
    )
    .unwrap();
    let ckpt = dir.path().join("model.temd");
    let out = terrain(&[
        "--config",
        cfg.to_str().unwrap(),
        "train",
        "--data",
        samples.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--steps",
        "5",
    ]);
    assert_exit(&out, 0);
    assert_eq!(load_checkpoint(&ckpt).unwrap().step, 5, "flag must beat the config file");
}

#[test]
fn predict_writes_expected_point_counts() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples");
    assert_exit(
        &terrain(&["synth", "--kind", "l-corner", "--output", samples.to_str().unwrap()]),
        0,
    );
    let cfg = write_tiny_config(dir.path());
    let ckpt = dir.path().join("model.temd");
    assert_exit(
        &terrain(&[
            "--config",
            &cfg,
            "train",
            "--data",
            samples.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
            "--steps",
            "2",
        ]),
        0,
    );
    let sample_dir = samples.join("l-corner-0000");
    let pred = dir.path().join("pred");
    let out = terrain(&[
        "predict",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        sample_dir.to_str().unwrap(),
        "--out",
        pred.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    let sample = read_sample(&sample_dir).unwrap();
    let m = ModelConfig::tiny().m();
    let predictions = read_native_cloud(&pred.join("predictions.tepc")).unwrap();
    let extended = read_native_cloud(&pred.join("extended.tepc")).unwrap();
    assert_eq!(predictions.len(), m);
    assert_eq!(extended.len(), sample.input.len() + m);
    // The extended cloud is the input followed by the predictions.
    assert_eq!(&extended.points()[..sample.input.len()], sample.input.points());
    assert_eq!(&extended.points()[sample.input.len()..], predictions.points());

    let ply = std::fs::read_to_string(pred.join("predictions.ply")).unwrap();
    assert!(ply.contains(&format!("element vertex {m}")), "{ply}");
    assert!(ply.contains("0 255 0"), "predictions must be green");
    // The extended rendering also overlays the sample's ground truth.
    let ply = std::fs::read_to_string(pred.join("extended.ply")).unwrap();
    let total = sample.input.len() + m + sample.target.len();
    assert!(ply.contains(&format!("element vertex {total}")), "{ply}");
    assert!(ply.contains("0 0 255"), "input must be blue");
    assert!(ply.contains("0 128 128"), "ground truth must be teal");
}

#[test]
fn predict_rejects_malformed_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("broken.temd");
    std::fs::write(&ckpt, b"TEMDgarbage").unwrap();
    let cloud = PointCloud::new(vec![terrain_core::cloud::Point3::new(0.0, 0.0, 0.0)]).unwrap();
    let input = dir.path().join("input.tepc");
    write_native_cloud(&input, &cloud).unwrap();
    let out = terrain(&[
        "predict",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("pred").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
}

#[test]
fn eval_scores_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples");
    assert_exit(
        &terrain(&[
            "synth",
            "--kind",
            "l-corner",
            "--count",
            "2",
            "--output",
            samples.to_str().unwrap(),
        ]),
        0,
    );
    // Present the target clouds themselves as predictions.
    let pred = dir.path().join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    for id in ["l-corner-0000", "l-corner-0001"] {
        std::fs::copy(samples.join(id).join("target.tepc"), pred.join(format!("{id}.tepc")))
            .unwrap();
    }
    let report = dir.path().join("out").join("report");
    let out = terrain(&[
        "eval",
        "--samples",
        samples.to_str().unwrap(),
        "--predictions",
        pred.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    let parsed =
        MetricReport::from_json(&std::fs::read_to_string(suffixed(&report, ".json")).unwrap())
            .unwrap();
    assert_eq!(parsed.scenes.len(), 2);
    let ids: Vec<&str> = parsed.scenes.iter().map(|s| s.scene_id.as_str()).collect();
    assert_eq!(ids, ["l-corner-0000", "l-corner-0001"], "rows ordered by scene id");
    for scene in &parsed.scenes {
        assert_eq!(scene.acc, 100.0);
        assert_eq!(scene.cd_pt, 0.0);
        assert_eq!(scene.histogram.percentages[0], 100.0);
    }
    let text = std::fs::read_to_string(suffixed(&report, ".txt")).unwrap();
    assert!(text.contains("acc") && text.contains("cd_pt"), "{text}");
    assert!(text.contains("100.00"), "{text}");
}

#[test]
fn eval_reports_missing_scenes_and_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples");
    assert_exit(
        &terrain(&[
            "synth",
            "--kind",
            "l-corner",
            "--count",
            "2",
            "--output",
            samples.to_str().unwrap(),
        ]),
        0,
    );
    let pred = dir.path().join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    // Only the first scene has a prediction; the second also loses its
    // ground truth to simulate a damaged sample.
    std::fs::copy(
        samples.join("l-corner-0000").join("target.tepc"),
        pred.join("l-corner-0000.tepc"),
    )
    .unwrap();
    std::fs::remove_file(samples.join("l-corner-0001").join("target.tepc")).unwrap();

    let report = dir.path().join("report");
    let out = terrain(&[
        "eval",
        "--samples",
        samples.to_str().unwrap(),
        "--predictions",
        pred.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_exit(&out, 2);

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(suffixed(&report, ".json")).unwrap())
            .unwrap();
    assert_eq!(json["scenes"].as_array().unwrap().len(), 1);
    let errors = json["errors"].as_array().unwrap();
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0]["scene_id"], "l-corner-0001");

    let text = std::fs::read_to_string(suffixed(&report, ".txt")).unwrap();
    assert!(text.contains("l-corner-0001: error:"), "{text}");
}

#[test]
fn gradcheck_passes_and_corrupt_hook_fails() {
    let out = terrain(&["gradcheck", "--draws", "1", "--seed", "7"]);
    assert_exit(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("gradient check passed"), "{text}");
    assert!(text.contains("head.w"), "per-tensor report expected:\n{text}");

    let out = terrain(&["gradcheck", "--draws", "1", "--seed", "7", "--corrupt", "edge1.w"]);
    assert_exit(&out, 3);
    assert!(stderr(&out).contains("edge1.w"), "{}", stderr(&out));
}
