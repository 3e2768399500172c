//! End-to-end behaviour of the binary and the command functions.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use realdepth_cli::{cmd_gradcheck, cmd_gradcheck_with, cmd_optimize, CliError, ExperimentConfig};
use realdepth_core::io::{load_pfm, save_pfm};
use realdepth_core::{Raster, ScalarGrid, SceneDescriptor};

const FILES: [&str; 6] = ["view1.ppm", "view2.ppm", "gt1.pfm", "gt2.pfm", "sparse.txt", "cameras.txt"];

fn bundled(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_realdepth")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Config text pointing at the bundled 16x16 scene.
fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "scene = \"{}\"\noutput_dir = \"out\"\n{extra}",
        bundled("scenes/gradcheck16.toml").display()
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

/// Copy of a bundled config whose scene path is absolute and whose outputs
/// land in `dir/out`.
fn relocated_config(dir: &Path, name: &str) -> PathBuf {
    let text = fs::read_to_string(bundled(name)).unwrap();
    let scenes = bundled("scenes");
    let text = text
        .replace("\"../scenes/", &format!("\"{}/", scenes.display()))
        .lines()
        .map(|l| if l.starts_with("output_dir") { "output_dir = \"out\"" } else { l })
        .collect::<Vec<_>>()
        .join("\n");
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn synth_writes_six_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let descriptor = bundled("scenes/reference64.toml");
    for out in [&a, &b] {
        let res = run(&["synth", path_str(&descriptor), path_str(out)]);
        assert!(res.status.success(), "{}", stderr(&res));
    }
    for name in FILES {
        let (x, y) = (fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
        assert!(!x.is_empty(), "{name} empty");
        assert_eq!(x, y, "{name} differs between runs");
    }
    // Another seed only moves the sparse samples.
    let c = dir.path().join("c");
    assert!(run(&["synth", path_str(&descriptor), path_str(&c), "--seed", "3"]).status.success());
    assert_eq!(fs::read(a.join("view1.ppm")).unwrap(), fs::read(c.join("view1.ppm")).unwrap());
    assert_ne!(fs::read(a.join("sparse.txt")).unwrap(), fs::read(c.join("sparse.txt")).unwrap());
}

#[test]
fn non_unit_normal_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut desc = SceneDescriptor::fronto_parallel(16, 3.0, 0.2);
    desc.plane.normal = [0.0, 0.0, 2.0];
    let path = dir.path().join("bad.toml");
    fs::write(&path, desc.to_toml()).unwrap();
    let res = run(&["synth", path_str(&path), path_str(&dir.path().join("out"))]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("normal"), "{}", stderr(&res));
}

#[test]
fn malformed_descriptor_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "width = 16\nheight = 16\nseed = 1\nplane = 3\n").unwrap();
    let res = run(&["synth", path_str(&path), path_str(&dir.path().join("out"))]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("line 4"), "{}", stderr(&res));
}

#[test]
fn fronto_parallel_ground_truth_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&["synth", path_str(&bundled("scenes/fronto32.toml")), path_str(dir.path())]);
    assert!(res.status.success(), "{}", stderr(&res));
    for name in ["gt1.pfm", "gt2.pfm"] {
        let gt = load_pfm(dir.path().join(name)).unwrap();
        assert_eq!(gt.dims(), (32, 32));
        assert!(gt.as_slice().iter().all(|&d| d == 3.0), "{name}");
    }
}

#[test]
fn zero_weights_keep_depth_at_the_median() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::load(&bundled("configs/zero_weights.toml")).unwrap();
    let config = ExperimentConfig { output_dir: dir.path().to_path_buf(), ..config };
    let summary = cmd_optimize(&config).unwrap();
    for k in 0..2 {
        let depth = load_pfm(dir.path().join(format!("depth{}.pfm", k + 1))).unwrap();
        let mu = summary.medians[k].value() as f32 as f64;
        assert!(depth.as_slice().iter().all(|&d| d == mu));
        let rel = load_pfm(dir.path().join(format!("rel{}.pfm", k + 1))).unwrap();
        assert!(rel.as_slice().iter().all(|&r| r == 0.0));
    }
    let rows = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 50 / 10 + 1);
}

#[test]
fn optimize_from_synth_directory_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    assert!(run(&["synth", path_str(&bundled("scenes/gradcheck16.toml")), path_str(&scene)]).status.success());
    let config = dir.path().join("config.toml");
    fs::write(&config, "scene = \"scene\"\noutput_dir = \"out\"\nmax_iterations = 40\nrecord_every = 10\n").unwrap();
    let res = run(&["optimize", path_str(&config), "--scales", "3"]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(stdout(&res).contains("Abs Rel"));
    let out = dir.path().join("out");
    for name in ["trajectory.csv", "depth1.pfm", "depth2.pfm", "rel1.pfm", "rel2.pfm", "metrics.csv"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 40 / 10 + 1);
    assert!(csv.lines().next().unwrap().ends_with("smooth_s4,total"));
}

#[test]
fn too_many_scales_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "max_iterations = 5\n");
    let res = run(&["optimize", path_str(&config), "--scales", "4"]);
    assert_eq!(res.status.code(), Some(2), "{}", stderr(&res));
    assert!(stderr(&res).contains("3x3"));
}

#[test]
fn divergence_exits_with_numerical_code_and_keeps_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "max_iterations = 10\nrecord_every = 1\ninitial_lr = 1000.0\n[weights]\nnum_scales = 3\n");
    let res = run(&["optimize", path_str(&config)]);
    assert_eq!(res.status.code(), Some(3), "{}", stderr(&res));
    assert!(stderr(&res).contains("diverged"));
    let csv = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    assert!(csv.lines().count() >= 2);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "[weights]\nlamda_ph = 0.2\n");
    let res = run(&["optimize", path_str(&config)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("lamda_ph") && stderr(&res).contains("line 4"), "{}", stderr(&res));
}

#[test]
fn bundled_gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::load(&bundled("configs/gradcheck.toml")).unwrap();
    let config = ExperimentConfig { output_dir: dir.path().to_path_buf(), ..config };
    let report = cmd_gradcheck(&config).unwrap();
    assert_eq!(report.entries.len(), 512);
    assert!(report.max_rel_error() < 1e-5);
    let text = fs::read_to_string(dir.path().join("gradcheck.txt")).unwrap();
    assert!(text.contains("result            pass"));
}

#[test]
fn zero_weight_gradcheck_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&["gradcheck", path_str(&relocated_config(dir.path(), "configs/zero_weights.toml"))]);
    let config = ExperimentConfig::load(&bundled("configs/zero_weights.toml")).unwrap();
    let config = ExperimentConfig { output_dir: dir.path().to_path_buf(), ..config };
    let report = cmd_gradcheck(&config).unwrap();
    assert_eq!(report.max_rel_error(), 0.0);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(stdout(&res).contains("max rel error     0.000e0"));
}

#[test]
fn corrupted_gradient_fails_with_named_entries() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::load(&bundled("configs/gradcheck.toml")).unwrap();
    let config = ExperimentConfig { output_dir: dir.path().to_path_buf(), ..config };
    let corrupt = |g: &mut [Vec<f64>; 2]| {
        g[1][3 * 16 + 5] += 1.0;
    };
    let err = cmd_gradcheck_with(&config, Some(&corrupt)).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let CliError::GradcheckFailed { report, threshold } = &err else { panic!("{err}") };
    let bad = report.offending(*threshold);
    assert_eq!(bad.len(), 1);
    assert_eq!((bad[0].view, bad[0].row, bad[0].col), (1, 3, 5));
    // Reported 1-based by view.
    assert!(err.to_string().contains("\n2,3,5,"), "{err}");
    let text = fs::read_to_string(dir.path().join("gradcheck.txt")).unwrap();
    assert!(text.contains("FAIL") && text.contains("2,3,5,"));
}

#[test]
fn threshold_flag_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let config = relocated_config(dir.path(), "configs/gradcheck.toml");
    let res = run(&["gradcheck", path_str(&config)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let res = run(&["gradcheck", path_str(&config), "--threshold", "1e-300"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(stderr(&res).contains("gradient check failed"));
}

fn write_depth(dir: &Path, name: &str, h: usize, w: usize, values: Vec<f64>) -> PathBuf {
    let path = dir.join(name);
    save_pfm(&ScalarGrid::new(h, w, values).unwrap(), &path).unwrap();
    path
}

/// Parses the CSV row printed after the header.
fn printed_metrics(out: &Output) -> Vec<f64> {
    let text = stdout(out);
    let row = text.lines().skip_while(|l| !l.starts_with("abs_rel,")).nth(1).expect("csv row");
    row.split(',').map(|v| v.parse().unwrap()).collect()
}

#[test]
fn eval_cases() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_depth(dir.path(), "gt.pfm", 2, 3, vec![1.0, 2.5, 3.0, 4.0, 0.5, 8.0]);
    let pred = write_depth(dir.path(), "pred.pfm", 2, 3, vec![2.0, 5.0, 6.0, 8.0, 1.0, 16.0]);
    let (gt_s, pred_s) = (path_str(&gt), path_str(&pred));

    let same = run(&["eval", gt_s, gt_s]);
    assert!(same.status.success());
    assert_eq!(&printed_metrics(&same)[..4], &[0.0; 4]);
    assert!(stdout(&same).contains("RMS(log10)"));

    assert_eq!(printed_metrics(&run(&["eval", pred_s, gt_s]))[0], 0.0);
    assert_eq!(printed_metrics(&run(&["eval", pred_s, gt_s, "--no-align"]))[0], 1.0);

    let one_gt = write_depth(dir.path(), "g1.pfm", 1, 1, vec![1.0]);
    let one_pred = write_depth(dir.path(), "p1.pfm", 1, 1, vec![2.0]);
    let m = printed_metrics(&run(&["eval", path_str(&one_pred), path_str(&one_gt), "--no-align"]));
    assert_eq!(&m[..4], &[1.0, 1.0, 1.0, 2f64.log10()]);

    let wide = write_depth(dir.path(), "wide.pfm", 3, 2, vec![1.0; 6]);
    let res = run(&["eval", path_str(&wide), gt_s]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("3x2") && stderr(&res).contains("2x3"), "{}", stderr(&res));
}
