use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_phaseflow"));
    cmd.env_remove("PHASEFLOW_THREADS");
    cmd
}

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg(config).arg("--out").arg(out).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn toml_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    files
}

#[test]
fn documented_examples_pass_parse_check() {
    let work = tempfile::tempdir().unwrap();
    let files = toml_files(&repo_path("docs/examples"));
    assert!(files.len() >= 5);
    for f in files {
        let o = run(&["parse-check"], &f, &work.path().join("pc"));
        assert!(o.status.success(), "{}: {}", f.display(), stderr(&o));
    }
}

#[test]
fn broken_configs_fail_with_located_messages() {
    let work = tempfile::tempdir().unwrap();
    let files = toml_files(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/configs"));
    assert!(files.len() >= 15);
    for f in files {
        let text = fs::read_to_string(&f).unwrap();
        let expect = text.lines().next().and_then(|l| l.strip_prefix("# expect: ")).expect("expect header");
        let (line, needle) = expect.split_once(' ').unwrap();
        let out = work.path().join("bad");
        let o = run(&["parse-check"], &f, &out);
        let err = stderr(&o);
        assert_eq!(o.status.code(), Some(2), "{}: {err}", f.display());
        let located = format!("{}:{line}:", f.display());
        assert!(err.contains(&located), "{}: expected {located} in {err}", f.display());
        assert!(err.contains(needle), "{}: expected '{needle}' in {err}", f.display());
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(!out.exists());
    }
}

#[test]
fn parse_check_lists_the_derivative_closure() {
    let work = tempfile::tempdir().unwrap();
    let config = write_config(work.path(), "c.toml", "[symbols]\na = \"xi^2/2\"\n");
    let out = work.path().join("out");
    let o = run(&["parse-check"], &config, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config"]["diagnostics"]["order_cap"], 8);
    let derivs = m["symbols"]["a"]["derivatives"].as_array().unwrap();
    // all (alpha, beta) with alpha + beta <= 8
    assert_eq!(derivs.len(), 45);
    let find = |alpha: u64, beta: u64| {
        derivs.iter().find(|d| d["alpha"][0] == alpha && d["beta"][0] == beta).unwrap()["expr"].as_str().unwrap().to_string()
    };
    assert_eq!(find(0, 2), "1");
    assert_eq!(find(0, 3), "0");
    assert_eq!(find(8, 0), "0");
    assert!(m["artifacts"].as_array().unwrap().is_empty());
    assert!(m["sign_convention"].as_str().unwrap().contains("-i"));
}

#[test]
fn oscillator_trajectory_ends_at_the_rotated_seed() {
    let work = tempfile::tempdir().unwrap();
    let out = work.path().join("flow");
    let o = run(&["flow"], &repo_path("docs/examples/oscillator_flow.toml"), &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("flow/trajectory_000.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t,x,xi"));
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!((last[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    assert!(last[1].abs() < 1e-8 && (last[2] + 1.0).abs() < 1e-8, "{last:?}");
    let summary = read_json(&out.join("flow/bilipschitz.json"));
    assert_eq!(summary["gronwall_violations"], 0);
}

#[test]
fn free_particle_kernel_bundle() {
    let work = tempfile::tempdir().unwrap();
    let out = work.path().join("kernel");
    let o = run(&["kernel"], &repo_path("docs/examples/free_particle_kernel.toml"), &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = read_json(&out.join("kernel/fit_00_00.json"));
    assert!(fit["N_hat"].as_f64().unwrap() >= 4.0, "{fit}");
    assert!(fit["residual"].as_f64().unwrap() < 0.5);
    assert_eq!(fit["peak_within_radius"], true);
    let svg = fs::read_to_string(out.join("kernel/slice_00_00.svg")).unwrap();
    let marker = svg.lines().find(|l| l.contains("id=\"flow-image\"")).unwrap();
    let attr = |name: &str| -> f64 {
        let start = marker.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
        marker[start..].split('"').next().unwrap().parse().unwrap()
    };
    assert!((attr("data-x") - 2.0).abs() < 1e-10 && (attr("data-xi") - 2.0).abs() < 1e-10);

    let slice = fs::read_to_string(out.join("kernel/slice_00_00.csv")).unwrap();
    assert_eq!(slice.lines().next(), Some("x,xi,re,im,dist_to_flow_image"));
    assert_eq!(slice.lines().count(), 256 * 256 + 1);

    let manifest = read_json(&out.join("manifest.json"));
    for a in manifest["artifacts"].as_array().unwrap() {
        let bytes = fs::read(out.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["bytes"], bytes.len() as u64);
        assert_eq!(a["sha256"].as_str().unwrap(), phaseflow::bundle::sha256_hex(&bytes));
    }
}

#[test]
fn numerical_failure_replaces_the_bundle_with_a_manifest() {
    let work = tempfile::tempdir().unwrap();
    let out = work.path().join("bundle");
    let good = write_config(work.path(), "good.toml", "[symbols]\na = \"xi^2/2\"\n[flow]\nseeds = [[1.0, 0.0]]\n");
    assert!(run(&["flow"], &good, &out).status.success());
    assert!(out.join("flow/trajectory_000.csv").exists());

    let bad = write_config(work.path(), "bad.toml", "[symbols]\na = \"xi^2/2 + sqrt(x)\"\n[flow]\nseeds = [[-1.0, 0.0]]\n");
    let o = run(&["flow"], &bad, &out);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("flow failed"));
    let mut names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "run.log"]);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["status"], "failed");
    assert_eq!(m["error"]["stage"], "flow");
    assert_eq!(m["error"]["kind"], "numerical");
    assert!(m["error"]["message"].as_str().unwrap().contains("seed 0"));
    let staging: Vec<_> = fs::read_dir(work.path()).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().contains("staging")).collect();
    assert!(staging.is_empty());
}

#[test]
fn flow_image_leaving_the_window_is_a_numerical_failure() {
    let work = tempfile::tempdir().unwrap();
    let config = write_config(
        work.path(),
        "k.toml",
        "[symbols]\na = \"xi^2/2\"\n[kernel]\nsources = [[5.0, 4.0]]\ntimes = [1.0]\n",
    );
    let o = run(&["kernel"], &config, &work.path().join("out"));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn missing_stage_section_is_a_validation_error() {
    let work = tempfile::tempdir().unwrap();
    let config = write_config(work.path(), "c.toml", "[symbols]\na = \"xi^2/2\"\n");
    for cmd in ["flow", "kappa", "transform", "propagate", "kernel"] {
        let o = run(&[cmd], &config, &work.path().join("out"));
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        assert!(stderr(&o).contains("c.toml"), "{}", stderr(&o));
    }
    let o = run(&["flow"], &work.path().join("absent.toml"), &work.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn foreign_output_directory_is_left_alone() {
    let work = tempfile::tempdir().unwrap();
    let target = work.path().join("notes");
    fs::create_dir(&target).unwrap();
    fs::write(target.join("keep.txt"), "x").unwrap();
    let config = write_config(work.path(), "c.toml", "[symbols]\na = \"xi^2/2\"\n");
    let o = run(&["parse-check"], &config, &target);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(fs::read_to_string(target.join("keep.txt")).unwrap(), "x");
}

#[test]
fn thread_count_comes_from_the_environment() {
    let work = tempfile::tempdir().unwrap();
    let config = write_config(work.path(), "c.toml", "[symbols]\na = \"xi^2/2\"\n[flow]\nseeds = [[0.0, 1.0], [1.0, 0.0]]\n");
    let mut cmd = bin();
    cmd.env("PHASEFLOW_THREADS", "3").arg("flow").arg(&config).arg("--out").arg(work.path().join("out"));
    let o = cmd.output().unwrap();
    assert!(o.status.success());
    let log = fs::read_to_string(work.path().join("out/run.log")).unwrap();
    assert!(log.contains("threads: 3"), "{log}");
    let o = bin().env("PHASEFLOW_THREADS", "0").arg("flow").arg(&config).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn formats_filter_the_artifacts() {
    let work = tempfile::tempdir().unwrap();
    let config = write_config(
        work.path(),
        "c.toml",
        "[symbols]\na = \"xi^2/2\"\n[grid]\nhalf_width = 8.0\nnx = 64\nxi_half_width = 8.0\nnxi = 64\n\
         [transform]\nsignal = \"exp(-x^2/2)\"\n[output]\nformats = [\"json\"]\n",
    );
    let out = work.path().join("out");
    let o = run(&["transform"], &config, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = read_json(&out.join("manifest.json"));
    let paths: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap()).collect();
    assert_eq!(paths, ["transform/summary.json"]);
    let s = read_json(&out.join("transform/summary.json"));
    assert!(s["isometry_defect"].as_f64().unwrap() < 1e-6);
    assert!(s["inversion_error"].as_f64().unwrap() < 1e-6);
}
