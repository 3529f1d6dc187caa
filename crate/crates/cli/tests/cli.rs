use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SCENE: &str = "\
fps 10
camera 0 0 0 0 0 0 0
card:A:3 0 0.02 0 0.4 1.5708 0 0
card:A:3 1 0.03 0 0.4 1.5708 0.2 0
board 0 -0.05 0.08 0.6 1.5708 0 0
event 0.55 first-card-pickup
";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cardtrack"))
        .current_dir(dir)
        .args(args)
        .env_remove("CARDTRACK_INTRINSICS")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// A layout and a rendered trace of `scene` in a fresh directory.
fn workspace(scene: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_path_buf();
    fs::write(d.join("scene.txt"), scene).unwrap();
    ok(&d, &["gen-layout", "--seed", "5", "--out", "layout.txt"]);
    ok(&d, &["simulate", "--scene", "scene.txt", "--layout", "layout.txt", "--out", "obs.txt"]);
    (dir, d)
}

#[test]
fn gen_layout_reports_counts_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = ok(d, &["gen-layout", "--seed", "9", "--out", "a.txt"]);
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("2912 tags") && log.contains("35 tags") && log.contains("2947 tags"), "{log}");
    ok(d, &["gen-layout", "--seed", "9", "--out", "b.txt"]);
    assert_eq!(fs::read(d.join("a.txt")).unwrap(), fs::read(d.join("b.txt")).unwrap());
    ok(d, &["gen-layout", "--seed", "9", "--player", "b", "--out", "local.txt"]);
    let local = fs::read_to_string(d.join("local.txt")).unwrap();
    assert!(local.len() < fs::read_to_string(d.join("a.txt")).unwrap().len());
}

#[test]
fn simulate_then_track_recovers_the_card() {
    let (_dir, d) = workspace(SCENE);
    let obs = fs::read_to_string(d.join("obs.txt")).unwrap();
    assert!(obs.contains("first-card-pickup"));
    let out = ok(&d, &["track", "--obs", "obs.txt", "--layout", "layout.txt", "--out", "poses.txt"]);
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("11 frames"), "{log}");
    assert!(log.contains("jitter a:3"), "{log}");
    let poses = cardtrack::tracker::read_card_poses(fs::read(d.join("poses.txt")).unwrap().as_slice()).unwrap();
    let card = poses.iter().find(|p| p.card.to_string() == "a:3").unwrap();
    assert!((card.pose.translation.z - 0.4).abs() < 1e-6);
    // Card tracking stops at the first pickup; the board keeps being tracked.
    let cards = poses.iter().filter(|p| p.card.to_string() == "a:3").count();
    let boards = poses.iter().filter(|p| p.card.to_string() == "board").count();
    assert_eq!((cards, boards), (6, 11));

    for solver in ["dlt", "lm"] {
        ok(&d, &["track", "--obs", "obs.txt", "--layout", "layout.txt", "--solver", solver, "--out", solver]);
    }
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let (_dir, d) = workspace(SCENE);
    let args = |out: &'static str, seed: &'static str| {
        ["simulate", "--scene", "scene.txt", "--layout", "layout.txt", "--noise-sigma", "0.5", "--occlude", "0.2"]
            .into_iter()
            .chain(["--seed", seed, "--out", out])
            .collect::<Vec<_>>()
    };
    ok(&d, &args("n1.txt", "3"));
    ok(&d, &args("n2.txt", "3"));
    ok(&d, &args("n3.txt", "4"));
    let read = |f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read("n1.txt"), read("n2.txt"));
    assert_ne!(read("n1.txt"), read("n3.txt"));
}

#[test]
fn calibrate_writes_a_plane_or_exits_two() {
    let (_dir, d) = workspace(SCENE);
    let out = ok(&d, &["calibrate", "--obs-frame", "obs.txt", "--layout", "layout.txt", "--out", "cal.txt"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("table offset"));
    let cal = cardtrack::calibration::load_calibration(fs::read(d.join("cal.txt")).unwrap().as_slice()).unwrap();
    assert_eq!(cal.deck_anchor.card.to_string(), "a:3");

    let no_board: String = SCENE.lines().filter(|l| !l.starts_with("board")).map(|l| format!("{l}\n")).collect();
    let (_dir, d) = workspace(&no_board);
    let out = run(&d, &["calibrate", "--obs-frame", "obs.txt", "--layout", "layout.txt"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn intrinsics_come_from_flag_or_environment() {
    let (_dir, d) = workspace(SCENE);
    fs::write(d.join("k.txt"), "# fx fy cx cy\n900 900 640 360\n").unwrap();
    let by_flag = |out: &str| {
        ok(&d, &["simulate", "--scene", "scene.txt", "--layout", "layout.txt", "--intrinsics", "k.txt", "--out", out]);
    };
    by_flag("flag.txt");
    let env = Command::new(env!("CARGO_BIN_EXE_cardtrack"))
        .current_dir(&d)
        .args(["simulate", "--scene", "scene.txt", "--layout", "layout.txt", "--out", "env.txt"])
        .env("CARDTRACK_INTRINSICS", "k.txt")
        .output()
        .unwrap();
    assert!(env.status.success());
    let read = |f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read("flag.txt"), read("env.txt"));
    assert_ne!(read("flag.txt"), read("obs.txt"));

    fs::write(d.join("bad.txt"), "900 900 640\n").unwrap();
    let out = run(&d, &["track", "--obs", "obs.txt", "--layout", "layout.txt", "--intrinsics", "bad.txt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn play_writes_matching_final_states() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["script-war", "--out-a", "a.txt", "--out-b", "b.txt"]);
    ok(d, &["play", "--seed", "3", "--events-a", "a.txt", "--events-b", "b.txt", "--out", "t1.txt"]);
    ok(d, &["play", "--seed", "3", "--out", "t2.txt"]);
    let t1 = fs::read_to_string(d.join("t1.txt")).unwrap();
    assert_eq!(t1, fs::read_to_string(d.join("t2.txt")).unwrap());
    let (_, finals) = t1.split_once("final a\n").unwrap();
    let (a, b) = finals.split_once("final b\n").unwrap();
    assert_eq!(a, b);
    assert!(a.contains("battles 52"), "{a}");
}

#[test]
fn bench_prints_a_table() {
    let dir = TempDir::new().unwrap();
    let out = ok(dir.path(), &["bench", "--tags", "200", "--frames", "3", "--solver", "ippe"]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("ippe"), "{table}");
}

#[test]
fn usage_and_io_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["track", "--obs", "missing.txt", "--layout", "missing.txt"]).status.code(), Some(1));
    assert_eq!(run(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(d, &["play", "--latency", "-1"]).status.code(), Some(1));
    assert_eq!(run(d, &["bench", "--solver", "magic", "--tags", "10", "--frames", "1"]).status.code(), Some(1));
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
    fs::write(d.join("scene.txt"), "card:A:99 0 0 0 0.4 0 0 0\n").unwrap();
    assert_eq!(run(d, &["simulate", "--scene", "scene.txt"]).status.code(), Some(1));
}
