#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_raylaplace"));
    c.env("RUST_LOG", "warn");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Runs and asserts success, returning stdout.
pub fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small sphere scene with a briefly trained field and a coarse
/// uncertainty grid, built through the binary.
pub struct Small {
    pub dir: tempfile::TempDir,
    pub scene: PathBuf,
    pub field: PathBuf,
    pub unc: PathBuf,
}

pub fn small() -> Small {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("scene");
    ok(&[
        "synth", "--scene", "sphere", "--resolution", "12", "--views", "6", "--test-views", "2",
        "--image-size", "16", "--samples-per-ray", "32", "--out", s(&root),
    ]);
    let scene = root.join("scene.json");
    let field = dir.path().join("field.vxf");
    ok(&[
        "train", "--scene", s(&scene), "--resolution", "12", "--iterations", "30", "--batch-rays", "256",
        "--samples-per-ray", "32", "--seed", "3", "--out", s(&field),
    ]);
    let unc = dir.path().join("unc.unc1");
    ok(&[
        "uq", "--field", s(&field), "--scene", s(&scene), "--resolution", "6", "--batches", "2",
        "--rays-per-batch", "256", "--samples-per-ray", "32", "--out", s(&unc),
    ]);
    Small { dir, scene, field, unc }
}
