#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use resift::synth::textured_image;

pub fn resift() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_resift"));
    cmd.env_remove("RESIFT_CONFIG");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    resift().args(args).output().expect("spawn resift")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Writes a textured test image and returns its path as a string.
pub fn write_textured(dir: &Path, name: &str, side: usize, seed: u64) -> String {
    let path = dir.join(name);
    textured_image(side, side, seed).save_ppm(&path).unwrap();
    path_str(&path)
}

pub fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

pub fn write_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}
