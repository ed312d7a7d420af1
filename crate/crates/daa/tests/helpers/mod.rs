//! Shared plumbing for the integration suites: spawning the real binary and
//! comparing its artifacts.

use std::path::Path;
use std::process::Command;

/// Runs the compiled binary with `args`, asserting success; returns stdout.
pub fn run_ok(args: &[String]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_daa"))
        .args(args)
        .output()
        .expect("binary should spawn");
    assert!(
        out.status.success(),
        "`daa {}` exited {:?}\nstderr: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout should be UTF-8")
}

/// Runs the binary expecting failure; returns (exit code, stderr).
#[allow(dead_code)]
pub fn run_err(args: &[String]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_daa"))
        .args(args)
        .output()
        .expect("binary should spawn");
    assert!(
        !out.status.success(),
        "`daa {}` unexpectedly succeeded\nstdout: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stdout)
    );
    (
        out.status.code().expect("process should exit normally"),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// All regular files directly inside `dir` as (name, contents), sorted by
/// name; empty when the directory does not exist.
#[allow(dead_code)]
pub fn collect_files(dir: &Path) -> Vec<(String, String)> {
    let mut files = Vec::new();
    let Ok(entries) = std::fs::read_dir(dir) else {
        return files;
    };
    for entry in entries {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            files.push((
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read_to_string(entry.path()).unwrap(),
            ));
        }
    }
    files.sort();
    files
}

/// Token-level comparison: numeric tokens must agree within `tol` relative
/// (floored at 1), everything else byte for byte.
#[allow(dead_code)]
pub fn numeric_tokens_close(cmd: &str, artifact: &str, a: &str, b: &str, tol: f64) {
    let ta: Vec<&str> = a.split_whitespace().collect();
    let tb: Vec<&str> = b.split_whitespace().collect();
    assert_eq!(
        ta.len(),
        tb.len(),
        "{cmd}/{artifact}: token counts differ ({} vs {})",
        ta.len(),
        tb.len()
    );
    for (x, y) in ta.iter().zip(&tb) {
        match (x.parse::<f64>(), y.parse::<f64>()) {
            (Ok(fx), Ok(fy)) => {
                let scale = fx.abs().max(fy.abs()).max(1.0);
                assert!(
                    (fx - fy).abs() <= tol * scale,
                    "{cmd}/{artifact}: {fx} vs {fy} beyond {tol:e} relative"
                );
            }
            _ => assert_eq!(x, y, "{cmd}/{artifact}: tokens diverge"),
        }
    }
}
