//! End-to-end smoke tests driving the compiled binary.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn lvgrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lvgrid"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn stdout_of(args: &[&str]) -> String {
    let out = lvgrid(args);
    assert!(
        out.status.success(),
        "lvgrid {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout should be UTF-8")
}

fn scratch_dir(label: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lvgrid-cli-{label}-{}", std::process::id()));
    fs::create_dir_all(&dir).expect("scratch dir");
    dir
}

#[test]
fn lineparams_prints_full_and_reduced_matrices() {
    let csv = stdout_of(&["lineparams"]);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("linetype,form,row,col,r_ohm_per_km,x_ohm_per_km")
    );
    assert!(csv.contains("4x100,full"));
    assert!(csv.contains("4x100,kron"));
    assert!(csv.contains("2x22,kron"));
    // The four-conductor mains folds down to a 3x3 block.
    let kron_rows = csv
        .lines()
        .filter(|l| l.starts_with("4x100,kron"))
        .count();
    assert_eq!(kron_rows, 9);
}

#[test]
fn pf_lists_every_terminal_once() {
    let csv = stdout_of(&["pf", "--loading", "0.5", "--mode", "N"]);
    assert!(csv.starts_with("# mode: N"));
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "node,phase,vmag_v,vmag_pu,theta_rad");
    assert!(rows.iter().any(|r| r.starts_with("sub,a,")));
    for row in &rows[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 5, "malformed row {row}");
        let vmag_pu: f64 = fields[3].parse().expect("numeric voltage");
        assert!(vmag_pu.is_finite());
    }
}

#[test]
fn estimate_converges_in_both_modes() {
    for mode in ["C", "N"] {
        let csv = stdout_of(&["estimate", "--noiseless", "--loading", "0.5", "--mode", mode]);
        assert!(
            csv.contains("converged: true"),
            "mode {mode} did not converge:\n{csv}"
        );
        assert!(csv.contains("node,phase,theta_rad,vmag_pu"));
    }
}

#[test]
fn bench_report_is_stable_between_runs() {
    let dir = scratch_dir("bench");
    let args = [
        "bench",
        "--loadings",
        "0.5",
        "--scales",
        "1",
        "--mc",
        "2",
        "--seed",
        "7",
        "--out",
        dir.to_str().unwrap(),
    ];
    stdout_of(&args);
    let report = dir.join("report.csv");
    let first = fs::read_to_string(&report).expect("report.csv");
    assert!(first.starts_with("loading,scale,mode,mc,excluded,"));
    stdout_of(&args);
    let second = fs::read_to_string(&report).expect("report.csv");
    // Only the trailing wall-time column may differ between runs.
    let strip = |text: &str| {
        text.lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&first), strip(&second));
    fs::remove_dir_all(&dir).ok();
}
