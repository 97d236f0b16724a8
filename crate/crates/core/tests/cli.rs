//! End-to-end runs of the `jump-bsde solve` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_jump-bsde");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("jump-bsde-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn solve(config: &Path, out: &Path, extra: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.arg("solve")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra);
    match threads {
        Some(t) => cmd.env("JUMP_BSDE_THREADS", t),
        None => cmd.env_remove("JUMP_BSDE_THREADS"),
    };
    cmd.output().unwrap()
}

fn csvs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn write_config(dir: &Path, base: &str, edits: &[(&str, &str)]) -> PathBuf {
    let original = fs::read_to_string(configs().join(base)).unwrap();
    let edited = |line: &str| {
        let key = line.split('=').next().unwrap().trim();
        edits.iter().any(|(k, _)| *k == key)
    };
    let mut text: String = original
        .lines()
        .filter(|l| !edited(l))
        .map(|l| format!("{l}\n"))
        .collect();
    for (k, v) in edits {
        text.push_str(&format!("{k} = {v}\n"));
    }
    let path = dir.join("model.conf");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn ill_posed_run_agrees_with_analytic_values() {
    let out = scratch("ill-posed");
    let run = solve(
        &configs().join("ill_posed.conf"),
        &out,
        &[
            "--solvers",
            "regression,ipde",
            "--n",
            "4",
            "--paths",
            "4000",
        ],
        None,
    );
    assert_eq!(
        run.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert_eq!(summary, String::from_utf8(run.stdout).unwrap());
    assert!(summary.contains("reference solver: ipde"));

    let comparison = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let mut lines = comparison.lines();
    assert_eq!(lines.next(), Some("n,solver,y0,reference_gap"));
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let y0: f64 = cells[2].parse().unwrap();
        assert!((y0 - 4.0).abs() <= 0.2, "{line}");
    }
    assert!(out.join("regression.csv").exists());
    assert!(out.join("ipde_n4.csv").exists());
}

#[test]
fn reruns_and_thread_counts_give_identical_csvs() {
    let args = [
        "--solvers",
        "regression,ipde,lattice-dual",
        "--n",
        "1,2",
        "--paths",
        "3000",
    ];
    let config = configs().join("costly_jumps.conf");
    let a = scratch("rerun-a");
    let b = scratch("rerun-b");
    let c = scratch("rerun-c");
    assert_eq!(solve(&config, &a, &args, Some("1")).status.code(), Some(0));
    assert_eq!(solve(&config, &b, &args, Some("1")).status.code(), Some(0));
    assert_eq!(solve(&config, &c, &args, Some("4")).status.code(), Some(0));
    let first = csvs(&a);
    assert!(first.len() >= 4);
    assert_eq!(first, csvs(&b));
    assert_eq!(first, csvs(&c));
}

#[test]
fn flags_override_config_keys() {
    let out = scratch("override");
    let run = solve(
        &configs().join("martingale.conf"),
        &out,
        &["--n", "3", "--paths", "500", "--steps", "5", "--seed", "9"],
        None,
    );
    assert_eq!(run.status.code(), Some(0));
    let sweep = fs::read_to_string(out.join("regression.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 2, "{sweep}");
    assert!(sweep.lines().nth(1).unwrap().starts_with("3,"));
}

#[test]
fn tree_dual_refuses_state_dependent_cost() {
    let dir = scratch("tree-refusal");
    let config = write_config(
        &dir,
        "impulse.conf",
        &[
            ("c.family", "affine"),
            ("c.reads", "y"),
            ("c.params", "0.5, -0.1"),
            ("solvers", "ipde, tree-dual"),
        ],
    );
    let run = solve(&config, &dir.join("out"), &[], None);
    assert_eq!(run.status.code(), Some(1));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("dual oracle requires impulse shape"), "{err}");
}

#[test]
fn config_errors_exit_one() {
    let dir = scratch("bad-config");
    let unknown = write_config(&dir, "martingale.conf", &[("sigma.scale", "2")]);
    assert_eq!(
        solve(&unknown, &dir.join("out"), &[], None).status.code(),
        Some(1)
    );

    let missing = dir.join("absent.conf");
    assert_eq!(
        solve(&missing, &dir.join("out"), &[], None).status.code(),
        Some(1)
    );

    let bad_solver = configs().join("martingale.conf");
    let run = solve(
        &bad_solver,
        &dir.join("out"),
        &["--solvers", "simplex"],
        None,
    );
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn solver_failure_exits_two_and_keeps_partial_results() {
    // A positive jump gain with no shift makes the terminal face-lift diverge.
    let dir = scratch("facelift");
    let config = write_config(
        &dir,
        "ill_posed.conf",
        &[("solvers", "ipde, qvi"), ("n", "1, 2")],
    );
    let out = dir.join("out");
    let run = solve(&config, &out, &[], None);
    assert_eq!(run.status.code(), Some(2));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("FAILED"), "{summary}");
    assert!(out.join("ipde_n2.csv").exists());
}
