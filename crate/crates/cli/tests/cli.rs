//! End-to-end tests of the `mrkit` binary: exit codes, output formats, and
//! the thread-count determinism guarantee of `simulate`.

use std::path::Path;
use std::process::Command;

fn mrkit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mrkit"))
}

fn write_example_tsv(path: &Path) {
    let body = "snp_id\tbeta_exposure\tse_exposure\tbeta_outcome\tse_outcome\n\
        rs101\t0.082\t0.004\t0.035\t0.0018\n\
        rs102\t0.051\t0.0042\t0.019\t0.0017\n\
        rs103\t-0.063\t0.0038\t-0.027\t0.0019\n\
        rs104\t0.070\t0.0041\t0.031\t0.0018\n\
        rs105\t0.044\t0.0039\t0.016\t0.0018\n\
        rs106\t-0.039\t0.0040\t-0.014\t0.0017\n\
        rs107\t0.058\t0.0042\t0.025\t0.0018\n\
        rs108\t0.090\t0.0043\t0.034\t0.0019\n";
    std::fs::write(path, body).unwrap();
}

#[test]
fn fit_writes_json_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.tsv");
    let out = dir.path().join("r.json");
    write_example_tsv(&input);

    let status = mrkit()
        .args([
            "fit",
            "--method",
            "raps",
            "--loss",
            "tukey",
            "--k",
            "4.685",
            "--input",
            input.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["method"], "RAPS");
    assert_eq!(v["n_snps"], 8);
    assert!(v["beta_hat"].is_number());
    assert!(v["tau2_hat"].is_number());
    assert!(v["kappa_hat"].is_number());
    assert!(v["ci"].is_array());
}

#[test]
fn fit_with_diagnostics_writes_plot_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.tsv");
    let out = dir.path().join("r.json");
    let prefix = dir.path().join("diag");
    write_example_tsv(&input);

    let status = mrkit()
        .args([
            "fit",
            "--method",
            "ps",
            "--input",
            input.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--diagnostics",
            prefix.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let qq = std::fs::read_to_string(format!("{}.qq.csv", prefix.display())).unwrap();
    assert_eq!(qq.lines().count(), 9); // header + 8 SNPs
    let loo = std::fs::read_to_string(format!("{}.loo.csv", prefix.display())).unwrap();
    assert!(loo.starts_with("snp_id,f_stat,beta_loo"));
    assert_eq!(loo.lines().count(), 9);
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.tsv");
    write_example_tsv(&input);
    let output = mrkit()
        .args([
            "fit",
            "--method",
            "nonsense",
            "--input",
            input.to_str().unwrap(),
            "--out",
            "/dev/null",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("method"), "stderr: {stderr}");
}

#[test]
fn missing_input_file_is_a_runtime_error() {
    let output = mrkit()
        .args([
            "fit",
            "--method",
            "ps",
            "--input",
            "/nonexistent/never.tsv",
            "--out",
            "/dev/null",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn constants_l2_prints_ones() {
    let output = mrkit().args(["constants", "--loss", "l2"]).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&output.stdout).trim(), "1 1 1 1");
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    // acceptance: byte-identical CSV from one worker and several workers
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("t1.csv");
    let out4 = dir.path().join("t4.csv");
    for (threads, out) in [("1", &out1), ("4", &out4)] {
        let status = mrkit()
            .args([
                "simulate",
                "--setup",
                "2",
                "--p",
                "40",
                "--kappa",
                "9.1",
                "--reps",
                "300",
                "--seed",
                "7",
                "--methods",
                "ivw,wmedian,ps,aps,raps",
                "--threads",
                threads,
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out4).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "CSV differs between 1 and 4 threads");
    eprintln!("criterion 11 PASS: simulate output is byte-identical under 1 and 4 threads");
}

#[test]
fn simulate_rerun_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a.csv");
    let out2 = dir.path().join("b.csv");
    for out in [&out1, &out2] {
        let status = mrkit()
            .args([
                "simulate",
                "--setup",
                "1",
                "--p",
                "25",
                "--kappa",
                "33.1",
                "--reps",
                "100",
                "--seed",
                "11",
                "--methods",
                "ps,ivw",
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn env_seed_is_used_when_flag_absent() {
    let dir = tempfile::tempdir().unwrap();
    let out_env = dir.path().join("env.csv");
    let out_flag = dir.path().join("flag.csv");
    let base = [
        "simulate", "--setup", "1", "--p", "10", "--kappa", "20.0", "--reps", "50", "--methods",
        "ps", "--out",
    ];
    let status = mrkit()
        .args(base)
        .arg(out_env.to_str().unwrap())
        .env("MRKIT_SEED", "1234")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let status = mrkit()
        .args(base)
        .arg(out_flag.to_str().unwrap())
        .args(["--seed", "1234"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(
        std::fs::read(&out_env).unwrap(),
        std::fs::read(&out_flag).unwrap()
    );
}

#[test]
fn egger_fit_reports_intercept() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.tsv");
    let out = dir.path().join("e.json");
    write_example_tsv(&input);
    let status = mrkit()
        .args([
            "fit",
            "--method",
            "egger",
            "--input",
            input.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["intercept"].is_number());
    assert!(v["intercept_se"].is_number());
    assert!(v.get("tau2_hat").is_none());
}
