//! End-to-end tests for the `sketchy` binary: flag handling, output
//! schemas, exit codes, determinism, and the paired-run guarantees the
//! solve and eig subcommands advertise.

use std::fs;
use std::io::Write as _;
use std::process::Command;

use sketchy::operators::{laplacian_2d, planted_negatives, LinearOperator};
use sketchy::testing;

fn sketchy_bin(args: &[&str], envs: &[(&str, &str)]) -> (i32, String, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sketchy"));
    cmd.args(args).env_remove("SKETCHY_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary should run");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// CSV payload lines: everything that is neither `#` metadata nor a header.
fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#') && !l.starts_with(char::is_alphabetic))
        .collect()
}

fn metadata_value<'a>(csv: &'a str, key: &str) -> Option<&'a str> {
    let prefix = format!("# {key}=");
    csv.lines()
        .find(|l| l.starts_with(&prefix))
        .map(|l| &l[prefix.len()..])
}

#[test]
fn paired_solve_runs_respect_the_factor_six_bound() {
    let dir = tempfile::tempdir().unwrap();
    let sg_path = dir.path().join("sg.csv");
    let gm_path = dir.path().join("gm.json");
    let (code, _, _) = sketchy_bin(
        &[
            "solve",
            "--gen",
            "laplacian2d:100",
            "--method",
            "sgmres",
            "--basis",
            "arnoldi:2",
            "--d",
            "300",
            "--seed",
            "1",
            "--out",
            sg_path.to_str().unwrap(),
        ],
        &[],
    );
    // The random right-hand side has a component outside the operator's
    // range, so the run exhausts the basis without converging.
    assert_eq!(code, 2);
    let sg_csv = fs::read_to_string(&sg_path).unwrap();
    let rows = data_lines(&sg_csv);
    assert_eq!(rows.len(), 300, "one row per basis column");
    assert!(sg_csv.contains("iter,r_est,true_res,cond,ms"));
    let final_r_est: f64 = rows
        .last()
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();

    let (code, _, _) = sketchy_bin(
        &[
            "solve",
            "--gen",
            "laplacian2d:100",
            "--method",
            "gmres",
            "--d",
            "300",
            "--seed",
            "1",
            "--format",
            "json",
            "--out",
            gm_path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code, 2);
    let gm: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&gm_path).unwrap()).unwrap();
    let gm_res = gm["summary"]["final_true_res"].as_f64().unwrap();
    assert!(
        final_r_est <= 6.0 * gm_res,
        "sketched estimate {final_r_est:.3e} vs optimal {gm_res:.3e}"
    );
    assert!(
        final_r_est >= gm_res / 6.0,
        "estimate implausibly small: {final_r_est:.3e} vs {gm_res:.3e}"
    );
}

#[test]
fn consistent_system_converges_to_machine_precision() {
    let dir = tempfile::tempdir().unwrap();
    let lap = laplacian_2d(4);
    let x_star = testing::seeded_vector(lap.nrows(), 9);
    let rhs = lap.apply_vec(&x_star);
    let rhs_path = dir.path().join("rhs.txt");
    let mut f = fs::File::create(&rhs_path).unwrap();
    for v in &rhs {
        writeln!(f, "{v:e}").unwrap();
    }
    drop(f);
    let out_path = dir.path().join("out.json");
    let (code, _, stderr) = sketchy_bin(
        &[
            "solve",
            "--gen",
            "laplacian2d:4",
            "--method",
            "gmres",
            "--d",
            "16",
            "--rhs",
            rhs_path.to_str().unwrap(),
            "--tol",
            "1e-12",
            "--format",
            "json",
            "--out",
            out_path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code, 0, "stderr: {stderr}");
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    let true_res = record["summary"]["final_true_res"].as_f64().unwrap();
    let rhs_norm = record["summary"]["rhs_norm"].as_f64().unwrap();
    assert!(record["summary"]["converged"].as_bool().unwrap());
    assert!(true_res <= 1e-12 * rhs_norm, "{true_res:e} vs {rhs_norm:e}");
}

#[test]
fn identical_commands_produce_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let (code, _, _) = sketchy_bin(
            &[
                "solve",
                "--gen",
                "laplacian2d:32",
                "--method",
                "sgmres",
                "--d",
                "40",
                "--seed",
                "9",
                "--out",
                path.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(code, 2);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let ea = dir.path().join("ea.json");
    let eb = dir.path().join("eb.json");
    for path in [&ea, &eb] {
        let (code, _, _) = sketchy_bin(
            &[
                "eig",
                "--gen",
                "laplacian2d:32",
                "--method",
                "srr",
                "--basis",
                "lanczos",
                "--d",
                "40",
                "--seed",
                "9",
                "--format",
                "json",
                "--out",
                path.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(code, 0);
    }
    assert_eq!(fs::read(&ea).unwrap(), fs::read(&eb).unwrap());
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&ea).unwrap()).unwrap();
    assert!(parsed["summary"]["kappa_sb"].as_f64().unwrap() > 0.0);
    assert!(parsed["pairs"].as_array().is_some());
}

#[test]
fn seed_env_var_overrides_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str, envs: &[(&str, &str)]| {
        let path = dir.path().join(name);
        let (code, _, _) = sketchy_bin(
            &[
                "solve",
                "--gen",
                "laplacian2d:16",
                "--method",
                "sgmres",
                "--d",
                "30",
                "--seed",
                seed,
                "--out",
                path.to_str().unwrap(),
            ],
            envs,
        );
        assert_eq!(code, 2);
        fs::read(&path).unwrap()
    };
    let seed5 = run("s5.csv", "5", &[]);
    let seed7 = run("s7.csv", "7", &[]);
    let overridden = run("env.csv", "5", &[("SKETCHY_SEED", "7")]);
    assert_ne!(seed5, seed7, "different seeds must change the run");
    assert_eq!(overridden, seed7, "env override must win over the flag");

    let bad = dir.path().join("bad.csv");
    let (code, _, stderr) = sketchy_bin(
        &[
            "solve",
            "--gen",
            "laplacian2d:16",
            "--method",
            "sgmres",
            "--d",
            "30",
            "--out",
            bad.to_str().unwrap(),
        ],
        &[("SKETCHY_SEED", "not-a-number")],
    );
    assert_eq!(code, 1);
    assert!(stderr.contains("error:"), "stderr: {stderr}");
}

#[test]
fn usage_errors_exit_with_code_one() {
    let cases: Vec<Vec<&str>> = vec![
        // Both a file and a generator.
        vec![
            "solve",
            "--matrix",
            "/nonexistent.mtx",
            "--gen",
            "laplacian2d:8",
            "--method",
            "sgmres",
        ],
        // Neither a file nor a generator.
        vec!["solve", "--method", "sgmres"],
        // Malformed generator spec.
        vec!["solve", "--gen", "laplacian2d", "--method", "sgmres"],
        // Unknown basis spec.
        vec![
            "solve",
            "--gen",
            "laplacian2d:8",
            "--method",
            "sgmres",
            "--basis",
            "legendre",
        ],
        // Missing right-hand-side file.
        vec![
            "solve",
            "--gen",
            "laplacian2d:8",
            "--method",
            "sgmres",
            "--rhs",
            "/nonexistent-rhs.txt",
        ],
        // Unknown flag (handled by the argument parser).
        vec!["solve", "--gen", "laplacian2d:8", "--frobnicate"],
    ];
    for args in cases {
        let (code, _, stderr) = sketchy_bin(&args, &[]);
        assert_eq!(code, 1, "args {args:?} gave stderr: {stderr}");
    }
}

#[test]
fn conditioning_collapse_exits_two_and_warns_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mono.csv");
    let (code, _, stderr) = sketchy_bin(
        &[
            "solve",
            "--gen",
            "laplacian2d:32",
            "--method",
            "sgmres",
            "--basis",
            "monomial",
            "--restart",
            "none",
            "--d",
            "120",
            "--seed",
            "62",
            "--out",
            path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code, 2);
    assert!(
        stderr.lines().any(|l| l.starts_with("WARN:")),
        "stderr: {stderr}"
    );
    assert!(stderr.contains("condition"), "stderr: {stderr}");
}

#[test]
fn trs_eig_reports_a_real_rightmost_ritz_value() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trs.csv");
    let (code, _, stderr) = sketchy_bin(
        &[
            "eig",
            "--gen",
            "trs:1000",
            "--method",
            "srr",
            "--basis",
            "arnoldi:10",
            "--d",
            "200",
            "--seed",
            "3",
            "--out",
            path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code, 0, "stderr: {stderr}");
    let csv = fs::read_to_string(&path).unwrap();
    let mut rightmost: Option<(f64, f64, f64)> = None;
    for row in data_lines(&csv) {
        let mut it = row.split(',').map(|v| v.parse::<f64>().unwrap());
        let (re, im, r_est) = (
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
        );
        if rightmost.map_or(true, |(best, _, _)| re > best) {
            rightmost = Some((re, im, r_est));
        }
    }
    let (re, im, r_est) = rightmost.expect("accepted pairs present");
    // The operator norm is about 3, so 1e-8 relative realness means |im|
    // below roughly 3e-8.
    assert!(im.abs() <= 3e-8, "imaginary part {im:e}");
    assert!(r_est < 1e-6, "residual estimate {r_est:e}");
    assert!((2.5..=3.1).contains(&re), "rightmost {re}");
}

#[test]
fn planted_negatives_are_recovered_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("planted.csv");
    let (code, _, stderr) = sketchy_bin(
        &[
            "eig",
            "--gen",
            "planted:8192",
            "--method",
            "srrstab",
            "--basis",
            "blockcheb",
            "--block",
            "20",
            "--depth",
            "40",
            "--seed",
            "7337",
            "--out",
            path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code, 0, "stderr: {stderr}");
    let csv = fs::read_to_string(&path).unwrap();
    assert_eq!(metadata_value(&csv, "accepted"), Some("10"));
    let kappa: f64 = metadata_value(&csv, "kappa_sb").unwrap().parse().unwrap();
    assert!(kappa > 1e14, "kappa(SB) = {kappa:e}");
    let thetas: Vec<(f64, f64, f64)> = data_lines(&csv)
        .iter()
        .map(|row| {
            let mut it = row.split(',').map(|v| v.parse::<f64>().unwrap());
            (
                it.next().unwrap(),
                it.next().unwrap(),
                it.next().unwrap(),
            )
        })
        .collect();
    for wanted in planted_negatives(8192, 7337) {
        assert!(
            thetas.iter().any(|&(re, im, r_est)| (re - wanted).abs() <= 1e-6
                && im.abs() <= 1e-8
                && r_est < 1e-6),
            "missing planted eigenvalue {wanted}"
        );
    }
}

#[test]
fn classical_and_sketched_ritz_sets_agree() {
    let dir = tempfile::tempdir().unwrap();
    let run = |method: &str, name: &str| -> Vec<f64> {
        let path = dir.path().join(name);
        let (code, _, stderr) = sketchy_bin(
            &[
                "eig",
                "--gen",
                "laplacian2d:32",
                "--method",
                method,
                "--basis",
                "lanczos",
                "--d",
                "120",
                "--tau",
                "2e-7",
                "--symmetric",
                "--seed",
                "5",
                "--out",
                path.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(code, 0, "{method} stderr: {stderr}");
        data_lines(&fs::read_to_string(&path).unwrap())
            .iter()
            .map(|row| row.split(',').next().unwrap().parse().unwrap())
            .collect()
    };
    let sketched = run("srr", "srr.csv");
    let classical = run("rr", "rr.csv");
    assert!(!sketched.is_empty());
    for (from, to) in [(&sketched, &classical), (&classical, &sketched)] {
        for &theta in from.iter() {
            let gap = to
                .iter()
                .map(|t| (t - theta).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(gap <= 1e-8, "unmatched Ritz value {theta} (gap {gap:e})");
        }
    }
}

#[test]
fn bench_emits_the_stable_schema_and_fits() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("bench.csv");
    let (code, _, stderr) = sketchy_bin(
        &[
            "bench",
            "--n-list",
            "1024,4096",
            "--d-list",
            "8,16",
            "--repeat",
            "1",
            "--seed",
            "1",
            "--out",
            csv_path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code, 0, "stderr: {stderr}");
    let csv = fs::read_to_string(&csv_path).unwrap();
    assert!(csv.contains("method,n,d,basis_ms,sketch_ms,ls_solve_ms,assembly_ms,total_ms"));
    assert!(csv.lines().any(|l| l.starts_with("# fit method=")));

    let json_path = dir.path().join("bench.json");
    let (code, _, _) = sketchy_bin(
        &[
            "bench",
            "--n-list",
            "1024,4096",
            "--d-list",
            "8,16",
            "--repeat",
            "1",
            "--seed",
            "1",
            "--format",
            "json",
            "--out",
            json_path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code, 0);
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();
    assert!(!parsed["rows"].as_array().unwrap().is_empty());
    assert!(!parsed["fits"].as_array().unwrap().is_empty());
}

#[test]
fn timings_flag_reports_a_positive_total() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, timings: bool| -> f64 {
        let path = dir.path().join(name);
        let mut args = vec![
            "solve",
            "--gen",
            "laplacian2d:16",
            "--method",
            "sgmres",
            "--d",
            "30",
            "--seed",
            "4",
            "--format",
            "json",
        ];
        if timings {
            args.push("--timings");
        }
        args.push("--out");
        let path_str = path.to_str().unwrap().to_owned();
        let args: Vec<&str> = args
            .into_iter()
            .chain(std::iter::once(path_str.as_str()))
            .collect();
        let (code, _, _) = sketchy_bin(&args, &[]);
        assert_eq!(code, 2);
        let parsed: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        parsed["summary"]["total_ms"].as_f64().unwrap()
    };
    assert_eq!(run("plain.json", false), 0.0);
    assert!(run("timed.json", true) > 0.0);
}
