use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn crossed(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossed"))
        .current_dir(dir)
        .env_remove("CROSSED_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = crossed(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn gen_writes_designs_with_expected_cells() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["gen", "--name", "bc", "balanced-cells", "--I", "3,3"]);
    assert_eq!(csv_rows(&d.join("bc.csv")).len(), 9);
    ok(
        d,
        &[
            "gen",
            "--name",
            "dc",
            "disconnected",
            "--I",
            "3",
            "--comms",
            "2",
        ],
    );
    assert_eq!(csv_rows(&d.join("dc.csv")).len(), 18);
    ok(
        d,
        &[
            "gen", "--name", "mc", "mcar", "--I", "50", "--q", "0.1", "--seed", "3",
        ],
    );
    let cells = csv_rows(&d.join("mc.csv")).len();
    // Binomial(2500, 0.1): mean 250, sd 15
    assert!((175..=325).contains(&cells), "{cells}");
    let meta = json(&d.join("mc.json"));
    assert_eq!(meta["command"], "gen");
}

#[test]
fn gen_is_deterministic_in_seed() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "gen", "--name", "a", "mcar", "--I", "30", "--q", "0.2", "--seed", "5",
        ],
    );
    ok(
        d,
        &[
            "gen", "--name", "b", "mcar", "--I", "30", "--q", "0.2", "--seed", "5",
        ],
    );
    ok(
        d,
        &[
            "gen", "--name", "c", "mcar", "--I", "30", "--q", "0.2", "--seed", "6",
        ],
    );
    let read = |n: &str| std::fs::read_to_string(d.join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
}

#[test]
fn config_fills_flags_and_command_line_wins() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("run.cfg"),
        "# sweep\nq = 0.3\nseed = 9\nname = fromcfg\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "--config", "run.cfg", "gen", "mcar", "--I", "20", "--seed", "4",
        ],
    );
    let design = &json(&d.join("fromcfg.json"))["args"]["design"];
    let text = design.to_string();
    assert!(text.contains("0.3"), "{text}");
    assert!(text.contains("\"seed\":4"), "{text}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.cfg"), "bogus = 1\n").unwrap();
    let out = crossed(
        d,
        &["--config", "bad.cfg", "gen", "balanced-cells", "--I", "2,2"],
    );
    assert!(!out.status.success());
}

#[test]
fn out_dir_comes_from_environment() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let target = d.join("results");
    let out = Command::new(env!("CARGO_BIN_EXE_crossed"))
        .current_dir(d)
        .env("CROSSED_OUT_DIR", &target)
        .args(["gen", "--name", "x", "balanced-cells", "--I", "2,3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("x.csv").exists());
    assert!(!d.join("x.csv").exists());
}

#[test]
fn rate_on_balanced_cells_gives_independent_collapsed_sweeps() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "gen",
            "--name",
            "bc",
            "balanced-cells",
            "--I",
            "4,5",
            "--n",
            "2",
        ],
    );
    ok(
        d,
        &[
            "rate",
            "--data",
            "bc.csv",
            "--dense-levels",
            "--tau",
            "1,2,3",
        ],
    );
    let rows = json(&d.join("rates.json"))["rows"]
        .as_array()
        .unwrap()
        .clone();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let mixing = row["mixing_numeric"].as_f64().unwrap();
        let theory = row["mixing_theory"].as_f64().unwrap();
        assert!((mixing - theory).abs() < 1e-6 * theory, "{row}");
        if row["scheme"] == "cGS" {
            assert!((mixing - 1.0).abs() < 1e-9, "{row}");
        } else {
            assert!(mixing > 1.0, "{row}");
        }
    }
}

#[test]
fn rate_fails_when_the_solver_does_not_converge() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &["gen", "--name", "m", "mcar", "--I", "40", "--q", "0.2"],
    );
    let out = crossed(
        d,
        &[
            "rate",
            "--data",
            "m.csv",
            "--dense-levels",
            "--method",
            "power",
            "--max-iters",
            "2",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = crossed(tmp.path(), &["gen", "mcar", "--I", "10"]);
    assert_eq!(out.status.code(), Some(2));
    let out = crossed(tmp.path(), &["rate", "--tau", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sample_is_reproducible_and_diag_reads_its_chains() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "gen", "--name", "m", "--a0", "2", "mcar", "--I", "15", "--q", "0.4", "--seed", "2",
        ],
    );
    let sample = |name: &str| {
        ok(
            d,
            &[
                "sample",
                "--data",
                "m.csv",
                "--dense-levels",
                "--scheme",
                "gs,cgs",
                "--iters",
                "600",
                "--burn",
                "100",
                "--seed",
                "11",
                "--monitor",
                "a0,abar1,a2[1]",
                "--name",
                name,
            ],
        )
    };
    sample("s1");
    sample("s2");
    let read = |n: &str| std::fs::read_to_string(d.join(n)).unwrap();
    assert_eq!(read("s1_gs_run1.csv"), read("s2_gs_run1.csv"));
    assert_eq!(read("s1_cgs_run1.csv"), read("s2_cgs_run1.csv"));
    let chain = csv_rows(&d.join("s1_cgs_run1.csv"));
    assert_eq!(chain.len(), 500);
    assert_eq!(csv_rows(&d.join("s1_summary.csv")).len(), 6);

    ok(
        d,
        &[
            "diag",
            "--chain",
            "s1_gs_run1.csv",
            "--max-lag",
            "20",
            "--cross",
            "a0:abar1",
            "--name",
            "dg",
        ],
    );
    let acf = csv_rows(&d.join("dg_acf.csv"));
    assert_eq!(acf.len(), 21);
    assert_eq!(&acf[0][1], "1");
    assert_eq!(csv_rows(&d.join("dg_cross.csv")).len(), 41);
    let stats = json(&d.join("dg.json"))["stats"]
        .as_array()
        .unwrap()
        .clone();
    assert_eq!(stats.len(), 3);
    assert!(stats.iter().all(|s| s["ess"].as_f64().unwrap() > 0.0));
}

#[test]
fn bench_writes_timings_and_fits() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "bench",
            "--I",
            "50,100",
            "--batch-ms",
            "5",
            "--batches",
            "2",
        ],
    );
    assert_eq!(csv_rows(&d.join("bench.csv")).len(), 4);
    let meta = json(&d.join("bench.json"));
    assert_eq!(meta["fits"].as_array().unwrap().len(), 2);
    assert_eq!(meta["cgs_over_gs"].as_array().unwrap().len(), 2);
}
