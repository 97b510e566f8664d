use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hkc::csvio::read_table;
use hkc::report::{BacktestDoc, FitDoc};
use hkcopula::stats::kendall_tau;

fn hkc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hkc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("runs hkc")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const MODEL: &str = r#"
seed = 21

[[node]]
name = "root"
family = "gumbel"
tau = 0.3
children = ["left", "right"]

[[node]]
name = "left"
family = "clayton"
tau = 0.5
columns = ["a", "b"]

[[node]]
name = "right"
family = "clayton"
tau = 0.5
columns = ["c", "d"]
"#;

fn simulated(dir: &Path, n: usize) -> PathBuf {
    write(dir, "model.toml", MODEL);
    ok(&hkc(
        &[
            "simulate",
            "--model",
            "model.toml",
            "--n",
            &n.to_string(),
            "--method",
            "exact",
            "--out",
            "sim.csv",
        ],
        dir,
    ));
    dir.join("sim.csv")
}

#[test]
fn simulate_exact_matches_cluster_tau_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = simulated(dir.path(), 10_000);
    let t = read_table(&p).unwrap();
    assert_eq!(t.header, ["a", "b", "c", "d"]);
    assert_eq!(t.data.nrows(), 10_000);
    for (i, j) in [(0, 1), (2, 3)] {
        let tau = kendall_tau(&t.data.column(i), &t.data.column(j));
        assert!((tau - 0.5).abs() < 0.02, "{tau}");
    }
    let first = std::fs::read(&p).unwrap();
    ok(&hkc(
        &[
            "--threads",
            "1",
            "simulate",
            "--model",
            "model.toml",
            "--n",
            "10000",
            "--method",
            "exact",
            "--out",
            "again.csv",
        ],
        dir.path(),
    ));
    assert_eq!(first, std::fs::read(dir.path().join("again.csv")).unwrap());
    ok(&hkc(
        &[
            "simulate",
            "--model",
            "model.toml",
            "--n",
            "10000",
            "--seed",
            "22",
            "--out",
            "other.csv",
        ],
        dir.path(),
    ));
    assert_ne!(first, std::fs::read(dir.path().join("other.csv")).unwrap());
}

#[test]
fn simulate_zero_rows_writes_header() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "model.toml", MODEL);
    ok(&hkc(
        &[
            "simulate",
            "--model",
            "model.toml",
            "--n",
            "0",
            "--out",
            "z.csv",
        ],
        dir.path(),
    ));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("z.csv")).unwrap(),
        "a,b,c,d\n"
    );
}

#[test]
fn fit_two_step_and_mle_reports() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path(), 2000);
    let d = dir.path();
    ok(&hkc(
        &[
            "fit",
            "--data",
            "sim.csv",
            "--model",
            "model.toml",
            "--free",
            "--out",
            "two.json",
        ],
        d,
    ));
    let two = FitDoc::load(&d.join("two.json")).unwrap();
    let kids = two.model.children.as_ref().unwrap();
    assert_eq!(kids.len(), 2);
    assert!(two.model.diagnostics.is_some() && kids.iter().all(|k| k.diagnostics.is_some()));
    assert_eq!(two.n_params, 3);
    assert!(two.loglik.joint.is_none());
    // round trip of the generating tau values
    assert!((two.model.tau.unwrap() - 0.3).abs() < 0.05);
    for k in kids {
        assert!((k.tau.unwrap() - 0.5).abs() < 0.05, "{:?}", k.tau);
    }

    ok(&hkc(
        &[
            "fit",
            "--data",
            "sim.csv",
            "--model",
            "model.toml",
            "--free",
            "--method",
            "mle",
            "--out",
            "mle.json",
        ],
        d,
    ));
    let mle = FitDoc::load(&d.join("mle.json")).unwrap();
    let joint = mle.loglik.joint.as_ref().unwrap();
    assert!(joint.value >= mle.loglik.two_step);
    assert_eq!(mle.loglik.two_step, two.loglik.two_step);

    ok(&hkc(
        &[
            "fit",
            "--data",
            "sim.csv",
            "--model",
            "model.toml",
            "--free",
            "--method",
            "mle",
            "--out",
            "mle2.json",
        ],
        d,
    ));
    assert_eq!(
        std::fs::read(d.join("mle.json")).unwrap(),
        std::fs::read(d.join("mle2.json")).unwrap()
    );

    // a report is a model
    ok(&hkc(
        &[
            "simulate",
            "--model",
            "mle.json",
            "--n",
            "50",
            "--out",
            "from_report.csv",
        ],
        d,
    ));
    let out = hkc(
        &[
            "density",
            "--model",
            "mle.json",
            "--point",
            "0.3,0.4,0.5,0.6",
        ],
        d,
    );
    ok(&out);
    let v: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(v.is_finite() && v > 0.0);
}

#[test]
fn fixed_parameters_are_kept() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path(), 500);
    ok(&hkc(
        &[
            "fit",
            "--data",
            "sim.csv",
            "--model",
            "model.toml",
            "--out",
            "r.json",
        ],
        dir.path(),
    ));
    let r = FitDoc::load(&dir.path().join("r.json")).unwrap();
    assert_eq!(r.model.diagnostics.as_ref().unwrap().method, "fixed");
    assert!((r.model.tau.unwrap() - 0.3).abs() < 1e-12);
}

#[test]
fn missing_column_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path(), 100);
    write(
        dir.path(),
        "bad.toml",
        &MODEL.replace("\"d\"]", "\"delta\"]"),
    );
    let out = hkc(
        &[
            "fit", "--data", "sim.csv", "--model", "bad.toml", "--out", "r.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`delta`"));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "model.toml", MODEL);
    write(d, "holes.csv", "a,b,c,d\n0.1,0.2,0.3,0.4\n0.5,,0.2,0.1\n");
    let out = hkc(
        &[
            "fit",
            "--data",
            "holes.csv",
            "--model",
            "model.toml",
            "--out",
            "r.json",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    write(
        d,
        "dup.toml",
        &MODEL.replace("name = \"right\"", "name = \"left\""),
    );
    let out = hkc(
        &[
            "simulate", "--model", "dup.toml", "--n", "5", "--out", "x.csv",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 16"));
}

#[test]
fn exact_sampling_refuses_elliptical_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let src = MODEL.replacen(
        "family = \"clayton\"\ntau = 0.5",
        "family = \"gaussian\"\nrho = 0.5",
        1,
    );
    write(d, "ell.toml", &format!("kendall_mc_size = 2000\n{src}"));
    let out = hkc(
        &[
            "simulate", "--model", "ell.toml", "--n", "5", "--method", "exact", "--out", "x.csv",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rejection"));
    ok(&hkc(
        &[
            "simulate",
            "--model",
            "ell.toml",
            "--n",
            "20",
            "--method",
            "rejection",
            "--epsilon",
            "0.05",
            "--out",
            "x.csv",
        ],
        d,
    ));
    assert_eq!(read_table(&d.join("x.csv")).unwrap().data.nrows(), 20);
}

#[test]
fn density_of_independence_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let src = r#"
[[node]]
name = "root"
family = "independence"
children = ["x", "y"]

[[node]]
name = "x"
family = "independence"
columns = ["p", "q"]

[[node]]
name = "y"
family = "independence"
columns = ["r"]
"#;
    write(dir.path(), "ind.toml", src);
    for pt in ["0.1,0.2,0.3", "0.9,0.01,0.5"] {
        let out = hkc(
            &["density", "--model", "ind.toml", "--point", pt],
            dir.path(),
        );
        ok(&out);
        assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1");
    }
}

#[test]
fn kendall_grid_increases_in_dimension() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hkc(
        &[
            "kendall", "--family", "gumbel", "--theta", "2", "--dim", "2", "--dim", "5", "--dim",
            "10", "--grid", "10", "--out", "k.csv",
        ],
        dir.path(),
    ));
    let t = read_table(&dir.path().join("k.csv")).unwrap();
    assert_eq!(t.header, ["t", "K_d2", "K_d5", "K_d10"]);
    let mid = t.data.row(5);
    assert_eq!(mid[0], 0.5);
    assert!(mid[1] < mid[2] && mid[2] < mid[3], "{mid:?}");
}

#[test]
fn backtest_hits_five_of_five_hundred() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("hit\n");
    for i in 0..500 {
        text.push_str(if i % 100 == 37 { "1\n" } else { "0\n" });
    }
    write(dir.path(), "hits.csv", &text);
    let out = hkc(
        &[
            "backtest", "--hits", "hits.csv", "--level", "0.99", "--out", "bt.json",
        ],
        dir.path(),
    );
    ok(&out);
    let doc: BacktestDoc =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bt.json")).unwrap())
            .unwrap();
    assert_eq!(doc.levels[0].exceedances, 5);
    assert_eq!(doc.levels[0].uc.p, 1.0);
    assert!(!doc.levels[0].degenerate);
    assert!(String::from_utf8_lossy(&out.stdout).contains("1.00"));
}

#[test]
fn rolling_backtest_runs() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path(), 260);
    let out = hkc(
        &[
            "backtest",
            "--data",
            "sim.csv",
            "--model",
            "model.toml",
            "--level",
            "0.9",
            "--window",
            "200",
            "--horizon",
            "60",
            "--refit-every",
            "30",
            "--out",
            "bt.json",
        ],
        dir.path(),
    );
    ok(&out);
    let doc: BacktestDoc =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bt.json")).unwrap())
            .unwrap();
    assert_eq!(doc.levels[0].days, 60);
    assert_eq!(doc.levels[0].forecasts.len(), 60);
}

#[test]
fn study_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hkc(
        &[
            "study",
            "--replications",
            "2",
            "--sizes",
            "200",
            "--tau0",
            "0.5",
            "--nesting",
            "frank",
            "--out",
            "s.csv",
        ],
        dir.path(),
    ));
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("frank,0.5,200,two-step-closed,"));
}
