use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pointcause::estimate::EstimateError;
use pointcause::Window;
use pointcause_cli::{ingest_patterns, CliError, ScenarioConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pointcause"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, extra: &[&str]) -> std::process::Output {
    bin().arg("run").arg(config).args(extra).output().unwrap()
}

#[test]
fn gaps_become_empty_periods() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "w.csv", "t,x,y\n3,0.5,0.5\n1,0.1,0.1\n1,0.2,0.2\n1,0.3,0.3\n");
    let got = ingest_patterns(&p, Window::unit_square(), None).unwrap();
    let counts: Vec<usize> = got.patterns.iter().map(|p| p.len()).collect();
    assert_eq!(counts, vec![3, 0, 1]);
    assert_eq!(got.patterns[2].timestamp(), 3);
}

#[test]
fn absent_type_gives_empty_series_and_warning() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "w.csv", "t,x,y,type\n1,0.1,0.1,ied\n2,0.2,0.2,ied\n");
    let got = ingest_patterns(&p, Window::unit_square(), Some("saf")).unwrap();
    assert_eq!(got.patterns.len(), 2);
    assert!(got.patterns.iter().all(|p| p.is_empty()));
    assert_eq!(got.quality.warnings.len(), 1);
}

#[test]
fn duplicates_are_kept_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "w.csv", "t,x,y\n1,0.1,0.1\n1,0.1,0.1\n1,0.2,0.1\n");
    let got = ingest_patterns(&p, Window::unit_square(), None).unwrap();
    assert_eq!(got.patterns[0].len(), 3);
    assert_eq!(got.quality.duplicates.len(), 1);
    assert_eq!((got.quality.duplicates[0].row, got.quality.duplicates[0].first_row), (3, 2));
}

#[test]
fn bad_rows_name_their_row() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("t,x,y\n1,0.1,0.1\n2,0.5\n", 3, "expected 3 fields"),
        ("t,x,y\n1,0.1,0.1\n0,0.5,0.5\n", 3, "positive integer"),
        ("t,x,y\n1,1.5,0.25\n", 2, "(1.5, 0.25)"),
        ("t,x\n1,0.1\n", 1, "header"),
    ];
    for (text, row, needle) in cases {
        let p = write(dir.path(), "bad.csv", text);
        let e = ingest_patterns(&p, Window::unit_square(), None).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        match &e {
            CliError::Data { row: r, message, .. } => {
                assert_eq!(*r, row, "{text}");
                assert!(message.contains(needle), "{message}");
            }
            other => panic!("{other}"),
        }
    }
}

fn estimate_config(dir: &Path, data: &str, extra: &str) -> PathBuf {
    let text = format!(
        r#"
mode = "estimate"
[data]
window = [0.0, 0.0, 1.0, 1.0]
treatments = {{ path = "{data}", type = "treatment" }}
outcomes = {{ path = "{data}", type = "outcome" }}
{extra}
[[interventions]]
kind = "homogeneous"
name = "h"
rate = 5.0
[[interventions]]
kind = "homogeneous"
name = "k"
rate = 7.0
[estimator]
windows = [1, 2]
contrasts = [["h", "k"]]
"#
    );
    write(dir, "estimate.toml", &text)
}

#[test]
fn malformed_row_exits_2_with_row_number() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.csv", "t,x,y,type\n1,0.1,0.1,treatment\n2,0.4\n");
    let cfg = estimate_config(dir.path(), "d.csv", "[propensity]\nmodel = \"homogeneous\"\n");
    let out = run(&cfg, &["--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 3"), "{err}");
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "mode = \"simulate\"\nsede = 3\n");
    let out = run(&cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));

    let cfg = write(dir.path(), "c.toml", "mode = \"estimate\"\n");
    let out = run(&cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[data]"));

    let bad = "[estimator]\ncontrasts = [[\"h\", \"nope\"]]\n";
    let text = format!("mode = \"simulate\"\n[[interventions]]\nkind = \"homogeneous\"\nname = \"h\"\nrate = 1.0\n{bad}");
    let e = ScenarioConfig::parse(&text).unwrap_err();
    assert!(e.to_string().contains("estimator.contrasts[0]"), "{e}");
}

#[test]
fn error_classes_map_to_exit_codes() {
    assert_eq!(CliError::from(EstimateError::PositivityViolation { period: 4 }).exit_code(), 3);
    assert_eq!(CliError::Fit("x".into()).exit_code(), 4);
}

#[test]
fn divergent_fit_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = String::from("t,x,y,type\n");
    for t in 1..=20 {
        // no treatment events: the intercept MLE is minus infinity
        rows.push_str(&format!("{t},0.3,0.{},outcome\n", t % 7 + 1));
    }
    write(dir.path(), "d.csv", &rows);
    let cfg = estimate_config(
        dir.path(),
        "d.csv",
        "[propensity]\nmodel = \"fit\"\nresolution = 16\nfeatures = [{ kind = \"intercept\" }]\n",
    );
    let out = run(&cfg, &["--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

fn simulate(dir: &Path, threads: &str) -> PathBuf {
    let cfg = write(
        dir,
        "sim.toml",
        "mode = \"simulate\"\nseed = 9\nrasters = true\n[dgp]\nperiods = 60\nburn_in = 5\n",
    );
    let out_dir = dir.join(format!("sim{threads}"));
    let out = run(&cfg, &["--threads", threads, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out_dir
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "1");
    for f in ["series.csv", "results.csv", "results.json", "manifest.json", "x1.csv", "x2.csv"] {
        assert!(sim.join(f).exists(), "{f}");
    }
    let again = simulate(dir.path(), "4");
    assert_eq!(fs::read(sim.join("results.csv")).unwrap(), fs::read(again.join("results.csv")).unwrap());
    assert_eq!(fs::read(sim.join("series.csv")).unwrap(), fs::read(again.join("series.csv")).unwrap());

    let series = sim.join("series.csv");
    let prop = format!(
        r#"[propensity]
model = "fit"
resolution = 32
features = [
    {{ kind = "intercept" }},
    {{ kind = "covariate", name = "x1" }},
    {{ kind = "covariate", name = "x2" }},
    {{ kind = "lag_decay", source = "outcome", lags = [1], scale = 2.0, amplitude = 1.0 }},
]
covariates = {{ x1 = "{}", x2 = "{}" }}
"#,
        sim.join("x1.csv").display(),
        sim.join("x2.csv").display()
    );
    let cfg = estimate_config(dir.path(), series.to_str().unwrap(), &prop);
    let mut tables = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(format!("est{threads}"));
        let out = run(&cfg, &["--threads", threads, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        tables.push(fs::read_to_string(out_dir.join("results.csv")).unwrap());
    }
    let mut reader = csv::Reader::from_reader(tables[0].as_bytes());
    let headers = reader.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    // 2 interventions, 2 kinds, 2 windows, 1 region, plus 1 contrast per kind and window
    assert_eq!(rows.len(), 12);
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    for r in &rows {
        let est: f64 = r[col("estimate")].parse().unwrap();
        let (lo, hi): (f64, f64) = (r[col("lower")].parse().unwrap(), r[col("upper")].parse().unwrap());
        assert!(est.is_finite() && lo <= est && est <= hi);
    }
    let other: Vec<csv::StringRecord> =
        csv::Reader::from_reader(tables[1].as_bytes()).records().map(|r| r.unwrap()).collect();
    for (a, b) in rows.iter().zip(&other) {
        let (x, y): (f64, f64) = (a[col("estimate")].parse().unwrap(), b[col("estimate")].parse().unwrap());
        assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("est1/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["threads"], 1);
    assert!(manifest["config_toml"].as_str().unwrap().contains("estimate"));
    assert!(manifest["outputs"]["results.csv"].is_string());

    // the saved model reproduces the fit
    let model = dir.path().join("est1/propensity_model.json");
    let file_prop = format!(
        "[propensity]\nmodel = \"file\"\npath = \"{}\"\nresolution = 32\ncovariates = {{ x1 = \"{}\", x2 = \"{}\" }}\n",
        model.display(),
        sim.join("x1.csv").display(),
        sim.join("x2.csv").display()
    );
    let cfg = estimate_config(dir.path(), series.to_str().unwrap(), &file_prop);
    let out_dir = dir.path().join("est-file");
    let out = run(&cfg, &["--threads", "2", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(out_dir.join("results.csv")).unwrap(), tables[0]);
}

#[test]
fn exemplar_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        ScenarioConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert_eq!(n, 5);
}
