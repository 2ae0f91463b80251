use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::process::{Command, Output};

use flowconn::commands::{self, Command as Cmd};
use flowconn::{ExperimentConfig, EXIT_ERROR, EXIT_FAIL, EXIT_PASS};
use flowconn_core::geometry::{Shape, Sphere};
use flowconn_core::ManifoldModel;
use rand::RngCore;
use serde_json::Value;

fn flowconn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowconn"))
        .args(args)
        .output()
        .expect("run flowconn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn christoffel_on_the_sphere() {
    let o = flowconn(&[
        "christoffel",
        "--manifold",
        "sphere:n=3",
        "--point",
        "1,0,0",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_PASS));
    let text = stdout(&o);
    assert!(text.starts_with("i,j,k,value\n"));
    assert!(text.lines().any(|l| l == "1,2,2,1.0"), "{text}");
    assert!(text.lines().any(|l| l == "2,1,2,-1.0"), "{text}");
}

#[test]
fn christoffel_on_the_plane_is_empty() {
    let o = flowconn(&["christoffel", "--manifold", "plane:n=3,k=2"]);
    assert_eq!(o.status.code(), Some(EXIT_PASS));
    assert_eq!(stdout(&o), "i,j,k,value\n");
}

#[test]
fn malformed_point_names_the_field() {
    let o = flowconn(&["christoffel", "--point", "1,zero,0"]);
    assert_eq!(o.status.code(), Some(EXIT_ERROR));
    assert!(stderr(&o).contains("`point`"), "{}", stderr(&o));

    let off = flowconn(&["christoffel", "--point", "2,0,0"]);
    assert_eq!(off.status.code(), Some(EXIT_ERROR));
    assert!(stderr(&off).contains("`point`"));
}

#[test]
fn identities_pass_analytic_and_fd() {
    let o = flowconn(&["verify-identities", "--manifold", "sphere:n=3"]);
    assert_eq!(o.status.code(), Some(EXIT_PASS), "{}", stdout(&o));
    for row in csv_rows(&stdout(&o)) {
        assert!(row[1].parse::<f64>().unwrap() < 1e-10, "{row:?}");
    }
    let fd = flowconn(&[
        "verify-identities",
        "--manifold",
        "ellipsoid:a=1,b=2,c=3",
        "--set",
        "derivative=fd",
        "--tol",
        "derivative=1e-5",
    ]);
    assert_eq!(fd.status.code(), Some(EXIT_PASS), "{}", stdout(&fd));
}

/// Unit sphere whose projector picks up a symmetric off-diagonal error.
struct Corrupted(Sphere);

impl Shape for Corrupted {
    fn ambient_dim(&self) -> usize {
        3
    }
    fn intrinsic_dim(&self) -> usize {
        2
    }
    fn label(&self) -> String {
        "corrupted-sphere".into()
    }
    fn projection(&self, x: &[f64], out: &mut [f64]) {
        self.0.projection(x, out);
        out[1] += 1e-3;
        out[3] += 1e-3;
    }
    fn distance(&self, x: &[f64]) -> f64 {
        self.0.distance(x)
    }
    fn retract(&self, x: &[f64], out: &mut [f64]) -> flowconn_core::Result<()> {
        self.0.retract(x, out)
    }
    fn capture_radius(&self) -> f64 {
        self.0.capture_radius()
    }
    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        self.0.sample_point(rng, out)
    }
}

#[test]
fn corrupted_projector_fails_identities() {
    let model = ManifoldModel::new(Box::new(Corrupted(Sphere::new(3).unwrap()))).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.set("points", "50").unwrap();
    let outcome = commands::verify_identities(&model, &cfg).unwrap();
    assert_eq!(outcome.code, EXIT_FAIL);
    assert!(
        outcome.stdout.contains("worst violations"),
        "{}",
        outcome.stdout
    );
    assert!(outcome.stdout.contains("idempotence"));
}

#[test]
fn oracle_theorem_report() {
    let o = flowconn(&["theorem", "--mode", "oracle", "--nodes", "400"]);
    assert_eq!(o.status.code(), Some(EXIT_PASS));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["mode"], "oracle");
    assert_eq!(report["N"], 400);
    assert_eq!(report["config"]["manifold"], "sphere:n=3");
    assert_eq!(report["config"]["h"], "auto");
    let entries = report["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 9);
    for e in entries {
        assert!(e["residual"].as_f64().unwrap().abs() < 1e-10);
        assert_eq!(e["pass"], true);
    }
    let e12 = entries.iter().find(|e| e["i"] == 1 && e["j"] == 2).unwrap();
    assert!((e12["lhs"].as_f64().unwrap() - FRAC_PI_2).abs() < 1e-4);
    assert!((e12["components"]["dpsi_ij"].as_f64().unwrap() + FRAC_PI_4).abs() < 1e-4);
}

#[test]
fn csv_report_columns_and_config() {
    let o = flowconn(&["theorem", "--format", "csv", "--nodes", "50"]);
    assert_eq!(o.status.code(), Some(EXIT_PASS));
    let text = stdout(&o);
    let comments: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    assert_eq!(comments.len(), ExperimentConfig::keys().count());
    assert!(comments.contains(&"# nodes = 50"));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, flowconn::report::CSV_COLUMNS.join(","));
}

#[test]
fn underpowered_monte_carlo_is_well_formed() {
    let o = flowconn(&[
        "theorem",
        "--mode",
        "monte-carlo",
        "--paths",
        "10",
        "--nodes",
        "50",
    ]);
    let code = o.status.code().unwrap();
    assert!(code == EXIT_PASS || code == EXIT_FAIL, "{}", stderr(&o));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["paths"], 10);
    for e in report["entries"].as_array().unwrap() {
        let se = e["rhs_se"].as_f64().unwrap();
        assert!(se.is_finite() && se >= 0.0);
        assert_eq!(
            e["pass"].as_bool().unwrap(),
            e["residual"].as_f64().unwrap().abs()
                <= 3.0 * se + report["allowance"].as_f64().unwrap()
        );
    }
    assert_eq!(code == EXIT_PASS, report["passed"].as_bool().unwrap());
}

#[test]
fn odd_path_count_is_a_config_error() {
    let o = flowconn(&[
        "theorem",
        "--mode",
        "monte-carlo",
        "--paths",
        "11",
        "--nodes",
        "20",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_ERROR));
}

#[test]
fn report_written_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let o = flowconn(&[
        "theorem",
        "--format",
        "csv",
        "--nodes",
        "20",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_PASS));
    assert!(stdout(&o).contains("9 of 9 entries pass"), "{}", stdout(&o));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("i,j,lhs,rhs"));
}

#[test]
fn segment_recovery_converges_to_one() {
    let o = flowconn(&[
        "recover",
        "--point",
        "1,0,0",
        "--direction",
        "0,1,0",
        "--eps",
        "0.04,0.02,0.01",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_PASS));
    let errors: Vec<f64> = csv_rows(&stdout(&o))
        .iter()
        .filter(|r| r[1] == "1" && r[2] == "2")
        .map(|r| (r[3].parse::<f64>().unwrap() - 1.0).abs())
        .collect();
    assert_eq!(errors.len(), 3);
    assert!(
        errors[0] > errors[1] && errors[1] > errors[2] && errors[2] < 1e-4,
        "{errors:?}"
    );
}

#[test]
fn plane_recovery_is_zero() {
    let o = flowconn(&[
        "recover",
        "--manifold",
        "plane:n=3,k=2",
        "--eps",
        "0.04,0.02",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_PASS));
    for r in csv_rows(&stdout(&o)) {
        assert_eq!(r[3].parse::<f64>().unwrap(), 0.0, "{r:?}");
    }
}

#[test]
fn loop_recovery_table() {
    let o = flowconn(&[
        "recover", "--target", "loop", "--point", "0,0,1", "--radius", "0.1,0.05", "--nodes", "100",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_PASS), "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 2 * 9);
    for r in &rows {
        let (est, exact) = (r[4].parse::<f64>().unwrap(), r[6].parse::<f64>().unwrap());
        assert!((est - exact).abs() < 1e-2 * exact.abs().max(1.0), "{r:?}");
    }
}

#[test]
fn non_tangent_direction_is_rejected() {
    let o = flowconn(&["recover", "--point", "1,0,0", "--direction", "1,0,0"]);
    assert_eq!(o.status.code(), Some(EXIT_ERROR));
    assert!(stderr(&o).contains("tangent"), "{}", stderr(&o));
}

#[test]
fn contour_drift_cases() {
    let o = flowconn(&[
        "contour-drift",
        "--case",
        "specialization",
        "--i",
        "1",
        "--j",
        "2",
        "--cross-check",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_PASS));
    let row = &csv_rows(&stdout(&o))[0];
    assert!(
        (row[1].parse::<f64>().unwrap() + FRAC_PI_4).abs() < 1e-4,
        "{row:?}"
    );

    let c = flowconn(&["contour-drift", "--case", "constant", "--cross-check"]);
    assert_eq!(c.status.code(), Some(EXIT_PASS));
    assert_eq!(
        csv_rows(&stdout(&c))[0][1].parse::<f64>().unwrap().abs(),
        0.0
    );

    let e = flowconn(&[
        "contour-drift",
        "--case",
        "exact-form",
        "--curve",
        "great-circle",
        "--cross-check",
    ]);
    assert_eq!(e.status.code(), Some(EXIT_PASS));
    assert!(csv_rows(&stdout(&e))[0][1].parse::<f64>().unwrap().abs() < 1e-12);
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.cfg");
    std::fs::write(
        &path,
        "# experiment\nnodes = 30\nformat = csv\nmanifold = torus:R=2,r=1\n",
    )
    .unwrap();
    let o = flowconn(&[
        "theorem",
        "--config",
        path.to_str().unwrap(),
        "--manifold",
        "sphere:n=3",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_PASS), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("# nodes = 30"));
    assert!(text.contains("# manifold = sphere:n=3"));

    std::fs::write(&path, "nodes = 30\nnoise = 2\n").unwrap();
    let bad = flowconn(&["theorem", "--config", path.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(EXIT_ERROR));
    assert!(stderr(&bad).contains("noise"), "{}", stderr(&bad));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(
        flowconn(&["theorem", "--bogus"]).status.code(),
        Some(EXIT_ERROR)
    );
    assert_eq!(
        flowconn(&["theorem", "--mode", "guess"]).status.code(),
        Some(EXIT_ERROR)
    );
    assert_eq!(
        flowconn(&["theorem", "--manifold", "cube:n=3"])
            .status
            .code(),
        Some(EXIT_ERROR)
    );
    let threads = Command::new(env!("CARGO_BIN_EXE_flowconn"))
        .env("FLOWCONN_THREADS", "zero")
        .args(["christoffel"])
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(EXIT_ERROR));
}

#[test]
fn run_dispatches_through_the_library() {
    let mut cfg = ExperimentConfig::default();
    cfg.set("nodes", "40").unwrap();
    let out = commands::run(Cmd::Theorem, &cfg).unwrap();
    assert_eq!(out.code, EXIT_PASS);
    let again = commands::run(Cmd::Theorem, &cfg).unwrap();
    assert_eq!(out, again);
}
