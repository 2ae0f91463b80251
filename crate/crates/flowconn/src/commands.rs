use std::fmt::Write as _;

use flowconn_core::curves::{sample_curve, Curve};
use flowconn_core::estimators::{
    recover_christoffel_segment, recover_curvature_loop, verify_theorem, TheoremReport,
};
use flowconn_core::geometry::identity_suite;
use flowconn_core::{Error, ManifoldModel, Matrix};

use crate::config::{ExperimentConfig, RecoveryTarget};
use crate::{report, CliError, EXIT_FAIL, EXIT_PASS};

/// Entries of `|Γ|` at or below this are omitted from the Christoffel table.
pub const CHRISTOFFEL_THRESHOLD: f64 = 1e-12;
/// Central-difference step for the curvature reference of loop recovery.
const CURL_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Christoffel,
    VerifyIdentities,
    Theorem,
    Recover,
    ContourDrift { cross_check: bool },
}

/// What a command printed and how it ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

impl Outcome {
    fn new(pass: bool, stdout: String) -> Self {
        Self {
            code: if pass { EXIT_PASS } else { EXIT_FAIL },
            stdout,
        }
    }
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    match command {
        Command::Christoffel => christoffel(cfg),
        Command::VerifyIdentities => verify_identities(&cfg.model()?, cfg),
        Command::Theorem => theorem(cfg),
        Command::Recover => recover(cfg),
        Command::ContourDrift { cross_check } => contour_drift(cfg, cross_check),
    }
}

fn on_field(field: &'static str) -> impl Fn(Error) -> CliError {
    move |e| CliError::field(field, e.to_string())
}

/// Writes `text` to the configured output, or returns it for standard output.
fn emit(cfg: &ExperimentConfig, text: String, summary: String) -> Result<String, CliError> {
    match cfg.out() {
        Some(path) => {
            std::fs::write(path, text).map_err(|source| CliError::Io {
                path: path.to_owned(),
                source,
            })?;
            Ok(summary)
        }
        None => Ok(text),
    }
}

fn curve(model: &ManifoldModel, cfg: &ExperimentConfig) -> Result<(Curve, String), CliError> {
    let spec = cfg.curve_spec()?;
    let c = sample_curve(model, &spec, cfg.nodes()?).map_err(on_field("curve"))?;
    Ok((c, spec.label()))
}

/// Nonzero `Γ^i_{jk}` at the configured point as `i,j,k,value` (1-based).
pub fn christoffel(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let x = cfg.point(&model)?;
    let gamma = model.christoffel(&x).map_err(on_field("point"))?;
    let mut out = String::from("i,j,k,value\n");
    for (i, j, k, v) in gamma.nonzero(CHRISTOFFEL_THRESHOLD) {
        writeln!(out, "{},{},{},{v:?}", i + 1, j + 1, k + 1).unwrap();
    }
    Ok(Outcome::new(true, out))
}

/// Runs the projector identity suite on `model`; the model is taken
/// separately so callers can substitute shapes the grammar cannot express.
pub fn verify_identities(
    model: &ManifoldModel,
    cfg: &ExperimentConfig,
) -> Result<Outcome, CliError> {
    let tol = cfg.identity_tolerances(model)?;
    let suite = identity_suite(model, cfg.points()?, cfg.seed()?, tol)?;
    let mut out = String::from("check,max_violation,tolerance,pass\n");
    for c in &suite.checks {
        writeln!(
            out,
            "{},{:e},{:e},{}",
            c.name,
            c.max_violation,
            c.tolerance,
            c.passed()
        )
        .unwrap();
    }
    let violations = suite.violations();
    if !violations.is_empty() {
        writeln!(
            out,
            "# worst violations on {} ({} points):",
            suite.manifold, suite.points
        )
        .unwrap();
        for c in violations {
            let at: Vec<String> = c.worst_point.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(
                out,
                "#   {}: {:e} exceeds {:e} at ({})",
                c.name,
                c.max_violation,
                c.tolerance,
                at.join(", ")
            )
            .unwrap();
        }
    }
    Ok(Outcome::new(suite.passed(), out))
}

fn theorem_summary(r: &TheoremReport) -> String {
    let failing = r.entries.iter().filter(|e| !e.pass).count();
    format!(
        "theorem on {} ({}): {} of {} entries pass, max |residual| {:e}\n",
        r.manifold,
        r.mode.name(),
        r.entries.len() - failing,
        r.entries.len(),
        r.max_abs_residual()
    )
}

pub fn theorem(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let (c, label) = curve(&model, cfg)?;
    let settings = cfg.theorem_settings()?;
    let flow = cfg.flow()?;
    let driver = cfg.driver(&model, settings.dt)?;
    let r = verify_theorem(&model, &c, &settings, &flow, &driver)?;
    let text = report::render(&r, &label, cfg)?;
    let stdout = emit(cfg, text, theorem_summary(&r))?;
    Ok(Outcome::new(r.passed(), stdout))
}

/// `d(Γ^i_{jk} dx_k)(e, f)` by central differences along retracted tangent
/// steps.
fn curvature_reference(
    model: &ManifoldModel,
    x: &[f64],
    e: &[f64],
    f: &[f64],
) -> Result<Matrix, Error> {
    let n = model.ambient_dim();
    let along = |dir: &[f64], sign: f64, v: &[f64]| -> Result<Matrix, Error> {
        let moved: Vec<f64> = x
            .iter()
            .zip(dir)
            .map(|(a, d)| a + sign * CURL_STEP * d)
            .collect();
        let y = model.retract(&moved)?.into_inner();
        Ok(model.christoffel(&y)?.contract(v))
    };
    let (ef_p, ef_m) = (along(e, 1.0, f)?, along(e, -1.0, f)?);
    let (fe_p, fe_m) = (along(f, 1.0, e)?, along(f, -1.0, e)?);
    Ok(Matrix::from_fn(n, |i, j| {
        ((ef_p[(i, j)] - ef_m[(i, j)]) - (fe_p[(i, j)] - fe_m[(i, j)])) / (2.0 * CURL_STEP)
    }))
}

/// Convergence table over the ε (segment) or ρ (loop) ladder, one row per
/// scale and index pair.
pub fn recover(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let n = model.ambient_dim();
    let x = cfg.point(&model)?;
    let settings = cfg.theorem_settings()?;
    let flow = cfg.flow()?;
    let driver = cfg.driver(&model, settings.dt)?;
    let segments = cfg.nodes()?;
    let mut out = String::new();
    let mut pass = true;
    let row = |out: &mut String, prefix: &str, est: &Matrix, se: &Matrix, exact: &Matrix| {
        for i in 0..n {
            for j in 0..n {
                let (e, x) = (est[(i, j)], exact[(i, j)]);
                writeln!(
                    out,
                    "{prefix},{},{},{e:?},{:?},{x:?},{:?}",
                    i + 1,
                    j + 1,
                    se[(i, j)],
                    e - x
                )
                .unwrap();
            }
        }
    };
    match cfg.target()? {
        RecoveryTarget::Segment => {
            let v = cfg.direction(&model, &x)?;
            let exact = model
                .christoffel(&x)
                .map_err(on_field("point"))?
                .contract(&v);
            out.push_str("eps,i,j,estimate,std_error,exact,error\n");
            for eps in cfg.eps_ladder()? {
                let est = recover_christoffel_segment(
                    &model, &x, &v, eps, segments, &settings, &flow, &driver,
                )
                .map_err(|e| match e {
                    Error::NotTangent { .. } => CliError::field("direction", e.to_string()),
                    other => other.into(),
                })?;
                pass &= est.report.passed();
                row(
                    &mut out,
                    &format!("{eps:?}"),
                    &est.estimate,
                    &est.std_error,
                    &exact,
                );
            }
        }
        RecoveryTarget::Loop => {
            let basis = model.tangent_basis(&x).map_err(on_field("point"))?;
            if basis.len() < 2 {
                return Err(CliError::field(
                    "manifold",
                    "loop recovery needs a surface of dimension at least 2",
                ));
            }
            let exact = curvature_reference(&model, &x, &basis[0], &basis[1])?;
            out.push_str("radius,area,i,j,estimate,std_error,exact,error\n");
            for radius in cfg.radius_ladder()? {
                let est = recover_curvature_loop(
                    &model, &x, radius, segments, &settings, &flow, &driver,
                )?;
                pass &= est.report.passed();
                row(
                    &mut out,
                    &format!("{radius:?},{:?}", est.area),
                    &est.estimate,
                    &est.std_error,
                    &exact,
                );
            }
        }
    }
    let summary = format!(
        "recovery table written ({})\n",
        if pass {
            "all identities pass"
        } else {
            "failures"
        }
    );
    let stdout = emit(cfg, out, summary)?;
    Ok(Outcome::new(pass, stdout))
}

pub fn contour_drift(cfg: &ExperimentConfig, cross_check: bool) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let (c, _) = curve(&model, cfg)?;
    let case = cfg.contour_case(&model)?;
    let drift = case.evaluate(&model, &c)?;
    let mut out = String::from("case,value,reference,difference\n");
    let (reference, difference) = match drift.reference {
        Some(r) => (format!("{r:?}"), format!("{:?}", drift.value - r)),
        None => (String::new(), String::new()),
    };
    writeln!(
        out,
        "{},{:?},{reference},{difference}",
        case.name(),
        drift.value
    )
    .unwrap();
    let pass = match (cross_check, drift.reference) {
        (true, Some(r)) => (drift.value - r).abs() <= cfg.contour_tol()?,
        _ => true,
    };
    Ok(Outcome::new(pass, out))
}
