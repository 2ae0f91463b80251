//! Estimators built on the flow: the area functional
//! `Ψ^{ij}(t, γ) = E ∫_{Y_t(γ)} x^i dx^j`, its time derivative at zero, the
//! small-time drift `q`, and the connection identity
//!
//! ```text
//! ∫_γ Γ^i_{jk} dx_k = ∂_tΨ^{ij} − ∂_tΨ^{ji} − 2∫_γ(q^i dx^j − q^j dx^i)
//!                     − [x^i q^j]_a^b + [x^j q^i]_a^b
//! ```
//!
//! checked either with the deterministic derivative oracle or with Monte
//! Carlo estimates.

mod contour;
mod mc;
mod recovery;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::curves::{accumulate_xdx, one_form_integral, ConnectionRow, Curve};
use crate::flow::{BrownianDriver, FlowConfig, Stepper};
use crate::geometry::ManifoldModel;
use crate::linalg::Matrix;
use crate::{Error, Result, MAX_DIM};

pub use contour::{
    contour_ito_drift, ConstantField, ConstantMatrix, ContourCase, ContourDrift, CoordinateForm,
    DiffusionField, DriftField, ModelDrift, ModelProjection, PositionField, TimeVectorField,
};
pub use recovery::{
    recover_christoffel_segment, recover_curvature_loop, LoopEstimate, SegmentEstimate,
};

/// Default bias allowance constant `C` in `C (Δt + h + N⁻²)`.
pub const DEFAULT_BIAS_CONSTANT: f64 = 10.0;
/// Default residual tolerance in oracle mode.
pub const DEFAULT_ORACLE_TOL: f64 = 1e-10;

/// How many paths to draw and which variance reductions to apply on top of
/// the driver's antithetic pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sampling {
    /// Individual paths; an antithetic pair counts as two.
    pub paths: usize,
    /// Regress outputs on mean-zero functionals of the driving noise.
    pub control_variates: bool,
    /// Two-level Richardson extrapolation of time derivatives.
    pub richardson: bool,
}

impl Sampling {
    pub fn new(paths: usize) -> Self {
        Self {
            paths,
            control_variates: false,
            richardson: false,
        }
    }

    pub fn with_control_variates(self, on: bool) -> Self {
        Self {
            control_variates: on,
            ..self
        }
    }

    pub fn with_richardson(self, on: bool) -> Self {
        Self {
            richardson: on,
            ..self
        }
    }
}

impl From<usize> for Sampling {
    fn from(paths: usize) -> Self {
        Self::new(paths)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiEstimate {
    pub mean: Matrix,
    pub std_error: Matrix,
    pub paths: usize,
    pub t: f64,
}

/// Estimate of `∂_tΨ(0, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiDerivative {
    pub mean: Matrix,
    pub std_error: Matrix,
    /// Standard error of `∂_tΨ^{ij} − ∂_tΨ^{ji}`, accounting for correlation.
    pub antisymmetric_se: Matrix,
    pub paths: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub paths: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Oracle,
    MonteCarlo,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Oracle => "oracle",
            Mode::MonteCarlo => "monte-carlo",
        }
    }
}

impl core::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Mode::Oracle),
            "monte-carlo" => Ok(Mode::MonteCarlo),
            other => Err(Error::invalid(format!("unknown mode `{other}`"))),
        }
    }
}

/// Where the drift `q` in the identity comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QSource {
    /// `q = r` from the geometry.
    #[default]
    Analytic,
    /// `(Y_Δt(x) − x) / Δt` along the same paths as `Ψ`.
    MonteCarlo,
}

impl QSource {
    pub fn name(self) -> &'static str {
        match self {
            QSource::Analytic => "analytic",
            QSource::MonteCarlo => "monte-carlo",
        }
    }
}

impl core::str::FromStr for QSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(QSource::Analytic),
            "monte-carlo" => Ok(QSource::MonteCarlo),
            other => Err(Error::invalid(format!("unknown q source `{other}`"))),
        }
    }
}

/// Values of `q` supplied to [`theorem_rhs`].
#[derive(Debug, Clone, PartialEq)]
pub enum QField {
    Analytic,
    /// Flat `q` values at the curve's nodes and quadrature midpoints.
    Sampled {
        nodes: Vec<f64>,
        midpoints: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremSettings {
    pub mode: Mode,
    pub dt: f64,
    pub sampling: Sampling,
    pub q_source: QSource,
    pub bias_constant: f64,
    pub oracle_tol: f64,
}

impl Default for TheoremSettings {
    fn default() -> Self {
        Self {
            mode: Mode::Oracle,
            dt: 1e-3,
            sampling: Sampling::new(200_000),
            q_source: QSource::Analytic,
            bias_constant: DEFAULT_BIAS_CONSTANT,
            oracle_tol: DEFAULT_ORACLE_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Components {
    pub dpsi_ij: f64,
    pub dpsi_ji: f64,
    /// `∫_γ (q^i dx^j − q^j dx^i)`.
    pub q_circulation: f64,
    /// `γ^i(1) q^j(γ(1)) − γ^i(0) q^j(γ(0))`.
    pub boundary_ij: f64,
    pub boundary_ji: f64,
}

/// Assembled right-hand side for one index pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsEntry {
    pub i: usize,
    pub j: usize,
    pub rhs: f64,
    pub components: Components,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremEntry {
    pub i: usize,
    pub j: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub components: Components,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub manifold: String,
    pub mode: Mode,
    pub q_source: QSource,
    pub paths: usize,
    pub dt: f64,
    pub h: f64,
    pub segments: usize,
    /// Allowance added to `3·SE` in Monte Carlo mode, or the residual
    /// tolerance in oracle mode.
    pub allowance: f64,
    /// Row-major over `(i, j)`.
    pub entries: Vec<TheoremEntry>,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, i: usize, j: usize) -> &TheoremEntry {
        let n = libm::sqrt(self.entries.len() as f64) as usize;
        &self.entries[i * n + j]
    }

    pub fn rhs_matrix(&self) -> Matrix {
        let n = libm::sqrt(self.entries.len() as f64) as usize;
        Matrix::from_fn(n, |i, j| self.entries[i * n + j].rhs)
    }

    pub fn rhs_se_matrix(&self) -> Matrix {
        let n = libm::sqrt(self.entries.len() as f64) as usize;
        Matrix::from_fn(n, |i, j| self.entries[i * n + j].rhs_se)
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.entries
            .iter()
            .fold(0.0, |m, e| m.max(e.residual.abs()))
    }
}

fn check_curve(model: &ManifoldModel, c: &Curve) -> Result<()> {
    if c.dim() != model.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.ambient_dim(),
            found: c.dim(),
        });
    }
    for p in 0..c.node_count() {
        model.check_on_manifold(c.node(p))?;
    }
    Ok(())
}

fn check_dt(dt: f64, cfg: &FlowConfig) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("Δt must be positive, got {dt}")));
    }
    if dt < 10.0 * cfg.h * (1.0 - 1e-9) {
        return Err(Error::invalid(format!(
            "Δt = {dt} must be at least 10 flow steps (h = {})",
            cfg.h
        )));
    }
    Ok(())
}

/// Time checkpoints `[Δt/2, Δt]` or `[Δt]`, in steps.
fn derivative_checkpoints(stepper: &Stepper<'_>, dt: f64, richardson: bool) -> Result<Vec<usize>> {
    let full = stepper.steps_for(dt)?;
    if richardson {
        let half = stepper.steps_for(0.5 * dt)?;
        Ok(vec![half, full])
    } else {
        Ok(vec![full])
    }
}

/// Combines forward differences taken at the checkpoints: plain, or
/// `2 D(Δt/2) − D(Δt)`.
fn difference_quotient(values: &[f64], base: f64, times: &[f64]) -> f64 {
    match (values, times) {
        ([v], [t]) => (v - base) / t,
        ([a, b], [ta, tb]) => 2.0 * (a - base) / ta - (b - base) / tb,
        _ => unreachable!("one or two checkpoints"),
    }
}

/// `Ψ(t, γ)` by Monte Carlo; exact line integrals with zero error at `t = 0`.
pub fn estimate_psi(
    model: &ManifoldModel,
    c: &Curve,
    t: f64,
    sampling: impl Into<Sampling>,
    cfg: &FlowConfig,
    driver: &BrownianDriver,
) -> Result<PsiEstimate> {
    let sampling = sampling.into();
    check_curve(model, c)?;
    let n = model.ambient_dim();
    let stepper = Stepper::new(model, cfg, driver)?;
    let steps = stepper.steps_for(t)?;
    if steps == 0 {
        let mut mean = Matrix::zeros(n);
        accumulate_xdx(n, c.nodes(), mean.as_mut_slice());
        return Ok(PsiEstimate {
            mean,
            std_error: Matrix::zeros(n),
            paths: sampling.paths,
            t,
        });
    }
    let summary = mc::run(
        &stepper,
        &sampling,
        c.nodes(),
        &[steps],
        n * n,
        |states, row| {
            accumulate_xdx(n, &states[0], row);
            Ok(())
        },
    )?;
    Ok(PsiEstimate {
        mean: Matrix::from_row_major(n, summary.mean),
        std_error: Matrix::from_row_major(n, summary.se),
        paths: sampling.paths,
        t,
    })
}

/// Forward difference `(Ψ(Δt) − Ψ(0)) / Δt` anchored at the exact `Ψ(0)`.
pub fn estimate_psi_derivative(
    model: &ManifoldModel,
    c: &Curve,
    dt: f64,
    sampling: impl Into<Sampling>,
    cfg: &FlowConfig,
    driver: &BrownianDriver,
) -> Result<PsiDerivative> {
    let sampling = sampling.into();
    check_curve(model, c)?;
    check_dt(dt, cfg)?;
    let n = model.ambient_dim();
    let stepper = Stepper::new(model, cfg, driver)?;
    let checkpoints = derivative_checkpoints(&stepper, dt, sampling.richardson)?;
    let times: Vec<f64> = checkpoints.iter().map(|&s| s as f64 * cfg.h).collect();
    let mut psi0 = vec![0.0; n * n];
    accumulate_xdx(n, c.nodes(), &mut psi0);

    let summary = mc::run(
        &stepper,
        &sampling,
        c.nodes(),
        &checkpoints,
        2 * n * n,
        |states, row| {
            let mut levels = [[0.0; MAX_DIM * MAX_DIM]; 2];
            for (level, state) in levels.iter_mut().zip(states) {
                accumulate_xdx(n, state, &mut level[..n * n]);
            }
            for e in 0..n * n {
                let vals: Vec<f64> = levels[..states.len()].iter().map(|l| l[e]).collect();
                row[e] = difference_quotient(&vals, psi0[e], &times);
            }
            for i in 0..n {
                for j in 0..n {
                    row[n * n + i * n + j] = row[i * n + j] - row[j * n + i];
                }
            }
            Ok(())
        },
    )?;
    Ok(PsiDerivative {
        mean: Matrix::from_row_major(n, summary.mean[..n * n].to_vec()),
        std_error: Matrix::from_row_major(n, summary.se[..n * n].to_vec()),
        antisymmetric_se: Matrix::from_row_major(n, summary.se[n * n..].to_vec()),
        paths: sampling.paths,
        dt,
    })
}

/// Deterministic `∂_tΨ^{ij}(0, γ)`:
/// `∫(r^i dx_j − r^j dx_i) + [x^i r^j]_a^b + ∫ S^i_{jk} dx_k`.
pub fn oracle_psi_derivative(model: &ManifoldModel, c: &Curve) -> Result<Matrix> {
    check_curve(model, c)?;
    let n = model.ambient_dim();
    let mut out = Matrix::zeros(n);
    let mut r = [0.0; MAX_DIM];
    let mut s = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
    let mut dx = [0.0; MAX_DIM];
    for p in 0..c.segments() {
        let mid = c.midpoint(p);
        model.fill_drift(mid, &mut r[..n]);
        model.fill_s(mid, &mut s[..n * n * n]);
        let (a, b) = (c.node(p), c.node(p + 1));
        for k in 0..n {
            dx[k] = b[k] - a[k];
        }
        for i in 0..n {
            for j in 0..n {
                let s_term: f64 = (0..n).map(|k| s[(i * n + j) * n + k] * dx[k]).sum();
                out[(i, j)] += r[i] * dx[j] - r[j] * dx[i] + s_term;
            }
        }
    }
    let mut ra = [0.0; MAX_DIM];
    let mut rb = [0.0; MAX_DIM];
    model.fill_drift(c.start(), &mut ra[..n]);
    model.fill_drift(c.end(), &mut rb[..n]);
    let (a, b) = (c.start(), c.end());
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] += b[i] * rb[j] - a[i] * ra[j];
        }
    }
    if out.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("derivative oracle"));
    }
    Ok(out)
}

/// `(E Y_Δt(x) − x) / Δt`.
pub fn estimate_q(
    model: &ManifoldModel,
    x: &[f64],
    dt: f64,
    sampling: impl Into<Sampling>,
    cfg: &FlowConfig,
    driver: &BrownianDriver,
) -> Result<QEstimate> {
    let sampling = sampling.into();
    model.check_on_manifold(x)?;
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("Δt must be positive, got {dt}")));
    }
    let n = model.ambient_dim();
    let stepper = Stepper::new(model, cfg, driver)?;
    let checkpoints = derivative_checkpoints(&stepper, dt, sampling.richardson)?;
    let times: Vec<f64> = checkpoints.iter().map(|&s| s as f64 * cfg.h).collect();
    let summary = mc::run(&stepper, &sampling, x, &checkpoints, n, |states, row| {
        for k in 0..n {
            let vals: Vec<f64> = states.iter().map(|s| s[k]).collect();
            row[k] = difference_quotient(&vals, x[k], &times);
        }
        Ok(())
    })?;
    Ok(QEstimate {
        mean: summary.mean,
        std_error: summary.se,
        paths: sampling.paths,
        dt,
    })
}

/// `q` evaluated at nodes and midpoints.
struct QValues {
    nodes: Vec<f64>,
    midpoints: Vec<f64>,
}

fn analytic_q(model: &ManifoldModel, c: &Curve) -> QValues {
    let n = c.dim();
    let mut nodes = vec![0.0; c.nodes().len()];
    let mut midpoints = vec![0.0; c.midpoints().len()];
    for (x, out) in c.nodes().chunks_exact(n).zip(nodes.chunks_exact_mut(n)) {
        model.fill_drift(x, out);
    }
    for (x, out) in c
        .midpoints()
        .chunks_exact(n)
        .zip(midpoints.chunks_exact_mut(n))
    {
        model.fill_drift(x, out);
    }
    QValues { nodes, midpoints }
}

/// Circulation `∫(q^i dx^j − q^j dx^i)` and boundary `[x^i q^j]_a^b`, both
/// written as `n × n` row-major buffers.
fn q_terms(
    n: usize,
    nodes: &[f64],
    q_nodes: &[f64],
    q_mids: &[f64],
    circ: &mut [f64],
    bdry: &mut [f64],
) {
    circ.iter_mut().for_each(|v| *v = 0.0);
    let count = nodes.len() / n;
    for p in 0..count - 1 {
        let a = &nodes[p * n..(p + 1) * n];
        let b = &nodes[(p + 1) * n..(p + 2) * n];
        let q = &q_mids[p * n..(p + 1) * n];
        for i in 0..n {
            for j in 0..n {
                circ[i * n + j] += q[i] * (b[j] - a[j]) - q[j] * (b[i] - a[i]);
            }
        }
    }
    let (a, b) = (&nodes[..n], &nodes[(count - 1) * n..]);
    let (qa, qb) = (&q_nodes[..n], &q_nodes[(count - 1) * n..]);
    for i in 0..n {
        for j in 0..n {
            bdry[i * n + j] = b[i] * qb[j] - a[i] * qa[j];
        }
    }
}

/// Right-hand side for the pair `i < j`; the `(j, i)` entry is its exact
/// negation.
fn assemble(
    n: usize,
    i: usize,
    j: usize,
    dpsi: &[f64],
    circ: &[f64],
    bdry: &[f64],
) -> (f64, Components) {
    let c = Components {
        dpsi_ij: dpsi[i * n + j],
        dpsi_ji: dpsi[j * n + i],
        q_circulation: circ[i * n + j],
        boundary_ij: bdry[i * n + j],
        boundary_ji: bdry[j * n + i],
    };
    let rhs = (c.dpsi_ij - c.dpsi_ji) - 2.0 * c.q_circulation - (c.boundary_ij - c.boundary_ji);
    (rhs, c)
}

fn mirrored(c: &Components, circ_ji: f64) -> Components {
    Components {
        dpsi_ij: c.dpsi_ji,
        dpsi_ji: c.dpsi_ij,
        q_circulation: circ_ji,
        boundary_ij: c.boundary_ji,
        boundary_ji: c.boundary_ij,
    }
}

/// Assembles `∂_tΨ^{ij} − ∂_tΨ^{ji} − 2∫(q^i dx^j − q^j dx^i) − [x^i q^j]_a^b + [x^j q^i]_a^b`
/// for every ordered pair, row-major.
pub fn theorem_rhs(
    model: &ManifoldModel,
    c: &Curve,
    dpsi: &Matrix,
    q: &QField,
) -> Result<Vec<RhsEntry>> {
    check_curve(model, c)?;
    let n = model.ambient_dim();
    if dpsi.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: dpsi.dim(),
        });
    }
    let values = match q {
        QField::Analytic => analytic_q(model, c),
        QField::Sampled { nodes, midpoints } => {
            if nodes.len() != c.nodes().len() || midpoints.len() != c.midpoints().len() {
                return Err(Error::invalid("sampled q does not match the curve layout"));
            }
            QValues {
                nodes: nodes.clone(),
                midpoints: midpoints.clone(),
            }
        }
    };
    let mut circ = vec![0.0; n * n];
    let mut bdry = vec![0.0; n * n];
    q_terms(
        n,
        c.nodes(),
        &values.nodes,
        &values.midpoints,
        &mut circ,
        &mut bdry,
    );
    let mut entries: Vec<RhsEntry> = (0..n * n)
        .map(|e| RhsEntry {
            i: e / n,
            j: e % n,
            rhs: 0.0,
            components: Components::default(),
        })
        .collect();
    for i in 0..n {
        let (_, diag) = assemble(n, i, i, dpsi.as_slice(), &circ, &bdry);
        entries[i * n + i].components = diag;
        for j in i + 1..n {
            let (rhs, comp) = assemble(n, i, j, dpsi.as_slice(), &circ, &bdry);
            entries[i * n + j].rhs = rhs;
            entries[i * n + j].components = comp;
            entries[j * n + i].rhs = -rhs;
            entries[j * n + i].components = mirrored(&comp, circ[j * n + i]);
        }
    }
    Ok(entries)
}

/// `∫_γ Γ^i_{jk} dx_k` for every pair, row-major.
pub fn connection_integrals(model: &ManifoldModel, c: &Curve) -> Result<Matrix> {
    check_curve(model, c)?;
    let n = model.ambient_dim();
    let mut out = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = one_form_integral(c, &ConnectionRow::new(model, i, j)?)?;
        }
    }
    Ok(out)
}

/// Compares `∫_γ Γ^i_{jk} dx_k` with the assembled right-hand side.
///
/// Oracle mode uses [`oracle_psi_derivative`] and analytic `q`; an entry
/// passes when `|residual| ≤ oracle_tol`. Monte Carlo mode estimates every
/// derivative (and `q` when requested) on shared paths; an entry passes when
/// `|residual| ≤ 3·SE + C (Δt + h + N⁻²)`.
pub fn verify_theorem(
    model: &ManifoldModel,
    c: &Curve,
    settings: &TheoremSettings,
    cfg: &FlowConfig,
    driver: &BrownianDriver,
) -> Result<TheoremReport> {
    check_curve(model, c)?;
    let n = model.ambient_dim();
    let lhs = connection_integrals(model, c)?;
    let segments = c.segments();
    let (rhs, rhs_se, allowance, q_source) = match settings.mode {
        Mode::Oracle => {
            let dpsi = oracle_psi_derivative(model, c)?;
            let rhs = theorem_rhs(model, c, &dpsi, &QField::Analytic)?;
            (
                rhs,
                vec![0.0; n * n],
                settings.oracle_tol,
                QSource::Analytic,
            )
        }
        Mode::MonteCarlo => {
            let (rhs, se) = monte_carlo_rhs(model, c, settings, cfg, driver)?;
            let allowance =
                settings.bias_constant * (settings.dt + cfg.h + 1.0 / (segments * segments) as f64);
            (rhs, se, allowance, settings.q_source)
        }
    };
    let entries = rhs
        .iter()
        .zip(&rhs_se)
        .map(|(r, &se)| {
            let l = lhs[(r.i, r.j)];
            let residual = l - r.rhs;
            let band = match settings.mode {
                Mode::Oracle => allowance,
                Mode::MonteCarlo => 3.0 * se + allowance,
            };
            TheoremEntry {
                i: r.i,
                j: r.j,
                lhs: l,
                rhs: r.rhs,
                rhs_se: se,
                components: r.components,
                residual,
                pass: residual.abs() <= band,
            }
        })
        .collect();
    Ok(TheoremReport {
        manifold: model.label(),
        mode: settings.mode,
        q_source,
        paths: match settings.mode {
            Mode::Oracle => 0,
            Mode::MonteCarlo => settings.sampling.paths,
        },
        dt: settings.dt,
        h: cfg.h,
        segments,
        allowance,
        entries,
    })
}

/// Per-unit outputs: `∂_tΨ` (`n²`), then for every pair `i ≤ j` the
/// right-hand side and the `q` circulation and boundary terms.
fn monte_carlo_rhs(
    model: &ManifoldModel,
    c: &Curve,
    settings: &TheoremSettings,
    cfg: &FlowConfig,
    driver: &BrownianDriver,
) -> Result<(Vec<RhsEntry>, Vec<f64>)> {
    check_dt(settings.dt, cfg)?;
    let n = model.ambient_dim();
    let stepper = Stepper::new(model, cfg, driver)?;
    let sampling = settings.sampling;
    let checkpoints = derivative_checkpoints(&stepper, settings.dt, sampling.richardson)?;
    let times: Vec<f64> = checkpoints.iter().map(|&s| s as f64 * cfg.h).collect();
    let sampled_q = settings.q_source == QSource::MonteCarlo;

    let node_len = c.nodes().len();
    let mut cloud = c.nodes().to_vec();
    if sampled_q {
        cloud.extend_from_slice(c.midpoints());
    }
    let mut psi0 = vec![0.0; n * n];
    accumulate_xdx(n, c.nodes(), &mut psi0);
    let analytic = analytic_q(model, c);
    let mut circ0 = vec![0.0; n * n];
    let mut bdry0 = vec![0.0; n * n];
    q_terms(
        n,
        c.nodes(),
        &analytic.nodes,
        &analytic.midpoints,
        &mut circ0,
        &mut bdry0,
    );

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let width = n * n + 4 * pairs.len();
    let origin = cloud.clone();
    let summary = mc::run(
        &stepper,
        &sampling,
        &cloud,
        &checkpoints,
        width,
        |states, row| {
            let mut levels = [[0.0; MAX_DIM * MAX_DIM]; 2];
            for (level, state) in levels.iter_mut().zip(states) {
                accumulate_xdx(n, &state[..node_len], &mut level[..n * n]);
            }
            let mut vals = [0.0; 2];
            for e in 0..n * n {
                for (v, l) in vals.iter_mut().zip(&levels[..states.len()]) {
                    *v = l[e];
                }
                row[e] = difference_quotient(&vals[..states.len()], psi0[e], &times);
            }
            let mut circ_buf = [0.0; MAX_DIM * MAX_DIM];
            let mut bdry_buf = [0.0; MAX_DIM * MAX_DIM];
            let (circ, bdry): (&[f64], &[f64]) = if sampled_q {
                let mut q = vec![0.0; origin.len()];
                for (idx, qv) in q.iter_mut().enumerate() {
                    for (v, s) in vals.iter_mut().zip(states) {
                        *v = s[idx];
                    }
                    *qv = difference_quotient(&vals[..states.len()], origin[idx], &times);
                }
                let (qn, qm) = q.split_at(node_len);
                q_terms(
                    n,
                    c.nodes(),
                    qn,
                    qm,
                    &mut circ_buf[..n * n],
                    &mut bdry_buf[..n * n],
                );
                (&circ_buf[..n * n], &bdry_buf[..n * n])
            } else {
                (&circ0, &bdry0)
            };
            let (dpsi, rest) = row.split_at_mut(n * n);
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let (rhs, comp) = assemble(n, i, j, dpsi, circ, bdry);
                rest[4 * p] = rhs;
                rest[4 * p + 1] = comp.q_circulation;
                rest[4 * p + 2] = comp.boundary_ij;
                rest[4 * p + 3] = comp.boundary_ji;
            }
            Ok(())
        },
    )?;

    let dpsi = &summary.mean[..n * n];
    let mut entries: Vec<RhsEntry> = (0..n * n)
        .map(|e| RhsEntry {
            i: e / n,
            j: e % n,
            rhs: 0.0,
            components: Components::default(),
        })
        .collect();
    let mut se = vec![0.0; n * n];
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let base = n * n + 4 * p;
        let m = &summary.mean;
        let comp = Components {
            dpsi_ij: dpsi[i * n + j],
            dpsi_ji: dpsi[j * n + i],
            q_circulation: m[base + 1],
            boundary_ij: m[base + 2],
            boundary_ji: m[base + 3],
        };
        entries[i * n + j].rhs = m[base];
        entries[i * n + j].components = comp;
        se[i * n + j] = summary.se[base];
        if i == j {
            continue;
        }
        entries[j * n + i].rhs = -m[base];
        entries[j * n + i].components = mirrored(&comp, -m[base + 1]);
        se[j * n + i] = summary.se[base];
    }
    Ok((entries, se))
}
