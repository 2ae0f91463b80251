//! Reading the connection off the identity: short segments give
//! `Σ_k Γ^i_{jk} v_k`, small loops give circulation per unit area.

use alloc::vec::Vec;

use super::{verify_theorem, TheoremReport, TheoremSettings};
use crate::curves::{sample_curve, CurveSpec};
use crate::flow::{BrownianDriver, FlowConfig};
use crate::geometry::ManifoldModel;
use crate::linalg::{self, Matrix};
use crate::{Error, Result, MAX_DIM};

/// Largest normal component `|v − P(x)v|` accepted for a tangent vector.
pub const TANGENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEstimate {
    pub eps: f64,
    /// Right-hand side divided by `ε`, estimating `Σ_k Γ^i_{jk} v_k`.
    pub estimate: Matrix,
    pub std_error: Matrix,
    pub report: TheoremReport,
}

/// Runs the identity on `s ↦ R(x + s v)`, `s ∈ [0, ε]`, and divides the
/// right-hand side by `ε`.
#[allow(clippy::too_many_arguments)]
pub fn recover_christoffel_segment(
    model: &ManifoldModel,
    x: &[f64],
    v: &[f64],
    eps: f64,
    segments: usize,
    settings: &TheoremSettings,
    cfg: &FlowConfig,
    driver: &BrownianDriver,
) -> Result<SegmentEstimate> {
    model.check_on_manifold(x)?;
    model.check_dim(v)?;
    let n = model.ambient_dim();
    let mut pv = [0.0; MAX_DIM];
    model.project_vector(x, v, &mut pv[..n]);
    let normal = linalg::distance(&pv[..n], v);
    if normal > TANGENCY_TOL {
        return Err(Error::NotTangent { normal });
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("ε must be positive"));
    }
    let spec = CurveSpec::Ray {
        origin: x.to_vec(),
        direction: v.to_vec(),
        length: eps,
    };
    let curve = sample_curve(model, &spec, segments)?;
    let report = verify_theorem(model, &curve, settings, cfg, driver)?;
    let scale = |m: Matrix| Matrix::from_fn(n, |i, j| m[(i, j)] / eps);
    Ok(SegmentEstimate {
        eps,
        estimate: scale(report.rhs_matrix()),
        std_error: scale(report.rhs_se_matrix()),
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopEstimate {
    pub radius: f64,
    /// Area of the loop projected onto the tangent plane at the centre.
    pub area: f64,
    /// Right-hand side divided by `area`.
    pub estimate: Matrix,
    pub std_error: Matrix,
    pub report: TheoremReport,
}

/// Runs the identity on a loop of radius `ρ` about `x` and divides by the
/// enclosed area.
pub fn recover_curvature_loop(
    model: &ManifoldModel,
    x: &[f64],
    radius: f64,
    segments: usize,
    settings: &TheoremSettings,
    cfg: &FlowConfig,
    driver: &BrownianDriver,
) -> Result<LoopEstimate> {
    let n = model.ambient_dim();
    let spec = CurveSpec::Loop {
        center: x.to_vec(),
        radius,
    };
    let curve = sample_curve(model, &spec, segments)?;
    let basis = model.tangent_basis(x)?;
    let coords: Vec<(f64, f64)> = (0..curve.node_count())
        .map(|p| {
            let d: Vec<f64> = curve.node(p).iter().zip(x).map(|(a, b)| a - b).collect();
            (linalg::dot(&d, &basis[0]), linalg::dot(&d, &basis[1]))
        })
        .collect();
    let area = 0.5
        * coords
            .windows(2)
            .map(|w| w[0].0 * w[1].1 - w[1].0 * w[0].1)
            .sum::<f64>();
    let report = verify_theorem(model, &curve, settings, cfg, driver)?;
    let scale = |m: Matrix| Matrix::from_fn(n, |i, j| m[(i, j)] / area);
    Ok(LoopEstimate {
        radius,
        area,
        estimate: scale(report.rhs_matrix()),
        std_error: scale(report.rhs_se_matrix()),
        report,
    })
}
