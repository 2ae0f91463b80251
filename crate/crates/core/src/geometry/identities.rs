//! Pointwise identity suite for a projector field.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ManifoldModel;
use crate::linalg::{self, Matrix};
use crate::{Result, MAX_DIM};

/// Thresholds for [`identity_suite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityTolerances {
    /// Symmetry, idempotence, trace and retraction checks.
    pub projector: f64,
    /// Checks involving `∂P` (`S + S* = dP`, `q = r`).
    pub derivative: f64,
}

impl IdentityTolerances {
    pub const ANALYTIC: Self = Self {
        projector: 1e-10,
        derivative: 1e-9,
    };
    pub const FINITE_DIFFERENCE: Self = Self {
        projector: 1e-10,
        derivative: 1e-5,
    };

    pub fn for_model(model: &ManifoldModel) -> Self {
        if model.uses_analytic_derivative() {
            Self::ANALYTIC
        } else {
            Self::FINITE_DIFFERENCE
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub max_violation: f64,
    pub tolerance: f64,
    /// Point where the largest violation occurred.
    pub worst_point: Vec<f64>,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.max_violation <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub manifold: String,
    pub points: usize,
    pub analytic: bool,
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(IdentityCheck::passed)
    }

    pub fn max_violation(&self) -> f64 {
        self.checks
            .iter()
            .fold(0.0, |acc, c| acc.max(c.max_violation))
    }

    /// Failing checks, worst first.
    pub fn violations(&self) -> Vec<&IdentityCheck> {
        let mut v: Vec<_> = self.checks.iter().filter(|c| !c.passed()).collect();
        v.sort_by(|a, b| {
            (b.max_violation / b.tolerance).total_cmp(&(a.max_violation / a.tolerance))
        });
        v
    }
}

/// Evaluates the projector identities at `points` random manifold points:
/// symmetry, idempotence, trace and rank of `P`; `S^i_{jm} + S^j_{im} = ∂_m P^{ij}`;
/// antisymmetry of `Γ`; `q` (connection form) equal to `r` (Itô drift); and
/// retraction fixing manifold points.
pub fn identity_suite(
    model: &ManifoldModel,
    points: usize,
    seed: u64,
    tol: IdentityTolerances,
) -> Result<IdentityReport> {
    let n = model.ambient_dim();
    let k = model.intrinsic_dim();
    let names = [
        "symmetry",
        "idempotence",
        "trace",
        "rank",
        "s_plus_s_star",
        "gamma_antisymmetry",
        "q_equals_r",
        "retraction_fixed_point",
    ];
    let tolerances = [
        tol.projector,
        tol.projector,
        tol.projector,
        0.0,
        tol.derivative,
        0.0,
        tol.derivative,
        tol.projector,
    ];
    let mut checks: Vec<IdentityCheck> = names
        .iter()
        .zip(tolerances)
        .map(|(name, tolerance)| IdentityCheck {
            name,
            max_violation: 0.0,
            tolerance,
            worst_point: vec![0.0; n],
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; n];
    let mut p = vec![0.0; n * n];
    let mut dp = vec![0.0; n * n * n];
    let mut s = vec![0.0; n * n * n];
    let mut gamma = vec![0.0; n * n * n];
    let mut r = [0.0; MAX_DIM];
    for _ in 0..points {
        model.shape().sample_point(&mut rng, &mut x);
        model.fill_projection(&x, &mut p);
        model.fill_projection_derivative(&x, &mut dp);
        super::s_from_parts(n, &p, &dp, &mut s);
        super::christoffel_from_s(n, &s, &mut gamma);
        super::drift_from_s(n, &s, &mut r[..n]);
        let pm = Matrix::from_row_major(n, p.clone());

        let mut v = [0.0f64; 8];
        v[0] = pm.max_abs_diff(&pm.transpose());
        v[1] = pm.matmul(&pm).max_abs_diff(&pm);
        v[2] = (pm.trace() - k as f64).abs();
        let rank = linalg::symmetric_eigenvalues(&pm)
            .iter()
            .filter(|&&e| e > 0.5)
            .count();
        v[3] = rank.abs_diff(k) as f64;
        for i in 0..n {
            for j in 0..n {
                for m in 0..n {
                    let lhs = s[(i * n + j) * n + m] + s[(j * n + i) * n + m];
                    v[4] = v[4].max((lhs - dp[(i * n + j) * n + m]).abs());
                    let anti = gamma[(i * n + j) * n + m] + gamma[(j * n + i) * n + m];
                    v[5] = v[5].max(anti.abs());
                }
            }
        }
        let q = model.q_via_remark(&x)?;
        v[6] = linalg::max_abs_diff(&q, &r[..n]);
        v[7] = linalg::distance(&model.retract(&x)?, &x);

        for (check, value) in checks.iter_mut().zip(v) {
            if check.max_violation.is_nan() {
                continue;
            }
            if value.is_nan() || value > check.max_violation {
                check.max_violation = value;
                check.worst_point.copy_from_slice(&x);
            }
        }
    }
    Ok(IdentityReport {
        manifold: model.label(),
        points,
        analytic: model.uses_analytic_derivative(),
        checks,
    })
}
