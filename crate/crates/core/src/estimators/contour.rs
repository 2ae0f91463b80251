//! Drift part of the contour Itô formula: the time derivative at zero of
//! `E ∫_{X_t(γ)} Σ_k F^k dx_k` for `dX = u dt + σ dW` (Itô).

use alloc::vec;
use alloc::vec::Vec;

use super::oracle_psi_derivative;
use crate::curves::Curve;
use crate::geometry::ManifoldModel;
use crate::{Error, Result, MAX_DIM};

const FD_STEP: f64 = 1e-5;
const FD_STEP_SECOND: f64 = 1e-4;

/// Time-dependent covector field `F(t, x)`.
pub trait TimeVectorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]);

    fn time_derivative(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let mut a = [0.0; MAX_DIM];
        let mut b = [0.0; MAX_DIM];
        self.eval(t + FD_STEP, x, &mut a[..n]);
        self.eval(t - FD_STEP, x, &mut b[..n]);
        for k in 0..n {
            out[k] = (a[k] - b[k]) / (2.0 * FD_STEP);
        }
    }

    /// `out[k * n + j] = ∂_j F^k`.
    fn jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let mut y = [0.0; MAX_DIM];
        let mut a = [0.0; MAX_DIM];
        let mut b = [0.0; MAX_DIM];
        for j in 0..n {
            y[..n].copy_from_slice(x);
            y[j] += FD_STEP;
            self.eval(t, &y[..n], &mut a[..n]);
            y[j] -= 2.0 * FD_STEP;
            self.eval(t, &y[..n], &mut b[..n]);
            for k in 0..n {
                out[k * n + j] = (a[k] - b[k]) / (2.0 * FD_STEP);
            }
        }
    }

    /// `out[(k * n + i) * n + j] = ∂_i ∂_j F^k`.
    fn hessian(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let mut y = [0.0; MAX_DIM];
        let mut a = [0.0; MAX_DIM * MAX_DIM];
        let mut b = [0.0; MAX_DIM * MAX_DIM];
        for i in 0..n {
            y[..n].copy_from_slice(x);
            y[i] += FD_STEP_SECOND;
            self.jacobian(t, &y[..n], &mut a[..n * n]);
            y[i] -= 2.0 * FD_STEP_SECOND;
            self.jacobian(t, &y[..n], &mut b[..n * n]);
            for k in 0..n {
                for j in 0..n {
                    out[(k * n + i) * n + j] =
                        (a[k * n + j] - b[k * n + j]) / (2.0 * FD_STEP_SECOND);
                }
            }
        }
    }
}

/// Drift `u(x)`.
pub trait DriftField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
}

/// Diffusion matrix `σ(x)`, row-major.
pub trait DiffusionField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// `out[(j * n + m) * n + k] = ∂_k σ^{jm}`.
    fn derivative(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let mut y = [0.0; MAX_DIM];
        let mut a = [0.0; MAX_DIM * MAX_DIM];
        let mut b = [0.0; MAX_DIM * MAX_DIM];
        for k in 0..n {
            y[..n].copy_from_slice(x);
            y[k] += FD_STEP;
            self.eval(&y[..n], &mut a[..n * n]);
            y[k] -= 2.0 * FD_STEP;
            self.eval(&y[..n], &mut b[..n * n]);
            for jm in 0..n * n {
                out[jm * n + k] = (a[jm] - b[jm]) / (2.0 * FD_STEP);
            }
        }
    }
}

/// `F^k = x^i δ_{jk}`, the integrand of `∫ x^i dx^j`.
pub struct CoordinateForm {
    pub n: usize,
    pub i: usize,
    pub j: usize,
}

impl TimeVectorField for CoordinateForm {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[self.j] = x[self.i];
    }

    fn time_derivative(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn jacobian(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[self.j * self.n + self.i] = 1.0;
    }

    fn hessian(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// `F^k = x^k`, the gradient of `|x|²/2`.
pub struct PositionField(pub usize);

impl TimeVectorField for PositionField {
    fn dim(&self) -> usize {
        self.0
    }

    fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
}

/// Constant `F`, or constant `u` when used as a drift.
pub struct ConstantField(pub Vec<f64>);

impl TimeVectorField for ConstantField {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn eval(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

impl DriftField for ConstantField {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn eval(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Constant `σ`, row-major.
pub struct ConstantMatrix {
    pub n: usize,
    pub values: Vec<f64>,
}

impl ConstantMatrix {
    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        (0..n).for_each(|i| values[i * n + i] = 1.0);
        Self { n, values }
    }
}

impl DiffusionField for ConstantMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.values);
    }

    fn derivative(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// `u = r`, the Itô drift of Brownian motion on the manifold.
pub struct ModelDrift<'a>(pub &'a ManifoldModel);

impl DriftField for ModelDrift<'_> {
    fn dim(&self) -> usize {
        self.0.ambient_dim()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.0.fill_drift(x, out);
    }
}

/// `σ = P`.
pub struct ModelProjection<'a>(pub &'a ManifoldModel);

impl DiffusionField for ModelProjection<'_> {
    fn dim(&self) -> usize {
        self.0.ambient_dim()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.0.fill_projection(x, out);
    }

    fn derivative(&self, x: &[f64], out: &mut [f64]) {
        self.0.fill_projection_derivative(x, out);
    }
}

/// `d/dt E ∫_{X_t(γ)} F(t)·dx` at `t = 0`:
///
/// ```text
/// ∫ Σ_k [∂_t F^k + Σ_j u^j (∂_j F^k − ∂_k F^j) + ½ Σ_{ij} ∂_i∂_j F^k (σσᵀ)^{ij}] dx_k
///   + [Σ_k F^k u^k]_a^b
///   + ∫ Σ_k [Σ_{j,l,m} ∂_l F^j σ^{lm} ∂_k σ^{jm}] dx_k
/// ```
///
/// Integrands are evaluated at the curve's quadrature midpoints.
pub fn contour_ito_drift(
    f: &dyn TimeVectorField,
    u: &dyn DriftField,
    sigma: &dyn DiffusionField,
    c: &Curve,
) -> Result<f64> {
    let n = c.dim();
    for found in [f.dim(), u.dim(), sigma.dim()] {
        if found != n {
            return Err(Error::DimensionMismatch { expected: n, found });
        }
    }
    let mut ft = [0.0; MAX_DIM];
    let mut jac = [0.0; MAX_DIM * MAX_DIM];
    let mut hess = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
    let mut uu = [0.0; MAX_DIM];
    let mut sg = [0.0; MAX_DIM * MAX_DIM];
    let mut dsg = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
    let mut a = [0.0; MAX_DIM * MAX_DIM];
    let mut coef = [0.0; MAX_DIM];
    let mut total = 0.0;
    for p in 0..c.segments() {
        let x = c.midpoint(p);
        f.time_derivative(0.0, x, &mut ft[..n]);
        f.jacobian(0.0, x, &mut jac[..n * n]);
        f.hessian(0.0, x, &mut hess[..n * n * n]);
        u.eval(x, &mut uu[..n]);
        sigma.eval(x, &mut sg[..n * n]);
        sigma.derivative(x, &mut dsg[..n * n * n]);
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|m| sg[i * n + m] * sg[j * n + m]).sum();
            }
        }
        for k in 0..n {
            let transport: f64 = (0..n)
                .map(|j| uu[j] * (jac[k * n + j] - jac[j * n + k]))
                .sum();
            let mut second = 0.0;
            for i in 0..n {
                for j in 0..n {
                    second += hess[(k * n + i) * n + j] * a[i * n + j];
                }
            }
            let mut correction = 0.0;
            for j in 0..n {
                for l in 0..n {
                    for m in 0..n {
                        correction += jac[j * n + l] * sg[l * n + m] * dsg[(j * n + m) * n + k];
                    }
                }
            }
            coef[k] = ft[k] + transport + 0.5 * second + correction;
        }
        let (xa, xb) = (c.node(p), c.node(p + 1));
        total += (0..n).map(|k| coef[k] * (xb[k] - xa[k])).sum::<f64>();
    }
    let boundary = |x: &[f64]| {
        let mut fv = [0.0; MAX_DIM];
        let mut uv = [0.0; MAX_DIM];
        f.eval(0.0, x, &mut fv[..n]);
        u.eval(x, &mut uv[..n]);
        (0..n).map(|k| fv[k] * uv[k]).sum::<f64>()
    };
    total += boundary(c.end()) - boundary(c.start());
    if !total.is_finite() {
        return Err(Error::NonFinite("contour drift"));
    }
    Ok(total)
}

/// Built-in `(F, u, σ)` combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContourCase {
    /// `F^k = x^i δ_{jk}`, `u = r`, `σ = P`: reproduces `∂_tΨ^{ij}(0)`.
    Specialization { i: usize, j: usize },
    /// Constant `F`, zero drift, constant `σ`.
    Constant,
    /// `F^k = x^k`, zero drift, `σ = I`.
    ExactForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourDrift {
    pub value: f64,
    /// The value it should reproduce, when one is known.
    pub reference: Option<f64>,
}

impl ContourCase {
    pub fn name(self) -> &'static str {
        match self {
            ContourCase::Specialization { .. } => "specialization",
            ContourCase::Constant => "constant",
            ContourCase::ExactForm => "exact-form",
        }
    }

    pub fn evaluate(self, model: &ManifoldModel, c: &Curve) -> Result<ContourDrift> {
        let n = model.ambient_dim();
        match self {
            ContourCase::Specialization { i, j } => {
                model.check_index(i)?;
                model.check_index(j)?;
                let value = contour_ito_drift(
                    &CoordinateForm { n, i, j },
                    &ModelDrift(model),
                    &ModelProjection(model),
                    c,
                )?;
                let oracle = oracle_psi_derivative(model, c)?;
                Ok(ContourDrift {
                    value,
                    reference: Some(oracle[(i, j)]),
                })
            }
            ContourCase::Constant => {
                let f = ConstantField((1..=n).map(|k| k as f64).collect());
                let sigma = ConstantMatrix {
                    n,
                    values: (0..n * n).map(|e| 0.5 + e as f64 / 10.0).collect(),
                };
                let value = contour_ito_drift(&f, &ConstantField(vec![0.0; n]), &sigma, c)?;
                Ok(ContourDrift {
                    value,
                    reference: Some(0.0),
                })
            }
            ContourCase::ExactForm => {
                let value = contour_ito_drift(
                    &PositionField(n),
                    &ConstantField(vec![0.0; n]),
                    &ConstantMatrix::identity(n),
                    c,
                )?;
                Ok(ContourDrift {
                    value,
                    reference: c.is_closed().then_some(0.0),
                })
            }
        }
    }
}
