//! Differential geometry of embedded manifolds through their tangent
//! projectors.
//!
//! Everything is expressed in ambient coordinates of `R^n`. With
//! `P(x)` the orthogonal projector onto `T_xM` and `∂_l P^{jm}` its ambient
//! derivative:
//!
//! - `S^i_{jl} = Σ_m P^{im} ∂_l P^{jm}`
//! - `r^i = ½ Σ_l S^l_{il}` (the Itô drift of Brownian motion on `M`)
//! - `Γ^i_{jk} = S^i_{jk} − S^j_{ik}` (Levi-Civita connection form)
//!
//! Tensor layouts follow [`Tensor3`]: `dP` is indexed `(j, m, l)`, `S` and
//! `Γ` are indexed `(i, j, l)`.

mod identities;
pub mod shapes;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use rand::RngCore;

use crate::linalg::{self, Matrix, Tensor3};
use crate::{Error, Result, MAX_DIM};

pub use identities::{identity_suite, IdentityCheck, IdentityReport, IdentityTolerances};
pub use shapes::{Ellipsoid, Plane, RetractedExtension, Sphere, Torus};

/// Default central-difference step for projector derivatives.
pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Default distance under which a point counts as lying on the manifold.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;

/// What a [`Shape`] is, for curve constructions that need closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind {
    Sphere { n: usize },
    Torus { major: f64, minor: f64 },
    Ellipsoid { axes: [f64; 3] },
    Plane { n: usize, k: usize },
    Other,
}

/// An embedded manifold described by a smooth projector field defined on a
/// neighbourhood of it.
///
/// Buffers are row-major; `projection_derivative` writes `∂P^{jm}/∂x_l` at
/// `(j * n + m) * n + l`.
pub trait Shape: Send + Sync {
    fn ambient_dim(&self) -> usize;
    fn intrinsic_dim(&self) -> usize;
    fn label(&self) -> String;

    fn kind(&self) -> ShapeKind {
        ShapeKind::Other
    }

    fn projection(&self, x: &[f64], out: &mut [f64]);

    /// `out = P(x) v`.
    fn project_vector(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let n = self.ambient_dim();
        let mut p = [0.0; MAX_DIM * MAX_DIM];
        self.projection(x, &mut p[..n * n]);
        for i in 0..n {
            out[i] = linalg::dot(&p[i * n..(i + 1) * n], v);
        }
    }

    /// Whether [`Shape::projection_derivative`] is implemented.
    fn has_closed_form_derivative(&self) -> bool {
        false
    }

    /// Closed-form derivative of the extension. Only called when
    /// [`Shape::has_closed_form_derivative`] is true.
    fn projection_derivative(&self, _x: &[f64], _out: &mut [f64]) {
        unimplemented!("shape has no closed-form projector derivative")
    }

    /// Euclidean distance to the manifold.
    fn distance(&self, x: &[f64]) -> f64;

    /// Nearest (or canonical) point on the manifold.
    fn retract(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Largest distance from which `retract` is trusted.
    fn capture_radius(&self) -> f64;

    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]);

    /// Riemannian exponential map, when known in closed form.
    fn exp_map(&self, _x: &[f64], _v: &[f64], _out: &mut [f64]) -> bool {
        false
    }
}

/// How `∂P/∂x` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    /// Closed form when the shape has one, central differences otherwise.
    #[default]
    Analytic,
    FiniteDifference,
}

/// Point of the ambient Euclidean space.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientPoint(Vec<f64>);

impl AmbientPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for AmbientPoint {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<&[f64]> for AmbientPoint {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

impl Deref for AmbientPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Christoffel symbols `Γ^i_{jk}` at a point, antisymmetric in `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelTensor(Tensor3);

impl ChristoffelTensor {
    /// `Γ^i_{jk}`.
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.0[(i, j, k)]
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// `Σ_k Γ^i_{jk} v_k` as an `n×n` matrix over `(i, j)`.
    pub fn contract(&self, v: &[f64]) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, |i, j| (0..n).map(|k| self.get(i, j, k) * v[k]).sum())
    }

    /// Entries with `|Γ| > threshold`, as `(i, j, k, value)`.
    pub fn nonzero(&self, threshold: f64) -> Vec<(usize, usize, usize, f64)> {
        let n = self.dim();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = self.get(i, j, k);
                    if v.abs() > threshold {
                        out.push((i, j, k, v));
                    }
                }
            }
        }
        out
    }
}

/// Embedded manifold together with the numerical settings used to evaluate
/// its geometry.
pub struct ManifoldModel {
    shape: Box<dyn Shape>,
    derivative: DerivativeMode,
    fd_step: f64,
    membership_tol: f64,
    capture_radius: f64,
}

impl core::fmt::Debug for ManifoldModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ManifoldModel")
            .field("shape", &self.shape.label())
            .field("derivative", &self.derivative)
            .field("fd_step", &self.fd_step)
            .field("membership_tol", &self.membership_tol)
            .finish()
    }
}

impl ManifoldModel {
    pub fn new(shape: Box<dyn Shape>) -> Result<Self> {
        let n = shape.ambient_dim();
        let k = shape.intrinsic_dim();
        if !(2..=MAX_DIM).contains(&n) || k == 0 || k >= n {
            return Err(Error::invalid(alloc::format!(
                "need 1 ≤ k < n ≤ {MAX_DIM}, got n={n}, k={k}"
            )));
        }
        let capture_radius = shape.capture_radius();
        Ok(Self {
            shape,
            derivative: DerivativeMode::Analytic,
            fd_step: DEFAULT_FD_STEP,
            membership_tol: DEFAULT_MEMBERSHIP_TOL,
            capture_radius,
        })
    }

    pub fn sphere(n: usize) -> Result<Self> {
        Self::new(Box::new(Sphere::new(n)?))
    }

    pub fn circle() -> Self {
        Self::sphere(2).expect("circle is a valid sphere")
    }

    pub fn torus(major: f64, minor: f64) -> Result<Self> {
        Self::new(Box::new(Torus::new(major, minor)?))
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(Box::new(Ellipsoid::new(a, b, c)?))
    }

    pub fn plane(n: usize, k: usize) -> Result<Self> {
        Self::new(Box::new(Plane::new(n, k)?))
    }

    pub fn with_derivative_mode(mut self, mode: DerivativeMode) -> Self {
        self.derivative = mode;
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    pub fn with_membership_tol(mut self, tol: f64) -> Self {
        self.membership_tol = tol;
        self
    }

    pub fn with_capture_radius(mut self, radius: f64) -> Self {
        self.capture_radius = radius;
        self
    }

    pub fn shape(&self) -> &dyn Shape {
        self.shape.as_ref()
    }

    pub fn label(&self) -> String {
        self.shape.label()
    }

    pub fn ambient_dim(&self) -> usize {
        self.shape.ambient_dim()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.shape.intrinsic_dim()
    }

    pub fn derivative_mode(&self) -> DerivativeMode {
        self.derivative
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn membership_tol(&self) -> f64 {
        self.membership_tol
    }

    pub fn capture_radius(&self) -> f64 {
        self.capture_radius
    }

    /// Whether derivatives come from the closed form.
    pub fn uses_analytic_derivative(&self) -> bool {
        self.derivative == DerivativeMode::Analytic && self.shape.has_closed_form_derivative()
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        let n = self.ambient_dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        let dim = self.ambient_dim();
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
        Ok(())
    }

    /// Fails unless `x` lies within `membership_tol` of the manifold.
    pub fn check_on_manifold(&self, x: &[f64]) -> Result<()> {
        self.check_dim(x)?;
        let distance = self.shape.distance(x);
        if !(distance <= self.membership_tol) {
            return Err(Error::OffManifold {
                distance,
                tolerance: self.membership_tol,
            });
        }
        Ok(())
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        self.shape.distance(x)
    }

    /// `P(x)`.
    pub fn projection_at(&self, x: &[f64]) -> Result<Matrix> {
        self.check_on_manifold(x)?;
        let n = self.ambient_dim();
        let mut out = vec![0.0; n * n];
        self.fill_projection(x, &mut out);
        Ok(Matrix::from_row_major(n, out))
    }

    /// `∂P^{jm}/∂x_l`, indexed `(j, m, l)`.
    pub fn projection_derivative_at(&self, x: &[f64]) -> Result<Tensor3> {
        self.check_on_manifold(x)?;
        let n = self.ambient_dim();
        let mut out = vec![0.0; n * n * n];
        self.fill_projection_derivative(x, &mut out);
        Ok(Tensor3::from_flat(n, out))
    }

    /// `S^i_{jl} = Σ_m P^{im} ∂P^{jm}/∂x_l`, indexed `(i, j, l)`.
    pub fn s_tensor(&self, x: &[f64]) -> Result<Tensor3> {
        self.check_on_manifold(x)?;
        let n = self.ambient_dim();
        let mut out = vec![0.0; n * n * n];
        self.fill_s(x, &mut out);
        Ok(Tensor3::from_flat(n, out))
    }

    /// Itô drift `r^i = ½ Σ_l S^l_{il}`.
    pub fn drift_r(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_on_manifold(x)?;
        let mut out = vec![0.0; self.ambient_dim()];
        self.fill_drift(x, &mut out);
        Ok(out)
    }

    /// `Γ^i_{jk} = S^i_{jk} − S^j_{ik}`.
    pub fn christoffel(&self, x: &[f64]) -> Result<ChristoffelTensor> {
        self.check_on_manifold(x)?;
        let n = self.ambient_dim();
        let mut out = vec![0.0; n * n * n];
        self.fill_christoffel(x, &mut out);
        Ok(ChristoffelTensor(Tensor3::from_flat(n, out)))
    }

    /// The drift written through the connection and the projector divergence:
    /// `q^i = ¼ [Σ_l Γ^l_{il} + Σ_l ∂P^{il}/∂x_l]`.
    pub fn q_via_remark(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_on_manifold(x)?;
        let n = self.ambient_dim();
        let mut dp = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        let mut gamma = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        self.fill_projection_derivative(x, &mut dp[..n * n * n]);
        self.fill_christoffel(x, &mut gamma[..n * n * n]);
        Ok((0..n)
            .map(|i| {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += gamma[(l * n + i) * n + l] + dp[(i * n + l) * n + l];
                }
                0.25 * acc
            })
            .collect())
    }

    /// Nearest point on the manifold, refusing points beyond the capture radius.
    pub fn retract(&self, x: &[f64]) -> Result<AmbientPoint> {
        self.check_dim(x)?;
        let mut out = vec![0.0; x.len()];
        self.retract_into(x, &mut out)?;
        Ok(AmbientPoint(out))
    }

    /// Random point on the manifold.
    pub fn sample_point(&self, rng: &mut dyn RngCore) -> AmbientPoint {
        let mut out = vec![0.0; self.ambient_dim()];
        self.shape.sample_point(rng, &mut out);
        AmbientPoint(out)
    }

    /// Orthonormal basis of `T_xM` from Gram–Schmidt on the columns of `P(x)`,
    /// taken in index order.
    pub fn tangent_basis(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let p = self.projection_at(x)?;
        let n = self.ambient_dim();
        let k = self.intrinsic_dim();
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
        for col in 0..n {
            let mut v: Vec<f64> = (0..n).map(|r| p[(r, col)]).collect();
            for b in &basis {
                let c = linalg::dot(&v, b);
                v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= c * bi);
            }
            let len = linalg::norm(&v);
            if len > 1e-6 {
                v.iter_mut().for_each(|vi| *vi /= len);
                basis.push(v);
            }
            if basis.len() == k {
                break;
            }
        }
        if basis.len() != k {
            return Err(Error::NonFinite("tangent basis"));
        }
        Ok(basis)
    }

    // Unchecked evaluation on the neighbourhood of the manifold; used by the
    // quadrature and flow hot paths.

    pub(crate) fn fill_projection(&self, x: &[f64], out: &mut [f64]) {
        self.shape.projection(x, out);
    }

    pub(crate) fn project_vector(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        self.shape.project_vector(x, v, out);
    }

    pub(crate) fn fill_projection_derivative(&self, x: &[f64], out: &mut [f64]) {
        if self.uses_analytic_derivative() {
            self.shape.projection_derivative(x, out);
        } else {
            self.fd_projection_derivative(x, out);
        }
    }

    fn fd_projection_derivative(&self, x: &[f64], out: &mut [f64]) {
        let n = self.ambient_dim();
        let h = self.fd_step;
        let mut xp = [0.0; MAX_DIM];
        let mut xm = [0.0; MAX_DIM];
        let mut pp = [0.0; MAX_DIM * MAX_DIM];
        let mut pm = [0.0; MAX_DIM * MAX_DIM];
        for l in 0..n {
            xp[..n].copy_from_slice(x);
            xm[..n].copy_from_slice(x);
            xp[l] += h;
            xm[l] -= h;
            self.shape.projection(&xp[..n], &mut pp[..n * n]);
            self.shape.projection(&xm[..n], &mut pm[..n * n]);
            for jm in 0..n * n {
                out[jm * n + l] = (pp[jm] - pm[jm]) / (2.0 * h);
            }
        }
    }

    pub(crate) fn fill_s(&self, x: &[f64], out: &mut [f64]) {
        let n = self.ambient_dim();
        let mut p = [0.0; MAX_DIM * MAX_DIM];
        let mut dp = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        self.fill_projection(x, &mut p[..n * n]);
        self.fill_projection_derivative(x, &mut dp[..n * n * n]);
        s_from_parts(n, &p[..n * n], &dp[..n * n * n], out);
    }

    pub(crate) fn fill_drift(&self, x: &[f64], out: &mut [f64]) {
        let n = self.ambient_dim();
        let mut s = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        self.fill_s(x, &mut s[..n * n * n]);
        drift_from_s(n, &s[..n * n * n], out);
    }

    pub(crate) fn fill_christoffel(&self, x: &[f64], out: &mut [f64]) {
        let n = self.ambient_dim();
        let mut s = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        self.fill_s(x, &mut s[..n * n * n]);
        christoffel_from_s(n, &s[..n * n * n], out);
    }

    pub(crate) fn retract_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.shape.retract(x, out)?;
        let distance = linalg::distance(x, out);
        if !(distance <= self.capture_radius) {
            return Err(Error::CaptureRadiusExceeded {
                distance,
                radius: self.capture_radius,
            });
        }
        Ok(())
    }
}

pub(crate) fn s_from_parts(n: usize, p: &[f64], dp: &[f64], out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let mut acc = 0.0;
                for m in 0..n {
                    acc += p[i * n + m] * dp[(j * n + m) * n + l];
                }
                out[(i * n + j) * n + l] = acc;
            }
        }
    }
}

pub(crate) fn drift_from_s(n: usize, s: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(n) {
        *o = 0.5 * (0..n).map(|l| s[(l * n + i) * n + l]).sum::<f64>();
    }
}

pub(crate) fn christoffel_from_s(n: usize, s: &[f64], out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[(i * n + j) * n + k] = s[(i * n + j) * n + k] - s[(j * n + i) * n + k];
            }
        }
    }
}

#[cfg(test)]
mod tests;
