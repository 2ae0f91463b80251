//! Built-in embedded manifolds.

use alloc::format;
use alloc::string::String;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{Shape, ShapeKind};
use crate::linalg::{dot, norm};
use crate::{Error, Result, MAX_DIM};

const TAU: f64 = core::f64::consts::TAU;

/// Unit sphere `S^{n-1} ⊂ R^n`, `2 ≤ n ≤ 8`. `n = 2` is the circle.
///
/// Projector extension: `P(x) = I − x xᵀ / |x|²`, smooth away from the origin.
#[derive(Debug, Clone, Copy)]
pub struct Sphere {
    n: usize,
}

impl Sphere {
    pub fn new(n: usize) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&n) {
            return Err(Error::invalid(format!(
                "sphere ambient dimension must be in 2..={MAX_DIM}, got {n}"
            )));
        }
        Ok(Self { n })
    }
}

impl Shape for Sphere {
    fn ambient_dim(&self) -> usize {
        self.n
    }

    fn intrinsic_dim(&self) -> usize {
        self.n - 1
    }

    fn label(&self) -> String {
        if self.n == 2 {
            "circle".into()
        } else {
            format!("sphere:n={}", self.n)
        }
    }

    fn kind(&self) -> ShapeKind {
        ShapeKind::Sphere { n: self.n }
    }

    fn projection(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let s = dot(x, x);
        for j in 0..n {
            for m in 0..n {
                out[j * n + m] = if j == m { 1.0 } else { 0.0 } - x[j] * x[m] / s;
            }
        }
    }

    fn project_vector(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let c = dot(x, v) / dot(x, x);
        for ((o, vi), xi) in out.iter_mut().zip(v).zip(x) {
            *o = vi - c * xi;
        }
    }

    fn has_closed_form_derivative(&self) -> bool {
        true
    }

    fn projection_derivative(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let s = dot(x, x);
        let s2 = s * s;
        for j in 0..n {
            for m in 0..n {
                for l in 0..n {
                    let mut v = 2.0 * x[j] * x[m] * x[l] / s2;
                    if j == l {
                        v -= x[m] / s;
                    }
                    if m == l {
                        v -= x[j] / s;
                    }
                    out[(j * n + m) * n + l] = v;
                }
            }
        }
    }

    fn distance(&self, x: &[f64]) -> f64 {
        (norm(x) - 1.0).abs()
    }

    fn retract(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let r = norm(x);
        if r == 0.0 || !r.is_finite() {
            return Err(Error::CaptureRadiusExceeded {
                distance: 1.0,
                radius: self.capture_radius(),
            });
        }
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi / r;
        }
        Ok(())
    }

    fn capture_radius(&self) -> f64 {
        1.0
    }

    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        loop {
            for o in out.iter_mut() {
                *o = rng.sample(StandardNormal);
            }
            let r = norm(out);
            if r > 1e-6 {
                out.iter_mut().for_each(|o| *o /= r);
                return;
            }
        }
    }

    fn exp_map(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> bool {
        let speed = norm(v);
        if speed == 0.0 {
            out.copy_from_slice(x);
            return true;
        }
        let (s, c) = (libm::sin(speed), libm::cos(speed));
        for ((o, xi), vi) in out.iter_mut().zip(x).zip(v) {
            *o = c * xi + s * vi / speed;
        }
        true
    }
}

/// Torus of revolution about the `x₃` axis with tube centre radius `R` and
/// tube radius `r`, `R > r > 0`.
///
/// The projector is extended by the nearest-point foot: `P(x) = I − ν νᵀ`
/// with `ν` the unit vector from the tube core circle to `x`.
#[derive(Debug, Clone, Copy)]
pub struct Torus {
    major: f64,
    minor: f64,
}

impl Torus {
    pub fn new(major: f64, minor: f64) -> Result<Self> {
        if !(major > minor && minor > 0.0) || !major.is_finite() {
            return Err(Error::invalid(format!(
                "torus needs R > r > 0, got R={major}, r={minor}"
            )));
        }
        Ok(Self { major, minor })
    }

    pub fn radii(&self) -> (f64, f64) {
        (self.major, self.minor)
    }

    /// Point with toroidal angle `theta` and poloidal angle `phi`.
    pub fn point(&self, theta: f64, phi: f64) -> [f64; 3] {
        let w = self.major + self.minor * libm::cos(phi);
        [
            w * libm::cos(theta),
            w * libm::sin(theta),
            self.minor * libm::sin(phi),
        ]
    }

    /// Offset from the core circle, `d = x − c(x)`.
    fn core_offset(&self, x: &[f64]) -> [f64; 3] {
        let rho = libm::hypot(x[0], x[1]);
        let k = self.major / rho;
        [x[0] - k * x[0], x[1] - k * x[1], x[2]]
    }

    fn normal(&self, x: &[f64]) -> [f64; 3] {
        let d = self.core_offset(x);
        let len = norm(&d);
        [d[0] / len, d[1] / len, d[2] / len]
    }
}

impl Shape for Torus {
    fn ambient_dim(&self) -> usize {
        3
    }

    fn intrinsic_dim(&self) -> usize {
        2
    }

    fn label(&self) -> String {
        format!("torus:R={},r={}", self.major, self.minor)
    }

    fn kind(&self) -> ShapeKind {
        ShapeKind::Torus {
            major: self.major,
            minor: self.minor,
        }
    }

    fn projection(&self, x: &[f64], out: &mut [f64]) {
        let nu = self.normal(x);
        for j in 0..3 {
            for m in 0..3 {
                out[j * 3 + m] = if j == m { 1.0 } else { 0.0 } - nu[j] * nu[m];
            }
        }
    }

    fn project_vector(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let nu = self.normal(x);
        let c = dot(&nu, v);
        for k in 0..3 {
            out[k] = v[k] - c * nu[k];
        }
    }

    fn has_closed_form_derivative(&self) -> bool {
        true
    }

    fn projection_derivative(&self, x: &[f64], out: &mut [f64]) {
        let rho = libm::hypot(x[0], x[1]);
        let u = [x[0] / rho, x[1] / rho, 0.0];
        let d = self.core_offset(x);
        let len = norm(&d);
        let nu = [d[0] / len, d[1] / len, d[2] / len];
        // dnu[a][l] = ∂ν_a/∂x_l
        let mut dnu = [[0.0; 3]; 3];
        for l in 0..3 {
            // ∂d/∂x_l = e_l − ∂c/∂x_l, with ∂c/∂x_l = (R/ρ)(e_l − u u_l) in the plane.
            let mut dd = [0.0; 3];
            for a in 0..3 {
                let e = if a == l { 1.0 } else { 0.0 };
                let dc = if l < 2 && a < 2 {
                    self.major / rho * (e - u[a] * u[l])
                } else {
                    0.0
                };
                dd[a] = e - dc;
            }
            let proj = dot(&nu, &dd);
            for a in 0..3 {
                dnu[a][l] = (dd[a] - proj * nu[a]) / len;
            }
        }
        for j in 0..3 {
            for m in 0..3 {
                for l in 0..3 {
                    out[(j * 3 + m) * 3 + l] = -(dnu[j][l] * nu[m] + nu[j] * dnu[m][l]);
                }
            }
        }
    }

    fn distance(&self, x: &[f64]) -> f64 {
        (norm(&self.core_offset(x)) - self.minor).abs()
    }

    fn retract(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let rho = libm::hypot(x[0], x[1]);
        let d = self.core_offset(x);
        let len = norm(&d);
        if rho == 0.0 || len == 0.0 || !len.is_finite() {
            return Err(Error::CaptureRadiusExceeded {
                distance: self.minor,
                radius: self.capture_radius(),
            });
        }
        let k = self.major / rho;
        for a in 0..3 {
            let centre = if a < 2 { k * x[a] } else { 0.0 };
            out[a] = centre + self.minor * d[a] / len;
        }
        Ok(())
    }

    fn capture_radius(&self) -> f64 {
        0.5 * self.minor
    }

    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        let theta = TAU * rng.random::<f64>();
        let phi = TAU * rng.random::<f64>();
        out.copy_from_slice(&self.point(theta, phi));
    }
}

/// Ellipsoid `Σ xᵢ²/aᵢ² = 1` in `R³`.
///
/// The projector is extended through the normalised gradient of the level
/// function; no closed-form derivative is provided, so the model falls back
/// to finite differences. Retraction is the nearest point, found by a
/// safeguarded Newton iteration on the Lagrange multiplier.
#[derive(Debug, Clone, Copy)]
pub struct Ellipsoid {
    axes: [f64; 3],
}

impl Ellipsoid {
    pub const NEWTON_TOL: f64 = 1e-12;

    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && c > 0.0) || !(a + b + c).is_finite() {
            return Err(Error::invalid(format!(
                "ellipsoid semi-axes must be positive, got {a}, {b}, {c}"
            )));
        }
        Ok(Self { axes: [a, b, c] })
    }

    pub fn axes(&self) -> [f64; 3] {
        self.axes
    }

    fn gradient_normal(&self, x: &[f64]) -> [f64; 3] {
        let g = [
            x[0] / (self.axes[0] * self.axes[0]),
            x[1] / (self.axes[1] * self.axes[1]),
            x[2] / (self.axes[2] * self.axes[2]),
        ];
        let len = norm(&g);
        [g[0] / len, g[1] / len, g[2] / len]
    }

    /// Nearest point on the ellipsoid: `yᵢ = xᵢ aᵢ² / (aᵢ² + λ)` with `λ` the root
    /// of `f(λ) = Σ xᵢ² aᵢ² / (aᵢ² + λ)² − 1`.
    fn foot(&self, x: &[f64]) -> Option<[f64; 3]> {
        let a2 = self.axes.map(|a| a * a);
        let f = |lam: f64| -> (f64, f64) {
            let mut val = -1.0;
            let mut der = 0.0;
            for i in 0..3 {
                let den = a2[i] + lam;
                let t = x[i] * x[i] * a2[i] / (den * den);
                val += t;
                der -= 2.0 * t / den;
            }
            (val, der)
        };
        let a2_min = a2.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut lo = -a2_min;
        let mut hi = norm(x) * self.axes.iter().cloned().fold(0.0, f64::max) + 1.0;
        let (f_hi, _) = f(hi);
        if f_hi > 0.0 || !f_hi.is_finite() {
            return None;
        }
        let mut lam = 0.0f64.clamp(lo, hi);
        for _ in 0..200 {
            let (val, der) = f(lam);
            if !val.is_finite() || val > 0.0 {
                lo = lam;
            } else {
                hi = lam;
            }
            if val.abs() < Self::NEWTON_TOL {
                break;
            }
            let newton = lam - val / der;
            lam = if val.is_finite() && der < 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-15 * (1.0 + hi.abs()) {
                break;
            }
        }
        let y = [
            x[0] * a2[0] / (a2[0] + lam),
            x[1] * a2[1] / (a2[1] + lam),
            x[2] * a2[2] / (a2[2] + lam),
        ];
        y.iter().all(|v| v.is_finite()).then_some(y)
    }
}

impl Shape for Ellipsoid {
    fn ambient_dim(&self) -> usize {
        3
    }

    fn intrinsic_dim(&self) -> usize {
        2
    }

    fn label(&self) -> String {
        format!(
            "ellipsoid:a={},b={},c={}",
            self.axes[0], self.axes[1], self.axes[2]
        )
    }

    fn kind(&self) -> ShapeKind {
        ShapeKind::Ellipsoid { axes: self.axes }
    }

    fn projection(&self, x: &[f64], out: &mut [f64]) {
        let nu = self.gradient_normal(x);
        for j in 0..3 {
            for m in 0..3 {
                out[j * 3 + m] = if j == m { 1.0 } else { 0.0 } - nu[j] * nu[m];
            }
        }
    }

    fn project_vector(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let nu = self.gradient_normal(x);
        let c = dot(&nu, v);
        for k in 0..3 {
            out[k] = v[k] - c * nu[k];
        }
    }

    fn distance(&self, x: &[f64]) -> f64 {
        match self.foot(x) {
            Some(y) => crate::linalg::distance(x, &y),
            None => f64::INFINITY,
        }
    }

    fn retract(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let y = self
            .foot(x)
            .ok_or(Error::NonFinite("ellipsoid nearest point"))?;
        out.copy_from_slice(&y);
        Ok(())
    }

    fn capture_radius(&self) -> f64 {
        0.5 * self.axes.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        let mut u = [0.0; 3];
        loop {
            for v in u.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let r = norm(&u);
            if r > 1e-6 {
                for i in 0..3 {
                    out[i] = self.axes[i] * u[i] / r;
                }
                return;
            }
        }
    }
}

/// Coordinate plane `{x_{k+1} = … = x_n = 0}` in `R^n`: the flat control case.
#[derive(Debug, Clone, Copy)]
pub struct Plane {
    n: usize,
    k: usize,
}

impl Plane {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&n) || k == 0 || k >= n {
            return Err(Error::invalid(format!(
                "plane needs 1 ≤ k < n ≤ {MAX_DIM}, got n={n}, k={k}"
            )));
        }
        Ok(Self { n, k })
    }
}

impl Shape for Plane {
    fn ambient_dim(&self) -> usize {
        self.n
    }

    fn intrinsic_dim(&self) -> usize {
        self.k
    }

    fn label(&self) -> String {
        format!("plane:n={},k={}", self.n, self.k)
    }

    fn kind(&self) -> ShapeKind {
        ShapeKind::Plane {
            n: self.n,
            k: self.k,
        }
    }

    fn projection(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.k {
            out[i * self.n + i] = 1.0;
        }
    }

    fn project_vector(&self, _x: &[f64], v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = if i < self.k { v[i] } else { 0.0 };
        }
    }

    fn has_closed_form_derivative(&self) -> bool {
        true
    }

    fn projection_derivative(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }

    fn distance(&self, x: &[f64]) -> f64 {
        norm(&x[self.k..])
    }

    fn retract(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.project_vector(x, x, out);
        Ok(())
    }

    fn capture_radius(&self) -> f64 {
        f64::INFINITY
    }

    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = if i < self.k {
                rng.sample(StandardNormal)
            } else {
                0.0
            };
        }
    }

    fn exp_map(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> bool {
        for ((o, xi), vi) in out.iter_mut().zip(x).zip(v) {
            *o = xi + vi;
        }
        true
    }
}

/// Alternative extension of another shape's projector: `P̃(x) = P(R(x))`,
/// constant along the retraction fibres. Derivatives come from finite
/// differences. On the manifold it agrees with the inner projector, and so do
/// all derivatives taken along tangent directions.
pub struct RetractedExtension<S> {
    inner: S,
}

impl<S: Shape> RetractedExtension<S> {
    pub fn new(inner: S) -> Self {
        Self { inner }
    }
}

impl<S: Shape> Shape for RetractedExtension<S> {
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    fn intrinsic_dim(&self) -> usize {
        self.inner.intrinsic_dim()
    }

    fn label(&self) -> String {
        format!("{}+retracted-extension", self.inner.label())
    }

    fn kind(&self) -> ShapeKind {
        self.inner.kind()
    }

    fn projection(&self, x: &[f64], out: &mut [f64]) {
        let mut foot = [0.0; MAX_DIM];
        let n = self.ambient_dim();
        match self.inner.retract(x, &mut foot[..n]) {
            Ok(()) => self.inner.projection(&foot[..n], out),
            Err(_) => out.iter_mut().for_each(|o| *o = f64::NAN),
        }
    }

    fn distance(&self, x: &[f64]) -> f64 {
        self.inner.distance(x)
    }

    fn retract(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.inner.retract(x, out)
    }

    fn capture_radius(&self) -> f64 {
        self.inner.capture_radius()
    }

    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        self.inner.sample_point(rng, out)
    }

    fn exp_map(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> bool {
        self.inner.exp_map(x, v, out)
    }
}
