//! Discretised curves on the manifold and line-integral quadrature.
//!
//! `∫ x^i dx^j` uses the trapezoid rule on the polyline; general 1-forms use
//! the midpoint rule. Midpoints of curves built against a [`ManifoldModel`]
//! are retracted onto the manifold, so forms defined only on `M` can be
//! evaluated there.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, TAU};

use crate::geometry::{ManifoldModel, ShapeKind};
use crate::linalg::{self, Matrix};
use crate::{Error, Result, MAX_DIM};

/// Tolerance on the first/last node of a closed curve.
pub const CLOSURE_TOL: f64 = 1e-12;

/// Polyline `γ(params[p]) = nodes[p]`, `p = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    dim: usize,
    nodes: Vec<f64>,
    midpoints: Vec<f64>,
    params: Vec<f64>,
    closed: bool,
    recorded_deviation: Option<f64>,
}

impl Curve {
    /// Builds a curve whose nodes lie on `model`; quadrature midpoints are
    /// retracted onto the manifold.
    pub fn new(
        model: &ManifoldModel,
        nodes: Vec<f64>,
        params: Vec<f64>,
        closed: bool,
    ) -> Result<Self> {
        let dim = model.ambient_dim();
        let mut curve = Self::from_parts(dim, nodes, params, closed)?;
        for p in 0..curve.node_count() {
            model.check_on_manifold(curve.node(p))?;
        }
        let mut mid = [0.0; MAX_DIM];
        for p in 0..curve.segments() {
            let (a, b) = (curve.node(p), curve.node(p + 1));
            for k in 0..dim {
                mid[k] = 0.5 * (a[k] + b[k]);
            }
            model.retract_into(&mid[..dim], &mut curve.midpoints[p * dim..(p + 1) * dim])?;
        }
        Ok(curve)
    }

    /// Builds an ambient polyline without a manifold; midpoints are chord
    /// midpoints.
    pub fn ambient(dim: usize, nodes: Vec<f64>, params: Vec<f64>, closed: bool) -> Result<Self> {
        Self::from_parts(dim, nodes, params, closed)
    }

    /// Uniform parameters `p / N`.
    pub fn uniform_params(segments: usize) -> Vec<f64> {
        (0..=segments).map(|p| p as f64 / segments as f64).collect()
    }

    fn from_parts(dim: usize, nodes: Vec<f64>, params: Vec<f64>, closed: bool) -> Result<Self> {
        if dim == 0 || !nodes.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "node buffer of length {} is not a multiple of {dim}",
                nodes.len()
            )));
        }
        let count = nodes.len() / dim;
        if count < 2 {
            return Err(Error::invalid("a curve needs at least two nodes"));
        }
        if params.len() != count {
            return Err(Error::invalid(format!(
                "{} params for {count} nodes",
                params.len()
            )));
        }
        if params[0] != 0.0 || params[count - 1] != 1.0 || params.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::invalid("params must increase strictly from 0 to 1"));
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("curve nodes"));
        }
        if closed {
            let gap = linalg::distance(&nodes[..dim], &nodes[(count - 1) * dim..]);
            if gap > CLOSURE_TOL {
                return Err(Error::invalid(format!(
                    "closed curve endpoints differ by {gap:e}"
                )));
            }
        }
        let mut midpoints = vec![0.0; (count - 1) * dim];
        for p in 0..count - 1 {
            for k in 0..dim {
                midpoints[p * dim + k] = 0.5 * (nodes[p * dim + k] + nodes[(p + 1) * dim + k]);
            }
        }
        Ok(Self {
            dim,
            nodes,
            midpoints,
            params,
            closed,
            recorded_deviation: None,
        })
    }

    /// Same parameters and closure with new node positions. Midpoints are
    /// retracted when `model` is given, chord midpoints otherwise.
    pub(crate) fn with_nodes(
        &self,
        model: Option<&ManifoldModel>,
        nodes: Vec<f64>,
        deviation: Option<f64>,
    ) -> Result<Self> {
        let mut c = Self::from_parts(self.dim, nodes, self.params.clone(), false)?;
        c.closed = self.closed;
        c.recorded_deviation = deviation;
        if let Some(model) = model {
            let n = self.dim;
            let mut mid = [0.0; MAX_DIM];
            for p in 0..c.segments() {
                mid[..n].copy_from_slice(&c.midpoints[p * n..(p + 1) * n]);
                model.retract_into(&mid[..n], &mut c.midpoints[p * n..(p + 1) * n])?;
            }
        }
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `N + 1`.
    pub fn node_count(&self) -> usize {
        self.params.len()
    }

    /// `N`.
    pub fn segments(&self) -> usize {
        self.params.len() - 1
    }

    pub fn node(&self, p: usize) -> &[f64] {
        &self.nodes[p * self.dim..(p + 1) * self.dim]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Quadrature point of segment `p`.
    pub fn midpoint(&self, p: usize) -> &[f64] {
        &self.midpoints[p * self.dim..(p + 1) * self.dim]
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn start(&self) -> &[f64] {
        self.node(0)
    }

    pub fn end(&self) -> &[f64] {
        self.node(self.segments())
    }

    /// Largest pre-retraction distance from the manifold seen during the
    /// transport that produced this curve, if it was recorded.
    pub fn recorded_deviation(&self) -> Option<f64> {
        self.recorded_deviation
    }

    /// The same curve traversed backwards.
    pub fn reversed(&self) -> Self {
        let n = self.dim;
        let count = self.node_count();
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut mids = Vec::with_capacity(self.midpoints.len());
        for p in (0..count).rev() {
            nodes.extend_from_slice(self.node(p));
        }
        for p in (0..count - 1).rev() {
            mids.extend_from_slice(self.midpoint(p));
        }
        let params = self.params.iter().rev().map(|t| 1.0 - t).collect();
        Self {
            dim: n,
            nodes,
            midpoints: mids,
            params,
            closed: self.closed,
            recorded_deviation: None,
        }
    }

    /// Euclidean length of the polyline.
    pub fn length(&self) -> f64 {
        (0..self.segments())
            .map(|p| linalg::distance(self.node(p), self.node(p + 1)))
            .sum()
    }
}

/// Named parametric curves understood by [`sample_curve`].
#[derive(Debug, Clone, PartialEq)]
pub enum CurveSpec {
    /// `cos θ e₁ + sin θ e₂`, `θ ∈ [0, π/2]` (on the ellipsoid, scaled by the
    /// semi-axes; on the torus, the outer equator).
    QuarterGreatCircle,
    /// The full closed version of [`CurveSpec::QuarterGreatCircle`].
    GreatCircle,
    /// Closed loop through the tube of a torus at toroidal angle 0.
    PoloidalLoop,
    /// Closed loop of radius `radius` about `center`: a geodesic circle where
    /// the exponential map is known, otherwise the retracted tangent circle.
    /// Counter-clockwise in the tangent basis of [`ManifoldModel::tangent_basis`].
    Loop { center: Vec<f64>, radius: f64 },
    /// From `from` to `to`, along the minimising geodesic or the retracted chord.
    Segment {
        from: Vec<f64>,
        to: Vec<f64>,
        via: SegmentPath,
    },
    /// `R(origin + s · direction)` for `s ∈ [0, length]`, with `R` the retraction.
    Ray {
        origin: Vec<f64>,
        direction: Vec<f64>,
        length: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentPath {
    Geodesic,
    Retraction,
}

impl CurveSpec {
    pub fn label(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(";")
        };
        match self {
            CurveSpec::QuarterGreatCircle => "quarter-great-circle".into(),
            CurveSpec::GreatCircle => "great-circle".into(),
            CurveSpec::PoloidalLoop => "poloidal-loop".into(),
            CurveSpec::Loop { center, radius } => {
                format!("loop:center={},radius={radius}", join(center))
            }
            CurveSpec::Segment { from, to, via } => format!(
                "segment:from={},to={},via={}",
                join(from),
                join(to),
                match via {
                    SegmentPath::Geodesic => "geodesic",
                    SegmentPath::Retraction => "retraction",
                }
            ),
            CurveSpec::Ray {
                origin,
                direction,
                length,
            } => {
                format!(
                    "ray:origin={},direction={},length={length}",
                    join(origin),
                    join(direction)
                )
            }
        }
    }
}

/// Samples `spec` at `segments + 1` uniformly spaced parameters, retracting
/// every node onto the manifold.
pub fn sample_curve(model: &ManifoldModel, spec: &CurveSpec, segments: usize) -> Result<Curve> {
    if segments < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 segments, got {segments}"
        )));
    }
    let n = model.ambient_dim();
    let params = Curve::uniform_params(segments);
    let mut nodes = vec![0.0; (segments + 1) * n];
    let closed = matches!(
        spec,
        CurveSpec::GreatCircle | CurveSpec::PoloidalLoop | CurveSpec::Loop { .. }
    );
    let mut raw = vec![0.0; n];

    let kind = model.shape().kind();
    match spec {
        CurveSpec::QuarterGreatCircle | CurveSpec::GreatCircle => {
            let span = if closed { TAU } else { FRAC_PI_2 };
            let (a, b) = match kind {
                ShapeKind::Sphere { .. } | ShapeKind::Plane { k: 2.., .. } => (1.0, 1.0),
                ShapeKind::Ellipsoid { axes } => (axes[0], axes[1]),
                ShapeKind::Torus { major, minor } => (major + minor, major + minor),
                _ => return Err(unsupported(spec, model)),
            };
            for (p, t) in params.iter().enumerate() {
                let theta = span * t;
                raw.iter_mut().for_each(|v| *v = 0.0);
                raw[0] = a * libm::cos(theta);
                raw[1] = b * libm::sin(theta);
                model.retract_into(&raw, &mut nodes[p * n..(p + 1) * n])?;
            }
        }
        CurveSpec::PoloidalLoop => {
            let ShapeKind::Torus { major, minor } = kind else {
                return Err(unsupported(spec, model));
            };
            for (p, t) in params.iter().enumerate() {
                let phi = TAU * t;
                raw[0] = major + minor * libm::cos(phi);
                raw[1] = 0.0;
                raw[2] = minor * libm::sin(phi);
                model.retract_into(&raw, &mut nodes[p * n..(p + 1) * n])?;
            }
        }
        CurveSpec::Loop { center, radius } => {
            model.check_on_manifold(center)?;
            if model.intrinsic_dim() < 2 {
                return Err(unsupported(spec, model));
            }
            if !(*radius > 0.0) {
                return Err(Error::invalid("loop radius must be positive"));
            }
            let basis = model.tangent_basis(center)?;
            let mut v = vec![0.0; n];
            for (p, t) in params.iter().enumerate() {
                let theta = TAU * t;
                let (s, c) = (libm::sin(theta), libm::cos(theta));
                for k in 0..n {
                    v[k] = radius * (c * basis[0][k] + s * basis[1][k]);
                }
                let out = &mut nodes[p * n..(p + 1) * n];
                if !model.shape().exp_map(center, &v, out) {
                    for k in 0..n {
                        raw[k] = center[k] + v[k];
                    }
                    model.retract_into(&raw, out)?;
                }
            }
        }
        CurveSpec::Segment { from, to, via } => {
            model.check_on_manifold(from)?;
            model.check_on_manifold(to)?;
            match via {
                SegmentPath::Geodesic => {
                    geodesic_segment(model, spec, from, to, &params, &mut nodes)?
                }
                SegmentPath::Retraction => {
                    for (p, t) in params.iter().enumerate() {
                        for k in 0..n {
                            raw[k] = (1.0 - t) * from[k] + t * to[k];
                        }
                        model.retract_into(&raw, &mut nodes[p * n..(p + 1) * n])?;
                    }
                }
            }
        }
        CurveSpec::Ray {
            origin,
            direction,
            length,
        } => {
            model.check_on_manifold(origin)?;
            model.check_dim(direction)?;
            if !(*length > 0.0) {
                return Err(Error::invalid("ray length must be positive"));
            }
            for (p, t) in params.iter().enumerate() {
                for k in 0..n {
                    raw[k] = origin[k] + t * length * direction[k];
                }
                model.retract_into(&raw, &mut nodes[p * n..(p + 1) * n])?;
            }
        }
    }
    if closed {
        let (first, rest) = nodes.split_at_mut(n);
        rest[segments * n - n..].copy_from_slice(first);
    }
    Curve::new(model, nodes, params, closed)
}

fn geodesic_segment(
    model: &ManifoldModel,
    spec: &CurveSpec,
    from: &[f64],
    to: &[f64],
    params: &[f64],
    nodes: &mut [f64],
) -> Result<()> {
    let n = model.ambient_dim();
    match model.shape().kind() {
        ShapeKind::Plane { .. } => {
            for (p, t) in params.iter().enumerate() {
                for k in 0..n {
                    nodes[p * n + k] = (1.0 - t) * from[k] + t * to[k];
                }
            }
            Ok(())
        }
        ShapeKind::Sphere { .. } => {
            let cos = linalg::dot(from, to).clamp(-1.0, 1.0);
            let angle = libm::acos(cos);
            if angle > core::f64::consts::PI - 1e-9 {
                return Err(Error::invalid(
                    "antipodal endpoints have no unique geodesic",
                ));
            }
            if angle < 1e-15 {
                for p in 0..params.len() {
                    nodes[p * n..(p + 1) * n].copy_from_slice(from);
                }
                return Ok(());
            }
            let s = libm::sin(angle);
            for (p, t) in params.iter().enumerate() {
                let wa = libm::sin((1.0 - t) * angle) / s;
                let wb = libm::sin(t * angle) / s;
                for k in 0..n {
                    nodes[p * n + k] = wa * from[k] + wb * to[k];
                }
            }
            Ok(())
        }
        _ => Err(unsupported(spec, model)),
    }
}

fn unsupported(spec: &CurveSpec, model: &ManifoldModel) -> Error {
    Error::unsupported(format!(
        "curve `{}` is not defined on `{}`",
        spec.label(),
        model.label()
    ))
}

/// Sums `term(0..count)` folding the sequence onto itself,
/// `(t_0 + t_{N−1}) + (t_1 + t_{N−2}) + …`, so a reversed curve whose terms
/// are negated sums to exactly the negated value.
fn folded_sum(count: usize, mut term: impl FnMut(usize) -> f64) -> f64 {
    let mut total = 0.0;
    for p in 0..count / 2 {
        total += term(p) + term(count - 1 - p);
    }
    if count % 2 == 1 {
        total += term(count / 2);
    }
    total
}

/// `∫_γ x^i dx^j` by the trapezoid rule.
pub fn line_integral_xdx(c: &Curve, i: usize, j: usize) -> Result<f64> {
    let dim = c.dim();
    for index in [i, j] {
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
    }
    Ok(folded_sum(c.segments(), |p| {
        let (a, b) = (c.node(p), c.node(p + 1));
        0.5 * (a[i] + b[i]) * (b[j] - a[j])
    }))
}

/// All `∫_γ x^i dx^j` at once.
pub fn xdx_matrix(c: &Curve) -> Matrix {
    let mut out = Matrix::zeros(c.dim());
    accumulate_xdx(c.dim(), c.nodes(), out.as_mut_slice());
    out
}

/// Trapezoid `∫ x^i dx^j` over a flat node buffer, written into `out[i * n + j]`,
/// with the same folded order as [`line_integral_xdx`].
pub(crate) fn accumulate_xdx(n: usize, nodes: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let segments = (nodes.len() / n).saturating_sub(1);
    let term = |p: usize, i: usize, j: usize| {
        let a = &nodes[p * n..(p + 1) * n];
        let b = &nodes[(p + 1) * n..(p + 2) * n];
        0.5 * (a[i] + b[i]) * (b[j] - a[j])
    };
    for p in 0..segments / 2 {
        let q = segments - 1 - p;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] += term(p, i, j) + term(q, i, j);
            }
        }
    }
    if segments % 2 == 1 {
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] += term(segments / 2, i, j);
            }
        }
    }
}

/// A 1-form `ω = Σ_k ω_k(x) dx_k` on the ambient space.
pub trait OneForm {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
}

/// 1-form from a closure.
pub struct FnForm<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnForm<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> OneForm for FnForm<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(x, out);
        Ok(())
    }
}

/// Constant-coefficient form.
pub struct ConstantForm(pub Vec<f64>);

impl OneForm for ConstantForm {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn eval(&self, _x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.0);
        Ok(())
    }
}

/// `ω_k = Γ^i_{jk}(x)`: row `(i, j)` of the connection form.
pub struct ConnectionRow<'a> {
    model: &'a ManifoldModel,
    i: usize,
    j: usize,
}

impl<'a> ConnectionRow<'a> {
    pub fn new(model: &'a ManifoldModel, i: usize, j: usize) -> Result<Self> {
        model.check_index(i)?;
        model.check_index(j)?;
        Ok(Self { model, i, j })
    }
}

impl OneForm for ConnectionRow<'_> {
    fn dim(&self) -> usize {
        self.model.ambient_dim()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.dim();
        let mut gamma = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        self.model.fill_christoffel(x, &mut gamma[..n * n * n]);
        let row = (self.i * n + self.j) * n;
        out.copy_from_slice(&gamma[row..row + n]);
        Ok(())
    }
}

/// `∫_γ ω` by the midpoint rule on the curve's quadrature points.
pub fn one_form_integral(c: &Curve, form: &dyn OneForm) -> Result<f64> {
    let n = c.dim();
    if form.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: form.dim(),
        });
    }
    let mut failure = None;
    let total = folded_sum(c.segments(), |p| {
        let mut w = [0.0; MAX_DIM];
        if let Err(e) = form.eval(c.midpoint(p), &mut w[..n]) {
            failure.get_or_insert(e);
        } else if w[..n].iter().any(|v| !v.is_finite()) {
            failure.get_or_insert(Error::NonFinite("one-form coefficients"));
        }
        let (a, b) = (c.node(p), c.node(p + 1));
        (0..n).map(|k| w[k] * (b[k] - a[k])).sum::<f64>()
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(total),
    }
}
