//! The Brownian flow `dY = P(Y) ∘ dW` on an embedded manifold.
//!
//! One Brownian path drives every point it transports, so a curve is carried
//! by a single random diffeomorphism. Increments come from a counter-based
//! generator keyed by `(seed, path, step)`: any path can be replayed on its
//! own, in any order, on any thread.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::curves::Curve;
use crate::geometry::{AmbientPoint, ManifoldModel};
use crate::linalg;
use crate::{Error, Result, MAX_DIM};

/// Relative tolerance when matching times to whole steps.
const STEP_TOL: f64 = 1e-9;
/// Generator words reserved per step of one path.
const WORDS_PER_STEP: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Predictor `x* = x + P(x)ΔW`, corrector `x + ½(P(x) + P(x*))ΔW`.
    #[default]
    StratonovichHeun,
    /// `x + r(x)h + P(x)ΔW`.
    ItoEuler,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::StratonovichHeun => "stratonovich-heun",
            Scheme::ItoEuler => "ito-euler",
        }
    }
}

impl core::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stratonovich-heun" => Ok(Scheme::StratonovichHeun),
            "ito-euler" => Ok(Scheme::ItoEuler),
            other => Err(Error::invalid(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub scheme: Scheme,
    pub retract_every_step: bool,
    pub h: f64,
    pub record_deviation: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::StratonovichHeun,
            retract_every_step: true,
            h: 1e-4,
            record_deviation: false,
        }
    }
}

impl FlowConfig {
    pub fn with_h(self, h: f64) -> Self {
        Self { h, ..self }
    }

    /// `min(1e-4, Δt / 10)`.
    pub fn default_step(dt: f64) -> f64 {
        (dt / 10.0).min(1e-4)
    }
}

/// Reproducible source of Brownian increments `N(0, h I_n)`.
///
/// With antithetic sampling, paths `2m` and `2m + 1` share their noise with
/// opposite signs.
#[derive(Debug, Clone)]
pub struct BrownianDriver {
    master_seed: u64,
    h: f64,
    horizon: f64,
    dim: usize,
    antithetic: bool,
    template: ChaCha8Rng,
}

impl BrownianDriver {
    pub fn new(master_seed: u64, h: f64, horizon: f64, dim: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) || !(horizon >= h) || !horizon.is_finite() {
            return Err(Error::invalid(format!(
                "need 0 < h ≤ horizon, got h={h}, horizon={horizon}"
            )));
        }
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::invalid(format!(
                "ambient dimension {dim} outside 1..={MAX_DIM}"
            )));
        }
        Ok(Self {
            master_seed,
            h,
            horizon,
            dim,
            antithetic: true,
            template: ChaCha8Rng::seed_from_u64(master_seed),
        })
    }

    pub fn with_antithetic(mut self, antithetic: bool) -> Self {
        self.antithetic = antithetic;
        self
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn time_step(&self) -> f64 {
        self.h
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn antithetic(&self) -> bool {
        self.antithetic
    }

    /// Writes the increment of `path` over `[step h, (step + 1) h]`.
    pub fn increment(&self, path: u64, step: u64, out: &mut [f64]) {
        let (stream, sign) = self.stream_of(path);
        let mut rng = self.template.clone();
        rng.set_stream(stream);
        self.fill(&mut rng, step, sign, out);
    }

    fn stream_of(&self, path: u64) -> (u64, f64) {
        if self.antithetic {
            (path >> 1, if path & 1 == 0 { 1.0 } else { -1.0 })
        } else {
            (path, 1.0)
        }
    }

    fn fill(&self, rng: &mut ChaCha8Rng, step: u64, sign: f64, out: &mut [f64]) {
        rng.set_word_pos(u128::from(step) << WORDS_PER_STEP);
        let scale = sign * libm::sqrt(self.h);
        for v in out.iter_mut().take(self.dim) {
            let z: f64 = StandardNormal.sample(rng);
            *v = scale * z;
        }
    }
}

/// Brownian increments of one path at a step that is a whole multiple of the
/// driver's resolution.
pub(crate) struct PathNoise<'a> {
    driver: &'a BrownianDriver,
    rng: ChaCha8Rng,
    sign: f64,
    ratio: u64,
    buf: [f64; MAX_DIM],
}

impl<'a> PathNoise<'a> {
    pub(crate) fn new(driver: &'a BrownianDriver, path: u64, h: f64) -> Result<Self> {
        let ratio = whole_steps(h, driver.h).ok_or_else(|| {
            Error::invalid(format!(
                "flow step {h} is not a multiple of the driver step {}",
                driver.h
            ))
        })?;
        if ratio == 0 {
            return Err(Error::invalid("flow step must be positive"));
        }
        let (stream, sign) = driver.stream_of(path);
        let mut rng = driver.template.clone();
        rng.set_stream(stream);
        Ok(Self {
            driver,
            rng,
            sign,
            ratio: ratio as u64,
            buf: [0.0; MAX_DIM],
        })
    }

    pub(crate) fn increment(&mut self, step: u64, out: &mut [f64]) {
        let n = self.driver.dim;
        out[..n].iter_mut().for_each(|v| *v = 0.0);
        for fine in step * self.ratio..(step + 1) * self.ratio {
            self.driver
                .fill(&mut self.rng, fine, self.sign, &mut self.buf);
            for k in 0..n {
                out[k] += self.buf[k];
            }
        }
    }
}

/// Number of whole steps of length `h` in `t`, if `t` is (nearly) one.
pub(crate) fn whole_steps(t: f64, h: f64) -> Option<usize> {
    let steps = libm::round(t / h);
    if steps < 0.0 || (steps * h - t).abs() > STEP_TOL * t.abs().max(h) {
        return None;
    }
    Some(steps as usize)
}

/// Running Brownian path and discrete Lévy areas
/// `A^{kl} = Σ ½(W^k ΔW^l − W^l ΔW^k)`.
#[derive(Debug, Clone)]
pub(crate) struct NoiseState {
    pub(crate) w: [f64; MAX_DIM],
    pub(crate) area: [f64; MAX_DIM * MAX_DIM],
}

impl NoiseState {
    pub(crate) fn new() -> Self {
        Self {
            w: [0.0; MAX_DIM],
            area: [0.0; MAX_DIM * MAX_DIM],
        }
    }

    fn push(&mut self, n: usize, dw: &[f64]) {
        for k in 0..n {
            for l in k + 1..n {
                let a = 0.5 * (self.w[k] * dw[l] - self.w[l] * dw[k]);
                self.area[k * n + l] += a;
                self.area[l * n + k] -= a;
            }
        }
        for k in 0..n {
            self.w[k] += dw[k];
        }
    }
}

/// Validated pairing of a manifold, scheme and noise source.
pub(crate) struct Stepper<'a> {
    pub(crate) model: &'a ManifoldModel,
    pub(crate) cfg: &'a FlowConfig,
    pub(crate) driver: &'a BrownianDriver,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(
        model: &'a ManifoldModel,
        cfg: &'a FlowConfig,
        driver: &'a BrownianDriver,
    ) -> Result<Self> {
        if driver.dim != model.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.ambient_dim(),
                found: driver.dim,
            });
        }
        if !(cfg.h > 0.0) || cfg.h > driver.horizon * (1.0 + STEP_TOL) {
            return Err(Error::invalid(format!(
                "flow step {} must lie in (0, horizon {}]",
                cfg.h, driver.horizon
            )));
        }
        if whole_steps(cfg.h, driver.h).is_none_or(|r| r == 0) {
            return Err(Error::invalid(format!(
                "flow step {} is not a multiple of the driver step {}",
                cfg.h, driver.h
            )));
        }
        Ok(Self { model, cfg, driver })
    }

    /// Steps needed to reach `t`.
    pub(crate) fn steps_for(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) || t > self.driver.horizon * (1.0 + STEP_TOL) {
            return Err(Error::invalid(format!(
                "time {t} outside [0, horizon {}]",
                self.driver.horizon
            )));
        }
        whole_steps(t, self.cfg.h).ok_or_else(|| {
            Error::invalid(format!(
                "time {t} is not a multiple of the step {}",
                self.cfg.h
            ))
        })
    }

    /// Advances the flat point cloud `points` along `path`, calling `visit`
    /// after each step count listed in `checkpoints` (ascending). Returns the
    /// largest pre-retraction distance from the manifold when the config
    /// records it, otherwise zero.
    pub(crate) fn run(
        &self,
        path: u64,
        points: &mut [f64],
        checkpoints: &[usize],
        mut visit: impl FnMut(usize, &[f64], &NoiseState) -> Result<()>,
    ) -> Result<f64> {
        let n = self.model.ambient_dim();
        let mut noise = PathNoise::new(self.driver, path, self.cfg.h)?;
        let mut state = NoiseState::new();
        let mut dw = [0.0; MAX_DIM];
        let mut deviation: f64 = 0.0;
        let mut step = 0usize;
        for (c, &target) in checkpoints.iter().enumerate() {
            while step < target {
                noise.increment(step as u64, &mut dw);
                for x in points.chunks_exact_mut(n) {
                    let d = self.step_point(x, &dw[..n])?;
                    deviation = deviation.max(d);
                }
                state.push(n, &dw[..n]);
                step += 1;
            }
            visit(c, points, &state)?;
        }
        Ok(deviation)
    }

    /// One step in place; returns the pre-retraction distance if recorded.
    fn step_point(&self, x: &mut [f64], dw: &[f64]) -> Result<f64> {
        let n = dw.len();
        let mut next = [0.0; MAX_DIM];
        let mut pdw = [0.0; MAX_DIM];
        self.model.project_vector(x, dw, &mut pdw[..n]);
        match self.cfg.scheme {
            Scheme::StratonovichHeun => {
                let mut pred = [0.0; MAX_DIM];
                for k in 0..n {
                    pred[k] = x[k] + pdw[k];
                }
                let mut pdw2 = [0.0; MAX_DIM];
                self.model.project_vector(&pred[..n], dw, &mut pdw2[..n]);
                for k in 0..n {
                    next[k] = x[k] + 0.5 * (pdw[k] + pdw2[k]);
                }
            }
            Scheme::ItoEuler => {
                let mut r = [0.0; MAX_DIM];
                self.model.fill_drift(x, &mut r[..n]);
                for k in 0..n {
                    next[k] = x[k] + r[k] * self.cfg.h + pdw[k];
                }
            }
        }
        if next[..n].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow step"));
        }
        let deviation = if self.cfg.record_deviation {
            self.model.distance(&next[..n])
        } else {
            0.0
        };
        if self.cfg.retract_every_step {
            self.model.retract_into(&next[..n], x)?;
        } else {
            x.copy_from_slice(&next[..n]);
        }
        Ok(deviation)
    }
}

/// `Y_t(x)` along `path`.
pub fn evolve_point(
    model: &ManifoldModel,
    x: &[f64],
    t: f64,
    cfg: &FlowConfig,
    driver: &BrownianDriver,
    path: u64,
) -> Result<AmbientPoint> {
    model.check_on_manifold(x)?;
    let stepper = Stepper::new(model, cfg, driver)?;
    let steps = stepper.steps_for(t)?;
    let mut y = x.to_vec();
    stepper.run(path, &mut y, &[steps], |_, _, _| Ok(()))?;
    Ok(AmbientPoint::new(y))
}

/// `Y_t(γ)`: every node moved by the same noise path. Parameters and the
/// closed flag are kept; the pre-retraction deviation is recorded on the
/// result when the config asks for it.
pub fn transport_curve(
    model: &ManifoldModel,
    c: &Curve,
    t: f64,
    cfg: &FlowConfig,
    driver: &BrownianDriver,
    path: u64,
) -> Result<Curve> {
    if c.dim() != model.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.ambient_dim(),
            found: c.dim(),
        });
    }
    for p in 0..c.node_count() {
        model.check_on_manifold(c.node(p))?;
    }
    let stepper = Stepper::new(model, cfg, driver)?;
    let steps = stepper.steps_for(t)?;
    let mut nodes = c.nodes().to_vec();
    let deviation = stepper.run(path, &mut nodes, &[steps], |_, _, _| Ok(()))?;
    let model = cfg.retract_every_step.then_some(model);
    c.with_nodes(model, nodes, cfg.record_deviation.then_some(deviation))
}

/// Largest distance of the curve's nodes from the manifold before retraction
/// during the transport that produced it; the current node distances when
/// nothing was recorded.
pub fn max_deviation(model: &ManifoldModel, c: &Curve) -> f64 {
    match c.recorded_deviation() {
        Some(d) => d,
        None => (0..c.node_count())
            .map(|p| model.distance(c.node(p)))
            .fold(0.0, f64::max),
    }
}

/// Mean of `Y_t(x)` over paths `0..paths`, sequentially. Used by tests and
/// small diagnostics; the estimators run paths in parallel.
pub fn mean_endpoint(
    model: &ManifoldModel,
    x: &[f64],
    t: f64,
    cfg: &FlowConfig,
    driver: &BrownianDriver,
    paths: u64,
) -> Result<Vec<f64>> {
    let stepper = Stepper::new(model, cfg, driver)?;
    let steps = stepper.steps_for(t)?;
    let n = model.ambient_dim();
    let mut sums = vec![Vec::with_capacity(paths as usize); n];
    let mut y = vec![0.0; n];
    for path in 0..paths {
        y.copy_from_slice(x);
        stepper.run(path, &mut y, &[steps], |_, _, _| Ok(()))?;
        for k in 0..n {
            sums[k].push(y[k]);
        }
    }
    Ok(sums
        .iter()
        .map(|s| linalg::pairwise_sum(s) / paths as f64)
        .collect())
}
