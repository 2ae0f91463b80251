//! Experiment configuration: a flat `key = value` file with flag overrides.
//!
//! Every key has a default, so a resolved config is always complete and is
//! embedded verbatim in reports. Keys are kept in a fixed order.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use flowconn_core::curves::CurveSpec;
use flowconn_core::estimators::{ContourCase, Mode, QSource, Sampling, TheoremSettings};
use flowconn_core::geometry::IdentityTolerances;
use flowconn_core::{BrownianDriver, DerivativeMode, FlowConfig, ManifoldModel, Scheme};

use crate::grammar;
use crate::CliError;

/// Keys and defaults, in the order they are reported.
const DEFAULTS: &[(&str, &str)] = &[
    ("manifold", "sphere:n=3"),
    ("curve", "quarter-great-circle"),
    ("nodes", "200"),
    ("scheme", "stratonovich-heun"),
    ("h", "auto"),
    ("dt", "1e-3"),
    ("paths", "200000"),
    ("seed", "42"),
    ("mode", "oracle"),
    ("q_source", "analytic"),
    ("antithetic", "true"),
    ("control_variates", "false"),
    ("richardson", "false"),
    ("bias_constant", "10"),
    ("retract", "true"),
    ("derivative", "analytic"),
    ("fd_step", "1e-5"),
    ("points", "1000"),
    ("point", "auto"),
    ("direction", "auto"),
    ("target", "segment"),
    ("eps", "0.04,0.02,0.01"),
    ("radius", "0.2,0.1,0.05"),
    ("case", "specialization"),
    ("i", "1"),
    ("j", "2"),
    ("tol.oracle", "1e-10"),
    ("tol.projector", "auto"),
    ("tol.derivative", "auto"),
    ("tol.contour", "1e-10"),
    ("out", "-"),
    ("format", "json"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryTarget {
    Segment,
    Loop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    values: Vec<(&'static str, String)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|&(k, v)| (k, v.to_owned())).collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        DEFAULTS.iter().map(|&(k, _)| k)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let slot = self
            .values
            .iter_mut()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| CliError::field(key, "unknown configuration key"))?;
        slot.1 = value.trim().to_owned();
        Ok(())
    }

    /// `key=value`, as given to `--set`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::field("set", format!("expected key=value, got `{pair}`")))?;
        self.set(k.trim(), v)
    }

    /// Applies a config file's contents on top of the current values.
    pub fn merge_text(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::field(
                    "config",
                    format!("line {}: expected key = value", lineno + 1),
                )
            })?;
            self.set(k.trim(), v).map_err(|e| match e {
                CliError::Field { field, message } => CliError::Field {
                    field,
                    message: format!("{message} (config line {})", lineno + 1),
                },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        self.merge_text(&text)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("no configuration key `{key}`"))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&'static str, &str)> {
        self.values.iter().map(|(k, v)| (*k, v.as_str()))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.get(key);
        raw.parse()
            .map_err(|_| CliError::field(key, format!("cannot parse `{raw}`")))
    }

    fn positive(&self, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.parse(key)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(CliError::field(
                key,
                format!("must be positive, got `{}`", self.get(key)),
            ))
        }
    }

    fn count(&self, key: &str) -> Result<usize, CliError> {
        let v: usize = self.parse(key)?;
        if v == 0 {
            return Err(CliError::field(key, "must be positive"));
        }
        Ok(v)
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(CliError::field(
                key,
                format!("expected true or false, got `{other}`"),
            )),
        }
    }

    fn auto_or_positive(&self, key: &str) -> Result<Option<f64>, CliError> {
        if self.get(key) == "auto" {
            Ok(None)
        } else {
            self.positive(key).map(Some)
        }
    }

    fn ladder(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let values = grammar::parse_vector(key, self.get(key))?;
        if values.iter().any(|&v| v <= 0.0) {
            return Err(CliError::field(key, "entries must be positive"));
        }
        Ok(values)
    }

    /// 1-based ambient index, returned 0-based.
    fn index(&self, key: &str, model: &ManifoldModel) -> Result<usize, CliError> {
        let v = self.count(key)?;
        if v > model.ambient_dim() {
            return Err(CliError::field(
                key,
                format!("must lie in 1..={}", model.ambient_dim()),
            ));
        }
        Ok(v - 1)
    }

    pub fn model(&self) -> Result<ManifoldModel, CliError> {
        let mode = match self.get("derivative") {
            "analytic" => DerivativeMode::Analytic,
            "fd" | "finite-difference" => DerivativeMode::FiniteDifference,
            other => {
                return Err(CliError::field(
                    "derivative",
                    format!("unknown mode `{other}`"),
                ))
            }
        };
        Ok(grammar::parse_manifold(self.get("manifold"))?
            .with_derivative_mode(mode)
            .with_fd_step(self.positive("fd_step")?))
    }

    pub fn curve_spec(&self) -> Result<CurveSpec, CliError> {
        grammar::parse_curve(self.get("curve"))
    }

    pub fn nodes(&self) -> Result<usize, CliError> {
        let n = self.count("nodes")?;
        if n < 2 {
            return Err(CliError::field("nodes", "need at least 2 segments"));
        }
        Ok(n)
    }

    pub fn dt(&self) -> Result<f64, CliError> {
        self.positive("dt")
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.parse("seed")
    }

    pub fn points(&self) -> Result<usize, CliError> {
        self.count("points")
    }

    pub fn format(&self) -> Result<Format, CliError> {
        match self.get("format") {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(CliError::field(
                "format",
                format!("expected json or csv, got `{other}`"),
            )),
        }
    }

    /// `None` means standard output.
    pub fn out(&self) -> Option<&Path> {
        match self.get("out") {
            "-" | "" => None,
            path => Some(Path::new(path)),
        }
    }

    pub fn flow(&self) -> Result<FlowConfig, CliError> {
        let scheme = Scheme::from_str(self.get("scheme"))
            .map_err(|e| CliError::field("scheme", e.to_string()))?;
        let h = match self.auto_or_positive("h")? {
            Some(h) => h,
            None => FlowConfig::default_step(self.dt()?),
        };
        Ok(FlowConfig {
            scheme,
            retract_every_step: self.flag("retract")?,
            h,
            record_deviation: false,
        })
    }

    pub fn driver(&self, model: &ManifoldModel, horizon: f64) -> Result<BrownianDriver, CliError> {
        let flow = self.flow()?;
        let antithetic = self.flag("antithetic")?;
        BrownianDriver::new(self.seed()?, flow.h, horizon, model.ambient_dim())
            .map(|d| d.with_antithetic(antithetic))
            .map_err(|e| CliError::field("h", e.to_string()))
    }

    pub fn theorem_settings(&self) -> Result<TheoremSettings, CliError> {
        let mode =
            Mode::from_str(self.get("mode")).map_err(|e| CliError::field("mode", e.to_string()))?;
        let q_source = QSource::from_str(self.get("q_source"))
            .map_err(|e| CliError::field("q_source", e.to_string()))?;
        let sampling = Sampling::new(self.count("paths")?)
            .with_control_variates(self.flag("control_variates")?)
            .with_richardson(self.flag("richardson")?);
        let bias_constant: f64 = self.parse("bias_constant")?;
        if !(bias_constant >= 0.0) {
            return Err(CliError::field("bias_constant", "must be non-negative"));
        }
        Ok(TheoremSettings {
            mode,
            dt: self.dt()?,
            sampling,
            q_source,
            bias_constant,
            oracle_tol: self.positive("tol.oracle")?,
        })
    }

    pub fn identity_tolerances(
        &self,
        model: &ManifoldModel,
    ) -> Result<IdentityTolerances, CliError> {
        let auto = IdentityTolerances::for_model(model);
        Ok(IdentityTolerances {
            projector: self
                .auto_or_positive("tol.projector")?
                .unwrap_or(auto.projector),
            derivative: self
                .auto_or_positive("tol.derivative")?
                .unwrap_or(auto.derivative),
        })
    }

    pub fn contour_tol(&self) -> Result<f64, CliError> {
        self.positive("tol.contour")
    }

    /// The configured point, or the retraction of the first basis vector.
    pub fn point(&self, model: &ManifoldModel) -> Result<Vec<f64>, CliError> {
        let x = match self.get("point") {
            "auto" => {
                let mut e = vec![0.0; model.ambient_dim()];
                e[0] = 1.0;
                model
                    .retract(&e)
                    .map_err(|err| CliError::field("point", err.to_string()))?
                    .into_inner()
            }
            raw => grammar::parse_vector("point", raw)?,
        };
        model
            .check_dim(&x)
            .map_err(|e| CliError::field("point", e.to_string()))?;
        model
            .check_on_manifold(&x)
            .map_err(|e| CliError::field("point", e.to_string()))?;
        Ok(x)
    }

    /// The configured direction, or the projection of the second basis vector.
    pub fn direction(&self, model: &ManifoldModel, x: &[f64]) -> Result<Vec<f64>, CliError> {
        let v = match self.get("direction") {
            "auto" => {
                let n = model.ambient_dim();
                let mut e = vec![0.0; n];
                e[1 % n] = 1.0;
                model
                    .projection_at(x)
                    .map_err(|err| CliError::field("direction", err.to_string()))?
                    .mul_vec(&e)
            }
            raw => grammar::parse_vector("direction", raw)?,
        };
        model
            .check_dim(&v)
            .map_err(|e| CliError::field("direction", e.to_string()))?;
        Ok(v)
    }

    pub fn target(&self) -> Result<RecoveryTarget, CliError> {
        match self.get("target") {
            "segment" => Ok(RecoveryTarget::Segment),
            "loop" => Ok(RecoveryTarget::Loop),
            other => Err(CliError::field(
                "target",
                format!("expected segment or loop, got `{other}`"),
            )),
        }
    }

    pub fn eps_ladder(&self) -> Result<Vec<f64>, CliError> {
        self.ladder("eps")
    }

    pub fn radius_ladder(&self) -> Result<Vec<f64>, CliError> {
        self.ladder("radius")
    }

    pub fn contour_case(&self, model: &ManifoldModel) -> Result<ContourCase, CliError> {
        match self.get("case") {
            "specialization" => Ok(ContourCase::Specialization {
                i: self.index("i", model)?,
                j: self.index("j", model)?,
            }),
            "constant" => Ok(ContourCase::Constant),
            "exact-form" => Ok(ContourCase::ExactForm),
            other => Err(CliError::field(
                "case",
                format!("expected specialization, constant or exact-form, got `{other}`"),
            )),
        }
    }

    /// Parses every field once so that errors surface before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let model = self.model()?;
        self.curve_spec()?;
        self.nodes()?;
        self.flow()?;
        self.seed()?;
        self.points()?;
        self.format()?;
        self.theorem_settings()?;
        self.identity_tolerances(&model)?;
        self.contour_tol()?;
        self.target()?;
        self.eps_ladder()?;
        self.radius_ladder()?;
        self.contour_case(&model)?;
        self.flag("antithetic")?;
        Ok(())
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
