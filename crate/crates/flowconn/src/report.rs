//! Serialised theorem reports.
//!
//! Indices are written 1-based. Both formats embed the full resolved
//! configuration.

use serde::ser::{Serialize, SerializeMap, Serializer};

use flowconn_core::estimators::{TheoremEntry, TheoremReport};

use crate::config::{ExperimentConfig, Format};
use crate::CliError;

pub const CSV_COLUMNS: [&str; 12] = [
    "i",
    "j",
    "lhs",
    "rhs",
    "rhs_se",
    "dpsi_ij",
    "dpsi_ji",
    "q_circulation",
    "boundary_ij",
    "boundary_ji",
    "residual",
    "pass",
];

struct ConfigMap<'a>(&'a ExperimentConfig);

impl Serialize for ConfigMap<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(None)?;
        for (k, v) in self.0.entries() {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[derive(serde::Serialize)]
struct Components {
    dpsi_ij: f64,
    dpsi_ji: f64,
    q_circulation: f64,
    boundary_ij: f64,
    boundary_ji: f64,
}

#[derive(serde::Serialize)]
struct Entry {
    i: usize,
    j: usize,
    lhs: f64,
    rhs: f64,
    rhs_se: f64,
    components: Components,
    residual: f64,
    pass: bool,
}

impl From<&TheoremEntry> for Entry {
    fn from(e: &TheoremEntry) -> Self {
        let c = &e.components;
        Entry {
            i: e.i + 1,
            j: e.j + 1,
            lhs: e.lhs,
            rhs: e.rhs,
            rhs_se: e.rhs_se,
            components: Components {
                dpsi_ij: c.dpsi_ij,
                dpsi_ji: c.dpsi_ji,
                q_circulation: c.q_circulation,
                boundary_ij: c.boundary_ij,
                boundary_ji: c.boundary_ji,
            },
            residual: e.residual,
            pass: e.pass,
        }
    }
}

#[derive(serde::Serialize)]
struct Document<'a> {
    manifold: &'a str,
    curve: &'a str,
    mode: &'static str,
    q_source: &'static str,
    paths: usize,
    dt: f64,
    h: f64,
    #[serde(rename = "N")]
    segments: usize,
    seed: u64,
    allowance: f64,
    passed: bool,
    max_abs_residual: f64,
    config: ConfigMap<'a>,
    entries: Vec<Entry>,
}

/// Renders `report` in the configured format.
pub fn render(
    report: &TheoremReport,
    curve: &str,
    cfg: &ExperimentConfig,
) -> Result<String, CliError> {
    match cfg.format()? {
        Format::Json => Ok(to_json(report, curve, cfg)?),
        Format::Csv => to_csv(report, cfg),
    }
}

pub fn to_json(
    report: &TheoremReport,
    curve: &str,
    cfg: &ExperimentConfig,
) -> Result<String, CliError> {
    let doc = Document {
        manifold: &report.manifold,
        curve,
        mode: report.mode.name(),
        q_source: report.q_source.name(),
        paths: report.paths,
        dt: report.dt,
        h: report.h,
        segments: report.segments,
        seed: cfg.seed()?,
        allowance: report.allowance,
        passed: report.passed(),
        max_abs_residual: report.max_abs_residual(),
        config: ConfigMap(cfg),
        entries: report.entries.iter().map(Entry::from).collect(),
    };
    let mut text =
        serde_json::to_string_pretty(&doc).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn to_csv(report: &TheoremReport, cfg: &ExperimentConfig) -> Result<String, CliError> {
    let mut text = String::new();
    for (k, v) in cfg.entries() {
        text.push_str(&format!("# {k} = {v}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    for e in &report.entries {
        let c = &e.components;
        let row = [
            (e.i + 1).to_string(),
            (e.j + 1).to_string(),
            format!("{:?}", e.lhs),
            format!("{:?}", e.rhs),
            format!("{:?}", e.rhs_se),
            format!("{:?}", c.dpsi_ij),
            format!("{:?}", c.dpsi_ji),
            format!("{:?}", c.q_circulation),
            format!("{:?}", c.boundary_ij),
            format!("{:?}", c.boundary_ji),
            format!("{:?}", e.residual),
            e.pass.to_string(),
        ];
        w.write_record(&row).map_err(csv_error)?;
    }
    let body = w
        .into_inner()
        .map_err(|e| CliError::Output(e.to_string()))?;
    text.push_str(std::str::from_utf8(&body).expect("csv output is UTF-8"));
    Ok(text)
}

pub(crate) fn csv_error(e: csv::Error) -> CliError {
    CliError::Output(e.to_string())
}
