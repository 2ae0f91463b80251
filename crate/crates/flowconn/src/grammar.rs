//! Text grammars for manifolds, curves and vectors.
//!
//! ```text
//! sphere:n=3   circle   torus:R=2,r=1   ellipsoid:a=1,b=2,c=3   plane:n=3,k=2
//! quarter-great-circle   great-circle   poloidal-loop
//! loop:center=0;0.6;0.8,radius=0.1
//! segment:from=1;0;0,to=0;1;0,via=geodesic
//! ray:origin=1;0;0,direction=0;1;0,length=0.01
//! ```

use std::collections::BTreeMap;

use flowconn_core::curves::{CurveSpec, SegmentPath};
use flowconn_core::ManifoldModel;

use crate::CliError;

fn split_spec(text: &str) -> (&str, &str) {
    match text.split_once(':') {
        Some((head, tail)) => (head.trim(), tail.trim()),
        None => (text.trim(), ""),
    }
}

/// `key=value` pairs separated by commas; duplicate and empty keys rejected.
fn parameters<'a>(field: &str, text: &'a str) -> Result<BTreeMap<&'a str, &'a str>, CliError> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::field(field, format!("expected key=value, got `{part}`")))?;
        if out.insert(k.trim(), v.trim()).is_some() {
            return Err(CliError::field(
                field,
                format!("duplicate parameter `{}`", k.trim()),
            ));
        }
    }
    Ok(out)
}

fn take<'a>(
    field: &str,
    params: &mut BTreeMap<&'a str, &'a str>,
    key: &str,
) -> Result<&'a str, CliError> {
    params
        .remove(key)
        .ok_or_else(|| CliError::field(field, format!("missing parameter `{key}`")))
}

fn finish(field: &str, params: BTreeMap<&str, &str>) -> Result<(), CliError> {
    match params.keys().next() {
        Some(k) => Err(CliError::field(field, format!("unknown parameter `{k}`"))),
        None => Ok(()),
    }
}

fn number<T: std::str::FromStr>(field: &str, text: &str) -> Result<T, CliError> {
    text.trim()
        .parse()
        .map_err(|_| CliError::field(field, format!("`{text}` is not a valid number")))
}

/// Comma- or semicolon-separated reals.
pub fn parse_vector(field: &str, text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split([',', ';']).map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::field(
            field,
            format!("`{text}` is not a list of numbers"),
        ));
    }
    parts
        .iter()
        .map(|p| {
            let v: f64 = number(field, p)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::field(field, format!("`{p}` is not finite")))
            }
        })
        .collect()
}

pub fn parse_manifold(text: &str) -> Result<ManifoldModel, CliError> {
    const FIELD: &str = "manifold";
    let (name, rest) = split_spec(text);
    let mut p = parameters(FIELD, rest)?;
    let model = match name {
        "sphere" => {
            let n = number(FIELD, take(FIELD, &mut p, "n")?)?;
            ManifoldModel::sphere(n)
        }
        "circle" => Ok(ManifoldModel::circle()),
        "torus" => {
            let major = number(FIELD, take(FIELD, &mut p, "R")?)?;
            let minor = number(FIELD, take(FIELD, &mut p, "r")?)?;
            ManifoldModel::torus(major, minor)
        }
        "ellipsoid" => {
            let a = number(FIELD, take(FIELD, &mut p, "a")?)?;
            let b = number(FIELD, take(FIELD, &mut p, "b")?)?;
            let c = number(FIELD, take(FIELD, &mut p, "c")?)?;
            ManifoldModel::ellipsoid(a, b, c)
        }
        "plane" => {
            let n = number(FIELD, take(FIELD, &mut p, "n")?)?;
            let k = number(FIELD, take(FIELD, &mut p, "k")?)?;
            ManifoldModel::plane(n, k)
        }
        other => {
            return Err(CliError::field(
                FIELD,
                format!("unknown manifold `{other}`"),
            ))
        }
    };
    finish(FIELD, p)?;
    model.map_err(|e| CliError::field(FIELD, e.to_string()))
}

pub fn parse_curve(text: &str) -> Result<CurveSpec, CliError> {
    const FIELD: &str = "curve";
    let (name, rest) = split_spec(text);
    let mut p = parameters(FIELD, rest)?;
    let spec = match name {
        "quarter-great-circle" => CurveSpec::QuarterGreatCircle,
        "great-circle" => CurveSpec::GreatCircle,
        "poloidal-loop" => CurveSpec::PoloidalLoop,
        "loop" => CurveSpec::Loop {
            center: parse_vector(FIELD, take(FIELD, &mut p, "center")?)?,
            radius: number(FIELD, take(FIELD, &mut p, "radius")?)?,
        },
        "segment" => CurveSpec::Segment {
            from: parse_vector(FIELD, take(FIELD, &mut p, "from")?)?,
            to: parse_vector(FIELD, take(FIELD, &mut p, "to")?)?,
            via: match p.remove("via").unwrap_or("geodesic") {
                "geodesic" => SegmentPath::Geodesic,
                "retraction" => SegmentPath::Retraction,
                other => {
                    return Err(CliError::field(
                        FIELD,
                        format!("unknown segment path `{other}`"),
                    ))
                }
            },
        },
        "ray" => CurveSpec::Ray {
            origin: parse_vector(FIELD, take(FIELD, &mut p, "origin")?)?,
            direction: parse_vector(FIELD, take(FIELD, &mut p, "direction")?)?,
            length: number(FIELD, take(FIELD, &mut p, "length")?)?,
        },
        other => return Err(CliError::field(FIELD, format!("unknown curve `{other}`"))),
    };
    finish(FIELD, p)?;
    Ok(spec)
}
