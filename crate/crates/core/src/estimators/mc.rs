//! Shared Monte Carlo driver: runs sampling units (single paths or
//! antithetic pairs) over a point cloud and summarises per-unit outputs.

use alloc::vec;
use alloc::vec::Vec;

use super::Sampling;
use crate::flow::{NoiseState, Stepper};
use crate::parallel::fill_rows;
use crate::stats::{summarize, Summary};
use crate::{Error, Result};

/// Number of sampling units for `paths` individual paths.
pub(crate) fn units(sampling: &Sampling, antithetic: bool) -> Result<usize> {
    let paths = sampling.paths;
    if antithetic {
        if !paths.is_multiple_of(2) || paths < 4 {
            return Err(Error::invalid(alloc::format!(
                "antithetic sampling needs an even path count of at least 4, got {paths}"
            )));
        }
        Ok(paths / 2)
    } else if paths < 2 {
        Err(Error::invalid(alloc::format!(
            "need at least 2 paths, got {paths}"
        )))
    } else {
        Ok(paths)
    }
}

fn control_count(n: usize, antithetic: bool) -> usize {
    n * n + if antithetic { 0 } else { n }
}

/// Mean-zero functionals of the driving noise at time `t`: scaled
/// `W^k W^l − δ_{kl} t`, Lévy areas and, without antithetic pairing, `W^k`.
fn fill_controls(n: usize, t: f64, antithetic: bool, noise: &NoiseState, out: &mut [f64]) {
    let mut c = 0;
    for k in 0..n {
        for l in k..n {
            let delta = if k == l { t } else { 0.0 };
            out[c] = (noise.w[k] * noise.w[l] - delta) / t;
            c += 1;
        }
    }
    for k in 0..n {
        for l in k + 1..n {
            out[c] = noise.area[k * n + l] / t;
            c += 1;
        }
    }
    if !antithetic {
        let root = libm::sqrt(t);
        for k in 0..n {
            out[c] = noise.w[k] / root;
            c += 1;
        }
    }
}

/// Transports `points` along every path and reduces `width` outputs per
/// unit. `output(states, row)` receives the cloud at each checkpoint.
pub(crate) fn run<F>(
    stepper: &Stepper<'_>,
    sampling: &Sampling,
    points: &[f64],
    checkpoints: &[usize],
    width: usize,
    output: F,
) -> Result<Summary>
where
    F: Fn(&[Vec<f64>], &mut [f64]) -> Result<()> + Sync + Send,
{
    let antithetic = stepper.driver.antithetic();
    let units = units(sampling, antithetic)?;
    let n = stepper.model.ambient_dim();
    let final_time = checkpoints.last().copied().unwrap_or(0) as f64 * stepper.cfg.h;
    let p = if sampling.control_variates && final_time > 0.0 {
        control_count(n, antithetic)
    } else {
        0
    };
    let stride = width + p;
    let per_unit: u64 = if antithetic { 2 } else { 1 };

    let rows = fill_rows(units, stride, |first, chunk| {
        let mut cloud = points.to_vec();
        let mut states = vec![vec![0.0; points.len()]; checkpoints.len()];
        let mut row = vec![0.0; width];
        for (r, out) in chunk.chunks_exact_mut(stride).enumerate() {
            let unit = (first + r) as u64;
            out.iter_mut().for_each(|v| *v = 0.0);
            for member in 0..per_unit {
                cloud.copy_from_slice(points);
                let capture_controls = member == 0 && p > 0;
                stepper.run(
                    unit * per_unit + member,
                    &mut cloud,
                    checkpoints,
                    |c, state, noise| {
                        states[c].copy_from_slice(state);
                        if capture_controls && c + 1 == checkpoints.len() {
                            fill_controls(n, final_time, antithetic, noise, &mut out[width..]);
                        }
                        Ok(())
                    },
                )?;
                output(&states, &mut row)?;
                for (o, v) in out[..width].iter_mut().zip(&row) {
                    *o += v;
                }
            }
            if antithetic {
                out[..width].iter_mut().for_each(|v| *v *= 0.5);
            }
        }
        Ok(())
    })?;

    if p == 0 {
        return Ok(summarize(&rows, width, None));
    }
    let mut values = Vec::with_capacity(units * width);
    let mut controls = Vec::with_capacity(units * p);
    for row in rows.chunks_exact(stride) {
        values.extend_from_slice(&row[..width]);
        controls.extend_from_slice(&row[width..]);
    }
    Ok(summarize(&values, width, Some((&controls, p))))
}
