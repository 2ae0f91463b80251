//! Sample means and standard errors, optionally with regression control
//! variates. Sums are pairwise over a fixed row order.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{self, pairwise_sum};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Summary {
    pub(crate) mean: Vec<f64>,
    pub(crate) se: Vec<f64>,
}

fn column(data: &[f64], width: usize, col: usize) -> Vec<f64> {
    data.chunks_exact(width).map(|row| row[col]).collect()
}

fn centered(v: &mut [f64]) -> f64 {
    let mean = pairwise_sum(v) / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    mean
}

/// Column means and standard errors of a `rows × width` sample. With
/// `controls` (`rows × p`, each column of known mean zero), every column is
/// adjusted by its least-squares projection onto the controls.
pub(crate) fn summarize(
    samples: &[f64],
    width: usize,
    controls: Option<(&[f64], usize)>,
) -> Summary {
    let rows = samples.len().checked_div(width).unwrap_or(0);
    let mut mean = vec![0.0; width];
    let mut se = vec![0.0; width];
    if rows == 0 {
        return Summary { mean, se };
    }
    let usable = controls.filter(|(_, p)| *p > 0 && rows > p + 1);
    let ctrl = usable.map(|(data, p)| {
        let cols: Vec<Vec<f64>> = (0..p).map(|a| column(data, p, a)).collect();
        let mut means = vec![0.0; p];
        let mut centred = cols;
        for (a, c) in centred.iter_mut().enumerate() {
            means[a] = centered(c);
        }
        let mut gram = vec![0.0; p * p];
        let mut prod = vec![0.0; rows];
        for a in 0..p {
            for b in a..p {
                for r in 0..rows {
                    prod[r] = centred[a][r] * centred[b][r];
                }
                let v = pairwise_sum(&prod);
                gram[a * p + b] = v;
                gram[b * p + a] = v;
            }
        }
        (centred, means, gram, p)
    });

    let mut prod = vec![0.0; rows];
    for col in 0..width {
        let mut y = column(samples, width, col);
        let ybar = centered(&mut y);
        let adjusted = ctrl.as_ref().and_then(|(centred, means, gram, p)| {
            let p = *p;
            let mut beta: Vec<f64> = (0..p)
                .map(|a| {
                    for r in 0..rows {
                        prod[r] = centred[a][r] * y[r];
                    }
                    pairwise_sum(&prod)
                })
                .collect();
            let mut g = gram.clone();
            linalg::solve(p, &mut g, &mut beta)?;
            for r in 0..rows {
                let fit: f64 = (0..p).map(|a| beta[a] * centred[a][r]).sum();
                let e = y[r] - fit;
                prod[r] = e * e;
            }
            let var = pairwise_sum(&prod) / (rows - p - 1) as f64;
            let shift: f64 = (0..p).map(|a| beta[a] * means[a]).sum();
            Some((ybar - shift, libm::sqrt(var / rows as f64)))
        });
        let (m, s) = adjusted.unwrap_or_else(|| {
            if rows < 2 {
                return (ybar, 0.0);
            }
            for r in 0..rows {
                prod[r] = y[r] * y[r];
            }
            let var = pairwise_sum(&prod) / (rows - 1) as f64;
            (ybar, libm::sqrt(var / rows as f64))
        });
        mean[col] = m;
        se[col] = s;
    }
    Summary { mean, se }
}
