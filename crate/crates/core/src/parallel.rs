//! Order-preserving fan-out over fixed row chunks.
//!
//! Rows are produced in chunks of [`CHUNK_ROWS`]; the output layout does not
//! depend on how chunks are scheduled, so every reduction done afterwards
//! sees the same values in the same order.

use alloc::vec;
use alloc::vec::Vec;

use crate::Result;

pub(crate) const CHUNK_ROWS: usize = 256;

/// Fills a `rows × width` buffer; `fill(first_row, chunk)` writes the rows of
/// one chunk. The first error in row order wins.
pub(crate) fn fill_rows<F>(rows: usize, width: usize, fill: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync + Send,
{
    let mut out = vec![0.0; rows * width];
    if rows == 0 || width == 0 {
        return Ok(out);
    }
    run(&mut out, width, &fill)?;
    Ok(out)
}

#[cfg(feature = "parallel")]
fn run<F>(out: &mut [f64], width: usize, fill: &F) -> Result<()>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync + Send,
{
    use rayon::prelude::*;
    let results: Vec<Result<()>> = out
        .par_chunks_mut(CHUNK_ROWS * width)
        .enumerate()
        .map(|(c, chunk)| fill(c * CHUNK_ROWS, chunk))
        .collect();
    results.into_iter().collect()
}

#[cfg(not(feature = "parallel"))]
fn run<F>(out: &mut [f64], width: usize, fill: &F) -> Result<()>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync + Send,
{
    for (c, chunk) in out.chunks_mut(CHUNK_ROWS * width).enumerate() {
        fill(c * CHUNK_ROWS, chunk)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_land_in_order() {
        let out = fill_rows(1000, 2, |first, chunk| {
            for (r, row) in chunk.chunks_mut(2).enumerate() {
                row[0] = (first + r) as f64;
                row[1] = -((first + r) as f64);
            }
            Ok(())
        })
        .unwrap();
        for r in 0..1000 {
            assert_eq!(out[2 * r], r as f64);
            assert_eq!(out[2 * r + 1], -(r as f64));
        }
    }

    #[test]
    fn first_error_wins() {
        let err = fill_rows(1000, 1, |first, _| {
            if first >= 256 {
                Err(crate::Error::invalid(alloc::format!("chunk {first}")))
            } else {
                Ok(())
            }
        })
        .unwrap_err();
        assert_eq!(err, crate::Error::invalid("chunk 256"));
    }
}
