//! Grid search over per-sample displacements; the reference the
//! decomposition solver is checked against.

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::perf::PerfFn;
use crate::risk::mean;

use super::AmbiguityBall;

const MAX_SAMPLES: usize = 5;
const MAX_DIM: usize = 2;

/// Best objective `(1/N) sum h(y_k + q_k)` over displacements `q_k` on the
/// lattice `grid_step * Z^n` with `(1/N) sum |q_k| <= eps` and, if present,
/// `y_k + q_k` inside the support.
///
/// Norms are rounded up to multiples of `grid_step / 4` and the rounded
/// budget split is searched exhaustively by dynamic programming, so the
/// returned value is always achievable: a lower bound on the supremum that
/// converges as the step shrinks. Halving the step never lowers it.
pub fn dro_brute_force(h: &PerfFn, ball: &AmbiguityBall, grid_step: f64) -> Result<f64> {
    let center = ball.center();
    let (n_samples, dim) = (center.len(), center.dim());
    if n_samples > MAX_SAMPLES || dim > MAX_DIM {
        return Err(Error::TooLarge(format!(
            "brute force handles N <= {MAX_SAMPLES}, n <= {MAX_DIM}; got N = {n_samples}, n = {dim}"
        )));
    }
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::OutOfRange("grid step must be positive".into()));
    }
    h.validate()?;
    crate::error::check_dim(h.input_dim(), dim)?;
    if ball.radius() == 0.0 {
        return Ok(mean(&center.points().map(|y| h.eval_unchecked(y)).collect::<Vec<_>>()));
    }

    let budget = n_samples as f64 * ball.radius();
    let quantum = grid_step / 4.0;
    let levels = (budget / quantum + 1e-9).floor() as usize;
    let reach = (budget / grid_step + 1e-9).floor() as i64;
    let bbox = match ball.support() {
        Some(fs) => Some(fs.bounding_box()?),
        None => None,
    };

    let tables: Vec<Vec<f64>> = center
        .points()
        .map(|y| {
            // Index range per axis, clipped to the support's bounding box.
            let range = |axis: usize| -> (i64, i64) {
                match &bbox {
                    Some((lo, hi)) => (
                        ((lo[axis] - y[axis]) / grid_step - 1e-9).ceil().max(-reach as f64) as i64,
                        ((hi[axis] - y[axis]) / grid_step + 1e-9).floor().min(reach as f64) as i64,
                    ),
                    None => (-reach, reach),
                }
            };
            let mut best = vec![f64::NEG_INFINITY; levels + 1];
            let mut visit = |q: &[f64]| {
                let r = norm(q);
                let level = (r / quantum - 1e-9).ceil().max(0.0) as usize;
                if level > levels {
                    return;
                }
                let z: Vec<f64> = y.iter().zip(q).map(|(a, b)| a + b).collect();
                if let Some(fs) = ball.support() {
                    if !fs.contains_unchecked(&z) {
                        return;
                    }
                }
                let v = h.eval_unchecked(&z);
                if v > best[level] {
                    best[level] = v;
                }
            };
            let (i0, i1) = range(0);
            if dim == 1 {
                for i in i0..=i1 {
                    visit(&[i as f64 * grid_step]);
                }
            } else {
                let (j0, j1) = range(1);
                for i in i0..=i1 {
                    for j in j0..=j1 {
                        visit(&[i as f64 * grid_step, j as f64 * grid_step]);
                    }
                }
            }
            for l in 1..=levels {
                best[l] = best[l].max(best[l - 1]);
            }
            best
        })
        .collect();

    // Max-plus knapsack over the rounded budget levels.
    let mut acc = vec![0.0; levels + 1];
    for table in &tables {
        let mut next = vec![f64::NEG_INFINITY; levels + 1];
        for (j, slot) in next.iter_mut().enumerate() {
            for i in 0..=j {
                let v = acc[j - i] + table[i];
                if v > *slot {
                    *slot = v;
                }
            }
        }
        acc = next;
    }
    Ok(acc[levels] / n_samples as f64)
}
