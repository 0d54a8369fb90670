//! Type-1 Wasserstein distances: the concentration radius of an empirical
//! measure and exact distances between small empirical measures.

use crate::error::{check_dim, Error, Result};
use crate::linalg::dist;
use crate::sampling::EmpiricalDistribution;

/// Largest sample count accepted by [`w1_exact_matching`].
pub const MATCHING_LIMIT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusParams {
    pub n_samples: usize,
    pub dim: usize,
    pub beta: f64,
    /// Diameter of the support, in output units.
    pub rho: f64,
}

impl RadiusParams {
    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::OutOfRange("N must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::OutOfRange("dimension must be at least 1".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::OutOfRange(format!("beta = {} not in (0, 1)", self.beta)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::OutOfRange(format!("rho = {} must be finite and >= 0", self.rho)));
        }
        Ok(())
    }
}

/// Dimension constant `C*` of the concentration bound.
///
/// The closed form is negative at n = 1 (clamped to 0 here) and singular at
/// n = 2, where the n = 3 value of the singular factor is substituted.
pub fn dimension_constant(n: usize) -> f64 {
    let nf = n as f64;
    let singular = match n {
        2 => 1.0 / (1.0 - 2f64.powf(-0.5)),
        _ => 1.0 / (1.0 - 2f64.powf(1.0 - nf / 2.0)),
    };
    (nf.sqrt() * 2f64.powf((nf - 2.0) / 2.0) * (singular + 2.0)).max(0.0)
}

/// Warning attached to certificates whose radius uses a substituted constant.
pub fn radius_warning(n: usize) -> Option<String> {
    match n {
        1 => Some("n = 1: negative dimension constant clamped to 0 in the W1 radius".into()),
        2 => Some("n = 2: W1 radius constant is singular; the n = 3 factor was substituted".into()),
        _ => None,
    }
}

/// Radius `eps` with `P(W1(P, P_N) >= eps) <= beta` for an N-sample empirical
/// measure of a distribution supported on a set of diameter `rho`.
pub fn w1_radius(p: &RadiusParams) -> Result<f64> {
    p.validate()?;
    let n = p.n_samples as f64;
    let d = p.dim as f64;
    let c = dimension_constant(p.dim);
    let tail = d.sqrt() * (2.0 * (1.0 / p.beta).ln()).sqrt();
    Ok(p.rho * (c * n.powf(-1.0 / d) + tail / n.sqrt()))
}

/// Exact W1 between two 1-D empirical measures by integrating the distance
/// between quantile functions. Sample counts may differ.
pub fn w1_exact_1d(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64> {
    check_dim(1, a.dim())?;
    check_dim(1, b.dim())?;
    let mut xa = a.flat().to_vec();
    let mut xb = b.flat().to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    if xa.len() == xb.len() {
        let s: f64 = xa.iter().zip(&xb).map(|(x, y)| (x - y).abs()).sum();
        return Ok(s / xa.len() as f64);
    }
    let (na, nb) = (xa.len(), xb.len());
    // Walk the merged quantile levels i/na and j/nb; work in units of 1/(na*nb).
    let (mut i, mut j) = (0usize, 0usize);
    let (mut level, mut total) = (0usize, 0.0);
    let denom = na * nb;
    while i < na && j < nb {
        let next_a = (i + 1) * nb;
        let next_b = (j + 1) * na;
        let next = next_a.min(next_b);
        total += (next - level) as f64 * (xa[i] - xb[j]).abs();
        level = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok(total / denom as f64)
}

/// Exact W1 between equal-size empirical measures in any dimension:
/// min-cost perfect matching under Euclidean cost, divided by N.
pub fn w1_exact_matching(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    check_dim(a.dim(), b.dim())?;
    if a.len() > MATCHING_LIMIT {
        return Err(Error::TooLarge(format!(
            "{} points; the matching oracle accepts at most {MATCHING_LIMIT}",
            a.len()
        )));
    }
    let n = a.len();
    let cost: Vec<Vec<f64>> = a
        .points()
        .map(|p| b.points().map(|q| dist(p, q)).collect())
        .collect();
    let assignment = hungarian(&cost);
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok(total / n as f64)
}

/// Minimum-cost assignment for a square cost matrix (shortest augmenting
/// paths with potentials). Returns `assignment[row] = column`.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual root column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[matched_row[j] - 1] = j - 1;
    }
    assignment
}
