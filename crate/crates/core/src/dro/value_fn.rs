//! Per-sample value functions and the budget water-filling.
//!
//! For a concave objective `g` the best value reachable from centre `y` with
//! transport distance at most `t`,
//!
//! ```text
//! phi(t) = sup { g(z) : |z - y| <= t, z in support }
//! ```
//!
//! is concave and nondecreasing in `t`. The ball problem is separable across
//! samples once the budget is split, so the optimum is found by tabulating
//! each `phi` on a grid (refined until the concave envelope pins it down) and
//! handing budget to the steepest remaining segments first.

use rayon::prelude::*;

use crate::conic::{max_min_affine_on_ball, max_min_affine_on_polytope};
use crate::linalg::{dist, dot, norm};
use crate::perf::AffinePiece;
use crate::support::{FittedSupport, CONTAINS_TOL};

const INITIAL_SEGMENTS: usize = 8;
const MAX_GRID_POINTS: usize = 4096;
/// Half the support's membership tolerance: repaired points still count as
/// inside.
const REPAIR_SLACK: f64 = 0.5 * CONTAINS_TOL;

/// `min_i c_i·z + d_i` together with the feasible region.
pub(crate) struct InnerProblem<'a> {
    pieces: &'a [AffinePiece],
    support: Option<&'a FittedSupport>,
    lipschitz: f64,
}

impl<'a> InnerProblem<'a> {
    pub(crate) fn new(pieces: &'a [AffinePiece], support: Option<&'a FittedSupport>) -> Self {
        let lipschitz = pieces.iter().map(|p| norm(&p.a)).fold(0.0, f64::max);
        Self {
            pieces,
            support,
            lipschitz,
        }
    }

    pub(crate) fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub(crate) fn value(&self, z: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.eval(z))
            .fold(f64::INFINITY, f64::min)
    }

    /// `phi` is linear in `t` (single piece, no support), so two grid points
    /// describe it exactly.
    fn is_linear(&self) -> bool {
        self.support.is_none() && self.pieces.len() == 1
    }

    /// A feasible maximizer of `g` over the ball of radius `t` about `y`.
    /// `None` if the conic solver fails.
    fn best_point(&self, y: &[f64], t: f64) -> Option<Vec<f64>> {
        if t <= 0.0 {
            return Some(y.to_vec());
        }
        if y.len() == 1 {
            return Some(self.best_point_1d(y[0], t));
        }
        if self.is_linear() {
            let c = &self.pieces[0].a;
            let len = norm(c);
            if len == 0.0 {
                return Some(y.to_vec());
            }
            return Some(y.iter().zip(c).map(|(yi, ci)| yi + t * ci / len).collect());
        }
        let pieces: Vec<(&[f64], f64)> = self.pieces.iter().map(|p| (p.a.as_slice(), p.b)).collect();
        let (rows, rhs) = match self.support {
            Some(fs) => fs.constraints(),
            None => (Vec::new(), &[][..]),
        };
        let z = max_min_affine_on_ball(&pieces, y, t, &rows, rhs)?;
        Some(self.repair(y, &z, t))
    }

    /// Pulls a solver point back into the ball and the polytope. Violated
    /// faces are projected out first (the centre lies on the inner side of
    /// each, so this never moves the point away from it); any residue is
    /// removed by shrinking along the segment from the centre.
    fn repair(&self, y: &[f64], z: &[f64], t: f64) -> Vec<f64> {
        let mut q: Vec<f64> = z.iter().zip(y).map(|(a, b)| a - b).collect();
        let len = norm(&q);
        if len > t && t.is_finite() {
            q.iter_mut().for_each(|v| *v *= t / len);
        }
        if let Some(fs) = self.support {
            let rows = fs.template.rows();
            let mut p: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
            for _ in 0..4 * rows.len() {
                let mut moved = false;
                for (v, theta) in rows.iter().zip(&fs.theta) {
                    let excess = dot(v, &p) - theta;
                    if excess > 0.0 {
                        p.iter_mut().zip(v).for_each(|(pi, vi)| *pi -= excess * vi);
                        moved = true;
                    }
                }
                if !moved {
                    break;
                }
            }
            q = p.iter().zip(y).map(|(a, b)| a - b).collect();
            let mut s: f64 = 1.0;
            for (v, theta) in rows.iter().zip(&fs.theta) {
                let vq = dot(v, &q);
                if vq > 0.0 {
                    let slack = (theta + REPAIR_SLACK - dot(v, y)).max(0.0);
                    s = s.min(slack / vq);
                }
            }
            q.iter_mut().for_each(|v| *v *= s);
        }
        y.iter().zip(&q).map(|(a, b)| a + b).collect()
    }

    fn best_point_1d(&self, y: f64, t: f64) -> Vec<f64> {
        let (mut lo, mut hi) = (y - t, y + t);
        if let Some(fs) = self.support {
            for (v, theta) in fs.template.rows().iter().zip(&fs.theta) {
                if v[0] > 0.0 {
                    hi = hi.min(theta / v[0]);
                } else {
                    lo = lo.max(theta / v[0]);
                }
            }
            // The centre is feasible; guard against rounding in the bounds.
            lo = lo.min(y);
            hi = hi.max(y);
        }
        let mut candidates = vec![y, lo, hi];
        for (i, p) in self.pieces.iter().enumerate() {
            for q in &self.pieces[i + 1..] {
                let slope = p.a[0] - q.a[0];
                if slope != 0.0 {
                    let z = (q.b - p.b) / slope;
                    if z > lo && z < hi {
                        candidates.push(z);
                    }
                }
            }
        }
        let mut best = y;
        let mut best_val = self.value(&[y]);
        for z in candidates {
            let v = self.value(&[z]);
            if v > best_val || (v == best_val && (z - y).abs() < (best - y).abs()) {
                best = z;
                best_val = v;
            }
        }
        vec![best]
    }
}

/// Tabulated `phi` for one sample.
pub(crate) struct ValueTable {
    t: Vec<f64>,
    val: Vec<f64>,
    pts: Vec<Vec<f64>>,
    pub(crate) solves: usize,
    pub(crate) failures: usize,
    /// Largest gap between the tabulated chords and the concave envelope.
    pub(crate) overshoot: f64,
}

impl ValueTable {
    pub(crate) fn build(problem: &InnerProblem<'_>, y: &[f64], t_max: f64, tol: f64) -> Self {
        let mut table = Self {
            t: Vec::new(),
            val: Vec::new(),
            pts: Vec::new(),
            solves: 0,
            failures: 0,
            overshoot: 0.0,
        };
        let segments = if problem.is_linear() || t_max <= 0.0 { 1 } else { INITIAL_SEGMENTS };
        for j in 0..=segments {
            let t = t_max * j as f64 / segments as f64;
            table.insert(problem, y, t);
        }
        if problem.is_linear() {
            return table;
        }
        loop {
            let over = table.overshoots(problem.lipschitz);
            table.overshoot = over.iter().copied().fold(0.0, f64::max);
            if table.overshoot <= tol || table.t.len() >= MAX_GRID_POINTS {
                break;
            }
            let split: Vec<f64> = over
                .iter()
                .enumerate()
                .filter(|(_, o)| **o > tol)
                .map(|(j, _)| 0.5 * (table.t[j] + table.t[j + 1]))
                .collect();
            let before = table.t.len();
            for t in split {
                table.insert(problem, y, t);
            }
            if table.t.len() == before {
                break;
            }
        }
        table
    }

    fn insert(&mut self, problem: &InnerProblem<'_>, y: &[f64], t: f64) {
        let pos = self.t.partition_point(|s| *s < t);
        if self.t.get(pos) == Some(&t) {
            return;
        }
        self.solves += 1;
        let point = match problem.best_point(y, t) {
            Some(p) => p,
            None => {
                self.failures += 1;
                // Any point feasible for a smaller radius stays feasible.
                if pos > 0 {
                    self.pts[pos - 1].clone()
                } else {
                    y.to_vec()
                }
            }
        };
        let v = problem.value(&point);
        self.t.insert(pos, t);
        self.val.insert(pos, v);
        self.pts.insert(pos, point);
        // phi is nondecreasing: a point reachable at a smaller radius is
        // reachable at every larger one.
        for j in pos.max(1)..self.t.len() {
            if self.val[j] < self.val[j - 1] {
                self.val[j] = self.val[j - 1];
                self.pts[j] = self.pts[j - 1].clone();
            }
        }
    }

    /// Per segment: max over the segment of the concave envelope implied by
    /// the neighbouring chords minus the segment's own chord.
    fn overshoots(&self, lipschitz: f64) -> Vec<f64> {
        let m = self.t.len();
        let slope = |j: usize| (self.val[j + 1] - self.val[j]) / (self.t[j + 1] - self.t[j]);
        (0..m - 1)
            .map(|j| {
                let s = slope(j);
                let left = if j == 0 { lipschitz } else { slope(j - 1) };
                let right = if j + 2 < m { slope(j + 1) } else { 0.0 };
                let a = (left - s).max(0.0);
                let b = (s - right).max(0.0);
                if a + b == 0.0 {
                    0.0
                } else {
                    a * b * (self.t[j + 1] - self.t[j]) / (a + b)
                }
            })
            .collect()
    }

    /// Indices of the upper concave hull of the table.
    fn hull(&self) -> Vec<usize> {
        let mut h: Vec<usize> = Vec::with_capacity(self.t.len());
        for j in 0..self.t.len() {
            while h.len() >= 2 {
                let (a, b) = (h[h.len() - 2], h[h.len() - 1]);
                let cross = (self.t[b] - self.t[a]) * (self.val[j] - self.val[a])
                    - (self.val[b] - self.val[a]) * (self.t[j] - self.t[a]);
                if cross >= 0.0 {
                    h.pop();
                } else {
                    break;
                }
            }
            h.push(j);
        }
        h
    }
}

/// Single affine piece `c·z + d`: moving each centre along `c/|c|` gains the
/// full Lipschitz slope until the ray leaves the support. If the rays can
/// absorb the whole budget this attains the bound `mean + |c| budget / N`, so
/// no tables are needed. `None` when the shortcut does not apply.
pub(crate) fn straight_line_fill(problem: &InnerProblem<'_>, centers: &[&[f64]], budget: f64) -> Option<Vec<Vec<f64>>> {
    let [piece] = problem.pieces else {
        return None;
    };
    let len = norm(&piece.a);
    if len == 0.0 {
        return Some(centers.iter().map(|y| y.to_vec()).collect());
    }
    let dir: Vec<f64> = piece.a.iter().map(|v| v / len).collect();
    let reach: Vec<f64> = centers
        .iter()
        .map(|y| match problem.support {
            Some(fs) => fs
                .template
                .rows()
                .iter()
                .zip(&fs.theta)
                .filter_map(|(v, theta)| {
                    let vd = dot(v, &dir);
                    (vd > 0.0).then(|| (theta - dot(v, y)).max(0.0) / vd)
                })
                .fold(f64::INFINITY, f64::min),
            None => f64::INFINITY,
        })
        .collect();
    if reach.iter().sum::<f64>() < budget {
        return None;
    }
    let mut remaining = budget;
    Some(
        centers
            .iter()
            .zip(&reach)
            .map(|(y, r)| {
                let step = r.min(remaining);
                remaining -= step;
                y.iter().zip(&dir).map(|(a, d)| a + step * d).collect()
            })
            .collect(),
    )
}

/// When every centre can afford to travel to a maximizer `z*` of `g` over the
/// support, the supremum is `g(z*)` itself. Returns the transported points and
/// a certified upper bound on `N g(z*)`.
pub(crate) fn saturation_fill(problem: &InnerProblem<'_>, centers: &[&[f64]], budget: f64) -> Option<(Vec<Vec<f64>>, f64)> {
    let fs = problem.support?;
    let pieces: Vec<(&[f64], f64)> = problem.pieces.iter().map(|p| (p.a.as_slice(), p.b)).collect();
    let (rows, rhs) = fs.constraints();
    let (target, bound) = max_min_affine_on_polytope(&pieces, &rows, rhs)?;
    let cost: f64 = centers.iter().map(|y| dist(y, &target)).sum();
    if cost > budget {
        return None;
    }
    let points = centers
        .iter()
        .map(|y| problem.repair(y, &target, f64::INFINITY))
        .collect();
    Some((points, bound * centers.len() as f64))
}

pub(crate) struct Allocation {
    pub(crate) points: Vec<Vec<f64>>,
    /// Sum over samples of the interpolated table values.
    pub(crate) interpolated_total: f64,
}

/// Spends `budget` (sum of per-sample radii) on the steepest hull segments.
pub(crate) fn water_fill(centers: &[&[f64]], tables: &[ValueTable], budget: f64) -> Allocation {
    struct Segment {
        sample: usize,
        from: usize,
        to: usize,
        dt: f64,
        slope: f64,
    }
    let hulls: Vec<Vec<usize>> = tables.par_iter().map(ValueTable::hull).collect();
    let mut segments: Vec<Segment> = Vec::new();
    for (k, (table, hull)) in tables.iter().zip(&hulls).enumerate() {
        // Rounding can make a later hull slope exceed an earlier one; clamp
        // so each sample's segments are consumed in order.
        let mut cap = f64::INFINITY;
        for w in hull.windows(2) {
            let dt = table.t[w[1]] - table.t[w[0]];
            let slope = ((table.val[w[1]] - table.val[w[0]]) / dt).min(cap);
            cap = slope;
            if slope > 0.0 && dt > 0.0 {
                segments.push(Segment {
                    sample: k,
                    from: w[0],
                    to: w[1],
                    dt,
                    slope,
                });
            }
        }
    }
    segments.sort_by(|a, b| {
        b.slope
            .total_cmp(&a.slope)
            .then(a.sample.cmp(&b.sample))
            .then(a.from.cmp(&b.from))
    });

    // Per sample: (from, to, weight on `to`). Hull index 0 is t = 0.
    let mut alloc: Vec<(usize, usize, f64)> = vec![(0, 0, 0.0); tables.len()];
    let mut remaining = budget;
    for seg in &segments {
        if remaining <= 0.0 {
            break;
        }
        if seg.dt <= remaining {
            alloc[seg.sample] = (seg.to, seg.to, 0.0);
            remaining -= seg.dt;
        } else {
            alloc[seg.sample] = (seg.from, seg.to, remaining / seg.dt);
            remaining = 0.0;
        }
    }

    let mut interpolated_total = 0.0;
    let points = alloc
        .iter()
        .zip(tables)
        .zip(centers)
        .map(|((&(from, to, w), table), y)| {
            interpolated_total += (1.0 - w) * table.val[from] + w * table.val[to];
            if w == 0.0 {
                table.pts[from].clone()
            } else {
                let p: Vec<f64> = table.pts[from]
                    .iter()
                    .zip(&table.pts[to])
                    .map(|(a, b)| (1.0 - w) * a + w * b)
                    .collect();
                // Interpolation keeps |p - y| <= (1-w) t_from + w t_to.
                debug_assert!(dist(&p, y) <= (1.0 - w) * table.t[from] + w * table.t[to] + 1e-9);
                p
            }
        })
        .collect();
    Allocation {
        points,
        interpolated_total,
    }
}

