//! Template-polytope over-approximation of the output set.
//!
//! A template fixes unit directions `V` (L × n); fitting chooses the tightest
//! offsets `theta` so that `{z : V z <= theta}` contains every sample. The
//! scenario bound then controls the probability mass left outside.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conic::{lp_max, LpOutcome};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist, dot, norm};
use crate::rng::rng_from_seed;
use crate::sampling::OutputSamples;

/// Membership tolerance of [`FittedSupport::contains`].
pub const CONTAINS_TOL: f64 = 1e-9;

/// Rows closer than this after normalization are merged.
const DUPLICATE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemplateKind {
    /// `±e_i` for every axis.
    Box,
    /// Eight directions at 45° steps (n = 2).
    Octagon,
    /// `l` directions evenly spaced on the circle (n = 2).
    CircleUniform { l: usize },
    /// `l` random unit directions.
    RandomDirs { l: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    rows: Vec<Vec<f64>>,
}

impl Template {
    /// Normalizes every row and drops duplicates.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::BadDimension("template needs at least one non-empty row".into()));
        }
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
        for r in rows {
            check_dim(n, r.len())?;
            let len = norm(&r);
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::BadDimension("zero or non-finite template row".into()));
            }
            let unit: Vec<f64> = r.iter().map(|v| v / len).collect();
            if !out.iter().any(|u| dist(u, &unit) <= DUPLICATE_TOL) {
                out.push(unit);
            }
        }
        Ok(Self { rows: out })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn row_index(&self, dir: &[f64]) -> Option<usize> {
        self.rows.iter().position(|r| dist(r, dir) <= DUPLICATE_TOL)
    }
}

pub fn make_template(kind: TemplateKind, n: usize) -> Result<Template> {
    if n == 0 {
        return Err(Error::BadDimension("n must be >= 1".into()));
    }
    let circle = |l: usize| -> Result<Template> {
        if n != 2 {
            return Err(Error::BadDimension(format!("circle templates need n = 2, got {n}")));
        }
        if l < 3 {
            return Err(Error::BadDimension("circle templates need at least 3 directions".into()));
        }
        Template::new(
            (0..l)
                .map(|k| {
                    let (s, c) = (std::f64::consts::TAU * k as f64 / l as f64).sin_cos();
                    vec![c, s]
                })
                .collect(),
        )
    };
    match kind {
        TemplateKind::Box => Template::new(
            [1.0, -1.0]
                .iter()
                .flat_map(|sign| {
                    (0..n).map(move |i| {
                        let mut e = vec![0.0; n];
                        e[i] = *sign;
                        e
                    })
                })
                .collect(),
        ),
        TemplateKind::Octagon => circle(8),
        TemplateKind::CircleUniform { l } => circle(l),
        TemplateKind::RandomDirs { l, seed } => {
            if l < n + 1 {
                return Err(Error::BadDimension(format!("random template needs L >= n + 1 = {}", n + 1)));
            }
            use rand::Rng;
            let mut rng = rng_from_seed(seed);
            Template::new(
                (0..l)
                    .map(|_| (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect())
                    .collect(),
            )
        }
    }
}

/// `N >= (1/eps1) (e/(e-1)) (ln(1/beta1) + n + L)`, rounded up.
pub fn scenario_sample_size(eps1: f64, beta1: f64, n: usize, l: usize) -> Result<u64> {
    if !(eps1 > 0.0 && eps1 < 1.0) || !(beta1 > 0.0 && beta1 < 1.0) {
        return Err(Error::OutOfRange(format!("eps1 = {eps1}, beta1 = {beta1} must lie in (0, 1)")));
    }
    let e = std::f64::consts::E;
    let bound = (1.0 / eps1) * (e / (e - 1.0)) * ((1.0 / beta1).ln() + n as f64 + l as f64);
    Ok(bound.ceil() as u64)
}

/// `sum_{i<d} C(N, i) eps^i (1 - eps)^(N - i)`: the probability that a
/// scenario program with `d` support constraints violates more than `eps`.
pub fn scenario_confidence(n_samples: u64, eps: f64, d: u64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::OutOfRange(format!("eps = {eps} not in (0, 1)")));
    }
    if d == 0 || d > n_samples {
        return Err(Error::OutOfRange(format!("need 1 <= d <= N, got d = {d}, N = {n_samples}")));
    }
    let n = n_samples as f64;
    let (ln_eps, ln_keep) = (eps.ln(), (-eps).ln_1p());
    let mut ln_choose = 0.0;
    let mut terms = Vec::with_capacity(d as usize);
    for i in 0..d {
        let fi = i as f64;
        terms.push(ln_choose + fi * ln_eps + (n - fi) * ln_keep);
        ln_choose += (n - fi).ln() - (fi + 1.0).ln();
    }
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - top).exp()).sum();
    Ok((top + sum.ln()).exp().min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedSupport {
    pub template: Template,
    pub theta: Vec<f64>,
    pub n_used: usize,
    pub eps1: f64,
    pub beta1: f64,
    /// Scenario sample size needed for `(eps1, beta1)`.
    pub required_samples: u64,
}

/// `theta_i = max_k V_i · y_k`.
pub fn fit_support(template: &Template, samples: &OutputSamples, eps1: f64, beta1: f64) -> Result<FittedSupport> {
    check_dim(template.dim(), samples.dim())?;
    let required_samples = scenario_sample_size(eps1, beta1, template.dim(), template.len())?;
    let theta = template
        .rows
        .iter()
        .map(|v| samples.rows().map(|y| dot(v, y)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(FittedSupport {
        template: template.clone(),
        theta,
        n_used: samples.len(),
        eps1,
        beta1,
        required_samples,
    })
}

impl FittedSupport {
    /// Whether the fit used enough samples for its `(eps1, beta1)` guarantee.
    pub fn is_certified(&self) -> bool {
        self.n_used as u64 >= self.required_samples
    }

    pub fn dim(&self) -> usize {
        self.template.dim()
    }

    pub fn contains(&self, y: &[f64]) -> Result<bool> {
        check_dim(self.dim(), y.len())?;
        Ok(self.contains_unchecked(y))
    }

    pub(crate) fn contains_unchecked(&self, y: &[f64]) -> bool {
        self.template
            .rows
            .iter()
            .zip(&self.theta)
            .all(|(v, t)| dot(v, y) <= t + CONTAINS_TOL)
    }

    /// Fraction of `holdout` outside the polytope.
    pub fn violation_rate(&self, holdout: &OutputSamples) -> Result<f64> {
        check_dim(self.dim(), holdout.dim())?;
        let outside = holdout.rows().filter(|y| !self.contains_unchecked(y)).count();
        Ok(outside as f64 / holdout.len() as f64)
    }

    /// Row-wise constraint view for the solvers.
    pub(crate) fn constraints(&self) -> (Vec<&[f64]>, &[f64]) {
        (self.template.rows.iter().map(Vec::as_slice).collect(), &self.theta)
    }

    /// `max_{z in polytope} dir · z` for a unit axis direction.
    fn axis_support(&self, axis: usize, sign: f64) -> Result<f64> {
        let n = self.dim();
        let mut dir = vec![0.0; n];
        dir[axis] = sign;
        if let Some(i) = self.template.row_index(&dir) {
            return Ok(self.theta[i]);
        }
        let (rows, rhs) = self.constraints();
        match lp_max(&dir, &rows, rhs) {
            LpOutcome::Optimal(v) => Ok(v),
            LpOutcome::Unbounded => Err(Error::UnboundedPolytope { coordinate: axis }),
            LpOutcome::Failed(msg) => Err(Error::Solver(msg)),
        }
    }

    /// Axis-aligned bounding box `(lower, upper)` of the polytope.
    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for axis in 0..n {
            hi.push(self.axis_support(axis, 1.0)?);
            lo.push(-self.axis_support(axis, -1.0)?);
        }
        Ok((lo, hi))
    }

    /// Upper bound on the Euclidean diameter: the bounding-box diagonal.
    pub fn diameter_bound(&self) -> Result<f64> {
        let (lo, hi) = self.bounding_box()?;
        Ok(lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| (h - l).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt())
    }

    /// Radius of an origin-centred ball containing the polytope.
    pub fn enclosing_radius(&self) -> Result<f64> {
        let (lo, hi) = self.bounding_box()?;
        Ok(lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| l.abs().max(h.abs()).powi(2))
            .sum::<f64>()
            .sqrt())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("support serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::MalformedFile(e.to_string()))
    }
}
