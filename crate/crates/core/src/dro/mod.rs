//! Distributionally robust bounds over type-1 Wasserstein balls centred at
//! the empirical output distribution.
//!
//! Restricted to transport plans that move each sample `y_k` to a point
//! `z_k`, the worst case of a concave `g` over the ball of radius `eps` is
//!
//! ```text
//! sup (1/N) sum_k g(z_k)   s.t.   (1/N) sum_k |z_k - y_k| <= eps,  z_k in Y_N
//! ```
//!
//! which [`dro_sup_concave`] solves by decomposition (see `value_fn`). Convex
//! `h` gets the mirror-image lower bound through `-h`. [`certify_perf_bounds`]
//! combines these with the correction `zeta` that carries a bound from the
//! fitted support to the true output distribution.

mod brute;
mod value_fn;

use rayon::prelude::*;

use crate::certificate::{Certificate, CertificateKind};
use crate::error::{check_dim, Error, Result};
use crate::linalg::dist;
use crate::perf::PerfFn;
use crate::risk::mean;
use crate::sampling::{monte_carlo_perf, EmpiricalDistribution, OutputSamples};
use crate::support::FittedSupport;
use crate::wasserstein::{radius_warning, w1_radius, RadiusParams};

pub use brute::dro_brute_force;
use value_fn::{water_fill, InnerProblem, ValueTable};

/// Relative accuracy the decomposition solver aims for.
pub const SOLVER_REL_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct AmbiguityBall {
    center: EmpiricalDistribution,
    radius: f64,
    support: Option<FittedSupport>,
}

impl AmbiguityBall {
    pub fn new(center: EmpiricalDistribution, radius: f64, support: Option<FittedSupport>) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::OutOfRange(format!("ball radius {radius} must be finite and >= 0")));
        }
        if let Some(fs) = &support {
            check_dim(fs.dim(), center.dim())?;
            if let Some(index) = center.points().position(|y| !fs.contains_unchecked(y)) {
                return Err(Error::InfeasibleSupport { index });
            }
        }
        Ok(Self {
            center,
            radius,
            support,
        })
    }

    pub fn center(&self) -> &EmpiricalDistribution {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn support(&self) -> Option<&FittedSupport> {
        self.support.as_ref()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DroSolution {
    /// Objective at the reported points; a feasible (lower) value of the sup.
    pub value: f64,
    /// Transported points `z_k`, row-major N × n.
    pub points: Vec<f64>,
    pub dim: usize,
    /// `(1/N) sum |z_k - y_k|`.
    pub budget_spent: f64,
    /// Inner convex solves performed.
    pub iterations: usize,
    /// Upper bound on `sup - value` from the concave envelopes.
    pub gap_estimate: f64,
    /// Inner solves that did not converge (a feasible fallback was used).
    pub solver_failures: usize,
}

impl DroSolution {
    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    /// `value + gap_estimate`: an upper bound on the supremum.
    pub fn upper(&self) -> f64 {
        self.value + self.gap_estimate
    }
}

/// Worst-case expectation of a concave `g` over the ball.
pub fn dro_sup_concave(g: &PerfFn, ball: &AmbiguityBall) -> Result<DroSolution> {
    g.validate()?;
    let center = ball.center();
    check_dim(g.input_dim(), center.dim())?;
    let pieces = g.concave_pieces()?;
    let problem = InnerProblem::new(&pieces, ball.support());
    let n_samples = center.len();
    let centers: Vec<&[f64]> = center.points().collect();
    let base: Vec<f64> = centers.iter().map(|y| problem.value(y)).collect();

    if ball.radius() == 0.0 {
        return Ok(DroSolution {
            value: mean(&base),
            points: center.flat().to_vec(),
            dim: center.dim(),
            budget_spent: 0.0,
            iterations: 0,
            gap_estimate: 0.0,
            solver_failures: 0,
        });
    }

    let budget = n_samples as f64 * ball.radius();
    // Upper bound valid for any transport: each sample gains at most L t_k.
    let lipschitz_total = base.iter().sum::<f64>() + problem.lipschitz() * budget;
    let shortcut = value_fn::straight_line_fill(&problem, &centers, budget)
        .map(|points| (points, lipschitz_total))
        .or_else(|| value_fn::saturation_fill(&problem, &centers, budget));
    let (points, upper_total, iterations, solver_failures) = match shortcut {
        Some((points, bound)) => (points, bound.min(lipschitz_total), 0, 0),
            None => {
                let t_max = match ball.support() {
                    Some(fs) => match fs.diameter_bound() {
                        Ok(d) => d.min(budget),
                        Err(Error::UnboundedPolytope { .. }) => budget,
                        Err(e) => return Err(e),
                    },
                    None => budget,
                };
                let tol = 0.5 * SOLVER_REL_TOL * mean(&base).abs().max(1.0);
                let tables: Vec<ValueTable> = centers
                    .par_iter()
                    .map(|y| ValueTable::build(&problem, y, t_max, tol))
                    .collect();
                let alloc = water_fill(&centers, &tables, budget);
                let envelope: f64 = tables.iter().map(|t| t.overshoot).sum();
                (
                    alloc.points,
                    (alloc.interpolated_total + envelope).min(lipschitz_total),
                    tables.iter().map(|t| t.solves).sum(),
                    tables.iter().map(|t| t.failures).sum(),
                )
            }
        };

    let values: Vec<f64> = points.iter().map(|z| problem.value(z)).collect();
    let value = mean(&values);
    let budget_spent = mean(&points.iter().zip(&centers).map(|(z, y)| dist(z, y)).collect::<Vec<_>>());
    let gap_estimate = (upper_total / n_samples as f64 - value).max(0.0);
    Ok(DroSolution {
        value,
        points: points.concat(),
        dim: center.dim(),
        budget_spent,
        iterations,
        gap_estimate,
        solver_failures,
    })
}

/// Best-case expectation of a convex `h` over the ball, via `-sup(-h)`.
///
/// The true infimum lies in `[value - gap_estimate, value]`.
pub fn dro_inf_convex(h: &PerfFn, ball: &AmbiguityBall) -> Result<DroSolution> {
    let mut sol = dro_sup_concave(&h.clone().negated(), ball)?;
    sol.value = -sol.value;
    Ok(sol)
}

/// `2 h_max eps1 + L eps2 + L eps3`.
pub fn zeta(h_max: f64, lipschitz: f64, eps1: f64, eps2: f64, eps3: f64) -> f64 {
    debug_assert!([h_max, lipschitz, eps1, eps2, eps3].iter().all(|v| *v >= 0.0));
    2.0 * h_max * eps1 + lipschitz * eps2 + lipschitz * eps3
}

/// Radii and constants entering a pair of performance certificates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerfRadii {
    pub eps1: f64,
    pub beta1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub beta2: f64,
    pub h_max: f64,
    pub lipschitz: f64,
}

impl PerfRadii {
    pub fn zeta(&self) -> f64 {
        zeta(self.h_max, self.lipschitz, self.eps1, self.eps2, self.eps3)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerfBounds {
    pub upper: Certificate,
    pub lower: Certificate,
    pub empirical_mean: f64,
    pub radii: PerfRadii,
}

impl PerfBounds {
    pub fn gamma(&self) -> f64 {
        self.upper.bound() - self.lower.bound()
    }

    /// Adds the `1 - max(beta1, beta2)` confidence for side-by-side output.
    pub fn with_max_beta_confidence(mut self) -> Self {
        let c = 1.0 - self.radii.beta1.max(self.radii.beta2);
        self.upper.guarantee.max_beta_confidence = Some(c);
        self.lower.guarantee.max_beta_confidence = Some(c);
        self
    }
}

fn bbox_diagonal(samples: &OutputSamples) -> f64 {
    let n = samples.dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for y in samples.rows() {
        for i in 0..n {
            lo[i] = lo[i].min(y[i]);
            hi[i] = hi[i].max(y[i]);
        }
    }
    lo.iter().zip(&hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt()
}

/// Upper and lower bounds on `E[h(y)]` under the true output distribution.
///
/// `eps2` uses the diameter of the samples, `eps3` the diameter bound of the
/// fitted support, both at `(N, beta2)`. Concave `h` gets a DRO upper bound,
/// convex `h` a DRO lower bound; the side a structure does not support is
/// filled from the CVaR interval at `alpha = 1`.
pub fn certify_perf_bounds(
    h: &PerfFn,
    samples: &OutputSamples,
    fs: &FittedSupport,
    beta2: f64,
) -> Result<PerfBounds> {
    h.validate()?;
    check_dim(h.input_dim(), samples.dim())?;
    let params = |rho| RadiusParams {
        n_samples: samples.len(),
        dim: samples.dim(),
        beta: beta2,
        rho,
    };
    let radii = PerfRadii {
        eps1: fs.eps1,
        beta1: fs.beta1,
        eps2: w1_radius(&params(bbox_diagonal(samples)))?,
        eps3: w1_radius(&params(fs.diameter_bound()?))?,
        beta2,
        h_max: h.h_max(fs.enclosing_radius()?)?,
        lipschitz: h.lipschitz_const(),
    };
    certify_perf_bounds_with(h, samples, fs, &radii)
}

/// [`certify_perf_bounds`] with explicit radii.
pub fn certify_perf_bounds_with(
    h: &PerfFn,
    samples: &OutputSamples,
    fs: &FittedSupport,
    radii: &PerfRadii,
) -> Result<PerfBounds> {
    h.validate()?;
    let (convex, concave) = (h.is_convex(), h.is_concave());
    if !convex && !concave {
        return Err(Error::UnsupportedStructure);
    }
    let confidence = 1.0 - (radii.beta1 + radii.beta2);
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::OutOfRange(format!(
            "beta1 + beta2 = {} leaves no confidence",
            radii.beta1 + radii.beta2
        )));
    }
    let z = radii.zeta();
    let empirical_mean = monte_carlo_perf(samples, h)?;
    let ball = AmbiguityBall::new(EmpiricalDistribution::from(samples), radii.eps3, Some(fs.clone()))?;
    let cvar_half = radii.lipschitz * radii.eps2;

    let mut warnings: Vec<String> = radius_warning(samples.dim()).into_iter().collect();
    warnings.push("eps3 taken as the W1 radius at the fitted support's diameter bound".into());
    if !fs.is_certified() {
        warnings.push(format!(
            "support fitted on {} samples, fewer than the {} required for (eps1, beta1)",
            fs.n_used, fs.required_samples
        ));
    }

    let make = |kind, bound: f64, extra: Vec<String>, sol: Option<&DroSolution>| {
        let mut c = Certificate::new(kind, vec![bound, empirical_mean], confidence, samples.len(), samples.seed)
            .with_radius("eps1", radii.eps1)
            .with_radius("eps2", radii.eps2)
            .with_radius("eps3", radii.eps3)
            .with_radius("zeta", z)
            .with_param("beta1", radii.beta1)
            .with_param("beta2", radii.beta2)
            .with_param("h_max", radii.h_max)
            .with_param("lipschitz", radii.lipschitz)
            .with_warnings(warnings.iter().cloned())
            .with_warnings(extra);
        if let Some(s) = sol {
            c = c
                .with_param("dro_value", s.value)
                .with_param("dro_gap", s.gap_estimate)
                .with_param("dro_budget_spent", s.budget_spent);
        }
        c
    };

    let upper = if concave {
        let sol = dro_sup_concave(h, &ball)?;
        make(CertificateKind::PerfUpper, sol.upper() + z, failure_note(&sol), Some(&sol))
    } else {
        make(
            CertificateKind::PerfUpper,
            empirical_mean + cvar_half,
            vec!["convex h: upper bound from the CVaR interval at alpha = 1".into()],
            None,
        )
    };
    let lower = if convex {
        let sol = dro_inf_convex(h, &ball)?;
        let mut notes = failure_note(&sol);
        notes.push("lower bound subtracts zeta (inf over the ball minus zeta)".into());
        make(CertificateKind::PerfLower, sol.value - sol.gap_estimate - z, notes, Some(&sol))
    } else {
        make(
            CertificateKind::PerfLower,
            empirical_mean - cvar_half,
            vec!["concave h: lower bound from the CVaR interval at alpha = 1".into()],
            None,
        )
    };
    Ok(PerfBounds {
        upper,
        lower,
        empirical_mean,
        radii: *radii,
    })
}

fn failure_note(sol: &DroSolution) -> Vec<String> {
    if sol.solver_failures > 0 {
        vec![format!("{} inner solves fell back to feasible points", sol.solver_failures)]
    } else {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perf::AffinePiece;
    use crate::support::{fit_support, make_template, TemplateKind};

    fn emp(rows: &[[f64; 2]]) -> EmpiricalDistribution {
        EmpiricalDistribution::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn unit_box() -> FittedSupport {
        let s = OutputSamples::from_rows(&[vec![1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
        fit_support(&make_template(TemplateKind::Box, 2).unwrap(), &s, 0.1, 0.1).unwrap()
    }

    fn check_feasible(sol: &DroSolution, ball: &AmbiguityBall) {
        assert!(sol.budget_spent <= ball.radius() + 1e-7, "{} > {}", sol.budget_spent, ball.radius());
        if let Some(fs) = ball.support() {
            for k in 0..ball.center().len() {
                assert!(fs.contains(sol.point(k)).unwrap());
            }
        }
    }

    #[test]
    fn zero_radius_returns_center() {
        let c = emp(&[[0.1, 0.2], [0.5, -0.3]]);
        let ball = AmbiguityBall::new(c.clone(), 0.0, None).unwrap();
        let g = PerfFn::Affine { a: vec![1.0, 2.0], b: 0.5 };
        let sol = dro_sup_concave(&g, &ball).unwrap();
        assert_eq!(sol.points, c.flat());
        assert!((sol.value - (0.5 * (0.1 + 0.4 + 0.5 + 0.5 - 0.6 + 0.5))).abs() < 1e-15);
    }

    #[test]
    fn affine_closed_form() {
        let ball = AmbiguityBall::new(emp(&[[0.0, 0.0], [2.0, 0.0]]), 0.5, None).unwrap();
        let g = PerfFn::Affine { a: vec![1.0, 0.0], b: 0.0 };
        let sol = dro_sup_concave(&g, &ball).unwrap();
        assert!((sol.value - 1.5).abs() < 1e-9);
        check_feasible(&sol, &ball);
        let bf = dro_brute_force(&g, &ball, 0.05).unwrap();
        assert!(bf <= sol.upper() + 1e-12 && bf >= 1.5 - 0.1, "{bf}");
    }

    #[test]
    fn support_saturation() {
        let ball = AmbiguityBall::new(emp(&[[0.0, 0.0], [0.5, 0.0]]), 10.0, Some(unit_box())).unwrap();
        let g = PerfFn::Affine { a: vec![1.0, 0.0], b: 0.0 };
        let sol = dro_sup_concave(&g, &ball).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-6, "{}", sol.value);
        check_feasible(&sol, &ball);
        let bf = dro_brute_force(&g, &ball, 0.05).unwrap();
        assert!((bf - 1.0).abs() < 1e-9);
    }

    #[test]
    fn inf_convex_abs_deviation() {
        let c = EmpiricalDistribution::from_scalars(&[-1.0, 1.0]).unwrap();
        let ball = AmbiguityBall::new(c, 1.0, None).unwrap();
        let h = PerfFn::AbsDeviation { target: 0.0 };
        let sol = dro_inf_convex(&h, &ball).unwrap();
        assert!(sol.value.abs() < 1e-12, "{}", sol.value);
        assert!((sol.budget_spent - 1.0).abs() < 1e-12);
        let neg = h.clone().negated();
        assert!((-dro_brute_force(&neg, &ball, 0.01).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn inf_never_exceeds_mean() {
        let c = emp(&[[0.3, -0.2], [0.1, 0.9], [-0.5, 0.4]]);
        let h = PerfFn::Margin { true_class: 0, classes: 2 };
        let mean_h = mean(&c.points().map(|y| h.eval(y).unwrap()).collect::<Vec<_>>());
        for eps in [0.0, 0.05, 0.3] {
            let ball = AmbiguityBall::new(c.clone(), eps, None).unwrap();
            assert!(dro_inf_convex(&h, &ball).unwrap().value <= mean_h + 1e-12);
        }
    }

    #[test]
    fn errors() {
        let ball = AmbiguityBall::new(emp(&[[0.0, 0.0]]), 0.1, None).unwrap();
        assert!(matches!(
            dro_sup_concave(&PerfFn::Margin { true_class: 0, classes: 2 }, &ball),
            Err(Error::NotConcave)
        ));
        assert!(matches!(
            AmbiguityBall::new(emp(&[[0.0, 0.0], [3.0, 0.0]]), 0.1, Some(unit_box())),
            Err(Error::InfeasibleSupport { index: 1 })
        ));
        let big = EmpiricalDistribution::from_scalars(&[0.0; 6]).unwrap();
        let ball = AmbiguityBall::new(big, 0.1, None).unwrap();
        assert!(matches!(dro_brute_force(&PerfFn::OneMinusY, &ball, 0.1), Err(Error::TooLarge(_))));
    }

    #[test]
    fn monotone_in_radius() {
        let c = emp(&[[0.2, 0.1], [-0.4, 0.6], [0.0, -0.9]]);
        let g = PerfFn::PiecewiseMaxAffine {
            pieces: vec![
                AffinePiece { a: vec![1.0, 0.5], b: 0.0 },
                AffinePiece { a: vec![-1.0, 0.2], b: 0.1 },
            ],
        }
        .negated();
        let mut prev = f64::NEG_INFINITY;
        for eps in [0.0, 0.05, 0.1, 0.2, 0.4, 0.8] {
            let ball = AmbiguityBall::new(c.clone(), eps, Some(unit_box())).unwrap();
            let sol = dro_sup_concave(&g, &ball).unwrap();
            check_feasible(&sol, &ball);
            assert!(sol.value >= prev - 1e-6);
            prev = sol.value;
        }
    }

    #[test]
    fn brute_force_refines_monotonically() {
        let c = emp(&[[0.2, 0.1], [-0.4, 0.6]]);
        let g = PerfFn::PiecewiseMaxAffine {
            pieces: vec![AffinePiece { a: vec![1.0, 0.3], b: 0.0 }, AffinePiece { a: vec![-0.5, 1.0], b: 0.2 }],
        }
        .negated();
        let ball = AmbiguityBall::new(c, 0.3, Some(unit_box())).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for step in [0.2, 0.1, 0.05, 0.025] {
            let v = dro_brute_force(&g, &ball, step).unwrap();
            assert!(v >= prev - 1e-12);
            prev = v;
        }
        let sol = dro_sup_concave(&g, &ball).unwrap();
        assert!(prev <= sol.upper() + 1e-9 && sol.value - prev < 2.0 * 0.025 * 1.2);
    }

    #[test]
    fn zeta_examples() {
        assert!((zeta(1.0, 1.0, 0.01, 0.1, 0.1) - 0.22).abs() < 1e-15);
        assert_eq!(zeta(3.0, 2.0, 0.0, 0.0, 0.0), 0.0);
        assert!((zeta(1.5, 2.0, 0.02, 0.2, 0.4) - 2.0 * zeta(1.5, 2.0, 0.01, 0.1, 0.2)).abs() < 1e-15);
    }

    fn pipeline_samples() -> (OutputSamples, FittedSupport) {
        let s = OutputSamples::from_rows(&[vec![0.1, 0.2], vec![0.4, -0.3], vec![-0.2, 0.5], vec![0.0, 0.0]]).unwrap();
        let fs = fit_support(&make_template(TemplateKind::Box, 2).unwrap(), &s, 0.05, 0.05).unwrap();
        (s, fs)
    }

    #[test]
    fn degenerate_radii_give_empirical_mean() {
        let (s, fs) = pipeline_samples();
        let radii = PerfRadii { eps1: 0.0, beta1: 0.05, eps2: 0.0, eps3: 0.0, beta2: 0.05, h_max: 1.0, lipschitz: 1.0 };
        for h in [
            PerfFn::Affine { a: vec![0.5, -1.0], b: 0.2 },
            PerfFn::Margin { true_class: 1, classes: 2 },
            PerfFn::Margin { true_class: 1, classes: 2 }.negated(),
        ] {
            let b = certify_perf_bounds_with(&h, &s, &fs, &radii).unwrap();
            let m = monte_carlo_perf(&s, &h).unwrap();
            assert_eq!(b.upper.bound(), m);
            assert_eq!(b.lower.bound(), m);
        }
    }

    #[test]
    fn affine_bounds_bracket_mean_with_zeta_padding() {
        let (s, fs) = pipeline_samples();
        let h = PerfFn::Affine { a: vec![0.5, -1.0], b: 0.2 };
        let b = certify_perf_bounds(&h, &s, &fs, 0.05).unwrap();
        let z = b.radii.zeta();
        assert!(b.upper.bound() >= b.empirical_mean + z - 1e-12);
        assert!(b.lower.bound() <= b.empirical_mean - z + 1e-12);
        assert!(b.gamma() >= 2.0 * z);
        assert!((b.upper.guarantee.confidence - 0.9).abs() < 1e-12);
        assert!(!b.upper.warnings.is_empty());
        let with_max = b.with_max_beta_confidence();
        assert_eq!(with_max.upper.guarantee.max_beta_confidence, Some(0.95));
    }

    #[test]
    fn tiny_instance_matches_brute_force() {
        let (s, fs) = pipeline_samples();
        let radii = PerfRadii { eps1: 0.01, beta1: 0.05, eps2: 0.05, eps3: 0.2, beta2: 0.05, h_max: 1.0, lipschitz: 0.0 };
        let h = PerfFn::Affine { a: vec![0.5, -1.0], b: 0.2 };
        let radii = PerfRadii { lipschitz: h.lipschitz_const(), ..radii };
        let b = certify_perf_bounds_with(&h, &s, &fs, &radii).unwrap();
        let z = radii.zeta();
        let ball = AmbiguityBall::new(EmpiricalDistribution::from(&s), radii.eps3, Some(fs.clone())).unwrap();
        let up = dro_brute_force(&h, &ball, 0.01).unwrap() + z;
        let lo = -dro_brute_force(&h.clone().negated(), &ball, 0.01).unwrap() - z;
        let tol = 2.0 * 0.01 * h.lipschitz_const();
        assert!((b.upper.bound() - up).abs() < tol.max(1e-3), "{} vs {up}", b.upper.bound());
        assert!((b.lower.bound() - lo).abs() < tol.max(1e-3), "{} vs {lo}", b.lower.bound());
    }

    #[test]
    fn neither_convex_nor_concave_rejected() {
        let (s, fs) = pipeline_samples();
        let radii = PerfRadii { eps1: 0.0, beta1: 0.05, eps2: 0.0, eps3: 0.0, beta2: 0.05, h_max: 1.0, lipschitz: 1.0 };
        // Sum of a convex and a concave kink is neither; emulate with a
        // negated non-affine piecewise inside another negation is convex, so
        // the unsupported case is only reachable through structure flags.
        let h = PerfFn::Margin { true_class: 0, classes: 2 };
        assert!(certify_perf_bounds_with(&h, &s, &fs, &radii).is_ok());
        let bad = PerfRadii { beta1: 0.6, beta2: 0.5, ..radii };
        assert!(matches!(certify_perf_bounds_with(&h, &s, &fs, &bad), Err(Error::OutOfRange(_))));
    }
}
