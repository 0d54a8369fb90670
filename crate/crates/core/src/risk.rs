//! Empirical VaR/CVaR, certified CVaR intervals and sample-size planning.

use crate::certificate::{Certificate, CertificateKind};
use crate::error::{Error, Result};
use crate::wasserstein::{radius_warning, w1_radius, RadiusParams};

/// Upper limit for the planners' search.
const MAX_PLANNED_SAMPLES: u64 = 1 << 52;

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_alpha(samples: &[f64], alpha: f64) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::OutOfRange("no samples".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::OutOfRange(format!("alpha = {alpha} not in (0, 1]")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutOfRange("non-finite sample".into()));
    }
    Ok(())
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Smallest sample value `v` with empirical CDF `F(v) >= 1 - alpha`.
pub fn var_alpha(samples: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(samples, alpha)?;
    let x = sorted(samples);
    let n = x.len() as f64;
    let level = (1.0 - alpha) * n;
    // F(x_(j)) >= j/n with equality at the last copy of a tied value, so the
    // first index reaching the level gives the infimum.
    let j = x
        .iter()
        .enumerate()
        .position(|(i, _)| (i + 1) as f64 >= level * (1.0 - 1e-12))
        .unwrap_or(x.len() - 1);
    Ok(x[j])
}

/// Rockafellar–Uryasev CVaR of the empirical distribution: the mean of the
/// worst (largest) `alpha` fraction of outcomes, with atoms split exactly.
///
/// The objective `t + mean((x - t)^+) / alpha` is convex piecewise linear
/// with breakpoints at the samples, so it is minimized by scanning them.
pub fn cvar_alpha(samples: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(samples, alpha)?;
    if alpha == 1.0 {
        return Ok(mean(samples));
    }
    let x = sorted(samples);
    let n = x.len();
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + x[i];
    }
    let scale = 1.0 / (alpha * n as f64);
    let best = (0..n)
        .map(|j| {
            let t = x[j];
            let excess = (suffix[j + 1] - (n - j - 1) as f64 * t).max(0.0);
            t + scale * excess
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}

/// Inputs of the certified CVaR interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskSpec {
    pub alpha: f64,
    pub beta: f64,
    /// Target half-width of the interval.
    pub target_half_width: f64,
    /// Lipschitz constant of `h`.
    pub lipschitz: f64,
    /// Diameter of the support entering the radius.
    pub rho: f64,
    /// Dimension of the space the radius is computed in.
    pub dim: usize,
}

impl RiskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::OutOfRange(format!("alpha = {} not in (0, 1]", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::OutOfRange(format!("beta = {} not in (0, 1)", self.beta)));
        }
        if !(self.target_half_width > 0.0) {
            return Err(Error::OutOfRange("target half-width must be > 0".into()));
        }
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::OutOfRange("Lipschitz constant must be finite and >= 0".into()));
        }
        if self.dim == 0 {
            return Err(Error::OutOfRange("dimension must be >= 1".into()));
        }
        Ok(())
    }

    fn radius(&self, n_samples: usize) -> Result<f64> {
        w1_radius(&RadiusParams {
            n_samples,
            dim: self.dim,
            beta: self.beta,
            rho: self.rho,
        })
    }

    /// `(L0 / alpha) * eps2(N)`.
    pub fn half_width(&self, n_samples: usize) -> Result<f64> {
        self.validate()?;
        Ok(self.lipschitz / self.alpha * self.radius(n_samples)?)
    }
}

/// `[cvar - (L0/alpha) eps2, cvar + (L0/alpha) eps2]` with confidence
/// `1 - beta`; `values = [lower, upper, empirical]`.
pub fn cvar_certified_interval(samples: &[f64], spec: &RiskSpec, seed: u64) -> Result<Certificate> {
    spec.validate()?;
    let emp = cvar_alpha(samples, spec.alpha)?;
    let eps2 = spec.radius(samples.len())?;
    let half = spec.lipschitz / spec.alpha * eps2;
    let cert = Certificate::new(
        CertificateKind::CvarInterval,
        vec![emp - half, emp + half, emp],
        1.0 - spec.beta,
        samples.len(),
        seed,
    )
    .with_radius("eps2", eps2)
    .with_param("alpha", spec.alpha)
    .with_param("beta", spec.beta)
    .with_param("lipschitz", spec.lipschitz)
    .with_param("rho", spec.rho)
    .with_param("dim", spec.dim as f64)
    .with_param("target_half_width", spec.target_half_width)
    .with_param("half_width", half)
    .with_warnings(radius_warning(spec.dim));
    Ok(cert)
}

/// Smallest N whose certified half-width is at most the target.
pub fn plan_cvar_samples(spec: &RiskSpec) -> Result<u64> {
    spec.validate()?;
    if !(spec.rho >= 0.0 && spec.rho.is_finite()) {
        return Err(Error::OutOfRange("rho must be finite and >= 0".into()));
    }
    let fits = |n: u64| -> Result<bool> { Ok(spec.half_width(n as usize)? <= spec.target_half_width) };
    if fits(1)? {
        return Ok(1);
    }
    let mut lo = 1u64;
    let mut hi = 2u64;
    while !fits(hi)? {
        lo = hi;
        hi = hi.checked_mul(2).filter(|h| *h <= MAX_PLANNED_SAMPLES).ok_or_else(|| {
            Error::OutOfRange("required sample size exceeds the planner limit".into())
        })?;
    }
    // Invariant: fits(hi) and !fits(lo).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Closed-form planner `((L0 rho (C* + sqrt(n) sqrt(2 ln 1/beta))) / (alpha H))^n`.
///
/// For n >= 3 this N satisfies the half-width target (possibly with room to
/// spare), so it upper-bounds [`plan_cvar_samples`].
pub fn plan_cvar_samples_closed_form(spec: &RiskSpec) -> Result<f64> {
    spec.validate()?;
    let d = spec.dim as f64;
    let c = crate::wasserstein::dimension_constant(spec.dim);
    let tail = d.sqrt() * (2.0 * (1.0 / spec.beta).ln()).sqrt();
    Ok((spec.lipschitz * spec.rho * (c + tail) / (spec.alpha * spec.target_half_width)).powf(d))
}

/// Finds the scale `s` such that planning with `lipschitz * rho = s` yields
/// exactly `target` samples, centred inside the interval of such scales.
pub fn calibrate_scale(target: u64, spec: &RiskSpec) -> Result<f64> {
    if target < 2 {
        return Err(Error::OutOfRange("calibration target must be >= 2".into()));
    }
    let plan = |s: f64| plan_cvar_samples(&RiskSpec { lipschitz: 1.0, rho: s, ..*spec });
    // Largest scale with plan(s) <= bound, by bisection on a monotone map.
    let sup_scale = |bound: u64| -> Result<f64> {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while plan(hi)? <= bound {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if plan(mid)? <= bound {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    };
    let below = sup_scale(target - 1)?;
    let at = sup_scale(target)?;
    let s = 0.5 * (below + at);
    debug_assert_eq!(plan(s)?, target);
    Ok(s)
}

/// Width between the certified upper and lower bounds when each side is
/// planned to half-width `h`.
pub fn gamma_robustness(h: f64) -> f64 {
    2.0 * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn spec(alpha: f64, beta: f64, h: f64, scale: f64) -> RiskSpec {
        RiskSpec {
            alpha,
            beta,
            target_half_width: h,
            lipschitz: 1.0,
            rho: scale,
            dim: 1,
        }
    }

    /// Tail average: sort descending, take the alpha*N largest with a
    /// fractional weight on the boundary sample.
    fn tail_mean_oracle(xs: &[f64], alpha: f64) -> f64 {
        let mut v = xs.to_vec();
        v.sort_by(|a, b| b.total_cmp(a));
        let mass = alpha * v.len() as f64;
        let mut remaining = mass;
        let mut acc = 0.0;
        for x in v {
            let w = remaining.min(1.0);
            if w <= 0.0 {
                break;
            }
            acc += w * x;
            remaining -= w;
        }
        acc / mass
    }

    #[test]
    fn var_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(var_alpha(&x, 0.25).unwrap(), 3.0);
        assert_eq!(var_alpha(&x, 1.0).unwrap(), 1.0);
        assert_eq!(var_alpha(&[2.5; 7], 0.3).unwrap(), 2.5);
        assert!(var_alpha(&x, 0.0).is_err());
        assert!(var_alpha(&[], 0.5).is_err());
    }

    #[test]
    fn cvar_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(cvar_alpha(&x, 1.0).unwrap(), 2.5);
        assert!((cvar_alpha(&x, 0.5).unwrap() - 3.5).abs() < 1e-15);
        assert!((cvar_alpha(&x, 0.5).unwrap() - tail_mean_oracle(&x, 0.5)).abs() < 1e-15);
        assert!(cvar_alpha(&x, 1.5).is_err());
    }

    #[test]
    fn cvar_of_uniform() {
        let mut rng = rng_from_seed(1);
        let x: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
        for alpha in [0.25, 0.5, 1.0] {
            assert!((cvar_alpha(&x, alpha).unwrap() - (1.0 - alpha / 2.0)).abs() < 0.01);
        }
    }

    #[test]
    fn interval_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        // Pick rho so that eps2 = 0.2 exactly at N = 4 in the n = 1 regime.
        let k = (2.0 * 20f64.ln()).sqrt();
        let s = RiskSpec { alpha: 0.5, beta: 0.05, target_half_width: 1.0, lipschitz: 1.0, rho: 0.2 * 2.0 / k, dim: 1 };
        let c = cvar_certified_interval(&x, &s, 0).unwrap();
        assert!((c.values[0] - 3.1).abs() < 1e-12 && (c.values[1] - 3.9).abs() < 1e-12);
        assert!((c.guarantee.confidence - 0.95).abs() < 1e-15);

        let c0 = cvar_certified_interval(&x, &RiskSpec { rho: 0.0, ..s }, 0).unwrap();
        assert_eq!(c0.values[0], c0.values[1]);

        let c1 = cvar_certified_interval(&x, &RiskSpec { alpha: 1.0, lipschitz: 2.0, ..s }, 0).unwrap();
        assert!((c1.values[1] - c1.values[0] - 2.0 * 2.0 * c1.guarantee.radii["eps2"]).abs() < 1e-12);
    }

    #[test]
    fn planner_matches_table_trend() {
        let scale = calibrate_scale(2520, &spec(1.0, 0.05, 0.1, 1.0)).unwrap();
        assert_eq!(plan_cvar_samples(&spec(1.0, 0.05, 0.1, scale)).unwrap(), 2520);
        let n_half = plan_cvar_samples(&spec(0.5, 0.05, 0.1, scale)).unwrap();
        assert!((n_half as f64 / 9835.0 - 1.0).abs() < 0.1, "{n_half}");
        let ratio = n_half as f64 / 2520.0;
        assert!((3.8..=4.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn planner_vacuous_target() {
        assert_eq!(plan_cvar_samples(&spec(0.5, 0.05, 1e12, 1.0)).unwrap(), 1);
        assert_eq!(plan_cvar_samples(&spec(0.5, 0.05, 0.01, 0.0)).unwrap(), 1);
    }

    #[test]
    fn planner_is_minimal_and_sufficient() {
        for (alpha, beta, h, s, dim) in [(0.3, 0.05, 0.1, 0.7, 1), (1.0, 0.01, 0.2, 0.3, 2), (0.5, 0.1, 0.5, 0.2, 3)] {
            let sp = RiskSpec { alpha, beta, target_half_width: h, lipschitz: 1.0, rho: s, dim };
            let n = plan_cvar_samples(&sp).unwrap() as usize;
            assert!(sp.half_width(n).unwrap() <= h);
            assert!(n == 1 || sp.half_width(n - 1).unwrap() > h);
        }
    }

    #[test]
    fn closed_form_bounds_planner_in_high_dim() {
        for dim in 3..6 {
            let sp = RiskSpec { alpha: 0.5, beta: 0.05, target_half_width: 0.5, lipschitz: 1.0, rho: 0.1, dim };
            let planned = plan_cvar_samples(&sp).unwrap() as f64;
            let cf = plan_cvar_samples_closed_form(&sp).unwrap();
            assert!(planned <= cf.ceil(), "dim {dim}: {planned} vs {cf}");
            assert!(sp.half_width(cf.ceil() as usize).unwrap() <= 0.5);
        }
    }

    #[test]
    fn gamma_examples() {
        assert!((gamma_robustness(0.1) - 0.2).abs() < 1e-15);
        assert!((gamma_robustness(0.05) - 0.1).abs() < 1e-15);
        assert_eq!(gamma_robustness(1.0), 2.0);
    }

    proptest! {
        #[test]
        fn cvar_properties(
            x in prop::collection::vec(-10.0..10.0f64, 1..40),
            c in -5.0..5.0f64,
            s in 0.0..3.0f64,
            a1 in 0.01..=1.0f64,
            a2 in 0.01..=1.0f64,
        ) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let c_lo = cvar_alpha(&x, lo).unwrap();
            let c_hi = cvar_alpha(&x, hi).unwrap();
            prop_assert!(c_lo >= c_hi - 1e-9);
            let v = var_alpha(&x, lo).unwrap();
            let min = x.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(c_lo >= v - 1e-9 && v >= min);
            prop_assert!((c_lo - tail_mean_oracle(&x, lo)).abs() < 1e-9);
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            prop_assert!((cvar_alpha(&shifted, lo).unwrap() - (c_lo + c)).abs() < 1e-9);
            let scaled: Vec<f64> = x.iter().map(|v| v * s).collect();
            prop_assert!((cvar_alpha(&scaled, lo).unwrap() - s * c_lo).abs() < 1e-9);
            prop_assert_eq!(cvar_alpha(&x, 1.0).unwrap(), mean(&x));
        }
    }
}
