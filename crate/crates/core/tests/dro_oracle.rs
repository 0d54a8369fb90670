//! The decomposition solver against exhaustive grid search on small
//! instances, including non-box supports.

use bnncert_core::rng::rng_from_seed;
use bnncert_core::{
    dro_brute_force, dro_inf_convex, dro_sup_concave, fit_support, make_template, AffinePiece, AmbiguityBall,
    EmpiricalDistribution, OutputSamples, PerfFn, TemplateKind,
};
use rand::Rng;

fn random_convex<R: Rng>(r: &mut R, dim: usize) -> PerfFn {
    let k = r.gen_range(1..=4);
    PerfFn::PiecewiseMaxAffine {
        pieces: (0..k)
            .map(|_| AffinePiece {
                a: (0..dim).map(|_| r.gen_range(-1.5..1.5)).collect(),
                b: r.gen_range(-0.5..0.5),
            })
            .collect(),
    }
}

#[test]
fn sandwiches_grid_search() {
    let mut r = rng_from_seed(31);
    let step = 0.02;
    for case in 0..120 {
        let dim = if case % 4 == 0 { 1 } else { 2 };
        let kind = match case % 3 {
            0 => TemplateKind::Box,
            _ if dim == 2 => TemplateKind::Octagon,
            _ => TemplateKind::Box,
        };
        let n = r.gen_range(1..=3);
        let rows: Vec<Vec<f64>> = (0..n + 3).map(|_| (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let fs = fit_support(&make_template(kind, dim).unwrap(), &OutputSamples::from_rows(&rows).unwrap(), 0.1, 0.1)
            .unwrap();
        let center = EmpiricalDistribution::from_rows(&rows[..n]).unwrap();
        let h = random_convex(&mut r, dim);
        let g = h.clone().negated();
        for eps in [0.05, 0.3, 2.0] {
            let ball = AmbiguityBall::new(center.clone(), eps, Some(fs.clone())).unwrap();
            let sol = dro_sup_concave(&g, &ball).unwrap();
            let grid = dro_brute_force(&g, &ball, step).unwrap();
            assert!(sol.budget_spent <= eps + 1e-9);
            for k in 0..n {
                assert!(fs.contains(sol.point(k)).unwrap(), "case {case}: point {k} left the support");
            }
            assert!(grid <= sol.upper() + 1e-7, "case {case} eps {eps}: grid {grid} above {}", sol.upper());
            let slack = 2.0 * step * g.lipschitz_const() + 1e-6;
            assert!(sol.value >= grid - slack, "case {case} eps {eps}: {} below grid {grid}", sol.value);

            let inf = dro_inf_convex(&h, &ball).unwrap();
            assert!((inf.value + sol.value).abs() < 1e-12);
        }
    }
}
