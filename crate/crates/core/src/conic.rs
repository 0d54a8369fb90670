//! Thin wrappers over the Clarabel interior-point solver for the two small
//! conic programs the crate needs.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

pub(crate) enum LpOutcome {
    Optimal(f64),
    Unbounded,
    Failed(String),
}

fn settings() -> clarabel::solver::DefaultSettings<f64> {
    DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .build()
        .expect("static solver settings are valid")
}

/// Triplet builder for the constraint matrix of `A x + s = b`.
struct Rows {
    cols: usize,
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn new(cols: usize) -> Self {
        Self {
            cols,
            i: Vec::new(),
            j: Vec::new(),
            v: Vec::new(),
            b: Vec::new(),
        }
    }

    fn push(&mut self, coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let r = self.b.len();
        for (c, val) in coeffs {
            if val != 0.0 {
                self.i.push(r);
                self.j.push(c);
                self.v.push(val);
            }
        }
        self.b.push(rhs);
    }

    fn matrix(self) -> (CscMatrix<f64>, Vec<f64>) {
        let m = self.b.len();
        (
            CscMatrix::new_from_triplets(m, self.cols, self.i, self.j, self.v),
            self.b,
        )
    }
}

/// `max c·z` subject to `rows[i]·z <= rhs[i]`.
pub(crate) fn lp_max(c: &[f64], rows: &[&[f64]], rhs: &[f64]) -> LpOutcome {
    let n = c.len();
    let mut a = Rows::new(n);
    for (row, r) in rows.iter().zip(rhs) {
        a.push(row.iter().copied().enumerate(), *r);
    }
    match solve_lp(c, a) {
        Ok(s) => match s.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => LpOutcome::Optimal(-s.obj_val),
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => LpOutcome::Unbounded,
            st => LpOutcome::Failed(format!("{st:?}")),
        },
        Err(e) => LpOutcome::Failed(e),
    }
}

fn solve_lp(c: &[f64], a: Rows) -> Result<clarabel::solver::DefaultSolution<f64>, String> {
    let n = c.len();
    let (a, b) = a.matrix();
    let p = CscMatrix::zeros((n, n));
    let q: Vec<f64> = c.iter().map(|v| -v).collect();
    let cones = [SupportedConeT::NonnegativeConeT(b.len())];
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings()).map_err(|e| format!("{e:?}"))?;
    solver.solve();
    Ok(solver.solution)
}

/// Maximizer of `min_i (c_i·z + d_i)` over `rows·z <= rhs`, with an upper
/// bound on the maximum taken from both the primal and dual objectives.
pub(crate) fn max_min_affine_on_polytope(
    pieces: &[(&[f64], f64)],
    rows: &[&[f64]],
    rhs: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let n = rows.first().map(|r| r.len()).or_else(|| pieces.first().map(|p| p.0.len()))?;
    let mut a = Rows::new(n + 1);
    for (c, d) in pieces {
        a.push(c.iter().enumerate().map(|(k, v)| (k, -v)).chain([(n, 1.0)]), *d);
    }
    for (row, r) in rows.iter().zip(rhs) {
        a.push(row.iter().copied().enumerate(), *r);
    }
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let s = solve_lp(&c, a).ok()?;
    match s.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            let bound = (-s.obj_val).max(-s.obj_val_dual);
            Some((s.x[..n].to_vec(), bound + 1e-9 * (1.0 + bound.abs())))
        }
        _ => None,
    }
}

/// Maximizer of `min_i (c_i·z + d_i)` over `{ |z - center| <= radius,
/// rows·z <= rhs }`. Returns `None` when the solver does not converge.
pub(crate) fn max_min_affine_on_ball(
    pieces: &[(&[f64], f64)],
    center: &[f64],
    radius: f64,
    rows: &[&[f64]],
    rhs: &[f64],
) -> Option<Vec<f64>> {
    let n = center.len();
    // Variables: z (n) and the epigraph level s.
    let mut a = Rows::new(n + 1);
    for (c, d) in pieces {
        a.push(
            c.iter().enumerate().map(|(k, v)| (k, -v)).chain([(n, 1.0)]),
            *d,
        );
    }
    for (row, r) in rows.iter().zip(rhs) {
        a.push(row.iter().copied().enumerate(), *r);
    }
    let n_lin = a.b.len();
    // (radius, z - center) in the second-order cone.
    a.push([], radius);
    for (k, y) in center.iter().enumerate() {
        a.push([(k, -1.0)], -y);
    }
    let (a, b) = a.matrix();
    let p = CscMatrix::zeros((n + 1, n + 1));
    let mut q = vec![0.0; n + 1];
    q[n] = -1.0;
    let cones = [
        SupportedConeT::NonnegativeConeT(n_lin),
        SupportedConeT::SecondOrderConeT(n + 1),
    ];
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings()).ok()?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Some(solver.solution.x[..n].to_vec()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_on_square() {
        let rows: [&[f64]; 4] = [&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0], &[0.0, -1.0]];
        match lp_max(&[1.0, 1.0], &rows, &[1.0, 2.0, 3.0, 4.0]) {
            LpOutcome::Optimal(v) => assert!((v - 3.0).abs() < 1e-7),
            _ => panic!("expected optimum"),
        }
        match lp_max(&[1.0, 0.0], &rows[1..], &[2.0, 3.0, 4.0]) {
            LpOutcome::Unbounded => {}
            _ => panic!("expected unbounded"),
        }
    }

    #[test]
    fn ball_maximizer() {
        let z = max_min_affine_on_ball(&[(&[3.0, 4.0], 0.0)], &[1.0, 1.0], 2.0, &[], &[]).unwrap();
        assert!((z[0] - 2.2).abs() < 1e-6 && (z[1] - 2.6).abs() < 1e-6, "{z:?}");
        let cut: [&[f64]; 1] = [&[1.0, 0.0]];
        let z = max_min_affine_on_ball(&[(&[1.0, 0.0], 0.0)], &[0.0, 0.0], 5.0, &cut, &[1.0]).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn polytope_maximizer() {
        let rows: [&[f64]; 4] = [&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0], &[0.0, -1.0]];
        // min(x, y) on the unit box peaks at (1, 1).
        let (z, bound) =
            max_min_affine_on_polytope(&[(&[1.0, 0.0], 0.0), (&[0.0, 1.0], 0.0)], &rows, &[1.0; 4]).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-6 && (z[1] - 1.0).abs() < 1e-6, "{z:?}");
        assert!(bound >= 1.0 && bound < 1.0 + 1e-6);
    }
}
