//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Problem form: minimize `cᵀx` subject to `G x ≥ h` and `x ≥ lower`.

use nalgebra::{DMatrix, DVector};

use super::SolveStatus;
use crate::error::SolverError;

const PIVOT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub c: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub lower: DVector<f64>,
}

impl LinearProgram {
    pub fn new(
        c: DVector<f64>,
        g: DMatrix<f64>,
        h: DVector<f64>,
        lower: DVector<f64>,
    ) -> Result<Self, SolverError> {
        let n = c.len();
        if g.ncols() != n || lower.len() != n || g.nrows() != h.len() {
            return Err(SolverError::Malformed(format!(
                "c has {n} entries, G is {}x{}, h has {}, lower has {}",
                g.nrows(),
                g.ncols(),
                h.len(),
                lower.len()
            )));
        }
        let finite = c.iter().chain(g.iter()).chain(h.iter()).chain(lower.iter());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Malformed("non-finite data".into()));
        }
        Ok(Self { c, g, h, lower })
    }

    /// The problem in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let term = |coef: f64, j: usize| format!("{coef:+.17e} x{j}");
        let mut s = String::from("Minimize\n obj:");
        for (j, &c) in self.c.iter().enumerate() {
            s.push(' ');
            s.push_str(&term(c, j));
        }
        s.push_str("\nSubject To\n");
        for i in 0..self.g.nrows() {
            s.push_str(&format!(" c{i}:"));
            for j in 0..self.g.ncols() {
                if self.g[(i, j)] != 0.0 {
                    s.push(' ');
                    s.push_str(&term(self.g[(i, j)], j));
                }
            }
            s.push_str(&format!(" >= {:.17e}\n", self.h[i]));
        }
        s.push_str("Bounds\n");
        for (j, &l) in self.lower.iter().enumerate() {
            s.push_str(&format!(" x{j} >= {l:.17e}\n"));
        }
        s.push_str("End\n");
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    /// Multipliers of `G x ≥ h` (non-negative at an optimum).
    pub duals: DVector<f64>,
    /// Multipliers of `x ≥ lower`.
    pub bound_duals: DVector<f64>,
    pub iterations: usize,
}

struct Tableau {
    /// Constraint rows followed by the objective row; last column is the RHS.
    t: DMatrix<f64>,
    basis: Vec<usize>,
    rows: usize,
}

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.t.ncols() - 1
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[(r, c)];
        let mut row = self.t.row(r).into_owned();
        row /= p;
        self.t.set_row(r, &row);
        for i in 0..self.t.nrows() {
            if i != r {
                let f = self.t[(i, c)];
                if f != 0.0 {
                    let updated = self.t.row(i) - &row * f;
                    self.t.set_row(i, &updated);
                }
            }
        }
        self.basis[r] = c;
    }

    /// Load objective `cost` (over all columns) into the last row as reduced costs.
    fn set_objective(&mut self, cost: &[f64]) {
        let obj = self.rows;
        let rhs = self.rhs_col();
        for j in 0..self.t.ncols() {
            self.t[(obj, j)] = if j < cost.len() { cost[j] } else { 0.0 };
        }
        self.t[(obj, rhs)] = 0.0;
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let updated = self.t.row(obj) - self.t.row(r) * cb;
                self.t.set_row(obj, &updated);
            }
        }
    }

    /// Bland's rule iterations over columns `allowed`. `Ok(true)` at optimum,
    /// `Ok(false)` when unbounded.
    fn run(&mut self, allowed: &[bool], iterations: &mut usize) -> bool {
        let obj = self.rows;
        let rhs = self.rhs_col();
        loop {
            let entering = (0..rhs).find(|&j| allowed[j] && self.t[(obj, j)] < -FEAS_TOL);
            let Some(c) = entering else {
                return true;
            };
            let mut best: Option<(f64, usize)> = None;
            for r in 0..self.rows {
                let a = self.t[(r, c)];
                if a > PIVOT_TOL {
                    let ratio = self.t[(r, rhs)] / a;
                    best = match best {
                        None => Some((ratio, r)),
                        Some((br, brow)) => {
                            if ratio < br - 1e-12
                                || ((ratio - br).abs() <= 1e-12 && self.basis[r] < self.basis[brow])
                            {
                                Some((ratio, r))
                            } else {
                                Some((br, brow))
                            }
                        }
                    };
                }
            }
            let Some((_, r)) = best else {
                return false;
            };
            self.pivot(r, c);
            *iterations += 1;
        }
    }

    fn remove_row(&mut self, r: usize) {
        self.t = self.t.clone().remove_row(r);
        self.basis.remove(r);
        self.rows -= 1;
    }
}

/// Solve with the two-phase simplex method.
pub fn solve_lp(lp: &LinearProgram) -> LpSolution {
    let n = lp.c.len();
    let m = lp.g.nrows();
    // shift x = lower + x', then G x' − s = h − G·lower
    let h_shift = &lp.h - &lp.g * &lp.lower;
    let art0 = n + m;
    let cols = n + 2 * m;
    let mut t = DMatrix::zeros(m + 1, cols + 1);
    for i in 0..m {
        let sign = if h_shift[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = sign * lp.g[(i, j)];
        }
        t[(i, n + i)] = -sign;
        t[(i, art0 + i)] = 1.0;
        t[(i, cols)] = sign * h_shift[i];
    }
    let mut tab = Tableau {
        t,
        basis: (art0..art0 + m).collect(),
        rows: m,
    };
    let mut iterations = 0;

    // phase 1
    let mut cost1 = vec![0.0; cols];
    for c in cost1.iter_mut().skip(art0) {
        *c = 1.0;
    }
    tab.set_objective(&cost1);
    let all = vec![true; cols];
    tab.run(&all, &mut iterations);
    let infeasibility = -tab.t[(tab.rows, cols)];
    let scale = 1.0 + h_shift.amax();
    if infeasibility > FEAS_TOL * scale {
        return LpSolution {
            status: SolveStatus::Infeasible,
            x: lp.lower.clone(),
            objective: f64::NAN,
            duals: DVector::zeros(m),
            bound_duals: DVector::zeros(n),
            iterations,
        };
    }
    // drive artificials out of the basis, dropping redundant rows
    let mut r = 0;
    while r < tab.rows {
        if tab.basis[r] >= art0 {
            match (0..art0).find(|&j| tab.t[(r, j)].abs() > PIVOT_TOL) {
                Some(c) => {
                    tab.pivot(r, c);
                    r += 1;
                }
                None => tab.remove_row(r),
            }
        } else {
            r += 1;
        }
    }

    // phase 2
    let mut cost2 = vec![0.0; cols];
    cost2[..n].copy_from_slice(lp.c.as_slice());
    tab.set_objective(&cost2);
    let mut allowed = vec![true; cols];
    for a in allowed.iter_mut().skip(art0) {
        *a = false;
    }
    let bounded = tab.run(&allowed, &mut iterations);

    let mut xs = DVector::zeros(cols);
    for (row, &b) in tab.basis.iter().enumerate() {
        xs[b] = tab.t[(row, cols)];
    }
    let x = &lp.lower + xs.rows(0, n);
    let reduced = tab.t.row(tab.rows);
    let duals = DVector::from_iterator(m, (0..m).map(|i| reduced[n + i]));
    let bound_duals = DVector::from_iterator(n, (0..n).map(|j| reduced[j]));
    let status = if bounded {
        SolveStatus::Optimal
    } else {
        SolveStatus::Unbounded
    };
    let objective = if bounded { lp.c.dot(&x) } else { f64::NEG_INFINITY };
    LpSolution {
        status,
        x,
        objective,
        duals,
        bound_duals,
        iterations,
    }
}

/// Largest violation among primal feasibility, dual feasibility, stationarity
/// and complementary slackness.
pub fn kkt_residual(lp: &LinearProgram, sol: &LpSolution) -> f64 {
    let slack = &lp.g * &sol.x - &lp.h;
    let bound_slack = &sol.x - &lp.lower;
    let stationarity = &lp.c - lp.g.transpose() * &sol.duals - &sol.bound_duals;
    let mut worst = stationarity.amax();
    for i in 0..slack.len() {
        worst = worst
            .max(-slack[i])
            .max(-sol.duals[i])
            .max((slack[i] * sol.duals[i]).abs());
    }
    for j in 0..bound_slack.len() {
        worst = worst
            .max(-bound_slack[j])
            .max(-sol.bound_duals[j])
            .max((bound_slack[j] * sol.bound_duals[j]).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lp(c: &[f64], g: &[&[f64]], h: &[f64], lower: &[f64]) -> LinearProgram {
        let rows = g.len();
        let cols = c.len();
        LinearProgram::new(
            DVector::from_column_slice(c),
            DMatrix::from_row_iterator(rows, cols, g.iter().flat_map(|r| r.iter().copied())),
            DVector::from_column_slice(h),
            DVector::from_column_slice(lower),
        )
        .unwrap()
    }

    #[test]
    fn single_variable_lower_bound() {
        let p = lp(&[1.0], &[&[1.0]], &[3.0], &[0.0]);
        let s = solve_lp(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-12);
        assert!(kkt_residual(&p, &s) < 1e-9);
    }

    #[test]
    fn unbounded_direction() {
        let p = lp(&[-1.0], &[], &[], &[0.0]);
        assert_eq!(solve_lp(&p).status, SolveStatus::Unbounded);
    }

    #[test]
    fn infeasible_system() {
        // x ≥ 2 and −x ≥ −1
        let p = lp(&[1.0], &[&[1.0], &[-1.0]], &[2.0, -1.0], &[0.0]);
        assert_eq!(solve_lp(&p).status, SolveStatus::Infeasible);
    }

    #[test]
    fn redundant_rows_and_degeneracy() {
        let p = lp(
            &[1.0, 1.0],
            &[&[1.0, 1.0], &[2.0, 2.0], &[1.0, 0.0], &[0.0, 1.0]],
            &[1.0, 2.0, 0.0, 0.0],
            &[0.0, 0.0],
        );
        let s = solve_lp(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!(kkt_residual(&p, &s) < 1e-9);
    }

    /// Minimum over every vertex of `{x ≥ lower, Gx ≥ h}`; `None` when no vertex is feasible.
    pub(crate) fn vertex_enumeration(p: &LinearProgram) -> Option<(f64, DVector<f64>)> {
        let n = p.c.len();
        let m = p.g.nrows();
        // all constraints as rows a·x ≥ b
        let mut rows: Vec<(Vec<f64>, f64)> = (0..m)
            .map(|i| (p.g.row(i).iter().copied().collect(), p.h[i]))
            .collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push((e, p.lower[j]));
        }
        let total = rows.len();
        let mut best: Option<(f64, DVector<f64>)> = None;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let a = DMatrix::from_fn(n, n, |r, c| rows[idx[r]].0[c]);
            let b = DVector::from_fn(n, |r, _| rows[idx[r]].1);
            if a.determinant().abs() > 1e-9 {
                if let Some(x) = a.lu().solve(&b) {
                    let feasible = rows.iter().all(|(ar, br)| {
                        ar.iter().zip(x.iter()).map(|(u, v)| u * v).sum::<f64>() >= br - 1e-9
                    });
                    if feasible {
                        let val = p.c.dot(&x);
                        if best.as_ref().is_none_or(|(bv, _)| val < *bv) {
                            best = Some((val, x));
                        }
                    }
                }
            }
            // next combination
            let mut k = n;
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                if idx[k] < total - n + k {
                    idx[k] += 1;
                    for l in k + 1..n {
                        idx[l] = idx[l - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    pub(crate) fn random_lp(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> LinearProgram {
        // positive costs keep the problem bounded over x ≥ lower
        let c = DVector::from_fn(cols, |_, _| rng.random_range(0.1..2.0));
        let g = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let h = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
        let lower = DVector::from_fn(cols, |_, _| rng.random_range(-0.5..0.5));
        LinearProgram::new(c, g, h, lower).unwrap()
    }

    #[test]
    fn matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let p = random_lp(&mut rng, 6, 4);
            let s = solve_lp(&p);
            match vertex_enumeration(&p) {
                Some((best, _)) => {
                    assert_eq!(s.status, SolveStatus::Optimal);
                    assert!((s.objective - best).abs() <= 1e-8 * (1.0 + best.abs()));
                    assert!(kkt_residual(&p, &s) < 1e-8);
                }
                None => assert_eq!(s.status, SolveStatus::Infeasible),
            }
        }
    }

    #[test]
    fn lp_text_dump_lists_every_row() {
        let p = lp(&[1.0, 2.0], &[&[1.0, 1.0]], &[1.0], &[0.0, 0.0]);
        let text = p.to_lp_format();
        assert!(text.starts_with("Minimize"));
        assert!(text.contains("c0:"));
        assert!(text.trim_end().ends_with("End"));
    }
}
