//! Primal–dual interior-point method for small dense semidefinite programs.
//!
//! Primal: minimize `⟨C, X⟩ + c_fᵀx` subject to `𝒜(X) + F x = b`, `X ⪰ 0`
//! (block diagonal), `x` free. Dual: maximize `bᵀy` subject to
//! `𝒜ᵀ(y) + S = C`, `Fᵀy = c_f`, `S ⪰ 0`.
//!
//! Infeasible-start path following with Nesterov–Todd scaling and a Mehrotra
//! predictor–corrector. Infeasibility is reported from Farkas-type certificates
//! read off the diverging iterates.

use nalgebra::{DMatrix, DVector};

use super::SolveStatus;
use crate::error::SolverError;

/// One linear equality `Σ coeff·X_b[i, j] + Σ coeff·x_k = rhs`.
///
/// Block entries refer to the symmetric variable: an off-diagonal term
/// `(b, i, j, v)` contributes `v·X_b[i, j]` once, not once per triangle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdpConstraint {
    pub free: Vec<(usize, f64)>,
    pub entries: Vec<(usize, usize, usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SemidefiniteProgram {
    pub free_vars: usize,
    pub blocks: Vec<usize>,
    pub free_cost: Vec<f64>,
    /// Symmetric objective matrices, one per block (zero if empty).
    pub block_cost: Vec<DMatrix<f64>>,
    pub constraints: Vec<SdpConstraint>,
}

impl SemidefiniteProgram {
    pub fn new(free_vars: usize, blocks: Vec<usize>) -> Self {
        let block_cost = blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        Self {
            free_vars,
            free_cost: vec![0.0; free_vars],
            blocks,
            block_cost,
            constraints: Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), SolverError> {
        let bad = |s: String| Err(SolverError::Malformed(s));
        if self.free_cost.len() != self.free_vars {
            return bad("free cost length differs from free variable count".into());
        }
        if self.block_cost.len() != self.blocks.len() {
            return bad("one cost matrix per block is required".into());
        }
        for (b, (c, &n)) in self.block_cost.iter().zip(&self.blocks).enumerate() {
            if c.shape() != (n, n) {
                return bad(format!("cost of block {b} has the wrong shape"));
            }
            if (c - c.transpose()).amax() > 1e-12 {
                return bad(format!("cost of block {b} is not symmetric"));
            }
        }
        for (k, con) in self.constraints.iter().enumerate() {
            if con.free.iter().any(|&(j, _)| j >= self.free_vars) {
                return bad(format!("constraint {k} references a missing free variable"));
            }
            for &(b, i, j, _) in &con.entries {
                if b >= self.blocks.len() || i >= self.blocks[b] || j >= self.blocks[b] {
                    return bad(format!("constraint {k} references a missing block entry"));
                }
            }
            let vals = con
                .free
                .iter()
                .map(|t| t.1)
                .chain(con.entries.iter().map(|t| t.3))
                .chain(std::iter::once(con.rhs));
            if vals.into_iter().any(|v| !v.is_finite()) {
                return bad(format!("constraint {k} has non-finite data"));
            }
        }
        Ok(())
    }

    /// The instance in SDPA sparse format. Free variables appear as the
    /// difference of two non-negative LP-block variables.
    pub fn to_sdpa(&self) -> String {
        let lp = 2 * self.free_vars;
        let mut s = String::from("\"mssflat SDP instance\n");
        s.push_str(&format!("{}\n", self.constraints.len()));
        let mut structure: Vec<String> = self.blocks.iter().map(|n| n.to_string()).collect();
        if lp > 0 {
            structure.push(format!("-{lp}"));
        }
        s.push_str(&format!("{}\n{}\n", structure.len(), structure.join(" ")));
        let rhs: Vec<String> = self
            .constraints
            .iter()
            .map(|c| format!("{:.17e}", c.rhs))
            .collect();
        s.push_str(&rhs.join(" "));
        s.push('\n');
        let lp_block = self.blocks.len() + 1;
        // F_0 = −C
        for (b, c) in self.block_cost.iter().enumerate() {
            for i in 0..c.nrows() {
                for j in i..c.ncols() {
                    if c[(i, j)] != 0.0 {
                        s.push_str(&format!("0 {} {} {} {:.17e}\n", b + 1, i + 1, j + 1, -c[(i, j)]));
                    }
                }
            }
        }
        for (k, &c) in self.free_cost.iter().enumerate() {
            if c != 0.0 {
                s.push_str(&format!("0 {lp_block} {0} {0} {1:.17e}\n", 2 * k + 1, -c));
                s.push_str(&format!("0 {lp_block} {0} {0} {1:.17e}\n", 2 * k + 2, c));
            }
        }
        for (m, con) in self.constraints.iter().enumerate() {
            let mut acc: std::collections::BTreeMap<(usize, usize, usize), f64> =
                std::collections::BTreeMap::new();
            for &(b, i, j, v) in &con.entries {
                let (lo, hi) = (i.min(j), i.max(j));
                // symmetric matrix entry: off-diagonal terms split across both triangles
                let w = if lo == hi { v } else { 0.5 * v };
                *acc.entry((b + 1, lo + 1, hi + 1)).or_insert(0.0) += w;
            }
            for ((b, i, j), v) in acc {
                s.push_str(&format!("{} {b} {i} {j} {v:.17e}\n", m + 1));
            }
            for &(k, v) in &con.free {
                s.push_str(&format!("{} {lp_block} {1} {1} {2:.17e}\n", m + 1, 2 * k + 1, v));
                s.push_str(&format!("{} {lp_block} {1} {1} {2:.17e}\n", m + 1, 2 * k + 2, -v));
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub step_damping: f64,
    /// Relative size of a Farkas certificate accepted as proof of infeasibility.
    pub certificate_tolerance: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 120,
            step_damping: 0.98,
            certificate_tolerance: 1e-8,
        }
    }
}

/// Objectives, complementarity and residuals of one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `⟨X, S⟩ / n`.
    pub mu: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub free: DVector<f64>,
    pub blocks: Vec<DMatrix<f64>>,
    pub y: DVector<f64>,
    pub slack: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

impl SdpSolution {
    pub fn gap(&self) -> f64 {
        (self.primal_objective - self.dual_objective).abs()
    }
}

/// Constraint data in dense per-block form.
struct Operator {
    /// For each constraint: the blocks it touches with symmetric coefficient matrices.
    mats: Vec<Vec<(usize, DMatrix<f64>)>>,
    /// `ncons × nfree`.
    f: DMatrix<f64>,
    b: DVector<f64>,
    blocks: Vec<usize>,
}

impl Operator {
    fn build(sdp: &SemidefiniteProgram, keep: &[usize]) -> Self {
        let nf = sdp.free_vars;
        let mut f = DMatrix::zeros(keep.len(), nf);
        let mut b = DVector::zeros(keep.len());
        let mut mats = Vec::with_capacity(keep.len());
        for (r, &k) in keep.iter().enumerate() {
            let con = &sdp.constraints[k];
            for &(j, v) in &con.free {
                f[(r, j)] += v;
            }
            b[r] = con.rhs;
            let mut per_block: Vec<(usize, DMatrix<f64>)> = Vec::new();
            for &(blk, i, j, v) in &con.entries {
                let pos = match per_block.iter().position(|(bb, _)| *bb == blk) {
                    Some(p) => p,
                    None => {
                        let n = sdp.blocks[blk];
                        per_block.push((blk, DMatrix::zeros(n, n)));
                        per_block.len() - 1
                    }
                };
                let m = &mut per_block[pos].1;
                if i == j {
                    m[(i, i)] += v;
                } else {
                    m[(i, j)] += 0.5 * v;
                    m[(j, i)] += 0.5 * v;
                }
            }
            mats.push(per_block);
        }
        Self {
            mats,
            f,
            b,
            blocks: sdp.blocks.clone(),
        }
    }

    fn rows(&self) -> usize {
        self.b.len()
    }

    fn apply(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.rows(),
            self.mats
                .iter()
                .map(|terms| terms.iter().map(|(blk, a)| a.dot(&x[*blk])).sum::<f64>()),
        )
    }

    fn adjoint(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (i, terms) in self.mats.iter().enumerate() {
            for (blk, a) in terms {
                out[*blk] += a * y[i];
            }
        }
        out
    }
}

fn frob(ms: &[DMatrix<f64>]) -> f64 {
    ms.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Nesterov–Todd scaling of one block: `W = G Gᵀ` with `Gᵀ S G = G⁻¹ X G⁻ᵀ = Λ`.
struct Scaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
    chol_x: DMatrix<f64>,
    chol_s: DMatrix<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Scaling> {
    let l = x.clone().cholesky()?.l();
    let r = s.clone().cholesky()?.l();
    let svd = (r.transpose() * &l).svd(true, true);
    let v = svd.v_t.as_ref()?.transpose();
    let d = svd.singular_values.clone();
    if d.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let d_inv_sqrt = DMatrix::from_diagonal(&d.map(|v| 1.0 / v.sqrt()));
    let d_sqrt = DMatrix::from_diagonal(&d.map(f64::sqrt));
    let g = &l * &v * d_inv_sqrt;
    let l_inv = l.clone().try_inverse()?;
    let g_inv = d_sqrt * v.transpose() * l_inv;
    let w = sym(&(&g * g.transpose()));
    Some(Scaling {
        g,
        g_inv,
        w,
        lambda: d,
        chol_x: l,
        chol_s: r,
    })
}

/// Largest `α` keeping `L Lᵀ + α Δ` positive semidefinite.
fn max_step(chol: &DMatrix<f64>, delta: &DMatrix<f64>) -> f64 {
    let Some(l_inv) = chol.clone().try_inverse() else {
        return 0.0;
    };
    let m = sym(&(&l_inv * delta * l_inv.transpose()));
    let lo = m.symmetric_eigenvalues().min();
    if lo >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lo
    }
}

/// Keep constraints whose coefficient rows are linearly independent.
/// Returns kept indices, or `None` if a dependent row has an inconsistent rhs.
fn independent_rows(sdp: &SemidefiniteProgram) -> Option<Vec<usize>> {
    let mut offsets = vec![sdp.free_vars];
    for &n in &sdp.blocks {
        let last = *offsets.last().unwrap();
        offsets.push(last + n * (n + 1) / 2);
    }
    let width = *offsets.last().unwrap();
    let tri = |n: usize, i: usize, j: usize| {
        let (i, j) = (i.min(j), i.max(j));
        i * n - i * (i + 1) / 2 + j
    };
    let rows: Vec<(DVector<f64>, f64)> = sdp
        .constraints
        .iter()
        .map(|con| {
            let mut v = DVector::zeros(width);
            for &(j, c) in &con.free {
                v[j] += c;
            }
            for &(b, i, j, c) in &con.entries {
                v[offsets[b] + tri(sdp.blocks[b], i, j)] += c;
            }
            (v, con.rhs)
        })
        .collect();

    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (k, (v, _)) in rows.iter().enumerate() {
        let norm = v.norm();
        if norm == 0.0 {
            dropped.push(k);
            continue;
        }
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r -= q * c;
            }
        }
        let rn = r.norm();
        if rn > 1e-10 * norm {
            basis.push(r / rn);
            keep.push(k);
        } else {
            dropped.push(k);
        }
    }
    if !dropped.is_empty() {
        let kept = DMatrix::from_columns(&keep.iter().map(|&k| rows[k].0.clone()).collect::<Vec<_>>());
        let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&k| rows[k].1));
        let svd = kept.svd(true, true);
        for &d in &dropped {
            let (v, bd) = &rows[d];
            let w = if keep.is_empty() {
                DVector::zeros(0)
            } else {
                svd.solve(v, 1e-12).ok()?
            };
            let predicted = if keep.is_empty() { 0.0 } else { w.dot(&rhs) };
            if (predicted - bd).abs() > 1e-9 * (1.0 + bd.abs()) {
                return None;
            }
        }
    }
    Some(keep)
}

/// Solve the SDP; infeasibility and unboundedness are statuses, not errors.
pub fn solve_sdp(sdp: &SemidefiniteProgram, opts: &SdpOptions) -> Result<SdpSolution, SolverError> {
    sdp.validate()?;
    let nfree = sdp.free_vars;
    let zero_blocks: Vec<DMatrix<f64>> = sdp.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    let fail = |status| SdpSolution {
        status,
        free: DVector::zeros(nfree),
        blocks: zero_blocks.clone(),
        y: DVector::zeros(sdp.constraints.len()),
        slack: zero_blocks.clone(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        iterations: 0,
        history: Vec::new(),
    };
    let Some(keep) = independent_rows(sdp) else {
        return Ok(fail(SolveStatus::Infeasible));
    };
    let op = Operator::build(sdp, &keep);
    let c_blocks = &sdp.block_cost;
    let c_free = DVector::from_column_slice(&sdp.free_cost);
    let ncons = op.rows();

    if sdp.blocks.is_empty() {
        return Ok(solve_linear_only(sdp, &op, &keep, &c_free));
    }

    let n_total: usize = sdp.blocks.iter().sum();
    let sqrt_n = (n_total as f64).sqrt();
    let norm_b = op.b.norm();
    let norm_c = frob(c_blocks) + c_free.norm();
    let mut xi_p: f64 = 10.0_f64.max(sqrt_n);
    let mut xi_d: f64 = 10.0_f64.max(sqrt_n).max(norm_c);
    for (i, terms) in op.mats.iter().enumerate() {
        let na: f64 = terms.iter().map(|(_, a)| a.norm_squared()).sum::<f64>().sqrt();
        xi_p = xi_p.max(sqrt_n * (1.0 + op.b[i].abs()) / (1.0 + na));
        xi_d = xi_d.max(na);
    }
    let mut x: Vec<DMatrix<f64>> = sdp.blocks.iter().map(|&n| DMatrix::identity(n, n) * xi_p).collect();
    let mut s: Vec<DMatrix<f64>> = sdp.blocks.iter().map(|&n| DMatrix::identity(n, n) * xi_d).collect();
    let mut xf = DVector::zeros(nfree);
    let mut y = DVector::zeros(ncons);
    let mut history = Vec::new();

    let expand_y = |y: &DVector<f64>| {
        let mut full = DVector::zeros(sdp.constraints.len());
        for (r, &k) in keep.iter().enumerate() {
            full[k] = y[r];
        }
        full
    };

    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    for iter in 0..=opts.max_iterations {
        iterations = iter;
        let rp = &op.b - op.apply(&x) - &op.f * &xf;
        let aty = op.adjoint(&y);
        let rd: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &c_blocks[k] - &aty[k] - &s[k]).collect();
        let rf = &c_free - op.f.transpose() * &y;
        let pobj = inner(c_blocks, &x) + c_free.dot(&xf);
        let dobj = op.b.dot(&y);
        let xs = inner(&x, &s);
        let mu = xs / n_total as f64;
        let pinf = rp.norm() / (1.0 + norm_b);
        let dinf = (frob(&rd) + rf.norm()) / (1.0 + norm_c);
        history.push(IterationRecord {
            primal_objective: pobj,
            dual_objective: dobj,
            mu,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
        });
        let scale = 1.0 + pobj.abs() + dobj.abs();
        if pinf <= opts.tolerance
            && dinf <= opts.tolerance
            && (pobj - dobj).abs() <= opts.tolerance * scale
            && xs <= opts.tolerance * scale
        {
            status = SolveStatus::Optimal;
            break;
        }
        // (y, S) / bᵀy → Farkas certificate of primal infeasibility
        if dobj > 0.0 {
            let aty_s: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &aty[k] + &s[k]).collect();
            let resid = frob(&aty_s) + (op.f.transpose() * &y).norm();
            if resid <= opts.certificate_tolerance * dobj {
                status = SolveStatus::Infeasible;
                break;
            }
        }
        // (X, x) / −objective → improving ray, primal unbounded
        if pobj < 0.0 {
            let resid = (op.apply(&x) + &op.f * &xf).norm();
            if resid <= opts.certificate_tolerance * (-pobj) {
                status = SolveStatus::Unbounded;
                break;
            }
        }
        if iter == opts.max_iterations {
            break;
        }

        let Some(scalings) = x
            .iter()
            .zip(&s)
            .map(|(xb, sb)| nt_scaling(xb, sb))
            .collect::<Option<Vec<_>>>()
        else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        // Schur complement M_ij = ⟨A_i, W A_j W⟩ and the augmented system
        let mut kkt = DMatrix::zeros(ncons + nfree, ncons + nfree);
        let waw: Vec<Vec<(usize, DMatrix<f64>)>> = op
            .mats
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|(blk, a)| (*blk, &scalings[*blk].w * a * &scalings[*blk].w))
                    .collect()
            })
            .collect();
        for i in 0..ncons {
            for j in i..ncons {
                let mut v = 0.0;
                for (bi, ai) in &op.mats[i] {
                    for (bj, wj) in &waw[j] {
                        if bi == bj {
                            v += ai.dot(wj);
                        }
                    }
                }
                kkt[(i, j)] = v;
                kkt[(j, i)] = v;
            }
        }
        for i in 0..ncons {
            for k in 0..nfree {
                kkt[(i, ncons + k)] = op.f[(i, k)];
                kkt[(ncons + k, i)] = op.f[(i, k)];
            }
        }
        let lu = kkt.lu();

        let direction = |rc: &[DMatrix<f64>]| -> Option<(DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
            let wrw: Vec<DMatrix<f64>> = (0..x.len())
                .map(|k| &rc[k] - &scalings[k].w * &rd[k] * &scalings[k].w)
                .collect();
            let top = &rp - op.apply(&wrw);
            let mut rhs = DVector::zeros(ncons + nfree);
            rhs.rows_mut(0, ncons).copy_from(&top);
            rhs.rows_mut(ncons, nfree).copy_from(&rf);
            let sol = lu.solve(&rhs)?;
            if sol.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let dy = sol.rows(0, ncons).into_owned();
            let dxf = sol.rows(ncons, nfree).into_owned();
            let atdy = op.adjoint(&dy);
            let ds: Vec<DMatrix<f64>> = (0..x.len()).map(|k| sym(&(&rd[k] - &atdy[k]))).collect();
            let dx: Vec<DMatrix<f64>> = (0..x.len())
                .map(|k| sym(&(&rc[k] - &scalings[k].w * &ds[k] * &scalings[k].w)))
                .collect();
            Some((dy, dxf, dx, ds))
        };
        let centering = |sigma_mu: f64, corr: Option<(&[DMatrix<f64>], &[DMatrix<f64>])>| -> Vec<DMatrix<f64>> {
            (0..x.len())
                .map(|k| {
                    let sc = &scalings[k];
                    let n = sc.lambda.len();
                    let mut r = DMatrix::identity(n, n) * sigma_mu - DMatrix::from_diagonal(&sc.lambda.map(|l| l * l));
                    if let Some((dxa, dsa)) = corr {
                        let dx_s = &sc.g_inv * &dxa[k] * sc.g_inv.transpose();
                        let ds_s = sc.g.transpose() * &dsa[k] * &sc.g;
                        r -= sym(&(dx_s * ds_s));
                    }
                    let t = DMatrix::from_fn(n, n, |i, j| 2.0 * r[(i, j)] / (sc.lambda[i] + sc.lambda[j]));
                    sym(&(&sc.g * t * sc.g.transpose()))
                })
                .collect()
        };
        let steps = |dx: &[DMatrix<f64>], ds: &[DMatrix<f64>]| {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..x.len() {
                ap = ap.min(max_step(&scalings[k].chol_x, &dx[k]));
                ad = ad.min(max_step(&scalings[k].chol_s, &ds[k]));
            }
            (ap, ad)
        };

        // predictor
        let rc_aff = centering(0.0, None);
        let Some((_, _, dx_a, ds_a)) = direction(&rc_aff) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let (ap, ad) = steps(&dx_a, &ds_a);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let x_aff: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &x[k] + &dx_a[k] * ap).collect();
        let s_aff: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &s[k] + &ds_a[k] * ad).collect();
        let mu_aff = inner(&x_aff, &s_aff) / n_total as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let rc = centering(sigma * mu, Some((&dx_a, &ds_a)));
        let Some((dy, dxf, dx, ds)) = direction(&rc) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let (ap, ad) = steps(&dx, &ds);
        let ap = (opts.step_damping * ap).min(1.0);
        let ad = (opts.step_damping * ad).min(1.0);
        for k in 0..x.len() {
            x[k] = sym(&(&x[k] + &dx[k] * ap));
            s[k] = sym(&(&s[k] + &ds[k] * ad));
        }
        xf += dxf * ap;
        y += dy * ad;
    }

    let last = history.last().copied();
    Ok(SdpSolution {
        status,
        free: xf,
        blocks: x,
        y: expand_y(&y),
        slack: s,
        primal_objective: last.map_or(f64::NAN, |r| r.primal_objective),
        dual_objective: last.map_or(f64::NAN, |r| r.dual_objective),
        iterations,
        history,
    })
}

/// No cone: `F x = b` with objective `c_fᵀx` is either constant on the
/// affine set, unbounded, or infeasible.
fn solve_linear_only(
    sdp: &SemidefiniteProgram,
    op: &Operator,
    keep: &[usize],
    c_free: &DVector<f64>,
) -> SdpSolution {
    let nfree = sdp.free_vars;
    let mut full_y = DVector::zeros(sdp.constraints.len());
    let base = SdpSolution {
        status: SolveStatus::Optimal,
        free: DVector::zeros(nfree),
        blocks: Vec::new(),
        y: full_y.clone(),
        slack: Vec::new(),
        primal_objective: 0.0,
        dual_objective: 0.0,
        iterations: 0,
        history: Vec::new(),
    };
    if op.rows() == 0 {
        let status = if c_free.amax() > 0.0 {
            SolveStatus::Unbounded
        } else {
            SolveStatus::Optimal
        };
        return SdpSolution { status, ..base };
    }
    let svd = op.f.clone().svd(true, true);
    let Ok(x) = svd.solve(&op.b, 1e-12) else {
        return SdpSolution {
            status: SolveStatus::NumericalFailure,
            ..base
        };
    };
    // the objective must lie in the row space of F
    let ft_svd = op.f.transpose().svd(true, true);
    let y = ft_svd.solve(c_free, 1e-12).unwrap_or_else(|_| DVector::zeros(op.rows()));
    let resid = (op.f.transpose() * &y - c_free).amax();
    if resid > 1e-9 * (1.0 + c_free.amax()) {
        return SdpSolution {
            status: SolveStatus::Unbounded,
            ..base
        };
    }
    for (r, &k) in keep.iter().enumerate() {
        full_y[k] = y[r];
    }
    let obj = c_free.dot(&x);
    SdpSolution {
        status: SolveStatus::Optimal,
        free: x,
        y: full_y,
        primal_objective: obj,
        dual_objective: op.b.dot(&y),
        ..base
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trace_minimization_with_fixed_corner() {
        let mut p = SemidefiniteProgram::new(0, vec![2]);
        p.block_cost[0] = DMatrix::identity(2, 2);
        p.constraints.push(SdpConstraint {
            entries: vec![(0, 0, 0, 1.0)],
            rhs: 1.0,
            ..Default::default()
        });
        let s = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_objective - 1.0).abs() < 1e-8);
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((&s.blocks[0] - expect).amax() < 1e-6);
    }

    /// Diagonal SDPs decouple: min Σ c_i X_ii s.t. X_ii = d_i has optimum Σ c_i d_i.
    #[test]
    fn random_diagonal_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = rng.random_range(1..5);
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
            let mut p = SemidefiniteProgram::new(0, vec![n]);
            p.block_cost[0] = DMatrix::from_diagonal(&DVector::from_vec(c.clone()));
            for i in 0..n {
                p.constraints.push(SdpConstraint {
                    entries: vec![(0, i, i, 1.0)],
                    rhs: d[i],
                    ..Default::default()
                });
            }
            let s = solve_sdp(&p, &SdpOptions::default()).unwrap();
            assert_eq!(s.status, SolveStatus::Optimal);
            let exact: f64 = c.iter().zip(&d).map(|(a, b)| a * b).sum();
            assert!((s.primal_objective - exact).abs() < 1e-7);
            for i in 0..n {
                assert!((s.blocks[0][(i, i)] - d[i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn infeasible_instance_reported() {
        // X_00 = −1 with X ⪰ 0
        let mut p = SemidefiniteProgram::new(0, vec![2]);
        p.constraints.push(SdpConstraint {
            entries: vec![(0, 0, 0, 1.0)],
            rhs: -1.0,
            ..Default::default()
        });
        let s = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_instance_reported() {
        // min x s.t. X_00 − x = 0, X ⪰ 0 is bounded; min −x is not
        let mut p = SemidefiniteProgram::new(1, vec![1]);
        p.free_cost[0] = -1.0;
        p.constraints.push(SdpConstraint {
            entries: vec![(0, 0, 0, 1.0)],
            free: vec![(0, -1.0)],
            rhs: 0.0,
        });
        let s = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Unbounded);
    }

    #[test]
    fn dependent_rows_removed() {
        let mut p = SemidefiniteProgram::new(0, vec![2]);
        p.block_cost[0] = DMatrix::identity(2, 2);
        for scale in [1.0, 2.0] {
            p.constraints.push(SdpConstraint {
                entries: vec![(0, 0, 0, scale)],
                rhs: scale,
                ..Default::default()
            });
        }
        let s = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        // inconsistent duplicate
        p.constraints[1].rhs = 3.0;
        let s = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn free_only_problem() {
        let mut p = SemidefiniteProgram::new(2, vec![]);
        p.free_cost = vec![1.0, 1.0];
        p.constraints.push(SdpConstraint {
            free: vec![(0, 1.0), (1, 1.0)],
            rhs: 2.0,
            ..Default::default()
        });
        let s = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_objective - 2.0).abs() < 1e-12);
        p.free_cost = vec![1.0, 0.0];
        assert_eq!(solve_sdp(&p, &SdpOptions::default()).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn sdpa_dump_header() {
        let mut p = SemidefiniteProgram::new(1, vec![2]);
        p.constraints.push(SdpConstraint {
            entries: vec![(0, 0, 1, 2.0)],
            free: vec![(0, 1.0)],
            rhs: 1.0,
        });
        let text = p.to_sdpa();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "1");
        assert_eq!(lines[2], "2");
        assert_eq!(lines[3], "2 -2");
        assert!(text.contains("1 1 1 2 1.00000000000000000e0"));
    }
}
