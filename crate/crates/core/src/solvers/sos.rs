//! Univariate sum-of-squares constraints through Gram matrices.
//!
//! `p(t) = Σ_k p_k t^k` of degree `2d` is SOS iff `p = z(t)ᵀ Q z(t)` for some
//! `Q ⪰ 0`, with `z(t) = (1, t, …, t^d)`. Matching coefficients gives
//! `p_k = Σ_{i+j=k} Q_ij`, one linear equality per power of `t`.

use nalgebra::DMatrix;

use super::sdp::{SdpConstraint, SemidefiniteProgram};
use crate::error::SolverError;

/// `constant + Σ coeff·x_var` over the free variables of a program.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(index: usize) -> Self {
        Self {
            terms: vec![(index, 1.0)],
            constant: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }
}

/// Where one SOS constraint lives inside a program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramEncoding {
    /// Degree `2d` of the constrained polynomial.
    pub degree: usize,
    /// Index of the `(d+1) × (d+1)` PSD block.
    pub block: usize,
    /// Index of the first of the `2d + 1` coefficient equalities.
    pub first_constraint: usize,
}

impl GramEncoding {
    pub fn size(&self) -> usize {
        self.degree / 2 + 1
    }

    /// Coefficients of `z(t)ᵀ Q z(t)`.
    pub fn reconstruct(q: &DMatrix<f64>) -> Vec<f64> {
        let n = q.nrows();
        let mut out = vec![0.0; 2 * n - 1];
        for i in 0..n {
            for j in 0..n {
                out[i + j] += q[(i, j)];
            }
        }
        out
    }
}

/// Incremental construction of a [`SemidefiniteProgram`].
#[derive(Debug, Clone, Default)]
pub struct SdpBuilder {
    program: SemidefiniteProgram,
}

impl SdpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append `count` free scalar variables; returns the first index.
    pub fn add_free(&mut self, count: usize) -> usize {
        let first = self.program.free_vars;
        self.program.free_vars += count;
        self.program.free_cost.extend(std::iter::repeat_n(0.0, count));
        first
    }

    pub fn add_block(&mut self, size: usize) -> usize {
        self.program.blocks.push(size);
        self.program.block_cost.push(DMatrix::zeros(size, size));
        self.program.blocks.len() - 1
    }

    pub fn add_cost(&mut self, var: usize, coeff: f64) {
        self.program.free_cost[var] += coeff;
    }

    /// `expr = value` as a linear row.
    pub fn add_equality(&mut self, expr: &AffineExpr, value: f64) -> usize {
        self.program.constraints.push(SdpConstraint {
            free: expr.terms.clone(),
            entries: Vec::new(),
            rhs: value - expr.constant,
        });
        self.program.constraints.len() - 1
    }

    /// Require the polynomial with coefficients `coeffs` (ascending) to be SOS.
    pub fn sos_constraint(&mut self, coeffs: &[AffineExpr]) -> Result<GramEncoding, SolverError> {
        if coeffs.is_empty() || coeffs.len().is_multiple_of(2) {
            return Err(SolverError::OddDegree(coeffs.len().saturating_sub(1)));
        }
        let degree = coeffs.len() - 1;
        let size = degree / 2 + 1;
        let block = self.add_block(size);
        let first_constraint = self.program.constraints.len();
        for (k, expr) in coeffs.iter().enumerate() {
            let mut entries = Vec::new();
            for i in 0..size {
                if k >= i && k - i < size && i <= k - i {
                    let j = k - i;
                    entries.push((block, i, j, if i == j { 1.0 } else { 2.0 }));
                }
            }
            // Σ Q_ij − Σ c·x = constant
            self.program.constraints.push(SdpConstraint {
                free: expr.terms.iter().map(|&(v, c)| (v, -c)).collect(),
                entries,
                rhs: expr.constant,
            });
        }
        Ok(GramEncoding {
            degree,
            block,
            first_constraint,
        })
    }

    pub fn program(&self) -> &SemidefiniteProgram {
        &self.program
    }

    pub fn build(self) -> SemidefiniteProgram {
        self.program
    }
}
