//! Univariate polynomials in time over a shared horizon.
//!
//! Coefficients are stored in ascending monomial order, so `coeffs[k]` multiplies
//! `t^k`. Everything here is a plain value type.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

use crate::error::PolyError;

/// A real polynomial `p(t) = Σ c_k t^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        if coeffs.is_empty() {
            return Self::zero();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![0.0] }
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Nominal degree, `len(coeffs) - 1`. Trailing zeros count.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Horner evaluation.
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Value of the `order`-th derivative at `t`, without allocating.
    pub fn eval_derivative(&self, t: f64, order: usize) -> f64 {
        let mut acc = 0.0;
        for k in (order..self.coeffs.len()).rev() {
            acc = acc * t + self.coeffs[k] * falling_factorial(k, order);
        }
        acc
    }

    pub fn derivative(&self, order: usize) -> Poly {
        if order == 0 {
            return self.clone();
        }
        if order > self.degree() {
            return Poly::zero();
        }
        let coeffs = (order..self.coeffs.len())
            .map(|k| self.coeffs[k] * falling_factorial(k, order))
            .collect();
        Poly { coeffs }
    }

    /// Antiderivative with zero constant term.
    pub fn antiderivative(&self) -> Poly {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(0.0);
        coeffs.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c / (k as f64 + 1.0)),
        );
        Poly { coeffs }
    }

    /// Exact integral over `[0, t_end]`: `Σ c_k t_end^{k+1}/(k+1)`.
    pub fn integral_to(&self, t_end: f64) -> f64 {
        self.antiderivative().eval(t_end)
    }

    /// Mean value over `[0, horizon]`.
    pub fn mean(&self, horizon: f64) -> f64 {
        self.integral_to(horizon) / horizon
    }
}

/// `k (k-1) ... (k-order+1)`, the factor picked up by `t^k` under `order` derivatives.
pub(crate) fn falling_factorial(k: usize, order: usize) -> f64 {
    (k + 1 - order..=k).map(|i| i as f64).product()
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let coeffs = (0..n)
            .map(|k| self.coeffs.get(k).unwrap_or(&0.0) + rhs.coeffs.get(k).unwrap_or(&0.0))
            .collect();
        Poly { coeffs }
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &(rhs * -1.0)
    }
}

impl Mul<f64> for &Poly {
    type Output = Poly;
    fn mul(self, rhs: f64) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().map(|c| c * rhs).collect(),
        }
    }
}

/// A vector of polynomials sharing the horizon `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyVec {
    entries: Vec<Poly>,
    horizon: f64,
}

impl PolyVec {
    pub fn new(entries: Vec<Poly>, horizon: f64) -> Result<Self, PolyError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(PolyError::NonPositiveHorizon(horizon));
        }
        Ok(Self { entries, horizon })
    }

    /// Constant trajectories holding `values` over the horizon.
    pub fn constant(values: &[f64], horizon: f64) -> Result<Self, PolyError> {
        Self::new(values.iter().map(|&v| Poly::constant(v)).collect(), horizon)
    }

    pub fn entries(&self) -> &[Poly] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.entries.len(), self.entries.iter().map(|p| p.eval(t)))
    }

    pub fn eval_derivative(&self, t: f64, order: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.entries.len(),
            self.entries.iter().map(|p| p.eval_derivative(t, order)),
        )
    }

    pub fn derivative(&self, order: usize) -> PolyVec {
        PolyVec {
            entries: self.entries.iter().map(|p| p.derivative(order)).collect(),
            horizon: self.horizon,
        }
    }

    /// `∫₀ᵀ Σᵢ pᵢ(t) dt`, exact in the coefficients.
    pub fn integral_over_horizon(&self) -> f64 {
        self.entries
            .iter()
            .map(|p| p.integral_to(self.horizon))
            .sum()
    }

    /// Componentwise horizon means.
    pub fn mean(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.entries.len(),
            self.entries.iter().map(|p| p.mean(self.horizon)),
        )
    }
}

/// A condition `p^{(order)}(time) = value` used for boundary fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub time: f64,
    pub derivative_order: usize,
    pub value: f64,
}

impl BoundaryCondition {
    pub fn new(time: f64, derivative_order: usize, value: f64) -> Self {
        Self {
            time,
            derivative_order,
            value,
        }
    }

    /// Row of the generalized Vandermonde system for a polynomial of `degree`.
    pub fn row(&self, degree: usize) -> Vec<f64> {
        (0..=degree)
            .map(|k| {
                if k < self.derivative_order {
                    0.0
                } else {
                    falling_factorial(k, self.derivative_order)
                        * self.time.powi((k - self.derivative_order) as i32)
                }
            })
            .collect()
    }
}

const FIT_RESIDUAL_TOL: f64 = 1e-9;
const FIT_RANK_TOL: f64 = 1e-12;

/// Fit a degree-`degree` polynomial to the given conditions.
///
/// With fewer conditions than coefficients the minimum-coefficient-norm
/// solution is returned. Rank-deficient or inconsistent condition sets fail
/// with [`PolyError::SingularFit`].
pub fn fit_boundary(conds: &[BoundaryCondition], degree: usize) -> Result<Poly, PolyError> {
    let n = degree + 1;
    if conds.is_empty() {
        return Ok(Poly::new(vec![0.0; n]));
    }
    if conds.len() > n {
        return Err(PolyError::SingularFit {
            conditions: conds.len(),
            degree,
            reason: "more conditions than coefficients",
        });
    }
    if conds.iter().any(|c| c.derivative_order > degree) {
        return Err(PolyError::SingularFit {
            conditions: conds.len(),
            degree,
            reason: "derivative order exceeds degree",
        });
    }

    // Unit-norm rows keep the singular values comparable across derivative orders.
    let mut rows = DMatrix::<f64>::zeros(conds.len(), n);
    let mut rhs = DVector::<f64>::zeros(conds.len());
    for (i, c) in conds.iter().enumerate() {
        let r = c.row(degree);
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (k, v) in r.iter().enumerate() {
            rows[(i, k)] = v / norm;
        }
        rhs[i] = c.value / norm;
    }

    let svd = rows.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= FIT_RANK_TOL * smax {
        return Err(PolyError::SingularFit {
            conditions: conds.len(),
            degree,
            reason: "condition rows are linearly dependent",
        });
    }
    let coeffs = svd
        .solve(&rhs, FIT_RANK_TOL * smax)
        .map_err(|_| PolyError::SingularFit {
            conditions: conds.len(),
            degree,
            reason: "least-squares solve failed",
        })?;
    let poly = Poly::new(coeffs.iter().copied().collect());

    for c in conds {
        let residual = poly.eval_derivative(c.time, c.derivative_order) - c.value;
        let scale = 1.0_f64.max(c.value.abs());
        if residual.abs() > FIT_RESIDUAL_TOL * scale {
            return Err(PolyError::SingularFit {
                conditions: conds.len(),
                degree,
                reason: "fitted polynomial misses a condition",
            });
        }
    }
    Ok(poly)
}

/// Uniform grid of `points` samples over `[0, horizon]`.
pub fn uniform_grid(horizon: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|i| horizon * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        assert_eq!(Poly::new(vec![1.0, 2.0]).eval(3.0), 7.0);
        assert_eq!(Poly::new(vec![0.0]).eval(12.5), 0.0);
        assert_eq!(Poly::new(vec![1.0, -2.0, 1.0]).eval(1.0), 0.0);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(Poly::new(vec![0.0, 0.0, 1.0]).derivative(1).coeffs(), &[0.0, 2.0]);
        let p = Poly::new(vec![3.0, -1.0, 4.0]);
        assert_eq!(p.derivative(0), p);
        assert_eq!(Poly::new(vec![1.0; 4]).derivative(4).coeffs(), &[0.0]);
    }

    #[test]
    fn eval_derivative_matches_derivative_poly() {
        let p = Poly::new(vec![0.3, -1.2, 2.0, 0.7, -0.1]);
        for k in 0..6 {
            for &t in &[-1.0, 0.0, 0.4, 2.5] {
                let a = p.eval_derivative(t, k);
                let b = p.derivative(k).eval(t);
                assert!((a - b).abs() < 1e-12, "k={k} t={t}");
            }
        }
    }

    #[test]
    fn integral_examples() {
        let y = PolyVec::constant(&[2.0], 3.0).unwrap();
        assert_eq!(y.integral_over_horizon(), 6.0);
        let y = PolyVec::new(vec![Poly::new(vec![0.0, 1.0])], 2.0).unwrap();
        assert_eq!(y.integral_over_horizon(), 2.0);
    }

    #[test]
    fn horizon_must_be_positive() {
        assert!(PolyVec::new(vec![Poly::zero()], 0.0).is_err());
        assert!(PolyVec::new(vec![Poly::zero()], -1.0).is_err());
    }

    #[test]
    fn cubic_transfer_fit() {
        let deg = std::f64::consts::PI / 180.0;
        let t_end = 1.5;
        let conds = [
            BoundaryCondition::new(0.0, 0, 20.0 * deg),
            BoundaryCondition::new(0.0, 1, 0.0),
            BoundaryCondition::new(t_end, 0, 80.0 * deg),
            BoundaryCondition::new(t_end, 1, 0.0),
        ];
        let p = fit_boundary(&conds, 3).unwrap();
        // closed form: q0 + Δ(3s² - 2s³), s = t/T
        let delta = 60.0 * deg;
        for &t in &[0.0, 0.3, 0.75, 1.2, 1.5] {
            let s: f64 = t / t_end;
            let expect = 20.0 * deg + delta * (3.0 * s * s - 2.0 * s * s * s);
            assert!((p.eval(t) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn single_condition_constant() {
        let p = fit_boundary(&[BoundaryCondition::new(0.0, 0, 4.2)], 0).unwrap();
        assert_eq!(p.coeffs().len(), 1);
        assert!((p.coeffs()[0] - 4.2).abs() < 1e-15);
    }

    #[test]
    fn eight_conditions_degree_eight() {
        let t_end = 3.0;
        let vals0 = [0.0, 0.001, 0.02, -0.1];
        let valst = [std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0];
        let mut conds = Vec::new();
        for k in 0..4 {
            conds.push(BoundaryCondition::new(0.0, k, vals0[k]));
            conds.push(BoundaryCondition::new(t_end, k, valst[k]));
        }
        let p = fit_boundary(&conds, 8).unwrap();
        for c in &conds {
            // substitute back into the condition row
            let row = c.row(8);
            let lhs: f64 = row.iter().zip(p.coeffs()).map(|(r, a)| r * a).sum();
            assert!((lhs - c.value).abs() < 1e-9);
        }
    }

    #[test]
    fn minimum_norm_underdetermined() {
        // p(0) = 1 with degree 2: minimum-norm answer is the constant 1.
        let p = fit_boundary(&[BoundaryCondition::new(0.0, 0, 1.0)], 2).unwrap();
        assert!((p.coeffs()[0] - 1.0).abs() < 1e-14);
        assert!(p.coeffs()[1].abs() < 1e-14 && p.coeffs()[2].abs() < 1e-14);
    }

    #[test]
    fn inconsistent_or_dependent_conditions_fail() {
        let dup = [
            BoundaryCondition::new(0.0, 0, 1.0),
            BoundaryCondition::new(0.0, 0, 2.0),
        ];
        assert!(matches!(fit_boundary(&dup, 3), Err(PolyError::SingularFit { .. })));
        let too_many = [
            BoundaryCondition::new(0.0, 0, 1.0),
            BoundaryCondition::new(1.0, 0, 2.0),
        ];
        assert!(fit_boundary(&too_many, 0).is_err());
        assert!(fit_boundary(&[BoundaryCondition::new(0.0, 3, 1.0)], 2).is_err());
    }

    #[test]
    fn uniform_grid_endpoints() {
        let g = uniform_grid(3.0, 31);
        assert_eq!(g.len(), 31);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[30], 3.0);
        assert!((g[1] - 0.1).abs() < 1e-15);
    }
}
