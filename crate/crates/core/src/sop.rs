//! Co-contraction optimization over a planned joint trajectory.
//!
//! Given `q(t)` on `[0, T]`, choose polynomial co-contractions `Y(t)` that
//! minimize `∫₀ᵀ Σ Y_i dt` while keeping every tendon force above its reserve:
//! `C_Y·Y(t) ⪰ B` and `Y(t) ⪰ 0`, each enforced as a global SOS condition.
//! With constant `Y` the problem collapses to a linear program.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::Serialize;

use crate::error::SopError;
use crate::flatness::FlatConfig;
use crate::linkage::{torque_at, Dynamics};
use crate::poly::{falling_factorial, uniform_grid, Poly, PolyVec};
use crate::solvers::sdp::{solve_sdp, SdpOptions, SdpSolution, SemidefiniteProgram};
use crate::solvers::sos::{AffineExpr, GramEncoding, SdpBuilder};
use crate::solvers::{solve_lp, LinearProgram, SolveStatus};

/// Componentwise joint-torque range over the planning grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorqueBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn torque_bounds<D: Dynamics + ?Sized>(dynamics: &D, q: &PolyVec, grid: &[f64]) -> TorqueBounds {
    let n = q.len();
    let mut lower = vec![f64::INFINITY; n];
    let mut upper = vec![f64::NEG_INFINITY; n];
    for &t in grid {
        let tau = torque_at(dynamics, q, t);
        for i in 0..n {
            lower[i] = lower[i].min(tau[i]);
            upper[i] = upper[i].max(tau[i]);
        }
    }
    TorqueBounds { lower, upper }
}

/// `B_i = reserve_i − min_{τ ∈ box} c_i·τ` with `c_i` the `i`-th row of `C_τ`.
pub fn slack_rhs(config: &FlatConfig, bounds: &TorqueBounds, reserves: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        config.muscles(),
        (0..config.muscles()).map(|i| {
            let worst: f64 = (0..config.joints())
                .map(|j| {
                    let c = config.c_tau[(i, j)];
                    if c > 0.0 {
                        c * bounds.lower[j]
                    } else {
                        c * bounds.upper[j]
                    }
                })
                .sum();
            reserves[i] - worst
        }),
    )
}

/// `Y_output^{(derivative_order)}(time) = value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YEquality {
    pub output: usize,
    pub derivative_order: usize,
    pub time: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SopSpec {
    pub q: PolyVec,
    pub grid_points: usize,
    pub reserves: DVector<f64>,
    /// Degree of every `Y_i`; must be even.
    pub degree: usize,
    pub equalities: Vec<YEquality>,
}

impl SopSpec {
    pub fn horizon(&self) -> f64 {
        self.q.horizon()
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.horizon(), self.grid_points)
    }

    fn validate(&self, config: &FlatConfig) -> Result<(), SopError> {
        let bad = |s: String| Err(SopError::InvalidSpec(s));
        if self.grid_points < 2 {
            return bad(format!("grid needs at least 2 points, got {}", self.grid_points));
        }
        if self.reserves.len() != config.muscles() {
            return bad(format!(
                "{} reserves for {} muscles",
                self.reserves.len(),
                config.muscles()
            ));
        }
        if self.reserves.iter().any(|r| !(*r >= 0.0)) {
            return bad("reserves must be non-negative".into());
        }
        if self.q.len() != config.joints() {
            return bad(format!("{} joint polynomials for {} joints", self.q.len(), config.joints()));
        }
        for eq in &self.equalities {
            if eq.output >= config.outputs() {
                return bad(format!("equality refers to missing output {}", eq.output));
            }
        }
        for output in 0..config.outputs() {
            let count = self.equalities.iter().filter(|e| e.output == output).count();
            if count > self.degree {
                return Err(SopError::DegreeTooLow {
                    output,
                    constraints: count,
                    degree: self.degree,
                });
            }
        }
        Ok(())
    }
}

/// A SOP as an SDP, with the bookkeeping to read `Y` back.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSop {
    pub program: SemidefiniteProgram,
    pub outputs: usize,
    pub degree: usize,
    pub horizon: f64,
    /// Gram blocks: `m` force-reserve rows, then `p` non-negativity rows.
    pub grams: Vec<GramEncoding>,
}

impl EncodedSop {
    /// Free variable holding coefficient `k` of `Y_i`.
    pub fn coeff_var(&self, output: usize, k: usize) -> usize {
        output * (self.degree + 1) + k
    }

    pub fn decode(&self, free: &DVector<f64>) -> PolyVec {
        let entries = (0..self.outputs)
            .map(|i| Poly::new((0..=self.degree).map(|k| free[self.coeff_var(i, k)]).collect()))
            .collect();
        PolyVec::new(entries, self.horizon).expect("horizon validated")
    }
}

pub fn encode_sop(spec: &SopSpec, config: &FlatConfig, b: &DVector<f64>) -> Result<EncodedSop, SopError> {
    spec.validate(config)?;
    if !spec.degree.is_multiple_of(2) {
        return Err(crate::error::SolverError::OddDegree(spec.degree).into());
    }
    let p = config.outputs();
    let d = spec.degree;
    let t_end = spec.horizon();
    let mut builder = SdpBuilder::new();
    builder.add_free(p * (d + 1));
    let var = |i: usize, k: usize| i * (d + 1) + k;
    for i in 0..p {
        for k in 0..=d {
            builder.add_cost(var(i, k), t_end.powi(k as i32 + 1) / (k as f64 + 1.0));
        }
    }
    let mut grams = Vec::new();
    for row in 0..config.muscles() {
        let coeffs: Vec<AffineExpr> = (0..=d)
            .map(|k| AffineExpr {
                terms: (0..p).map(|i| (var(i, k), config.c_y[(row, i)])).collect(),
                constant: if k == 0 { -b[row] } else { 0.0 },
            })
            .collect();
        grams.push(builder.sos_constraint(&coeffs)?);
    }
    for i in 0..p {
        let coeffs: Vec<AffineExpr> = (0..=d).map(|k| AffineExpr::var(var(i, k))).collect();
        grams.push(builder.sos_constraint(&coeffs)?);
    }
    for eq in &spec.equalities {
        let terms = (eq.derivative_order..=d)
            .map(|k| {
                let w = falling_factorial(k, eq.derivative_order)
                    * eq.time.powi((k - eq.derivative_order) as i32);
                (var(eq.output, k), w)
            })
            .collect();
        builder.add_equality(
            &AffineExpr {
                terms,
                constant: 0.0,
            },
            eq.value,
        );
    }
    Ok(EncodedSop {
        program: builder.build(),
        outputs: p,
        degree: d,
        horizon: t_end,
        grams,
    })
}

/// Record of one optimization, suitable for experiment logs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub objective: f64,
    pub bounds: TorqueBounds,
    pub b: Vec<f64>,
    pub iterations: usize,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SopSolution {
    pub y: PolyVec,
    pub report: SolveReport,
    pub sdp: SdpSolution,
    pub encoded: EncodedSop,
}

/// Bounds and `B` for `spec`, then the SDP. Non-optimal statuses are errors.
pub fn solve_sop<D: Dynamics + ?Sized>(
    spec: &SopSpec,
    config: &FlatConfig,
    dynamics: &D,
) -> Result<SopSolution, SopError> {
    let bounds = torque_bounds(dynamics, &spec.q, &spec.grid());
    let b = slack_rhs(config, &bounds, &spec.reserves);
    solve_sop_with_rhs(spec, config, bounds, &b)
}

pub fn solve_sop_with_rhs(
    spec: &SopSpec,
    config: &FlatConfig,
    bounds: TorqueBounds,
    b: &DVector<f64>,
) -> Result<SopSolution, SopError> {
    let encoded = encode_sop(spec, config, b)?;
    let start = Instant::now();
    let sdp = solve_sdp(&encoded.program, &SdpOptions::default())?;
    let elapsed = start.elapsed();
    let report = SolveReport {
        status: sdp.status,
        objective: sdp.primal_objective,
        bounds,
        b: b.iter().copied().collect(),
        iterations: sdp.iterations,
        solve_seconds: elapsed.as_secs_f64(),
    };
    if sdp.status != SolveStatus::Optimal {
        return Err(SopError::Status(sdp.status));
    }
    Ok(SopSolution {
        y: encoded.decode(&sdp.free),
        report,
        sdp,
        encoded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlpSolution {
    pub alpha: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub solve_time: Duration,
}

/// The constant-co-contraction linear program `min 1ᵀα` s.t. `C_Y α ⪰ B`, `α ⪰ 0`.
pub fn slp_program(config: &FlatConfig, b: &DVector<f64>) -> LinearProgram {
    let p = config.outputs();
    LinearProgram::new(
        DVector::from_element(p, 1.0),
        config.c_y.clone(),
        b.clone(),
        DVector::zeros(p),
    )
    .expect("dimensions follow the flat configuration")
}

pub fn solve_slp(config: &FlatConfig, b: &DVector<f64>) -> Result<SlpSolution, SopError> {
    let lp = slp_program(config, b);
    let start = Instant::now();
    let sol = solve_lp(&lp);
    let solve_time = start.elapsed();
    if sol.status != SolveStatus::Optimal {
        return Err(SopError::Status(sol.status));
    }
    Ok(SlpSolution {
        alpha: sol.x,
        objective: sol.objective,
        iterations: sol.iterations,
        solve_time,
    })
}

/// A point satisfying both SLP constraint groups: `α = γ·1_p` with
/// `σ = C_Y·1_p` and `γ = max(max_i B_i/σ_i, 0)`, so `C_Y α = γσ ⪰ B`.
pub fn slp_feasible_point(config: &FlatConfig, b: &DVector<f64>) -> Result<DVector<f64>, SopError> {
    let sigma = config.sigma();
    let mut gamma: f64 = 0.0;
    for (row, (&s, &bi)) in sigma.iter().zip(b.iter()).enumerate() {
        if !(s > 0.0) {
            return Err(SopError::NonPositiveSigma { row, value: s });
        }
        gamma = gamma.max(bi / s);
    }
    // Cancellation inside C_Y·(γ·1) can leave rows slightly short of B;
    // grow γ until the evaluated product clears it.
    let mut scale = 1.0;
    for _ in 0..64 {
        let residual = &config.c_y * DVector::from_element(config.outputs(), gamma) - b;
        let bump = residual
            .iter()
            .zip(sigma.iter())
            .map(|(&r, &s)| (-r).max(0.0) / s)
            .fold(0.0, f64::max);
        if bump == 0.0 {
            break;
        }
        gamma += scale * bump.max(gamma * f64::EPSILON);
        scale *= 2.0;
    }
    Ok(DVector::from_element(config.outputs(), gamma))
}

/// Smallest slack of `C_Y·Y(t) − B` and of `Y(t)` over `grid`.
pub fn constraint_margins(y: &PolyVec, config: &FlatConfig, b: &DVector<f64>, grid: &[f64]) -> (f64, f64) {
    let mut eps0 = f64::INFINITY;
    let mut eps1 = f64::INFINITY;
    for &t in grid {
        let yt = y.eval(t);
        eps0 = eps0.min((&config.c_y * &yt - b).min());
        eps1 = eps1.min(yt.min());
    }
    (eps0, eps1)
}
