//! Receding-horizon control: replan from the measured state every `δ` seconds.
//!
//! Each step fits a cubic joint transfer to the target with zero terminal
//! velocity, solves for co-contractions (constant by LP, or polynomial by SOS),
//! recovers neural inputs through the flat inverse and applies them for `δ`.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, SopError, EXIT_NUMERICAL};
use crate::flatness::{inverse_flat_on_grid, FlatTrajectory, Plant};
use crate::linkage::Dynamics;
use crate::poly::{fit_boundary, uniform_grid, BoundaryCondition, PolyVec};
use crate::sim::{integrate, InputSignal, IntegratorOptions, MssState, SimTrace};
use crate::sop::{
    constraint_margins, slack_rhs, solve_slp, solve_sop_with_rhs, torque_bounds, SopSpec, YEquality,
};
use crate::solvers::SolveStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    Lp,
    Sos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputHold {
    Linear,
    ZeroOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhConfig {
    pub horizon: f64,
    pub step: f64,
    pub grid_points: usize,
    /// Target joint angles, rad.
    pub target: DVector<f64>,
    pub reserves: DVector<f64>,
    pub mode: PlanMode,
    pub max_steps: usize,
    /// Convergence band on `q` (rad) and on `q̇` (rad/s).
    pub band: f64,
    /// Consecutive in-band steps that end the run.
    pub hold_steps: usize,
    /// Degree of `Y` in SOS mode.
    pub sos_degree: usize,
    pub input_hold: InputHold,
    pub integrator: IntegratorOptions,
    /// Replace the reserves from this step on.
    pub reserve_change: Option<(usize, DVector<f64>)>,
    /// Treat the solve at this step as failed.
    pub inject_failure_at: Option<usize>,
}

impl RhConfig {
    pub fn validate(&self, plant: &Plant) -> Result<(), String> {
        if !(self.step > 0.0 && self.step < self.horizon) {
            return Err(format!("need 0 < step < horizon, got step {} horizon {}", self.step, self.horizon));
        }
        if self.grid_points < 2 {
            return Err("grid needs at least 2 points".into());
        }
        if self.target.len() != plant.model.dof() {
            return Err("target needs one angle per joint".into());
        }
        if self.reserves.len() != plant.muscles.len() {
            return Err("reserves need one entry per muscle".into());
        }
        if !(self.band > 0.0) {
            return Err("convergence band must be positive".into());
        }
        if self.mode == PlanMode::Sos && (self.sos_degree < 2 || !self.sos_degree.is_multiple_of(2)) {
            return Err("SOS degree must be even and at least 2".into());
        }
        Ok(())
    }
}

/// Observables of one receding-horizon step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhStep {
    pub step: usize,
    pub time: f64,
    pub status: SolveStatus,
    pub objective: f64,
    #[serde(skip)]
    pub solve_seconds: f64,
    pub b: Vec<f64>,
    /// Co-contractions chosen at the start of the step.
    pub y_plan: Vec<f64>,
    pub q_predicted: Vec<f64>,
    pub y_predicted: Vec<f64>,
    pub q_closed_loop: Vec<f64>,
    pub y_closed_loop: Vec<f64>,
    /// min over the grid of `C_Y·Y − B` for the new optimum.
    pub eps0: f64,
    /// min over the grid of `Y` for the new optimum.
    pub eps1: f64,
    /// The previous plan, shifted by `δ`, checked against the new `B`.
    pub carry_eps0: Option<f64>,
    pub carry_eps1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RhLog {
    pub steps: Vec<RhStep>,
}

impl RhLog {
    pub fn csv_header(joints: usize, muscles: usize, outputs: usize) -> Vec<String> {
        let mut h: Vec<String> = ["step", "t", "status", "objective"].iter().map(|s| s.to_string()).collect();
        let mut push = |prefix: &str, count: usize| h.extend((1..=count).map(|i| format!("{prefix}{i}")));
        push("B", muscles);
        push("Yplan", outputs);
        push("q_pred", joints);
        push("Y_pred", outputs);
        push("q_cl", joints);
        push("Y_cl", outputs);
        h.extend(["eps0", "eps1", "carry_eps0", "carry_eps1"].iter().map(|s| s.to_string()));
        h
    }

    /// Per-step log without wall-clock timing.
    pub fn write_csv<W: std::io::Write>(&self, out: W, joints: usize, muscles: usize, outputs: usize) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::csv_header(joints, muscles, outputs))?;
        let num = |v: f64| format!("{v:.12e}");
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        for s in &self.steps {
            let mut row = vec![s.step.to_string(), num(s.time), format!("{:?}", s.status), num(s.objective)];
            let groups: [(&[f64], usize); 6] = [
                (&s.b, muscles),
                (&s.y_plan, outputs),
                (&s.q_predicted, joints),
                (&s.y_predicted, outputs),
                (&s.q_closed_loop, joints),
                (&s.y_closed_loop, outputs),
            ];
            for (values, count) in groups {
                // steps that failed before planning leave their groups blank
                row.extend((0..count).map(|i| values.get(i).map(|v| num(*v)).unwrap_or_default()));
            }
            row.extend([num(s.eps0), num(s.eps1), opt(s.carry_eps0), opt(s.carry_eps1)]);
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn solve_times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.solve_seconds).collect()
    }
}

#[derive(Debug)]
pub struct RhFailure {
    pub step: usize,
    pub error: Error,
}

#[derive(Debug)]
pub struct RhOutcome {
    pub log: RhLog,
    pub trace: SimTrace,
    /// First step of the final in-band streak, if the run converged.
    pub converged_at: Option<usize>,
    pub failure: Option<RhFailure>,
}

/// `(ε₀, ε₁)`: smallest slack of `C_Y·Y − B` and of `Y` over `grid`.
pub fn feasibility_margins(y: &PolyVec, plant: &Plant, b: &DVector<f64>, grid: &[f64]) -> (f64, f64) {
    constraint_margins(y, &plant.flat, b, grid)
}

/// Cubic from `(q, q̇)` to `(target, 0)` over `[0, horizon]`.
pub fn transfer_cubic(q: &DVector<f64>, q_dot: &DVector<f64>, target: &DVector<f64>, horizon: f64) -> Result<PolyVec, Error> {
    let entries = (0..q.len())
        .map(|i| {
            fit_boundary(
                &[
                    BoundaryCondition::new(0.0, 0, q[i]),
                    BoundaryCondition::new(0.0, 1, q_dot[i]),
                    BoundaryCondition::new(horizon, 0, target[i]),
                    BoundaryCondition::new(horizon, 1, 0.0),
                ],
                3,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PolyVec::new(entries, horizon)?)
}

/// Static equilibrium at `q` with the LP-optimal constant co-contractions.
pub fn equilibrium_state(plant: &Plant, q: &DVector<f64>, reserves: &DVector<f64>) -> Result<MssState, Error> {
    let horizon = 1.0;
    let qp = PolyVec::constant(q.as_slice(), horizon)?;
    let grid = uniform_grid(horizon, 3);
    let bounds = torque_bounds(&plant.model, &qp, &grid);
    let b = slack_rhs(&plant.flat, &bounds, reserves);
    let slp = solve_slp(&plant.flat, &b)?;
    let yp = PolyVec::constant(slp.alpha.as_slice(), horizon)?;
    let trace = inverse_flat_on_grid(&FlatTrajectory::new(qp, yp)?, plant, &grid)?;
    Ok(trace.samples[0].state())
}

struct Plan {
    traj: FlatTrajectory,
    status: SolveStatus,
    objective: f64,
    solve_seconds: f64,
    b: DVector<f64>,
}

fn plan_step(plant: &Plant, cfg: &RhConfig, x: &MssState, reserves: &DVector<f64>, grid: &[f64]) -> Result<Plan, Error> {
    let q = transfer_cubic(&x.q, &x.q_dot, &cfg.target, cfg.horizon)?;
    let bounds = torque_bounds(&plant.model, &q, grid);
    let b = slack_rhs(&plant.flat, &bounds, reserves);
    match cfg.mode {
        PlanMode::Lp => {
            let start = Instant::now();
            let slp = solve_slp(&plant.flat, &b)?;
            let solve_seconds = start.elapsed().as_secs_f64();
            let y = PolyVec::constant(slp.alpha.as_slice(), cfg.horizon)?;
            Ok(Plan {
                traj: FlatTrajectory::new(q, y)?,
                status: SolveStatus::Optimal,
                objective: slp.objective,
                solve_seconds,
                b,
            })
        }
        PlanMode::Sos => {
            let y_now = &plant.flat.e * plant.tendon_forces(&x.l_s);
            let mut equalities = Vec::new();
            for i in 0..plant.flat.outputs() {
                equalities.push(YEquality { output: i, derivative_order: 0, time: 0.0, value: y_now[i] });
                for order in 1..=2 {
                    equalities.push(YEquality { output: i, derivative_order: order, time: cfg.horizon, value: 0.0 });
                }
            }
            let spec = SopSpec {
                q: q.clone(),
                grid_points: cfg.grid_points,
                reserves: reserves.clone(),
                degree: cfg.sos_degree,
                equalities,
            };
            let sol = solve_sop_with_rhs(&spec, &plant.flat, bounds, &b)?;
            Ok(Plan {
                traj: FlatTrajectory::new(q, sol.y)?,
                status: SolveStatus::Optimal,
                objective: sol.report.objective,
                solve_seconds: sol.report.solve_seconds,
                b,
            })
        }
    }
}

/// Grid points covering `[0, step]`, plus one beyond so rate stencils at `step` are central.
fn recovery_grid(grid: &[f64], step: f64) -> Vec<f64> {
    let covered = grid.iter().position(|&t| t >= step - 1e-12).unwrap_or(grid.len() - 1);
    grid[..(covered + 2).min(grid.len())].to_vec()
}

fn status_code(e: &Error) -> i32 {
    match e.exit_code() {
        0 => EXIT_NUMERICAL,
        c => c,
    }
}

fn in_band(x: &MssState, target: &DVector<f64>, band: f64) -> bool {
    (&x.q - target).amax() < band && x.q_dot.amax() < band
}

/// Run the receding-horizon loop from `x0`.
pub fn run_rh(plant: &Plant, cfg: &RhConfig, x0: &MssState) -> Result<RhOutcome, Error> {
    cfg.validate(plant).map_err(|reason| Error::Config(crate::error::ConfigError::Field { field: "mpc".into(), reason }))?;
    let grid = uniform_grid(cfg.horizon, cfg.grid_points);
    let recovery_grid = recovery_grid(&grid, cfg.step);
    let mut x = x0.clone();
    let mut log = RhLog::default();
    let mut trace = SimTrace::default();
    let mut streak_start: Option<usize> = None;
    let mut previous_y: Option<PolyVec> = None;
    let mut reserves = cfg.reserves.clone();

    let fail = |log: RhLog, trace: SimTrace, streak: Option<usize>, step: usize, error: Error| {
        Ok(RhOutcome { log, trace, converged_at: streak, failure: Some(RhFailure { step, error }) })
    };

    for k in 0..cfg.max_steps {
        let t0 = k as f64 * cfg.step;
        if in_band(&x, &cfg.target, cfg.band) {
            let start = *streak_start.get_or_insert(k);
            if k - start >= cfg.hold_steps {
                break;
            }
        } else {
            streak_start = None;
        }
        if let Some((at, r)) = &cfg.reserve_change {
            if k == *at {
                reserves = r.clone();
            }
        }

        let plan = match plan_step(plant, cfg, &x, &reserves, &grid) {
            Ok(p) => p,
            Err(e) => {
                if let Error::Sop(SopError::Status(status)) = &e {
                    log.steps.push(failed_step(k, t0, *status, &x, plant));
                }
                return fail(log, trace, streak_start, k, e);
            }
        };
        if cfg.inject_failure_at == Some(k) {
            log.steps.push(failed_step(k, t0, SolveStatus::NumericalFailure, &x, plant));
            let e = Error::RecedingHorizon { step: k, reason: "injected solver failure".into(), code: EXIT_NUMERICAL };
            return fail(log, trace, streak_start, k, e);
        }

        let planned = match inverse_flat_on_grid(&plan.traj, plant, &recovery_grid) {
            Ok(p) => p,
            Err(e) => {
                let e: Error = e.into();
                let code = status_code(&e);
                let e = Error::RecedingHorizon { step: k, reason: e.to_string(), code };
                return fail(log, trace, streak_start, k, e);
            }
        };
        let times: Vec<f64> = planned.samples.iter().map(|s| t0 + s.t).collect();
        let values: Vec<Vec<f64>> = planned.samples.iter().map(|s| s.n.clone()).collect();
        let input = match cfg.input_hold {
            InputHold::Linear => InputSignal::PiecewiseLinear { times, values },
            InputHold::ZeroOrder => InputSignal::ZeroOrderHold { times, values },
        };
        let mut outputs: Vec<f64> = vec![t0];
        outputs.extend(grid.iter().filter(|&&t| t > 0.0 && t < cfg.step - 1e-12).map(|t| t0 + t));
        outputs.push(t0 + cfg.step);
        let segment = match integrate(plant, &x, &input, &outputs, &cfg.integrator) {
            Ok((seg, _)) => seg,
            Err(failure) => {
                append(&mut trace, failure.partial, k == 0);
                let e: Error = failure.error.into();
                let code = status_code(&e);
                let e = Error::RecedingHorizon { step: k, reason: e.to_string(), code };
                return fail(log, trace, streak_start, k, e);
            }
        };
        let end = segment.last().expect("segment has samples").clone();
        append(&mut trace, segment, k == 0);
        x = end.state();

        let (eps0, eps1) = feasibility_margins(&plan.traj.y, plant, &plan.b, &grid);
        let (carry_eps0, carry_eps1) = match &previous_y {
            Some(prev) => {
                let shifted = shift(prev, cfg.step);
                let (a, b) = feasibility_margins(&shifted, plant, &plan.b, &grid);
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        log.steps.push(RhStep {
            step: k,
            time: t0,
            status: plan.status,
            objective: plan.objective,
            solve_seconds: plan.solve_seconds,
            b: plan.b.iter().copied().collect(),
            y_plan: plan.traj.y.eval(0.0).iter().copied().collect(),
            q_predicted: plan.traj.q.eval(cfg.step).iter().copied().collect(),
            y_predicted: plan.traj.y.eval(cfg.step).iter().copied().collect(),
            q_closed_loop: end.q.clone(),
            y_closed_loop: end.y.clone(),
            eps0,
            eps1,
            carry_eps0,
            carry_eps1,
        });
        previous_y = Some(plan.traj.y);
    }
    let converged_at = streak_start.filter(|&s| in_band(&x, &cfg.target, cfg.band) && log.steps.len() >= s + cfg.hold_steps);
    Ok(RhOutcome { log, trace, converged_at, failure: None })
}

fn failed_step(k: usize, t0: f64, status: SolveStatus, x: &MssState, plant: &Plant) -> RhStep {
    let y = (&plant.flat.e * plant.tendon_forces(&x.l_s)).iter().copied().collect::<Vec<_>>();
    RhStep {
        step: k,
        time: t0,
        status,
        objective: f64::NAN,
        solve_seconds: 0.0,
        b: Vec::new(),
        y_plan: Vec::new(),
        q_predicted: Vec::new(),
        y_predicted: Vec::new(),
        q_closed_loop: x.q.iter().copied().collect(),
        y_closed_loop: y,
        eps0: f64::NAN,
        eps1: f64::NAN,
        carry_eps0: None,
        carry_eps1: None,
    }
}

/// `p(t + delta)` as a polynomial vector on the same horizon.
fn shift(p: &PolyVec, delta: f64) -> PolyVec {
    use crate::poly::Poly;
    let entries = p
        .entries()
        .iter()
        .map(|poly| {
            // Taylor expansion about delta
            let d = poly.degree();
            let mut fact = 1.0;
            let coeffs = (0..=d)
                .map(|k| {
                    if k > 0 {
                        fact *= k as f64;
                    }
                    poly.eval_derivative(delta, k) / fact
                })
                .collect();
            Poly::new(coeffs)
        })
        .collect();
    PolyVec::new(entries, p.horizon()).expect("horizon unchanged")
}

fn append(trace: &mut SimTrace, segment: SimTrace, first: bool) {
    let skip = if first || trace.is_empty() { 0 } else { 1 };
    trace.samples.extend(segment.samples.into_iter().skip(skip));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flatness::tests::plant;
    use crate::poly::Poly;

    fn deg(v: &[f64]) -> DVector<f64> {
        DVector::from_iterator(v.len(), v.iter().map(|d| d.to_radians()))
    }

    pub(crate) fn example_config(plant: &Plant) -> RhConfig {
        RhConfig {
            horizon: 0.5,
            step: 0.05,
            grid_points: 11,
            target: deg(&[80.0, 80.0]),
            reserves: DVector::from_element(plant.muscles.len(), 1.0),
            mode: PlanMode::Lp,
            max_steps: 120,
            band: 1f64.to_radians(),
            hold_steps: 20,
            sos_degree: 4,
            input_hold: InputHold::Linear,
            integrator: IntegratorOptions::default(),
            reserve_change: None,
            inject_failure_at: None,
        }
    }

    #[test]
    fn transfer_cubic_meets_boundary_values() {
        let q = DVector::from_vec(vec![0.1, -0.3]);
        let qd = DVector::from_vec(vec![0.5, 0.0]);
        let target = DVector::from_vec(vec![1.0, 0.2]);
        let c = transfer_cubic(&q, &qd, &target, 0.5).unwrap();
        assert!((c.eval(0.0) - &q).amax() < 1e-12);
        assert!((c.eval_derivative(0.0, 1) - &qd).amax() < 1e-12);
        assert!((c.eval(0.5) - &target).amax() < 1e-12);
        assert!(c.eval_derivative(0.5, 1).amax() < 1e-12);
    }

    #[test]
    fn shift_matches_delayed_evaluation() {
        let p = PolyVec::new(vec![Poly::new(vec![1.0, -2.0, 0.5, 3.0, -1.0])], 1.0).unwrap();
        let s = shift(&p, 0.3);
        for t in [0.0, 0.2, 0.7, 1.0] {
            assert!((s.eval(t)[0] - p.eval(t + 0.3)[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn equilibrium_state_is_at_rest() {
        let p = plant();
        let q = deg(&[20.0, 20.0]);
        let x = equilibrium_state(&p, &q, &DVector::from_element(6, 1.0)).unwrap();
        assert!((&x.q - &q).amax() < 1e-12);
        assert!(x.q_dot.amax() < 1e-12);
        let rates = p.shortening_rates(&x).unwrap();
        assert!(rates.amax() < 1e-6, "rates {rates}");
    }

    #[test]
    fn starting_on_target_converges_immediately() {
        let p = plant();
        let mut cfg = example_config(&p);
        cfg.hold_steps = 3;
        let x0 = equilibrium_state(&p, &cfg.target, &cfg.reserves).unwrap();
        let out = run_rh(&p, &cfg, &x0).unwrap();
        assert!(out.failure.is_none());
        assert_eq!(out.converged_at, Some(0));
    }

    #[test]
    fn transfer_converges_with_feasible_steps() {
        let p = plant();
        let cfg = example_config(&p);
        let x0 = equilibrium_state(&p, &deg(&[20.0, 20.0]), &cfg.reserves).unwrap();
        let out = run_rh(&p, &cfg, &x0).unwrap();
        assert!(out.failure.is_none(), "{:?}", out.failure);
        let k = out.converged_at.expect("converged");
        eprintln!("converged at {k}, steps {}", out.log.steps.len());
        for s in &out.log.steps {
            assert_eq!(s.status, SolveStatus::Optimal);
            assert!(s.eps0 >= -1e-7 && s.eps1 >= -1e-7);
        }
    }

    #[test]
    fn injected_failure_halts_with_numerical_code() {
        let p = plant();
        let mut cfg = example_config(&p);
        cfg.inject_failure_at = Some(2);
        let x0 = equilibrium_state(&p, &deg(&[20.0, 20.0]), &cfg.reserves).unwrap();
        let out = run_rh(&p, &cfg, &x0).unwrap();
        let f = out.failure.expect("failure");
        assert_eq!(f.step, 2);
        assert_eq!(f.error.exit_code(), EXIT_NUMERICAL);
        assert_eq!(out.log.steps.len(), 3);
        assert_eq!(out.log.steps[2].status, SolveStatus::NumericalFailure);
        let last_t = out.trace.last().unwrap().t;
        assert!((last_t - 2.0 * cfg.step).abs() < 1e-12);
    }

    #[test]
    fn recovery_grid_extends_one_point_past_step() {
        let g = uniform_grid(0.5, 11);
        assert_eq!(recovery_grid(&g, 0.05).len(), 3);
        assert_eq!(recovery_grid(&g, 0.07).len(), 4);
        assert_eq!(recovery_grid(&g, 0.5).len(), 11);
    }

    #[test]
    fn tightened_reserves_break_the_carried_plan() {
        let p = plant();
        let mut cfg = example_config(&p);
        cfg.max_steps = 8;
        cfg.reserve_change = Some((5, DVector::from_element(6, 60.0)));
        let x0 = equilibrium_state(&p, &deg(&[20.0, 20.0]), &cfg.reserves).unwrap();
        let out = run_rh(&p, &cfg, &x0).unwrap();
        assert!(out.failure.is_none());
        let s = &out.log.steps;
        assert!(s[4].carry_eps0.unwrap() >= -1e-9);
        assert!(s[5].carry_eps0.unwrap() < -50.0);
        assert!(s[5].eps0 >= -1e-9);
    }

    #[test]
    fn sos_mode_reports_infeasible_when_reserves_jump() {
        let p = plant();
        let mut cfg = example_config(&p);
        cfg.mode = PlanMode::Sos;
        cfg.max_steps = 6;
        cfg.hold_steps = 100;
        cfg.reserve_change = Some((3, DVector::from_element(6, 30.0)));
        // slack above the 1 N reserves keeps the pinned Y(0) strictly feasible
        let x0 = equilibrium_state(&p, &cfg.target, &DVector::from_element(6, 3.0)).unwrap();
        let out = run_rh(&p, &cfg, &x0).unwrap();
        let f = out.failure.expect("infeasible step");
        assert_eq!(f.step, 3);
        assert_eq!(f.error.exit_code(), crate::error::EXIT_INFEASIBLE);
        assert_eq!(out.log.steps.len(), 4);
        assert!(out.log.steps[..3].iter().all(|s| s.status == SolveStatus::Optimal));
        assert_eq!(out.log.steps[3].status, SolveStatus::Infeasible);
        let mut buf = Vec::new();
        out.log.write_csv(&mut buf, 2, 6, 4).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let widths: Vec<usize> = text.lines().map(|l| l.split(',').count()).collect();
        assert!(widths.iter().all(|&w| w == widths[0]));
    }

    #[test]
    fn prediction_is_exact_when_plan_starts_at_the_state() {
        let p = plant();
        let mut cfg = example_config(&p);
        cfg.max_steps = 3;
        cfg.hold_steps = 100;
        let x0 = equilibrium_state(&p, &cfg.target, &cfg.reserves).unwrap();
        let out = run_rh(&p, &cfg, &x0).unwrap();
        assert_eq!(out.log.steps.len(), 3);
        for s in &out.log.steps {
            let dy = s.y_predicted.iter().zip(&s.y_closed_loop).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = s.y_closed_loop.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let tol = 10.0 * (cfg.integrator.rtol * scale + cfg.integrator.atol);
            assert!(dy <= tol, "step {} Y prediction error {dy} > {tol}", s.step);
        }
    }

    #[test]
    fn prediction_error_stays_bounded_during_transfer() {
        let p = plant();
        let mut cfg = example_config(&p);
        cfg.max_steps = 20;
        let x0 = equilibrium_state(&p, &deg(&[20.0, 20.0]), &cfg.reserves).unwrap();
        let out = run_rh(&p, &cfg, &x0).unwrap();
        for s in &out.log.steps {
            let dq = s.q_predicted.iter().zip(&s.q_closed_loop).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(dq < 0.05, "step {} joint prediction error {dq}", s.step);
        }
    }

    #[test]
    fn csv_log_has_no_timing_column() {
        let h = RhLog::csv_header(2, 6, 4);
        assert!(h.iter().all(|c| !c.contains("time") && !c.contains("seconds")));
        assert_eq!(h.len(), 4 + 6 + 4 + 2 + 4 + 2 + 4 + 4);
    }
}
