//! Scenario files and the batch runners behind the command-line tool.
//!
//! Angles in scenario files are degrees; everything internal is radians.
//! Data files written here are deterministic; wall-clock timing appears only
//! in `summary.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{load_plant, parse_json, read_text};
use crate::error::{ConfigError, Error};
use crate::flatness::{
    flat_outputs_from_state, forces_from_flat, inverse_flat_on_grid, point_constraints,
    FlatTrajectory, Plant,
};
use crate::linkage::{torque_at, Dynamics};
use crate::mpc::{equilibrium_state, run_rh, InputHold, PlanMode, RhConfig};
use crate::poly::{fit_boundary, uniform_grid, BoundaryCondition, Poly, PolyVec};
use crate::sim::{integrate, InputSignal, IntegratorOptions, MssState, SimTrace};
use crate::solvers::lp::kkt_residual;
use crate::solvers::{solve_lp, solve_sdp, LinearProgram, SdpOptions, SolveStatus};
use crate::solvers::sos::{AffineExpr, GramEncoding, SdpBuilder};
use crate::sop::{slack_rhs, solve_slp, solve_sop, torque_bounds, SopSpec, YEquality};

pub const SCENARIO_SCHEMA: &str = "mssflat.scenario/1";

/// One value for every muscle, or one per muscle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reserves {
    Uniform(f64),
    PerMuscle(Vec<f64>),
}

impl Reserves {
    pub fn resolve(&self, muscles: usize) -> Result<DVector<f64>, Error> {
        let v = match self {
            Reserves::Uniform(r) => DVector::from_element(muscles, *r),
            Reserves::PerMuscle(v) if v.len() == muscles => DVector::from_vec(v.clone()),
            Reserves::PerMuscle(v) => {
                return Err(field("reserves", format!("expected {muscles} entries, got {}", v.len())))
            }
        };
        if v.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(field("reserves", "must be finite and non-negative".into()));
        }
        Ok(v)
    }
}

fn default_q_degree() -> usize {
    8
}
fn default_y_degree() -> usize {
    4
}
fn default_verify_points() -> usize {
    301
}
fn default_sos_mode() -> PlanMode {
    PlanMode::Sos
}
fn default_lp_mode() -> PlanMode {
    PlanMode::Lp
}
fn default_band() -> f64 {
    1.0
}
fn default_hold() -> usize {
    10
}
fn default_hold_mode() -> InputHold {
    InputHold::Linear
}
fn default_count() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenloopSection {
    pub horizon: f64,
    pub grid_points: usize,
    #[serde(default = "default_q_degree")]
    pub q_degree: usize,
    #[serde(default = "default_y_degree")]
    pub y_degree: usize,
    pub reserves: Reserves,
    pub initial_deg: Vec<f64>,
    /// deg/s
    pub initial_rate_deg: Vec<f64>,
    pub target_deg: Vec<f64>,
    /// Extra force (N) above the reserves used to set the initial isometric state.
    pub pretension: f64,
    #[serde(default = "default_sos_mode")]
    pub mode: PlanMode,
    /// Points of the fine grid used to report force margins.
    #[serde(default = "default_verify_points")]
    pub verify_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReserveChange {
    pub step: usize,
    pub reserves: Reserves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    pub horizon: f64,
    pub step: f64,
    pub grid_points: usize,
    /// The run starts at rest in the LP equilibrium at this posture.
    pub start_deg: Vec<f64>,
    pub target_deg: Vec<f64>,
    pub reserves: Reserves,
    #[serde(default = "default_lp_mode")]
    pub mode: PlanMode,
    pub max_steps: usize,
    #[serde(default = "default_band")]
    pub band_deg: f64,
    #[serde(default = "default_hold")]
    pub hold_steps: usize,
    #[serde(default = "default_y_degree")]
    pub sos_degree: usize,
    #[serde(default = "default_hold_mode")]
    pub input_hold: InputHold,
    #[serde(default)]
    pub reserve_change: Option<ReserveChange>,
    #[serde(default)]
    pub inject_failure_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    #[serde(default = "default_count")]
    pub trajectories: usize,
    #[serde(default = "default_count")]
    pub programs: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self { trajectories: default_count(), programs: default_count(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: String,
    pub name: String,
    /// Relative paths resolve against the scenario file's directory.
    pub plant: PathBuf,
    #[serde(default)]
    pub openloop: Option<OpenloopSection>,
    #[serde(default)]
    pub mpc: Option<MpcSection>,
    #[serde(default)]
    pub validate: Option<ValidateSection>,
}

#[derive(Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub plant: Plant,
}

fn field(name: &str, reason: String) -> Error {
    ConfigError::Field { field: name.into(), reason }.into()
}

fn radians(name: &str, deg: &[f64], len: usize) -> Result<DVector<f64>, Error> {
    if deg.len() != len {
        return Err(field(name, format!("expected {len} angles, got {}", deg.len())));
    }
    if deg.iter().any(|d| !d.is_finite()) {
        return Err(field(name, "angles must be finite".into()));
    }
    Ok(DVector::from_iterator(len, deg.iter().map(|d| d.to_radians())))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = read_text(path)?;
        let file: ScenarioFile = parse_json(path, &text)?;
        if file.schema != SCENARIO_SCHEMA {
            return Err(field("schema", format!("expected \"{SCENARIO_SCHEMA}\", got \"{}\"", file.schema)));
        }
        let plant_path = if file.plant.is_absolute() {
            file.plant.clone()
        } else {
            path.parent().unwrap_or(Path::new(".")).join(&file.plant)
        };
        let plant = load_plant(&plant_path)?;
        Ok(Self { file, plant })
    }
}

/// Overrides given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<PlanMode>,
    pub grid_points: Option<usize>,
    pub max_steps: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// Also write the optimization problem in a solver exchange format.
    pub dump_problem: bool,
}

/// Isometric state at rest: tendon forces hold `τ₀ = g(q₀) + C(q₀, q̇₀)q̇₀`
/// with co-contractions minimizing `ΣY` subject to `C_Y·Y ≥ B + pretension`,
/// where `B` comes from the unconstrained-acceleration transfer.
pub fn pretensioned_state(
    plant: &Plant,
    sec: &OpenloopSection,
    reserves: &DVector<f64>,
    q0: &DVector<f64>,
    qd0: &DVector<f64>,
    target: &DVector<f64>,
) -> Result<MssState, Error> {
    let n = plant.model.dof();
    let zero = DVector::zeros(n);
    let q = transfer_polys(q0, qd0, &zero, &zero, target, sec.horizon, sec.q_degree)?;
    let grid = uniform_grid(sec.horizon, sec.grid_points);
    let bounds = torque_bounds(&plant.model, &q, &grid);
    let b = slack_rhs(&plant.flat, &bounds, reserves).add_scalar(sec.pretension);
    let y = solve_slp(&plant.flat, &b)?.alpha;
    let tau0 = plant.model.gravity_torque(q0) + plant.model.coriolis_matrix(q0, qd0) * qd0;
    let forces = forces_from_flat(&tau0, &y, &plant.flat);
    let lengths = plant.model.muscle_lengths(q0);
    let u0 = plant.model.moment_arms.transpose() * qd0;
    let m = plant.muscles.len();
    let mut l_s = DVector::zeros(m);
    let mut a = DVector::zeros(m);
    for j in 0..m {
        let p = &plant.muscles[j];
        l_s[j] = p.tendon_force_inverse(forces[j])?;
        let l_c = lengths[j] - l_s[j];
        let z = p.force_velocity(u0[j])?;
        a[j] = (forces[j] - p.pe_force(l_c)) / (p.f_max * p.force_length(l_c) * z);
    }
    Ok(MssState { q: q0.clone(), q_dot: qd0.clone(), l_s, a })
}

/// Per-joint polynomials meeting position to third derivative at both ends.
pub fn transfer_polys(
    q0: &DVector<f64>,
    qd0: &DVector<f64>,
    qdd0: &DVector<f64>,
    qddd0: &DVector<f64>,
    target: &DVector<f64>,
    horizon: f64,
    degree: usize,
) -> Result<PolyVec, Error> {
    let entries = (0..q0.len())
        .map(|i| {
            fit_boundary(
                &[
                    BoundaryCondition::new(0.0, 0, q0[i]),
                    BoundaryCondition::new(0.0, 1, qd0[i]),
                    BoundaryCondition::new(0.0, 2, qdd0[i]),
                    BoundaryCondition::new(0.0, 3, qddd0[i]),
                    BoundaryCondition::new(horizon, 0, target[i]),
                    BoundaryCondition::new(horizon, 1, 0.0),
                    BoundaryCondition::new(horizon, 2, 0.0),
                    BoundaryCondition::new(horizon, 3, 0.0),
                ],
                degree,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PolyVec::new(entries, horizon)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct OpenloopSummary {
    pub scenario: String,
    pub mode: PlanMode,
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: usize,
    pub solve_seconds: f64,
    pub total_seconds: f64,
    pub max_q_error: f64,
    /// min over the fine grid of `F − reserve`, N.
    pub min_force_margin: f64,
    pub b: Vec<f64>,
    /// Ascending coefficients of each `Y_i`.
    pub y_coefficients: Vec<Vec<f64>>,
    pub initial_state: &'static str,
}

#[derive(Debug)]
pub struct OpenloopRun {
    pub summary: OpenloopSummary,
    pub planned: SimTrace,
    pub simulated: SimTrace,
    pub trajectory: FlatTrajectory,
    /// SDPA-format problem text when requested.
    pub problem: Option<String>,
}

/// Plan with the SOP (or its LP reduction), invert, and simulate.
pub fn run_openloop(scn: &Scenario, ov: &Overrides) -> Result<OpenloopRun, Error> {
    let started = Instant::now();
    let sec = scn
        .file
        .openloop
        .as_ref()
        .ok_or_else(|| field("openloop", "section missing".into()))?;
    let plant = &scn.plant;
    let joints = plant.model.dof();
    let mode = ov.mode.unwrap_or(sec.mode);
    let grid_points = ov.grid_points.unwrap_or(sec.grid_points);
    if !(sec.horizon > 0.0) {
        return Err(field("openloop.horizon", "must be positive".into()));
    }
    if grid_points < 2 || sec.verify_points < 2 {
        return Err(field("openloop.grid_points", "need at least 2 points".into()));
    }
    let reserves = sec.reserves.resolve(plant.muscles.len())?;
    let q0 = radians("openloop.initial_deg", &sec.initial_deg, joints)?;
    let qd0 = radians("openloop.initial_rate_deg", &sec.initial_rate_deg, joints)?;
    let target = radians("openloop.target_deg", &sec.target_deg, joints)?;
    let x0 = pretensioned_state(plant, sec, &reserves, &q0, &qd0, &target)?;
    let pc = point_constraints(&x0, plant)?;
    let q = transfer_polys(&q0, &qd0, &pc.q_ddot, &pc.q_dddot, &target, sec.horizon, sec.q_degree)?;
    let grid = uniform_grid(sec.horizon, grid_points);

    let mut problem = None;
    let (y, status, objective, iterations, solve_seconds, b, initial_state) = match mode {
        PlanMode::Sos => {
            let mut equalities = Vec::new();
            for i in 0..plant.flat.outputs() {
                equalities.push(YEquality { output: i, derivative_order: 0, time: 0.0, value: pc.y[i] });
                equalities.push(YEquality { output: i, derivative_order: 1, time: 0.0, value: pc.y_dot[i] });
                equalities.push(YEquality { output: i, derivative_order: 1, time: sec.horizon, value: 0.0 });
                equalities.push(YEquality { output: i, derivative_order: 2, time: sec.horizon, value: 0.0 });
            }
            let spec = SopSpec {
                q: q.clone(),
                grid_points,
                reserves: reserves.clone(),
                degree: sec.y_degree,
                equalities,
            };
            if ov.dump_problem {
                problem = Some(sdp_text(&spec, plant)?);
            }
            let sol = solve_sop(&spec, &plant.flat, &plant.model)?;
            let r = sol.report;
            (sol.y, r.status, r.objective, r.iterations, r.solve_seconds, r.b, "measured")
        }
        PlanMode::Lp => {
            let bounds = torque_bounds(&plant.model, &q, &grid);
            let b = slack_rhs(&plant.flat, &bounds, &reserves);
            let start = Instant::now();
            let slp = solve_slp(&plant.flat, &b)?;
            let secs = start.elapsed().as_secs_f64();
            let y = PolyVec::constant(slp.alpha.as_slice(), sec.horizon)?;
            // constant Y cannot meet the measured Y(0); the objective is ∫ΣY
            let obj = slp.objective * sec.horizon;
            (y, SolveStatus::Optimal, obj, slp.iterations, secs, b.iter().copied().collect(), "planned")
        }
    };

    let trajectory = FlatTrajectory::new(q, y)?;
    let planned = inverse_flat_on_grid(&trajectory, plant, &grid)?;
    let start_state = match mode {
        PlanMode::Sos => x0,
        PlanMode::Lp => planned.samples[0].state(),
    };
    let input = InputSignal::PiecewiseLinear {
        times: planned.times(),
        values: planned.samples.iter().map(|s| s.n.clone()).collect(),
    };
    let (simulated, _) = integrate(plant, &start_state, &input, &grid, &IntegratorOptions::default())
        .map_err(|f| Error::Sim(f.error))?;
    let max_q_error = planned
        .samples
        .iter()
        .zip(&simulated.samples)
        .flat_map(|(p, s)| p.q.iter().zip(&s.q).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);

    let min_force_margin = uniform_grid(sec.horizon, sec.verify_points)
        .into_iter()
        .map(|t| {
            let tau = torque_at(&plant.model, &trajectory.q, t);
            let f = forces_from_flat(&tau, &trajectory.y.eval(t), &plant.flat);
            (f - &reserves).min()
        })
        .fold(f64::INFINITY, f64::min);

    let summary = OpenloopSummary {
        scenario: scn.file.name.clone(),
        mode,
        status,
        objective,
        iterations,
        solve_seconds,
        total_seconds: started.elapsed().as_secs_f64(),
        max_q_error,
        min_force_margin,
        b,
        y_coefficients: trajectory.y.entries().iter().map(|p| p.coeffs().to_vec()).collect(),
        initial_state,
    };
    Ok(OpenloopRun { summary, planned, simulated, trajectory, problem })
}

fn sdp_text(spec: &SopSpec, plant: &Plant) -> Result<String, Error> {
    let bounds = torque_bounds(&plant.model, &spec.q, &spec.grid());
    let b = slack_rhs(&plant.flat, &bounds, &spec.reserves);
    Ok(crate::sop::encode_sop(spec, &plant.flat, &b)?.program.to_sdpa())
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, Error> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::Output(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn trace_csv(trace: &SimTrace, plant: &Plant) -> Result<Vec<u8>, Error> {
    let mut buf = Vec::new();
    trace
        .write_csv(&mut buf, plant.model.dof(), plant.muscles.len(), plant.flat.outputs())
        .map_err(|e| Error::Output(e.to_string()))?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, Error> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Output(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Output(format!("{}: {e}", dir.display())))
}

/// `openloop`: writes `planned.csv`, `simulated.csv`, `summary.json`.
pub fn cmd_openloop(scn: &Scenario, ov: &Overrides, out: &Path) -> Result<OpenloopSummary, Error> {
    ensure_dir(out)?;
    let run = run_openloop(scn, ov)?;
    write_file(out, "planned.csv", &trace_csv(&run.planned, &scn.plant)?)?;
    write_file(out, "simulated.csv", &trace_csv(&run.simulated, &scn.plant)?)?;
    write_file(out, "summary.json", &json_bytes(&run.summary)?)?;
    if let Some(text) = &run.problem {
        write_file(out, "problem.dat-s", text.as_bytes())?;
    }
    Ok(run.summary)
}

pub fn rh_config(scn: &Scenario, ov: &Overrides) -> Result<(RhConfig, MssState), Error> {
    let sec = scn.file.mpc.as_ref().ok_or_else(|| field("mpc", "section missing".into()))?;
    let plant = &scn.plant;
    let joints = plant.model.dof();
    let muscles = plant.muscles.len();
    let reserves = sec.reserves.resolve(muscles)?;
    let start = radians("mpc.start_deg", &sec.start_deg, joints)?;
    let cfg = RhConfig {
        horizon: sec.horizon,
        step: sec.step,
        grid_points: ov.grid_points.unwrap_or(sec.grid_points),
        target: radians("mpc.target_deg", &sec.target_deg, joints)?,
        reserves: reserves.clone(),
        mode: ov.mode.unwrap_or(sec.mode),
        max_steps: ov.max_steps.unwrap_or(sec.max_steps),
        band: sec.band_deg.to_radians(),
        hold_steps: sec.hold_steps,
        sos_degree: sec.sos_degree,
        input_hold: sec.input_hold,
        integrator: IntegratorOptions::default(),
        reserve_change: match &sec.reserve_change {
            Some(c) => Some((c.step, c.reserves.resolve(muscles)?)),
            None => None,
        },
        inject_failure_at: sec.inject_failure_at,
    };
    cfg.validate(plant).map_err(|reason| field("mpc", reason))?;
    let x0 = equilibrium_state(plant, &start, &reserves)?;
    Ok((cfg, x0))
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len().is_multiple_of(2) {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MpcSummary {
    pub scenario: String,
    pub mode: PlanMode,
    pub steps: usize,
    pub converged_at: Option<usize>,
    pub failed_step: Option<usize>,
    pub failure: Option<String>,
    pub all_optimal: bool,
    pub min_eps0: f64,
    pub min_eps1: f64,
    pub max_prediction_error: f64,
    pub final_q_error_deg: f64,
    pub median_solve_seconds: f64,
    pub max_solve_seconds: f64,
    pub total_seconds: f64,
}

/// `mpc`: writes `closed_loop.csv`, `steps.csv`, `steps.json`, `summary.json`.
/// A halted run still writes its files before the error is returned.
pub fn cmd_mpc(scn: &Scenario, ov: &Overrides, out: &Path) -> Result<MpcSummary, Error> {
    let started = Instant::now();
    ensure_dir(out)?;
    let (cfg, x0) = rh_config(scn, ov)?;
    let plant = &scn.plant;
    let outcome = run_rh(plant, &cfg, &x0)?;
    let log = &outcome.log;
    let (j, m, p) = (plant.model.dof(), plant.muscles.len(), plant.flat.outputs());
    let mut steps_csv = Vec::new();
    log.write_csv(&mut steps_csv, j, m, p).map_err(|e| Error::Output(e.to_string()))?;
    write_file(out, "closed_loop.csv", &trace_csv(&outcome.trace, plant)?)?;
    write_file(out, "steps.csv", &steps_csv)?;
    write_file(out, "steps.json", &json_bytes(log)?)?;

    let times = log.solve_times();
    let ok: Vec<_> = log.steps.iter().filter(|s| s.status == SolveStatus::Optimal).collect();
    let pred = ok
        .iter()
        .map(|s| s.y_predicted.iter().zip(&s.y_closed_loop).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let final_err = outcome
        .trace
        .last()
        .map(|s| s.q.iter().zip(cfg.target.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .unwrap_or_else(|| (&x0.q - &cfg.target).amax());
    let summary = MpcSummary {
        scenario: scn.file.name.clone(),
        mode: cfg.mode,
        steps: log.steps.len(),
        converged_at: outcome.converged_at,
        failed_step: outcome.failure.as_ref().map(|f| f.step),
        failure: outcome.failure.as_ref().map(|f| f.error.to_string()),
        all_optimal: ok.len() == log.steps.len(),
        min_eps0: ok.iter().map(|s| s.eps0).fold(f64::INFINITY, f64::min),
        min_eps1: ok.iter().map(|s| s.eps1).fold(f64::INFINITY, f64::min),
        max_prediction_error: pred,
        final_q_error_deg: final_err.to_degrees(),
        median_solve_seconds: median(&times),
        max_solve_seconds: times.iter().copied().fold(0.0, f64::max),
        total_seconds: started.elapsed().as_secs_f64(),
    };
    write_file(out, "summary.json", &json_bytes(&summary)?)?;
    match outcome.failure {
        Some(f) => Err(match f.error {
            e @ Error::RecedingHorizon { .. } => e,
            e => Error::RecedingHorizon { step: f.step, reason: e.to_string(), code: e.exit_code() },
        }),
        None => Ok(summary),
    }
}

/// A random flat trajectory whose inverse lies inside the admissible set.
///
/// Joint paths are smooth excursions around a random posture; co-contractions
/// are the LP optimum for a random reserve plus a bounded linear drift.
pub fn random_flat_trajectory(plant: &Plant, rng: &mut impl Rng, horizon: f64, grid: &[f64]) -> Result<FlatTrajectory, Error> {
    let joints = plant.model.dof();
    let muscles = plant.muscles.len();
    let outputs = plant.flat.outputs();
    for _ in 0..200 {
        let entries = (0..joints)
            .map(|_| {
                let c0 = rng.random_range(0.2..1.2);
                let c1 = rng.random_range(-0.4..0.4) / horizon;
                let c2 = rng.random_range(-0.4..0.4) / horizon.powi(2);
                let c3 = rng.random_range(-0.3..0.3) / horizon.powi(3);
                Poly::new(vec![c0, c1, c2, c3])
            })
            .collect();
        let q = PolyVec::new(entries, horizon)?;
        let bounds = torque_bounds(&plant.model, &q, grid);
        let reserve = rng.random_range(2.0..10.0);
        let b = slack_rhs(&plant.flat, &bounds, &DVector::from_element(muscles, reserve + 2.0));
        let alpha = solve_slp(&plant.flat, &b)?.alpha;
        let drift = DVector::from_fn(outputs, |_, _| rng.random_range(-1.0..1.0));
        let scale = (&plant.flat.c_y * &drift).amax().max(1e-12);
        let slope = drift * (rng.random_range(0.0..1.5) / (scale * horizon));
        let entries = (0..outputs)
            .map(|i| Poly::new(vec![alpha[i] - slope[i].min(0.0) * horizon, slope[i]]))
            .collect();
        let y = PolyVec::new(entries, horizon)?;
        let traj = FlatTrajectory::new(q, y)?;
        if inverse_flat_on_grid(&traj, plant, grid).is_ok() {
            return Ok(traj);
        }
    }
    Err(Error::Output("no admissible random trajectory after 200 draws".into()))
}

/// Worst `(q, Y)` mismatch of `Ψ(Ψ⁻¹(traj))` on the grid.
pub fn roundtrip_error(plant: &Plant, traj: &FlatTrajectory, grid: &[f64]) -> Result<f64, Error> {
    let trace = inverse_flat_on_grid(traj, plant, grid)?;
    let mut worst: f64 = 0.0;
    for s in &trace.samples {
        let x = s.state();
        let (flat, y) = flat_outputs_from_state(&x.q, &x.l_s, plant);
        let q = flat.rows(0, x.q.len()).into_owned();
        worst = worst.max((q - traj.q.eval(s.t)).amax()).max((y - traj.y.eval(s.t)).amax());
    }
    Ok(worst)
}

/// Worst joint error of simulating the recovered inputs from the recovered initial state.
pub fn dynamic_roundtrip_error(plant: &Plant, traj: &FlatTrajectory, grid: &[f64]) -> Result<f64, Error> {
    let trace = inverse_flat_on_grid(traj, plant, grid)?;
    let input = InputSignal::PiecewiseLinear {
        times: trace.times(),
        values: trace.samples.iter().map(|s| s.n.clone()).collect(),
    };
    let (sim, _) = integrate(plant, &trace.samples[0].state(), &input, grid, &IntegratorOptions::default())
        .map_err(|f| Error::Sim(f.error))?;
    Ok(trace
        .samples
        .iter()
        .zip(&sim.samples)
        .flat_map(|(p, s)| p.q.iter().zip(&s.q).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed, detail }
}

/// `validate`: structural checks, roundtrips on random trajectories, and solver self-tests.
pub fn cmd_validate(scn: &Scenario, ov: &Overrides) -> Result<Vec<CheckResult>, Error> {
    let sec = scn.file.validate.clone().unwrap_or_default();
    let seed = ov.seed.unwrap_or(sec.seed);
    let plant = &scn.plant;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ov.threads.unwrap_or(0))
        .build()
        .map_err(|e| field("threads", e.to_string()))?;
    let mut out = Vec::new();

    let sigma = plant.flat.sigma();
    out.push(check(
        "flat configuration",
        true,
        format!("cond(C) = {:.3e}, min σ = {:.3e}", plant.flat.condition, sigma.min()),
    ));

    let horizon = 1.0;
    let grid = uniform_grid(horizon, 21);
    let results: Vec<Result<(f64, f64), Error>> = pool.install(|| {
        (0..sec.trajectories as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
                let traj = random_flat_trajectory(plant, &mut rng, horizon, &grid)?;
                Ok((roundtrip_error(plant, &traj, &grid)?, dynamic_roundtrip_error(plant, &traj, &grid)?))
            })
            .collect()
    });
    let mut static_worst: f64 = 0.0;
    let mut dynamic_worst: f64 = 0.0;
    let mut failures = 0;
    for r in &results {
        match r {
            Ok((s, d)) => {
                static_worst = static_worst.max(*s);
                dynamic_worst = dynamic_worst.max(*d);
            }
            Err(_) => failures += 1,
        }
    }
    out.push(check(
        "flatness roundtrip",
        failures == 0 && static_worst <= 1e-8,
        format!("{} trajectories, worst {static_worst:.2e}, {failures} failed", results.len()),
    ));
    out.push(check(
        "dynamic roundtrip",
        failures == 0 && dynamic_worst <= 0.05,
        format!("worst joint error {dynamic_worst:.2e} rad"),
    ));

    let lp_results: Vec<(bool, f64)> = pool.install(|| {
        (0..sec.programs as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1_000_003 + i));
                let lp = random_feasible_lp(&mut rng);
                let sol = solve_lp(&lp);
                let ok = sol.status == SolveStatus::Optimal;
                (ok, if ok { kkt_residual(&lp, &sol) } else { f64::INFINITY })
            })
            .collect()
    });
    let lp_worst = lp_results.iter().map(|r| r.1).fold(0.0, f64::max);
    out.push(check(
        "simplex optimality certificates",
        lp_results.iter().all(|r| r.0) && lp_worst <= 1e-8,
        format!("{} programs, worst KKT residual {lp_worst:.2e}", lp_results.len()),
    ));

    let mut bld = SdpBuilder::new();
    let lam = bld.add_free(1);
    bld.add_cost(lam, -1.0);
    bld.sos_constraint(&[
        AffineExpr { terms: vec![(lam, -1.0)], constant: 0.5 },
        AffineExpr::constant(-2.0),
        AffineExpr::constant(1.0),
    ])?;
    let s = solve_sdp(&bld.build(), &SdpOptions::default())?;
    out.push(check(
        "SOS lower bound",
        s.status == SolveStatus::Optimal && (s.free[lam] + 0.5).abs() <= 1e-6,
        format!("{:?}, bound {:.9}", s.status, s.free[lam]),
    ));

    let target = [1.0, 0.0, -1.0, 0.0, 2.0];
    let mut bld = SdpBuilder::new();
    let enc = bld.sos_constraint(&target.map(AffineExpr::constant))?;
    let s = solve_sdp(&bld.build(), &SdpOptions::default())?;
    let q = &s.blocks[enc.block];
    let rec = GramEncoding::reconstruct(q);
    let rec_err = rec.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let min_eig = q.clone().symmetric_eigenvalues().min();
    out.push(check(
        "Gram reconstruction",
        s.status == SolveStatus::Optimal && rec_err <= 1e-8 && min_eig >= -1e-8,
        format!("residual {rec_err:.2e}, min eigenvalue {min_eig:.2e}"),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
    let mut mech_ok = true;
    for _ in 0..200 {
        let q = DVector::from_fn(plant.model.dof(), |_, _| rng.random_range(-3.0..3.0));
        let mm = plant.model.mass_matrix(&q);
        mech_ok &= mm.clone().cholesky().is_some() && (&mm - mm.transpose()).amax() <= 1e-12;
    }
    out.push(check("mass matrix SPD", mech_ok, "200 random postures".into()));
    Ok(out)
}

fn random_feasible_lp(rng: &mut impl Rng) -> LinearProgram {
    let n = rng.random_range(2..6);
    let m = rng.random_range(1..6);
    let g = nalgebra::DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..2.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(0.0..2.0));
    let h = &g * &x0 - DVector::from_fn(m, |_, _| rng.random_range(0.0..1.0));
    let c = DVector::from_fn(n, |_, _| rng.random_range(0.1..2.0));
    LinearProgram::new(c, g, h, DVector::zeros(n)).expect("dimensions agree")
}

pub fn print_checks(checks: &[CheckResult]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("{mark}  {:width$}  {}\n", c.name, c.detail));
    }
    s
}

pub fn checks_json(checks: &[CheckResult]) -> serde_json::Value {
    json!({ "checks": checks, "passed": checks.iter().all(|c| c.passed) })
}
