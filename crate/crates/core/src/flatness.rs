//! Flat outputs `y = [q; Y]`, `Y = E·Φ_S(L_S)`, and the constructive inverse
//! from polynomial flat outputs back to states and neural inputs.
//!
//! With `C = [A; E]` nonsingular the tendon forces are recovered linearly as
//! `Φ_S(L_S) = C_τ·τ + C_Y·Y`, where `C⁻¹ = [C_τ | C_Y]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{FlatnessError, MuscleError};
use crate::linkage::{torque_at, torque_dot, Dynamics, LinkageModel};
use crate::muscle::{MuscleParams, ACTIVATION_FLOOR};
use crate::poly::PolyVec;
use crate::sim::{MssState, SimTrace, TraceSample};

const ROW_SUM_TOL: f64 = 1e-12;
const SINGULAR_RCOND: f64 = 1e-12;
/// Step for differentiating `M`, `C q̇` and `g` along the state flow.
const FLOW_EPS: f64 = 1e-6;

/// The stacked matrix `C = [A; E]`, its inverse partition and the checks on it.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatConfig {
    pub a: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// First `N` columns of `C⁻¹` (`m × N`).
    pub c_tau: DMatrix<f64>,
    /// Last `p` columns of `C⁻¹` (`m × p`).
    pub c_y: DMatrix<f64>,
    /// Row sums of `A`.
    pub sigma_tau: DVector<f64>,
    /// 2-norm condition number of `C`.
    pub condition: f64,
}

impl FlatConfig {
    pub fn joints(&self) -> usize {
        self.a.nrows()
    }

    pub fn muscles(&self) -> usize {
        self.a.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.e.nrows()
    }

    /// `σ = C_Y·1_p = 1_m − C_τ·σ_τ`.
    pub fn sigma(&self) -> DVector<f64> {
        &self.c_y * DVector::from_element(self.outputs(), 1.0)
    }
}

/// Validate `A` (`N × m`) and `E` (`p × m`) and partition `C⁻¹`.
pub fn build_flat_config(a: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<FlatConfig, FlatnessError> {
    let (n, m) = a.shape();
    let p = e.nrows();
    if e.ncols() != m || n + p != m {
        return Err(FlatnessError::Dimension(format!(
            "A is {n}x{m} and E is {p}x{}; need E with {m} columns and N + p = m",
            e.ncols()
        )));
    }
    let mut c = DMatrix::zeros(m, m);
    c.rows_mut(0, n).copy_from(a);
    c.rows_mut(n, p).copy_from(e);

    let sv = c.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let condition = smax / smin;
    if !(smin > SINGULAR_RCOND * smax) {
        return Err(FlatnessError::SingularC { condition });
    }
    let c_inv = c
        .clone()
        .try_inverse()
        .ok_or(FlatnessError::SingularC { condition })?;

    for (row, r) in e.row_iter().enumerate() {
        let sum = r.sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(FlatnessError::RowSumViolation { row, sum });
        }
    }

    let c_tau = c_inv.columns(0, n).into_owned();
    let c_y = c_inv.columns(n, p).into_owned();
    let sigma_tau = DVector::from_iterator(n, a.row_iter().map(|r| r.sum()));
    let margin = DVector::from_element(m, 1.0) - &c_tau * &sigma_tau;
    for (row, &value) in margin.iter().enumerate() {
        if !(value > 0.0) {
            return Err(FlatnessError::FeasibilityConditionViolation { row, value });
        }
    }
    Ok(FlatConfig {
        a: a.clone(),
        e: e.clone(),
        c,
        c_tau,
        c_y,
        sigma_tau,
        condition,
    })
}

/// Linkage, muscles and flat-output selection of one musculoskeletal system.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub model: LinkageModel,
    pub muscles: Vec<MuscleParams>,
    pub flat: FlatConfig,
}

impl Plant {
    pub fn new(
        model: LinkageModel,
        muscles: Vec<MuscleParams>,
        e: &DMatrix<f64>,
    ) -> Result<Self, crate::Error> {
        let m = model.muscles();
        if muscles.len() != m || model.rest_lengths.len() != m {
            return Err(FlatnessError::Dimension(format!(
                "{m} moment-arm columns, {} muscles, {} rest lengths",
                muscles.len(),
                model.rest_lengths.len()
            ))
            .into());
        }
        if model.moment_arms.nrows() != model.dof() {
            return Err(FlatnessError::Dimension(format!(
                "moment-arm matrix has {} rows for {} joints",
                model.moment_arms.nrows(),
                model.dof()
            ))
            .into());
        }
        for p in &muscles {
            p.validate()?;
        }
        let flat = build_flat_config(&model.moment_arms, e)?;
        Ok(Self {
            model,
            muscles,
            flat,
        })
    }

    pub fn tendon_forces(&self, l_s: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            l_s.len(),
            self.muscles.iter().zip(l_s.iter()).map(|(p, &l)| p.tendon_force(l)),
        )
    }

    pub fn tendon_stiffness(&self, l_s: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            l_s.len(),
            self.muscles
                .iter()
                .zip(l_s.iter())
                .map(|(p, &l)| p.tendon_stiffness(l)),
        )
    }

    /// Shortening rates `u = g⁻¹(z)` implied by a state.
    pub fn shortening_rates(&self, state: &MssState) -> Result<DVector<f64>, (usize, MuscleError)> {
        let lengths = self.model.muscle_lengths(&state.q);
        let mut u = DVector::zeros(self.muscles.len());
        for (j, p) in self.muscles.iter().enumerate() {
            let z = p
                .z_value(state.l_s[j], lengths[j], state.a[j])
                .map_err(|e| (j, e))?;
            u[j] = p.force_velocity_inverse(z).map_err(|e| (j, e))?;
        }
        Ok(u)
    }
}

/// Polynomial flat outputs over a shared horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatTrajectory {
    pub q: PolyVec,
    pub y: PolyVec,
}

impl FlatTrajectory {
    pub fn new(q: PolyVec, y: PolyVec) -> Result<Self, FlatnessError> {
        if q.horizon() != y.horizon() {
            return Err(FlatnessError::Dimension(format!(
                "joint horizon {} differs from co-contraction horizon {}",
                q.horizon(),
                y.horizon()
            )));
        }
        Ok(Self { q, y })
    }

    pub fn horizon(&self) -> f64 {
        self.q.horizon()
    }
}

/// `(y, Y)` with `Y = E·Φ_S(L_S)` and `y = [q; Y]`.
pub fn flat_outputs_from_state(
    q: &DVector<f64>,
    l_s: &DVector<f64>,
    plant: &Plant,
) -> (DVector<f64>, DVector<f64>) {
    let big_y = &plant.flat.e * plant.tendon_forces(l_s);
    let mut y = DVector::zeros(q.len() + big_y.len());
    y.rows_mut(0, q.len()).copy_from(q);
    y.rows_mut(q.len(), big_y.len()).copy_from(&big_y);
    (y, big_y)
}

/// `C_τ·τ + C_Y·Y`, without the slack check.
pub fn forces_from_flat(tau: &DVector<f64>, y: &DVector<f64>, config: &FlatConfig) -> DVector<f64> {
    &config.c_tau * tau + &config.c_y * y
}

/// Tendon forces consistent with torque `tau` and co-contractions `y`; every
/// component must be positive for the tendon law to be invertible.
pub fn tendon_forces_from_flat(
    tau: &DVector<f64>,
    y: &DVector<f64>,
    config: &FlatConfig,
) -> Result<DVector<f64>, FlatnessError> {
    let f = forces_from_flat(tau, y, config);
    check_forces(&f, 0.0)?;
    Ok(f)
}

fn check_forces(f: &DVector<f64>, time: f64) -> Result<(), FlatnessError> {
    for (muscle, &force) in f.iter().enumerate() {
        if !(force > 0.0) {
            return Err(FlatnessError::SlackViolation {
                time,
                muscle,
                force,
            });
        }
    }
    Ok(())
}

/// Derivative of sampled values by three-point Lagrange stencils: central in
/// the interior, second-order one-sided at the ends (first order with two points).
pub fn grid_derivative(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    assert_eq!(n, values.len());
    match n {
        0 => return Vec::new(),
        1 => return vec![0.0],
        2 => {
            let d = (values[1] - values[0]) / (times[1] - times[0]);
            return vec![d, d];
        }
        _ => {}
    }
    // derivative at x of the parabola through (x0,y0), (x1,y1), (x2,y2)
    let stencil = |i0: usize, x: f64| {
        let (x0, x1, x2) = (times[i0], times[i0 + 1], times[i0 + 2]);
        let (y0, y1, y2) = (values[i0], values[i0 + 1], values[i0 + 2]);
        y0 * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + y1 * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + y2 * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    (0..n)
        .map(|i| {
            let i0 = i.saturating_sub(1).min(n - 3);
            stencil(i0, times[i])
        })
        .collect()
}

/// Kinematic and force quantities at one grid time, before `ȧ` is known.
struct GridPoint {
    q: DVector<f64>,
    q_dot: DVector<f64>,
    l_s: DVector<f64>,
    a: DVector<f64>,
    forces: DVector<f64>,
    y: DVector<f64>,
}

fn map_muscle(time: f64, muscle: usize) -> impl Fn(MuscleError) -> FlatnessError {
    move |source| FlatnessError::Muscle {
        time,
        muscle,
        source,
    }
}

fn invert_point(
    traj: &FlatTrajectory,
    plant: &Plant,
    t: f64,
    h: f64,
) -> Result<GridPoint, FlatnessError> {
    let cfg = &plant.flat;
    let q = traj.q.eval(t);
    let q_dot = traj.q.eval_derivative(t, 1);
    let tau = torque_at(&plant.model, &traj.q, t);
    let tau_dot = torque_dot(&plant.model, &traj.q, t, h);
    let y = traj.y.eval(t);
    let y_dot = traj.y.eval_derivative(t, 1);

    let forces = forces_from_flat(&tau, &y, cfg);
    check_forces(&forces, t)?;
    let force_rates = forces_from_flat(&tau_dot, &y_dot, cfg);
    let lengths = plant.model.muscle_lengths(&q);
    let shortening_of_joints = cfg.a.transpose() * &q_dot;

    let m = plant.muscles.len();
    let mut l_s = DVector::zeros(m);
    let mut a = DVector::zeros(m);
    for (j, p) in plant.muscles.iter().enumerate() {
        let err = map_muscle(t, j);
        l_s[j] = p.tendon_force_inverse(forces[j]).map_err(&err)?;
        let l_s_dot = force_rates[j] / p.tendon_stiffness(l_s[j]);
        let u = l_s_dot + shortening_of_joints[j];
        let z = p.force_velocity(u).map_err(&err)?;
        let l_c = lengths[j] - l_s[j];
        if !(l_c > 0.0) {
            return Err(err(MuscleError::Domain {
                quantity: "contractile length",
                value: l_c,
            }));
        }
        let act = (forces[j] - p.pe_force(l_c)) / (p.f_max * p.force_length(l_c) * z);
        if !(ACTIVATION_FLOOR..=1.0).contains(&act) {
            return Err(FlatnessError::ActivationOutOfRange {
                time: t,
                muscle: j,
                value: act,
            });
        }
        a[j] = act;
    }
    Ok(GridPoint {
        q,
        q_dot,
        l_s,
        a,
        forces,
        y,
    })
}

/// Recover states and neural inputs from polynomial flat outputs on `grid`.
///
/// `τ̇` uses a central difference with the smallest grid spacing as step and
/// `ȧ` is differentiated on the grid. Out-of-range inputs are errors, never clipped.
pub fn inverse_flat_on_grid(
    traj: &FlatTrajectory,
    plant: &Plant,
    grid: &[f64],
) -> Result<SimTrace, FlatnessError> {
    if grid.is_empty() {
        return Ok(SimTrace::default());
    }
    let h = grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let h = if h.is_finite() && h > 0.0 { h } else { 1e-4 };
    let points = grid
        .iter()
        .map(|&t| invert_point(traj, plant, t, h))
        .collect::<Result<Vec<_>, _>>()?;

    let m = plant.muscles.len();
    let mut a_dot = vec![vec![0.0; m]; grid.len()];
    for j in 0..m {
        let series: Vec<f64> = points.iter().map(|p| p.a[j]).collect();
        for (k, d) in grid_derivative(grid, &series).into_iter().enumerate() {
            a_dot[k][j] = d;
        }
    }

    let mut samples = Vec::with_capacity(grid.len());
    for ((&t, p), rates) in grid.iter().zip(points).zip(a_dot) {
        let mut n = vec![0.0; m];
        for (j, musc) in plant.muscles.iter().enumerate() {
            n[j] = musc.solve_neural(p.a[j], rates[j]).map_err(map_muscle(t, j))?;
        }
        samples.push(TraceSample {
            t,
            q: p.q.iter().copied().collect(),
            q_dot: p.q_dot.iter().copied().collect(),
            l_s: p.l_s.iter().copied().collect(),
            a: p.a.iter().copied().collect(),
            n,
            forces: p.forces.iter().copied().collect(),
            y: p.y.iter().copied().collect(),
        });
    }
    Ok(SimTrace { samples })
}

/// Quantities an initial state imposes on the flat outputs at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConstraints {
    pub q_ddot: DVector<f64>,
    pub q_dddot: DVector<f64>,
    pub y: DVector<f64>,
    pub y_dot: DVector<f64>,
}

/// Acceleration, jerk, `Y` and `Ẏ` implied by the full state `x0`.
pub fn point_constraints(x0: &MssState, plant: &Plant) -> Result<PointConstraints, FlatnessError> {
    let cfg = &plant.flat;
    let model = &plant.model;
    let forces = plant.tendon_forces(&x0.l_s);
    check_forces(&forces, 0.0)?;
    let tau = &cfg.a * &forces;
    let q_ddot = model
        .forward_dynamics(&x0.q, &x0.q_dot, &tau)
        .ok_or(FlatnessError::SingularMass)?;

    let u = plant
        .shortening_rates(x0)
        .map_err(|(j, e)| map_muscle(0.0, j)(e))?;
    let l_s_dot = u - cfg.a.transpose() * &x0.q_dot;
    let force_rates = plant.tendon_stiffness(&x0.l_s).component_mul(&l_s_dot);
    let y = &cfg.e * &forces;
    let y_dot = &cfg.e * &force_rates;
    let tau_dot = &cfg.a * &force_rates;

    let bias = |q: &DVector<f64>, qd: &DVector<f64>| {
        model.coriolis_matrix(q, qd) * qd + model.gravity_torque(q)
    };
    let (qp, qm) = (&x0.q + &x0.q_dot * FLOW_EPS, &x0.q - &x0.q_dot * FLOW_EPS);
    let (qdp, qdm) = (&x0.q_dot + &q_ddot * FLOW_EPS, &x0.q_dot - &q_ddot * FLOW_EPS);
    let bias_dot = (bias(&qp, &qdp) - bias(&qm, &qdm)) / (2.0 * FLOW_EPS);
    let mass_dot = (model.mass_matrix(&qp) - model.mass_matrix(&qm)) / (2.0 * FLOW_EPS);
    let rhs = tau_dot - mass_dot * &q_ddot - bias_dot;
    let q_dddot = model
        .mass_matrix(&x0.q)
        .cholesky()
        .ok_or(FlatnessError::SingularMass)?
        .solve(&rhs);
    Ok(PointConstraints {
        q_ddot,
        q_dddot,
        y,
        y_dot,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::poly::Poly;

    pub(crate) fn plant() -> Plant {
        let text = include_str!("../../../scenarios/arm_plant.json");
        crate::config::plant_from_json(text).unwrap()
    }

    fn e_arm() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            6,
            &[
                0.5, 0.5, 0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.5, 0.5, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, 0.5, 0.5, //
                0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
            ],
        )
    }

    #[test]
    fn arm_config_passes_and_partitions_inverse() {
        let p = plant();
        let cfg = &p.flat;
        let mut c_inv = DMatrix::zeros(6, 6);
        c_inv.columns_mut(0, 2).copy_from(&cfg.c_tau);
        c_inv.columns_mut(2, 4).copy_from(&cfg.c_y);
        assert!((&cfg.c * c_inv - DMatrix::identity(6, 6)).amax() < 1e-12);
        assert!(cfg.condition.is_finite() && cfg.condition >= 1.0);
        // σ_τ = 0 for these symmetric attachments, so σ = 1
        assert!(cfg.sigma_tau.amax() < 1e-15);
        assert!((cfg.sigma() - DVector::from_element(6, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn row_sum_violation() {
        let a = plant().flat.a;
        let mut e = e_arm();
        e[(1, 3)] = 0.4;
        assert!(matches!(
            build_flat_config(&a, &e),
            Err(FlatnessError::RowSumViolation { row: 1, .. })
        ));
    }

    #[test]
    fn singular_stack_rejected() {
        let a = plant().flat.a;
        let mut e = e_arm();
        // duplicate the first co-contraction row
        let r0 = e.row(0).into_owned();
        e.row_mut(3).copy_from(&r0);
        assert!(matches!(
            build_flat_config(&a, &e),
            Err(FlatnessError::SingularC { .. })
        ));
    }

    #[test]
    fn feasibility_clause_violation() {
        // one joint, two muscles pulling the same way: C_τσ_τ = (1, 1)
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let e = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(
            build_flat_config(&a, &e),
            Err(FlatnessError::FeasibilityConditionViolation { .. })
        ));
    }

    #[test]
    fn flat_outputs_examples() {
        let p = plant();
        let q = DVector::from_vec(vec![0.2, 0.4]);
        let slack = DVector::from_iterator(6, p.muscles.iter().map(|m| m.l_so - 1e-3));
        let (y, big_y) = flat_outputs_from_state(&q, &slack, &p);
        assert_eq!(big_y, DVector::zeros(4));
        assert_eq!(y.rows(0, 2), q.rows(0, 2));

        let f = 35.0;
        let mut l_s = slack.clone();
        l_s[0] = p.muscles[0].tendon_force_inverse(f).unwrap();
        l_s[1] = p.muscles[1].tendon_force_inverse(f).unwrap();
        let (_, big_y) = flat_outputs_from_state(&q, &l_s, &p);
        assert!((big_y[0] - f).abs() < 1e-9);

        let l_s = DVector::from_iterator(6, p.muscles.iter().map(|m| m.l_so + 2e-3));
        let (y, _) = flat_outputs_from_state(&q, &l_s, &p);
        for i in 0..4 {
            let mut expect = 0.0;
            for j in 0..6 {
                let stretch = l_s[j] - p.muscles[j].l_so;
                expect += p.flat.e[(i, j)] * p.muscles[j].k_s * stretch * stretch;
            }
            assert!((y[2 + i] - expect).abs() < 1e-9 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn tendon_forces_from_flat_examples() {
        let p = plant();
        let zero_tau = DVector::zeros(2);
        assert!(matches!(
            tendon_forces_from_flat(&zero_tau, &DVector::zeros(4), &p.flat),
            Err(FlatnessError::SlackViolation { .. })
        ));
        let forces = DVector::from_vec(vec![12.0, 30.0, 44.0, 8.0, 19.0, 27.0]);
        let tau = &p.flat.a * &forces;
        let y = &p.flat.e * &forces;
        let back = tendon_forces_from_flat(&tau, &y, &p.flat).unwrap();
        assert!((back - forces).amax() < 1e-10);
    }

    #[test]
    fn grid_derivative_exact_on_quadratics() {
        let t: Vec<f64> = vec![0.0, 0.1, 0.25, 0.3, 0.5];
        let v: Vec<f64> = t.iter().map(|x| 1.0 + 2.0 * x - 3.0 * x * x).collect();
        for (x, d) in t.iter().zip(grid_derivative(&t, &v)) {
            assert!((d - (2.0 - 6.0 * x)).abs() < 1e-12);
        }
    }

    fn equilibrium(plant: &Plant, q: [f64; 2], extra: f64) -> FlatTrajectory {
        let qv = DVector::from_vec(q.to_vec());
        let tau = plant.model.gravity_torque(&qv);
        // smallest Y making every force at least `extra`
        let base = &plant.flat.c_tau * &tau;
        let mut y = DVector::from_element(4, 0.0);
        for _ in 0..200 {
            let f = &base + &plant.flat.c_y * &y;
            let worst = f.min();
            if worst >= extra {
                break;
            }
            y += DVector::from_element(4, extra - worst);
        }
        let qp = PolyVec::constant(&q, 1.0).unwrap();
        let yp = PolyVec::constant(y.as_slice(), 1.0).unwrap();
        FlatTrajectory::new(qp, yp).unwrap()
    }

    #[test]
    fn stationary_trajectory_is_isometric() {
        let p = plant();
        let traj = equilibrium(&p, [0.6, 0.5], 20.0);
        let grid = crate::poly::uniform_grid(1.0, 5);
        let trace = inverse_flat_on_grid(&traj, &p, &grid).unwrap();
        for s in &trace.samples {
            for j in 0..6 {
                let m = &p.muscles[j];
                let l_c = p.model.muscle_lengths(&traj.q.eval(s.t))[j] - s.l_s[j];
                let expect = (s.forces[j] - m.pe_force(l_c)) / (m.f_max * m.force_length(l_c));
                assert!((s.a[j] - expect).abs() < 1e-10);
                assert!((s.n[j] - s.a[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn roundtrip_on_moving_trajectory() {
        let p = plant();
        let base = equilibrium(&p, [0.6, 0.5], 30.0);
        let q = PolyVec::new(
            vec![
                Poly::new(vec![0.6, 0.1, -0.05]),
                Poly::new(vec![0.5, -0.08, 0.04]),
            ],
            1.0,
        )
        .unwrap();
        let traj = FlatTrajectory::new(q, base.y.clone()).unwrap();
        let grid = crate::poly::uniform_grid(1.0, 11);
        let trace = inverse_flat_on_grid(&traj, &p, &grid).unwrap();
        for s in &trace.samples {
            let l_s = DVector::from_vec(s.l_s.clone());
            let q = DVector::from_vec(s.q.clone());
            let (y, _) = flat_outputs_from_state(&q, &l_s, &p);
            assert!((y.rows(0, 2) - traj.q.eval(s.t)).amax() < 1e-8);
            assert!((y.rows(2, 4) - traj.y.eval(s.t)).amax() < 1e-8);
        }
    }

    #[test]
    fn equilibrium_point_constraints_vanish() {
        let p = plant();
        let traj = equilibrium(&p, [0.6, 0.5], 20.0);
        let trace = inverse_flat_on_grid(&traj, &p, &[0.0, 0.5, 1.0]).unwrap();
        let x0 = trace.samples[0].state();
        let pc = point_constraints(&x0, &p).unwrap();
        assert!(pc.q_ddot.amax() < 1e-9);
        assert!(pc.q_dddot.amax() < 1e-6);
        assert!(pc.y_dot.amax() < 1e-6);
        assert!((pc.y - traj.y.eval(0.0)).amax() < 1e-8);
    }
}
