//! Rigid planar linkage under gravity and the linear muscle attachment model.
//!
//! Joint angles: `q1` is measured from the horizontal, `q2` relative to link 1.
//! Muscle lengths follow `L = l_o − Aᵀq` and joint torques `τ = A·Φ_S(L_S)`.

use nalgebra::{DMatrix, DVector};

use crate::muscle::MuscleParams;
use crate::poly::PolyVec;

/// Rigid-body terms of `M(q)q̈ + C(q, q̇)q̇ + g(q) = τ`.
pub trait Dynamics {
    fn dof(&self) -> usize;
    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// Christoffel-form Coriolis matrix, so that `Ṁ − 2C` is skew.
    fn coriolis_matrix(&self, q: &DVector<f64>, q_dot: &DVector<f64>) -> DMatrix<f64>;
    fn gravity_torque(&self, q: &DVector<f64>) -> DVector<f64>;
    fn potential_energy(&self, q: &DVector<f64>) -> f64;

    fn kinetic_energy(&self, q: &DVector<f64>, q_dot: &DVector<f64>) -> f64 {
        0.5 * q_dot.dot(&(self.mass_matrix(q) * q_dot))
    }

    fn inverse_dynamics(
        &self,
        q: &DVector<f64>,
        q_dot: &DVector<f64>,
        q_ddot: &DVector<f64>,
    ) -> DVector<f64> {
        self.mass_matrix(q) * q_ddot + self.coriolis_matrix(q, q_dot) * q_dot + self.gravity_torque(q)
    }

    /// `q̈ = M⁻¹(τ − Cq̇ − g)`; `None` if `M` is not positive definite.
    fn forward_dynamics(
        &self,
        q: &DVector<f64>,
        q_dot: &DVector<f64>,
        tau: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        let rhs = tau - self.coriolis_matrix(q, q_dot) * q_dot - self.gravity_torque(q);
        self.mass_matrix(q).cholesky().map(|c| c.solve(&rhs))
    }
}

/// Inertial data of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub mass: f64,
    pub length: f64,
    /// Distance from the proximal joint to the centre of mass.
    pub com: f64,
    /// Moment of inertia about the centre of mass.
    pub inertia: f64,
}

/// Two-link planar arm.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLinkArm {
    pub links: [Link; 2],
    pub gravity: f64,
}

impl Dynamics for TwoLinkArm {
    fn dof(&self) -> usize {
        2
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let [l1, l2] = &self.links;
        let c2 = q[1].cos();
        let m22 = l2.inertia + l2.mass * l2.com * l2.com;
        let m12 = m22 + l2.mass * l1.length * l2.com * c2;
        let m11 = l1.inertia
            + l1.mass * l1.com * l1.com
            + m22
            + l2.mass * (l1.length * l1.length + 2.0 * l1.length * l2.com * c2);
        DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22])
    }

    fn coriolis_matrix(&self, q: &DVector<f64>, q_dot: &DVector<f64>) -> DMatrix<f64> {
        let [l1, l2] = &self.links;
        let h = -l2.mass * l1.length * l2.com * q[1].sin();
        DMatrix::from_row_slice(
            2,
            2,
            &[h * q_dot[1], h * (q_dot[0] + q_dot[1]), -h * q_dot[0], 0.0],
        )
    }

    fn gravity_torque(&self, q: &DVector<f64>) -> DVector<f64> {
        let [l1, l2] = &self.links;
        let g2 = l2.mass * l2.com * self.gravity * (q[0] + q[1]).cos();
        let g1 = (l1.mass * l1.com + l2.mass * l1.length) * self.gravity * q[0].cos() + g2;
        DVector::from_vec(vec![g1, g2])
    }

    fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        let [l1, l2] = &self.links;
        self.gravity
            * (l1.mass * l1.com * q[0].sin()
                + l2.mass * (l1.length * q[0].sin() + l2.com * (q[0] + q[1]).sin()))
    }
}

/// A single pendulum link, angle from the horizontal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleLink {
    pub link: Link,
    pub gravity: f64,
}

impl Dynamics for SingleLink {
    fn dof(&self) -> usize {
        1
    }

    fn mass_matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        let l = &self.link;
        DMatrix::from_element(1, 1, l.inertia + l.mass * l.com * l.com)
    }

    fn coriolis_matrix(&self, _q: &DVector<f64>, _q_dot: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }

    fn gravity_torque(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.link.mass * self.link.com * self.gravity * q[0].cos())
    }

    fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        self.link.mass * self.link.com * self.gravity * q[0].sin()
    }
}

/// Joint torque required to follow the polynomial trajectory `q` at time `t`.
pub fn torque_at<D: Dynamics + ?Sized>(dynamics: &D, q: &PolyVec, t: f64) -> DVector<f64> {
    dynamics.inverse_dynamics(
        &q.eval(t),
        &q.eval_derivative(t, 1),
        &q.eval_derivative(t, 2),
    )
}

/// τ̇ by a central difference of step `h`.
///
/// The polynomial is evaluated outside `[0, T]` when needed, so the stencil
/// stays central at the horizon ends.
pub fn torque_dot<D: Dynamics + ?Sized>(dynamics: &D, q: &PolyVec, t: f64, h: f64) -> DVector<f64> {
    (torque_at(dynamics, q, t + h) - torque_at(dynamics, q, t - h)) / (2.0 * h)
}

/// Arm dynamics together with the muscle attachment geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkageModel {
    pub arm: TwoLinkArm,
    /// `N × m` moment-arm matrix, m per rad.
    pub moment_arms: DMatrix<f64>,
    /// Muscle lengths at `q = 0`, m.
    pub rest_lengths: DVector<f64>,
}

impl LinkageModel {
    pub fn muscles(&self) -> usize {
        self.moment_arms.ncols()
    }

    pub fn muscle_lengths(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.rest_lengths - self.moment_arms.transpose() * q
    }

    pub fn muscle_torque(&self, params: &[MuscleParams], l_s: &DVector<f64>) -> DVector<f64> {
        let forces = DVector::from_iterator(
            params.len(),
            params.iter().zip(l_s.iter()).map(|(p, &l)| p.tendon_force(l)),
        );
        &self.moment_arms * forces
    }
}

impl Dynamics for LinkageModel {
    fn dof(&self) -> usize {
        self.arm.dof()
    }
    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.arm.mass_matrix(q)
    }
    fn coriolis_matrix(&self, q: &DVector<f64>, q_dot: &DVector<f64>) -> DMatrix<f64> {
        self.arm.coriolis_matrix(q, q_dot)
    }
    fn gravity_torque(&self, q: &DVector<f64>) -> DVector<f64> {
        self.arm.gravity_torque(q)
    }
    fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        self.arm.potential_energy(q)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::poly::Poly;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn arm() -> TwoLinkArm {
        TwoLinkArm {
            links: [
                Link {
                    mass: 1.2,
                    length: 0.28,
                    com: 0.13,
                    inertia: 0.010,
                },
                Link {
                    mass: 0.8,
                    length: 0.30,
                    com: 0.15,
                    inertia: 0.006,
                },
            ],
            gravity: 9.81,
        }
    }

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    fn random_v2(rng: &mut ChaCha8Rng, scale: f64) -> DVector<f64> {
        v2(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
    }

    #[test]
    fn coriolis_vanishes_at_rest() {
        let a = arm();
        let c = a.coriolis_matrix(&v2(0.3, 1.1), &v2(0.0, 0.0));
        assert_eq!(c, DMatrix::zeros(2, 2));
    }

    #[test]
    fn mass_matrix_spd() {
        let a = arm();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let m = a.mass_matrix(&random_v2(&mut rng, 4.0));
            assert_eq!(m[(0, 1)], m[(1, 0)]);
            assert!(m.symmetric_eigenvalues().min() > 0.0);
        }
    }

    #[test]
    fn skew_symmetry() {
        let a = arm();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eps = 1e-5;
        for _ in 0..1000 {
            let q = random_v2(&mut rng, 3.2);
            let qd = random_v2(&mut rng, 3.0);
            let v = random_v2(&mut rng, 1.0);
            let m_dot = (a.mass_matrix(&(&q + &qd * eps)) - a.mass_matrix(&(&q - &qd * eps)))
                / (2.0 * eps);
            let n = m_dot - a.coriolis_matrix(&q, &qd) * 2.0;
            assert!(v.dot(&(n * &v)).abs() <= 1e-10);
        }
    }

    #[test]
    fn gravity_is_potential_gradient() {
        let a = arm();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..100 {
            let q = random_v2(&mut rng, 3.2);
            let g = a.gravity_torque(&q);
            for i in 0..2 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                let grad = (a.potential_energy(&qp) - a.potential_energy(&qm)) / (2.0 * h);
                assert!((grad - g[i]).abs() < 1e-7);
            }
        }
        // straight up with both links aligned: no gravity torque
        let up = v2(std::f64::consts::FRAC_PI_2, 0.0);
        assert!(a.gravity_torque(&up).norm() < 1e-12);
    }

    #[test]
    fn inverse_then_forward() {
        let a = arm();
        let zero = v2(0.0, 0.0);
        assert_eq!(a.inverse_dynamics(&zero, &zero, &zero), a.gravity_torque(&zero));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let q = random_v2(&mut rng, 3.0);
            let qd = random_v2(&mut rng, 3.0);
            let qdd = random_v2(&mut rng, 10.0);
            let tau = a.inverse_dynamics(&q, &qd, &qdd);
            let back = a.forward_dynamics(&q, &qd, &tau).unwrap();
            assert!((back - qdd).norm() < 1e-10);
        }
    }

    /// Euler–Lagrange with finite differences of the Lagrangian only.
    fn lagrange_torque(a: &TwoLinkArm, q: &PolyVec, t: f64) -> DVector<f64> {
        let h = 1e-4;
        let lag = |qv: &DVector<f64>, qdv: &DVector<f64>| {
            a.kinetic_energy(qv, qdv) - a.potential_energy(qv)
        };
        let dl_dqd = |tt: f64| {
            let qv = q.eval(tt);
            let qdv = q.eval_derivative(tt, 1);
            let mut out = DVector::zeros(2);
            for i in 0..2 {
                let mut p = qdv.clone();
                let mut m = qdv.clone();
                p[i] += h;
                m[i] -= h;
                out[i] = (lag(&qv, &p) - lag(&qv, &m)) / (2.0 * h);
            }
            out
        };
        let ddt = (dl_dqd(t + h) - dl_dqd(t - h)) / (2.0 * h);
        let qv = q.eval(t);
        let qdv = q.eval_derivative(t, 1);
        let mut dl_dq = DVector::zeros(2);
        for i in 0..2 {
            let mut p = qv.clone();
            let mut m = qv.clone();
            p[i] += h;
            m[i] -= h;
            dl_dq[i] = (lag(&p, &qdv) - lag(&m, &qdv)) / (2.0 * h);
        }
        ddt - dl_dq
    }

    #[test]
    fn inverse_dynamics_matches_lagrangian() {
        let a = arm();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let entries = (0..2)
                .map(|_| Poly::new((0..5).map(|_| rng.random_range(-1.0..1.0)).collect()))
                .collect();
            let q = PolyVec::new(entries, 1.0).unwrap();
            for &t in &[0.1, 0.5, 0.9] {
                let tau = torque_at(&a, &q, t);
                let oracle = lagrange_torque(&a, &q, t);
                assert!((tau - oracle).amax() < 1e-6);
            }
        }
    }

    #[test]
    fn torque_dot_constant_trajectory() {
        let a = arm();
        let q = PolyVec::constant(&[0.4, 0.7], 1.0).unwrap();
        assert!(torque_dot(&a, &q, 0.5, 0.1).amax() < 1e-12);
    }

    #[test]
    fn torque_dot_single_link_and_order() {
        let link = Link {
            mass: 1.5,
            length: 0.3,
            com: 0.14,
            inertia: 0.012,
        };
        let pend = SingleLink {
            link,
            gravity: 9.81,
        };
        let q = PolyVec::new(vec![Poly::new(vec![0.1, 0.5, -0.3, 0.2, 0.05])], 2.0).unwrap();
        // τ = J q̈ + m lc G cos q  ⇒  τ̇ = J q⃛ − m lc G sin q · q̇
        let j = link.inertia + link.mass * link.com * link.com;
        let exact = |t: f64| {
            let p = &q.entries()[0];
            j * p.eval_derivative(t, 3)
                - link.mass * link.com * 9.81 * p.eval(t).sin() * p.eval_derivative(t, 1)
        };
        let t = 0.8;
        let e1 = (torque_dot(&pend, &q, t, 0.02)[0] - exact(t)).abs();
        let e2 = (torque_dot(&pend, &q, t, 0.01)[0] - exact(t)).abs();
        assert!(e1 < 1e-3);
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        assert!((torque_dot(&pend, &q, t, 1e-4)[0] - exact(t)).abs() < 1e-6);
    }

    pub(crate) fn model() -> LinkageModel {
        LinkageModel {
            arm: arm(),
            moment_arms: DMatrix::from_row_slice(
                2,
                6,
                &[
                    0.045, -0.045, 0.0, 0.0, 0.035, -0.035, //
                    0.0, 0.0, 0.035, -0.035, 0.030, -0.030,
                ],
            ),
            rest_lengths: DVector::from_vec(vec![0.185, 0.1133, 0.335, 0.237, 0.394, 0.1169]),
        }
    }

    #[test]
    fn muscle_lengths_examples() {
        let m = model();
        assert_eq!(m.muscle_lengths(&v2(0.0, 0.0)), m.rest_lengths);
        let q1 = v2(0.3, -0.2);
        let q2 = v2(-0.1, 0.9);
        let d = |q: &DVector<f64>| m.muscle_lengths(q) - &m.rest_lengths;
        assert!((d(&(&q1 + &q2)) - (d(&q1) + d(&q2))).amax() < 1e-15);
        let l = m.muscle_lengths(&q1);
        for j in 0..6 {
            let expect = m.rest_lengths[j]
                - (m.moment_arms[(0, j)] * q1[0] + m.moment_arms[(1, j)] * q1[1]);
            assert!((l[j] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn muscle_torque_examples() {
        let m = model();
        let params: Vec<_> = (0..6).map(|_| crate::muscle::tests::sample()).collect();
        let slack = DVector::from_element(6, 0.04);
        assert_eq!(m.muscle_torque(&params, &slack), DVector::zeros(2));
        // equal pull on the shoulder pair only
        let mut l_s = slack.clone();
        l_s[0] = 0.07;
        l_s[1] = 0.07;
        assert!(m.muscle_torque(&params, &l_s)[0].abs() < 1e-12);
        let l_s = DVector::from_vec(vec![0.051, 0.06, 0.07, 0.055, 0.08, 0.065]);
        let tau = m.muscle_torque(&params, &l_s);
        for i in 0..2 {
            let mut expect = 0.0;
            for j in 0..6 {
                expect += m.moment_arms[(i, j)] * params[j].tendon_force(l_s[j]);
            }
            assert!((tau[i] - expect).abs() < 1e-12);
        }
    }
}
