//! Hill-type muscle: elastic elements, contractile force factors and
//! activation dynamics.
//!
//! Force laws used here:
//!
//! * tendon (series element): `k_s · max(L_S − L_so, 0)²`
//! * parallel element: `k_p · max(L_C − L_p_slack, 0)²`
//! * force–length: `exp(−((L_C − L_co)/(W·L_co))²)`
//! * force–velocity, with `u = −L̇_C` the shortening rate:
//!   `(v_max − u)/(v_max + u/κ)` for `u ≥ 0`, and for lengthening
//!   `z_max + (1 − z_max)·v_e/(v_e − u)` with `v_e = v_max (z_max − 1) κ/(κ + 1)`,
//!   which matches the concentric slope at `u = 0`.
//! * activation: `ȧ = σ(n)(n − a)`, `σ(n) = 1/T_min + n (1/T_max − 1/T_min)`.

use serde::{Deserialize, Serialize};

use crate::error::MuscleError;

/// Activations at or below this value are rejected when dividing by `a`.
pub const ACTIVATION_FLOOR: f64 = 1e-3;

const NEURAL_TOL: f64 = 1e-13;

/// Constants of one Hill-type muscle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleParams {
    #[serde(default)]
    pub name: String,
    /// Maximum isometric force, N.
    pub f_max: f64,
    /// Optimal contractile-element length, m.
    pub l_co: f64,
    /// Tendon slack length, m.
    pub l_so: f64,
    /// Tendon quadratic stiffness, N/m².
    pub k_s: f64,
    /// Parallel-element quadratic stiffness, N/m².
    pub k_p: f64,
    /// Parallel-element slack length, m.
    pub l_p_slack: f64,
    /// Force–length width (fraction of `l_co`).
    pub width: f64,
    /// Maximum shortening velocity, m/s.
    pub v_max: f64,
    /// Hill curvature κ.
    pub curvature: f64,
    /// Eccentric-to-isometric force ratio.
    pub z_max: f64,
    /// Minimum activation time constant, s.
    pub t_min: f64,
    /// Maximum activation time constant, s.
    pub t_max: f64,
}

/// Per-muscle state: series-element length and activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuscleState {
    pub l_s: f64,
    pub a: f64,
}

impl MuscleParams {
    pub fn validate(&self) -> Result<(), MuscleError> {
        let positive = [
            ("f_max", self.f_max),
            ("l_co", self.l_co),
            ("l_so", self.l_so),
            ("k_s", self.k_s),
            ("k_p", self.k_p),
            ("l_p_slack", self.l_p_slack),
            ("width", self.width),
            ("v_max", self.v_max),
            ("curvature", self.curvature),
            ("z_max", self.z_max),
            ("t_min", self.t_min),
            ("t_max", self.t_max),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MuscleError::InvalidParams {
                    field,
                    reason: format!("must be positive and finite, got {value}"),
                });
            }
        }
        if self.z_max <= 1.0 {
            return Err(MuscleError::InvalidParams {
                field: "z_max",
                reason: format!("must exceed 1, got {}", self.z_max),
            });
        }
        if self.t_min >= self.t_max {
            return Err(MuscleError::InvalidParams {
                field: "t_min",
                reason: format!("must be below t_max ({} >= {})", self.t_min, self.t_max),
            });
        }
        if self.width > 1.0 {
            return Err(MuscleError::InvalidParams {
                field: "width",
                reason: format!("must lie in (0, 1], got {}", self.width),
            });
        }
        Ok(())
    }

    /// Φ_S: tendon force for series-element length `l_s`.
    pub fn tendon_force(&self, l_s: f64) -> f64 {
        let stretch = (l_s - self.l_so).max(0.0);
        self.k_s * stretch * stretch
    }

    /// Φ_S′, the tendon stiffness.
    pub fn tendon_stiffness(&self, l_s: f64) -> f64 {
        2.0 * self.k_s * (l_s - self.l_so).max(0.0)
    }

    /// Tendon length carrying force `force`; only defined above slack.
    pub fn tendon_force_inverse(&self, force: f64) -> Result<f64, MuscleError> {
        if !(force > 0.0) {
            return Err(MuscleError::NonPositiveForce(force));
        }
        Ok(self.l_so + (force / self.k_s).sqrt())
    }

    /// Φ_P: passive fibre force for contractile length `l_c`.
    pub fn pe_force(&self, l_c: f64) -> f64 {
        let stretch = (l_c - self.l_p_slack).max(0.0);
        self.k_p * stretch * stretch
    }

    /// f(L_C) ∈ (0, 1], equal to 1 at `l_co`.
    pub fn force_length(&self, l_c: f64) -> f64 {
        let x = (l_c - self.l_co) / (self.width * self.l_co);
        (-x * x).exp()
    }

    fn eccentric_velocity(&self) -> f64 {
        self.v_max * (self.z_max - 1.0) * self.curvature / (self.curvature + 1.0)
    }

    /// g(u) for shortening rate `u = −L̇_C`.
    pub fn force_velocity(&self, u: f64) -> Result<f64, MuscleError> {
        if !(u < self.v_max) || u.is_nan() {
            return Err(MuscleError::Domain {
                quantity: "shortening velocity",
                value: u,
            });
        }
        if u >= 0.0 {
            Ok((self.v_max - u) / (self.v_max + u / self.curvature))
        } else {
            let ve = self.eccentric_velocity();
            Ok(self.z_max + (1.0 - self.z_max) * ve / (ve - u))
        }
    }

    /// g⁻¹(z), the shortening rate producing force ratio `z`.
    pub fn force_velocity_inverse(&self, z: f64) -> Result<f64, MuscleError> {
        if !(z > 0.0 && z < self.z_max) {
            return Err(MuscleError::Domain {
                quantity: "force-velocity ratio",
                value: z,
            });
        }
        if z <= 1.0 {
            Ok(self.v_max * (1.0 - z) / (1.0 + z / self.curvature))
        } else {
            let ve = self.eccentric_velocity();
            Ok(ve - (self.z_max - 1.0) * ve / (self.z_max - z))
        }
    }

    /// Force-velocity ratio z implied by tendon length, total length and activation.
    pub fn z_value(&self, l_s: f64, length: f64, a: f64) -> Result<f64, MuscleError> {
        if !(a > ACTIVATION_FLOOR) {
            return Err(MuscleError::ZeroActivation(a));
        }
        let l_c = length - l_s;
        if !(l_c > 0.0) {
            return Err(MuscleError::Domain {
                quantity: "contractile length",
                value: l_c,
            });
        }
        Ok((self.tendon_force(l_s) - self.pe_force(l_c))
            / (a * self.f_max * self.force_length(l_c)))
    }

    /// σ(n), the excitation-dependent rate.
    pub fn excitation_rate(&self, n: f64) -> f64 {
        1.0 / self.t_min + n * (1.0 / self.t_max - 1.0 / self.t_min)
    }

    /// ȧ = σ(n)(n − a).
    pub fn activation_rate(&self, a: f64, n: f64) -> f64 {
        self.excitation_rate(n) * (n - a)
    }

    /// Neural input `n ∈ [0, 1]` producing activation rate `a_dot` at activation `a`.
    pub fn solve_neural(&self, a: f64, a_dot: f64) -> Result<f64, MuscleError> {
        let phi = |n: f64| self.activation_rate(a, n) - a_dot;
        let lo = phi(0.0);
        let hi = phi(1.0);
        if lo > 0.0 || hi < 0.0 || a_dot.is_nan() {
            return Err(MuscleError::NoRootInUnitInterval {
                a,
                a_dot,
                min_rate: lo + a_dot,
                max_rate: hi + a_dot,
            });
        }
        // φ′ is affine in n, so positivity at both ends gives monotonicity on [0, 1].
        let slope = 1.0 / self.t_max - 1.0 / self.t_min;
        let dphi = |n: f64| slope * (n - a) + self.excitation_rate(n);
        if dphi(0.0) <= 0.0 || dphi(1.0) <= 0.0 {
            return Err(MuscleError::NonMonotoneExcitation { a });
        }
        let (mut left, mut right) = (0.0_f64, 1.0_f64);
        let (mut f_left, mut f_right) = (lo, hi);
        if f_left == 0.0 {
            return Ok(0.0);
        }
        if f_right == 0.0 {
            return Ok(1.0);
        }
        // Illinois regula falsi with a bisection guard.
        let mut side = 0i8;
        for _ in 0..200 {
            let mut n = (left * f_right - right * f_left) / (f_right - f_left);
            if !(n > left && n < right) {
                n = 0.5 * (left + right);
            }
            let f_n = phi(n);
            if f_n == 0.0 || right - left < NEURAL_TOL {
                return Ok(n);
            }
            if f_n.signum() == f_right.signum() {
                right = n;
                f_right = f_n;
                if side == 1 {
                    f_left *= 0.5;
                }
                side = 1;
            } else {
                left = n;
                f_left = f_n;
                if side == -1 {
                    f_right *= 0.5;
                }
                side = -1;
            }
        }
        Ok(0.5 * (left + right))
    }
}
