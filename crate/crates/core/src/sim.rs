//! Forward simulation of the full musculoskeletal dynamics.
//!
//! State `x = (q, q̇, L_S, a)` of dimension `2(N + m)`:
//!
//! * `q̈ = M⁻¹(A·Φ_S(L_S) − C q̇ − g)`
//! * `L̇_S = −Aᵀq̇ + g⁻¹(z)` with `z` from the Hill force balance
//! * `ȧ = σ(n)(n − a)`

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{MuscleError, SimError};
use crate::flatness::Plant;
use crate::linkage::Dynamics;

#[derive(Debug, Clone, PartialEq)]
pub struct MssState {
    pub q: DVector<f64>,
    pub q_dot: DVector<f64>,
    pub l_s: DVector<f64>,
    pub a: DVector<f64>,
}

impl MssState {
    pub fn dim(&self) -> usize {
        2 * (self.q.len() + self.l_s.len())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.q
            .iter()
            .chain(self.q_dot.iter())
            .chain(self.l_s.iter())
            .chain(self.a.iter())
            .copied()
            .collect()
    }

    pub fn from_slice(joints: usize, muscles: usize, x: &[f64]) -> Self {
        assert_eq!(x.len(), 2 * (joints + muscles));
        let (q, rest) = x.split_at(joints);
        let (q_dot, rest) = rest.split_at(joints);
        let (l_s, a) = rest.split_at(muscles);
        Self {
            q: DVector::from_column_slice(q),
            q_dot: DVector::from_column_slice(q_dot),
            l_s: DVector::from_column_slice(l_s),
            a: DVector::from_column_slice(a),
        }
    }
}

/// Time derivative of the state under neural input `n`.
///
/// Fails with the offending muscle when `z` leaves `(0, z_max)` or the
/// activation drops to the floor.
pub fn mss_derivative(
    x: &MssState,
    n: &[f64],
    plant: &Plant,
) -> Result<MssState, (usize, MuscleError)> {
    let model = &plant.model;
    let tau = model.muscle_torque(&plant.muscles, &x.l_s);
    let q_ddot = model
        .forward_dynamics(&x.q, &x.q_dot, &tau)
        .ok_or((0, MuscleError::Domain {
            quantity: "mass matrix pivot",
            value: 0.0,
        }))?;
    let u = plant.shortening_rates(x)?;
    let l_s_dot = u - plant.flat.a.transpose() * &x.q_dot;
    let a_dot = DVector::from_iterator(
        x.a.len(),
        plant
            .muscles
            .iter()
            .enumerate()
            .map(|(j, p)| p.activation_rate(x.a[j], n[j])),
    );
    Ok(MssState {
        q: x.q_dot.clone(),
        q_dot: q_ddot,
        l_s: l_s_dot,
        a: a_dot,
    })
}

/// Neural input as a function of time.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSignal {
    Constant(Vec<f64>),
    /// Linear interpolation between samples, held constant outside.
    PiecewiseLinear { times: Vec<f64>, values: Vec<Vec<f64>> },
    /// Each sample held until the next time.
    ZeroOrderHold { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl InputSignal {
    fn interval(times: &[f64], t: f64) -> usize {
        match times.iter().rposition(|&s| s <= t) {
            Some(i) => i.min(times.len().saturating_sub(1)),
            None => 0,
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.eval_in_step(t, t)
    }

    /// Value at `t` inside an integration step starting at `step_start`;
    /// steps never straddle breakpoints, so a held value is taken from the step start.
    fn eval_in_step(&self, t: f64, step_start: f64) -> Vec<f64> {
        match self {
            InputSignal::Constant(v) => v.clone(),
            InputSignal::ZeroOrderHold { times, values } => {
                values[Self::interval(times, step_start)].clone()
            }
            InputSignal::PiecewiseLinear { times, values } => {
                if t <= times[0] {
                    return values[0].clone();
                }
                if t >= times[times.len() - 1] {
                    return values[values.len() - 1].clone();
                }
                let i = Self::interval(times, t).min(times.len() - 2);
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i]
                    .iter()
                    .zip(&values[i + 1])
                    .map(|(a, b)| a + w * (b - a))
                    .collect()
            }
        }
    }

    fn breakpoints(&self) -> &[f64] {
        match self {
            InputSignal::Constant(_) => &[],
            InputSignal::PiecewiseLinear { times, .. } | InputSignal::ZeroOrderHold { times, .. } => {
                times
            }
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let (times, values) = match self {
            InputSignal::Constant(v) => {
                return check_unit(v);
            }
            InputSignal::PiecewiseLinear { times, values }
            | InputSignal::ZeroOrderHold { times, values } => (times, values),
        };
        if times.is_empty() || times.len() != values.len() {
            return Err(SimError::InvalidRequest(
                "input needs one value vector per sample time".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SimError::InvalidRequest("input times must increase".into()));
        }
        values.iter().try_for_each(|v| check_unit(v))
    }
}

fn check_unit(v: &[f64]) -> Result<(), SimError> {
    if v.iter().all(|x| (0.0..=1.0).contains(x)) {
        Ok(())
    } else {
        Err(SimError::InvalidRequest("neural inputs must lie in [0, 1]".into()))
    }
}

/// One recorded instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub q: Vec<f64>,
    pub q_dot: Vec<f64>,
    pub l_s: Vec<f64>,
    pub a: Vec<f64>,
    pub n: Vec<f64>,
    /// Tendon forces Φ_S(L_S).
    pub forces: Vec<f64>,
    /// Co-contractions `Y = E·Φ_S(L_S)`.
    pub y: Vec<f64>,
}

impl TraceSample {
    pub fn state(&self) -> MssState {
        MssState {
            q: DVector::from_column_slice(&self.q),
            q_dot: DVector::from_column_slice(&self.q_dot),
            l_s: DVector::from_column_slice(&self.l_s),
            a: DVector::from_column_slice(&self.a),
        }
    }

    fn from_state(t: f64, x: &MssState, n: Vec<f64>, plant: &Plant) -> Self {
        let forces = plant.tendon_forces(&x.l_s);
        let y = &plant.flat.e * &forces;
        Self {
            t,
            q: x.q.iter().copied().collect(),
            q_dot: x.q_dot.iter().copied().collect(),
            l_s: x.l_s.iter().copied().collect(),
            a: x.a.iter().copied().collect(),
            n,
            forces: forces.iter().copied().collect(),
            y: y.iter().copied().collect(),
        }
    }
}

/// Time-ordered samples of a planned or simulated run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub samples: Vec<TraceSample>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&TraceSample> {
        self.samples.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Header `t, q1.., qd1.., LS1.., a1.., n1.., FT1.., Y1..`.
    pub fn csv_header(joints: usize, muscles: usize, outputs: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        let mut push = |prefix: &str, count: usize| {
            h.extend((1..=count).map(|i| format!("{prefix}{i}")));
        };
        push("q", joints);
        push("qd", joints);
        push("LS", muscles);
        push("a", muscles);
        push("n", muscles);
        push("FT", muscles);
        push("Y", outputs);
        h
    }

    pub fn write_csv<W: Write>(
        &self,
        out: W,
        joints: usize,
        muscles: usize,
        outputs: usize,
    ) -> Result<(), SimError> {
        let io = |e: csv::Error| SimError::InvalidRequest(format!("csv output: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::csv_header(joints, muscles, outputs))
            .map_err(io)?;
        for s in &self.samples {
            let row = std::iter::once(s.t)
                .chain(s.q.iter().copied())
                .chain(s.q_dot.iter().copied())
                .chain(s.l_s.iter().copied())
                .chain(s.a.iter().copied())
                .chain(s.n.iter().copied())
                .chain(s.forces.iter().copied())
                .chain(s.y.iter().copied())
                .map(|v| format!("{v:.12e}"));
            w.write_record(row).map_err(io)?;
        }
        w.flush()
            .map_err(|e| SimError::InvalidRequest(format!("csv output: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Step-size control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Fixed step size; disables error control.
    pub fixed_step: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            initial_step: 1e-4,
            min_step: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
            fixed_step: None,
        }
    }
}

/// Integration result that keeps everything computed before a failure.
#[derive(Debug, Clone, PartialEq)]
pub struct SimFailure {
    pub partial: SimTrace,
    pub error: SimError,
}

/// Counters from one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

enum StageError {
    /// The derivative failed at the accepted state itself.
    AtStart(usize, MuscleError),
    /// A trial stage left the domain; retry with a smaller step.
    Trial,
}

struct Stepper<'a> {
    plant: &'a Plant,
    input: &'a InputSignal,
    joints: usize,
    muscles: usize,
    stats: IntegratorStats,
}

impl Stepper<'_> {
    fn rhs(&mut self, t: f64, step_start: f64, x: &[f64]) -> Result<Vec<f64>, (usize, MuscleError)> {
        self.stats.evaluations += 1;
        if x.iter().any(|v| !v.is_finite()) {
            return Err((0, MuscleError::Domain {
                quantity: "state",
                value: f64::NAN,
            }));
        }
        let state = MssState::from_slice(self.joints, self.muscles, x);
        let n = self.input.eval_in_step(t, step_start);
        mss_derivative(&state, &n, self.plant).map(|d| d.to_vec())
    }

    /// One DP5(4) step; returns the fifth-order solution and the error estimate.
    fn step(&mut self, t: f64, x: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>), StageError> {
        let dim = x.len();
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(self.rhs(t, t, x).map_err(|(j, e)| StageError::AtStart(j, e))?);
        for s in 1..7 {
            let mut xs = x.to_vec();
            for (i, ki) in k.iter().enumerate() {
                let w = A[s][i];
                if w != 0.0 {
                    for d in 0..dim {
                        xs[d] += h * w * ki[d];
                    }
                }
            }
            k.push(self.rhs(t + C[s] * h, t, &xs).map_err(|_| StageError::Trial)?);
        }
        let mut x5 = x.to_vec();
        let mut err = vec![0.0; dim];
        for (s, ks) in k.iter().enumerate() {
            for d in 0..dim {
                x5[d] += h * B5[s] * ks[d];
                err[d] += h * (B5[s] - B4[s]) * ks[d];
            }
        }
        Ok((x5, err))
    }
}

fn error_norm(err: &[f64], x: &[f64], x_new: &[f64], opts: &IntegratorOptions) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(x.iter().zip(x_new))
        .map(|(e, (a, b))| {
            let scale = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

/// Integrate from `x0` at `output_times[0]` and record a sample at each output time.
///
/// Steps are shortened to land exactly on output times and input breakpoints.
pub fn integrate(
    plant: &Plant,
    x0: &MssState,
    input: &InputSignal,
    output_times: &[f64],
    opts: &IntegratorOptions,
) -> Result<(SimTrace, IntegratorStats), SimFailure> {
    let fail = |partial: SimTrace, error| Err(SimFailure { partial, error });
    if output_times.is_empty() {
        return Ok((SimTrace::default(), IntegratorStats::default()));
    }
    if output_times.windows(2).any(|w| !(w[1] >= w[0])) {
        return fail(
            SimTrace::default(),
            SimError::InvalidRequest("output times must be non-decreasing".into()),
        );
    }
    if let Err(e) = input.validate() {
        return fail(SimTrace::default(), e);
    }

    let joints = x0.q.len();
    let muscles = x0.l_s.len();
    let mut stepper = Stepper {
        plant,
        input,
        joints,
        muscles,
        stats: IntegratorStats::default(),
    };
    let mut t = output_times[0];
    let mut x = x0.to_vec();
    let mut trace = SimTrace::default();
    let record = |t: f64, x: &[f64], trace: &mut SimTrace| {
        let state = MssState::from_slice(joints, muscles, x);
        trace
            .samples
            .push(TraceSample::from_state(t, &state, input.eval(t), plant));
    };
    record(t, &x, &mut trace);

    let mut stops: Vec<f64> = input
        .breakpoints()
        .iter()
        .copied()
        .filter(|&b| b > t && b < output_times[output_times.len() - 1])
        .chain(output_times[1..].iter().copied())
        .collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let mut h = opts.fixed_step.unwrap_or(opts.initial_step).min(opts.max_step);
    let mut out_idx = 1;
    let mut stop_idx = 0;
    let mut steps = 0usize;
    while out_idx < output_times.len() {
        // repeated output times
        while out_idx < output_times.len() && output_times[out_idx] <= t {
            record(t, &x, &mut trace);
            out_idx += 1;
        }
        if out_idx >= output_times.len() {
            break;
        }
        while stops[stop_idx] <= t {
            stop_idx += 1;
        }
        let stop = stops[stop_idx];
        steps += 1;
        if steps > opts.max_steps {
            return fail(trace, SimError::StepFailure { time: t, step: h });
        }
        let nominal = opts.fixed_step.unwrap_or(h);
        let remaining = stop - t;
        let (h_try, lands) = if nominal >= remaining * (1.0 - 1e-12) {
            (remaining, true)
        } else {
            (nominal, false)
        };

        match stepper.step(t, &x, h_try) {
            Err(StageError::AtStart(muscle, source)) => {
                return fail(
                    trace,
                    SimError::Domain {
                        time: t,
                        muscle,
                        source,
                    },
                );
            }
            Err(StageError::Trial) => {
                stepper.stats.rejected += 1;
                if opts.fixed_step.is_some() || h_try * 0.25 < opts.min_step {
                    return fail(trace, SimError::StepFailure { time: t, step: h_try });
                }
                h = h_try * 0.25;
            }
            Ok((x_new, err)) => {
                if opts.fixed_step.is_some() {
                    x = x_new;
                    t = if lands { stop } else { t + h_try };
                    stepper.stats.accepted += 1;
                    continue;
                }
                let en = error_norm(&err, &x, &x_new, opts);
                if !en.is_finite() {
                    stepper.stats.rejected += 1;
                    h = h_try * 0.25;
                    if h < opts.min_step {
                        return fail(trace, SimError::NonFinite(t));
                    }
                    continue;
                }
                let factor = if en == 0.0 {
                    5.0
                } else {
                    (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
                };
                if en <= 1.0 {
                    stepper.stats.accepted += 1;
                    x = x_new;
                    t = if lands { stop } else { t + h_try };
                    // a landing step may be artificially short; do not let it shrink h
                    h = if lands { h.max(h_try * factor) } else { h_try * factor };
                    h = h.min(opts.max_step);
                } else {
                    stepper.stats.rejected += 1;
                    h = h_try * factor.min(1.0);
                    if h < opts.min_step {
                        return fail(trace, SimError::StepFailure { time: t, step: h });
                    }
                }
            }
        }
    }
    Ok((trace, stepper.stats))
}
