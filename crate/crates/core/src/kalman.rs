//! Constant-velocity Kalman filter over `[u, v, a, h, du, dv, da, dh]` with a
//! standard update and an iterated (Gauss-Newton) update for nonlinear
//! measurement functions.

use nalgebra::{Matrix4, SMatrix, SVector, Vector4};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
pub type Measurement = Vector4<f64>;
pub type MeasurementMatrix = SMatrix<f64, 4, 8>;

const JITTER: f64 = 1e-9;

/// Noise parameters. Position, height and their velocities scale with the
/// current box height; the aspect-ratio terms are absolute.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    pub std_weight_measurement: f64,
    pub std_aspect: f64,
    pub std_aspect_velocity: f64,
    pub std_aspect_measurement: f64,
    pub h_min: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            std_weight_measurement: 1.0 / 20.0,
            std_aspect: 1e-2,
            std_aspect_velocity: 1e-5,
            std_aspect_measurement: 1e-1,
            h_min: 1.0,
        }
    }
}

impl NoiseConfig {
    /// Filter model with noise sized for a target of height `h`.
    pub fn model_for_height(&self, h: f64) -> KalmanModel {
        let h = h.max(self.h_min);
        let p = self.std_weight_position * h;
        let vel = self.std_weight_velocity * h;
        let m = self.std_weight_measurement * h;
        let q = StateVector::from_column_slice(&[
            p,
            p,
            self.std_aspect,
            p,
            vel,
            vel,
            self.std_aspect_velocity,
            vel,
        ]);
        let r = Measurement::new(m, m, self.std_aspect_measurement, m);
        KalmanModel {
            h_min: self.h_min,
            ..KalmanModel::constant_velocity(
                StateCovariance::from_diagonal(&q.component_mul(&q)),
                Matrix4::from_diagonal(&r.component_mul(&r)),
            )
        }
    }

    /// Fresh state for a newborn track observed as `bbox`.
    pub fn initiate(&self, bbox: &BBox) -> KalmanState {
        let z = bbox.to_measurement();
        let h = z[3].max(self.h_min);
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<4>(0).copy_from(&Measurement::from(z));
        x[3] = h;
        let p = 2.0 * self.std_weight_position * h;
        let vel = 10.0 * self.std_weight_velocity * h;
        let std = StateVector::from_column_slice(&[
            p,
            p,
            self.std_aspect,
            p,
            vel,
            vel,
            self.std_aspect_velocity,
            vel,
        ]);
        KalmanState {
            x,
            p: StateCovariance::from_diagonal(&std.component_mul(&std)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanModel {
    pub f: StateCovariance,
    pub h: MeasurementMatrix,
    pub q: StateCovariance,
    pub r: Matrix4<f64>,
    /// Lower bound applied to the height component after every step.
    pub h_min: f64,
}

impl KalmanModel {
    /// Unit-step constant-velocity transition with the `[I 0]` observation.
    pub fn constant_velocity(q: StateCovariance, r: Matrix4<f64>) -> Self {
        let mut f = StateCovariance::identity();
        for i in 0..4 {
            f[(i, i + 4)] = 1.0;
        }
        let mut h = MeasurementMatrix::zeros();
        for i in 0..4 {
            h[(i, i)] = 1.0;
        }
        Self {
            f,
            h,
            q,
            r,
            h_min: 1.0,
        }
    }

    /// Same model with `lambda * I` added to the measurement noise.
    pub fn with_jitter(&self, lambda: f64) -> Self {
        Self {
            r: self.r + Matrix4::identity() * lambda,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub x: StateVector,
    pub p: StateCovariance,
}

impl KalmanState {
    pub fn new(x: StateVector, p: StateCovariance) -> Self {
        Self { x, p }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x[0], self.x[1])
    }

    pub fn to_bbox(&self) -> Result<BBox> {
        BBox::from_center_aspect(self.x[0], self.x[1], self.x[2], self.x[3])
    }

    fn finalize(mut self, h_min: f64, what: &'static str) -> Result<Self> {
        self.p = (self.p + self.p.transpose()) * 0.5;
        if self.x[3] < h_min {
            self.x[3] = h_min;
        }
        if self.x.iter().chain(self.p.iter()).all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(Error::NonFinite(what))
        }
    }
}

/// Measurement function `h(x)` with its Jacobian.
pub trait MeasurementFunction {
    fn measure(&self, x: &StateVector) -> Measurement;
    fn jacobian(&self, x: &StateVector) -> MeasurementMatrix;
}

/// `h(x) = H x`.
#[derive(Debug, Clone)]
pub struct LinearMeasurement(pub MeasurementMatrix);

impl LinearMeasurement {
    pub fn of(model: &KalmanModel) -> Self {
        Self(model.h)
    }
}

impl MeasurementFunction for LinearMeasurement {
    fn measure(&self, x: &StateVector) -> Measurement {
        self.0 * x
    }

    fn jacobian(&self, _x: &StateVector) -> MeasurementMatrix {
        self.0
    }
}

/// Observes `(u, v, a, ln h)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogHeightMeasurement;

impl MeasurementFunction for LogHeightMeasurement {
    fn measure(&self, x: &StateVector) -> Measurement {
        Measurement::new(x[0], x[1], x[2], x[3].ln())
    }

    fn jacobian(&self, x: &StateVector) -> MeasurementMatrix {
        let mut j = MeasurementMatrix::zeros();
        j[(0, 0)] = 1.0;
        j[(1, 1)] = 1.0;
        j[(2, 2)] = 1.0;
        j[(3, 3)] = 1.0 / x[3];
        j
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IteratedUpdateConfig {
    /// Relative stopping threshold on the change of the correction.
    pub epsilon_conv: f64,
    pub max_iters: usize,
}

impl Default for IteratedUpdateConfig {
    fn default() -> Self {
        Self {
            epsilon_conv: 0.01,
            max_iters: 10,
        }
    }
}

impl IteratedUpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_conv > 0.0 && self.epsilon_conv < 1.0) {
            return Err(Error::invalid("epsilon_conv must lie in (0, 1)"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IteratedOutcome {
    pub state: KalmanState,
    /// Number of corrections computed before the stopping rule held.
    pub iterations: usize,
    pub converged: bool,
}

/// `x' = F x`, `P' = F P F^T + Q`.
pub fn predict(state: &KalmanState, model: &KalmanModel) -> Result<KalmanState> {
    KalmanState {
        x: model.f * state.x,
        p: model.f * state.p * model.f.transpose() + model.q,
    }
    .finalize(model.h_min, "kalman predict")
}

fn gain(p: &StateCovariance, jac: &MeasurementMatrix, r: &Matrix4<f64>) -> Result<SMatrix<f64, 8, 4>> {
    let s = jac * p * jac.transpose() + r;
    let s_inv = s
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or(Error::SingularInnovation)?;
    Ok(p * jac.transpose() * s_inv)
}

/// Standard Kalman measurement update.
pub fn update(state: &KalmanState, z: &Measurement, model: &KalmanModel) -> Result<KalmanState> {
    if !z.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("measurement"));
    }
    let k = gain(&state.p, &model.h, &model.r)?;
    let innovation = z - model.h * state.x;
    KalmanState {
        x: state.x + k * innovation,
        p: (StateCovariance::identity() - k * model.h) * state.p,
    }
    .finalize(model.h_min, "kalman update")
}

/// Iterated measurement update.
///
/// Starting from a zero correction, each pass relinearizes `h_fn` at the
/// corrected state and recomputes
/// `dx' = K (z - h(x + dx) + J dx)`, stopping once
/// `|dx' - dx| < epsilon_conv * |r0|` where `r0` is the initial residual.
/// The posterior applies the converged correction with the gain of the final
/// linearization. With a linear `h_fn` the first correction is already the
/// fixed point, so this reduces to [`update`] after one iteration.
pub fn iterated_update(
    state: &KalmanState,
    z: &Measurement,
    model: &KalmanModel,
    h_fn: &dyn MeasurementFunction,
    cfg: &IteratedUpdateConfig,
) -> Result<IteratedOutcome> {
    if !z.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("measurement"));
    }
    let prior = &state.x;
    let mut jac = h_fn.jacobian(prior);
    let mut k = gain(&state.p, &jac, &model.r)?;
    let r0 = z - h_fn.measure(prior);
    let tol = cfg.epsilon_conv * r0.norm();

    let mut dx = k * r0;
    let mut iterations = 1;
    let mut converged = r0.norm() == 0.0;

    while !converged {
        let at = prior + dx;
        let next_jac = h_fn.jacobian(&at);
        let next_k = gain(&state.p, &next_jac, &model.r)?;
        let residual = z - h_fn.measure(&at) + next_jac * dx;
        let next = next_k * residual;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("iterated update"));
        }
        if (next - dx).norm() < tol {
            dx = next;
            jac = next_jac;
            k = next_k;
            converged = true;
        } else if iterations >= cfg.max_iters {
            break;
        } else {
            dx = next;
            jac = next_jac;
            k = next_k;
            iterations += 1;
        }
    }

    let state = KalmanState {
        x: prior + dx,
        p: (StateCovariance::identity() - k * jac) * state.p,
    }
    .finalize(model.h_min, "iterated update")?;
    Ok(IteratedOutcome {
        state,
        iterations,
        converged,
    })
}

/// [`iterated_update`] that retries once with jittered measurement noise when
/// the innovation covariance is singular.
pub fn iterated_update_with_jitter(
    state: &KalmanState,
    z: &Measurement,
    model: &KalmanModel,
    h_fn: &dyn MeasurementFunction,
    cfg: &IteratedUpdateConfig,
) -> Result<IteratedOutcome> {
    match iterated_update(state, z, model, h_fn, cfg) {
        Err(Error::SingularInnovation) => {
            iterated_update(state, z, &model.with_jitter(JITTER), h_fn, cfg)
        }
        other => other,
    }
}
