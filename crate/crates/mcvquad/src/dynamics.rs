//! Quadrotor rigid-body dynamics with quaternion attitude and quadratic body
//! drag, a classical RK4 integrator, and the analytic linearization used by
//! the controllers.
//!
//! The state is `x = [p; q; v]` (10-dimensional: inertial position, attitude
//! quaternion `[q_w, q_x, q_y, q_z]`, inertial velocity) and the input is
//! `u = [omega; f_c]` (body rates plus collective thrust). The dynamics are
//!
//! ```text
//! p_dot = v + v_w
//! q_dot = 1/2 q (x) [0; omega]
//! v_dot = g + (1/m) R(q) [0; 0; f_c] - (1/m) f_D
//! ```
//!
//! with drag force `f_D = ||v|| R D R^T v`. The quaternion is normalized on
//! entry to the dynamics and after every integration step; the linearization
//! accounts for that normalization through the correction factor
//! `(I4 - q q^T / ||q||^2) / ||q||` applied to every quaternion Jacobian
//! block. `linearize` returns the exact Jacobian of `derivative`, including
//! the drag-coefficient slope in airspeed-formula mode; the contract is
//! agreement with central finite differences.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, SMatrix, SVector, Vector3, Vector4};
use thiserror::Error;

use crate::GRAVITY;

pub type StateVector = SVector<f64, 10>;
pub type InputVector = SVector<f64, 4>;
pub type StateMatrix = SMatrix<f64, 10, 10>;
pub type InputMatrix = SMatrix<f64, 10, 4>;
pub type NoiseMatrix = SMatrix<f64, 10, 3>;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("degenerate quaternion (norm {0:.3e})")]
    DegenerateQuaternion(f64),
    #[error("linearization singular at ||v|| = {0:.3e}; perturb the nominal velocity")]
    SingularLinearization(f64),
    #[error("non-finite state produced during integration")]
    NonFinite,
}

/// Parenthesization of the airspeed-dependent drag-coefficient exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DragExpForm {
    /// `d = min(1.1, 0.2 + 0.9 exp(-0.6 s - 2))` (default reading).
    #[default]
    LinearMinusTwo,
    /// `d = min(1.1, 0.2 + 0.9 exp(-0.6 (s - 2)))`; the clamp is active at
    /// low airspeed under this reading.
    ShiftedNorm,
}

impl DragExpForm {
    /// Coefficient value at airspeed norm `s`.
    pub fn coeff(self, s: f64) -> f64 {
        self.coeff_and_slope(s).0
    }

    /// Coefficient and its derivative with respect to `s` (zero while the
    /// clamp is active).
    pub fn coeff_and_slope(self, s: f64) -> (f64, f64) {
        let e = match self {
            DragExpForm::LinearMinusTwo => (-0.6 * s - 2.0).exp(),
            DragExpForm::ShiftedNorm => (-0.6 * (s - 2.0)).exp(),
        };
        let raw = 0.2 + 0.9 * e;
        if raw > 1.1 {
            (1.1, 0.0)
        } else {
            (raw, -0.54 * e)
        }
    }
}

/// Drag coefficient matrix: fixed, or computed from airspeed each evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum DragModel {
    /// Constant coefficient matrix (typically diagonal).
    Fixed(Matrix3<f64>),
    /// Isotropic `d(s) I3` with `s` the airspeed norm.
    Formula(DragExpForm),
}

impl Default for DragModel {
    fn default() -> Self {
        DragModel::Formula(DragExpForm::default())
    }
}

/// Vehicle parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Mass, kg.
    pub mass: f64,
    /// Gravitational acceleration, m/s^2.
    pub gravity: f64,
    pub drag: DragModel,
    /// Exploration switch: drag force acts on `v - v_w` instead of `v`.
    /// Off by default; `linearize` always reflects the default dynamics.
    pub drag_uses_airspeed: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gravity: GRAVITY,
            drag: DragModel::default(),
            drag_uses_airspeed: false,
        }
    }
}

/// Quadrotor state. Flattened order for matrices: `[p; q; v]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub p: Vector3<f64>,
    pub q: Vector4<f64>,
    pub v: Vector3<f64>,
}

impl State {
    pub fn new(p: Vector3<f64>, q: Vector4<f64>, v: Vector3<f64>) -> Self {
        Self { p, q, v }
    }

    /// Identity attitude at rest at `p`.
    pub fn at_rest(p: Vector3<f64>) -> Self {
        Self {
            p,
            q: Vector4::new(1.0, 0.0, 0.0, 0.0),
            v: Vector3::zeros(),
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.p);
        x.fixed_rows_mut::<4>(3).copy_from(&self.q);
        x.fixed_rows_mut::<3>(7).copy_from(&self.v);
        x
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            p: x.fixed_rows::<3>(0).into(),
            q: x.fixed_rows::<4>(3).into(),
            v: x.fixed_rows::<3>(7).into(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }
}

/// Control input. Flattened order: `[omega; f_c]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Input {
    /// Body angular rate, rad/s.
    pub omega: Vector3<f64>,
    /// Collective thrust, N.
    pub thrust: f64,
}

impl Input {
    pub fn new(omega: Vector3<f64>, thrust: f64) -> Self {
        Self { omega, thrust }
    }

    /// Hover input for a vehicle of mass `m`: zero rates, thrust `m g`.
    pub fn hover(params: &Params) -> Self {
        Self {
            omega: Vector3::zeros(),
            thrust: params.mass * params.gravity,
        }
    }

    pub fn to_vector(&self) -> InputVector {
        InputVector::new(self.omega.x, self.omega.y, self.omega.z, self.thrust)
    }

    pub fn from_vector(u: &InputVector) -> Self {
        Self {
            omega: Vector3::new(u[0], u[1], u[2]),
            thrust: u[3],
        }
    }
}

/// Linearization `(A, B, G, W)` at a nominal point. `G` injects turbulence
/// into the position rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: StateMatrix,
    pub b: InputMatrix,
    pub g: NoiseMatrix,
    pub w: Matrix3<f64>,
}

impl LinearModel {
    pub fn new(a: StateMatrix, b: InputMatrix, w: Matrix3<f64>) -> Self {
        Self {
            a,
            b,
            g: noise_injection(),
            w: (w + w.transpose()) * 0.5,
        }
    }
}

/// `G = [I3; 0]`: turbulence enters through the position kinematics.
pub fn noise_injection() -> NoiseMatrix {
    let mut g = NoiseMatrix::zeros();
    g.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&Matrix3::identity());
    g
}

fn quat_mul(a: &Vector4<f64>, b: &Vector4<f64>) -> Vector4<f64> {
    let av = Vector3::new(a[1], a[2], a[3]);
    let bv = Vector3::new(b[1], b[2], b[3]);
    let w = a[0] * b[0] - av.dot(&bv);
    let v = a[0] * bv + b[0] * av + av.cross(&bv);
    Vector4::new(w, v.x, v.y, v.z)
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Left-multiplication matrix: `q (x) p = Q(q) p`.
#[rustfmt::skip]
fn quat_left(q: &Vector4<f64>) -> Matrix4<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix4::new(
        w, -x, -y, -z,
        x,  w, -z,  y,
        y,  z,  w, -x,
        z, -y,  x,  w,
    )
}

/// Right-multiplication matrix: `q (x) p = Qbar(p) q`.
#[rustfmt::skip]
fn quat_right(p: &Vector4<f64>) -> Matrix4<f64> {
    let (w, x, y, z) = (p[0], p[1], p[2], p[3]);
    Matrix4::new(
        w, -x, -y, -z,
        x,  w,  z, -y,
        y, -z,  w,  x,
        z,  y, -x,  w,
    )
}

/// Rotation matrix of a unit quaternion, via the bottom-right 3x3 block of
/// `Qbar(q)^T Q(q)`.
fn rotation_from_unit(q: &Vector4<f64>) -> Matrix3<f64> {
    let prod = quat_right(q).transpose() * quat_left(q);
    prod.fixed_view::<3, 3>(1, 1).into()
}

/// Rotation matrix represented by `q` (normalized internally).
pub fn quat_to_rotation(q: &Vector4<f64>) -> Result<Matrix3<f64>, DynamicsError> {
    let n = q.norm();
    if n <= 1e-12 {
        return Err(DynamicsError::DegenerateQuaternion(n));
    }
    Ok(rotation_from_unit(&(q / n)))
}

/// Quaternion kinematics `q_dot = 1/2 q (x) [0; omega]`.
pub fn quat_derivative(q: &Vector4<f64>, omega: &Vector3<f64>) -> Vector4<f64> {
    let p = Vector4::new(0.0, omega.x, omega.y, omega.z);
    0.5 * quat_mul(q, &p)
}

/// Airspeed-dependent drag coefficient `d(||v_w - p_dot||) I3`.
pub fn drag_coefficient(
    v_w: &Vector3<f64>,
    p_dot: &Vector3<f64>,
    form: DragExpForm,
) -> Matrix3<f64> {
    let s = (v_w - p_dot).norm();
    Matrix3::identity() * form.coeff(s)
}

/// Drag force `||v|| R D R^T v`; exactly zero at zero velocity.
pub fn drag_force(
    q: &Vector4<f64>,
    v: &Vector3<f64>,
    d: &Matrix3<f64>,
) -> Result<Vector3<f64>, DynamicsError> {
    let r = quat_to_rotation(q)?;
    Ok(drag_force_with_rotation(&r, v, d))
}

fn drag_force_with_rotation(r: &Matrix3<f64>, v: &Vector3<f64>, d: &Matrix3<f64>) -> Vector3<f64> {
    let n = v.norm();
    if n == 0.0 {
        return Vector3::zeros();
    }
    n * (r * d * r.transpose() * v)
}

/// State derivative under wind `v_w`.
pub fn derivative(
    x: &State,
    u: &Input,
    v_w: &Vector3<f64>,
    params: &Params,
) -> Result<StateVector, DynamicsError> {
    let qn = x.q.norm();
    if qn <= 1e-12 {
        return Err(DynamicsError::DegenerateQuaternion(qn));
    }
    let q_u = x.q / qn;
    let r = rotation_from_unit(&q_u);

    let p_dot = x.v + v_w;
    let q_dot = quat_derivative(&q_u, &u.omega);

    let drag_vel = if params.drag_uses_airspeed {
        x.v - v_w
    } else {
        x.v
    };
    let d = match &params.drag {
        DragModel::Fixed(d) => *d,
        DragModel::Formula(form) => {
            let s = if params.drag_uses_airspeed {
                drag_vel.norm()
            } else {
                (v_w - p_dot).norm()
            };
            Matrix3::identity() * form.coeff(s)
        }
    };
    let f_d = drag_force_with_rotation(&r, &drag_vel, &d);

    let thrust = r * Vector3::new(0.0, 0.0, u.thrust);
    let v_dot = Vector3::new(0.0, 0.0, -params.gravity) + (thrust - f_d) / params.mass;

    let mut out = StateVector::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&p_dot);
    out.fixed_rows_mut::<4>(3).copy_from(&q_dot);
    out.fixed_rows_mut::<3>(7).copy_from(&v_dot);
    Ok(out)
}

/// One classical RK4 step with `v_w` held constant; the quaternion is
/// renormalized afterward.
pub fn step(
    x: &State,
    u: &Input,
    v_w: &Vector3<f64>,
    dt: f64,
    params: &Params,
) -> Result<State, DynamicsError> {
    assert!(dt > 0.0, "step requires dt > 0");
    let y0 = x.to_vector();
    let k1 = derivative(x, u, v_w, params)?;
    let k2 = derivative(&State::from_vector(&(y0 + 0.5 * dt * k1)), u, v_w, params)?;
    let k3 = derivative(&State::from_vector(&(y0 + 0.5 * dt * k2)), u, v_w, params)?;
    let k4 = derivative(&State::from_vector(&(y0 + dt * k3)), u, v_w, params)?;
    let y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    let mut next = State::from_vector(&y1);
    if !next.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    let qn = next.q.norm();
    if qn <= 1e-12 {
        return Err(DynamicsError::DegenerateQuaternion(qn));
    }
    next.q /= qn;
    Ok(next)
}

/// Jacobian of `R(q) a` with respect to `q`, using the homogeneous quadratic
/// extension `R(q) a = (w^2 - u.u) a + 2 (u.a) u + 2 w (u x a)`, evaluated at
/// a unit quaternion. Compose with the normalization factor for raw `q`.
fn rotate_jacobian(q: &Vector4<f64>, a: &Vector3<f64>) -> Matrix3x4<f64> {
    let w = q[0];
    let u = Vector3::new(q[1], q[2], q[3]);
    let col_w = 2.0 * w * a + 2.0 * u.cross(a);
    let block_u = -2.0 * a * u.transpose()
        + 2.0 * u * a.transpose()
        + 2.0 * u.dot(a) * Matrix3::identity()
        - 2.0 * w * skew(a);
    let mut j = Matrix3x4::zeros();
    j.set_column(0, &col_w);
    j.fixed_view_mut::<3, 3>(0, 1).copy_from(&block_u);
    j
}

/// Jacobian of `R(q)^T v` with respect to `q` (via the conjugate quaternion).
fn rotate_transpose_jacobian(q: &Vector4<f64>, v: &Vector3<f64>) -> Matrix3x4<f64> {
    let conj = Vector4::new(q[0], -q[1], -q[2], -q[3]);
    let mut j = rotate_jacobian(&conj, v);
    for c in 1..4 {
        let col = -j.column(c).clone_owned();
        j.set_column(c, &col);
    }
    j
}

/// Normalization correction `(I4 - q q^T / ||q||^2) / ||q||`.
fn normalization_jacobian(q: &Vector4<f64>) -> Matrix4<f64> {
    let n = q.norm();
    (Matrix4::identity() - q * q.transpose() / (n * n)) / n
}

/// Analytic `(A, B)` Jacobians of `derivative` at the nominal `(x_n, u_n)`.
///
/// The Jacobian is independent of the wind value: the mean wind enters the
/// dynamics only as an additive position-rate offset. Requires a nonzero
/// nominal velocity; the drag Jacobian contains `v v^T / ||v||`.
pub fn linearize(
    x_n: &State,
    u_n: &Input,
    params: &Params,
) -> Result<(StateMatrix, InputMatrix), DynamicsError> {
    let v = x_n.v;
    let v_norm = v.norm();
    if v_norm < 1e-8 {
        return Err(DynamicsError::SingularLinearization(v_norm));
    }
    let qn = x_n.q.norm();
    if qn <= 1e-12 {
        return Err(DynamicsError::DegenerateQuaternion(qn));
    }
    let q_u = x_n.q / qn;
    let n_corr = normalization_jacobian(&x_n.q);
    let r = rotation_from_unit(&q_u);
    let m = params.mass;

    let mut a = StateMatrix::zeros();

    // dp_dot/dv = I3.
    a.fixed_view_mut::<3, 3>(0, 7)
        .copy_from(&Matrix3::identity());

    // dq_dot/dq = 1/2 Qbar([0; omega]) N(q).
    let omega_quat = Vector4::new(0.0, u_n.omega.x, u_n.omega.y, u_n.omega.z);
    let dqdot_dq = 0.5 * quat_right(&omega_quat) * n_corr;
    a.fixed_view_mut::<4, 4>(3, 3).copy_from(&dqdot_dq);

    // dv_dot/dq: thrust rotation, plus drag orientation dependence when the
    // coefficient matrix is not isotropic.
    let e3 = Vector3::new(0.0, 0.0, 1.0);
    let mut dvdot_dq = (u_n.thrust / m) * rotate_jacobian(&q_u, &e3);
    if let DragModel::Fixed(d) = &params.drag {
        let body_vel = r.transpose() * v;
        let j_drag = rotate_jacobian(&q_u, &(d * body_vel))
            + r * d * rotate_transpose_jacobian(&q_u, &v);
        dvdot_dq -= (v_norm / m) * j_drag;
    }
    a.fixed_view_mut::<3, 4>(7, 3).copy_from(&(dvdot_dq * n_corr));

    // dv_dot/dv = -(1/m) d f_D / dv.
    let dfd_dv = match &params.drag {
        DragModel::Fixed(d) => {
            r * d * r.transpose() * (v_norm * Matrix3::identity() + v * v.transpose() / v_norm)
        }
        DragModel::Formula(form) => {
            // f_D = d(s) s v with s = ||v||; R drops out for isotropic D.
            let (d, d_slope) = form.coeff_and_slope(v_norm);
            let phi = d * v_norm;
            let phi_slope = d + v_norm * d_slope;
            phi * Matrix3::identity() + (phi_slope / v_norm) * (v * v.transpose())
        }
    };
    a.fixed_view_mut::<3, 3>(7, 7).copy_from(&(-dfd_dv / m));

    let mut b = InputMatrix::zeros();

    // dq_dot/domega = 1/2 [-u^T; w I3 + skew(u)] at the unit quaternion.
    let w = q_u[0];
    let u_vec = Vector3::new(q_u[1], q_u[2], q_u[3]);
    let mut dqdot_domega = nalgebra::Matrix4x3::zeros();
    dqdot_domega
        .fixed_view_mut::<1, 3>(0, 0)
        .copy_from(&(-u_vec.transpose()));
    dqdot_domega
        .fixed_view_mut::<3, 3>(1, 0)
        .copy_from(&(w * Matrix3::identity() + skew(&u_vec)));
    b.fixed_view_mut::<4, 3>(3, 0)
        .copy_from(&(0.5 * dqdot_domega));

    // dv_dot/df_c = (1/m) R e3.
    let thrust_dir = r * e3 / m;
    b.fixed_view_mut::<3, 1>(7, 3).copy_from(&thrust_dir);

    Ok((a, b))
}
