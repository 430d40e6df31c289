//! Newton–Euler rigid-body simulation with semi-implicit Euler integration.
//!
//! Each free object is one 6-DOF body. The velocity update uses
//! `v̇ = f/m` and `ω̇ = I⁻¹(τ − ω × Iω)` (force in the world frame, torque
//! and angular velocity in the body frame), then the pose integrates with
//! the *new* velocities. Ground contact is a penalty spring-damper on the
//! body origin against the plane `y = ground_height`, with kinetic Coulomb
//! friction and a small velocity-threshold stiction band.

use crate::geometry::{check_spd, GeometryError, Pose};
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("inertia tensor is singular or badly conditioned: {reason}")]
    SingularInertia { reason: String },
    #[error("invalid rigid state: {reason}")]
    InvalidState { reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// State of one rigid body. Angular velocity and inertia live in the body
/// frame; linear velocity in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidState {
    pub pose: Pose,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    pub label: u32,
}

impl RigidState {
    pub fn at_rest(pose: Pose, mass: f64, inertia: Matrix3<f64>, label: u32) -> Self {
        RigidState {
            pose,
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            mass,
            inertia,
            label,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.mass > 0.0) {
            return Err(DynamicsError::InvalidState {
                reason: format!("mass {} must be positive", self.mass),
            });
        }
        check_spd(&self.inertia).map_err(|e| DynamicsError::InvalidState {
            reason: format!("inertia: {e}"),
        })?;
        Ok(())
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * self.linear_velocity.norm_squared()
            + 0.5 * self.angular_velocity.dot(&(self.inertia * self.angular_velocity))
    }
}

/// External load: force in the world frame, torque in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub fn zero() -> Self {
        Wrench::default()
    }
}

/// Penalty ground-contact parameters for the plane `y = ground_height`
/// (y-up world). `linear_damping` is a bulk velocity drag in 1/s applied to
/// every body while contact is enabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactParams {
    pub ground_height: f64,
    pub stiffness: f64,
    pub damping_contact: f64,
    pub friction_mu: f64,
    pub linear_damping: f64,
}

impl ContactParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.stiffness > 0.0) {
            return Err(DynamicsError::InvalidState {
                reason: format!("contact stiffness {} must be positive", self.stiffness),
            });
        }
        for (name, v) in [
            ("damping_contact", self.damping_contact),
            ("friction_mu", self.friction_mu),
            ("linear_damping", self.linear_damping),
        ] {
            if v < 0.0 {
                return Err(DynamicsError::InvalidState {
                    reason: format!("{name} = {v} must be non-negative"),
                });
            }
        }
        Ok(())
    }
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            ground_height: 0.0,
            stiffness: 1e4,
            damping_contact: 100.0,
            friction_mu: 0.5,
            linear_damping: 0.0,
        }
    }
}

/// Tangential speeds below this are treated as sticking and zeroed.
pub const STICTION_SPEED: f64 = 1e-4;

/// World-level simulation inputs: gravity and (optionally) the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    pub gravity: Vector3<f64>,
    pub contact: Option<ContactParams>,
}

impl Environment {
    pub fn free_space() -> Self {
        Environment {
            gravity: Vector3::zeros(),
            contact: None,
        }
    }

    pub fn earth_gravity() -> Self {
        Environment {
            gravity: Vector3::new(0.0, -9.81, 0.0),
            contact: None,
        }
    }

    pub fn with_contact(mut self, contact: ContactParams) -> Self {
        self.contact = Some(contact);
        self
    }
}

/// Body-frame accelerations from the Newton–Euler equations:
/// `v̇ = f/m`, `ω̇ = I⁻¹(τ − ω × Iω)`.
pub fn newton_euler_accel(
    state: &RigidState,
    wrench: &Wrench,
) -> Result<(Vector3<f64>, Vector3<f64>), DynamicsError> {
    let v_dot = wrench.force / state.mass;
    let eigs = state.inertia.symmetric_eigenvalues();
    let (min_e, max_e) = (eigs.min(), eigs.max());
    if !(min_e > 0.0) || max_e / min_e > 1e12 {
        return Err(DynamicsError::SingularInertia {
            reason: format!("eigenvalue range [{min_e:.3e}, {max_e:.3e}]"),
        });
    }
    let gyroscopic = state
        .angular_velocity
        .cross(&(state.inertia * state.angular_velocity));
    let w_dot = state
        .inertia
        .cholesky()
        .ok_or_else(|| DynamicsError::SingularInertia {
            reason: "Cholesky factorization failed".into(),
        })?
        .solve(&(wrench.torque - gyroscopic));
    Ok((v_dot, w_dot))
}

/// Contact force on the body origin from the penalty ground model, in the
/// world frame. Zero when the origin is above the plane.
fn contact_force(state: &RigidState, contact: &ContactParams) -> Vector3<f64> {
    let penetration = contact.ground_height - state.pose.translation.y;
    if penetration <= 0.0 {
        return Vector3::zeros();
    }
    let v = state.linear_velocity;
    let mut normal_force = contact.stiffness * penetration - contact.damping_contact * v.y;
    if normal_force < 0.0 {
        normal_force = 0.0;
    }
    let mut force = Vector3::new(0.0, normal_force, 0.0);
    let tangential = Vector3::new(v.x, 0.0, v.z);
    let speed = tangential.norm();
    if speed >= STICTION_SPEED && contact.friction_mu > 0.0 {
        force -= tangential * (contact.friction_mu * normal_force / speed);
    }
    force
}

/// One semi-implicit Euler step: velocities update from the accelerations at
/// the current state, then the pose integrates with the new velocities. The
/// rotation update is the exponential map of `ω·dt` followed by
/// re-orthonormalization.
pub fn step_semi_implicit(
    state: &RigidState,
    wrench: &Wrench,
    env: &Environment,
    dt: f64,
) -> Result<RigidState, DynamicsError> {
    let mut total = Wrench {
        force: wrench.force + env.gravity * state.mass,
        torque: wrench.torque,
    };
    let mut sticking = false;
    if let Some(contact) = &env.contact {
        total.force += contact_force(state, contact);
        total.force -= state.linear_velocity * (contact.linear_damping * state.mass);
        let penetrating = state.pose.translation.y < contact.ground_height;
        let tangential_speed =
            Vector3::new(state.linear_velocity.x, 0.0, state.linear_velocity.z).norm();
        sticking = penetrating && tangential_speed > 0.0 && tangential_speed < STICTION_SPEED;
    }

    let (v_dot, w_dot) = newton_euler_accel(state, &total)?;

    let mut next = state.clone();
    next.linear_velocity += v_dot * dt;
    next.angular_velocity += w_dot * dt;
    if sticking {
        next.linear_velocity.x = 0.0;
        next.linear_velocity.z = 0.0;
    }

    next.pose.translation += next.linear_velocity * dt;
    let w = next.angular_velocity;
    let angle = w.norm() * dt;
    if angle > 0.0 {
        let axis = nalgebra::Unit::new_normalize(w);
        let dr = nalgebra::Rotation3::from_axis_angle(&axis, angle).into_inner();
        // Body-frame angular velocity composes on the right.
        next.pose.rotation *= dr;
        next.pose = next.pose.orthonormalized();
    }
    Ok(next)
}

/// Pose track of one body over a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTrack {
    pub label: u32,
    pub samples: Vec<(f64, Pose)>,
}

/// Runs every body forward `n_steps` of `dt`, sampling the pose at every
/// step (the initial pose is sample 0). `wrench_schedule` is queried as
/// `(time, label)` at the start of each step.
pub fn simulate<F>(
    initial: &[RigidState],
    wrench_schedule: F,
    env: &Environment,
    dt: f64,
    n_steps: usize,
) -> Result<Vec<RigidTrack>, DynamicsError>
where
    F: Fn(f64, u32) -> Wrench,
{
    assert!(dt > 0.0, "dt must be positive");
    assert!(n_steps >= 1, "n_steps must be at least 1");
    let mut tracks: Vec<RigidTrack> = initial
        .iter()
        .map(|s| RigidTrack {
            label: s.label,
            samples: vec![(0.0, s.pose)],
        })
        .collect();
    let mut states: Vec<RigidState> = initial.to_vec();
    for step in 0..n_steps {
        let t = step as f64 * dt;
        for (state, track) in states.iter_mut().zip(&mut tracks) {
            let w = wrench_schedule(t, state.label);
            *state = step_semi_implicit(state, &w, env, dt)?;
            track.samples.push(((step + 1) as f64 * dt, state.pose));
        }
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_body() -> RigidState {
        RigidState::at_rest(Pose::identity(), 1.0, Matrix3::identity(), 0)
    }

    #[test]
    fn equilibrium_has_zero_acceleration() {
        let (v_dot, w_dot) = newton_euler_accel(&unit_body(), &Wrench::zero()).unwrap();
        assert_eq!(v_dot, Vector3::zeros());
        assert_eq!(w_dot, Vector3::zeros());
    }

    #[test]
    fn force_divides_by_mass() {
        let mut body = unit_body();
        body.mass = 2.0;
        let wrench = Wrench {
            force: Vector3::new(0.0, 0.0, -19.62),
            torque: Vector3::zeros(),
        };
        let (v_dot, w_dot) = newton_euler_accel(&body, &wrench).unwrap();
        assert_relative_eq!(v_dot.z, -9.81, epsilon = 1e-12);
        assert_eq!(w_dot, Vector3::zeros());
    }

    #[test]
    fn gyroscopic_term_hand_computed() {
        // I = diag(1,2,3), ω = (1,1,1): ω × Iω = (1,1,1) × (1,2,3) = (1,−2,1),
        // so ω̇ = I⁻¹·(−1,2,−1) = (−1, 1, −1/3).
        let mut body = unit_body();
        body.inertia = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        body.angular_velocity = Vector3::new(1.0, 1.0, 1.0);
        let (_, w_dot) = newton_euler_accel(&body, &Wrench::zero()).unwrap();
        assert_relative_eq!(w_dot.x, -1.0, epsilon = 1e-12);
        assert_relative_eq!(w_dot.y, 1.0, epsilon = 1e-12);
        assert_relative_eq!(w_dot.z, -1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_inertia_rejected() {
        let mut body = unit_body();
        body.inertia = Matrix3::from_diagonal(&Vector3::new(1.0, 1e-14, 1.0));
        assert!(matches!(
            newton_euler_accel(&body, &Wrench::zero()),
            Err(DynamicsError::SingularInertia { .. })
        ));
    }

    #[test]
    fn free_drift_advances_position_only() {
        let mut body = unit_body();
        body.linear_velocity = Vector3::new(1.0, 0.0, 0.0);
        let next =
            step_semi_implicit(&body, &Wrench::zero(), &Environment::free_space(), 0.1).unwrap();
        assert_eq!(next.linear_velocity, Vector3::new(1.0, 0.0, 0.0));
        assert!((next.pose.translation - Vector3::new(0.1, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn gravity_closed_form_drop() {
        // Semi-implicit: v_k = −g·k·dt, y_k = Σ v_j·dt = −g·dt²·k(k+1)/2.
        let env = Environment::earth_gravity();
        let mut body = unit_body();
        for _ in 0..10 {
            body = step_semi_implicit(&body, &Wrench::zero(), &env, 0.1).unwrap();
        }
        assert_relative_eq!(body.linear_velocity.y, -9.81, epsilon = 1e-12);
        assert_relative_eq!(body.pose.translation.y, -9.81 * 0.01 * 55.0, epsilon = 1e-12);
    }

    #[test]
    fn torque_free_tumbling_conserves_energy() {
        let mut body = unit_body();
        body.inertia = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        body.angular_velocity = Vector3::new(1.0, 1.0, 1.0);
        let e0 = body.kinetic_energy();
        assert_relative_eq!(e0, 3.0, epsilon = 1e-12);
        let env = Environment::free_space();
        for _ in 0..10_000 {
            body = step_semi_implicit(&body, &Wrench::zero(), &env, 1e-4).unwrap();
        }
        let drift = (body.kinetic_energy() - e0).abs() / e0;
        assert!(drift < 0.01, "energy drift {drift:.4}");
        assert!(body.pose.rotation_error() < 1e-9);
    }

    #[test]
    fn linear_momentum_exactly_conserved_without_forces() {
        let mut body = unit_body();
        body.mass = 2.5;
        body.linear_velocity = Vector3::new(0.3, -0.1, 0.7);
        let v0 = body.linear_velocity;
        let env = Environment::free_space();
        for _ in 0..1000 {
            body = step_semi_implicit(&body, &Wrench::zero(), &env, 1e-3).unwrap();
        }
        // Bitwise: acceleration is exactly zero, so v is never touched.
        assert_eq!(body.linear_velocity, v0);
    }

    #[test]
    fn statics_with_zero_wrench_and_no_gravity() {
        let bodies = vec![unit_body()];
        let tracks = simulate(
            &bodies,
            |_, _| Wrench::zero(),
            &Environment::free_space(),
            0.01,
            100,
        )
        .unwrap();
        for (_, pose) in &tracks[0].samples {
            assert_eq!(pose.translation, Vector3::zeros());
        }
    }

    #[test]
    fn resting_box_settles_at_penalty_equilibrium() {
        let contact = ContactParams {
            ground_height: 0.0,
            stiffness: 1e4,
            damping_contact: 2.0 * (1e4f64).sqrt(),
            friction_mu: 0.5,
            linear_damping: 0.0,
        };
        let env = Environment::earth_gravity().with_contact(contact);
        let mut body = unit_body();
        body.pose.translation.y = 0.0;
        for _ in 0..20_000 {
            body = step_semi_implicit(&body, &Wrench::zero(), &env, 1e-4).unwrap();
        }
        let bound = body.mass * 9.81 / contact.stiffness + 1e-6;
        // Settled: penetration stays within the static-equilibrium bound.
        for _ in 0..5_000 {
            body = step_semi_implicit(&body, &Wrench::zero(), &env, 1e-4).unwrap();
            let penetration = (contact.ground_height - body.pose.translation.y).max(0.0);
            assert!(penetration <= bound, "penetration {penetration} > {bound}");
        }
    }

    #[test]
    fn coulomb_slide_stop_time_matches_closed_form() {
        let contact = ContactParams {
            ground_height: 0.0,
            stiffness: 1e4,
            damping_contact: 0.0,
            friction_mu: 0.3,
            linear_damping: 0.0,
        };
        let env = Environment::earth_gravity().with_contact(contact);
        let mut body = unit_body();
        // Start at static penetration equilibrium so N = m·g from step one.
        body.pose.translation.y = -body.mass * 9.81 / contact.stiffness;
        body.linear_velocity = Vector3::new(1.0, 0.0, 0.0);
        let dt = 1e-4;
        let mut stop_time = None;
        for step in 0..10_000 {
            body = step_semi_implicit(&body, &Wrench::zero(), &env, dt).unwrap();
            if body.linear_velocity.x == 0.0 {
                stop_time = Some((step + 1) as f64 * dt);
                break;
            }
        }
        let expected = 1.0 / (0.3 * 9.81);
        let stop = stop_time.expect("box never stopped");
        assert!(
            (stop - expected).abs() / expected < 0.05,
            "stop {stop:.4} vs closed form {expected:.4}"
        );
    }

    #[test]
    fn simulate_is_deterministic() {
        let mut body = unit_body();
        body.angular_velocity = Vector3::new(0.4, -0.2, 0.9);
        body.inertia = Matrix3::from_diagonal(&Vector3::new(0.2, 0.5, 0.4));
        let env = Environment::earth_gravity().with_contact(ContactParams::default());
        let run = || {
            simulate(
                &[body.clone()],
                |t, _| Wrench {
                    force: Vector3::new(0.1 * t.sin(), 0.0, 0.0),
                    torque: Vector3::zeros(),
                },
                &env,
                1e-3,
                500,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }
}
