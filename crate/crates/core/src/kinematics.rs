//! MDH serial-chain forward kinematics and discrete time-stamped point
//! transforms.
//!
//! Each link is described by the modified Denavit–Hartenberg parameters
//! `(a, α, d, θ)`; the per-link transform is
//!
//! ```text
//! ⎡ cosθ        −sinθ         0      a      ⎤
//! ⎢ sinθ·cosα    cosθ·cosα   −sinα  −sinα·d ⎥
//! ⎢ sinθ·sinα    cosθ·sinα    cosα   cosα·d ⎥
//! ⎣ 0            0            0      1      ⎦
//! ```
//!
//! and the pose of link `i` is `base ∘ T₁ ∘ … ∘ Tᵢ`. Timestamps of a
//! trajectory are independent snapshots in a common world frame, so the
//! motion of a link from time 0 to time t is `T_t ∘ T₀⁻¹`, ready to feed
//! [`crate::binding::apply_instance_transform`].

use crate::geometry::Pose;
use nalgebra::{Matrix4, Vector3, Vector6};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("joint vector has {got} entries but the chain has {expected} revolute links")]
    ArityMismatch { got: usize, expected: usize },
    #[error("inverse kinematics did not converge within {max_iters} iterations (residual {residual:.3e})")]
    IkNoConvergence { max_iters: usize, residual: f64 },
    #[error("invalid chain: {reason}")]
    InvalidChain { reason: String },
    #[error("invalid trajectory: {reason}")]
    InvalidTrajectory { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointType {
    Revolute,
    Fixed,
}

/// One MDH link: `a` (m), `alpha` (rad), `d` (m), `theta_offset` (rad), the
/// joint type, and the instance label of the mesh/Gaussians riding on it.
#[derive(Debug, Clone, PartialEq)]
pub struct MdhLink {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
    pub joint: JointType,
    pub label: u32,
}

impl MdhLink {
    pub fn revolute(a: f64, alpha: f64, d: f64, theta_offset: f64, label: u32) -> Self {
        MdhLink {
            a,
            alpha,
            d,
            theta_offset,
            joint: JointType::Revolute,
            label,
        }
    }

    pub fn fixed(a: f64, alpha: f64, d: f64, theta_offset: f64, label: u32) -> Self {
        MdhLink {
            a,
            alpha,
            d,
            theta_offset,
            joint: JointType::Fixed,
            label,
        }
    }
}

/// Serial chain: world pose of the base frame plus ordered links.
#[derive(Debug, Clone, PartialEq)]
pub struct MdhChain {
    pub base_pose: Pose,
    pub links: Vec<MdhLink>,
}

impl MdhChain {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        if self.links.is_empty() {
            return Err(KinematicsError::InvalidChain {
                reason: "chain has no links".into(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for link in &self.links {
            if !seen.insert(link.label) {
                return Err(KinematicsError::InvalidChain {
                    reason: format!("duplicate link label {}", link.label),
                });
            }
        }
        Ok(())
    }

    pub fn revolute_count(&self) -> usize {
        self.links
            .iter()
            .filter(|l| l.joint == JointType::Revolute)
            .count()
    }

    /// Labels of all links, in chain order.
    pub fn labels(&self) -> Vec<u32> {
        self.links.iter().map(|l| l.label).collect()
    }
}

/// Joint-space trajectory: one row of revolute joint angles per timestamp.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointTrajectory {
    pub timestamps: Vec<f64>,
    pub joint_angles: Vec<Vec<f64>>,
}

impl JointTrajectory {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        if self.timestamps.len() != self.joint_angles.len() {
            return Err(KinematicsError::InvalidTrajectory {
                reason: format!(
                    "{} timestamps but {} joint rows",
                    self.timestamps.len(),
                    self.joint_angles.len()
                ),
            });
        }
        for w in self.timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(KinematicsError::InvalidTrajectory {
                    reason: format!("timestamps not strictly increasing at t = {}", w[1]),
                });
            }
        }
        if let Some(first) = self.joint_angles.first() {
            let arity = first.len();
            for (i, row) in self.joint_angles.iter().enumerate() {
                if row.len() != arity {
                    return Err(KinematicsError::InvalidTrajectory {
                        reason: format!("row {i} has {} angles, expected {arity}", row.len()),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// The MDH per-link transform with `θ = theta + theta_offset`. For fixed
/// joints callers pass `theta = 0`.
pub fn link_transform(link: &MdhLink, theta: f64) -> Matrix4<f64> {
    let th = theta + link.theta_offset;
    let (st, ct) = th.sin_cos();
    let (sa, ca) = link.alpha.sin_cos();
    let mut m = Matrix4::identity();
    m[(0, 0)] = ct;
    m[(0, 1)] = -st;
    m[(0, 2)] = 0.0;
    m[(0, 3)] = link.a;
    m[(1, 0)] = st * ca;
    m[(1, 1)] = ct * ca;
    m[(1, 2)] = -sa;
    m[(1, 3)] = -sa * link.d;
    m[(2, 0)] = st * sa;
    m[(2, 1)] = ct * sa;
    m[(2, 2)] = ca;
    m[(2, 3)] = ca * link.d;
    m
}

/// World pose of every link for the joint vector `q` (one entry per revolute
/// link, consumed in chain order).
pub fn forward_kinematics(chain: &MdhChain, q: &[f64]) -> Result<Vec<Pose>, KinematicsError> {
    let expected = chain.revolute_count();
    if q.len() != expected {
        return Err(KinematicsError::ArityMismatch {
            got: q.len(),
            expected,
        });
    }
    let mut poses = Vec::with_capacity(chain.links.len());
    let mut accum = chain.base_pose.to_homogeneous();
    let mut qi = 0usize;
    for link in &chain.links {
        let theta = match link.joint {
            JointType::Revolute => {
                let v = q[qi];
                qi += 1;
                v
            }
            JointType::Fixed => 0.0,
        };
        accum *= link_transform(link, theta);
        poses.push(Pose::from_homogeneous(&accum));
    }
    Ok(poses)
}

/// Expresses a point observed in the world at time 0 in the link's own frame:
/// `T₀⁻¹ · p₀`.
pub fn point_to_base(t_0: &Pose, p0: &Vector3<f64>) -> Vector3<f64> {
    t_0.inverse().apply(p0)
}

/// Carries a link-frame point to its world position at time t: `T_t · p`.
pub fn point_at_time(t_t: &Pose, p_base: &Vector3<f64>) -> Vector3<f64> {
    t_t.apply(p_base)
}

/// Rigid motion of a link between two snapshots: `T_t ∘ T₀⁻¹`. Feeding it to
/// [`crate::binding::apply_instance_transform`] moves the link's assets from
/// their time-0 placement to time t.
pub fn relative_link_motion(t_0: &Pose, t_t: &Pose) -> Pose {
    t_t.compose(&t_0.inverse())
}

/// Damped least-squares IK on a numerically differentiated Jacobian.
/// Convergence requires both position error < `tol` (m) and geodesic
/// orientation error < `tol` (rad) at the end link.
pub fn solve_ik(
    chain: &MdhChain,
    target: &Pose,
    q_seed: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>, KinematicsError> {
    const FD_STEP: f64 = 1e-6;
    const DAMPING: f64 = 1e-3;

    let n = chain.revolute_count();
    if n == 0 {
        return Err(KinematicsError::InvalidChain {
            reason: "inverse kinematics needs at least one revolute link".into(),
        });
    }
    if q_seed.len() != n {
        return Err(KinematicsError::ArityMismatch {
            got: q_seed.len(),
            expected: n,
        });
    }

    let end_pose = |q: &[f64]| -> Result<Pose, KinematicsError> {
        Ok(*forward_kinematics(chain, q)?.last().expect("non-empty chain"))
    };
    let error_vec = |pose: &Pose| -> Vector6<f64> {
        let dp = target.translation - pose.translation;
        let dr = rotation_log(&(target.rotation * pose.rotation.transpose()));
        Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
    };

    let mut q = q_seed.to_vec();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let pose = end_pose(&q)?;
        let err = error_vec(&pose);
        let pos_err = err.fixed_rows::<3>(0).norm();
        let rot_err = err.fixed_rows::<3>(3).norm();
        residual = pos_err.max(rot_err);
        if pos_err < tol && rot_err < tol {
            return Ok(q);
        }

        // Finite-difference Jacobian of the 6-D pose error.
        let mut jac = nalgebra::DMatrix::<f64>::zeros(6, n);
        for j in 0..n {
            let mut qp = q.clone();
            qp[j] += FD_STEP;
            let perturbed = end_pose(&qp)?;
            let col = (error_vec(&pose) - error_vec(&perturbed)) / FD_STEP;
            jac.set_column(j, &nalgebra::DVector::from_column_slice(col.as_slice()));
        }

        // dq = Jᵀ (J Jᵀ + λ² I)⁻¹ e
        let jjt = &jac * jac.transpose()
            + nalgebra::DMatrix::<f64>::identity(6, 6) * (DAMPING * DAMPING);
        let rhs = nalgebra::DVector::from_column_slice(err.as_slice());
        let y = jjt
            .lu()
            .solve(&rhs)
            .ok_or(KinematicsError::IkNoConvergence {
                max_iters,
                residual,
            })?;
        let dq = jac.transpose() * y;
        for (qi, dqi) in q.iter_mut().zip(dq.iter()) {
            *qi += dqi;
        }
    }
    Err(KinematicsError::IkNoConvergence {
        max_iters,
        residual,
    })
}

/// Axis-angle vector of a rotation matrix (the SO(3) logarithm).
fn rotation_log(r: &nalgebra::Matrix3<f64>) -> Vector3<f64> {
    let trace = r.trace();
    let cos_angle = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = cos_angle.acos();
    if angle < 1e-12 {
        return Vector3::zeros();
    }
    let axis = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if axis.norm() < 1e-12 {
        // Angle near π: recover the axis from the diagonal.
        let diag = Vector3::new(r[(0, 0)], r[(1, 1)], r[(2, 2)]);
        let k = diag.imax();
        let mut ax = Vector3::zeros();
        ax[k] = ((diag[k] + 1.0) / 2.0).max(0.0).sqrt();
        if ax[k] > 1e-12 {
            for i in 0..3 {
                if i != k {
                    ax[i] = (r[(i, k)] + r[(k, i)]) / (4.0 * ax[k]);
                }
            }
        }
        return ax.normalize() * angle;
    }
    axis.normalize() * angle
}
