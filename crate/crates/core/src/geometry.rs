//! Foundational geometric types: rigid poses, Gaussian and surfel primitives,
//! pinhole cameras, and the small set of operations everything else builds on.
//!
//! Conventions: the world frame is right-handed y-up, rotations are stored as
//! 3×3 orthonormal matrices (quaternions are converted at I/O boundaries),
//! and all lengths are meters.

use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector2, Vector3};
use thiserror::Error;

/// Shared numeric tolerances.
pub mod tol {
    /// Orthonormality and symmetry checks.
    pub const ORTHO: f64 = 1e-9;
    /// Smallest admissible eigenvalue for an SPD matrix.
    pub const SPD_EIG_MIN: f64 = 1e-12;
    /// Minimum camera-frame depth for point projection.
    pub const PROJECT_NEAR: f64 = 1e-9;
    /// Near plane when projecting whole Gaussians to screen space.
    pub const SPLAT_NEAR: f64 = 1e-3;
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point is behind the camera (camera-frame z = {z:.6e})")]
    PointBehindCamera { z: f64 },
    #[error("matrix is not symmetric positive-definite: {reason}")]
    NotSpd { reason: String },
    #[error("matrix is not a rotation: {reason}")]
    NotRotation { reason: String },
    #[error("invalid camera: {reason}")]
    InvalidCamera { reason: String },
    #[error("invalid primitive: {reason}")]
    InvalidPrimitive { reason: String },
}

/// Rigid transform: `x ↦ R·x + t` with `R` orthonormal and `det R = +1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose after checking that `rotation` is orthonormal with
    /// determinant +1 (within [`tol::ORTHO`]).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        check_rotation(&rotation)?;
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn from_quaternion(quat: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: quat.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    pub fn to_quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about `axis` by `angle` radians, zero translation.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let rotation = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(*axis),
            angle,
        )
        .into_inner();
        Pose {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotates a direction without translating it.
    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Extracts the rigid part of a homogeneous matrix. The rotation block is
    /// taken as-is; callers that cannot guarantee orthonormality should
    /// validate or re-orthonormalize afterwards.
    pub fn from_homogeneous(m: &Matrix4<f64>) -> Pose {
        Pose {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    /// Projects the rotation block back onto SO(3) via polar decomposition.
    /// Keeps long integration runs from accumulating determinant drift.
    pub fn orthonormalized(&self) -> Pose {
        let svd = self.rotation.svd(true, true);
        let u = svd.u.expect("svd requested u");
        let v_t = svd.v_t.expect("svd requested v_t");
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            // Flip the axis of least significance to stay in SO(3).
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Pose {
            rotation: r,
            translation: self.translation,
        }
    }

    pub fn rotation_error(&self) -> f64 {
        let gram = self.rotation.transpose() * self.rotation;
        let mut err = (gram - Matrix3::identity()).abs().max();
        err = err.max((self.rotation.determinant() - 1.0).abs());
        err
    }
}

pub fn check_rotation(r: &Matrix3<f64>) -> Result<(), GeometryError> {
    let gram_err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if gram_err > tol::ORTHO {
        return Err(GeometryError::NotRotation {
            reason: format!("RᵀR deviates from identity by {gram_err:.3e}"),
        });
    }
    let det_err = (r.determinant() - 1.0).abs();
    if det_err > tol::ORTHO {
        return Err(GeometryError::NotRotation {
            reason: format!("det(R) = {:.12}, expected +1", r.determinant()),
        });
    }
    Ok(())
}

/// Checks symmetry within [`tol::ORTHO`] and that the smallest eigenvalue
/// exceeds [`tol::SPD_EIG_MIN`]. Borderline matrices are rejected, not
/// repaired.
pub fn check_spd(c: &Matrix3<f64>) -> Result<(), GeometryError> {
    let sym_err = (c - c.transpose()).abs().max();
    if sym_err > tol::ORTHO {
        return Err(GeometryError::NotSpd {
            reason: format!("asymmetry {sym_err:.3e} exceeds {:.1e}", tol::ORTHO),
        });
    }
    let eigs = c.symmetric_eigenvalues();
    let min_eig = eigs.min();
    if !(min_eig > tol::SPD_EIG_MIN) {
        return Err(GeometryError::NotSpd {
            reason: format!("smallest eigenvalue {min_eig:.3e} ≤ {:.1e}", tol::SPD_EIG_MIN),
        });
    }
    Ok(())
}

/// 3D Gaussian primitive: center, opacity, full covariance, SH radiance
/// coefficients, and the instance label of the movable part it belongs to.
///
/// `sh` is coefficient-major: `sh[i]` is the RGB triple for basis function
/// `i`, so a degree-`L` primitive carries `(L+1)²` entries. `orientation`
/// accumulates the rigid rotation applied to the instance since load; radiance
/// queries evaluate the SH at the view direction rotated back by it, which
/// keeps appearance attached to the moving part.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub center: Vector3<f64>,
    pub opacity: f64,
    pub covariance: Matrix3<f64>,
    pub sh: Vec<[f64; 3]>,
    pub label: u32,
    pub orientation: Matrix3<f64>,
}

impl GaussianPrimitive {
    pub fn new(
        center: Vector3<f64>,
        opacity: f64,
        covariance: Matrix3<f64>,
        sh: Vec<[f64; 3]>,
        label: u32,
    ) -> Self {
        GaussianPrimitive {
            center,
            opacity,
            covariance,
            sh,
            label,
            orientation: Matrix3::identity(),
        }
    }

    /// SH degree implied by the coefficient count.
    pub fn sh_degree(&self) -> usize {
        degree_for_coeff_count(self.sh.len()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(GeometryError::InvalidPrimitive {
                reason: format!("opacity {} outside [0, 1]", self.opacity),
            });
        }
        check_spd(&self.covariance)?;
        if degree_for_coeff_count(self.sh.len()).is_none() {
            return Err(GeometryError::InvalidPrimitive {
                reason: format!(
                    "sh coefficient count {} is not (L+1)² for any degree L",
                    self.sh.len()
                ),
            });
        }
        check_rotation(&self.orientation)?;
        Ok(())
    }
}

/// Degree `L` such that `count = (L+1)²`, if one exists.
pub fn degree_for_coeff_count(count: usize) -> Option<usize> {
    let mut l = 0usize;
    loop {
        let n = (l + 1) * (l + 1);
        if n == count {
            return Some(l);
        }
        if n > count {
            return None;
        }
        l += 1;
    }
}

/// Planar (2D) Gaussian: a unit-weight kernel on the local tangent frame
/// `(t_u, t_v)` with scales `(s_u, s_v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfelPrimitive {
    pub center: Vector3<f64>,
    pub t_u: Vector3<f64>,
    pub t_v: Vector3<f64>,
    pub s_u: f64,
    pub s_v: f64,
    pub opacity: f64,
    pub sh: Vec<[f64; 3]>,
    pub label: u32,
    pub orientation: Matrix3<f64>,
}

impl SurfelPrimitive {
    pub fn new(
        center: Vector3<f64>,
        t_u: Vector3<f64>,
        t_v: Vector3<f64>,
        s_u: f64,
        s_v: f64,
        opacity: f64,
        sh: Vec<[f64; 3]>,
        label: u32,
    ) -> Self {
        SurfelPrimitive {
            center,
            t_u,
            t_v,
            s_u,
            s_v,
            opacity,
            sh,
            label,
            orientation: Matrix3::identity(),
        }
    }

    /// Surfel normal `t_u × t_v` (unit for a valid surfel).
    pub fn normal(&self) -> Vector3<f64> {
        self.t_u.cross(&self.t_v)
    }

    /// Maps tangent-plane coordinates to the world point
    /// `x_p + s_u·t_u·u + s_v·t_v·v`.
    pub fn point_at(&self, u: f64, v: f64) -> Vector3<f64> {
        self.center + self.t_u * (self.s_u * u) + self.t_v * (self.s_v * v)
    }

    /// Homogeneous matrix form of the surfel geometry: columns
    /// `[s_u·t_u, s_v·t_v, 0, x_p]`. Applying it to `(u, v, 1)` reproduces
    /// [`SurfelPrimitive::point_at`].
    pub fn geometry_matrix(&self) -> Matrix4<f64> {
        let mut h = Matrix4::zeros();
        h.fixed_view_mut::<3, 1>(0, 0)
            .copy_from(&(self.t_u * self.s_u));
        h.fixed_view_mut::<3, 1>(0, 1)
            .copy_from(&(self.t_v * self.s_v));
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.center);
        h[(3, 3)] = 1.0;
        h
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for (name, t) in [("t_u", &self.t_u), ("t_v", &self.t_v)] {
            if (t.norm() - 1.0).abs() > tol::ORTHO {
                return Err(GeometryError::InvalidPrimitive {
                    reason: format!("|{name}| = {} is not unit", t.norm()),
                });
            }
        }
        if self.t_u.dot(&self.t_v).abs() > tol::ORTHO {
            return Err(GeometryError::InvalidPrimitive {
                reason: format!("tangents not orthogonal: t_u·t_v = {:.3e}", self.t_u.dot(&self.t_v)),
            });
        }
        if self.s_u <= 0.0 || self.s_v <= 0.0 {
            return Err(GeometryError::InvalidPrimitive {
                reason: format!("scales must be positive, got ({}, {})", self.s_u, self.s_v),
            });
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(GeometryError::InvalidPrimitive {
                reason: format!("opacity {} outside [0, 1]", self.opacity),
            });
        }
        Ok(())
    }
}

/// Pinhole camera. `extrinsic` maps world coordinates into the camera frame
/// (+z looking forward); there is no lens distortion model.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub extrinsic: Pose,
}

impl Camera {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidCamera {
                reason: format!("focal lengths must be positive, got ({}, {})", self.fx, self.fy),
            });
        }
        if self.width < 1 || self.height < 1 {
            return Err(GeometryError::InvalidCamera {
                reason: format!("image size {}×{} degenerate", self.width, self.height),
            });
        }
        check_rotation(&self.extrinsic.rotation).map_err(|e| GeometryError::InvalidCamera {
            reason: format!("extrinsic rotation invalid: {e}"),
        })
    }

    pub fn world_to_camera(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.extrinsic.apply(p_world)
    }

    /// Camera origin expressed in world coordinates.
    pub fn position(&self) -> Vector3<f64> {
        self.extrinsic.inverse().translation
    }

    /// Perspective projection of a world point to pixel coordinates
    /// `(fx·x/z + cx, fy·y/z + cy)`. The result may lie outside the image.
    pub fn project_point(&self, p_world: &Vector3<f64>) -> Result<Vector2<f64>, GeometryError> {
        let pc = self.world_to_camera(p_world);
        if pc.z <= tol::PROJECT_NEAR {
            return Err(GeometryError::PointBehindCamera { z: pc.z });
        }
        Ok(Vector2::new(
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        ))
    }

    /// The camera that sees the rigidly moved world exactly as this camera
    /// saw the original: extrinsic ∘ motion⁻¹.
    pub fn follow_rigid_motion(&self, motion: &Pose) -> Camera {
        Camera {
            extrinsic: self.extrinsic.compose(&motion.inverse()),
            ..self.clone()
        }
    }
}

/// Unit-height radial kernel on the surfel tangent plane:
/// `exp(−(u² + v²)/2)`, in `(0, 1]`.
pub fn surfel_weight(u: f64, v: f64) -> f64 {
    (-(u * u + v * v) / 2.0).exp()
}

/// Rigidly transports an SPD covariance: `R·C·Rᵀ`. Eigenvalues are preserved.
pub fn transform_covariance(
    c: &Matrix3<f64>,
    r: &Matrix3<f64>,
) -> Result<Matrix3<f64>, GeometryError> {
    check_spd(c)?;
    check_rotation(r)?;
    Ok(r * c * r.transpose())
}
