//! Scene alignment: unified origin, metric rescale, and re-orientation into
//! the y-up right-handed convention shared by the renderer and simulators.
//!
//! All three operations act on the scene geometry — meshes, Gaussians, the
//! chain base, rigid-body poses — and are exactly invertible by their inverse
//! parameters. The camera is deliberately left alone: it is authored against
//! the aligned frame.

use super::{AssetError, SceneAsset};
use nalgebra::{Matrix3, Vector3};

/// Translates the scene so `reference_point` becomes the origin (for
/// example, the measured base of the arm).
pub fn set_origin(asset: &mut SceneAsset, reference_point: &Vector3<f64>) {
    let shift = -reference_point;
    for mesh in &mut asset.meshes {
        for v in &mut mesh.vertices {
            *v += shift;
        }
    }
    for g in &mut asset.gaussians {
        g.center += shift;
    }
    if let Some(chain) = &mut asset.chain {
        chain.base_pose.translation += shift;
    }
    for b in &mut asset.bodies {
        b.pose.translation += shift;
    }
}

/// Uniformly scales the scene by `measured_length / asset_length`: positions
/// and translations by `s`, covariances by `s²`, MDH `a`/`d` and binding
/// normal offsets by `s`.
pub fn rescale_scene(
    asset: &mut SceneAsset,
    measured_length: f64,
    asset_length: f64,
) -> Result<(), AssetError> {
    if !(measured_length > 0.0) || !(asset_length > 0.0) {
        return Err(AssetError::NonPositiveLength {
            measured: measured_length,
            asset: asset_length,
        });
    }
    let s = measured_length / asset_length;
    for mesh in &mut asset.meshes {
        for v in &mut mesh.vertices {
            *v *= s;
        }
    }
    for g in &mut asset.gaussians {
        g.center *= s;
        g.covariance *= s * s;
    }
    if let Some(chain) = &mut asset.chain {
        chain.base_pose.translation *= s;
        for link in &mut chain.links {
            link.a *= s;
            link.d *= s;
        }
    }
    for b in &mut asset.bodies {
        b.pose.translation *= s;
    }
    for r in &mut asset.binding.records {
        r.normal_offset *= s;
    }
    Ok(())
}

/// Builds the rotation sending `up_hint` to +y and the component of
/// `forward_hint` orthogonal to it to +z (right-handed, so +x = y × z).
pub fn alignment_rotation(
    up_hint: &Vector3<f64>,
    forward_hint: &Vector3<f64>,
) -> Result<Matrix3<f64>, AssetError> {
    if up_hint.norm() < 1e-12 || forward_hint.norm() < 1e-12 {
        return Err(AssetError::DegenerateHints {
            reason: "hint vector is zero".into(),
        });
    }
    let y = up_hint.normalize();
    let f = forward_hint - y * forward_hint.dot(&y);
    // Angle between hints must exceed ~1e-6 rad for a stable frame.
    if f.norm() < 1e-6 * forward_hint.norm() {
        return Err(AssetError::DegenerateHints {
            reason: "up and forward hints are parallel".into(),
        });
    }
    let z = f.normalize();
    let x = y.cross(&z);
    // Rows map world axes onto the hint frame: R·up = +y, R·forward∥ = +z.
    Ok(Matrix3::from_rows(&[
        x.transpose(),
        y.transpose(),
        z.transpose(),
    ]))
}

/// Rigidly rotates the scene so the hinted axes line up with +y/+z.
pub fn reorient_scene(
    asset: &mut SceneAsset,
    up_hint: &Vector3<f64>,
    forward_hint: &Vector3<f64>,
) -> Result<(), AssetError> {
    let r = alignment_rotation(up_hint, forward_hint)?;
    for mesh in &mut asset.meshes {
        for v in &mut mesh.vertices {
            *v = r * *v;
        }
    }
    for g in &mut asset.gaussians {
        g.center = r * g.center;
        g.covariance = r * g.covariance * r.transpose();
        g.orientation = r * g.orientation;
    }
    if let Some(chain) = &mut asset.chain {
        chain.base_pose.rotation = r * chain.base_pose.rotation;
        chain.base_pose.translation = r * chain.base_pose.translation;
    }
    for b in &mut asset.bodies {
        b.pose.rotation = r * b.pose.rotation;
        b.pose.translation = r * b.pose.translation;
        b.linear_velocity = r * b.linear_velocity;
    }
    Ok(())
}
