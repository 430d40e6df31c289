//! Helpers shared by unit tests across modules. Compiled only for tests.

use crate::geometry::{Camera, Pose};
use nalgebra::{Matrix3, Vector3};
use rand::rngs::StdRng;
use rand::Rng;

pub fn random_rotation(rng: &mut StdRng) -> Matrix3<f64> {
    let axis = Vector3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let axis = if axis.norm() < 1e-6 { Vector3::x() } else { axis };
    let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
}

pub fn random_pose(rng: &mut StdRng) -> Pose {
    Pose {
        rotation: random_rotation(rng),
        translation: Vector3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        ),
    }
}

pub fn random_spd(rng: &mut StdRng) -> Matrix3<f64> {
    let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    a * a.transpose() + Matrix3::identity() * 0.1
}

pub fn test_camera() -> Camera {
    Camera {
        fx: 120.0,
        fy: 110.0,
        cx: 64.0,
        cy: 60.0,
        width: 128,
        height: 120,
        extrinsic: Pose::identity(),
    }
}
