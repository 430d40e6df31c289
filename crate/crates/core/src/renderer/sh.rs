//! Real spherical-harmonics radiance evaluation, degrees 0–3, using the
//! basis ordering and sign conventions of mainstream splatting assets.

use nalgebra::{Matrix3, Vector3};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_92;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Real SH basis values at a unit direction, up to `degree` (≤ 3).
/// `out` must hold `(degree+1)²` entries.
pub fn sh_basis(direction: &Vector3<f64>, degree: usize, out: &mut [f64]) {
    let (x, y, z) = (direction.x, direction.y, direction.z);
    out[0] = SH_C0;
    if degree < 1 {
        return;
    }
    out[1] = -SH_C1 * y;
    out[2] = SH_C1 * z;
    out[3] = -SH_C1 * x;
    if degree < 2 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    out[4] = SH_C2[0] * xy;
    out[5] = SH_C2[1] * yz;
    out[6] = SH_C2[2] * (2.0 * zz - xx - yy);
    out[7] = SH_C2[3] * xz;
    out[8] = SH_C2[4] * (xx - yy);
    if degree < 3 {
        return;
    }
    out[9] = SH_C3[0] * y * (3.0 * xx - yy);
    out[10] = SH_C3[1] * xy * z;
    out[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
    out[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
    out[14] = SH_C3[5] * z * (xx - yy);
    out[15] = SH_C3[6] * x * (xx - 3.0 * yy);
}

/// Evaluates SH radiance at `view_dir` for a primitive whose instance has
/// accumulated the rigid rotation `instance_rotation` since load. Appearance
/// rides with the instance, so the basis is queried at the view direction
/// rotated back into the load frame: `f(d) = f₀(Rᵀ·d)`. The conventional
/// 0.5 offset is added and the result clamped to [0, 1].
pub fn evaluate_sh(
    sh: &[[f64; 3]],
    view_dir: &Vector3<f64>,
    instance_rotation: &Matrix3<f64>,
    max_degree: usize,
) -> [f64; 3] {
    debug_assert!((view_dir.norm() - 1.0).abs() < 1e-6, "view_dir must be unit");
    let available = crate::geometry::degree_for_coeff_count(sh.len()).unwrap_or(0);
    let degree = max_degree.min(available).min(3);
    let n = (degree + 1) * (degree + 1);
    let d = instance_rotation.transpose() * view_dir;
    let mut basis = [0.0f64; 16];
    sh_basis(&d, degree, &mut basis);
    let mut rgb = [0.5f64; 3];
    for (i, b) in basis.iter().enumerate().take(n) {
        for c in 0..3 {
            rgb[c] += b * sh[i][c];
        }
    }
    for v in &mut rgb {
        *v = v.clamp(0.0, 1.0);
    }
    rgb
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn degree_zero_is_offset_plus_constant_basis() {
        let sh = vec![[0.7, -0.2, 0.1]];
        let dirs = [
            Vector3::z(),
            Vector3::new(0.6, 0.8, 0.0),
            Vector3::new(-1.0, 0.0, 0.0),
        ];
        for d in dirs {
            let rgb = evaluate_sh(&sh, &d, &Matrix3::identity(), 3);
            assert_relative_eq!(rgb[0], 0.5 + SH_C0 * 0.7, epsilon = 1e-12);
            assert_relative_eq!(rgb[1], (0.5 - SH_C0 * 0.2).max(0.0), epsilon = 1e-12);
            assert_relative_eq!(rgb[2], 0.5 + SH_C0 * 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_rotation_matches_plain_evaluation() {
        let mut rng = StdRng::seed_from_u64(77);
        let sh: Vec<[f64; 3]> = (0..16)
            .map(|_| [rng.gen_range(-0.3..0.3); 3])
            .collect();
        for _ in 0..20 {
            let d = random_unit(&mut rng);
            let a = evaluate_sh(&sh, &d, &Matrix3::identity(), 3);
            let rotated_dir = Matrix3::identity().transpose() * d;
            let mut basis = [0.0; 16];
            sh_basis(&rotated_dir, 3, &mut basis);
            let mut expected = [0.5; 3];
            for i in 0..16 {
                for c in 0..3 {
                    expected[c] += basis[i] * sh[i][c];
                }
            }
            for c in 0..3 {
                assert_relative_eq!(a[c], expected[c].clamp(0.0, 1.0), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn degree_zero_invariant_to_rotation() {
        let sh = vec![[0.4, 0.4, 0.4]];
        let mut rng = StdRng::seed_from_u64(78);
        for _ in 0..20 {
            let r = crate::testutil::random_rotation(&mut rng);
            let d = random_unit(&mut rng);
            let a = evaluate_sh(&sh, &d, &r, 3);
            let b = evaluate_sh(&sh, &d, &Matrix3::identity(), 3);
            for c in 0..3 {
                assert_relative_eq!(a[c], b[c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn joint_rotation_of_instance_and_view_is_invariant() {
        // f after rotation, queried along the rotated view ray, equals the
        // original radiance: (R·R₀)ᵀ·(R·d) = R₀ᵀ·d.
        let mut rng = StdRng::seed_from_u64(79);
        let sh: Vec<[f64; 3]> = (0..16)
            .map(|_| {
                [
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                ]
            })
            .collect();
        for _ in 0..50 {
            let r = crate::testutil::random_rotation(&mut rng);
            let d = random_unit(&mut rng);
            let before = evaluate_sh(&sh, &d, &Matrix3::identity(), 3);
            let after = evaluate_sh(&sh, &(r * d), &r, 3);
            for c in 0..3 {
                assert_relative_eq!(before[c], after[c], epsilon = 1e-10);
            }
        }
    }

    fn random_unit(rng: &mut StdRng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if v.norm() > 1e-3 {
                return v.normalize();
            }
        }
    }
}
