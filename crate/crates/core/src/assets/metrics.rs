//! Mesh reconstruction quality metrics: symmetric mean-squared
//! nearest-neighbor error and F-score at a distance tolerance, both over
//! area-weighted surface samples drawn with a fixed seed.

use super::AssetError;
use crate::binding::TriangleMesh;
use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 7;
/// Distance tolerance used for F-scores unless a caller overrides it.
pub const DEFAULT_TAU: f64 = 1e-5;

/// Draws `n` points uniformly by area from the mesh surface. Deterministic
/// for a given seed.
pub fn sample_surface(
    mesh: &TriangleMesh,
    n: usize,
    seed: u64,
) -> Result<Vec<Vector3<f64>>, AssetError> {
    if mesh.faces.is_empty() {
        return Err(AssetError::EmptyGeometry {
            what: "mesh has no faces to sample".into(),
        });
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0f64;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(AssetError::EmptyGeometry {
            what: "mesh has zero surface area".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = rng.gen_range(0.0..total);
        let face = cumulative.partition_point(|&c| c <= pick).min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.face_vertices(face);
        // Square-root trick for uniform barycentric sampling.
        let r1: f64 = rng.gen();
        let r2: f64 = rng.gen();
        let s = r1.sqrt();
        out.push(a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2));
    }
    Ok(out)
}

/// Squared distance from each point of `from` to its nearest neighbor in
/// `to` (brute force, parallel over query points).
fn nearest_sq(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> Vec<f64> {
    from.par_iter()
        .map(|p| {
            to.iter()
                .map(|q| (p - q).norm_squared())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Symmetric mean of squared nearest-neighbor distances between two clouds.
pub fn point_cloud_mse(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64, AssetError> {
    if a.is_empty() || b.is_empty() {
        return Err(AssetError::EmptyGeometry {
            what: "point cloud is empty".into(),
        });
    }
    let ab = nearest_sq(a, b);
    let ba = nearest_sq(b, a);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(0.5 * (mean(&ab) + mean(&ba)))
}

/// Harmonic mean of precision (candidate points within `tau` of the
/// reference) and recall (reference points within `tau` of the candidate).
pub fn point_cloud_fscore(
    candidate: &[Vector3<f64>],
    reference: &[Vector3<f64>],
    tau: f64,
) -> Result<f64, AssetError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(AssetError::EmptyGeometry {
            what: "point cloud is empty".into(),
        });
    }
    let tau_sq = tau * tau;
    let frac_within = |dists: &[f64]| {
        dists.iter().filter(|&&d| d <= tau_sq).count() as f64 / dists.len() as f64
    };
    let precision = frac_within(&nearest_sq(candidate, reference));
    let recall = frac_within(&nearest_sq(reference, candidate));
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// MSE of a candidate mesh against a reference point set, sampling the
/// candidate surface with the default density and seed.
pub fn mesh_mse(candidate: &TriangleMesh, reference: &[Vector3<f64>]) -> Result<f64, AssetError> {
    let samples = sample_surface(candidate, DEFAULT_SAMPLES, DEFAULT_SEED)?;
    point_cloud_mse(&samples, reference)
}

/// F-score between two meshes at tolerance `tau`, sampling both surfaces at
/// equal density with the same seed.
pub fn mesh_fscore(
    candidate: &TriangleMesh,
    reference: &TriangleMesh,
    tau: f64,
) -> Result<f64, AssetError> {
    let a = sample_surface(candidate, DEFAULT_SAMPLES, DEFAULT_SEED)?;
    let b = sample_surface(reference, DEFAULT_SAMPLES, DEFAULT_SEED)?;
    point_cloud_fscore(&a, &b, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::mesh_clean::box_mesh;

    #[test]
    fn self_comparison_is_perfect() {
        let cube = box_mesh(Vector3::zeros(), Vector3::repeat(0.5), 0);
        assert_eq!(mesh_fscore(&cube, &cube, DEFAULT_TAU).unwrap(), 1.0);
        let samples = sample_surface(&cube, DEFAULT_SAMPLES, DEFAULT_SEED).unwrap();
        assert_eq!(mesh_mse(&cube, &samples).unwrap(), 0.0);
    }

    #[test]
    fn perpendicular_shift_by_twice_tau_zeroes_fscore() {
        // A planar cloud shifted off-plane by 2τ leaves every
        // nearest-neighbor distance at exactly 2τ > τ.
        let tau = DEFAULT_TAU;
        let cloud: Vec<Vector3<f64>> = (0..40)
            .flat_map(|i| {
                (0..40).map(move |j| Vector3::new(i as f64 * 0.01, j as f64 * 0.01, 0.0))
            })
            .collect();
        let shifted: Vec<Vector3<f64>> = cloud
            .iter()
            .map(|p| p + Vector3::new(0.0, 0.0, 2.0 * tau))
            .collect();
        assert_eq!(point_cloud_fscore(&shifted, &cloud, tau).unwrap(), 0.0);
        // And the MSE equals (2τ)².
        let mse = point_cloud_mse(&shifted, &cloud).unwrap();
        assert!((mse - (2.0 * tau).powi(2)).abs() < 1e-20);
    }

    #[test]
    fn fscore_is_symmetric_at_equal_density() {
        let a = box_mesh(Vector3::zeros(), Vector3::repeat(0.5), 0);
        let b = box_mesh(Vector3::new(0.002, 0.0, 0.0), Vector3::repeat(0.5), 0);
        let f_ab = mesh_fscore(&a, &b, 0.01).unwrap();
        let f_ba = mesh_fscore(&b, &a, 0.01).unwrap();
        assert!((f_ab - f_ba).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&f_ab));
    }

    #[test]
    fn sampling_is_deterministic_and_on_surface() {
        let cube = box_mesh(Vector3::zeros(), Vector3::repeat(0.5), 0);
        let a = sample_surface(&cube, 500, 3).unwrap();
        let b = sample_surface(&cube, 500, 3).unwrap();
        assert_eq!(a, b);
        for p in &a {
            let m = p.x.abs().max(p.y.abs()).max(p.z.abs());
            assert!((m - 0.5).abs() < 1e-12, "sample off the cube surface: {p:?}");
        }
    }

    #[test]
    fn empty_geometry_is_an_error() {
        let empty = TriangleMesh::new(vec![], vec![], 0);
        assert!(matches!(
            sample_surface(&empty, 10, 0),
            Err(AssetError::EmptyGeometry { .. })
        ));
        assert!(point_cloud_mse(&[], &[Vector3::zeros()]).is_err());
    }
}
