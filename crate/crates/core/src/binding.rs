//! Gaussian–mesh binding and rigid forward deformation.
//!
//! Every Gaussian is attached to exactly one face of the mesh carrying its
//! instance label: the record stores the face, the barycentric coordinates of
//! the closest point on it, and the signed offset of the center along the
//! face normal. Reconstructing `Σ bᵢ·νᵢ + offset·n̂` from a deformed mesh
//! transports the Gaussian anchor with the mesh, which is what makes the
//! binding useful: mesh motion drives Gaussian motion.

use crate::geometry::{Camera, GaussianPrimitive, GeometryError, Pose, SurfelPrimitive};
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BindingError {
    #[error("no mesh carries instance label {label}")]
    UnmatchedLabel { label: u32 },
    #[error("mesh with label {label} has no faces")]
    EmptyMesh { label: u32 },
    #[error("invalid mesh: {reason}")]
    InvalidMesh { reason: String },
    #[error("gaussian index {index} is not bound (binding holds {bound} records)")]
    UnboundIndex { index: usize, bound: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Indexed triangle mesh with an instance label. Faces are vertex-index
/// triples; the face normal is the right-handed cross of its edge vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub label: u32,
}

/// Faces thinner than this (in m²) are considered degenerate.
pub const MIN_FACE_AREA: f64 = 1e-12;

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>, label: u32) -> Self {
        TriangleMesh {
            vertices,
            faces,
            label,
        }
    }

    pub fn validate(&self) -> Result<(), BindingError> {
        for (i, f) in self.faces.iter().enumerate() {
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(BindingError::InvalidMesh {
                    reason: format!("face {i} repeats a vertex index: {f:?}"),
                });
            }
            for &v in f {
                if v >= self.vertices.len() {
                    return Err(BindingError::InvalidMesh {
                        reason: format!(
                            "face {i} references vertex {v} but mesh has {}",
                            self.vertices.len()
                        ),
                    });
                }
            }
            if self.face_area(i) <= MIN_FACE_AREA {
                return Err(BindingError::InvalidMesh {
                    reason: format!("face {i} has near-zero area"),
                });
            }
        }
        Ok(())
    }

    pub fn face_vertices(&self, face: usize) -> [Vector3<f64>; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0]],
            self.vertices[f[1]],
            self.vertices[f[2]],
        ]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.face_vertices(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Unit normal of a face (right-handed winding).
    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.face_vertices(face);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_centroid(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.face_vertices(face);
        (a + b + c) / 3.0
    }

    /// Rigidly moves every vertex.
    pub fn apply_pose(&mut self, motion: &Pose) {
        for v in &mut self.vertices {
            *v = motion.apply(v);
        }
    }
}

/// One Gaussian's attachment: face, barycentric coordinates of the closest
/// point on that face, and the signed distance of the center along the face
/// normal at bind time.
#[derive(Debug, Clone, PartialEq)]
pub struct BindingRecord {
    pub gaussian_index: usize,
    pub label: u32,
    pub face_index: usize,
    pub barycentric: Vector3<f64>,
    pub normal_offset: f64,
}

/// Total Gaussian→mesh attachment for a scene: exactly one record per
/// Gaussian, plus the label→mesh lookup the records resolve against.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BindingMap {
    pub records: Vec<BindingRecord>,
    /// Instance label → index into the mesh slice the binding was built on.
    pub mesh_for_label: BTreeMap<u32, usize>,
}

impl BindingMap {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn record(&self, g_index: usize) -> Result<&BindingRecord, BindingError> {
        self.records.get(g_index).ok_or(BindingError::UnboundIndex {
            index: g_index,
            bound: self.records.len(),
        })
    }

    /// Reconstructs the mesh-anchored position of a bound Gaussian from the
    /// current mesh geometry: `Σ bᵢ·νᵢ + offset·n̂`.
    pub fn anchor_point(
        &self,
        meshes: &[TriangleMesh],
        g_index: usize,
    ) -> Result<Vector3<f64>, BindingError> {
        let rec = self.record(g_index)?;
        let mesh_idx = *self
            .mesh_for_label
            .get(&rec.label)
            .ok_or(BindingError::UnmatchedLabel { label: rec.label })?;
        let mesh = &meshes[mesh_idx];
        let [a, b, c] = mesh.face_vertices(rec.face_index);
        let on_face = a * rec.barycentric.x + b * rec.barycentric.y + c * rec.barycentric.z;
        Ok(on_face + mesh.face_normal(rec.face_index) * rec.normal_offset)
    }

    /// The pixel of the Gaussian's mesh-anchored position together with its
    /// bound face: the composition of projection after attachment.
    pub fn reproject_gaussian(
        &self,
        camera: &Camera,
        meshes: &[TriangleMesh],
        g_index: usize,
    ) -> Result<(Vector2<f64>, usize), BindingError> {
        let anchor = self.anchor_point(meshes, g_index)?;
        let pixel = camera.project_point(&anchor)?;
        Ok((pixel, self.records[g_index].face_index))
    }
}

/// Closest point on triangle `(a, b, c)` to `p`, returned as barycentric
/// coordinates. Clamped to the triangle, so components are in `[0, 1]`.
fn closest_point_barycentric(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    // Ericson, Real-Time Collision Detection, §5.1.5.
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return Vector3::new(1.0, 0.0, 0.0);
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return Vector3::new(0.0, 1.0, 0.0);
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return Vector3::new(1.0 - v, v, 0.0);
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return Vector3::new(0.0, 0.0, 1.0);
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return Vector3::new(1.0 - w, 0.0, w);
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return Vector3::new(0.0, 1.0 - w, w);
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    Vector3::new(1.0 - v - w, v, w)
}

fn bind_one(
    index: usize,
    center: &Vector3<f64>,
    label: u32,
    mesh: &TriangleMesh,
) -> BindingRecord {
    let mut best_face = 0usize;
    let mut best_dist2 = f64::INFINITY;
    let mut best_bary = Vector3::zeros();
    for face in 0..mesh.faces.len() {
        let [a, b, c] = mesh.face_vertices(face);
        let bary = closest_point_barycentric(center, &a, &b, &c);
        let closest = a * bary.x + b * bary.y + c * bary.z;
        let d2 = (center - closest).norm_squared();
        // Strict < keeps the lowest face index on exact ties.
        if d2 < best_dist2 {
            best_dist2 = d2;
            best_face = face;
            best_bary = bary;
        }
    }
    let [a, b, c] = mesh.face_vertices(best_face);
    let closest = a * best_bary.x + b * best_bary.y + c * best_bary.z;
    let normal_offset = (center - closest).dot(&mesh.face_normal(best_face));
    BindingRecord {
        gaussian_index: index,
        label,
        face_index: best_face,
        barycentric: best_bary,
        normal_offset,
    }
}

/// Binds every Gaussian to the closest face of the mesh sharing its label.
/// The result is total: one record per Gaussian, in Gaussian order.
pub fn build_binding(
    gaussians: &[GaussianPrimitive],
    meshes: &[TriangleMesh],
) -> Result<BindingMap, BindingError> {
    let mut mesh_for_label = BTreeMap::new();
    for (i, mesh) in meshes.iter().enumerate() {
        mesh_for_label.entry(mesh.label).or_insert(i);
    }
    for g in gaussians {
        let mesh_idx = mesh_for_label
            .get(&g.label)
            .ok_or(BindingError::UnmatchedLabel { label: g.label })?;
        if meshes[*mesh_idx].faces.is_empty() {
            return Err(BindingError::EmptyMesh { label: g.label });
        }
    }
    let records: Vec<BindingRecord> = gaussians
        .par_iter()
        .enumerate()
        .map(|(i, g)| bind_one(i, &g.center, g.label, &meshes[mesh_for_label[&g.label]]))
        .collect();
    Ok(BindingMap {
        records,
        mesh_for_label,
    })
}

/// Rigidly moves every Gaussian carrying `label`: center `← R·x + T`,
/// covariance `← R·C·Rᵀ`, and the accumulated orientation used for SH view
/// rotation `← R·orientation`. SH coefficients themselves are untouched.
pub fn apply_instance_transform(
    gaussians: &mut [GaussianPrimitive],
    label: u32,
    motion: &Pose,
) {
    gaussians
        .par_iter_mut()
        .filter(|g| g.label == label)
        .for_each(|g| {
            g.center = motion.apply(&g.center);
            g.covariance = motion.rotation * g.covariance * motion.rotation.transpose();
            g.orientation = motion.rotation * g.orientation;
        });
}

/// Surfel counterpart of [`apply_instance_transform`]: tangents rotate with
/// the instance, scales are untouched.
pub fn apply_instance_transform_surfels(
    surfels: &mut [SurfelPrimitive],
    label: u32,
    motion: &Pose,
) {
    surfels
        .par_iter_mut()
        .filter(|s| s.label == label)
        .for_each(|s| {
            s.center = motion.apply(&s.center);
            s.t_u = motion.rotation * s.t_u;
            s.t_v = motion.rotation * s.t_v;
            s.orientation = motion.rotation * s.orientation;
        });
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn gaussian_at(center: Vector3<f64>, label: u32) -> GaussianPrimitive {
        GaussianPrimitive::new(
            center,
            0.9,
            Matrix3::from_diagonal(&Vector3::new(0.01, 0.02, 0.03)),
            vec![[0.2; 3]],
            label,
        )
    }

    fn single_triangle(label: u32) -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
            label,
        )
    }

    #[test]
    fn gaussian_on_vertex_binds_with_indicator_barycentric() {
        let mesh = single_triangle(0);
        let g = gaussian_at(Vector3::new(1.0, 0.0, 0.0), 0);
        let binding = build_binding(&[g], &[mesh]).unwrap();
        let rec = &binding.records[0];
        assert_eq!(rec.face_index, 0);
        assert_relative_eq!(rec.barycentric.y, 1.0, epsilon = 1e-12);
        assert_relative_eq!(rec.barycentric.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(rec.barycentric.z, 0.0, epsilon = 1e-12);
        assert_relative_eq!(rec.normal_offset, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_at_centroid_binds_with_uniform_barycentric() {
        let mesh = single_triangle(3);
        let centroid = mesh.face_centroid(0);
        let g = gaussian_at(centroid, 3);
        let binding = build_binding(&[g], &[mesh]).unwrap();
        let rec = &binding.records[0];
        for i in 0..3 {
            assert_relative_eq!(rec.barycentric[i], 1.0 / 3.0, epsilon = 1e-12);
        }
        assert_relative_eq!(rec.normal_offset, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn normal_offset_measures_height_above_face() {
        // Brute-force oracle: with a single face, the closest point is the
        // centroid projection and the offset must equal the lifted height.
        let mesh = single_triangle(0);
        let centroid = mesh.face_centroid(0);
        let n = mesh.face_normal(0);
        let g = gaussian_at(centroid + n * 0.05, 0);
        let binding = build_binding(&[g.clone()], &[mesh.clone()]).unwrap();
        assert_relative_eq!(binding.records[0].normal_offset, 0.05, epsilon = 1e-9);
        let anchor = binding.anchor_point(&[mesh], 0).unwrap();
        assert!((anchor - g.center).norm() < 1e-9);
    }

    #[test]
    fn binding_requires_matching_label() {
        let mesh = single_triangle(0);
        let g = gaussian_at(Vector3::zeros(), 5);
        assert!(matches!(
            build_binding(&[g], &[mesh]),
            Err(BindingError::UnmatchedLabel { label: 5 })
        ));
    }

    #[test]
    fn binding_rejects_empty_mesh() {
        let mesh = TriangleMesh::new(vec![], vec![], 1);
        let g = gaussian_at(Vector3::zeros(), 1);
        assert!(matches!(
            build_binding(&[g], &[mesh]),
            Err(BindingError::EmptyMesh { label: 1 })
        ));
    }

    #[test]
    fn binding_is_total() {
        let mesh = single_triangle(0);
        let mut rng = StdRng::seed_from_u64(5);
        let gaussians: Vec<_> = (0..64)
            .map(|_| {
                gaussian_at(
                    Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-0.2..0.2),
                    ),
                    0,
                )
            })
            .collect();
        let binding = build_binding(&gaussians, &[mesh]).unwrap();
        assert_eq!(binding.len(), gaussians.len());
        for (i, rec) in binding.records.iter().enumerate() {
            assert_eq!(rec.gaussian_index, i);
            assert_relative_eq!(rec.barycentric.sum(), 1.0, epsilon = 1e-9);
            assert!(rec.barycentric.min() >= -1e-9);
        }
    }

    #[test]
    fn reproject_matches_direct_projection_of_anchor() {
        let mut rng = StdRng::seed_from_u64(17);
        let cam = crate::testutil::test_camera();
        for _ in 0..100 {
            // Anchor gaussians on the face plane so reconstruction is exact.
            let mesh = TriangleMesh::new(
                vec![
                    Vector3::new(rng.gen_range(-0.5..-0.1), rng.gen_range(-0.5..0.0), 2.0),
                    Vector3::new(rng.gen_range(0.1..0.5), rng.gen_range(-0.5..0.0), 2.2),
                    Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(0.1..0.5), 2.4),
                ],
                vec![[0, 1, 2]],
                0,
            );
            let (b0, b1) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let (b0, b1) = if b0 + b1 > 1.0 {
                (1.0 - b0, 1.0 - b1)
            } else {
                (b0, b1)
            };
            let [a, b, c] = mesh.face_vertices(0);
            let p = a * b0 + b * b1 + c * (1.0 - b0 - b1)
                + mesh.face_normal(0) * rng.gen_range(-0.05..0.05);
            let g = gaussian_at(p, 0);
            let binding = build_binding(&[g], &[mesh.clone()]).unwrap();
            let (pixel, face) = binding.reproject_gaussian(&cam, &[mesh.clone()], 0).unwrap();
            assert_eq!(face, 0);
            let direct = cam.project_point(&binding.anchor_point(&[mesh], 0).unwrap()).unwrap();
            assert!((pixel - direct).norm() < 1e-9);
        }
    }

    #[test]
    fn reproject_unbound_index_errors() {
        let mesh = single_triangle(0);
        let g = gaussian_at(Vector3::new(0.2, 0.2, 0.0), 0);
        let binding = build_binding(&[g], &[mesh.clone()]).unwrap();
        let cam = crate::testutil::test_camera();
        assert!(binding.reproject_gaussian(&cam, &[mesh], 3).is_err());
    }

    #[test]
    fn identity_motion_leaves_scene_bit_identical() {
        let mut gaussians = vec![gaussian_at(Vector3::new(0.1, 0.2, 0.3), 2)];
        let before = gaussians.clone();
        apply_instance_transform(&mut gaussians, 2, &Pose::identity());
        assert_eq!(gaussians, before);
    }

    #[test]
    fn rotation_and_translation_update_center() {
        let mut gaussians = vec![gaussian_at(Vector3::new(1.0, 0.0, 0.0), 0)];
        let motion = Pose {
            translation: Vector3::new(1.0, 0.0, 0.0),
            ..Pose::from_axis_angle(&Vector3::z(), std::f64::consts::FRAC_PI_2)
        };
        apply_instance_transform(&mut gaussians, 0, &motion);
        let c = gaussians[0].center;
        assert!((c - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn other_labels_untouched() {
        let mut gaussians = vec![
            gaussian_at(Vector3::new(1.0, 0.0, 0.0), 0),
            gaussian_at(Vector3::new(2.0, 0.0, 0.0), 1),
        ];
        let motion = Pose::from_translation(Vector3::new(0.0, 5.0, 0.0));
        apply_instance_transform(&mut gaussians, 0, &motion);
        assert_eq!(gaussians[1].center, Vector3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn binding_residuals_invariant_under_rigid_co_motion() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..50 {
            let mut mesh = single_triangle(0);
            let g = gaussian_at(
                mesh.face_centroid(0) + mesh.face_normal(0) * rng.gen_range(-0.3..0.3),
                0,
            );
            let binding = build_binding(&[g.clone()], &[mesh.clone()]).unwrap();
            let motion = crate::testutil::random_pose(&mut rng);

            let mut moved = vec![g];
            apply_instance_transform(&mut moved, 0, &motion);
            mesh.apply_pose(&motion);
            let rebound = build_binding(&moved, &[mesh.clone()]).unwrap();

            let a = &binding.records[0];
            let b = &rebound.records[0];
            assert_eq!(a.face_index, b.face_index);
            assert!((a.barycentric - b.barycentric).norm() < 1e-9);
            assert!((a.normal_offset - b.normal_offset).abs() < 1e-9);

            // Anchor reconstructed from the moved mesh tracks the motion.
            let anchor_moved = binding.anchor_point(&[mesh], 0).unwrap();
            let anchor_expected = motion.apply(
                &binding
                    .anchor_point(&[single_triangle(0)], 0)
                    .unwrap(),
            );
            assert!((anchor_moved - anchor_expected).norm() < 1e-9);
        }
    }

    #[test]
    fn forward_then_inverse_restores_centers_and_eigenvalues() {
        let mut rng = StdRng::seed_from_u64(29);
        let mut gaussians: Vec<_> = (0..32)
            .map(|i| {
                gaussian_at(
                    Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ),
                    i % 2,
                )
            })
            .collect();
        let before = gaussians.clone();
        let motion = crate::testutil::random_pose(&mut rng);
        for label in [0, 1] {
            apply_instance_transform(&mut gaussians, label, &motion);
        }
        for (g, b) in gaussians.iter().zip(&before) {
            let mut ev_a: Vec<f64> = g.covariance.symmetric_eigenvalues().iter().copied().collect();
            let mut ev_b: Vec<f64> = b.covariance.symmetric_eigenvalues().iter().copied().collect();
            ev_a.sort_by(f64::total_cmp);
            ev_b.sort_by(f64::total_cmp);
            for (x, y) in ev_a.iter().zip(&ev_b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
        let inv = motion.inverse();
        for label in [0, 1] {
            apply_instance_transform(&mut gaussians, label, &inv);
        }
        for (g, b) in gaussians.iter().zip(&before) {
            assert!((g.center - b.center).norm() < 1e-9);
        }
    }
}
