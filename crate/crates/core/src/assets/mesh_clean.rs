//! Mesh cleaning for fused reconstructions: drops dust components and the
//! interior shells that surface fusion leaves inside closed objects.
//!
//! Two-stage filter:
//! 1. connected components (faces joined through shared vertices) smaller
//!    than `min_component_fraction` of the largest component are removed;
//! 2. faces that are never the *first* hit of a ray cast from viewpoints on
//!    an enclosing sphere toward their centroid are removed — exterior
//!    surfaces survive, occluded interior shells do not.

use super::AssetError;
use crate::binding::TriangleMesh;
use nalgebra::Vector3;
use rayon::prelude::*;

/// Möller–Trumbore ray/triangle intersection; returns the ray parameter t
/// for hits with t > 0.
fn ray_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let t_vec = origin - a;
    let u = t_vec.dot(&p) * inv_det;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = t_vec.cross(&e1);
    let v = dir.dot(&q) * inv_det;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&q) * inv_det;
    (t > 1e-12).then_some(t)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Unit directions roughly evenly spread over the sphere.
fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

/// Rebuilds a mesh from the faces flagged `keep`, dropping vertices that are
/// no longer referenced (original ordering preserved).
fn rebuild(mesh: &TriangleMesh, keep: &[bool]) -> TriangleMesh {
    let mut vertex_map = vec![usize::MAX; mesh.vertices.len()];
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (fi, face) in mesh.faces.iter().enumerate() {
        if !keep[fi] {
            continue;
        }
        let mut new_face = [0usize; 3];
        for (slot, &vi) in new_face.iter_mut().zip(face) {
            if vertex_map[vi] == usize::MAX {
                vertex_map[vi] = vertices.len();
                vertices.push(mesh.vertices[vi]);
            }
            *slot = vertex_map[vi];
        }
        faces.push(new_face);
    }
    TriangleMesh::new(vertices, faces, mesh.label)
}

/// Removes dust components and interior-shell faces. Idempotent: cleaning a
/// cleaned mesh changes nothing.
pub fn clean_mesh(
    mesh: &TriangleMesh,
    min_component_fraction: f64,
    visibility_samples: usize,
) -> Result<TriangleMesh, AssetError> {
    if mesh.faces.is_empty() {
        return Err(AssetError::EmptyResult);
    }

    // Stage 1: component filter.
    let mut uf = UnionFind::new(mesh.faces.len());
    {
        let mut vertex_owner: Vec<usize> = vec![usize::MAX; mesh.vertices.len()];
        for (fi, face) in mesh.faces.iter().enumerate() {
            for &vi in face {
                if vertex_owner[vi] == usize::MAX {
                    vertex_owner[vi] = fi;
                } else {
                    uf.union(vertex_owner[vi], fi);
                }
            }
        }
    }
    let mut component_size = std::collections::BTreeMap::new();
    let roots: Vec<usize> = (0..mesh.faces.len()).map(|f| uf.find(f)).collect();
    for &r in &roots {
        *component_size.entry(r).or_insert(0usize) += 1;
    }
    let largest = *component_size.values().max().unwrap();
    let threshold = min_component_fraction * largest as f64;
    let mut keep: Vec<bool> = roots
        .iter()
        .map(|r| component_size[r] as f64 >= threshold)
        .collect();

    // Stage 2: visibility filter over the surviving faces.
    if visibility_samples > 0 {
        let surviving: Vec<usize> = (0..mesh.faces.len()).filter(|&f| keep[f]).collect();
        let verts = &mesh.vertices;
        let (mut lo, mut hi) = (
            Vector3::repeat(f64::INFINITY),
            Vector3::repeat(f64::NEG_INFINITY),
        );
        for v in verts {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let center = (lo + hi) / 2.0;
        let radius = ((hi - lo).norm() / 2.0).max(1e-6) * 1.5;
        let viewpoints: Vec<Vector3<f64>> = fibonacci_sphere(visibility_samples)
            .into_iter()
            .map(|d| center + d * radius)
            .collect();

        let triangles: Vec<[Vector3<f64>; 3]> = surviving
            .iter()
            .map(|&f| mesh.face_vertices(f))
            .collect();
        let centroids: Vec<Vector3<f64>> = surviving
            .iter()
            .map(|&f| mesh.face_centroid(f))
            .collect();

        let visible: Vec<bool> = (0..surviving.len())
            .into_par_iter()
            .map(|ti| {
                let target = centroids[ti];
                'viewpoint: for vp in &viewpoints {
                    let dir = target - vp;
                    // The candidate face is hit at t ≈ 1 by construction;
                    // any face strictly closer occludes it.
                    let t_self = match ray_triangle(
                        vp,
                        &dir,
                        &triangles[ti][0],
                        &triangles[ti][1],
                        &triangles[ti][2],
                    ) {
                        Some(t) => t,
                        None => continue,
                    };
                    for (tj, tri) in triangles.iter().enumerate() {
                        if tj == ti {
                            continue;
                        }
                        if let Some(t) = ray_triangle(vp, &dir, &tri[0], &tri[1], &tri[2]) {
                            if t < t_self * (1.0 - 1e-9) {
                                continue 'viewpoint;
                            }
                        }
                    }
                    return true;
                }
                false
            })
            .collect();
        for (slot, &f) in visible.iter().zip(&surviving) {
            keep[f] = *slot;
        }
    }

    if keep.iter().all(|k| !k) {
        return Err(AssetError::EmptyResult);
    }
    Ok(rebuild(mesh, &keep))
}

/// Axis-aligned cuboid mesh (12 triangles) used by fixtures and tests.
pub fn box_mesh(center: Vector3<f64>, half_extents: Vector3<f64>, label: u32) -> TriangleMesh {
    let h = half_extents;
    let corner = |sx: f64, sy: f64, sz: f64| center + Vector3::new(sx * h.x, sy * h.y, sz * h.z);
    let vertices = vec![
        corner(-1.0, -1.0, -1.0),
        corner(1.0, -1.0, -1.0),
        corner(1.0, 1.0, -1.0),
        corner(-1.0, 1.0, -1.0),
        corner(-1.0, -1.0, 1.0),
        corner(1.0, -1.0, 1.0),
        corner(1.0, 1.0, 1.0),
        corner(-1.0, 1.0, 1.0),
    ];
    // Outward-facing winding.
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2], // -z
        [4, 5, 6],
        [4, 6, 7], // +z
        [0, 1, 5],
        [0, 5, 4], // -y
        [3, 6, 2],
        [3, 7, 6], // +y
        [0, 7, 3],
        [0, 4, 7], // -x
        [1, 2, 6],
        [1, 6, 5], // +x
    ];
    TriangleMesh::new(vertices, faces, label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_closed_mesh_is_untouched() {
        let cube = box_mesh(Vector3::zeros(), Vector3::repeat(0.5), 0);
        let cleaned = clean_mesh(&cube, 0.01, 64).unwrap();
        assert_eq!(cleaned.faces.len(), cube.faces.len());
        assert_eq!(cleaned.vertices.len(), cube.vertices.len());
    }

    #[test]
    fn nested_inner_cube_is_removed() {
        let outer = box_mesh(Vector3::zeros(), Vector3::repeat(0.5), 0);
        let inner = box_mesh(Vector3::zeros(), Vector3::repeat(0.25), 0);
        // Merge into one mesh with two components.
        let mut vertices = outer.vertices.clone();
        let offset = vertices.len();
        vertices.extend(inner.vertices.iter().copied());
        let mut faces = outer.faces.clone();
        faces.extend(inner.faces.iter().map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]));
        let merged = TriangleMesh::new(vertices, faces, 0);

        let cleaned = clean_mesh(&merged, 0.01, 64).unwrap();
        assert_eq!(cleaned.faces.len(), outer.faces.len());
        // Ray-cast oracle: every surviving centroid must be on the outer box
        // surface (max |coordinate| = 0.5).
        for f in 0..cleaned.faces.len() {
            let c = cleaned.face_centroid(f);
            let m = c.x.abs().max(c.y.abs()).max(c.z.abs());
            assert!((m - 0.5).abs() < 1e-12, "interior face survived at {c:?}");
        }
    }

    #[test]
    fn tiny_fragment_is_removed_by_component_filter() {
        let cube = box_mesh(Vector3::zeros(), Vector3::repeat(0.5), 0);
        let mut vertices = cube.vertices.clone();
        let off = vertices.len();
        vertices.push(Vector3::new(3.0, 0.0, 0.0));
        vertices.push(Vector3::new(3.01, 0.0, 0.0));
        vertices.push(Vector3::new(3.0, 0.01, 0.0));
        let mut faces = cube.faces.clone();
        faces.push([off, off + 1, off + 2]);
        let merged = TriangleMesh::new(vertices, faces, 0);
        // Component filter only (visibility off) isolates stage 1.
        let cleaned = clean_mesh(&merged, 0.5, 0).unwrap();
        assert_eq!(cleaned.faces.len(), cube.faces.len());
        assert_eq!(cleaned.vertices.len(), cube.vertices.len());
    }

    #[test]
    fn cleaning_is_idempotent() {
        let outer = box_mesh(Vector3::zeros(), Vector3::repeat(0.5), 0);
        let inner = box_mesh(Vector3::new(0.05, 0.0, 0.0), Vector3::repeat(0.2), 0);
        let mut vertices = outer.vertices.clone();
        let offset = vertices.len();
        vertices.extend(inner.vertices.iter().copied());
        let mut faces = outer.faces.clone();
        faces.extend(inner.faces.iter().map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]));
        let merged = TriangleMesh::new(vertices, faces, 0);

        let once = clean_mesh(&merged, 0.01, 32).unwrap();
        let twice = clean_mesh(&once, 0.01, 32).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn cleaning_everything_away_is_an_error() {
        let mesh = TriangleMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![],
            0,
        );
        assert!(matches!(clean_mesh(&mesh, 0.01, 8), Err(AssetError::EmptyResult)));
    }
}
