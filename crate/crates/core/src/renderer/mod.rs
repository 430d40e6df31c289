//! CPU tile-based Gaussian-splatting rasterizer.
//!
//! Primitives are projected to screen space with the local-affine (Jacobian)
//! approximation, depth-sorted globally, binned into tiles, and
//! alpha-composited front-to-back per pixel:
//!
//! ```text
//! C = Σₖ αₖ·rgbₖ·Πⱼ₍ₖ(1−αⱼ) + T_final·background
//! ```
//!
//! Besides color the renderer emits a per-pixel instance map (the label of
//! the splat at which accumulated opacity first exceeds one half, −1 for
//! background) and a depth map. Tiles write disjoint image regions, so the
//! parallel schedule cannot change the output.

pub mod image_io;
pub mod sh;

pub use sh::evaluate_sh;

use crate::geometry::{tol, Camera, GaussianPrimitive, GeometryError, SurfelPrimitive};
use crate::geometry::surfel_weight;
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

/// Screen-space dilation added to projected covariances, in px².
pub const DILATION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub tile_size: usize,
    pub alpha_cutoff: f64,
    pub transmittance_floor: f64,
    pub background: [f64; 3],
    pub sh_degree: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            tile_size: 16,
            alpha_cutoff: 1.0 / 255.0,
            transmittance_floor: 1e-4,
            background: [0.0, 0.0, 0.0],
            sh_degree: 3,
        }
    }
}

/// Background pixels carry label −1 and infinite depth.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB in [0, 1].
    pub color: Vec<[f64; 3]>,
    pub instance_map: Vec<i32>,
    pub depth: Vec<f64>,
}

impl RenderOutput {
    fn background(width: usize, height: usize, bg: [f64; 3]) -> Self {
        RenderOutput {
            width,
            height,
            color: vec![bg; width * height],
            instance_map: vec![-1; width * height],
            depth: vec![f64::INFINITY; width * height],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.color[y * self.width + x]
    }

    pub fn label_at(&self, x: usize, y: usize) -> i32 {
        self.instance_map[y * self.width + x]
    }

    /// Centroid of all pixels carrying `label`, or None if absent.
    pub fn label_centroid(&self, label: i32) -> Option<Vector2<f64>> {
        let mut sum = Vector2::zeros();
        let mut count = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.label_at(x, y) == label {
                    sum += Vector2::new(x as f64, y as f64);
                    count += 1;
                }
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

/// Screen-space projection of one Gaussian: pixel mean, 2×2 covariance with
/// the [`DILATION`] term added, and camera-frame depth of the center.
pub fn project_gaussian_2d(
    camera: &Camera,
    g: &GaussianPrimitive,
) -> Result<(Vector2<f64>, Matrix2<f64>, f64), GeometryError> {
    let pc = camera.world_to_camera(&g.center);
    if pc.z <= tol::SPLAT_NEAR {
        return Err(GeometryError::PointBehindCamera { z: pc.z });
    }
    let mean = Vector2::new(
        camera.fx * pc.x / pc.z + camera.cx,
        camera.fy * pc.y / pc.z + camera.cy,
    );
    let inv_z = 1.0 / pc.z;
    // Jacobian of the pinhole map at the center.
    let j = nalgebra::Matrix2x3::new(
        camera.fx * inv_z,
        0.0,
        -camera.fx * pc.x * inv_z * inv_z,
        0.0,
        camera.fy * inv_z,
        -camera.fy * pc.y * inv_z * inv_z,
    );
    let w = camera.extrinsic.rotation;
    let cov_cam = w * g.covariance * w.transpose();
    let cov2d = j * cov_cam * j.transpose() + Matrix2::identity() * DILATION;
    Ok((mean, cov2d, pc.z))
}

/// Front-to-back alpha compositing of depth-ordered splats over a background.
/// Stops early once transmittance falls below `transmittance_floor`.
pub fn composite_pixel(
    ordered_splats: &[(f64, [f64; 3])],
    background: [f64; 3],
    transmittance_floor: f64,
) -> [f64; 3] {
    let mut color = [0.0f64; 3];
    let mut transmittance = 1.0f64;
    for &(alpha, rgb) in ordered_splats {
        let w = alpha * transmittance;
        for c in 0..3 {
            color[c] += w * rgb[c];
        }
        transmittance *= 1.0 - alpha;
        if transmittance < transmittance_floor {
            break;
        }
    }
    for c in 0..3 {
        color[c] += transmittance * background[c];
    }
    color
}

/// A projected splat ready for rasterization.
struct PreparedSplat {
    mean: Vector2<f64>,
    cov_inv: Matrix2<f64>,
    depth: f64,
    color: [f64; 3],
    opacity: f64,
    label: i32,
    /// Conservative screen-space radius beyond which alpha < cutoff.
    radius: f64,
}

fn prepare_gaussians(
    gaussians: &[GaussianPrimitive],
    camera: &Camera,
    config: &RenderConfig,
) -> Vec<PreparedSplat> {
    let cam_pos = camera.position();
    let mut splats: Vec<PreparedSplat> = gaussians
        .par_iter()
        .filter_map(|g| {
            if g.opacity < config.alpha_cutoff {
                return None;
            }
            let (mean, cov2d, depth) = project_gaussian_2d(camera, g).ok()?;
            let det = cov2d[(0, 0)] * cov2d[(1, 1)] - cov2d[(0, 1)] * cov2d[(1, 0)];
            if det <= 0.0 || !det.is_finite() {
                return None;
            }
            let cov_inv = Matrix2::new(cov2d[(1, 1)], -cov2d[(0, 1)], -cov2d[(1, 0)], cov2d[(0, 0)])
                / det;
            let dir = g.center - cam_pos;
            let dir = if dir.norm() > 1e-12 {
                dir.normalize()
            } else {
                Vector3::z()
            };
            let color = evaluate_sh(&g.sh, &dir, &g.orientation, config.sh_degree);
            // Largest Mahalanobis distance that can still clear the cutoff,
            // stretched by the major axis of the screen-space footprint.
            let q_max = 2.0 * (g.opacity / config.alpha_cutoff).ln();
            let half_trace = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
            let disc = (0.5 * (cov2d[(0, 0)] - cov2d[(1, 1)])).powi(2)
                + cov2d[(0, 1)] * cov2d[(0, 1)];
            let lambda_max = half_trace + disc.sqrt();
            let radius = (q_max.max(0.0) * lambda_max).sqrt();
            Some(PreparedSplat {
                mean,
                cov_inv,
                depth,
                color,
                opacity: g.opacity,
                label: g.label as i32,
                radius,
            })
        })
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth));
    splats
}

/// Rasterizes prepared splats tile by tile. Splat order must already be
/// front-to-back; binning preserves it per tile.
fn rasterize(splats: &[PreparedSplat], camera: &Camera, config: &RenderConfig) -> RenderOutput {
    let (width, height) = (camera.width, camera.height);
    let mut out = RenderOutput::background(width, height, config.background);
    if splats.is_empty() || width == 0 || height == 0 {
        return out;
    }
    let tile = config.tile_size.max(1);
    let tiles_x = width.div_ceil(tile);
    let tiles_y = height.div_ceil(tile);

    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); tiles_x * tiles_y];
    for (idx, s) in splats.iter().enumerate() {
        let x0 = ((s.mean.x - s.radius).floor().max(0.0)) as usize;
        let y0 = ((s.mean.y - s.radius).floor().max(0.0)) as usize;
        if s.mean.x + s.radius < 0.0 || s.mean.y + s.radius < 0.0 {
            continue;
        }
        let x1 = (s.mean.x + s.radius).ceil() as usize;
        let y1 = (s.mean.y + s.radius).ceil() as usize;
        if x0 >= width || y0 >= height {
            continue;
        }
        let (tx0, ty0) = (x0 / tile, y0 / tile);
        let (tx1, ty1) = ((x1.min(width - 1)) / tile, (y1.min(height - 1)) / tile);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                bins[ty * tiles_x + tx].push(idx);
            }
        }
    }

    struct TileResult {
        tx: usize,
        ty: usize,
        color: Vec<[f64; 3]>,
        labels: Vec<i32>,
        depth: Vec<f64>,
    }

    let results: Vec<TileResult> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|tidx| {
            let (tx, ty) = (tidx % tiles_x, tidx / tiles_x);
            let x_lo = tx * tile;
            let y_lo = ty * tile;
            let x_hi = (x_lo + tile).min(width);
            let y_hi = (y_lo + tile).min(height);
            let w = x_hi - x_lo;
            let h = y_hi - y_lo;
            let mut color = vec![config.background; w * h];
            let mut labels = vec![-1i32; w * h];
            let mut depth = vec![f64::INFINITY; w * h];
            let bin = &bins[tidx];
            for py in y_lo..y_hi {
                for px in x_lo..x_hi {
                    let pixel = Vector2::new(px as f64, py as f64);
                    let mut acc = [0.0f64; 3];
                    let mut transmittance = 1.0f64;
                    let mut cum = 0.0f64;
                    let mut label = -1i32;
                    let mut z = f64::INFINITY;
                    for &si in bin {
                        let s = &splats[si];
                        let delta = pixel - s.mean;
                        let q = delta.dot(&(s.cov_inv * delta));
                        let alpha = s.opacity * (-0.5 * q).exp();
                        if alpha < config.alpha_cutoff {
                            continue;
                        }
                        let wgt = alpha * transmittance;
                        for c in 0..3 {
                            acc[c] += wgt * s.color[c];
                        }
                        cum += wgt;
                        if label == -1 && cum > 0.5 {
                            label = s.label;
                            z = s.depth;
                        }
                        transmittance *= 1.0 - alpha;
                        if transmittance < config.transmittance_floor {
                            break;
                        }
                    }
                    for c in 0..3 {
                        acc[c] += transmittance * config.background[c];
                    }
                    let o = (py - y_lo) * w + (px - x_lo);
                    color[o] = acc;
                    labels[o] = label;
                    depth[o] = z;
                }
            }
            TileResult {
                tx,
                ty,
                color,
                labels,
                depth,
            }
        })
        .collect();

    for r in results {
        let x_lo = r.tx * tile;
        let y_lo = r.ty * tile;
        let x_hi = (x_lo + tile).min(width);
        let w = x_hi - x_lo;
        for (row, py) in (y_lo..(y_lo + r.color.len() / w)).enumerate() {
            for col in 0..w {
                let src = row * w + col;
                let dst = py * width + x_lo + col;
                out.color[dst] = r.color[src];
                out.instance_map[dst] = r.labels[src];
                out.depth[dst] = r.depth[src];
            }
        }
    }
    out
}

/// Renders 3D Gaussians. Primitives behind the near plane or with degenerate
/// screen footprints are skipped.
pub fn render(
    gaussians: &[GaussianPrimitive],
    camera: &Camera,
    config: &RenderConfig,
) -> RenderOutput {
    let splats = prepare_gaussians(gaussians, camera, config);
    rasterize(&splats, camera, config)
}

/// Renders surfels by intersecting each pixel's view ray with every surfel's
/// tangent plane and weighting by `exp(−(u²+v²)/2)`. Rays nearly parallel to
/// a plane contribute nothing.
pub fn render_surfels(
    surfels: &[SurfelPrimitive],
    camera: &Camera,
    config: &RenderConfig,
) -> RenderOutput {
    let (width, height) = (camera.width, camera.height);
    let mut out = RenderOutput::background(width, height, config.background);
    if surfels.is_empty() {
        return out;
    }
    let cam_pos = camera.position();
    let rot_t = camera.extrinsic.rotation.transpose();

    struct PreparedSurfel {
        center: Vector3<f64>,
        u_axis: Vector3<f64>,
        v_axis: Vector3<f64>,
        color: [f64; 3],
        opacity: f64,
        label: i32,
    }
    let prepared: Vec<PreparedSurfel> = surfels
        .iter()
        .filter(|s| s.opacity >= config.alpha_cutoff)
        .map(|s| {
            let dir = s.center - cam_pos;
            let dir = if dir.norm() > 1e-12 {
                dir.normalize()
            } else {
                Vector3::z()
            };
            PreparedSurfel {
                center: s.center,
                u_axis: s.t_u * s.s_u,
                v_axis: s.t_v * s.s_v,
                color: evaluate_sh(&s.sh, &dir, &s.orientation, config.sh_degree),
                opacity: s.opacity,
                label: s.label as i32,
            }
        })
        .collect();

    let rows: Vec<Vec<([f64; 3], i32, f64)>> = (0..height)
        .into_par_iter()
        .map(|py| {
            let mut row = Vec::with_capacity(width);
            let mut hits: Vec<(f64, f64, usize)> = Vec::new();
            for px in 0..width {
                let dir_cam = Vector3::new(
                    (px as f64 - camera.cx) / camera.fx,
                    (py as f64 - camera.cy) / camera.fy,
                    1.0,
                );
                let dir = rot_t * dir_cam;
                hits.clear();
                for (i, s) in prepared.iter().enumerate() {
                    if let Some((u, v, t)) =
                        ray_plane_uv(&cam_pos, &dir, &s.center, &s.u_axis, &s.v_axis)
                    {
                        if t <= tol::SPLAT_NEAR {
                            continue;
                        }
                        let alpha = s.opacity * surfel_weight(u, v);
                        if alpha >= config.alpha_cutoff {
                            hits.push((t, alpha, i));
                        }
                    }
                }
                hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
                let mut acc = [0.0f64; 3];
                let mut transmittance = 1.0f64;
                let mut cum = 0.0f64;
                let mut label = -1i32;
                let mut z = f64::INFINITY;
                for &(t, alpha, i) in &hits {
                    let wgt = alpha * transmittance;
                    for c in 0..3 {
                        acc[c] += wgt * prepared[i].color[c];
                    }
                    cum += wgt;
                    if label == -1 && cum > 0.5 {
                        label = prepared[i].label;
                        z = t;
                    }
                    transmittance *= 1.0 - alpha;
                    if transmittance < config.transmittance_floor {
                        break;
                    }
                }
                for c in 0..3 {
                    acc[c] += transmittance * config.background[c];
                }
                row.push((acc, label, z));
            }
            row
        })
        .collect();

    for (py, row) in rows.into_iter().enumerate() {
        for (px, (color, label, z)) in row.into_iter().enumerate() {
            let o = py * width + px;
            out.color[o] = color;
            out.instance_map[o] = label;
            out.depth[o] = z;
        }
    }
    out
}

/// Intersects the ray `o + t·d` with the plane spanned by the scaled tangent
/// axes at `center` and returns the tangent-frame coordinates `(u, v)` and
/// ray parameter `t` (`t` equals camera depth when `d` has unit camera z).
/// None when the ray is parallel to the plane (cosine below 1e-9).
pub fn ray_plane_uv(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    center: &Vector3<f64>,
    u_axis: &Vector3<f64>,
    v_axis: &Vector3<f64>,
) -> Option<(f64, f64, f64)> {
    let normal = u_axis.cross(v_axis);
    let denom = normal.dot(dir);
    if denom.abs() < 1e-9 * normal.norm() * dir.norm() {
        return None;
    }
    let a = Matrix3::from_columns(&[*u_axis, *v_axis, -dir]);
    let b = origin - center;
    let sol = a.lu().solve(&b)?;
    Some((sol.x, sol.y, sol.z))
}
