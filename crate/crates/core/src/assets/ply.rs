//! Binary little-endian PLY I/O for Gaussian splat point sets, following the
//! widespread splatting layout: positions, `f_dc_*`/`f_rest_*` SH
//! coefficients (channel-major rest block), pre-sigmoid opacity, log scales,
//! and a `rot_0..3` (w, x, y, z) covariance quaternion — extended with an
//! integer `instance_id` and, when an instance has been rigidly moved, an
//! `orient_0..3` quaternion holding the accumulated rotation used for SH
//! view-direction queries.

use super::AssetError;
use crate::geometry::GaussianPrimitive;
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use std::io::Write as _;
use std::path::Path;

/// Pre-sigmoid opacities are clamped to this magnitude; sigmoid(±40) is
/// indistinguishable from 0/1 in f32.
const LOGIT_CLAMP: f64 = 40.0;

fn logit(x: f64) -> f64 {
    let x = x.clamp(1e-18, 1.0 - 1e-18);
    (x / (1.0 - x)).ln().clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Covariance → (log scales, quaternion) for serialization. Eigenvalues are
/// sorted descending and the eigenbasis fixed to det +1.
fn covariance_to_scale_rot(c: &Matrix3<f64>) -> ([f64; 3], UnitQuaternion<f64>) {
    let eig = nalgebra::SymmetricEigen::new(*c);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut basis = Matrix3::zeros();
    let mut log_scales = [0.0f64; 3];
    for (col, &src) in order.iter().enumerate() {
        basis.set_column(col, &eig.eigenvectors.column(src));
        log_scales[col] = 0.5 * eig.eigenvalues[src].max(1e-300).ln();
    }
    if basis.determinant() < 0.0 {
        basis.column_mut(2).neg_mut();
    }
    (log_scales, UnitQuaternion::from_matrix(&basis))
}

fn scale_rot_to_covariance(log_scales: &[f64; 3], q: &UnitQuaternion<f64>) -> Matrix3<f64> {
    let r = q.to_rotation_matrix().into_inner();
    let s2 = Matrix3::from_diagonal(&Vector3::new(
        (2.0 * log_scales[0]).exp(),
        (2.0 * log_scales[1]).exp(),
        (2.0 * log_scales[2]).exp(),
    ));
    r * s2 * r.transpose()
}

fn quat_wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

fn quat_from_wxyz(v: [f64; 4]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]))
}

/// Serializes a splat set. All Gaussians must share one SH degree.
pub fn encode_splat_ply(gaussians: &[GaussianPrimitive]) -> Result<Vec<u8>, AssetError> {
    let degree = gaussians.first().map(|g| g.sh_degree()).unwrap_or(0);
    for (i, g) in gaussians.iter().enumerate() {
        if g.sh_degree() != degree {
            return Err(AssetError::Parse {
                context: "splat ply".into(),
                message: format!(
                    "gaussian {i} has SH degree {} but the scene uses {degree}",
                    g.sh_degree()
                ),
            });
        }
    }
    let n_rest = ((degree + 1) * (degree + 1) - 1) * 3;
    let with_orientation = gaussians
        .iter()
        .any(|g| (g.orientation - Matrix3::identity()).abs().max() > 0.0);

    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", gaussians.len()));
    for name in ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"] {
        header.push_str(&format!("property float {name}\n"));
    }
    for i in 0..n_rest {
        header.push_str(&format!("property float f_rest_{i}\n"));
    }
    for name in [
        "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
    ] {
        header.push_str(&format!("property float {name}\n"));
    }
    header.push_str("property int instance_id\n");
    if with_orientation {
        for i in 0..4 {
            header.push_str(&format!("property float orient_{i}\n"));
        }
    }
    header.push_str("end_header\n");

    let n_coeffs = (degree + 1) * (degree + 1);
    let mut buf = header.into_bytes();
    let put = |v: f32, buf: &mut Vec<u8>| buf.extend_from_slice(&v.to_le_bytes());
    for g in gaussians {
        for c in [g.center.x, g.center.y, g.center.z] {
            put(c as f32, &mut buf);
        }
        for ch in 0..3 {
            put(g.sh[0][ch] as f32, &mut buf);
        }
        // Rest block is channel-major: all coeffs of R, then G, then B.
        for ch in 0..3 {
            for i in 1..n_coeffs {
                put(g.sh[i][ch] as f32, &mut buf);
            }
        }
        put(logit(g.opacity) as f32, &mut buf);
        let (log_scales, q) = covariance_to_scale_rot(&g.covariance);
        for s in log_scales {
            put(s as f32, &mut buf);
        }
        for v in quat_wxyz(&q) {
            put(v as f32, &mut buf);
        }
        buf.extend_from_slice(&(g.label as i32).to_le_bytes());
        if with_orientation {
            let oq = UnitQuaternion::from_matrix(&g.orientation);
            for v in quat_wxyz(&oq) {
                put(v as f32, &mut buf);
            }
        }
    }
    Ok(buf)
}

pub fn write_splat_ply(path: &Path, gaussians: &[GaussianPrimitive]) -> Result<(), AssetError> {
    let data = encode_splat_ply(gaussians)?;
    let mut f = std::fs::File::create(path).map_err(|e| AssetError::io(path, e))?;
    f.write_all(&data).map_err(|e| AssetError::io(path, e))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    F32,
    F64,
    I32,
    U8,
    I16,
    U16,
    U32,
    I8,
}

impl ScalarType {
    fn parse(s: &str) -> Option<(Self, usize)> {
        match s {
            "float" | "float32" => Some((ScalarType::F32, 4)),
            "double" | "float64" => Some((ScalarType::F64, 8)),
            "int" | "int32" => Some((ScalarType::I32, 4)),
            "uint" | "uint32" => Some((ScalarType::U32, 4)),
            "short" | "int16" => Some((ScalarType::I16, 2)),
            "ushort" | "uint16" => Some((ScalarType::U16, 2)),
            "char" | "int8" => Some((ScalarType::I8, 1)),
            "uchar" | "uint8" => Some((ScalarType::U8, 1)),
            _ => None,
        }
    }

    fn read(&self, bytes: &[u8]) -> f64 {
        match self {
            ScalarType::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
            ScalarType::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::I16 => i16::from_le_bytes(bytes[..2].try_into().unwrap()) as f64,
            ScalarType::U16 => u16::from_le_bytes(bytes[..2].try_into().unwrap()) as f64,
            ScalarType::I8 => bytes[0] as i8 as f64,
            ScalarType::U8 => bytes[0] as f64,
        }
    }
}

struct PropertyLayout {
    name: String,
    ty: ScalarType,
    offset: usize,
}

pub fn decode_splat_ply(data: &[u8], origin: &str) -> Result<Vec<GaussianPrimitive>, AssetError> {
    let parse_err = |message: String| AssetError::Parse {
        context: origin.to_string(),
        message,
    };
    let header_end = data
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| parse_err("missing end_header".into()))?
        + 11;
    let header = std::str::from_utf8(&data[..header_end])
        .map_err(|_| parse_err("header is not UTF-8".into()))?;

    let mut count = 0usize;
    let mut props: Vec<PropertyLayout> = Vec::new();
    let mut row_size = 0usize;
    let mut saw_format = false;
    for line in header.lines() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("format") => {
                let fmt = parts.next().unwrap_or("");
                if fmt != "binary_little_endian" {
                    return Err(parse_err(format!("unsupported format {fmt:?}")));
                }
                saw_format = true;
            }
            Some("element") => {
                if parts.next() == Some("vertex") {
                    count = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err("bad vertex count".into()))?;
                }
            }
            Some("property") => {
                let ty_name = parts.next().unwrap_or("");
                let (ty, size) = ScalarType::parse(ty_name)
                    .ok_or_else(|| parse_err(format!("unsupported property type {ty_name:?}")))?;
                let name = parts
                    .next()
                    .ok_or_else(|| parse_err("property without a name".into()))?;
                props.push(PropertyLayout {
                    name: name.to_string(),
                    ty,
                    offset: row_size,
                });
                row_size += size;
            }
            _ => {}
        }
    }
    if !saw_format {
        return Err(parse_err("missing format line".into()));
    }
    let body = &data[header_end..];
    if body.len() < count * row_size {
        return Err(parse_err(format!(
            "payload has {} bytes, {} rows × {row_size} bytes required",
            body.len(),
            count
        )));
    }

    let find = |name: &str| props.iter().find(|p| p.name == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| parse_err(format!("missing required property {name}")))
    };
    let n_rest = props
        .iter()
        .filter(|p| p.name.starts_with("f_rest_"))
        .count();
    if n_rest % 3 != 0 {
        return Err(parse_err(format!("f_rest count {n_rest} not divisible by 3")));
    }
    let n_coeffs = n_rest / 3 + 1;
    if crate::geometry::degree_for_coeff_count(n_coeffs).is_none() {
        return Err(parse_err(format!(
            "{n_coeffs} SH coefficients per channel is not (L+1)² for any L"
        )));
    }

    // Resolve every column once, before the row loop.
    let pos = [require("x")?, require("y")?, require("z")?];
    let dc: Vec<Option<&PropertyLayout>> = (0..3).map(|c| find(&format!("f_dc_{c}"))).collect();
    let rest: Vec<&PropertyLayout> = (0..n_rest)
        .map(|i| require(&format!("f_rest_{i}")))
        .collect::<Result<_, _>>()?;
    let opacity_col = require("opacity")?;
    let scale_cols = [require("scale_0")?, require("scale_1")?, require("scale_2")?];
    let rot_cols = [
        require("rot_0")?,
        require("rot_1")?,
        require("rot_2")?,
        require("rot_3")?,
    ];
    let instance_col = find("instance_id");
    let orient_cols: Option<Vec<&PropertyLayout>> = if find("orient_0").is_some() {
        Some(
            (0..4)
                .map(|i| require(&format!("orient_{i}")))
                .collect::<Result<_, _>>()?,
        )
    } else {
        None
    };

    let get = |row: &[u8], p: &PropertyLayout| p.ty.read(&row[p.offset..]);
    let mut gaussians = Vec::with_capacity(count);
    for i in 0..count {
        let row = &body[i * row_size..(i + 1) * row_size];
        let center = Vector3::new(get(row, pos[0]), get(row, pos[1]), get(row, pos[2]));
        let mut sh = vec![[0.0f64; 3]; n_coeffs];
        for (ch, col) in dc.iter().enumerate() {
            if let Some(p) = col {
                sh[0][ch] = get(row, p);
            }
        }
        for ch in 0..3 {
            for k in 1..n_coeffs {
                sh[k][ch] = get(row, rest[ch * (n_coeffs - 1) + (k - 1)]);
            }
        }
        let opacity = sigmoid(get(row, opacity_col));
        let log_scales = [
            get(row, scale_cols[0]),
            get(row, scale_cols[1]),
            get(row, scale_cols[2]),
        ];
        let rot = [
            get(row, rot_cols[0]),
            get(row, rot_cols[1]),
            get(row, rot_cols[2]),
            get(row, rot_cols[3]),
        ];
        let covariance = scale_rot_to_covariance(&log_scales, &quat_from_wxyz(rot));
        let label = match instance_col {
            Some(p) => {
                let v = get(row, p);
                if v < 0.0 {
                    return Err(parse_err(format!("row {i}: negative instance_id {v}")));
                }
                v as u32
            }
            None => 0,
        };
        let mut g = GaussianPrimitive::new(center, opacity, covariance, sh, label);
        if let Some(cols) = &orient_cols {
            let oq = [
                get(row, cols[0]),
                get(row, cols[1]),
                get(row, cols[2]),
                get(row, cols[3]),
            ];
            g.orientation = quat_from_wxyz(oq).to_rotation_matrix().into_inner();
        }
        gaussians.push(g);
    }
    Ok(gaussians)
}

pub fn read_splat_ply(path: &Path) -> Result<Vec<GaussianPrimitive>, AssetError> {
    let data = std::fs::read(path).map_err(|e| AssetError::io(path, e))?;
    decode_splat_ply(&data, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_gaussian(rng: &mut StdRng, degree: usize, label: u32) -> GaussianPrimitive {
        let n = (degree + 1) * (degree + 1);
        let sh = (0..n)
            .map(|_| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        GaussianPrimitive::new(
            Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ),
            rng.gen_range(0.05..0.95),
            crate::testutil::random_spd(rng) * 0.01,
            sh,
            label,
        )
    }

    #[test]
    fn ply_round_trip_within_f32_precision() {
        let mut rng = StdRng::seed_from_u64(91);
        let gaussians: Vec<_> = (0..32).map(|i| random_gaussian(&mut rng, 3, i % 3)).collect();
        let data = encode_splat_ply(&gaussians).unwrap();
        let back = decode_splat_ply(&data, "mem").unwrap();
        assert_eq!(back.len(), gaussians.len());
        for (a, b) in gaussians.iter().zip(&back) {
            assert_eq!(a.label, b.label);
            assert!((a.center - b.center).norm() <= 1e-6 * (1.0 + a.center.norm()));
            assert!((a.opacity - b.opacity).abs() < 1e-6);
            let cov_err = (a.covariance - b.covariance).abs().max();
            let cov_scale = a.covariance.abs().max().max(1e-12);
            assert!(cov_err / cov_scale < 1e-4, "cov rel err {}", cov_err / cov_scale);
            for (x, y) in a.sh.iter().zip(&b.sh) {
                for c in 0..3 {
                    assert!((x[c] - y[c]).abs() <= 1e-6 * (1.0 + x[c].abs()));
                }
            }
        }
    }

    #[test]
    fn orientation_survives_round_trip_when_present() {
        let mut rng = StdRng::seed_from_u64(92);
        let mut g = random_gaussian(&mut rng, 1, 0);
        g.orientation = crate::testutil::random_rotation(&mut rng);
        let data = encode_splat_ply(std::slice::from_ref(&g)).unwrap();
        let back = decode_splat_ply(&data, "mem").unwrap();
        assert!((back[0].orientation - g.orientation).abs().max() < 1e-6);
    }

    #[test]
    fn degree_zero_layout_has_no_rest_block() {
        let mut rng = StdRng::seed_from_u64(93);
        let g = random_gaussian(&mut rng, 0, 5);
        let data = encode_splat_ply(std::slice::from_ref(&g)).unwrap();
        let header = String::from_utf8_lossy(&data[..300]).to_string();
        assert!(!header.contains("f_rest_0"));
        let back = decode_splat_ply(&data, "mem").unwrap();
        assert_eq!(back[0].sh.len(), 1);
        assert_eq!(back[0].label, 5);
    }

    #[test]
    fn truncated_payload_is_reported() {
        let mut rng = StdRng::seed_from_u64(94);
        let g = random_gaussian(&mut rng, 0, 0);
        let mut data = encode_splat_ply(std::slice::from_ref(&g)).unwrap();
        data.truncate(data.len() - 3);
        let err = decode_splat_ply(&data, "mem").unwrap_err();
        assert!(err.to_string().contains("payload"), "{err}");
    }

    #[test]
    fn covariance_factorization_round_trips() {
        let mut rng = StdRng::seed_from_u64(95);
        for _ in 0..200 {
            let c = crate::testutil::random_spd(&mut rng) * rng.gen_range(0.001..10.0);
            let (ls, q) = covariance_to_scale_rot(&c);
            let back = scale_rot_to_covariance(&ls, &q);
            let scale = c.abs().max();
            assert!((c - back).abs().max() / scale < 1e-9);
        }
    }
}
