//! Binary PPM/PGM encoding of render outputs.
//!
//! Color goes out as P6 with maxval 255. The instance map goes out as P5
//! with every label offset by +1 so background (−1) lands on 0; maxval grows
//! to 65535 (big-endian samples, per the netpbm convention) when a label
//! does not fit a single byte.

use super::RenderOutput;
use std::io::{self, Write};
use std::path::Path;

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm(out: &RenderOutput) -> Vec<u8> {
    let mut buf = Vec::with_capacity(32 + out.color.len() * 3);
    buf.extend_from_slice(format!("P6\n{} {}\n255\n", out.width, out.height).as_bytes());
    for px in &out.color {
        buf.push(to_u8(px[0]));
        buf.push(to_u8(px[1]));
        buf.push(to_u8(px[2]));
    }
    buf
}

pub fn write_ppm(path: &Path, out: &RenderOutput) -> io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_ppm(out))
}

pub fn encode_instance_pgm(out: &RenderOutput) -> Vec<u8> {
    let max_label = out.instance_map.iter().copied().max().unwrap_or(-1);
    let maxval: u32 = if max_label + 1 <= 255 { 255 } else { 65535 };
    let mut buf = Vec::new();
    buf.extend_from_slice(format!("P5\n{} {}\n{}\n", out.width, out.height, maxval).as_bytes());
    for &label in &out.instance_map {
        let v = (label + 1).max(0) as u32;
        if maxval == 255 {
            buf.push(v.min(255) as u8);
        } else {
            let v = v.min(65535) as u16;
            buf.extend_from_slice(&v.to_be_bytes());
        }
    }
    buf
}

pub fn write_instance_pgm(path: &Path, out: &RenderOutput) -> io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_instance_pgm(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_payload_size() {
        let out = RenderOutput {
            width: 3,
            height: 2,
            color: vec![[0.0, 0.5, 1.0]; 6],
            instance_map: vec![-1; 6],
            depth: vec![f64::INFINITY; 6],
        };
        let buf = encode_ppm(&out);
        assert!(buf.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(buf.len(), b"P6\n3 2\n255\n".len() + 18);
        // 0.5 rounds to 128.
        assert_eq!(&buf[b"P6\n3 2\n255\n".len()..][..3], &[0, 128, 255]);
    }

    #[test]
    fn pgm_offsets_labels_by_one() {
        let out = RenderOutput {
            width: 2,
            height: 1,
            color: vec![[0.0; 3]; 2],
            instance_map: vec![-1, 4],
            depth: vec![f64::INFINITY; 2],
        };
        let buf = encode_instance_pgm(&out);
        assert!(buf.starts_with(b"P5\n2 1\n255\n"));
        assert_eq!(&buf[b"P5\n2 1\n255\n".len()..], &[0, 5]);
    }
}
