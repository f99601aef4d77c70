//! Image file formats: PFM for real-valued maps, PGM P5 for 8-bit maps and
//! masks, PPM P6 for overlays.
//!
//! PFM files are written little-endian (scale `-1.0`) with the bottom row
//! first, as the format prescribes. In-memory grids are always top row first.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use thiserror::Error;

use crate::grid::{Grid, Mask};
use crate::render::RenderBuffers;
use crate::scene::CameraModel;
use crate::tactile::TactileFrame;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {0}")]
    Format(String),
    #[error("instance id {0} does not fit an 8-bit map")]
    IdOverflow(u32),
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<(), IoError> {
    fs::create_dir_all(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Splits off `n` whitespace-separated header tokens (skipping `#` comments)
/// and returns them with the offset of the first data byte.
fn header(bytes: &[u8], n: usize, what: &str) -> Result<(Vec<String>, usize), IoError> {
    let bad = || IoError::Format(what.to_string());
    let mut tokens = Vec::with_capacity(n);
    let mut i = 0;
    while tokens.len() < n {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the data.
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return Err(bad());
    }
    Ok((tokens, i + 1))
}

fn parse_dims(w: &str, h: &str, what: &str) -> Result<(usize, usize), IoError> {
    let bad = || IoError::Format(what.to_string());
    let w: usize = w.parse().map_err(|_| bad())?;
    let h: usize = h.parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

/// Real-valued image with 1 or 3 interleaved channels, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

pub fn encode_pfm(img: &PfmImage) -> Vec<u8> {
    let tag = if img.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    let row = img.width * img.channels;
    for y in (0..img.height).rev() {
        for v in &img.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<PfmImage, IoError> {
    let (t, start) = header(bytes, 4, "PFM header")?;
    let channels = match t[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(IoError::Format("PFM magic".into())),
    };
    let (width, height) = parse_dims(&t[1], &t[2], "PFM size")?;
    let scale: f32 = t[3].parse().map_err(|_| IoError::Format("PFM scale".into()))?;
    if scale == 0.0 {
        return Err(IoError::Format("PFM scale".into()));
    }
    let row = width * channels;
    let body = &bytes[start..];
    if body.len() != row * height * 4 {
        return Err(IoError::Format("PFM data length".into()));
    }
    let mut data = vec![0f32; row * height];
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (k / row, k % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Ok(PfmImage {
        width,
        height,
        channels,
        data,
    })
}

pub fn encode_pgm(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

/// 8-bit P5 image as `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), IoError> {
    let (t, start) = header(bytes, 4, "PGM header")?;
    if t[0] != "P5" || t[3] != "255" {
        return Err(IoError::Format("PGM: only 8-bit P5 is supported".into()));
    }
    let (w, h) = parse_dims(&t[1], &t[2], "PGM size")?;
    let body = &bytes[start..];
    if body.len() != w * h {
        return Err(IoError::Format("PGM data length".into()));
    }
    Ok((w, h, body.to_vec()))
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[[u8; 3]]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for px in rgb {
        out.extend_from_slice(px);
    }
    out
}

pub fn mask_to_pgm(mask: &Mask) -> Vec<u8> {
    let data: Vec<u8> = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_pgm(mask.width(), mask.height(), &data)
}

/// Any non-zero pixel is set.
pub fn pgm_to_mask(bytes: &[u8]) -> Result<Mask, IoError> {
    let (w, h, data) = decode_pgm(bytes)?;
    Ok(Grid::from_vec(w, h, data.into_iter().map(|v| v != 0).collect()))
}

pub fn scalar_pfm(grid: &Grid<f64>) -> PfmImage {
    PfmImage {
        width: grid.width(),
        height: grid.height(),
        channels: 1,
        data: grid.as_slice().iter().map(|&v| v as f32).collect(),
    }
}

/// Depth map with non-finite values written as 0, plus the validity mask.
pub fn depth_to_pfm(depth: &Grid<f64>) -> (PfmImage, Mask) {
    let valid = depth.map(|d| d.is_finite());
    let img = PfmImage {
        width: depth.width(),
        height: depth.height(),
        channels: 1,
        data: depth
            .as_slice()
            .iter()
            .map(|&d| if d.is_finite() { d as f32 } else { 0.0 })
            .collect(),
    };
    (img, valid)
}

pub fn normals_to_pfm(normals: &Grid<Vector3<f64>>) -> PfmImage {
    PfmImage {
        width: normals.width(),
        height: normals.height(),
        channels: 3,
        data: normals
            .as_slice()
            .iter()
            .flat_map(|n| [n.x as f32, n.y as f32, n.z as f32])
            .collect(),
    }
}

pub fn instance_to_pgm(instance: &Grid<u32>) -> Result<Vec<u8>, IoError> {
    let data = instance
        .as_slice()
        .iter()
        .map(|&id| u8::try_from(id).map_err(|_| IoError::IdOverflow(id)))
        .collect::<Result<Vec<u8>, _>>()?;
    Ok(encode_pgm(instance.width(), instance.height(), &data))
}

pub fn tactile_frame_pfm(frame: &TactileFrame) -> PfmImage {
    scalar_pfm(&frame.image)
}

pub const DEPTH_FILE: &str = "depth.pfm";
pub const VALID_FILE: &str = "valid.pgm";
pub const NORMALS_FILE: &str = "normals.pfm";
pub const INSTANCE_FILE: &str = "instance.pgm";

pub fn write_buffers(dir: &Path, buffers: &RenderBuffers) -> Result<(), IoError> {
    let (depth, valid) = depth_to_pfm(&buffers.depth);
    write_file(&dir.join(DEPTH_FILE), &encode_pfm(&depth))?;
    write_file(&dir.join(VALID_FILE), &mask_to_pgm(&valid))?;
    write_file(&dir.join(NORMALS_FILE), &encode_pfm(&normals_to_pfm(&buffers.normals)))?;
    write_file(&dir.join(INSTANCE_FILE), &instance_to_pgm(&buffers.instance)?)
}

/// Buffers written by [`write_buffers`], at single precision.
pub fn read_buffers(dir: &Path, camera: &CameraModel) -> Result<RenderBuffers, IoError> {
    let depth = decode_pfm(&read_file(&dir.join(DEPTH_FILE))?)?;
    let valid = pgm_to_mask(&read_file(&dir.join(VALID_FILE))?)?;
    let normals = decode_pfm(&read_file(&dir.join(NORMALS_FILE))?)?;
    let (iw, ih, ids) = decode_pgm(&read_file(&dir.join(INSTANCE_FILE))?)?;
    let dims = (depth.width, depth.height);
    if depth.channels != 1
        || normals.channels != 3
        || valid.dims() != dims
        || (normals.width, normals.height) != dims
        || (iw, ih) != dims
        || (camera.width, camera.height) != dims
    {
        return Err(IoError::Format("buffer sizes disagree".into()));
    }
    let (w, h) = dims;
    Ok(RenderBuffers {
        camera: *camera,
        depth: Grid::from_vec(
            w,
            h,
            depth
                .data
                .iter()
                .zip(valid.as_slice())
                .map(|(&d, &ok)| if ok { d as f64 } else { f64::INFINITY })
                .collect(),
        ),
        normals: Grid::from_vec(
            w,
            h,
            normals
                .data
                .chunks_exact(3)
                .map(|c| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64))
                .collect(),
        ),
        instance: Grid::from_vec(w, h, ids.into_iter().map(u32::from).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_keeps_row_order() {
        let img = PfmImage {
            width: 3,
            height: 2,
            channels: 1,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5],
        };
        let bytes = encode_pfm(&img);
        assert!(bytes.starts_with(b"Pf\n3 2\n-1.0\n"));
        // Bottom row is stored first.
        let body = &bytes[bytes.len() - 24..];
        assert_eq!(f32::from_le_bytes(body[0..4].try_into().unwrap()), 4.0);
        assert_eq!(decode_pfm(&bytes).unwrap(), img);

        let rgb = PfmImage {
            width: 1,
            height: 2,
            channels: 3,
            data: vec![0.0, 0.0, 1.0, -1.0, 0.5, 0.25],
        };
        assert_eq!(decode_pfm(&encode_pfm(&rgb)).unwrap(), rgb);
    }

    #[test]
    fn big_endian_pfm_is_read() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&2.5f32.to_be_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().data, vec![2.5]);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(decode_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0").is_err());
        assert!(decode_pfm(b"P5\n1 1\n255\n\0").is_err());
        assert!(decode_pgm(b"P5\n2 1\n65535\n\0\0\0\0").is_err());
        assert!(decode_pgm(b"P5 # c\n").is_err());
    }

    #[test]
    fn pgm_with_comment_and_masks() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x00\x07".to_vec();
        assert_eq!(decode_pgm(&bytes).unwrap(), (2, 1, vec![0, 7]));
        let m = Mask::disk(9, 7, 4.0, 3.0, 2.0);
        assert_eq!(pgm_to_mask(&mask_to_pgm(&m)).unwrap(), m);
    }

    #[test]
    fn depth_sentinel_and_instance_range() {
        let depth = Grid::from_vec(2, 1, vec![0.5, f64::INFINITY]);
        let (img, valid) = depth_to_pfm(&depth);
        assert_eq!(img.data, vec![0.5, 0.0]);
        assert_eq!(valid.as_slice(), &[true, false]);
        assert!(matches!(
            instance_to_pgm(&Grid::from_vec(1, 1, vec![256])),
            Err(IoError::IdOverflow(256))
        ));
    }
}
