//! Netpbm-family image files: binary PPM (P6) for color, PGM (P5) for instance
//! maps and little-endian PFM for depth.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

fn write(path: &Path, bytes: Vec<u8>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingFile { path: path.to_path_buf() });
    }
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn encode_ppm(width: u32, height: u32, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// 8-bit when every value fits, 16-bit big-endian otherwise.
pub fn encode_pgm(width: u32, height: u32, values: &[u16]) -> Vec<u8> {
    let max = values.iter().copied().max().unwrap_or(0);
    if max <= 255 {
        let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
        out.extend(values.iter().map(|&v| v as u8));
        out
    } else {
        let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
        for v in values {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }
}

/// Grayscale PFM, scale -1 (little-endian), rows stored bottom to top.
pub fn encode_pfm(width: u32, height: u32, values: &[f32]) -> Vec<u8> {
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    for row in (0..height as usize).rev() {
        for v in &values[row * width as usize..(row + 1) * width as usize] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_ppm(path: &Path, width: u32, height: u32, rgb: &[u8]) -> Result<()> {
    write(path, encode_ppm(width, height, rgb))
}

pub fn write_pgm(path: &Path, width: u32, height: u32, values: &[u16]) -> Result<()> {
    write(path, encode_pgm(width, height, values))
}

pub fn write_pfm(path: &Path, width: u32, height: u32, values: &[f32]) -> Result<()> {
    write(path, encode_pfm(width, height, values))
}

/// Split off `n` whitespace-separated header tokens; returns them and the payload.
fn header<'a>(bytes: &'a [u8], n: usize, what: &'static str) -> Result<(Vec<String>, &'a [u8])> {
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
            return Err(Error::Malformed {
                what,
                line: 0,
                reason: "truncated header".into(),
            });
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the payload.
    Ok((tokens, bytes.get(i + 1..).unwrap_or(&[])))
}

fn dims(t: &[String], what: &'static str) -> Result<(u32, u32)> {
    let parse = |s: &str| {
        s.parse::<u32>().map_err(|_| Error::Malformed {
            what,
            line: 0,
            reason: format!("bad dimension `{s}`"),
        })
    };
    Ok((parse(&t[1])?, parse(&t[2])?))
}

fn short(what: &'static str) -> Error {
    Error::Malformed {
        what,
        line: 0,
        reason: "payload shorter than header dimensions".into(),
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>)> {
    let (t, data) = header(bytes, 4, "PPM")?;
    if t[0] != "P6" || t[3] != "255" {
        return Err(Error::Malformed {
            what: "PPM",
            line: 0,
            reason: format!("expected 8-bit P6, got {} {}", t[0], t[3]),
        });
    }
    let (w, h) = dims(&t, "PPM")?;
    let n = (w * h * 3) as usize;
    let px = data.get(..n).ok_or_else(|| short("PPM"))?;
    Ok((w, h, px.to_vec()))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<(u32, u32, Vec<u16>)> {
    let (t, data) = header(bytes, 4, "PGM")?;
    if t[0] != "P5" {
        return Err(Error::Malformed {
            what: "PGM",
            line: 0,
            reason: format!("expected P5, got {}", t[0]),
        });
    }
    let (w, h) = dims(&t, "PGM")?;
    let n = (w * h) as usize;
    let values = if t[3] == "255" {
        data.get(..n).ok_or_else(|| short("PGM"))?.iter().map(|&v| v as u16).collect()
    } else {
        data.get(..2 * n)
            .ok_or_else(|| short("PGM"))?
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok((w, h, values))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<(u32, u32, Vec<f32>)> {
    let (t, data) = header(bytes, 4, "PFM")?;
    if t[0] != "Pf" {
        return Err(Error::Malformed {
            what: "PFM",
            line: 0,
            reason: format!("expected grayscale Pf, got {}", t[0]),
        });
    }
    let (w, h) = dims(&t, "PFM")?;
    let scale: f32 = t[3].parse().map_err(|_| Error::Malformed {
        what: "PFM",
        line: 0,
        reason: "bad scale".into(),
    })?;
    let n = (w * h) as usize;
    let raw = data.get(..4 * n).ok_or_else(|| short("PFM"))?;
    let mut values = vec![0f32; n];
    for (k, c) in raw.chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, col) = (h as usize - 1 - k / w as usize, k % w as usize);
        values[row * w as usize + col] = v;
    }
    Ok((w, h, values))
}

pub fn read_ppm(path: &Path) -> Result<(u32, u32, Vec<u8>)> {
    decode_ppm(&read(path)?)
}

pub fn read_pgm(path: &Path) -> Result<(u32, u32, Vec<u16>)> {
    decode_pgm(&read(path)?)
}

pub fn read_pfm(path: &Path) -> Result<(u32, u32, Vec<f32>)> {
    decode_pfm(&read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_layout() {
        let bytes = encode_ppm(2, 1, &[1, 2, 3, 4, 5, 6]);
        assert_eq!(&bytes[..11], b"P6\n2 1\n255\n");
        assert_eq!(decode_ppm(&bytes).unwrap(), (2, 1, vec![1, 2, 3, 4, 5, 6]));
    }

    #[test]
    fn pfm_is_little_endian_bottom_up() {
        let bytes = encode_pfm(1, 2, &[1.5, -2.0]);
        let payload = &bytes[bytes.len() - 8..];
        assert_eq!(&payload[..4], &(-2.0f32).to_le_bytes());
        assert_eq!(&payload[4..], &1.5f32.to_le_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap(), (1, 2, vec![1.5, -2.0]));
    }

    #[test]
    fn pgm_switches_to_sixteen_bit() {
        let small = encode_pgm(3, 1, &[0, 7, 255]);
        assert_eq!(small.len(), "P5\n3 1\n255\n".len() + 3);
        assert_eq!(decode_pgm(&small).unwrap().2, vec![0, 7, 255]);
        let big = encode_pgm(2, 1, &[300, 1]);
        assert_eq!(decode_pgm(&big).unwrap().2, vec![300, 1]);
    }

    #[test]
    fn file_round_trip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/d.pfm");
        write_pfm(&p, 2, 2, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(read_pfm(&p).unwrap().2, vec![0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(read_ppm(&dir.path().join("none.ppm")), Err(Error::MissingFile { .. })));
        assert!(decode_ppm(b"P6\n4 4\n255\n\x00").is_err());
    }
}
