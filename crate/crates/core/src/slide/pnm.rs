//! Binary PPM (P6) and PGM (P5) codecs for slide level payloads.
//!
//! Only the subset the slide directory format needs: maxval 255, binary
//! payloads, `#` comment lines tolerated in headers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::SlideError;

/// Write an RGB8 row-major buffer as a binary PPM (P6, maxval 255).
pub fn write_ppm(path: &Path, width: u32, height: u32, pixels: &[u8]) -> Result<(), SlideError> {
    let expected = width as usize * height as usize * 3;
    if pixels.len() != expected {
        return Err(SlideError::PixelBufferMismatch {
            expected,
            actual: pixels.len(),
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P6\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    w.flush()?;
    Ok(())
}

/// Write a grayscale row-major buffer as a binary PGM (P5, maxval 255).
pub fn write_pgm(path: &Path, width: u32, height: u32, pixels: &[u8]) -> Result<(), SlideError> {
    let expected = width as usize * height as usize;
    if pixels.len() != expected {
        return Err(SlideError::PixelBufferMismatch {
            expected,
            actual: pixels.len(),
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    w.flush()?;
    Ok(())
}

/// Read a binary PPM (P6, maxval 255) into (width, height, RGB8 pixels).
pub fn read_ppm(path: &Path) -> Result<(u32, u32, Vec<u8>), SlideError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;

    let bad = |msg: &str| SlideError::MalformedPnm {
        path: path.to_path_buf(),
        reason: msg.to_string(),
    };

    let mut pos = 0usize;
    let magic = read_token(&data, &mut pos).ok_or_else(|| bad("missing magic number"))?;
    if magic != b"P6" {
        return Err(bad("not a P6 PPM"));
    }
    let width = parse_dim(&data, &mut pos).ok_or_else(|| bad("missing width"))?;
    let height = parse_dim(&data, &mut pos).ok_or_else(|| bad("missing height"))?;
    let maxval = parse_dim(&data, &mut pos).ok_or_else(|| bad("missing maxval"))?;
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    pos += 1;
    let expected = width as usize * height as usize * 3;
    let payload = data.get(pos..).ok_or_else(|| bad("truncated payload"))?;
    if payload.len() != expected {
        return Err(SlideError::PixelBufferMismatch {
            expected,
            actual: payload.len(),
        });
    }
    Ok((width, height, payload.to_vec()))
}

fn parse_dim(data: &[u8], pos: &mut usize) -> Option<u32> {
    let tok = read_token(data, pos)?;
    std::str::from_utf8(tok).ok()?.parse().ok()
}

/// Advance past whitespace and `#` comments, returning the next token.
fn read_token<'a>(data: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &data[start..*pos])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        let pixels: Vec<u8> = (0..2 * 3 * 3).map(|i| i as u8).collect();
        write_ppm(&path, 2, 3, &pixels).unwrap();
        let (w, h, got) = read_ppm(&path).unwrap();
        assert_eq!((w, h), (2, 3));
        assert_eq!(got, pixels);
    }

    #[test]
    fn ppm_rejects_payload_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        std::fs::write(&path, b"P6\n2 2\n255\nshort").unwrap();
        assert!(matches!(
            read_ppm(&path),
            Err(SlideError::PixelBufferMismatch { .. })
        ));
    }

    #[test]
    fn ppm_skips_header_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        std::fs::write(&path, b"P6\n# a comment\n1 1\n255\nabc").unwrap();
        let (w, h, got) = read_ppm(&path).unwrap();
        assert_eq!((w, h, got.as_slice()), (1, 1, b"abc".as_slice()));
    }
}
