//! Binary PPM ("P6", maxval 255). Written with the canonical header
//! `P6\n<w> <h>\n255\n`.

use std::fs;
use std::path::Path;

use cnnkit_core::image::Image;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MAGIC: &[u8; 2] = b"P6";

struct Header {
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    if bytes.get(..2) != Some(MAGIC.as_slice()) {
        return Err(Error::format(path, "missing P6 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::format(path, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::format(path, format!("bad header field {}", i + 1)))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(
            path,
            "header must end with a single whitespace byte",
        ));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::format(
            path,
            format!("only maxval 255 is supported, got {maxval}"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(path, format!("empty image {width}x{height}")));
    }
    Ok(Header {
        width,
        height,
        data_start: pos + 1,
    })
}

/// Raw 8-bit samples: `(height, width, rgb bytes)`.
pub fn decode_bytes(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let h = parse_header(bytes, path)?;
    let need = h.width * h.height * 3;
    let payload = &bytes[h.data_start..];
    if payload.len() < need {
        return Err(Error::format(
            path,
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    Ok((h.height, h.width, payload[..need].to_vec()))
}

/// Pixels mapped to `value / 255`.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Image> {
    let (h, w, raw) = decode_bytes(bytes, path)?;
    let data = raw.iter().map(|&b| f32::from(b) / 255.0).collect();
    Image::new(h, w, data).map_err(|e| Error::format(path, e.to_string()))
}

/// Quantizes to 8 bits with rounding; values are clamped to [0, 1].
pub fn encode(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(
        img.data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn read(path: &Path) -> Result<Image> {
    decode(&fs::read(path).map_err(Error::io(path))?, path)
}

pub fn write(path: &Path, img: &Image) -> Result<()> {
    write_atomic(path, &encode(img))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_values() {
        let bytes = b"P6\n1 1\n255\n\xff\x00\x80";
        let img = decode(bytes, Path::new("p.ppm")).unwrap();
        assert_eq!(img.pixel(0, 0), [1.0, 0.0, 128.0 / 255.0]);
        assert!((img.pixel(0, 0)[2] - 0.50196).abs() < 1e-5);
        assert_eq!(encode(&img), bytes);
    }

    #[test]
    fn comments_and_errors() {
        let img = decode(
            b"P6 # comment\n2 1 255\n\x00\x00\x00\x01\x01\x01",
            Path::new("c.ppm"),
        )
        .unwrap();
        assert_eq!((img.height(), img.width()), (1, 2));
        assert!(decode(b"P6\n2 2\n255\n\x00", Path::new("t.ppm")).is_err());
        assert!(decode(
            b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00",
            Path::new("m.ppm")
        )
        .is_err());
        assert!(decode(b"P3\n1 1\n255\n0 0 0", Path::new("a.ppm")).is_err());
    }
}
