//! Netpbm codecs: binary PGM (P5) and PPM (P6) images, ASCII (P1) and
//! binary (P4) PBM boundary bitmaps. Maxval is fixed at 255.

use std::fs;
use std::path::Path;

use evoseg::bench::BoundaryMap;
use evoseg::image::ImageBuffer;

use crate::{Error, Result};

/// Header tokenizer: whitespace-separated tokens with `#` comments running
/// to end of line. Returns the byte offset just past the single whitespace
/// that terminates the last requested token.
fn tokens(data: &[u8], count: usize, path: &Path) -> Result<(Vec<u64>, usize)> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0;
    while out.len() < count {
        while i < data.len() {
            match data[i] {
                b'#' => {
                    while i < data.len() && data[i] != b'\n' {
                        i += 1;
                    }
                }
                b' ' | b'\t' | b'\r' | b'\n' => i += 1,
                _ => break,
            }
        }
        let start = i;
        while i < data.len() && data[i].is_ascii_digit() {
            i += 1;
        }
        if start == i {
            return Err(Error::format(path, "malformed header: expected an integer"));
        }
        let text = std::str::from_utf8(&data[start..i]).unwrap();
        out.push(
            text.parse::<u64>()
                .map_err(|_| Error::format(path, format!("bad header value {text:?}")))?,
        );
        if out.len() == count {
            if i >= data.len() {
                return Err(Error::format(path, "truncated header"));
            }
            i += 1; // exactly one whitespace byte before the payload
        }
    }
    Ok((out, i))
}

/// Loads a binary PGM (1 channel) or PPM (3 channels) with maxval 255.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let data = fs::read(path)?;
    if data.len() < 2 {
        return Err(Error::format(path, "not a Netpbm file"));
    }
    let channels = match &data[..2] {
        b"P5" => 1u8,
        b"P6" => 3u8,
        magic => {
            return Err(Error::format(
                path,
                format!("unsupported magic {:?} (expected P5 or P6)", String::from_utf8_lossy(magic)),
            ))
        }
    };
    let (header, offset) = tokens(&data[2..], 3, path).map(|(h, o)| (h, o + 2))?;
    let (width, height, maxval) = (header[0], header[1], header[2]);
    if maxval != 255 {
        return Err(Error::format(path, format!("maxval {maxval} unsupported (must be 255)")));
    }
    let expected = width as usize * height as usize * channels as usize;
    let payload = &data[offset..];
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, expected {expected}", payload.len()),
        ));
    }
    Ok(ImageBuffer::new(
        width as u32,
        height as u32,
        channels,
        payload.to_vec(),
    )?)
}

/// Writes a binary PGM (1 channel) or PPM (3 channels).
pub fn save_image(path: &Path, img: &ImageBuffer) -> Result<()> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    fs::write(path, out)?;
    Ok(())
}

/// Loads an ASCII (P1) or binary (P4) PBM as a boundary map; 1/black marks
/// a boundary pixel.
pub fn load_boundary_map(path: &Path) -> Result<BoundaryMap> {
    let data = fs::read(path)?;
    if data.len() < 2 {
        return Err(Error::format(path, "not a PBM file"));
    }
    match &data[..2] {
        b"P1" => {
            let (header, offset) = tokens(&data[2..], 2, path).map(|(h, o)| (h, o + 2))?;
            let (width, height) = (header[0] as u32, header[1] as u32);
            let mut bits = Vec::with_capacity((width * height) as usize);
            let mut i = offset;
            while i < data.len() && bits.len() < (width * height) as usize {
                match data[i] {
                    b'0' => bits.push(false),
                    b'1' => bits.push(true),
                    b'#' => {
                        while i < data.len() && data[i] != b'\n' {
                            i += 1;
                        }
                    }
                    b' ' | b'\t' | b'\r' | b'\n' => {}
                    other => {
                        return Err(Error::format(path, format!("unexpected byte {other:#x} in P1 payload")))
                    }
                }
                i += 1;
            }
            if bits.len() != (width * height) as usize {
                return Err(Error::format(
                    path,
                    format!("payload has {} pixels, expected {}", bits.len(), width * height),
                ));
            }
            Ok(BoundaryMap::new(width, height, bits)?)
        }
        b"P4" => {
            let (header, offset) = tokens(&data[2..], 2, path).map(|(h, o)| (h, o + 2))?;
            let (width, height) = (header[0] as u32, header[1] as u32);
            let row_bytes = width.div_ceil(8) as usize;
            let expected = row_bytes * height as usize;
            let payload = &data[offset..];
            if payload.len() != expected {
                return Err(Error::format(
                    path,
                    format!("payload is {} bytes, expected {expected}", payload.len()),
                ));
            }
            let mut bits = Vec::with_capacity((width * height) as usize);
            for y in 0..height as usize {
                for x in 0..width as usize {
                    let byte = payload[y * row_bytes + x / 8];
                    bits.push(byte & (0x80 >> (x % 8)) != 0);
                }
            }
            Ok(BoundaryMap::new(width, height, bits)?)
        }
        magic => Err(Error::format(
            path,
            format!("unsupported magic {:?} (expected P1 or P4)", String::from_utf8_lossy(magic)),
        )),
    }
}

/// Writes an ASCII PBM (P1); boundary pixels become 1.
pub fn write_boundary_map(path: &Path, map: &BoundaryMap) -> Result<()> {
    let mut out = format!("P1\n{} {}\n", map.width, map.height);
    for row in map.bits.chunks(map.width as usize) {
        let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("evoseg-netpbm-tests");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        fs::write(&path, bytes).unwrap();
        path
    }

    #[test]
    fn parses_p5_with_single_space_header() {
        let path = tmp("a.pgm", b"P5 2 2 255 \x01\x02\x03\x04");
        let img = load_image(&path).unwrap();
        assert_eq!((img.width, img.height, img.channels), (2, 2, 1));
        assert_eq!(img.data, vec![1, 2, 3, 4]);
    }

    #[test]
    fn parses_p6_with_comments() {
        let path = tmp(
            "b.ppm",
            b"P6\n# a comment\n2 2\n255\n\x00\x01\x02\x03\x04\x05\x06\x07\x08\x09\x0a\x0b",
        );
        let img = load_image(&path).unwrap();
        assert_eq!((img.width, img.height, img.channels), (2, 2, 3));
        assert_eq!(img.data.len(), 12);
    }

    #[test]
    fn truncated_payload_names_byte_counts() {
        let path = tmp("c.pgm", b"P5\n2 2\n255\n\x01\x02\x03");
        let err = load_image(&path).unwrap_err().to_string();
        assert!(err.contains("3 bytes"), "{err}");
        assert!(err.contains("expected 4"), "{err}");
    }

    #[test]
    fn rejects_wrong_maxval() {
        let path = tmp("d.pgm", b"P5\n1 1\n65535\n\x00\x00");
        let err = load_image(&path).unwrap_err().to_string();
        assert!(err.contains("maxval"), "{err}");
    }

    #[test]
    fn image_round_trip() {
        let img = ImageBuffer::new(3, 2, 3, (0..18).collect()).unwrap();
        let path = tmp("rt.ppm", b"");
        save_image(&path, &img).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn boundary_map_round_trip_p1() {
        let map = BoundaryMap::new(3, 2, vec![true, false, true, false, true, false]).unwrap();
        let path = tmp("rt.pbm", b"");
        write_boundary_map(&path, &map).unwrap();
        assert_eq!(load_boundary_map(&path).unwrap(), map);
    }

    #[test]
    fn reads_packed_p4() {
        // 10 pixels wide: two bytes per row, second byte uses 2 high bits.
        let path = tmp("e.pbm", b"P4\n10 1\n\xA5\x80");
        let map = load_boundary_map(&path).unwrap();
        let want = [true, false, true, false, false, true, false, true, true, false];
        assert_eq!(map.bits, want);
    }
}
