//! Binary PPM (P6, 8-bit) image export and import.

use std::io::{self, Read, Write};
use std::path::Path;

use super::Image;

/// Writes the image as P6 with maxval 255. Channels are clamped and rounded.
pub fn write_ppm<W: Write>(img: &Image, mut out: W) -> io::Result<()> {
    write!(out, "P6\n{} {}\n255\n", img.width, img.height)?;
    let mut buf = Vec::with_capacity(img.pixels.len() * 3);
    for px in &img.pixels {
        for c in 0..3 {
            buf.push((px[c].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out.write_all(&buf)
}

pub fn save_ppm(img: &Image, path: &Path) -> io::Result<()> {
    let file = std::fs::File::create(path)?;
    write_ppm(img, std::io::BufWriter::new(file))
}

/// Reads a P6 image with maxval 255 back into floats in [0, 1].
pub fn read_ppm<R: Read>(mut input: R) -> io::Result<Image> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let err = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());

    fn token(data: &[u8], pos: &mut usize) -> io::Result<String> {
        // Skip whitespace and '#' comments.
        loop {
            while *pos < data.len() && data[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < data.len() && data[*pos] == b'#' {
                while *pos < data.len() && data[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                break;
            }
        }
        let start = *pos;
        while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "ppm header"));
        }
        Ok(String::from_utf8_lossy(&data[start..*pos]).into_owned())
    }

    let mut pos = 0usize;
    if token(&data, &mut pos)? != "P6" {
        return Err(err("not a P6 ppm"));
    }
    let width: usize = token(&data, &mut pos)?.parse().map_err(|_| err("bad width"))?;
    let height: usize = token(&data, &mut pos)?.parse().map_err(|_| err("bad height"))?;
    let maxval: usize = token(&data, &mut pos)?.parse().map_err(|_| err("bad maxval"))?;
    if maxval != 255 {
        return Err(err("only maxval 255 supported"));
    }
    pos += 1; // single whitespace after maxval
    let need = width * height * 3;
    if data.len() < pos + need {
        return Err(err("truncated pixel data"));
    }
    let pixels = data[pos..pos + need]
        .chunks_exact(3)
        .map(|c| {
            [
                c[0] as f64 / 255.0,
                c[1] as f64 / 255.0,
                c[2] as f64 / 255.0,
            ]
        })
        .collect();
    Ok(Image {
        width,
        height,
        pixels,
        background: [0.0; 3],
    })
}

pub fn load_ppm(path: &Path) -> io::Result<Image> {
    let file = std::fs::File::open(path)?;
    read_ppm(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact_on_quantized_values() {
        let mut img = Image::solid(5, 3, [0.0; 3]);
        for (i, px) in img.pixels.iter_mut().enumerate() {
            *px = [
                (i as f64 * 17.0 % 256.0) / 255.0,
                (i as f64 * 31.0 % 256.0) / 255.0,
                (i as f64 * 5.0 % 256.0) / 255.0,
            ];
        }
        let mut buf = Vec::new();
        write_ppm(&img, &mut buf).unwrap();
        let back = read_ppm(buf.as_slice()).unwrap();
        assert_eq!(back.width, 5);
        assert_eq!(back.height, 3);
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_p6() {
        assert!(read_ppm(b"P3\n1 1\n255\n0 0 0\n".as_slice()).is_err());
    }
}
