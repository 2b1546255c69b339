//! 8-bit RGB image files and padding for the network's size constraint.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Decode a binary PPM (`P6`, maxval 255) or 8-bit RGB PNG into a
/// `1×3×H×W` tensor with values `byte / 255`.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, rgb) = if bytes.starts_with(PNG_MAGIC) {
        decode_png(path, &bytes)?
    } else if bytes.starts_with(b"P6") {
        decode_ppm(path, &bytes)?
    } else {
        return Err(Error::format(
            path,
            "unsupported image format (expected PNG or binary PPM)",
        ));
    };
    Ok(from_interleaved(h, w, &rgb))
}

fn from_interleaved(h: usize, w: usize, rgb: &[u8]) -> Tensor {
    let p = h * w;
    let mut data = vec![0.0f32; 3 * p];
    for (i, px) in rgb.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * p + i] = px[c] as f32 / 255.0;
        }
    }
    Tensor::from_vec([1, 3, h, w], data).expect("decoded shape")
}

fn to_interleaved(img: &Tensor) -> Vec<u8> {
    let p = img.shape().plane();
    let d = img.data();
    (0..p)
        .flat_map(|i| (0..3).map(move |c| (d[c * p + i].clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect()
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| Error::format(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(
            path,
            format!("expected 8-bit RGB, got {:?} at {:?}", info.color_type, info.bit_depth),
        ));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, buf))
}

fn decode_ppm(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "malformed PPM header"))?;
    }
    let [w, h, maxval] = header;
    if maxval != 255 {
        return Err(Error::format(path, format!("PPM maxval {maxval} is not 8-bit")));
    }
    if w == 0 || h == 0 {
        return Err(Error::format(path, "empty PPM image"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(path, "malformed PPM header"));
    }
    pos += 1;
    let need = 3 * w * h;
    let data = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::format(path, format!("truncated PPM: expected {need} data bytes")))?;
    Ok((w, h, data.to_vec()))
}

/// Encode by extension: `.png` or `.ppm`.
pub fn save_image(path: &Path, img: &Tensor) -> Result<()> {
    let s = img.shape();
    if s.n() != 1 || s.c() != 3 {
        return Err(Error::InvalidShape(format!("save_image expects 1x3xHxW, got {s}")));
    }
    let rgb = to_interleaved(img);
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match ext.as_deref() {
        Some("ppm") => {
            write!(out, "P6\n{} {}\n255\n", s.w(), s.h()).map_err(|e| Error::io(path, e))?;
            out.write_all(&rgb).map_err(|e| Error::io(path, e))?;
        }
        Some("png") => {
            let mut enc = png::Encoder::new(&mut out, s.w() as u32, s.h() as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(|e| Error::format(path, e.to_string()))?;
            writer
                .write_image_data(&rgb)
                .map_err(|e| Error::format(path, e.to_string()))?;
            writer.finish().map_err(|e| Error::format(path, e.to_string()))?;
        }
        _ => return Err(Error::format(path, "output extension must be .png or .ppm")),
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn is_image_path(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "ppm")
    )
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image_path(&path) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Mirror index without repeating the edge sample (`abc|ba`).
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let i = i % period;
    if i < n {
        i
    } else {
        period - i
    }
}

/// Reflect-pad bottom and right up to the next multiple of `m`. Returns the
/// padded image and the original `(h, w)`.
pub fn pad_to_multiple(img: &Tensor, m: usize) -> Result<(Tensor, (usize, usize))> {
    if m == 0 {
        return Err(Error::OutOfRange("pad multiple must be >= 1".into()));
    }
    let s = img.shape();
    let (h, w) = (s.h(), s.w());
    let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    if (ph, pw) == (h, w) {
        return Ok((img.clone(), (h, w)));
    }
    let out = Tensor::from_fn([s.n(), s.c(), ph, pw], |[n, c, y, x]| {
        img.at([n, c, reflect(y, h), reflect(x, w)])
    });
    Ok((out, (h, w)))
}

/// Top-left `h × w` window.
pub fn crop(img: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let s = img.shape();
    if h > s.h() || w > s.w() {
        return Err(Error::InvalidShape(format!("crop {h}x{w} larger than {s}")));
    }
    Ok(Tensor::from_fn(Shape::new(s.n(), s.c(), h, w), |i| img.at(i)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_decode_is_definitional() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        let mut bytes = b"P6\n# comment\n2 2\n255\n".to_vec();
        bytes.extend([0, 128, 255, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        std::fs::write(&path, &bytes).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.shape(), Shape::new(1, 3, 2, 2));
        assert_eq!(img.at([0, 0, 0, 0]), 0.0);
        assert_eq!(img.at([0, 1, 0, 0]), 128.0 / 255.0);
        assert_eq!(img.at([0, 2, 0, 0]), 1.0);
        assert_eq!(img.at([0, 0, 0, 1]), 1.0 / 255.0);
    }

    #[test]
    fn round_trips_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let bytes: Vec<u8> = (0..3 * 5 * 7).map(|i| (i * 37 % 256) as u8).collect();
        let img = from_interleaved(5, 7, &bytes);
        for name in ["x.ppm", "x.png"] {
            let path = dir.path().join(name);
            save_image(&path, &img).unwrap();
            let back = load_image(&path).unwrap();
            assert_eq!(to_interleaved(&back), bytes);
        }
    }

    #[test]
    fn load_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.png");
        let err = load_image(&missing).unwrap_err();
        assert!(err.to_string().contains("nope.png"));
        let junk = dir.path().join("junk.ppm");
        std::fs::write(&junk, b"P6\n4 4\n255\n\x00\x01").unwrap();
        assert!(matches!(load_image(&junk), Err(Error::Format { .. })));
        std::fs::write(&junk, b"GIF89a").unwrap();
        assert!(matches!(load_image(&junk), Err(Error::Format { .. })));
    }

    #[test]
    fn rejects_non_rgb_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let file = File::create(&path).unwrap();
        let mut enc = png::Encoder::new(file, 2, 2);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        enc.write_header().unwrap().write_image_data(&[0, 1, 2, 3]).unwrap();
        assert!(matches!(load_image(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn padding_examples() {
        let img = Tensor::from_fn([1, 3, 250, 250], |[_, c, y, x]| (c * 7 + y * 3 + x) as f32);
        let (p, orig) = pad_to_multiple(&img, 4).unwrap();
        assert_eq!(p.shape(), Shape::new(1, 3, 252, 252));
        assert_eq!(orig, (250, 250));
        assert_eq!(p.at([0, 1, 250, 10]), img.at([0, 1, 248, 10]));
        assert_eq!(p.at([0, 1, 251, 249]), img.at([0, 1, 247, 249]));
        assert_eq!(p.at([0, 2, 3, 251]), img.at([0, 2, 3, 247]));
        assert_eq!(crop(&p, 250, 250).unwrap(), img);

        let even = Tensor::<f32>::ones([1, 3, 8, 12]);
        assert_eq!(pad_to_multiple(&even, 4).unwrap().0, even);
    }

    #[test]
    fn reflect_handles_tiny_extents() {
        assert_eq!(reflect(1, 1), 0);
        assert_eq!((0..6).map(|i| reflect(i, 2)).collect::<Vec<_>>(), [0, 1, 0, 1, 0, 1]);
        assert_eq!((0..6).map(|i| reflect(i, 3)).collect::<Vec<_>>(), [0, 1, 2, 1, 0, 1]);
    }
}
