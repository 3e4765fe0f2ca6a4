use std::path::Path;

use crate::error::{Error, Result};
use crate::tensors::Tensor;

/// 8-bit RGB raster, row-major, interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

const MAX_SIDE: usize = 1 << 16;

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::Shape(format!("{width}x{height} RGB image with {} bytes", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, data: vec![value; width * height * 3] }
    }

    /// `[H, W, 3]` tensor scaled by 1/255.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_fn(&[self.height, self.width, 3], |i| f64::from(self.data[i]) / 255.0)
    }

    /// Rounds `[H, W, 3]` values in `[0, 1]` (clamped) to 8 bits.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (h, w, c) = t.hwc()?;
        if c != 3 {
            return Err(Error::Shape(format!("expected 3 channels, got {c}")));
        }
        let data = t.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        Self::new(w, h, data)
    }

    /// `size x size` window with top-left corner `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if top + height > self.height || left + width > self.width || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "crop {height}x{width} at ({top},{left}) of {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(width * height * 3);
        for y in top..top + height {
            let row = (y * self.width + left) * 3;
            data.extend_from_slice(&self.data[row..row + width * 3]);
        }
        Image::new(width, height, data)
    }
}

/// Parses a binary `P6` portable pixmap with maxval 255.
pub fn read_ppm(bytes: &[u8]) -> Result<Image> {
    let bad = |d: &str| Error::format("ppm", d.to_string());
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(bad("missing P6 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        // Whitespace and comments before each header field.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos || pos - start > 7 {
            return Err(bad("bad header number"));
        }
        *f = std::str::from_utf8(&bytes[start..pos]).expect("digits").parse().map_err(|_| bad("bad number"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(bad(&format!("only 8-bit maxval 255 is supported, got {maxval}")));
    }
    if width == 0 || height == 0 || width > MAX_SIDE || height > MAX_SIDE {
        return Err(bad(&format!("unsupported extents {width}x{height}")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("missing separator after header")),
    }
    let n = width * height * 3;
    let data = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated pixel data"))?;
    Image::new(width, height, data.to_vec())
}

pub fn write_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn read_ppm_file(path: &Path) -> Result<Image> {
    read_ppm(&std::fs::read(path)?)
}

pub fn write_ppm_file(path: &Path, img: &Image) -> Result<()> {
    std::fs::write(path, write_ppm(img))?;
    Ok(())
}
