use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::PreprocessSpec;
use crate::tensor::{Scalar, Tensor};

/// Decodes a binary PPM (P6) or 8-bit PNG into a `3×H×W` tensor of values
/// in `[0, 1]`. Grayscale PNGs are replicated to three channels and alpha is
/// dropped.
pub fn decode_image(bytes: &[u8]) -> Result<Tensor<f32>> {
    if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(bytes)
    } else {
        Err(Error::Decode(
            "unsupported image format (expected PPM P6 or PNG)".into(),
        ))
    }
}

pub fn load_raw_image(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Decode(m) => Error::Decode(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Decodes, resizes to the spec, scales to `[0, 1]` and normalizes.
pub fn load_image(path: impl AsRef<Path>, spec: &PreprocessSpec) -> Result<Tensor<f32>> {
    let raw = load_raw_image(path)?;
    normalize(&resize_to_spec(&raw, spec)?, Some(spec))
}

/// An image at network resolution, both as raw `[0, 1]` values (what the
/// insertion metrics composite) and as the normalized network input.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelImage {
    pub raw: Tensor<f32>,
    pub input: Tensor<f32>,
}

impl ModelImage {
    /// Without a preprocessing spec the decoded image is used unchanged.
    pub fn from_raw(raw: Tensor<f32>, spec: Option<&PreprocessSpec>) -> Result<Self> {
        let raw = match spec {
            Some(s) => resize_to_spec(&raw, s)?,
            None => raw,
        };
        let input = normalize(&raw, spec)?;
        Ok(Self { raw, input })
    }

    pub fn load(path: impl AsRef<Path>, spec: Option<&PreprocessSpec>) -> Result<Self> {
        Self::from_raw(load_raw_image(path)?, spec)
    }
}

fn interleaved_to_chw(
    width: usize,
    height: usize,
    channels: usize,
    px: &[u8],
) -> Result<Tensor<f32>> {
    let plane = width * height;
    let mut data = vec![0.0f32; 3 * plane];
    for p in 0..plane {
        let src = &px[p * channels..p * channels + channels];
        for c in 0..3 {
            let v = if channels < 3 { src[0] } else { src[c] };
            data[c * plane + p] = v as f32 / 255.0;
        }
    }
    Tensor::new(vec![3, height, width], data)
}

fn decode_ppm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Decode("truncated PPM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Decode("malformed PPM header".into()))?;
    }
    let [width, height, maxval] = fields;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Decode("malformed PPM header".into()));
    }
    pos += 1;
    if width == 0 || height == 0 {
        return Err(Error::Decode("PPM has zero size".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Decode(format!("unsupported PPM maxval {maxval}")));
    }
    let need = width * height * 3;
    let px = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Decode("truncated PPM pixel data".into()))?;
    let mut t = interleaved_to_chw(width, height, 3, px)?;
    if maxval != 255 {
        let s = 255.0 / maxval as f32;
        t = t.map(|v| (v * s).min(1.0));
    }
    Ok(t)
}

fn decode_png(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Decode(format!("PNG: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Decode("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Decode(format!("PNG: {e}")))?;
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::Decode("unexpanded palette PNG".into())),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut px = Vec::with_capacity(w * h * channels);
    for row in buf.chunks(info.line_size).take(h) {
        px.extend_from_slice(&row[..w * channels]);
    }
    interleaved_to_chw(w, h, channels, &px)
}

/// Bilinear resize of a `C×H×W` tensor with half-pixel centres and edge
/// clamping (no antialiasing).
pub fn resize_bilinear<T: Scalar>(
    img: &Tensor<T>,
    height: usize,
    width: usize,
) -> Result<Tensor<T>> {
    let [c, h, w] = *img.shape() else {
        return Err(Error::dim(format!(
            "resize expects C×H×W, got {:?}",
            img.shape()
        )));
    };
    if height == 0 || width == 0 {
        return Err(Error::arg("resize target must be positive"));
    }
    if (h, w) == (height, width) {
        return Ok(img.clone());
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(inp - 1);
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let (ty, tx) = (taps(height, h), taps(width, w));
    let d = img.data();
    let mut out = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        let base = ch * h * w;
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let at = |y: usize, x: usize| d[base + y * w + x].as_f64();
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push(T::of(top * (1.0 - fy) + bot * fy));
            }
        }
    }
    Tensor::new(vec![c, height, width], out)
}

pub fn resize_to_spec(raw: &Tensor<f32>, spec: &PreprocessSpec) -> Result<Tensor<f32>> {
    spec.validate()?;
    resize_bilinear(raw, spec.height, spec.width)
}

/// Per-channel `(v − mean) / std`. `None` leaves values as they are.
pub fn normalize<T: Scalar>(raw: &Tensor<T>, spec: Option<&PreprocessSpec>) -> Result<Tensor<T>> {
    let Some(spec) = spec else {
        return Ok(raw.clone());
    };
    let [c, h, w] = *raw.shape() else {
        return Err(Error::dim(format!(
            "normalization expects C×H×W, got {:?}",
            raw.shape()
        )));
    };
    if c != spec.mean.len() || c != spec.std.len() {
        return Err(Error::dim(format!(
            "{c} image channels for {} normalization channels",
            spec.mean.len()
        )));
    }
    let plane = h * w;
    let mut out = raw.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let ch = i / plane;
        *v = (*v - T::of(spec.mean[ch] as f64)) / T::of(spec.std[ch] as f64);
    }
    Ok(out)
}

/// Encodes 8-bit interleaved RGB pixels as PNG.
pub fn encode_png_rgb(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    if rgb.len() != width * height * 3 {
        return Err(Error::dim("pixel buffer does not match the image size"));
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(format!("PNG: {e}")))?;
        writer
            .write_image_data(rgb)
            .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    }
    Ok(out)
}

/// Converts a `3×H×W` tensor of `[0, 1]` values to interleaved 8-bit RGB.
pub fn to_rgb8<T: Scalar>(img: &Tensor<T>) -> Result<Vec<u8>> {
    let [3, h, w] = *img.shape() else {
        return Err(Error::dim(format!("expected 3×H×W, got {:?}", img.shape())));
    };
    let plane = h * w;
    let d = img.data();
    let mut out = Vec::with_capacity(3 * plane);
    for p in 0..plane {
        for c in 0..3 {
            out.push((d[c * plane + p].as_f64().clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}
