//! Image I/O: PNG/PPM views, 16-bit shading with a scale sidecar, and PFM
//! floats (little-endian, negative scale field per the de-facto convention,
//! rows bottom-up).

use anyhow::{bail, Context, Result};
use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use ndarray::{Array2, Array3};
use std::fs;
use std::io::Write;
use std::path::Path;

use lfintrinsic_core::color::{linear_to_srgb, srgb_to_linear};
use lfintrinsic_core::cues::DepthMap;
use lfintrinsic_core::ViewImage;

/// Loads a PNG or PPM view. With `srgb` the samples are linearized.
pub fn load_view(path: &Path, srgb: bool) -> Result<ViewImage> {
    let img = image::open(path).with_context(|| format!("reading view {}", path.display()))?;
    let rgb = img.to_rgb16();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = Array3::zeros((h, w, 3));
    for (x, y, px) in rgb.enumerate_pixels() {
        for c in 0..3 {
            let v = px.0[c] as f64 / 65535.0;
            data[[y as usize, x as usize, c]] = if srgb { srgb_to_linear(v) } else { v };
        }
    }
    Ok(ViewImage::from_array(data)?)
}

/// Writes a view as 16-bit RGB PNG; with `srgb` the samples are gamma
/// encoded first. Values are clamped to [0, 1].
pub fn save_view(path: &Path, view: &ViewImage, srgb: bool) -> Result<()> {
    let (h, w) = (view.height(), view.width());
    let mut img = ImageBuffer::<Rgb<u16>, Vec<u16>>::new(w as u32, h as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let rgb = view.pixel(x as usize, y as usize);
        for c in 0..3 {
            let v = rgb[c].clamp(0.0, 1.0);
            let v = if srgb { linear_to_srgb(v) } else { v };
            px.0[c] = (v * 65535.0).round() as u16;
        }
    }
    img.save(path)
        .with_context(|| format!("writing view {}", path.display()))?;
    Ok(())
}

/// Writes a nonnegative raster as 16-bit grayscale PNG. The raster maximum
/// is recorded in a `<stem>_scale.txt` sidecar so `value = png * scale / 65535`
/// is recoverable.
pub fn save_gray16_scaled(path: &Path, raster: &Array2<f64>) -> Result<()> {
    let (h, w) = raster.dim();
    let scale = raster.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
    let mut img = ImageBuffer::<Luma<u16>, Vec<u16>>::new(w as u32, h as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let v = (raster[[y as usize, x as usize]] / scale).clamp(0.0, 1.0);
        px.0[0] = (v * 65535.0).round() as u16;
    }
    img.save(path)
        .with_context(|| format!("writing {}", path.display()))?;
    let sidecar = path.with_file_name(format!(
        "{}_scale.txt",
        path.file_stem().unwrap_or_default().to_string_lossy()
    ));
    fs::write(&sidecar, format!("{scale}\n"))
        .with_context(|| format!("writing {}", sidecar.display()))?;
    Ok(())
}

/// Writes a [0,1] raster as 8-bit grayscale PNG (for cue/diagnostic maps).
pub fn save_gray8(path: &Path, raster: &Array2<f64>) -> Result<()> {
    let (h, w) = raster.dim();
    let mut img = ImageBuffer::<Luma<u8>, Vec<u8>>::new(w as u32, h as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        px.0[0] = (raster[[y as usize, x as usize]].clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    img.save(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes an RGB raster as 8-bit sRGB PNG (for inspection output).
pub fn save_rgb8_srgb(path: &Path, view: &ViewImage) -> Result<()> {
    let (h, w) = (view.height(), view.width());
    let mut img = ImageBuffer::<Rgb<u8>, Vec<u8>>::new(w as u32, h as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let rgb = view.pixel(x as usize, y as usize);
        for c in 0..3 {
            px.0[c] = (linear_to_srgb(rgb[c].clamp(0.0, 1.0)) * 255.0).round() as u8;
        }
    }
    img.save(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes a grayscale PFM (`Pf`, little-endian, bottom-up rows).
pub fn save_pfm_gray(path: &Path, raster: &Array2<f64>) -> Result<()> {
    let (h, w) = raster.dim();
    let mut out = Vec::with_capacity(32 + 4 * h * w);
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(raster[[y, x]] as f32).to_le_bytes());
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes a color PFM (`PF`, little-endian, bottom-up rows, RGB interleaved).
pub fn save_pfm_color(path: &Path, view: &ViewImage) -> Result<()> {
    let (h, w) = (view.height(), view.width());
    let mut out = Vec::with_capacity(32 + 12 * h * w);
    write!(out, "PF\n{w} {h}\n-1.0\n")?;
    for y in (0..h).rev() {
        for x in 0..w {
            for v in view.pixel(x, y) {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub struct PfmData {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major top-down, channel-interleaved.
    pub samples: Vec<f64>,
}

/// Reads a PFM of either kind, normalizing to top-down row order and
/// applying the scale factor's magnitude.
pub fn load_pfm(path: &Path) -> Result<PfmData> {
    let raw = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cursor = 0usize;
    let mut token = || -> Result<String> {
        while cursor < raw.len() && raw[cursor].is_ascii_whitespace() {
            cursor += 1;
        }
        let start = cursor;
        while cursor < raw.len() && !raw[cursor].is_ascii_whitespace() {
            cursor += 1;
        }
        if start == cursor {
            bail!("{}: truncated PFM header", path.display());
        }
        let tok = String::from_utf8_lossy(&raw[start..cursor]).into_owned();
        Ok(tok)
    };
    let magic = token()?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => bail!("{}: not a PFM file (magic {other:?})", path.display()),
    };
    let width: usize = token()?.parse().context("PFM width")?;
    let height: usize = token()?.parse().context("PFM height")?;
    let scale: f64 = token()?.parse().context("PFM scale")?;
    cursor += 1; // the single whitespace after the scale line
    let little_endian = scale < 0.0;
    let magnitude = scale.abs().max(1e-30);

    let n = width * height * channels;
    if raw.len() < cursor + 4 * n {
        bail!("{}: PFM payload too short", path.display());
    }
    let mut bottom_up = Vec::with_capacity(n);
    for i in 0..n {
        let b: [u8; 4] = raw[cursor + 4 * i..cursor + 4 * i + 4].try_into().unwrap();
        let v = if little_endian {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        bottom_up.push(v as f64 * magnitude);
    }
    // flip to top-down
    let mut samples = vec![0.0; n];
    let row = width * channels;
    for y in 0..height {
        let src = (height - 1 - y) * row;
        samples[y * row..(y + 1) * row].copy_from_slice(&bottom_up[src..src + row]);
    }
    Ok(PfmData {
        width,
        height,
        channels,
        samples,
    })
}

/// Reads a grayscale PFM into an Array2.
pub fn load_pfm_gray(path: &Path) -> Result<Array2<f64>> {
    let pfm = load_pfm(path)?;
    if pfm.channels != 1 {
        bail!("{}: expected grayscale PFM", path.display());
    }
    Ok(Array2::from_shape_vec((pfm.height, pfm.width), pfm.samples)?)
}

/// Reads a color PFM into a ViewImage.
pub fn load_pfm_color(path: &Path) -> Result<ViewImage> {
    let pfm = load_pfm(path)?;
    if pfm.channels != 3 {
        bail!("{}: expected color PFM", path.display());
    }
    let data = Array3::from_shape_vec((pfm.height, pfm.width, 3), pfm.samples)?;
    Ok(ViewImage::from_array(data.mapv(|v: f64| v.max(0.0)))?)
}

/// Loads a depth map from PFM or 16-bit PNG, min-max normalized to [0,1]
/// with NaN/Inf masked invalid (constant maps normalize to 0).
pub fn load_depth(path: &Path) -> Result<DepthMap> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let raw = if ext == "pfm" {
        let pfm = load_pfm(path)?;
        if pfm.channels != 1 {
            bail!("{}: depth PFM must be grayscale", path.display());
        }
        Array2::from_shape_vec((pfm.height, pfm.width), pfm.samples)?
    } else {
        let img = image::open(path).with_context(|| format!("reading depth {}", path.display()))?;
        let gray = match img {
            DynamicImage::ImageLuma16(g) => g,
            other => other.to_luma16(),
        };
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        Array2::from_shape_fn((h, w), |(y, x)| {
            gray.get_pixel(x as u32, y as u32).0[0] as f64 / 65535.0
        })
    };
    Ok(DepthMap::from_raw(&raw))
}
