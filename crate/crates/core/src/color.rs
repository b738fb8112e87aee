//! Colorimetry: linear-RGB to CIELab (sRGB primaries, D65 white) and the
//! sRGB transfer curve used when decoding/encoding files.

use ndarray::Array3;

use crate::field::ViewImage;

/// D65 reference white in XYZ, matching the sRGB RGB->XYZ matrix below.
const WHITE_XYZ: [f64; 3] = [0.95047, 1.0, 1.08883];

/// sRGB (linear) -> XYZ, IEC 61966-2-1 primaries.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one linear-RGB triple in [0,1] to CIELab (D65).
pub fn linear_rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let mut xyz = [0.0; 3];
    for (i, row) in RGB_TO_XYZ.iter().enumerate() {
        xyz[i] = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2];
    }
    let fx = lab_f(xyz[0] / WHITE_XYZ[0]);
    let fy = lab_f(xyz[1] / WHITE_XYZ[1]);
    let fz = lab_f(xyz[2] / WHITE_XYZ[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Converts a view to a `(height, width, 3)` Lab raster (L*, a*, b*).
pub fn rgb_to_cielab(img: &ViewImage) -> Array3<f64> {
    Array3::from_shape_fn((img.height(), img.width(), 3), |(y, x, c)| {
        linear_rgb_to_lab(img.pixel(x, y))[c]
    })
}

/// sRGB electro-optical transfer: encoded [0,1] -> linear [0,1].
pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse transfer: linear [0,1] -> sRGB-encoded [0,1].
pub fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}
