//! Per-view gradient labeling: albedo weights from reflectance colinearity,
//! black/white detection in CIELab, and occlusion weights from depth.
//!
//! Edges follow the forward-difference stencil of the TV solver so that cue
//! maps align with the Retinex system's gradient unknowns: the horizontal
//! raster holds the edge between (x, y) and (x+1, y) at [y][x], the vertical
//! raster the edge between (x, y) and (x, y+1) at [y][x].

use ndarray::{Array2, Array3};

use crate::error::{LfError, Result};
use crate::field::ViewImage;

/// CIELab references for the black/white detector (D65: L* in [0,100]).
pub const WHITE_LAB: [f64; 3] = [100.0, 0.0, 0.0];
pub const BLACK_LAB: [f64; 3] = [0.0, 0.0, 0.0];

/// How color and black/white albedo detections are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlbedoCombinator {
    /// Any detector firing (0) marks the edge as albedo.
    #[default]
    Min,
    /// Literal printed combinator; a single non-detection overrides.
    Max,
}

#[derive(Debug, Clone)]
pub struct CueParams {
    /// Angle threshold between neighboring reflectance vectors, radians.
    pub angle_thresh: f64,
    /// Probability threshold for the black/white detector.
    pub tau1: f64,
    /// Normalized-distance difference threshold (uniform-area guard).
    pub tau2: f64,
    /// Depth difference marking an occlusion edge.
    pub depth_thresh: f64,
    /// Weight assigned to occlusion edges (must stay > 0 for stability).
    pub occ_weight: f64,
    /// Reflectance norm below which the angle is numerically meaningless.
    pub eps_dark: f64,
    pub combinator: AlbedoCombinator,
}

impl Default for CueParams {
    fn default() -> Self {
        Self {
            angle_thresh: 0.04,
            tau1: 0.85,
            tau2: 0.05,
            depth_thresh: 0.02,
            occ_weight: 0.01,
            eps_dark: 1e-3,
            combinator: AlbedoCombinator::Min,
        }
    }
}

impl CueParams {
    pub fn validate(&self) -> Result<()> {
        if self.angle_thresh <= 0.0
            || self.tau2 <= 0.0
            || self.depth_thresh <= 0.0
            || self.occ_weight <= 0.0
            || self.eps_dark <= 0.0
        {
            return Err(LfError::InvalidParam("cue thresholds must be positive".into()));
        }
        if !(0.0 < self.tau1 && self.tau1 < 1.0) {
            return Err(LfError::InvalidParam(format!(
                "tau1 must lie in (0,1), got {}",
                self.tau1
            )));
        }
        Ok(())
    }
}

/// One value per 4-connected edge of a view.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePair {
    /// Shape (height, width-1): edge (x,y)-(x+1,y).
    pub horizontal: Array2<f64>,
    /// Shape (height-1, width): edge (x,y)-(x,y+1).
    pub vertical: Array2<f64>,
}

impl EdgePair {
    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Self {
            horizontal: Array2::from_elem((height, width.saturating_sub(1)), value),
            vertical: Array2::from_elem((height.saturating_sub(1), width), value),
        }
    }

    pub fn height(&self) -> usize {
        self.horizontal.dim().0
    }

    pub fn width(&self) -> usize {
        self.vertical.dim().1
    }

    fn zip_with(&self, other: &EdgePair, f: impl Fn(f64, f64) -> f64) -> EdgePair {
        EdgePair {
            horizontal: ndarray::Zip::from(&self.horizontal)
                .and(&other.horizontal)
                .map_collect(|&a, &b| f(a, b)),
            vertical: ndarray::Zip::from(&self.vertical)
                .and(&other.vertical)
                .map_collect(|&a, &b| f(a, b)),
        }
    }
}

/// Albedo and occlusion weights for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeightMap {
    pub omega_a: EdgePair,
    pub omega_occ: EdgePair,
}

impl EdgeWeightMap {
    pub fn neutral(height: usize, width: usize) -> Self {
        Self {
            omega_a: EdgePair::constant(height, width, 1.0),
            omega_occ: EdgePair::constant(height, width, 1.0),
        }
    }
}

/// Black/white probability and distance rasters for one view.
#[derive(Debug, Clone)]
pub struct BwMaps {
    pub p_white: Array2<f64>,
    pub p_black: Array2<f64>,
    pub d_white: Array2<f64>,
    pub d_black: Array2<f64>,
    /// Squared CIELab distance between the white and black references.
    pub d_max: f64,
}

/// Per-view depth, normalized to [0,1], with a validity mask for missing
/// samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    values: Array2<f64>,
    valid: Array2<bool>,
}

impl DepthMap {
    pub fn new(values: Array2<f64>, valid: Array2<bool>) -> Result<Self> {
        if values.dim() != valid.dim() {
            return Err(LfError::shape(
                "DepthMap mask",
                &[values.dim().0, values.dim().1],
                &[valid.dim().0, valid.dim().1],
            ));
        }
        for (&v, &ok) in values.iter().zip(valid.iter()) {
            if ok && !(0.0..=1.0).contains(&v) {
                return Err(LfError::InvalidParam(format!(
                    "valid depth samples must lie in [0,1], got {v}"
                )));
            }
        }
        Ok(Self { values, valid })
    }

    pub fn all_valid(values: Array2<f64>) -> Result<Self> {
        let valid = Array2::from_elem(values.dim(), true);
        Self::new(values, valid)
    }

    /// Min-max normalizes raw depth to [0,1]; non-finite samples become
    /// invalid, and a constant (degenerate-range) map normalizes to 0.
    pub fn from_raw(raw: &Array2<f64>) -> Self {
        let valid = raw.mapv(|v| v.is_finite());
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (&v, &ok) in raw.iter().zip(valid.iter()) {
            if ok {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let range = hi - lo;
        let values = ndarray::Zip::from(raw).and(&valid).map_collect(|&v, &ok| {
            if !ok || range <= 0.0 {
                0.0
            } else {
                (v - lo) / range
            }
        });
        Self { values, valid }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn valid(&self) -> &Array2<bool> {
        &self.valid
    }

    pub fn height(&self) -> usize {
        self.values.dim().0
    }

    pub fn width(&self) -> usize {
        self.values.dim().1
    }
}

/// Angle between two RGB vectors, as used by the albedo detector.
pub fn rgb_angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    angle_between(a, b)
}

fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

/// Colinearity-based albedo weights on the initial reflectance: the weight is
/// 0 (albedo change) when the angle between neighboring RGB vectors exceeds
/// `angle_thresh`, strictly. Near-black endpoints keep weight 1; the black
/// detector covers them.
pub fn albedo_angle_weights(r0_view: &ViewImage, angle_thresh: f64, eps_dark: f64) -> EdgePair {
    let (h, w) = (r0_view.height(), r0_view.width());
    let weight = |a: [f64; 3], b: [f64; 3]| -> f64 {
        let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        if na < eps_dark || nb < eps_dark {
            return 1.0;
        }
        if angle_between(a, b) > angle_thresh {
            0.0
        } else {
            1.0
        }
    };
    EdgePair {
        horizontal: Array2::from_shape_fn((h, w - 1), |(y, x)| {
            weight(r0_view.pixel(x, y), r0_view.pixel(x + 1, y))
        }),
        vertical: Array2::from_shape_fn((h - 1, w), |(y, x)| {
            weight(r0_view.pixel(x, y), r0_view.pixel(x, y + 1))
        }),
    }
}

/// Squared-distance probabilities of each pixel being white or black:
/// `p = exp(-d / d_max)` with `d = ||Lab - ref||^2` and `d_max` the squared
/// white/black distance.
pub fn bw_probabilities(lab_view: &Array3<f64>, white: [f64; 3], black: [f64; 3]) -> BwMaps {
    let (h, w, _) = lab_view.dim();
    let d_max: f64 = (0..3).map(|c| (white[c] - black[c]).powi(2)).sum();
    let dist = |y: usize, x: usize, r: [f64; 3]| -> f64 {
        (0..3).map(|c| (lab_view[[y, x, c]] - r[c]).powi(2)).sum()
    };
    let d_white = Array2::from_shape_fn((h, w), |(y, x)| dist(y, x, white));
    let d_black = Array2::from_shape_fn((h, w), |(y, x)| dist(y, x, black));
    BwMaps {
        p_white: d_white.mapv(|d| (-d / d_max).exp()),
        p_black: d_black.mapv(|d| (-d / d_max).exp()),
        d_white,
        d_black,
        d_max,
    }
}

fn gradient_labels_one(p: &Array2<f64>, d: &Array2<f64>, d_max: f64, tau1: f64, tau2: f64) -> EdgePair {
    let (h, w) = p.dim();
    // distances normalized by d_max so tau2 is unit-free
    let label = |pi: f64, pj: f64, di: f64, dj: f64| -> f64 {
        let near = pi >= tau1 || pj >= tau1;
        let real_gradient = ((di - dj) / d_max).abs() > tau2;
        if near && real_gradient {
            0.0
        } else {
            1.0
        }
    };
    EdgePair {
        horizontal: Array2::from_shape_fn((h, w - 1), |(y, x)| {
            label(p[[y, x]], p[[y, x + 1]], d[[y, x]], d[[y, x + 1]])
        }),
        vertical: Array2::from_shape_fn((h - 1, w), |(y, x)| {
            label(p[[y, x]], p[[y + 1, x]], d[[y, x]], d[[y + 1, x]])
        }),
    }
}

/// Per-edge black/white labels `(g_w, g_b)`; 0 marks a detected black/white
/// albedo edge.
pub fn bw_gradient_labels(maps: &BwMaps, tau1: f64, tau2: f64) -> (EdgePair, EdgePair) {
    let g_w = gradient_labels_one(&maps.p_white, &maps.d_white, maps.d_max, tau1, tau2);
    let g_b = gradient_labels_one(&maps.p_black, &maps.d_black, maps.d_max, tau1, tau2);
    (g_w, g_b)
}

/// Merges the color detector with the black/white ones.
pub fn combine_albedo(
    omega_color: &EdgePair,
    g_w: &EdgePair,
    g_b: &EdgePair,
    combinator: AlbedoCombinator,
) -> EdgePair {
    match combinator {
        AlbedoCombinator::Min => omega_color
            .zip_with(g_w, f64::min)
            .zip_with(g_b, f64::min),
        AlbedoCombinator::Max => omega_color
            .zip_with(g_w, f64::max)
            .zip_with(g_b, f64::max),
    }
}

/// Occlusion weights from depth: `occ_weight` where `|D_i - D_j|` strictly
/// exceeds `depth_thresh`, else 1. Edges touching invalid depth stay 1.
pub fn occlusion_weights(depth: &DepthMap, depth_thresh: f64, occ_weight: f64) -> EdgePair {
    let (h, w) = depth.values.dim();
    let weight = |yi: usize, xi: usize, yj: usize, xj: usize| -> f64 {
        if !depth.valid[[yi, xi]] || !depth.valid[[yj, xj]] {
            return 1.0;
        }
        if (depth.values[[yi, xi]] - depth.values[[yj, xj]]).abs() > depth_thresh {
            occ_weight
        } else {
            1.0
        }
    };
    EdgePair {
        horizontal: Array2::from_shape_fn((h, w - 1), |(y, x)| weight(y, x, y, x + 1)),
        vertical: Array2::from_shape_fn((h - 1, w), |(y, x)| weight(y, x, y + 1, x)),
    }
}

/// Full cue computation for one view.
pub fn compute_view_cues(
    r0_view: &ViewImage,
    lab_view: &Array3<f64>,
    depth: Option<&DepthMap>,
    params: &CueParams,
) -> Result<EdgeWeightMap> {
    params.validate()?;
    let (h, w) = (r0_view.height(), r0_view.width());
    let omega_color = albedo_angle_weights(r0_view, params.angle_thresh, params.eps_dark);
    let maps = bw_probabilities(lab_view, WHITE_LAB, BLACK_LAB);
    let (g_w, g_b) = bw_gradient_labels(&maps, params.tau1, params.tau2);
    let omega_a = combine_albedo(&omega_color, &g_w, &g_b, params.combinator);
    let omega_occ = match depth {
        Some(d) => {
            if d.values().dim() != (h, w) {
                return Err(LfError::shape("depth map vs view", &[h, w], &[d.height(), d.width()]));
            }
            occlusion_weights(d, params.depth_thresh, params.occ_weight)
        }
        None => EdgePair::constant(h, w, 1.0),
    };
    Ok(EdgeWeightMap { omega_a, omega_occ })
}
