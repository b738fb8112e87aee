//! Seeded synthetic light fields with ground truth, and the scale-invariant
//! error metric used to score decompositions against them.
//!
//! Scenes are planar: a Mondrian albedo texture times a smooth shading
//! texture, rendered into each view with a disparity-dependent shift
//! (bilinear resampling for sub-pixel disparities). The two-layer variant
//! composites an occluder rectangle at its own disparity over the
//! background, which yields depth steps for the occlusion cue.

use ndarray::{Array2, Array5};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::cues::DepthMap;
use crate::error::{LfError, Result};
use crate::field::{LightField, ScalarLightField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShadingModel {
    /// Horizontal linear ramp.
    LinearRamp,
    /// Radial falloff from the texture center.
    RadialFalloff,
    /// Product of a horizontal and a vertical ramp.
    RampProduct,
}

/// Axis-aligned rectangle in central-view pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64
            && x < (self.x0 + self.width) as f64
            && y >= self.y0 as f64
            && y < (self.y0 + self.height) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisparitySpec {
    /// Single plane at the given disparity (pixels per view step).
    Global(f64),
    /// Occluder rectangle at foreground disparity over a background plane.
    TwoLayer {
        background: f64,
        foreground: f64,
        occluder: Rect,
        /// Shading multiplier on the occluder, creating a shading step
        /// coincident with the albedo step at the occlusion boundary.
        occluder_shading_scale: f64,
    },
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub n_u: usize,
    pub n_v: usize,
    pub width: usize,
    pub height: usize,
    /// Number of Mondrian patches splatted over the base color.
    pub patch_count: usize,
    /// Albedo palette, values in (0, 1].
    pub palette: Vec<[f64; 3]>,
    pub shading: ShadingModel,
    /// Shading amplitude range, within (0, 1].
    pub amplitude: (f64, f64),
    pub disparity: DisparitySpec,
    /// Uniform noise amplitude added to L after composition.
    pub noise_amplitude: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_u: 3,
            n_v: 3,
            width: 32,
            height: 32,
            patch_count: 8,
            palette: vec![
                [0.85, 0.30, 0.25],
                [0.25, 0.70, 0.35],
                [0.30, 0.40, 0.85],
                [0.90, 0.80, 0.30],
                [0.60, 0.35, 0.75],
                [0.80, 0.80, 0.80],
            ],
            shading: ShadingModel::RampProduct,
            amplitude: (0.35, 0.95),
            disparity: DisparitySpec::Global(0.0),
            noise_amplitude: 0.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_u == 0 || self.n_v == 0 || self.width == 0 || self.height == 0 {
            return Err(LfError::InvalidParam("scene dims must be >= 1".into()));
        }
        if self.palette.is_empty()
            || self
                .palette
                .iter()
                .any(|p| p.iter().any(|&c| !(0.0 < c && c <= 1.0)))
        {
            return Err(LfError::InvalidParam("palette values must lie in (0,1]".into()));
        }
        let (lo, hi) = self.amplitude;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return Err(LfError::InvalidParam(format!(
                "shading amplitude range must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})"
            )));
        }
        match &self.disparity {
            DisparitySpec::Global(d) => {
                if *d < 0.0 {
                    return Err(LfError::InvalidParam("disparity must be >= 0".into()));
                }
            }
            DisparitySpec::TwoLayer {
                background,
                foreground,
                occluder,
                occluder_shading_scale,
            } => {
                if *background < 0.0 || *foreground < 0.0 {
                    return Err(LfError::InvalidParam("disparities must be >= 0".into()));
                }
                if *occluder_shading_scale <= 0.0 {
                    return Err(LfError::InvalidParam("occluder shading scale must be > 0".into()));
                }
                if occluder.width == 0
                    || occluder.height == 0
                    || occluder.x0 + occluder.width > self.width
                    || occluder.y0 + occluder.height > self.height
                {
                    return Err(LfError::InvalidParam(format!(
                        "occluder {occluder:?} does not fit the {}x{} frame",
                        self.width, self.height
                    )));
                }
            }
        }
        if self.noise_amplitude < 0.0 {
            return Err(LfError::InvalidParam("noise amplitude must be >= 0".into()));
        }
        Ok(())
    }

    fn max_disparity(&self) -> f64 {
        match &self.disparity {
            DisparitySpec::Global(d) => *d,
            DisparitySpec::TwoLayer {
                background,
                foreground,
                ..
            } => background.max(*foreground),
        }
    }
}

/// Everything needed to score a decomposition of the generated scene.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub reflectance: LightField,
    pub shading: ScalarLightField,
    /// One normalized depth map per view, (u, v) row-major.
    pub depth: Vec<DepthMap>,
    /// Per-view mask of pixels adjacent to an occlusion boundary.
    pub occlusion_mask: Vec<Array2<bool>>,
    /// Central-view Mondrian patch index (0 = base layer).
    pub patch_index: Array2<usize>,
}

struct Textures {
    pad: usize,
    /// One raster per RGB channel.
    albedo: [Array2<f64>; 3],
    patch_index: Array2<usize>,
    shading: Array2<f64>,
}

fn bilinear(tex: &Array2<f64>, x: f64, y: f64) -> f64 {
    let (h, w) = tex.dim();
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    tex[[y0, x0]] * (1.0 - fx) * (1.0 - fy)
        + tex[[y0, x1]] * fx * (1.0 - fy)
        + tex[[y1, x0]] * (1.0 - fx) * fy
        + tex[[y1, x1]] * fx * fy
}

fn build_textures(spec: &SceneSpec, rng: &mut StdRng) -> Textures {
    let max_off = ((spec.n_u.max(spec.n_v) as f64 - 1.0) / 2.0).max(0.0);
    let pad = (spec.max_disparity() * max_off).ceil() as usize + 2;
    let th = spec.height + 2 * pad;
    let tw = spec.width + 2 * pad;

    let base = spec.palette[0];
    let mut albedo = [
        Array2::from_elem((th, tw), base[0]),
        Array2::from_elem((th, tw), base[1]),
        Array2::from_elem((th, tw), base[2]),
    ];
    let mut patch_index = Array2::zeros((th, tw));
    for p in 0..spec.patch_count {
        let color = spec.palette[rng.gen_range(0..spec.palette.len())];
        let pw = rng.gen_range(tw / 6..=tw / 2);
        let ph = rng.gen_range(th / 6..=th / 2);
        let px = rng.gen_range(0..tw - pw + 1);
        let py = rng.gen_range(0..th - ph + 1);
        for y in py..py + ph {
            for x in px..px + pw {
                for c in 0..3 {
                    albedo[c][[y, x]] = color[c];
                }
                patch_index[[y, x]] = p + 1;
            }
        }
    }

    let (lo, hi) = spec.amplitude;
    let shading = Array2::from_shape_fn((th, tw), |(y, x)| {
        let fx = x as f64 / (tw - 1).max(1) as f64;
        let fy = y as f64 / (th - 1).max(1) as f64;
        let t = match spec.shading {
            ShadingModel::LinearRamp => fx,
            ShadingModel::RadialFalloff => {
                let dx = fx - 0.5;
                let dy = fy - 0.5;
                1.0 - (dx * dx + dy * dy).sqrt() / 0.5f64.hypot(0.5)
            }
            ShadingModel::RampProduct => (0.25 + 0.75 * fx) * (0.4 + 0.6 * fy),
        };
        lo + (hi - lo) * t.clamp(0.0, 1.0)
    });

    Textures {
        pad,
        albedo,
        patch_index,
        shading,
    }
}

/// Renders the scene. Returns the (possibly noisy) light field and the
/// pre-noise ground truth satisfying `R * S = L_clean` exactly.
pub fn generate(spec: &SceneSpec, seed: u64) -> Result<(LightField, GroundTruth)> {
    spec.validate()?;
    let mut rng = StdRng::seed_from_u64(seed);
    let tex = build_textures(spec, &mut rng);
    let (n_u, n_v, h, w) = (spec.n_u, spec.n_v, spec.height, spec.width);
    let uc = (n_u as f64 - 1.0) / 2.0;
    let vc = (n_v as f64 - 1.0) / 2.0;

    let (bg_disp, layers) = match &spec.disparity {
        DisparitySpec::Global(d) => (*d, None),
        DisparitySpec::TwoLayer {
            background,
            foreground,
            occluder,
            occluder_shading_scale,
        } => (*background, Some((*foreground, *occluder, *occluder_shading_scale))),
    };
    // depth: normalized over the disparity range of the scene
    let (bg_depth, fg_depth) = match &layers {
        None => (0.0, 0.0),
        Some((fg, _, _)) => {
            let (lo, hi) = (bg_disp.min(*fg), bg_disp.max(*fg));
            if hi > lo {
                ((bg_disp - lo) / (hi - lo), (fg - lo) / (hi - lo))
            } else {
                (0.0, 0.0)
            }
        }
    };

    let mut r_data = Array5::zeros((n_u, n_v, h, w, 3));
    let mut s_data = ndarray::Array4::zeros((n_u, n_v, h, w));
    let mut l_data = Array5::zeros((n_u, n_v, h, w, 3));
    let mut depth_maps = Vec::with_capacity(n_u * n_v);
    let mut occ_masks = Vec::with_capacity(n_u * n_v);

    for u in 0..n_u {
        for v in 0..n_v {
            let du = u as f64 - uc;
            let dv = v as f64 - vc;
            let mut depth = Array2::zeros((h, w));
            let mut covered = Array2::from_elem((h, w), false);
            let mut view_rng = StdRng::seed_from_u64(
                seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul((u * n_v + v + 1) as u64),
            );
            for y in 0..h {
                for x in 0..w {
                    // position of this pixel on each layer's plane
                    let fg_hit = layers.as_ref().map(|(fg, rect, scale)| {
                        let px = x as f64 + fg * du;
                        let py = y as f64 + fg * dv;
                        (rect.contains(px, py), px, py, *scale)
                    });
                    let (albedo_rgb, shading_val, d_val, is_fg) = match fg_hit {
                        Some((true, px, py, scale)) => {
                            // occluder: solid last-palette color, scaled shading
                            let color = *spec.palette.last().unwrap();
                            let s = bilinear(
                                &tex.shading,
                                px + tex.pad as f64,
                                py + tex.pad as f64,
                            ) * scale;
                            (color, s.clamp(1e-6, 1.0), fg_depth, true)
                        }
                        _ => {
                            let px = x as f64 + bg_disp * du + tex.pad as f64;
                            let py = y as f64 + bg_disp * dv + tex.pad as f64;
                            let rgb = [
                                bilinear(&tex.albedo[0], px, py),
                                bilinear(&tex.albedo[1], px, py),
                                bilinear(&tex.albedo[2], px, py),
                            ];
                            let s = bilinear(&tex.shading, px, py);
                            (rgb, s, bg_depth, false)
                        }
                    };
                    covered[[y, x]] = is_fg;
                    depth[[y, x]] = d_val;
                    s_data[[u, v, y, x]] = shading_val;
                    for c in 0..3 {
                        r_data[[u, v, y, x, c]] = albedo_rgb[c];
                        let clean = albedo_rgb[c] * shading_val;
                        let noise = if spec.noise_amplitude > 0.0 {
                            view_rng.gen_range(-spec.noise_amplitude..=spec.noise_amplitude)
                        } else {
                            0.0
                        };
                        l_data[[u, v, y, x, c]] = (clean + noise).clamp(0.0, 1.0);
                    }
                }
            }
            let mut occ = Array2::from_elem((h, w), false);
            for y in 0..h {
                for x in 0..w {
                    let here = covered[[y, x]];
                    if (x + 1 < w && covered[[y, x + 1]] != here)
                        || (y + 1 < h && covered[[y + 1, x]] != here)
                        || (x > 0 && covered[[y, x - 1]] != here)
                        || (y > 0 && covered[[y - 1, x]] != here)
                    {
                        occ[[y, x]] = true;
                    }
                }
            }
            depth_maps.push(DepthMap::all_valid(depth)?);
            occ_masks.push(occ);
        }
    }

    // central-view patch index (background only; occluder is patch usize::MAX)
    let patch_index = Array2::from_shape_fn((h, w), |(y, x)| {
        tex.patch_index[[y + tex.pad, x + tex.pad]]
    });

    let light_field = LightField::from_array(l_data)?;
    let gt = GroundTruth {
        reflectance: LightField::from_array(r_data)?,
        shading: ScalarLightField::from_array(s_data)?,
        depth: depth_maps,
        occlusion_mask: occ_masks,
        patch_index,
    };
    Ok((light_field, gt))
}

/// Scale-invariant MSE: `min over alpha of mean((alpha * pred - gt)^2)`,
/// with the closed-form `alpha = <pred, gt> / <pred, pred>`.
pub fn si_mse(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(LfError::shape("si_mse", &[gt.len()], &[pred.len()]));
    }
    let gg: f64 = gt.iter().map(|v| v * v).sum();
    if gg == 0.0 {
        return Err(LfError::InvalidParam("si_mse: ground truth is identically zero".into()));
    }
    let pp: f64 = pred.iter().map(|v| v * v).sum();
    if pp == 0.0 {
        return Ok(gg / gt.len() as f64);
    }
    let pg: f64 = pred.iter().zip(gt).map(|(p, g)| p * g).sum();
    let alpha = pg / pp;
    let mse = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let d = alpha * p - g;
            d * d
        })
        .sum::<f64>()
        / gt.len() as f64;
    Ok(mse)
}

/// [`si_mse`] over whole scalar fields.
pub fn si_mse_fields(pred: &ScalarLightField, gt: &ScalarLightField) -> Result<f64> {
    si_mse(
        pred.data().as_slice().expect("standard layout"),
        gt.data().as_slice().expect("standard layout"),
    )
}
