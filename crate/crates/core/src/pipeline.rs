//! End-to-end decomposition: TV-L1 initialization, cue computation, per-view
//! Retinex solves, and the global coherence pass.
//!
//! The stages are sequential; per-view work (cues, Retinex solves) runs as a
//! parallel map over the angular grid with read-only shared inputs.

use ndarray::Array2;
use rayon::prelude::*;
use std::time::Instant;

use crate::cues::{self, CueParams, DepthMap, EdgeWeightMap};
use crate::error::{LfError, Result};
use crate::field::{to_log, LightField, ScalarLightField};
use crate::retinex::{self, RetinexWeights, SolverParams};
use crate::tv::{self, TvParams};
use crate::util::peak_rss_bytes;

/// Depth input for the occlusion cue.
#[derive(Debug, Clone)]
pub enum DepthInput {
    /// No depth: the occlusion weights stay 1 everywhere.
    None,
    /// One map per view, (u, v) row-major.
    PerView(Vec<DepthMap>),
    /// Central-view map only, warped to the other views when a global
    /// disparity is known, otherwise broadcast unwarped (with a warning).
    Central {
        map: DepthMap,
        disparity: Option<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub tv_init: TvParams,
    pub tv_coherence: TvParams,
    pub cue_params: CueParams,
    pub retinex_weights: RetinexWeights,
    pub solver_params: SolverParams,
    pub eps_log: f64,
    pub eps_div: f64,
    pub use_occlusion: bool,
    pub keep_intermediates: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tv_init: TvParams::default(),
            tv_coherence: TvParams::default(),
            cue_params: CueParams::default(),
            retinex_weights: RetinexWeights::default(),
            solver_params: SolverParams::default(),
            eps_log: 1e-4,
            eps_div: 1e-3,
            use_occlusion: true,
            keep_intermediates: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.tv_init.validate()?;
        self.tv_coherence.validate()?;
        self.cue_params.validate()?;
        self.retinex_weights.validate()?;
        if self.eps_log <= 0.0 || self.eps_div <= 0.0 {
            return Err(LfError::InvalidParam("eps_log and eps_div must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

/// Intermediates retained with `keep_intermediates`.
#[derive(Debug, Clone)]
pub struct Intermediates {
    pub l_filtered: LightField,
    pub s0: ScalarLightField,
    pub r0: LightField,
    pub s1: ScalarLightField,
    pub r1: ScalarLightField,
    pub r1_filtered: ScalarLightField,
    /// Per-view cue maps, (u, v) row-major.
    pub cue_maps: Vec<EdgeWeightMap>,
}

#[derive(Debug, Clone)]
pub struct DecompositionResult {
    /// Final RGB reflectance `R_f = L / S_f`.
    pub reflectance: LightField,
    /// Final single-channel shading, clamped below at `eps_div` so the
    /// product `R_f * S_f` reconstructs `L` exactly.
    pub shading: ScalarLightField,
    pub intermediates: Option<Intermediates>,
    pub timings: Vec<StageTiming>,
    pub peak_rss_bytes: Option<u64>,
    pub warnings: Vec<String>,
}

fn stage_err(stage: &'static str, e: LfError) -> LfError {
    match e {
        LfError::SolveFailure {
            reason, residual, ..
        } => LfError::SolveFailure {
            stage,
            reason,
            residual,
        },
        other => LfError::Config(format!("stage `{stage}`: {other}")),
    }
}

fn depth_for_view(
    input: &DepthInput,
    u: usize,
    v: usize,
    n_u: usize,
    n_v: usize,
) -> Option<DepthMap> {
    match input {
        DepthInput::None => None,
        DepthInput::PerView(maps) => maps.get(u * n_v + v).cloned(),
        DepthInput::Central { map, disparity } => {
            let uc = (n_u - 1) / 2;
            let vc = (n_v - 1) / 2;
            if (u, v) == (uc, vc) {
                return Some(map.clone());
            }
            match disparity {
                None => Some(map.clone()),
                Some(d) => {
                    let du = u as f64 - uc as f64;
                    let dv = v as f64 - vc as f64;
                    let (h, w) = (map.height(), map.width());
                    let mut values = Array2::zeros((h, w));
                    let mut valid = Array2::from_elem((h, w), false);
                    for y in 0..h {
                        for x in 0..w {
                            // nearest-neighbor warp from the central view
                            let sx = (x as f64 + d * du).round();
                            let sy = (y as f64 + d * dv).round();
                            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                                let (sx, sy) = (sx as usize, sy as usize);
                                values[[y, x]] = map.values()[[sy, sx]];
                                valid[[y, x]] = map.valid()[[sy, sx]];
                            }
                        }
                    }
                    DepthMap::new(values, valid).ok()
                }
            }
        }
    }
}

/// Runs the full decomposition. See [`decompose_with_cues`] for cue-map
/// injection.
pub fn decompose(
    light_field: &LightField,
    depth: &DepthInput,
    cfg: &PipelineConfig,
) -> Result<DecompositionResult> {
    decompose_with_cues(light_field, depth, None, cfg)
}

/// Decomposition with optional externally supplied cue maps (one per view,
/// (u, v) row-major), replacing the internally computed ones.
pub fn decompose_with_cues(
    light_field: &LightField,
    depth: &DepthInput,
    cue_override: Option<&[EdgeWeightMap]>,
    cfg: &PipelineConfig,
) -> Result<DecompositionResult> {
    cfg.validate()?;
    let (n_u, n_v) = (light_field.n_u(), light_field.n_v());
    let n_views = n_u * n_v;
    let mut warnings = Vec::new();
    let mut timings = Vec::new();
    let time = |stage: &'static str, start: Instant, sink: &mut Vec<StageTiming>| {
        sink.push(StageTiming {
            stage,
            seconds: start.elapsed().as_secs_f64(),
        });
    };

    if let (DepthInput::Central { disparity: None, .. }, true) = (depth, cfg.use_occlusion) {
        warnings.push(
            "central depth map broadcast to all views without warping (no disparity given)".into(),
        );
    }
    if let DepthInput::PerView(maps) = depth {
        if maps.len() != n_views {
            return Err(LfError::InvalidParam(format!(
                "expected {n_views} depth maps, got {}",
                maps.len()
            )));
        }
    }
    if let Some(over) = cue_override {
        if over.len() != n_views {
            return Err(LfError::InvalidParam(format!(
                "expected {n_views} cue maps, got {}",
                over.len()
            )));
        }
    }

    // TV-L1 initialization
    let t = Instant::now();
    let (l_filtered, _tv_diag) =
        tv::tvl1_filter_lf(light_field, &cfg.tv_init).map_err(|e| stage_err("tv-init", e))?;
    time("tv-init", t, &mut timings);

    // S0, R0
    let t = Instant::now();
    let s0 = l_filtered.per_ray_l2_norm();
    let r0 = l_filtered
        .divide_by_scalar_field(&s0, cfg.eps_div)
        .map_err(|e| stage_err("init-layers", e))?;
    time("init-layers", t, &mut timings);

    // cue maps per view
    let t = Instant::now();
    let cue_maps: Vec<EdgeWeightMap> = match cue_override {
        Some(over) => over.to_vec(),
        None => {
            let indices: Vec<(usize, usize)> = (0..n_u)
                .flat_map(|u| (0..n_v).map(move |v| (u, v)))
                .collect();
            indices
                .par_iter()
                .map(|&(u, v)| {
                    let r0_view = r0.view(u, v)?;
                    let lab = crate::color::rgb_to_cielab(&l_filtered.view(u, v)?);
                    let d = if cfg.use_occlusion {
                        depth_for_view(depth, u, v, n_u, n_v)
                    } else {
                        None
                    };
                    cues::compute_view_cues(&r0_view, &lab, d.as_ref(), &cfg.cue_params)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| stage_err("cues", e))?
        }
    };
    time("cues", t, &mut timings);

    // per-view Retinex solves
    let t = Instant::now();
    let indices: Vec<(usize, usize)> = (0..n_u)
        .flat_map(|u| (0..n_v).map(move |v| (u, v)))
        .collect();
    let solutions = indices
        .par_iter()
        .map(|&(u, v)| {
            let l_view = s0.view(u, v)?;
            let l_log = to_log(&l_view, cfg.eps_log)?;
            let texture_view = l_filtered.view(u, v)?;
            retinex::solve_view(
                &l_log,
                &cue_maps[u * n_v + v],
                Some(&texture_view),
                &cfg.retinex_weights,
                &cfg.solver_params,
            )
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| stage_err("retinex", e))?;
    let mut s1 = ScalarLightField::from_fn(n_u, n_v, light_field.height(), light_field.width(), |_, _, _, _| 0.0)?;
    let mut r1 = s1.clone();
    for (&(u, v), sol) in indices.iter().zip(&solutions) {
        if sol.degenerate {
            warnings.push(format!("view ({u},{v}) is empty; returned trivial decomposition"));
        }
        let (s_lin, r_lin) = retinex::exp_layers(&sol.s, &sol.r);
        s1.set_view(u, v, &s_lin)?;
        r1.set_view(u, v, &r_lin)?;
    }
    time("retinex", t, &mut timings);

    // global coherence
    let t = Instant::now();
    let (shading, reflectance, r1_filtered) =
        global_coherence(&r1, &l_filtered, light_field, cfg).map_err(|e| stage_err("coherence", e))?;
    time("coherence", t, &mut timings);

    let intermediates = cfg.keep_intermediates.then(|| Intermediates {
        l_filtered,
        s0,
        r0,
        s1,
        r1,
        r1_filtered,
        cue_maps,
    });

    Ok(DecompositionResult {
        reflectance,
        shading,
        intermediates,
        timings,
        peak_rss_bytes: peak_rss_bytes(),
        warnings,
    })
}

/// Finishing pass: TV-L1 on the single-channel `R1`, then
/// `S_f = ||L_filtered||_2 / R1_filtered` (clamped below at `eps_div`) and
/// `R_f = L / S_f`. Returns `(S_f, R_f, R1_filtered)`.
pub fn global_coherence(
    r1: &ScalarLightField,
    l_filtered: &LightField,
    light_field: &LightField,
    cfg: &PipelineConfig,
) -> Result<(ScalarLightField, LightField, ScalarLightField)> {
    if r1.data().dim() != (
        light_field.n_u(),
        light_field.n_v(),
        light_field.height(),
        light_field.width(),
    ) {
        return Err(LfError::shape(
            "global_coherence R1",
            &[
                light_field.n_u(),
                light_field.n_v(),
                light_field.height(),
                light_field.width(),
            ],
            r1.data().shape(),
        ));
    }
    let (r1_filtered, _) = tv::tvl1_filter_scalar(r1, &cfg.tv_coherence)?;
    let s0 = l_filtered.per_ray_l2_norm();
    // clamping S_f at eps_div keeps it positive and makes R_f * S_f == L exact
    let shading = s0
        .divide(&r1_filtered, cfg.eps_div)?
        .map(|v| v.max(cfg.eps_div));
    let reflectance = light_field.divide_by_scalar_field(&shading, cfg.eps_div)?;
    Ok((shading, reflectance, r1_filtered))
}

/// Mean over central-view pixels of the variance of samples along each
/// reprojected ray across views; 0 for a perfectly coherent field.
pub fn angular_coherence_score(field: &ScalarLightField, disparity: f64) -> f64 {
    let (n_u, n_v, h, w) = field.data().dim();
    let uc = (n_u as f64 - 1.0) / 2.0;
    let vc = (n_v as f64 - 1.0) / 2.0;
    let mut total = 0.0;
    let mut pixels = 0usize;
    for y in 0..h {
        for x in 0..w {
            let mut samples = Vec::with_capacity(n_u * n_v);
            for u in 0..n_u {
                for v in 0..n_v {
                    let sx = x as f64 + disparity * (u as f64 - uc);
                    let sy = y as f64 + disparity * (v as f64 - vc);
                    if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
                        continue;
                    }
                    samples.push(bilinear_view(field, u, v, sx, sy));
                }
            }
            if samples.len() >= 2 {
                let mean = samples.iter().sum::<f64>() / samples.len() as f64;
                let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
                    / samples.len() as f64;
                total += var;
                pixels += 1;
            }
        }
    }
    if pixels == 0 {
        0.0
    } else {
        total / pixels as f64
    }
}

fn bilinear_view(field: &ScalarLightField, u: usize, v: usize, x: f64, y: f64) -> f64 {
    let (h, w) = (field.height(), field.width());
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let d = field.data();
    d[[u, v, y0, x0]] * (1.0 - fx) * (1.0 - fy)
        + d[[u, v, y0, x1]] * fx * (1.0 - fy)
        + d[[u, v, y1, x0]] * (1.0 - fx) * fy
        + d[[u, v, y1, x1]] * fx * fy
}
