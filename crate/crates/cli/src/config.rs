//! Pipeline configuration from a key-value text file; unknown keys are
//! rejected so typos fail loudly.

use anyhow::{bail, Context, Result};
use std::path::Path;

use lfintrinsic_core::PipelineConfig;

use crate::manifest::parse_keyvals;

/// Applies `key = value` settings from `path` on top of `cfg`.
pub fn apply_config_file(cfg: &mut PipelineConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let kv = parse_keyvals(&text).with_context(|| format!("parsing config {}", path.display()))?;
    for (key, value) in kv {
        apply_setting(cfg, &key, &value)
            .with_context(|| format!("{}: key `{key}`", path.display()))?;
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| anyhow::anyhow!("invalid value {v:?}: {e}"))
}

/// Sets a single configuration key. TV settings apply to both TV passes.
pub fn apply_setting(cfg: &mut PipelineConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "tv_beta" => {
            let b = parse(value)?;
            cfg.tv_init.beta = b;
            cfg.tv_coherence.beta = b;
        }
        "tv_rho" => {
            let r = parse(value)?;
            cfg.tv_init.rho = r;
            cfg.tv_coherence.rho = r;
        }
        "tv_max_iters" => {
            let n = parse(value)?;
            cfg.tv_init.max_iters = n;
            cfg.tv_coherence.max_iters = n;
        }
        "tv_tol" => {
            let t = parse(value)?;
            cfg.tv_init.tol_rel = t;
            cfg.tv_coherence.tol_rel = t;
        }
        "lambda1" => cfg.retinex_weights.lambda1 = parse(value)?,
        "lambda2" => cfg.retinex_weights.lambda2 = parse(value)?,
        "lambda3" => cfg.retinex_weights.lambda3 = parse(value)?,
        "anchor_fraction" => cfg.solver_params.anchor_fraction = parse(value)?,
        "cg_tol" => cfg.solver_params.cg_tol = parse(value)?,
        "angle_thresh" => cfg.cue_params.angle_thresh = parse(value)?,
        "tau1" => cfg.cue_params.tau1 = parse(value)?,
        "tau2" => cfg.cue_params.tau2 = parse(value)?,
        "depth_thresh" => cfg.cue_params.depth_thresh = parse(value)?,
        "occ_weight" => cfg.cue_params.occ_weight = parse(value)?,
        "eps_log" => cfg.eps_log = parse(value)?,
        "eps_div" => cfg.eps_div = parse(value)?,
        "use_occlusion" => cfg.use_occlusion = parse(value)?,
        other => bail!("unknown config key `{other}`"),
    }
    Ok(())
}
