//! `lfintrinsic`: intrinsic light field decomposition from the command line.
//!
//! Exit codes: 0 success, 1 validation/input error, 2 solver failure.
//! All diagnostics go to standard error; reports go to standard output.

mod config;
mod io;
mod manifest;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use lfintrinsic_core::cues::{
    albedo_angle_weights, bw_gradient_labels, bw_probabilities, combine_albedo, occlusion_weights,
};
use lfintrinsic_core::pipeline::{angular_coherence_score, decompose, DepthInput};
use lfintrinsic_core::synth::{self, DisparitySpec, Rect, SceneSpec};
use lfintrinsic_core::tv::tvl1_filter_lf;
use lfintrinsic_core::{LfError, LightField, PipelineConfig, ScalarLightField, ViewImage};

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "lfintrinsic", version, about = "Intrinsic light field decomposition")]
struct Cli {
    /// Size of the rayon thread pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single setting override, `key=value`; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Disable the occlusion cue even when depth is available.
    #[arg(long)]
    no_occlusion: bool,
}

impl ConfigArgs {
    fn build(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            config::apply_config_file(&mut cfg, path)?;
        }
        for s in &self.sets {
            let Some((k, v)) = s.split_once('=') else {
                bail!("--set expects key=value, got {s:?}");
            };
            config::apply_setting(&mut cfg, k.trim(), v.trim())?;
        }
        if self.no_occlusion {
            cfg.use_occlusion = false;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a light field into reflectance and shading.
    Decompose {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write filtered input, per-view Retinex layers, and cue maps.
        #[arg(long)]
        keep_intermediates: bool,
    },
    /// Extract an epipolar plane image slice.
    Epi {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Spatial row for a horizontal EPI (default: center).
        #[arg(long)]
        row: Option<usize>,
        /// Angular v coordinate for a horizontal EPI (default: center).
        #[arg(long)]
        v: Option<usize>,
        /// Spatial column for a vertical EPI instead of a horizontal one.
        #[arg(long)]
        col: Option<usize>,
        /// Angular u coordinate for a vertical EPI (default: center).
        #[arg(long)]
        u: Option<usize>,
    },
    /// Emit the central view's cue maps.
    Cues {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate a synthetic benchmark scene with ground truth.
    Synth {
        #[arg(long, default_value = "mondrian")]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 32)]
        height: usize,
        /// Uniform noise amplitude added to the rendered light field.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Score a decomposition against ground truth; prints key=value lines.
    Eval {
        result_dir: PathBuf,
        gt_dir: PathBuf,
        /// Global disparity used by the angular coherence score.
        #[arg(long, default_value_t = 0.0)]
        disparity: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: setting thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let solver_failure = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<LfError>(), Some(LfError::SolveFailure { .. })));
            ExitCode::from(if solver_failure { 2 } else { 1 })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Decompose {
            manifest,
            out,
            config,
            keep_intermediates,
        } => cmd_decompose(&manifest, &out, &config, keep_intermediates),
        Command::Epi {
            manifest,
            out,
            row,
            v,
            col,
            u,
        } => cmd_epi(&manifest, &out, row, v, col, u),
        Command::Cues {
            manifest,
            out,
            config,
        } => cmd_cues(&manifest, &out, &config),
        Command::Synth {
            preset,
            out,
            seed,
            width,
            height,
            noise,
        } => cmd_synth(&preset, &out, seed, width, height, noise),
        Command::Eval {
            result_dir,
            gt_dir,
            disparity,
        } => cmd_eval(&result_dir, &gt_dir, disparity),
    }
}

fn cmd_decompose(
    manifest_path: &Path,
    out: &Path,
    config: &ConfigArgs,
    keep_intermediates: bool,
) -> Result<()> {
    let manifest = Manifest::load(manifest_path)?;
    let mut cfg = config.build()?;
    cfg.keep_intermediates = keep_intermediates;
    let lf = manifest.load_lightfield()?;
    let depth = manifest.load_depth()?;
    eprintln!(
        "decomposing {}x{} views of {}x{} pixels",
        manifest.n_u,
        manifest.n_v,
        lf.width(),
        lf.height()
    );
    let result = decompose(&lf, &depth, &cfg)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    for t in &result.timings {
        eprintln!("stage {:<12} {:8.2}s", t.stage, t.seconds);
    }
    if let Some(rss) = result.peak_rss_bytes {
        eprintln!("peak RSS: {:.2} GB", rss as f64 / 1e9);
    }

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for u in 0..manifest.n_u {
        for v in 0..manifest.n_v {
            let s = result.shading.view(u, v)?;
            io::save_gray16_scaled(&out.join(format!("shading_{u}_{v}.png")), &s)?;
            io::save_pfm_gray(&out.join(format!("shading_{u}_{v}.pfm")), &s)?;
            let r = result.reflectance.view(u, v)?;
            io::save_rgb8_srgb(&out.join(format!("reflectance_{u}_{v}.png")), &r)?;
            io::save_pfm_color(&out.join(format!("reflectance_{u}_{v}.pfm")), &r)?;
        }
    }

    if let Some(inter) = &result.intermediates {
        for u in 0..manifest.n_u {
            for v in 0..manifest.n_v {
                io::save_pfm_color(
                    &out.join(format!("filtered_{u}_{v}.pfm")),
                    &inter.l_filtered.view(u, v)?,
                )?;
                io::save_pfm_gray(&out.join(format!("s1_{u}_{v}.pfm")), &inter.s1.view(u, v)?)?;
                io::save_pfm_gray(&out.join(format!("r1_{u}_{v}.pfm")), &inter.r1.view(u, v)?)?;
                let cues = &inter.cue_maps[u * manifest.n_v + v];
                io::save_gray8(
                    &out.join(format!("omega_a_h_{u}_{v}.png")),
                    &cues.omega_a.horizontal,
                )?;
                io::save_gray8(
                    &out.join(format!("omega_a_v_{u}_{v}.png")),
                    &cues.omega_a.vertical,
                )?;
                io::save_gray8(
                    &out.join(format!("omega_occ_h_{u}_{v}.png")),
                    &cues.omega_occ.horizontal,
                )?;
                io::save_gray8(
                    &out.join(format!("omega_occ_v_{u}_{v}.png")),
                    &cues.omega_occ.vertical,
                )?;
            }
        }
    }
    eprintln!("wrote decomposition to {}", out.display());
    Ok(())
}

fn cmd_epi(
    manifest_path: &Path,
    out: &Path,
    row: Option<usize>,
    v: Option<usize>,
    col: Option<usize>,
    u: Option<usize>,
) -> Result<()> {
    let manifest = Manifest::load(manifest_path)?;
    let lf = manifest.load_lightfield()?;
    std::fs::create_dir_all(out)?;
    let (slice, name) = if let Some(x) = col {
        let u = u.unwrap_or(manifest.n_u / 2);
        (lf.epi_vertical(x, u)?, format!("epi_vertical_x{x}_u{u}.png"))
    } else {
        let y = row.unwrap_or(lf.height() / 2);
        let v = v.unwrap_or(manifest.n_v / 2);
        (lf.epi_horizontal(y, v)?, format!("epi_horizontal_y{y}_v{v}.png"))
    };
    let img = ViewImage::from_array(slice.data().clone())?;
    io::save_rgb8_srgb(&out.join(&name), &img)?;
    eprintln!("wrote {}", out.join(&name).display());
    Ok(())
}

fn cmd_cues(manifest_path: &Path, out: &Path, config: &ConfigArgs) -> Result<()> {
    let manifest = Manifest::load(manifest_path)?;
    let cfg = config.build()?;
    let lf = manifest.load_lightfield()?;
    let (filtered, _) = tvl1_filter_lf(&lf, &cfg.tv_init)?;
    let s0 = filtered.per_ray_l2_norm();
    let r0 = filtered.divide_by_scalar_field(&s0, cfg.eps_div)?;
    let (uc, vc) = (manifest.n_u / 2, manifest.n_v / 2);
    let r0_view = r0.view(uc, vc)?;
    let lab = lfintrinsic_core::color::rgb_to_cielab(&filtered.view(uc, vc)?);
    let p = &cfg.cue_params;

    std::fs::create_dir_all(out)?;
    let angle = albedo_angle_weights(&r0_view, p.angle_thresh, p.eps_dark);
    io::save_gray8(&out.join("omega_angle_h.png"), &angle.horizontal)?;
    io::save_gray8(&out.join("omega_angle_v.png"), &angle.vertical)?;
    let maps = bw_probabilities(&lab, [100.0, 0.0, 0.0], [0.0, 0.0, 0.0]);
    io::save_gray8(&out.join("p_white.png"), &maps.p_white)?;
    io::save_gray8(&out.join("p_black.png"), &maps.p_black)?;
    let (g_white, g_black) = bw_gradient_labels(&maps, p.tau1, p.tau2);
    io::save_gray8(&out.join("g_white_h.png"), &g_white.horizontal)?;
    io::save_gray8(&out.join("g_white_v.png"), &g_white.vertical)?;
    io::save_gray8(&out.join("g_black_h.png"), &g_black.horizontal)?;
    io::save_gray8(&out.join("g_black_v.png"), &g_black.vertical)?;
    let omega_a = combine_albedo(&angle, &g_white, &g_black, p.combinator);
    io::save_gray8(&out.join("omega_a_h.png"), &omega_a.horizontal)?;
    io::save_gray8(&out.join("omega_a_v.png"), &omega_a.vertical)?;
    if let DepthInput::PerView(maps) = manifest.load_depth()? {
        let occ = occlusion_weights(&maps[uc * manifest.n_v + vc], p.depth_thresh, p.occ_weight);
        io::save_gray8(&out.join("omega_occ_h.png"), &occ.horizontal)?;
        io::save_gray8(&out.join("omega_occ_v.png"), &occ.vertical)?;
    } else if let DepthInput::Central { map, .. } = manifest.load_depth()? {
        let occ = occlusion_weights(&map, p.depth_thresh, p.occ_weight);
        io::save_gray8(&out.join("omega_occ_h.png"), &occ.horizontal)?;
        io::save_gray8(&out.join("omega_occ_v.png"), &occ.vertical)?;
    }
    eprintln!("wrote cue maps to {}", out.display());
    Ok(())
}

fn cmd_synth(
    preset: &str,
    out: &Path,
    seed: u64,
    width: usize,
    height: usize,
    noise: f64,
) -> Result<()> {
    let mut spec = SceneSpec {
        width,
        height,
        noise_amplitude: noise,
        ..SceneSpec::default()
    };
    match preset {
        "mondrian" => {}
        "two-layer" => {
            spec.disparity = DisparitySpec::TwoLayer {
                background: 0.0,
                foreground: 1.0,
                occluder: Rect {
                    x0: width / 3,
                    y0: height / 3,
                    width: width / 3,
                    height: height / 3,
                },
                occluder_shading_scale: 0.45,
            };
        }
        other => bail!("unknown preset {other:?} (expected mondrian or two-layer)"),
    }
    let (lf, gt) = synth::generate(&spec, seed)?;

    std::fs::create_dir_all(out.join("gt"))?;
    for u in 0..spec.n_u {
        for v in 0..spec.n_v {
            io::save_view(&out.join(format!("view_{u}_{v}.png")), &lf.view(u, v)?, false)?;
            io::save_pfm_gray(
                &out.join(format!("gt/shading_{u}_{v}.pfm")),
                &gt.shading.view(u, v)?,
            )?;
            io::save_pfm_color(
                &out.join(format!("gt/reflectance_{u}_{v}.pfm")),
                &gt.reflectance.view(u, v)?,
            )?;
            io::save_pfm_gray(
                &out.join(format!("gt/depth_{u}_{v}.pfm")),
                gt.depth[u * spec.n_v + v].values(),
            )?;
        }
    }
    let disparity = match &spec.disparity {
        DisparitySpec::Global(d) => *d,
        DisparitySpec::TwoLayer { background, foreground, .. } => background.max(*foreground),
    };
    let manifest = format!(
        "pattern = view_{{u}}_{{v}}.png\nn_u = {}\nn_v = {}\ngamma = linear\ndisparity = {}\ndepth_pattern = gt/depth_{{u}}_{{v}}.pfm\n",
        spec.n_u, spec.n_v, disparity
    );
    std::fs::write(out.join("manifest"), manifest)?;
    eprintln!("wrote scene to {}", out.display());
    Ok(())
}

/// Reads a full grid of `prefix_{u}_{v}.pfm` views as a scalar field.
fn load_scalar_grid(dir: &Path, prefix: &str) -> Result<ScalarLightField> {
    let (n_u, n_v) = grid_extent(dir, prefix)?;
    let mut views = Vec::new();
    for u in 0..n_u {
        for v in 0..n_v {
            views.push(io::load_pfm_gray(&dir.join(format!("{prefix}_{u}_{v}.pfm")))?);
        }
    }
    let (h, w) = views[0].dim();
    let mut field = ScalarLightField::from_fn(n_u, n_v, h, w, |_, _, _, _| 0.0)?;
    for (i, raster) in views.iter().enumerate() {
        field.set_view(i / n_v, i % n_v, raster)?;
    }
    Ok(field)
}

fn load_color_grid(dir: &Path, prefix: &str) -> Result<LightField> {
    let (n_u, n_v) = grid_extent(dir, prefix)?;
    let mut views = Vec::new();
    for u in 0..n_u {
        for v in 0..n_v {
            views.push(io::load_pfm_color(&dir.join(format!("{prefix}_{u}_{v}.pfm")))?);
        }
    }
    Ok(LightField::from_views(n_u, n_v, &views)?)
}

fn grid_extent(dir: &Path, prefix: &str) -> Result<(usize, usize)> {
    let mut n_u = 0;
    while dir.join(format!("{prefix}_{n_u}_0.pfm")).exists() {
        n_u += 1;
    }
    let mut n_v = 0;
    while dir.join(format!("{prefix}_0_{n_v}.pfm")).exists() {
        n_v += 1;
    }
    if n_u == 0 || n_v == 0 {
        bail!("no {prefix}_{{u}}_{{v}}.pfm files in {}", dir.display());
    }
    Ok((n_u, n_v))
}

fn cmd_eval(result_dir: &Path, gt_dir: &Path, disparity: f64) -> Result<()> {
    let shading = load_scalar_grid(result_dir, "shading")?;
    let gt_shading = load_scalar_grid(gt_dir, "shading")?;
    let si_shading = synth::si_mse_fields(&shading, &gt_shading)?;

    let reflectance = load_color_grid(result_dir, "reflectance")?;
    let gt_reflectance = load_color_grid(gt_dir, "reflectance")?;
    let pred: Vec<f64> = reflectance.data().iter().copied().collect();
    let gt: Vec<f64> = gt_reflectance.data().iter().copied().collect();
    let si_reflectance = synth::si_mse(&pred, &gt)?;

    let coherence = angular_coherence_score(&shading, disparity);

    println!("si_mse_shading={si_shading}");
    println!("si_mse_reflectance={si_reflectance}");
    println!("angular_coherence={coherence}");
    Ok(())
}
