//! Per-view quadratic Retinex energy in log space.
//!
//! For a single-channel log view `l` the solver minimizes
//! `lambda1 f1 + lambda2 f2 + lambda3 f3` over log-shading `s`, where
//!
//!   f1 = sum over 4-connected edges of
//!        w_occ * ( (s_i - s_j)^2 + w_a * ((l_i - l_j) - (s_i - s_j))^2 )
//!   f2 = sum over anchor pixels of (s_i - l_i)^2
//!   f3 = sum over texture pairs of ((l_i - s_i) - (l_j - s_j))^2
//!
//! using the gradient relation `grad r = grad l - grad s`. Every term is
//! quadratic, so the energy assembles into `1/2 s^T A s - b^T s + c` with a
//! sparse SPD `A` (anchors pin the otherwise free constant shift), solved by
//! Jacobi-preconditioned conjugate gradient.

use ndarray::Array2;
use rayon::prelude::*;
use std::collections::HashSet;

use crate::cues::EdgeWeightMap;
use crate::error::{LfError, Result};
use crate::field::{LogView, ViewImage};
use crate::util::det_dot;

#[derive(Debug, Clone, Copy)]
pub struct RetinexWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for RetinexWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1000.0,
        }
    }
}

impl RetinexWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda3 < 0.0 {
            return Err(LfError::InvalidParam("retinex weights must be >= 0".into()));
        }
        if self.lambda1 == 0.0 && self.lambda2 == 0.0 && self.lambda3 == 0.0 {
            return Err(LfError::InvalidParam("retinex weights must not all be zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolverParams {
    /// Fraction of pixels anchored to `s = l` (white reflectance).
    pub anchor_fraction: f64,
    /// Chromaticity quantization bins per channel for texture pairing.
    pub chroma_bins: usize,
    /// Partners sampled per pixel.
    pub max_partners: usize,
    /// Partners must lie strictly beyond this Euclidean distance.
    pub min_pair_distance: f64,
    /// Search radius cap (Chebyshev rings) for texture partners.
    pub max_pair_ring: usize,
    /// Relative CG tolerance.
    pub cg_tol: f64,
    /// CG iteration cap as a multiple of the unknown count.
    pub cg_max_iter_factor: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            anchor_fraction: 0.01,
            chroma_bins: 16,
            max_partners: 4,
            min_pair_distance: 2.0,
            max_pair_ring: 16,
            cg_tol: 1e-8,
            cg_max_iter_factor: 10,
        }
    }
}

/// Sparse symmetric quadratic form `E(s) = 1/2 s^T A s - b^T s + c`.
#[derive(Debug, Clone)]
pub struct RetinexSystem {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    c: f64,
    anchors: Vec<usize>,
    pairs: Vec<(usize, usize)>,
}

impl RetinexSystem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rows: vec![Vec::new(); n],
            b: vec![0.0; n],
            c: 0.0,
            anchors: Vec::new(),
            pairs: Vec::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    fn add_entry(&mut self, i: usize, j: usize, v: f64) {
        let row = &mut self.rows[i];
        match row.iter_mut().find(|(col, _)| *col == j) {
            Some((_, val)) => *val += v,
            None => row.push((j, v)),
        }
    }

    /// Adds `w * ((s_i - s_j) - g)^2` to the energy.
    fn add_pair_term(&mut self, i: usize, j: usize, w: f64, g: f64) {
        if w == 0.0 {
            return;
        }
        self.add_entry(i, i, 2.0 * w);
        self.add_entry(j, j, 2.0 * w);
        self.add_entry(i, j, -2.0 * w);
        self.add_entry(j, i, -2.0 * w);
        self.b[i] += 2.0 * w * g;
        self.b[j] -= 2.0 * w * g;
        self.c += w * g * g;
    }

    /// Adds `w * (s_i - t)^2` to the energy.
    fn add_anchor_term(&mut self, i: usize, w: f64, t: f64) {
        self.add_entry(i, i, 2.0 * w);
        self.b[i] += 2.0 * w * t;
        self.c += w * t * t;
    }

    /// `A s` (for tests and the CG solve).
    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        self.rows
            .par_iter()
            .map(|row| row.iter().map(|&(j, v)| v * s[j]).sum())
            .collect()
    }

    /// Evaluates `1/2 s^T A s - b^T s + c`.
    pub fn energy(&self, s: &[f64]) -> f64 {
        let as_ = self.apply(s);
        0.5 * det_dot(s, &as_) - det_dot(&self.b, s) + self.c
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    /// Gradient `A s - b` of the energy.
    pub fn gradient(&self, s: &[f64]) -> Vec<f64> {
        let mut g = self.apply(s);
        for (gi, bi) in g.iter_mut().zip(&self.b) {
            *gi -= bi;
        }
        g
    }
}

fn flat(x: usize, y: usize, width: usize) -> usize {
    y * width + x
}

/// Adds the occlusion-extended Retinex smoothness term over the 4-connected
/// neighborhood.
pub fn build_f1(
    system: &mut RetinexSystem,
    l_log: &LogView,
    weights: &EdgeWeightMap,
    lambda1: f64,
) -> Result<()> {
    let (h, w) = (l_log.height(), l_log.width());
    if weights.omega_a.horizontal.dim() != (h, w - 1)
        || weights.omega_a.vertical.dim() != (h - 1, w)
        || weights.omega_occ.horizontal.dim() != (h, w - 1)
        || weights.omega_occ.vertical.dim() != (h - 1, w)
    {
        return Err(LfError::shape(
            "cue maps vs log view edge grid",
            &[h, w],
            &[
                weights.omega_a.horizontal.dim().0,
                weights.omega_a.horizontal.dim().1 + 1,
            ],
        ));
    }
    let l = l_log.data();
    let mut edge = |i: usize, j: usize, w_a: f64, w_occ: f64, dl: f64| {
        // w_occ * (s_i - s_j)^2
        system.add_pair_term(i, j, lambda1 * w_occ, 0.0);
        // w_occ * w_a * ((s_i - s_j) - (l_i - l_j))^2
        system.add_pair_term(i, j, lambda1 * w_occ * w_a, dl);
    };
    for y in 0..h {
        for x in 0..w - 1 {
            let (i, j) = (flat(x, y, w), flat(x + 1, y, w));
            edge(
                i,
                j,
                weights.omega_a.horizontal[[y, x]],
                weights.omega_occ.horizontal[[y, x]],
                l[[y, x]] - l[[y, x + 1]],
            );
        }
    }
    for y in 0..h - 1 {
        for x in 0..w {
            let (i, j) = (flat(x, y, w), flat(x, y + 1, w));
            edge(
                i,
                j,
                weights.omega_a.vertical[[y, x]],
                weights.omega_occ.vertical[[y, x]],
                l[[y, x]] - l[[y + 1, x]],
            );
        }
    }
    Ok(())
}

/// Brightest `ceil(fraction * N)` pixels by log value; ties break by
/// row-major index so the set is deterministic.
pub fn absolute_scale_anchors(l_log: &LogView, fraction: f64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(LfError::InvalidParam(format!(
            "anchor fraction must lie in (0,1], got {fraction}"
        )));
    }
    let n = l_log.height() * l_log.width();
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let flat_l = l_log.data().as_slice().expect("log view standard layout");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        flat_l[b]
            .partial_cmp(&flat_l[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut anchors = order[..k].to_vec();
    anchors.sort_unstable();
    Ok(anchors)
}

/// Adds the absolute-scale term pinning `s = l` (white reflectance) at the
/// anchor pixels.
pub fn build_f2(system: &mut RetinexSystem, l_log: &LogView, anchors: &[usize], lambda2: f64) {
    let flat_l = l_log.data().as_slice().expect("log view standard layout");
    for &i in anchors {
        system.add_anchor_term(i, lambda2, flat_l[i]);
    }
    system.anchors = anchors.to_vec();
}

fn chroma_bin(rgb: [f64; 3], bins: usize) -> Option<usize> {
    let sum = rgb[0] + rgb[1] + rgb[2];
    if sum <= 1e-9 {
        return None;
    }
    let q = |c: f64| (((c / sum) * bins as f64) as usize).min(bins - 1);
    Some((q(rgb[0]) * bins + q(rgb[1])) * bins + q(rgb[2]))
}

/// Non-local texture pairs: pixels with identical quantized chromaticity,
/// each sampling at most `max_partners` nearest same-bin pixels strictly
/// beyond `min_pair_distance`. Deduplicated, deterministic order.
pub fn texture_pairs(view: &ViewImage, params: &SolverParams) -> Vec<(usize, usize)> {
    let (h, w) = (view.height(), view.width());
    let bins: Vec<Option<usize>> = (0..h * w)
        .map(|idx| chroma_bin(view.pixel(idx % w, idx / w), params.chroma_bins))
        .collect();

    let min_sq = params.min_pair_distance * params.min_pair_distance;
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut pairs = Vec::new();

    for y in 0..h {
        for x in 0..w {
            let i = flat(x, y, w);
            let Some(bin) = bins[i] else { continue };
            // ordered ring search over the bin raster; ring r has Euclidean
            // distance >= r, so once enough candidates are collected no
            // farther ring can improve on the kept set beyond ring sqrt(2)*r
            let mut candidates: Vec<(f64, usize)> = Vec::new();
            let mut stop_ring = params.max_pair_ring;
            let first_ring = params.min_pair_distance.floor().max(1.0) as usize;
            let mut ring = first_ring;
            while ring <= stop_ring {
                for (dy, dx) in ring_offsets(ring) {
                    let (ny, nx) = (y as isize + dy, x as isize + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let dist_sq = (dy * dy + dx * dx) as f64;
                    if dist_sq <= min_sq {
                        continue;
                    }
                    let j = flat(nx as usize, ny as usize, w);
                    if bins[j] == Some(bin) {
                        candidates.push((dist_sq, j));
                    }
                }
                if candidates.len() >= params.max_partners {
                    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                    let kth = candidates[params.max_partners - 1].0.sqrt();
                    stop_ring = stop_ring.min(kth.ceil() as usize);
                }
                ring += 1;
            }
            candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, j) in candidates.iter().take(params.max_partners) {
                let key = (i.min(j), i.max(j));
                if seen.insert(key) {
                    pairs.push(key);
                }
            }
        }
    }
    pairs
}

fn ring_offsets(r: usize) -> Vec<(isize, isize)> {
    let r = r as isize;
    let mut out = Vec::with_capacity((8 * r) as usize);
    for dx in -r..=r {
        out.push((-r, dx));
        out.push((r, dx));
    }
    for dy in (-r + 1)..r {
        out.push((dy, -r));
        out.push((dy, r));
    }
    out
}

/// Adds the non-local texture term enforcing equal reflectance across the
/// given pairs.
pub fn build_f3(system: &mut RetinexSystem, l_log: &LogView, pairs: &[(usize, usize)], lambda3: f64) {
    let flat_l = l_log.data().as_slice().expect("log view standard layout");
    for &(i, j) in pairs {
        // ((l_i - s_i) - (l_j - s_j))^2 = ((s_i - s_j) - (l_i - l_j))^2
        system.add_pair_term(i, j, lambda3, flat_l[i] - flat_l[j]);
    }
    system.pairs = pairs.to_vec();
}

/// Assembles the full per-view system.
pub fn assemble_system(
    l_log: &LogView,
    cue_weights: &EdgeWeightMap,
    view_for_texture: Option<&ViewImage>,
    weights: &RetinexWeights,
    params: &SolverParams,
) -> Result<RetinexSystem> {
    weights.validate()?;
    let n = l_log.height() * l_log.width();
    let mut system = RetinexSystem::new(n);
    build_f1(&mut system, l_log, cue_weights, weights.lambda1)?;
    let anchors = absolute_scale_anchors(l_log, params.anchor_fraction)?;
    build_f2(&mut system, l_log, &anchors, weights.lambda2);
    if weights.lambda3 > 0.0 {
        if let Some(view) = view_for_texture {
            let pairs = texture_pairs(view, params);
            build_f3(&mut system, l_log, &pairs, weights.lambda3);
        }
    }
    Ok(system)
}

/// Jacobi-preconditioned CG on `A s = b`. Returns the solution and the final
/// relative residual.
pub fn solve_system(system: &RetinexSystem, tol: f64, max_iters: usize) -> Result<(Vec<f64>, f64)> {
    if system.anchors.is_empty() {
        return Err(LfError::Config(
            "retinex system has no absolute-scale anchors; singular up to a constant shift".into(),
        ));
    }
    let n = system.n;
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            system.rows[i]
                .iter()
                .find(|(j, _)| *j == i)
                .map(|&(_, v)| v)
                .unwrap_or(1.0)
        })
        .collect();
    let inv_diag: Vec<f64> = diag.iter().map(|&d| if d.abs() > 1e-300 { 1.0 / d } else { 1.0 }).collect();

    let b = &system.b;
    let b_norm = det_dot(b, b).sqrt().max(1e-300);
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = det_dot(&r, &z);
    let mut res_rel = det_dot(&r, &r).sqrt() / b_norm;
    for _ in 0..max_iters {
        if res_rel < tol {
            break;
        }
        let ap = system.apply(&p);
        let pap = det_dot(&p, &ap);
        if pap.abs() < 1e-300 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res_rel = det_dot(&r, &r).sqrt() / b_norm;
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = det_dot(&r, &z);
        let beta = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
    }
    if res_rel >= tol {
        return Err(LfError::SolveFailure {
            stage: "retinex-cg",
            reason: "conjugate gradient did not converge".into(),
            residual: res_rel,
        });
    }
    Ok((x, res_rel))
}

/// Outcome of one per-view solve.
#[derive(Debug, Clone)]
pub struct ViewSolution {
    pub s: LogView,
    pub r: LogView,
    pub residual: f64,
    /// Set when the view was empty (all content at the log floor) and the
    /// trivial decomposition was returned instead of solving.
    pub degenerate: bool,
}

/// Solves one view: `s = argmin` of the assembled quadratic, `r = l - s`.
pub fn solve_view(
    l_log: &LogView,
    cue_weights: &EdgeWeightMap,
    view_for_texture: Option<&ViewImage>,
    weights: &RetinexWeights,
    params: &SolverParams,
) -> Result<ViewSolution> {
    let (h, w) = (l_log.height(), l_log.width());
    let floor = l_log.eps_log().ln();
    if l_log.data().iter().all(|&v| v <= floor + 1e-12) {
        // empty view: the energy is ill-conditioned, return s = l, r = 0
        return Ok(ViewSolution {
            s: l_log.clone(),
            r: LogView::from_raw(Array2::zeros((h, w)), l_log.eps_log()),
            residual: 0.0,
            degenerate: true,
        });
    }
    let system = assemble_system(l_log, cue_weights, view_for_texture, weights, params)?;
    let n = system.order();
    let (s_flat, residual) = solve_system(&system, params.cg_tol, params.cg_max_iter_factor * n)?;
    let s = Array2::from_shape_vec((h, w), s_flat).expect("solution length");
    let r = l_log.data() - &s;
    Ok(ViewSolution {
        s: LogView::from_raw(s, l_log.eps_log()),
        r: LogView::from_raw(r, l_log.eps_log()),
        residual,
        degenerate: false,
    })
}

/// Exponentiates log layers back to linear shading and reflectance.
pub fn exp_layers(s: &LogView, r: &LogView) -> (Array2<f64>, Array2<f64>) {
    (s.data().mapv(f64::exp), r.data().mapv(f64::exp))
}
