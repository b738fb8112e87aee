//! 4D light field containers and slicing.
//!
//! A light field `L(x,y,u,v)` is stored (u,v)-major so each view is a
//! contiguous block. Spatial coordinates follow raster convention:
//! `x` is the column, `y` the row.

use ndarray::{Array2, Array3, Array4, Array5, ArrayView2, ArrayView3, s};

use crate::error::{LfError, Result};

/// RGB radiance volume over ray space, shape `(n_u, n_v, height, width, 3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    data: Array5<f64>,
}

/// Single-channel volume with the same angular/spatial dims as its parent
/// light field. Holds shading layers and per-ray norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarLightField {
    data: Array4<f64>,
}

/// One RGB view at fixed `(u, v)`, shape `(height, width, 3)`, values in [0,1]
/// for inputs (derived layers may exceed 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ViewImage {
    data: Array3<f64>,
}

/// Single-channel raster in natural-log space with its clamp floor recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct LogView {
    data: Array2<f64>,
    eps_log: f64,
}

/// 2D epipolar-plane slice: `(n_u, width, 3)` for horizontal EPIs taken at
/// fixed `(y, v)`, `(n_v, height, 3)` for vertical EPIs at fixed `(x, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiSlice {
    data: Array3<f64>,
}

impl LightField {
    /// Wraps a `(n_u, n_v, height, width, 3)` array, validating finiteness
    /// and nonnegativity.
    pub fn from_array(data: Array5<f64>) -> Result<Self> {
        let shape = data.shape();
        if shape[4] != 3 {
            return Err(LfError::shape("LightField channel axis", &[3], &[shape[4]]));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(LfError::InvalidParam(format!(
                "LightField dims must be >= 1, got {:?}",
                shape
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(LfError::NonFinite {
                context: "LightField samples must be finite and >= 0".into(),
            });
        }
        Ok(Self { data })
    }

    /// Builds a light field by evaluating `f(u, v, x, y, c)`.
    pub fn from_fn(
        n_u: usize,
        n_v: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let data = Array5::from_shape_fn((n_u, n_v, height, width, 3), |(u, v, y, x, c)| {
            f(u, v, x, y, c)
        });
        Self::from_array(data)
    }

    /// Assembles a light field from views in (u, v) row-major order.
    pub fn from_views(n_u: usize, n_v: usize, views: &[ViewImage]) -> Result<Self> {
        if views.len() != n_u * n_v {
            return Err(LfError::InvalidParam(format!(
                "expected {} views, got {}",
                n_u * n_v,
                views.len()
            )));
        }
        let (h, w) = (views[0].height(), views[0].width());
        let mut data = Array5::zeros((n_u, n_v, h, w, 3));
        for u in 0..n_u {
            for v in 0..n_v {
                let view = &views[u * n_v + v];
                if view.height() != h || view.width() != w {
                    return Err(LfError::shape(
                        format!("view ({u},{v})"),
                        &[h, w],
                        &[view.height(), view.width()],
                    ));
                }
                data.slice_mut(s![u, v, .., .., ..]).assign(&view.data);
            }
        }
        Self::from_array(data)
    }

    pub fn n_u(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_v(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[3]
    }

    pub fn data(&self) -> &Array5<f64> {
        &self.data
    }

    pub fn sample(&self, u: usize, v: usize, x: usize, y: usize, c: usize) -> f64 {
        self.data[[u, v, y, x, c]]
    }

    fn check_uv(&self, u: usize, v: usize) -> Result<()> {
        if u >= self.n_u() {
            return Err(LfError::IndexOutOfRange {
                what: "u",
                got: u,
                bound: self.n_u(),
            });
        }
        if v >= self.n_v() {
            return Err(LfError::IndexOutOfRange {
                what: "v",
                got: v,
                bound: self.n_v(),
            });
        }
        Ok(())
    }

    /// Extracts the complete RGB view at `(u, v)`.
    pub fn view(&self, u: usize, v: usize) -> Result<ViewImage> {
        self.check_uv(u, v)?;
        Ok(ViewImage {
            data: self.data.slice(s![u, v, .., .., ..]).to_owned(),
        })
    }

    pub fn view_ref(&self, u: usize, v: usize) -> Result<ArrayView3<'_, f64>> {
        self.check_uv(u, v)?;
        Ok(self.data.slice(s![u, v, .., .., ..]))
    }

    /// Writes one view back during assembly.
    pub fn set_view(&mut self, u: usize, v: usize, view: &ViewImage) -> Result<()> {
        self.check_uv(u, v)?;
        if view.height() != self.height() || view.width() != self.width() {
            return Err(LfError::shape(
                "set_view",
                &[self.height(), self.width()],
                &[view.height(), view.width()],
            ));
        }
        self.data.slice_mut(s![u, v, .., .., ..]).assign(&view.data);
        Ok(())
    }

    /// Horizontal EPI at fixed `(y, v)`: `slice[u][x] = L(u, v, x, y)`.
    pub fn epi_horizontal(&self, y: usize, v: usize) -> Result<EpiSlice> {
        if y >= self.height() {
            return Err(LfError::IndexOutOfRange {
                what: "y",
                got: y,
                bound: self.height(),
            });
        }
        if v >= self.n_v() {
            return Err(LfError::IndexOutOfRange {
                what: "v",
                got: v,
                bound: self.n_v(),
            });
        }
        Ok(EpiSlice {
            data: self.data.slice(s![.., v, y, .., ..]).to_owned(),
        })
    }

    /// Vertical EPI at fixed `(x, u)`: `slice[v][y] = L(u, v, x, y)`.
    pub fn epi_vertical(&self, x: usize, u: usize) -> Result<EpiSlice> {
        if x >= self.width() {
            return Err(LfError::IndexOutOfRange {
                what: "x",
                got: x,
                bound: self.width(),
            });
        }
        if u >= self.n_u() {
            return Err(LfError::IndexOutOfRange {
                what: "u",
                got: u,
                bound: self.n_u(),
            });
        }
        Ok(EpiSlice {
            data: self.data.slice(s![u, .., .., x, ..]).to_owned(),
        })
    }

    /// Per-ray Euclidean norm over RGB: `sqrt(R^2 + G^2 + B^2)`.
    pub fn per_ray_l2_norm(&self) -> ScalarLightField {
        let (n_u, n_v, h, w, _) = self.data.dim();
        let data = Array4::from_shape_fn((n_u, n_v, h, w), |(u, v, y, x)| {
            let r = self.data[[u, v, y, x, 0]];
            let g = self.data[[u, v, y, x, 1]];
            let b = self.data[[u, v, y, x, 2]];
            (r * r + g * g + b * b).sqrt()
        });
        ScalarLightField { data }
    }

    /// Per-channel division by a scalar field clamped below at `eps_div`.
    pub fn divide_by_scalar_field(&self, s: &ScalarLightField, eps_div: f64) -> Result<LightField> {
        let (n_u, n_v, h, w, _) = self.data.dim();
        if s.data.dim() != (n_u, n_v, h, w) {
            return Err(LfError::shape(
                "divide_by_scalar_field",
                &[n_u, n_v, h, w],
                s.data.shape(),
            ));
        }
        if eps_div <= 0.0 {
            return Err(LfError::InvalidParam(format!("eps_div must be > 0, got {eps_div}")));
        }
        let data = Array5::from_shape_fn((n_u, n_v, h, w, 3), |(u, v, y, x, c)| {
            self.data[[u, v, y, x, c]] / s.data[[u, v, y, x]].max(eps_div)
        });
        Ok(LightField { data })
    }

    /// Elementwise product with a scalar field (`R * S` recomposition).
    pub fn multiply_by_scalar_field(&self, s: &ScalarLightField) -> Result<LightField> {
        let (n_u, n_v, h, w, _) = self.data.dim();
        if s.data.dim() != (n_u, n_v, h, w) {
            return Err(LfError::shape(
                "multiply_by_scalar_field",
                &[n_u, n_v, h, w],
                s.data.shape(),
            ));
        }
        let data = Array5::from_shape_fn((n_u, n_v, h, w, 3), |(u, v, y, x, c)| {
            self.data[[u, v, y, x, c]] * s.data[[u, v, y, x]]
        });
        Ok(LightField { data })
    }
}

impl ScalarLightField {
    pub fn from_array(data: Array4<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LfError::NonFinite {
                context: "ScalarLightField samples must be finite".into(),
            });
        }
        Ok(Self { data })
    }

    pub fn from_fn(
        n_u: usize,
        n_v: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let data = Array4::from_shape_fn((n_u, n_v, height, width), |(u, v, y, x)| f(u, v, x, y));
        Self::from_array(data)
    }

    pub fn n_u(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_v(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[3]
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn sample(&self, u: usize, v: usize, x: usize, y: usize) -> f64 {
        self.data[[u, v, y, x]]
    }

    /// Single-channel raster of the view at `(u, v)`.
    pub fn view(&self, u: usize, v: usize) -> Result<Array2<f64>> {
        if u >= self.n_u() || v >= self.n_v() {
            return Err(LfError::IndexOutOfRange {
                what: if u >= self.n_u() { "u" } else { "v" },
                got: if u >= self.n_u() { u } else { v },
                bound: if u >= self.n_u() { self.n_u() } else { self.n_v() },
            });
        }
        Ok(self.data.slice(s![u, v, .., ..]).to_owned())
    }

    pub fn view_ref(&self, u: usize, v: usize) -> ArrayView2<'_, f64> {
        self.data.slice(s![u, v, .., ..])
    }

    pub fn set_view(&mut self, u: usize, v: usize, raster: &Array2<f64>) -> Result<()> {
        if raster.dim() != (self.height(), self.width()) {
            return Err(LfError::shape(
                "ScalarLightField::set_view",
                &[self.height(), self.width()],
                &[raster.dim().0, raster.dim().1],
            ));
        }
        self.data.slice_mut(s![u, v, .., ..]).assign(raster);
        Ok(())
    }

    /// Elementwise division clamped below at `eps_div`.
    pub fn divide(&self, denom: &ScalarLightField, eps_div: f64) -> Result<ScalarLightField> {
        if denom.data.dim() != self.data.dim() {
            return Err(LfError::shape(
                "ScalarLightField::divide",
                self.data.shape(),
                denom.data.shape(),
            ));
        }
        let data = ndarray::Zip::from(&self.data)
            .and(&denom.data)
            .map_collect(|&a, &b| a / b.max(eps_div));
        Ok(ScalarLightField { data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarLightField {
        ScalarLightField {
            data: self.data.mapv(|v| f(v)),
        }
    }
}

impl ViewImage {
    pub fn from_array(data: Array3<f64>) -> Result<Self> {
        if data.shape()[2] != 3 {
            return Err(LfError::shape("ViewImage channel axis", &[3], &[data.shape()[2]]));
        }
        Ok(Self { data })
    }

    pub fn height(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        [
            self.data[[y, x, 0]],
            self.data[[y, x, 1]],
            self.data[[y, x, 2]],
        ]
    }

    /// Per-pixel RGB L2 norm as a single-channel raster.
    pub fn l2_norm(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.height(), self.width()), |(y, x)| {
            let p = self.pixel(x, y);
            (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
        })
    }
}

impl LogView {
    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn eps_log(&self) -> f64 {
        self.eps_log
    }

    pub fn from_raw(data: Array2<f64>, eps_log: f64) -> Self {
        Self { data, eps_log }
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }
}

impl EpiSlice {
    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// Angular extent (number of views along the sliced direction).
    pub fn n_angular(&self) -> usize {
        self.data.shape()[0]
    }

    /// Spatial extent (width for horizontal EPIs, height for vertical).
    pub fn n_spatial(&self) -> usize {
        self.data.shape()[1]
    }
}

/// `ln(max(x, eps_log))` elementwise.
pub fn to_log(raster: &Array2<f64>, eps_log: f64) -> Result<LogView> {
    if eps_log <= 0.0 {
        return Err(LfError::InvalidParam(format!("eps_log must be > 0, got {eps_log}")));
    }
    Ok(LogView {
        data: raster.mapv(|v| v.max(eps_log).ln()),
        eps_log,
    })
}

/// Inverse of [`to_log`]; exact where the input was >= eps_log.
pub fn from_log(view: &LogView) -> Array2<f64> {
    view.data.mapv(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gradient_lf(n_u: usize, n_v: usize, h: usize, w: usize) -> LightField {
        LightField::from_fn(n_u, n_v, h, w, |u, v, x, y, c| {
            (u as f64 * 0.11 + v as f64 * 0.07 + x as f64 * 0.013 + y as f64 * 0.017 + c as f64 * 0.1)
                % 1.0
        })
        .unwrap()
    }

    #[test]
    fn view_identity_slice() {
        let lf = LightField::from_fn(1, 1, 2, 2, |_, _, _, _, _| 0.5).unwrap();
        let v = lf.view(0, 0).unwrap();
        assert_eq!(v.height(), 2);
        assert_eq!(v.width(), 2);
        assert!(v.data().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn view_out_of_range() {
        let lf = gradient_lf(2, 2, 4, 4);
        assert!(matches!(
            lf.view(2, 0),
            Err(LfError::IndexOutOfRange { what: "u", .. })
        ));
        assert!(matches!(
            lf.view(0, 2),
            Err(LfError::IndexOutOfRange { what: "v", .. })
        ));
    }

    #[test]
    fn view_set_view_round_trip() {
        let lf = gradient_lf(3, 2, 5, 4);
        let mut copy = lf.clone();
        for u in 0..3 {
            for v in 0..2 {
                let view = lf.view(u, v).unwrap();
                copy.set_view(u, v, &view).unwrap();
            }
        }
        assert_eq!(lf, copy);
    }

    #[test]
    fn assembly_reslice_bit_exact() {
        let lf = gradient_lf(2, 3, 4, 6);
        let views: Vec<ViewImage> = (0..2)
            .flat_map(|u| (0..3).map(move |v| (u, v)))
            .map(|(u, v)| lf.view(u, v).unwrap())
            .collect();
        let rebuilt = LightField::from_views(2, 3, &views).unwrap();
        assert_eq!(lf, rebuilt);
    }

    #[test]
    fn epi_zero_disparity_constant_columns() {
        // all views identical -> each EPI column constant across u
        let pattern =
            ViewImage::from_array(Array3::from_shape_fn((4, 6, 3), |(y, x, c)| {
                (x as f64 * 0.1 + y as f64 * 0.05 + c as f64 * 0.02) % 1.0
            }))
            .unwrap();
        let views: Vec<ViewImage> = (0..6).map(|_| pattern.clone()).collect();
        let lf = LightField::from_views(3, 2, &views).unwrap();
        let epi = lf.epi_horizontal(1, 0).unwrap();
        for x in 0..epi.n_spatial() {
            for c in 0..3 {
                let first = epi.data()[[0, x, c]];
                for u in 0..epi.n_angular() {
                    assert_eq!(epi.data()[[u, x, c]], first);
                }
            }
        }
    }

    #[test]
    fn epi_unit_disparity_slope() {
        // views built by shifting a 1D pattern one pixel per view step
        let w = 8;
        let pattern: Vec<f64> = (0..w + 4).map(|i| (i as f64 * 0.37) % 1.0).collect();
        let lf = LightField::from_fn(3, 1, 1, w, |u, _, x, _, _| pattern[x + u]).unwrap();
        let epi = lf.epi_horizontal(0, 0).unwrap();
        // line of constant value moves by -1 pixel per view: epi[u][x] == epi[u+1][x-1]
        for u in 0..2 {
            for x in 1..w {
                assert_eq!(epi.data()[[u, x, 0]], epi.data()[[u + 1, x - 1, 0]]);
            }
        }
    }

    #[test]
    fn epi_single_view_row() {
        let lf = gradient_lf(1, 1, 2, 5);
        let epi = lf.epi_horizontal(1, 0).unwrap();
        assert_eq!(epi.n_angular(), 1);
        assert_eq!(epi.n_spatial(), 5);
        for x in 0..5 {
            assert_eq!(epi.data()[[0, x, 0]], lf.sample(0, 0, x, 1, 0));
        }
    }

    #[test]
    fn epi_index_errors() {
        let lf = gradient_lf(2, 2, 4, 4);
        assert!(lf.epi_horizontal(4, 0).is_err());
        assert!(lf.epi_horizontal(0, 2).is_err());
        assert!(lf.epi_vertical(4, 0).is_err());
        assert!(lf.epi_vertical(0, 2).is_err());
    }

    #[test]
    fn per_ray_norm_345() {
        let lf = LightField::from_fn(1, 1, 1, 1, |_, _, _, _, c| [0.3, 0.0, 0.4][c]).unwrap();
        let s = lf.per_ray_l2_norm();
        assert_abs_diff_eq!(s.sample(0, 0, 0, 0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn per_ray_norm_zero() {
        let lf = LightField::from_fn(2, 2, 3, 3, |_, _, _, _, _| 0.0).unwrap();
        let s = lf.per_ray_l2_norm();
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn per_ray_norm_matches_brute_force() {
        let lf = gradient_lf(2, 2, 4, 4);
        let s = lf.per_ray_l2_norm();
        for u in 0..2 {
            for v in 0..2 {
                for y in 0..4 {
                    for x in 0..4 {
                        let mut acc = 0.0;
                        for c in 0..3 {
                            let val = lf.sample(u, v, x, y, c);
                            acc += val * val;
                        }
                        assert_abs_diff_eq!(s.sample(u, v, x, y), acc.sqrt(), epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn per_ray_norm_homogeneous() {
        let lf = gradient_lf(2, 2, 3, 3);
        let alpha = 0.37;
        let scaled = LightField::from_fn(2, 2, 3, 3, |u, v, x, y, c| alpha * lf.sample(u, v, x, y, c))
            .unwrap();
        let n1 = lf.per_ray_l2_norm();
        let n2 = scaled.per_ray_l2_norm();
        for (a, b) in n1.data().iter().zip(n2.data().iter()) {
            assert_abs_diff_eq!(alpha * a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn divide_gray_by_half_gives_ones() {
        let lf = LightField::from_fn(1, 1, 2, 2, |_, _, _, _, _| 0.5).unwrap();
        let s = ScalarLightField::from_fn(1, 1, 2, 2, |_, _, _, _| 0.5).unwrap();
        let r = lf.divide_by_scalar_field(&s, 1e-3).unwrap();
        assert!(r.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn divide_clamps_zero_denominator() {
        let lf = LightField::from_fn(1, 1, 1, 1, |_, _, _, _, _| 0.25).unwrap();
        let s = ScalarLightField::from_fn(1, 1, 1, 1, |_, _, _, _| 0.0).unwrap();
        let r = lf.divide_by_scalar_field(&s, 1e-3).unwrap();
        assert_abs_diff_eq!(r.sample(0, 0, 0, 0, 0), 0.25 / 1e-3, epsilon = 1e-9);
        assert!(r.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn divide_shape_mismatch() {
        let lf = gradient_lf(2, 2, 4, 4);
        let s = ScalarLightField::from_fn(2, 2, 3, 4, |_, _, _, _| 1.0).unwrap();
        assert!(matches!(
            lf.divide_by_scalar_field(&s, 1e-3),
            Err(LfError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn divide_multiply_reconstructs() {
        let lf = gradient_lf(2, 2, 4, 4);
        let s = lf.per_ray_l2_norm();
        let r = lf.divide_by_scalar_field(&s, 1e-3).unwrap();
        let rec = r.multiply_by_scalar_field(&s).unwrap();
        for u in 0..2 {
            for v in 0..2 {
                for y in 0..4 {
                    for x in 0..4 {
                        if s.sample(u, v, x, y) < 1e-3 {
                            continue; // clamped rays excluded
                        }
                        for c in 0..3 {
                            assert_abs_diff_eq!(
                                lf.sample(u, v, x, y, c),
                                rec.sample(u, v, x, y, c),
                                epsilon = 1e-9
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn log_round_trip() {
        let raster = Array2::from_shape_fn((4, 4), |(y, x)| 0.01 + 0.06 * (y * 4 + x) as f64);
        let log = to_log(&raster, 1e-4).unwrap();
        let back = from_log(&log);
        for (a, b) in raster.iter().zip(back.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_clamp_floor() {
        let raster = Array2::from_elem((1, 2), 0.0);
        let log = to_log(&raster, 1e-4).unwrap();
        assert_abs_diff_eq!(log.data()[[0, 0]], (1e-4f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn log_of_one_is_zero() {
        let raster = Array2::from_elem((1, 1), 1.0);
        let log = to_log(&raster, 1e-4).unwrap();
        assert_eq!(log.data()[[0, 0]], 0.0);
    }
}
