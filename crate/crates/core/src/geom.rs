//! Spatial window, raster fields and Gaussian kernel smoothing.
//!
//! Cells are indexed `row * ncols + col` with row 0 at the southern edge.
//! Raster files follow the ESRI ASCII grid layout, whose first data row is
//! the northernmost one.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::par;

/// Kernel support radius in units of sigma. The 2-D Gaussian mass outside
/// `R·σ` is `exp(-R²/2)`, about 1.5e-8 here.
pub const KERNEL_RADIUS_SIGMAS: f64 = 6.0;

/// Nodata marker written to raster files.
pub const NODATA: f64 = -9999.0;

/// Discretized observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub cellsize: f64,
    mask: Vec<bool>,
}

impl SpatialGrid {
    /// A fully masked-in rectangular grid.
    pub fn new(ncols: usize, nrows: usize, origin_x: f64, origin_y: f64, cellsize: f64) -> Result<Self> {
        Self::with_mask(ncols, nrows, origin_x, origin_y, cellsize, vec![true; ncols * nrows])
    }

    pub fn with_mask(
        ncols: usize,
        nrows: usize,
        origin_x: f64,
        origin_y: f64,
        cellsize: f64,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if !(cellsize > 0.0 && cellsize.is_finite()) {
            return Err(Error::InvalidParameter(format!("cellsize must be positive, got {cellsize}")));
        }
        if ncols == 0 || nrows == 0 {
            return Err(Error::InvalidParameter("grid has no cells".into()));
        }
        if mask.len() != ncols * nrows {
            return Err(Error::DimensionMismatch {
                expected: ncols * nrows,
                got: mask.len(),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::InvalidParameter("grid has no masked-in cell".into()));
        }
        Ok(Self {
            ncols,
            nrows,
            origin_x,
            origin_y,
            cellsize,
            mask,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn cell_area(&self) -> f64 {
        self.cellsize * self.cellsize
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_full(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn n_masked(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Area of the masked-in window.
    pub fn window_area(&self) -> f64 {
        self.n_masked() as f64 * self.cell_area()
    }

    pub fn is_in(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.ncols + col
    }

    pub fn col_row(&self, idx: usize) -> (usize, usize) {
        (idx % self.ncols, idx / self.ncols)
    }

    pub fn center(&self, idx: usize) -> (f64, f64) {
        let (c, r) = self.col_row(idx);
        (
            self.origin_x + (c as f64 + 0.5) * self.cellsize,
            self.origin_y + (r as f64 + 0.5) * self.cellsize,
        )
    }

    /// Lower-left corner of a cell.
    pub fn corner(&self, idx: usize) -> (f64, f64) {
        let (c, r) = self.col_row(idx);
        (
            self.origin_x + c as f64 * self.cellsize,
            self.origin_y + r as f64 * self.cellsize,
        )
    }

    /// Cell containing `(x, y)`, whether or not it is masked in.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<usize> {
        let fx = (x - self.origin_x) / self.cellsize;
        let fy = (y - self.origin_y) / self.cellsize;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (c, r) = (fx.floor() as usize, fy.floor() as usize);
        (c < self.ncols && r < self.nrows).then(|| self.index(c, r))
    }

    /// Whether `(x, y)` lies in a masked-in cell.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some_and(|i| self.mask[i])
    }

    pub fn masked_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn width(&self) -> f64 {
        self.ncols as f64 * self.cellsize
    }

    pub fn height(&self) -> f64 {
        self.nrows as f64 * self.cellsize
    }
}

/// Per-cell values on a grid. Masked-out cells hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterField {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl RasterField {
    pub fn zeros(grid: &SpatialGrid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.n_cells()],
        }
    }

    pub fn from_values(grid: &SpatialGrid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_cells(),
                got: values.len(),
            });
        }
        for (i, v) in values.iter_mut().enumerate() {
            if !grid.is_in(i) {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite value in cell {i}")));
            }
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Builds a field by evaluating `f` at every masked-in cell center.
    pub fn from_fn(grid: &SpatialGrid, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Self {
        let mut values = vec![0.0; grid.n_cells()];
        par::fill_indexed(&mut values, |i| {
            if grid.is_in(i) {
                let (x, y) = grid.center(i);
                f(x, y)
            } else {
                0.0
            }
        });
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// Value of the cell containing `(x, y)`; `None` outside the window.
    pub fn value_at(&self, x: f64, y: f64) -> Option<f64> {
        self.grid
            .cell_of(x, y)
            .filter(|&i| self.grid.is_in(i))
            .map(|i| self.values[i])
    }

    /// Σ value · cell area over masked-in cells.
    pub fn integral(&self) -> f64 {
        self.grid.masked_cells().map(|i| self.values[i]).sum::<f64>() * self.grid.cell_area()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

impl WeightedPoint {
    pub fn new(x: f64, y: f64, weight: f64) -> Self {
        Self { x, y, weight }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")))
    }
}

/// Gaussian kernel density of weighted points evaluated at cell centers.
///
/// `value(u) = Σ w·(2πσ²)⁻¹·exp(−‖u−p‖²/(2σ²))`, with each kernel cut at
/// [`KERNEL_RADIUS_SIGMAS`]·σ. No boundary correction is applied.
pub fn smooth_points(points: &[WeightedPoint], grid: &SpatialGrid, sigma: f64) -> Result<RasterField> {
    check_sigma(sigma)?;
    if let Some(p) = points.iter().find(|p| !(p.x.is_finite() && p.y.is_finite() && p.weight.is_finite())) {
        return Err(Error::InvalidParameter(format!("non-finite point {p:?}")));
    }
    let radius = KERNEL_RADIUS_SIGMAS * sigma;
    let r2max = radius * radius;
    let norm = 1.0 / (2.0 * PI * sigma * sigma);
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);

    let mut sorted: Vec<WeightedPoint> = points.to_vec();
    sorted.sort_by(|a, b| a.y.total_cmp(&b.y));

    // One task per grid row; each row only looks at points within `radius` in y.
    let rows = par::map_range(grid.nrows, |r| {
        let yc = grid.origin_y + (r as f64 + 0.5) * grid.cellsize;
        let lo = sorted.partition_point(|p| p.y < yc - radius);
        let hi = sorted.partition_point(|p| p.y <= yc + radius);
        let mut row = vec![0.0; grid.ncols];
        for p in &sorted[lo..hi] {
            let dy = yc - p.y;
            let half = (r2max - dy * dy).max(0.0).sqrt();
            let c0 = ((p.x - half - grid.origin_x) / grid.cellsize - 0.5).ceil().max(0.0) as usize;
            let c1f = ((p.x + half - grid.origin_x) / grid.cellsize - 0.5).floor();
            if c1f < 0.0 {
                continue;
            }
            let c1 = (c1f as usize).min(grid.ncols - 1);
            for (c, slot) in row.iter_mut().enumerate().take(c1 + 1).skip(c0) {
                let xc = grid.origin_x + (c as f64 + 0.5) * grid.cellsize;
                let dx = xc - p.x;
                let d2 = dx * dx + dy * dy;
                if d2 <= r2max {
                    *slot += p.weight * norm * (-d2 * inv2s2).exp();
                }
            }
        }
        for (c, slot) in row.iter_mut().enumerate() {
            if !grid.is_in(grid.index(c, r)) {
                *slot = 0.0;
            }
        }
        row
    });
    let values = rows.into_iter().flatten().collect();
    Ok(RasterField {
        grid: grid.clone(),
        values,
    })
}

/// Smooths per-box totals (e.g. residents per box) into a density on the
/// same grid. See [`smooth_areal_onto`].
pub fn smooth_areal(source: &RasterField, sigma: f64) -> Result<RasterField> {
    smooth_areal_onto(source, source.grid(), sigma)
}

/// Each masked-in source box total is placed as a point mass at the box
/// center and spread with a Gaussian kernel. Target values are cell averages
/// of the kernel (exact Gaussian integral over the cell), so the total mass
/// is conserved up to leakage outside the target window even when σ is
/// smaller than a cell.
pub fn smooth_areal_onto(source: &RasterField, target: &SpatialGrid, sigma: f64) -> Result<RasterField> {
    check_sigma(sigma)?;
    let sg = source.grid();
    let disjoint = sg.origin_x + sg.width() <= target.origin_x
        || target.origin_x + target.width() <= sg.origin_x
        || sg.origin_y + sg.height() <= target.origin_y
        || target.origin_y + target.height() <= sg.origin_y;
    if disjoint {
        return Err(Error::GridMismatch("source and target grids do not overlap".into()));
    }
    let masses: Vec<WeightedPoint> = sg
        .masked_cells()
        .filter(|&i| source.get(i) != 0.0)
        .map(|i| {
            let (x, y) = sg.center(i);
            WeightedPoint::new(x, y, source.get(i))
        })
        .collect();
    let radius = KERNEL_RADIUS_SIGMAS * sigma + target.cellsize;
    let s = sigma * std::f64::consts::SQRT_2;
    // Probability mass of N(0, σ²) on [a, b].
    let mass_1d = |a: f64, b: f64| 0.5 * (erf(b / s) - erf(a / s));
    let area = target.cell_area();
    let mut values = vec![0.0; target.n_cells()];
    par::fill_indexed(&mut values, |i| {
        if !target.is_in(i) {
            return 0.0;
        }
        let (x0, y0) = target.corner(i);
        let (x1, y1) = (x0 + target.cellsize, y0 + target.cellsize);
        let mut acc = 0.0;
        for p in &masses {
            if (p.x - 0.5 * (x0 + x1)).abs() > radius || (p.y - 0.5 * (y0 + y1)).abs() > radius {
                continue;
            }
            acc += p.weight * mass_1d(x0 - p.x, x1 - p.x) * mass_1d(y0 - p.y, y1 - p.y);
        }
        acc / area
    });
    Ok(RasterField {
        grid: target.clone(),
        values,
    })
}

/// Area of `W ∩ (W + shift)` on the raster mask.
///
/// At whole-cell shifts this is the number of cells masked in at both `u`
/// and `u + shift`, times the cell area. Fractional shifts interpolate
/// bilinearly between the four surrounding whole-cell shifts, which is exact
/// for rectangular windows.
pub fn translation_overlap(grid: &SpatialGrid, shift: (f64, f64)) -> f64 {
    let (fx, fy) = (shift.0.abs() / grid.cellsize, shift.1.abs() / grid.cellsize);
    if fx >= grid.ncols as f64 || fy >= grid.nrows as f64 {
        return 0.0;
    }
    let (ix, iy) = (fx.floor() as i64, fy.floor() as i64);
    // Sign matters for non-symmetric masks; keep it on the integer shifts.
    let sx = if shift.0 < 0.0 { -1 } else { 1 };
    let sy = if shift.1 < 0.0 { -1 } else { 1 };
    let count = |i: i64, j: i64| mask_overlap_count(grid, sx * i, sy * j) as f64;
    bilinear(fx - ix as f64, fy - iy as f64, |di, dj| count(ix + di, iy + dj)) * grid.cell_area()
}

fn bilinear(ax: f64, ay: f64, at: impl Fn(i64, i64) -> f64) -> f64 {
    let v00 = at(0, 0);
    let v10 = if ax > 0.0 { at(1, 0) } else { 0.0 };
    let v01 = if ay > 0.0 { at(0, 1) } else { 0.0 };
    let v11 = if ax > 0.0 && ay > 0.0 { at(1, 1) } else { 0.0 };
    (1.0 - ax) * (1.0 - ay) * v00 + ax * (1.0 - ay) * v10 + (1.0 - ax) * ay * v01 + ax * ay * v11
}

/// Number of cells `c` with `mask[c]` and `mask[c + (dc, dr)]`.
fn mask_overlap_count(grid: &SpatialGrid, dc: i64, dr: i64) -> usize {
    let (nc, nr) = (grid.ncols as i64, grid.nrows as i64);
    if dc.abs() >= nc || dr.abs() >= nr {
        return 0;
    }
    if grid.is_full() {
        return ((nc - dc.abs()) * (nr - dr.abs())) as usize;
    }
    let mut n = 0;
    for r in (0.max(-dr))..(nr.min(nr - dr)) {
        for c in (0.max(-dc))..(nc.min(nc - dc)) {
            let a = grid.index(c as usize, r as usize);
            let b = grid.index((c + dc) as usize, (r + dr) as usize);
            if grid.mask[a] && grid.mask[b] {
                n += 1;
            }
        }
    }
    n
}

/// Precomputed whole-cell mask autocorrelation for repeated
/// [`translation_overlap`] queries up to a maximum shift.
#[derive(Debug, Clone)]
pub struct OverlapTable {
    cellsize: f64,
    ncols: usize,
    nrows: usize,
    max_c: usize,
    max_r: usize,
    // counts[(dr + max_r) * (2*max_c+1) + (dc + max_c)]
    counts: Vec<f64>,
}

impl OverlapTable {
    /// Table covering shifts up to `max_shift` metres along each axis.
    pub fn new(grid: &SpatialGrid, max_shift: f64) -> Self {
        let cells = (max_shift.abs() / grid.cellsize).ceil() as usize + 1;
        let max_c = cells.min(grid.ncols);
        let max_r = cells.min(grid.nrows);
        let w = 2 * max_c + 1;
        let h = 2 * max_r + 1;
        let counts = if grid.is_full() {
            let mut out = vec![0.0; w * h];
            for j in 0..h {
                for i in 0..w {
                    let dc = i as i64 - max_c as i64;
                    let dr = j as i64 - max_r as i64;
                    out[j * w + i] = mask_overlap_count(grid, dc, dr) as f64;
                }
            }
            out
        } else {
            autocorrelation_fft(grid, max_c, max_r)
        };
        Self {
            cellsize: grid.cellsize,
            ncols: grid.ncols,
            nrows: grid.nrows,
            max_c,
            max_r,
            counts,
        }
    }

    fn count(&self, dc: i64, dr: i64) -> f64 {
        if dc.unsigned_abs() as usize > self.max_c || dr.unsigned_abs() as usize > self.max_r {
            // Beyond the table: only zero if beyond the grid itself.
            if dc.unsigned_abs() as usize >= self.ncols || dr.unsigned_abs() as usize >= self.nrows {
                return 0.0;
            }
            panic!("overlap table queried beyond its range ({dc}, {dr})");
        }
        let w = 2 * self.max_c + 1;
        self.counts[(dr + self.max_r as i64) as usize * w + (dc + self.max_c as i64) as usize]
    }

    /// Same value as [`translation_overlap`] for shifts within range.
    pub fn overlap(&self, dx: f64, dy: f64) -> f64 {
        let (fx, fy) = (dx.abs() / self.cellsize, dy.abs() / self.cellsize);
        if fx >= self.ncols as f64 || fy >= self.nrows as f64 {
            return 0.0;
        }
        let (ix, iy) = (fx.floor() as i64, fy.floor() as i64);
        let sx = if dx < 0.0 { -1 } else { 1 };
        let sy = if dy < 0.0 { -1 } else { 1 };
        bilinear(fx - ix as f64, fy - iy as f64, |di, dj| self.count(sx * (ix + di), sy * (iy + dj)))
            * self.cellsize
            * self.cellsize
    }

    pub fn max_shift(&self) -> f64 {
        (self.max_c.min(self.max_r) as f64 - 1.0) * self.cellsize
    }
}

/// Mask autocorrelation for all shifts |dc| ≤ max_c, |dr| ≤ max_r via a
/// zero-padded 2-D FFT. Counts are integers, so results are rounded.
fn autocorrelation_fft(grid: &SpatialGrid, max_c: usize, max_r: usize) -> Vec<f64> {
    let pw = (grid.ncols + max_c + 1).next_power_of_two();
    let ph = (grid.nrows + max_r + 1).next_power_of_two();
    let mut data = vec![Complex::new(0.0, 0.0); pw * ph];
    for r in 0..grid.nrows {
        for c in 0..grid.ncols {
            if grid.mask[grid.index(c, r)] {
                data[r * pw + c].re = 1.0;
            }
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    fft2(&mut data, pw, ph, &mut planner, false);
    for v in data.iter_mut() {
        *v = Complex::new(v.norm_sqr(), 0.0);
    }
    fft2(&mut data, pw, ph, &mut planner, true);
    let scale = 1.0 / (pw * ph) as f64;
    let w = 2 * max_c + 1;
    let h = 2 * max_r + 1;
    let mut out = vec![0.0; w * h];
    for j in 0..h {
        for i in 0..w {
            let dc = i as i64 - max_c as i64;
            let dr = j as i64 - max_r as i64;
            let x = dc.rem_euclid(pw as i64) as usize;
            let y = dr.rem_euclid(ph as i64) as usize;
            out[j * w + i] = (data[y * pw + x].re * scale).round();
        }
    }
    out
}

fn fft2(data: &mut [Complex<f64>], w: usize, h: usize, planner: &mut FftPlanner<f64>, inverse: bool) {
    let row_fft = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for row in data.chunks_mut(w) {
        row_fft.process(row);
    }
    let col_fft = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = data[r * w + c];
        }
        col_fft.process(&mut col);
        for r in 0..h {
            data[r * w + c] = col[r];
        }
    }
}

/// Reads an ESRI ASCII raster. Cells equal to `nodata_value` are masked out.
pub fn read_raster(path: impl AsRef<Path>) -> Result<RasterField> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_raster(&text, path)
}

fn parse_raster(text: &str, path: &Path) -> Result<RasterField> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut header = |key: &str| -> Result<f64> {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, format!("missing header `{key}`")))?;
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap_or_default();
        if !name.eq_ignore_ascii_case(key) {
            return Err(Error::parse(path, no + 1, format!("expected `{key}`, found `{name}`")));
        }
        parts
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::parse(path, no + 1, format!("bad value for `{key}`")))
    };
    let ncols = header("ncols")? as usize;
    let nrows = header("nrows")? as usize;
    let xll = header("xllcorner")?;
    let yll = header("yllcorner")?;
    let cellsize = header("cellsize")?;
    let nodata = header("nodata_value")?;

    let mut values = vec![0.0; ncols * nrows];
    let mut mask = vec![false; ncols * nrows];
    let mut file_row = 0;
    for (no, line) in lines {
        if file_row >= nrows {
            return Err(Error::parse(path, no + 1, "more data rows than nrows"));
        }
        let row = nrows - 1 - file_row;
        let mut count = 0;
        for (c, tok) in line.split_whitespace().enumerate() {
            if c >= ncols {
                return Err(Error::parse(path, no + 1, "more values than ncols"));
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(path, no + 1, format!("bad number `{tok}`")))?;
            let idx = row * ncols + c;
            if v != nodata {
                values[idx] = v;
                mask[idx] = true;
            }
            count += 1;
        }
        if count != ncols {
            return Err(Error::parse(path, no + 1, format!("expected {ncols} values, found {count}")));
        }
        file_row += 1;
    }
    if file_row != nrows {
        return Err(Error::parse(path, 0, format!("expected {nrows} data rows, found {file_row}")));
    }
    let grid = SpatialGrid::with_mask(ncols, nrows, xll, yll, cellsize, mask)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    RasterField::from_values(&grid, values).map_err(|e| Error::parse(path, 0, e.to_string()))
}

/// Formats a raster with 17 significant digits per value.
pub fn format_raster(field: &RasterField) -> String {
    let g = field.grid();
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", g.ncols);
    let _ = writeln!(out, "nrows {}", g.nrows);
    let _ = writeln!(out, "xllcorner {:?}", g.origin_x);
    let _ = writeln!(out, "yllcorner {:?}", g.origin_y);
    let _ = writeln!(out, "cellsize {:?}", g.cellsize);
    let _ = writeln!(out, "nodata_value {NODATA:?}");
    for r in (0..g.nrows).rev() {
        let row: Vec<String> = (0..g.ncols)
            .map(|c| {
                let i = g.index(c, r);
                if g.is_in(i) {
                    format!("{:.16e}", field.get(i))
                } else {
                    format!("{NODATA:?}")
                }
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_raster(path: impl AsRef<Path>, field: &RasterField) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), format_raster(field).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid10() -> SpatialGrid {
        SpatialGrid::new(10, 10, 0.0, 0.0, 100.0).unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(SpatialGrid::new(10, 10, 0.0, 0.0, 0.0).is_err());
        assert!(SpatialGrid::new(0, 10, 0.0, 0.0, 1.0).is_err());
        assert!(SpatialGrid::with_mask(2, 1, 0.0, 0.0, 1.0, vec![false, false]).is_err());
    }

    #[test]
    fn cell_lookup() {
        let g = grid10();
        assert_eq!(g.cell_of(50.0, 50.0), Some(0));
        assert_eq!(g.cell_of(150.0, 250.0), Some(21));
        assert_eq!(g.center(21), (150.0, 250.0));
        assert_eq!(g.cell_of(-1.0, 5.0), None);
        assert_eq!(g.cell_of(1000.0, 5.0), None);
    }

    #[test]
    fn point_kernel_at_center_and_one_sigma() {
        let g = SpatialGrid::new(21, 21, -10_500.0, -10_500.0, 1000.0).unwrap();
        let f = smooth_points(&[WeightedPoint::new(0.0, 0.0, 1.0)], &g, 1000.0).unwrap();
        let center = f.value_at(0.0, 0.0).unwrap();
        assert!((center - 1.0 / (2.0 * PI * 1e6)).abs() < 1e-20);
        assert!((center - 1.5915e-7).abs() < 1e-11);
        let off = f.value_at(1000.0, 0.0).unwrap();
        assert!((off - (-0.5f64).exp() / (2.0 * PI * 1e6)).abs() < 1e-20);
        assert!((off - 9.653e-8).abs() < 1e-11);
    }

    #[test]
    fn empty_points_give_zero_field() {
        let f = smooth_points(&[], &grid10(), 100.0).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smoothing_rejects_bad_sigma() {
        assert!(smooth_points(&[], &grid10(), 0.0).is_err());
        assert!(smooth_points(&[], &grid10(), -1.0).is_err());
        assert!(smooth_areal(&RasterField::zeros(&grid10()), f64::NAN).is_err());
    }

    #[test]
    fn point_mass_is_conserved() {
        let g = SpatialGrid::new(80, 80, -20_000.0, -20_000.0, 500.0).unwrap();
        let f = smooth_points(&[WeightedPoint::new(130.0, -70.0, 3.0)], &g, 1000.0).unwrap();
        assert!((f.integral() - 3.0).abs() / 3.0 < 1e-6, "{}", f.integral());
    }

    #[test]
    fn areal_mass_concentrates_for_small_sigma() {
        let g = grid10();
        let mut vals = vec![0.0; 100];
        vals[g.index(4, 5)] = 100.0;
        let src = RasterField::from_values(&g, vals).unwrap();
        let f = smooth_areal(&src, g.cellsize / 10.0).unwrap();
        assert!((f.integral() - 100.0).abs() < 1e-6);
        let own = f.get(g.index(4, 5)) * g.cell_area();
        assert!(own > 99.99);
    }

    #[test]
    fn areal_zero_and_uniform() {
        let g = SpatialGrid::new(60, 60, 0.0, 0.0, 500.0).unwrap();
        let zero = smooth_areal(&RasterField::zeros(&g), 1000.0).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        let uniform = RasterField::from_values(&g, vec![250.0; 3600]).unwrap();
        let f = smooth_areal(&uniform, 1000.0).unwrap();
        let interior = f.get(g.index(30, 30));
        assert!((interior - 250.0 / g.cell_area()).abs() / (250.0 / g.cell_area()) < 1e-9);
    }

    #[test]
    fn areal_onto_disjoint_grid_fails() {
        let g = grid10();
        let other = SpatialGrid::new(10, 10, 5000.0, 5000.0, 100.0).unwrap();
        assert!(matches!(
            smooth_areal_onto(&RasterField::zeros(&g), &other, 100.0),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn overlap_examples() {
        let g = grid10();
        assert_eq!(translation_overlap(&g, (0.0, 0.0)), 1e6);
        // One-cell shift leaves 90 overlapping cells.
        assert_eq!(translation_overlap(&g, (100.0, 0.0)), 9e5);
        // The window is 1 km wide.
        assert_eq!(translation_overlap(&g, (1000.0, 0.0)), 0.0);
        assert_eq!(translation_overlap(&g, (1e4, 0.0)), 0.0);
        assert_eq!(translation_overlap(&g, (0.0, -2000.0)), 0.0);
        // Rectangles: interpolation reproduces (W - |dx|)(H - |dy|).
        let v = translation_overlap(&g, (130.0, -270.0));
        assert!((v - 870.0 * 730.0).abs() < 1e-6);
    }

    #[test]
    fn overlap_table_matches_direct_on_irregular_mask() {
        let mut mask = vec![true; 12 * 9];
        for (i, m) in mask.iter_mut().enumerate() {
            if (i * 7) % 5 == 0 || i % 12 > 9 {
                *m = false;
            }
        }
        let g = SpatialGrid::with_mask(12, 9, 0.0, 0.0, 50.0, mask).unwrap();
        let table = OverlapTable::new(&g, 400.0);
        for &(dx, dy) in &[(0.0, 0.0), (75.0, 20.0), (-120.0, 333.0), (260.0, -10.0), (-50.0, -100.0)] {
            let a = translation_overlap(&g, (dx, dy));
            let b = table.overlap(dx, dy);
            assert!((a - b).abs() < 1e-9, "{dx},{dy}: {a} vs {b}");
            let c = translation_overlap(&g, (-dx, -dy));
            assert!((a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn raster_text_round_trip_is_bit_exact() {
        let mut mask = vec![true; 12];
        mask[5] = false;
        let g = SpatialGrid::with_mask(4, 3, 1234.5, -20.25, 25.0, mask).unwrap();
        let vals: Vec<f64> = (0..12).map(|i| (i as f64 * 0.1).sin() / 3.0 * 1e-7).collect();
        let f = RasterField::from_values(&g, vals).unwrap();
        let text = format_raster(&f);
        let back = parse_raster(&text, Path::new("mem")).unwrap();
        assert_eq!(back.grid(), f.grid());
        for (a, b) in back.values().iter().zip(f.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(format_raster(&back), text);
    }

    #[test]
    fn raster_parse_errors_name_line() {
        let bad = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata_value -9999\n1 x\n";
        let err = parse_raster(bad, Path::new("r.asc")).unwrap_err();
        assert!(err.to_string().contains("r.asc:7"), "{err}");
    }
}
