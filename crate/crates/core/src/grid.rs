//! Uniform space/time grids, gridded fields, and the quadrature and
//! finite-difference primitives the rest of the crate is built on.
//!
//! Space grids are node based: `nx` cells give `nx + 1` nodes
//! `x_i = x_min + i * dx`, and every spatial integral is the composite
//! trapezoid rule on those nodes.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// Values in `(-NEGATIVE_TOLERANCE, 0)` are accepted in a density and clamped to zero.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;
/// Allowed deviation of a density snapshot's trapezoid mass from one.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    x_min: f64,
    x_max: f64,
    nx: usize,
}

impl SpaceGrid {
    pub fn new(x_min: f64, x_max: f64, nx: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(invalid("space grid needs finite x_min < x_max"));
        }
        if nx < 2 {
            return Err(invalid("space grid needs at least 2 cells"));
        }
        Ok(Self { x_min, x_max, nx })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Number of cells.
    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Number of nodes, `nx + 1`.
    pub fn len(&self) -> usize {
        self.nx + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.x(i)).collect()
    }

    /// Samples `f` on the nodes and rescales to unit trapezoid mass.
    pub fn density_from_fn(&self, f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        let mut u: Vec<f64> = self.positions().into_iter().map(f).collect();
        if u.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("density profile must be finite and nonnegative"));
        }
        let mass: f64 = u.iter().zip(self.weights()).map(|(u, w)| u * w).sum();
        if !(mass > 0.0) {
            return Err(invalid("density profile has zero mass on the grid"));
        }
        u.iter_mut().for_each(|v| *v /= mass);
        Ok(u)
    }

    /// Trapezoid weights on the nodes.
    pub fn weights(&self) -> Vec<f64> {
        trapezoid_weights(self.len(), self.dx())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    nt: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, nt: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(invalid("time horizon must be positive"));
        }
        if nt == 0 {
            return Err(invalid("time grid needs at least one step"));
        }
        Ok(Self { t_end, nt })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of steps.
    pub fn nt(&self) -> usize {
        self.nt
    }

    /// Number of snapshots, `nt + 1`.
    pub fn len(&self) -> usize {
        self.nt + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.nt as f64
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// Weights of `(1/T) ∫_0^T dt` by the trapezoid rule over the snapshots.
    pub fn average_weights(&self) -> Vec<f64> {
        let mut w = trapezoid_weights(self.len(), self.dt());
        for v in &mut w {
            *v /= self.t_end;
        }
        w
    }
}

/// Real values on a space-time grid, stored time-major (`[time][space]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSamples {
    grid: SpaceGrid,
    times: TimeGrid,
    values: Vec<f64>,
}

impl FieldSamples {
    pub fn new(grid: SpaceGrid, times: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * times.len() {
            return Err(invalid("field values do not match the grid shape"));
        }
        Ok(Self {
            grid,
            times,
            values,
        })
    }

    pub fn from_fn(grid: SpaceGrid, times: TimeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len() * times.len());
        for n in 0..times.len() {
            let t = times.t(n);
            values.extend((0..grid.len()).map(|i| f(grid.x(i), t)));
        }
        Self {
            grid,
            times,
            values,
        }
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    pub fn times(&self) -> &TimeGrid {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn snapshot(&self, n: usize) -> &[f64] {
        let w = self.grid.len();
        &self.values[n * w..(n + 1) * w]
    }

    pub fn get(&self, n: usize, i: usize) -> f64 {
        self.values[n * self.grid.len() + i]
    }
}

/// A probability density on a space-time grid.
///
/// Every snapshot is nonnegative (after clamping round-off negatives) and has
/// trapezoid mass within [`MASS_TOLERANCE`] of one.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    samples: FieldSamples,
}

impl SpaceTimeField {
    pub fn new(mut samples: FieldSamples) -> Result<Self> {
        for v in samples.values.iter_mut() {
            if !v.is_finite() || *v < -NEGATIVE_TOLERANCE {
                return Err(invalid("density has a non-finite or negative value"));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let field = Self { samples };
        for n in 0..field.times().len() {
            let m = field.mass(n);
            if (m - 1.0).abs() > MASS_TOLERANCE {
                return Err(invalid(alloc::format!(
                    "snapshot {n} has mass {m} outside 1 ± {MASS_TOLERANCE:e}"
                )));
            }
        }
        Ok(field)
    }

    /// The same profile at every snapshot.
    pub fn stationary(grid: SpaceGrid, times: TimeGrid, profile: &[f64]) -> Result<Self> {
        if profile.len() != grid.len() {
            return Err(invalid("profile length does not match the grid"));
        }
        let mut values = Vec::with_capacity(grid.len() * times.len());
        for _ in 0..times.len() {
            values.extend_from_slice(profile);
        }
        Self::new(FieldSamples::new(grid, times, values)?)
    }

    pub fn samples(&self) -> &FieldSamples {
        &self.samples
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.samples.grid
    }

    pub fn times(&self) -> &TimeGrid {
        &self.samples.times
    }

    pub fn snapshot(&self, n: usize) -> &[f64] {
        self.samples.snapshot(n)
    }

    pub fn mass(&self, n: usize) -> f64 {
        let w = self.grid().weights();
        self.snapshot(n).iter().zip(&w).map(|(u, w)| u * w).sum()
    }

    pub fn max_value(&self) -> f64 {
        self.samples.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn into_samples(self) -> FieldSamples {
        self.samples
    }
}

pub fn trapezoid_weights(n: usize, spacing: f64) -> Vec<f64> {
    let mut w = vec![spacing; n];
    if n > 0 {
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
    }
    w
}

/// Composite trapezoid rule on uniformly spaced samples.
pub fn trapezoid_integral(samples: &[f64], spacing: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(invalid("trapezoid rule needs at least 2 samples"));
    }
    if !(spacing > 0.0) {
        return Err(invalid("trapezoid spacing must be positive"));
    }
    let n = samples.len();
    let interior: f64 = samples[1..n - 1].iter().sum();
    Ok(spacing * (interior + 0.5 * (samples[0] + samples[n - 1])))
}

/// Samples of a function on the signed offset lattice `p * spacing`,
/// `p = -half_width..=half_width`; zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSamples {
    spacing: f64,
    half_width: usize,
    values: Vec<f64>,
}

impl OffsetSamples {
    pub fn new(spacing: f64, half_width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != 2 * half_width + 1 {
            return Err(invalid("offset samples need 2 * half_width + 1 values"));
        }
        if !(spacing > 0.0) {
            return Err(invalid("offset spacing must be positive"));
        }
        Ok(Self {
            spacing,
            half_width,
            values,
        })
    }

    pub fn from_fn(spacing: f64, half_width: usize, f: impl Fn(isize) -> f64) -> Self {
        let h = half_width as isize;
        Self {
            spacing,
            half_width,
            values: (-h..=h).map(f).collect(),
        }
    }

    pub fn zeros(spacing: f64, half_width: usize) -> Self {
        Self::from_fn(spacing, half_width, |_| 0.0)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, p: isize) -> f64 {
        let idx = p + self.half_width as isize;
        if idx < 0 || idx as usize >= self.values.len() {
            0.0
        } else {
            self.values[idx as usize]
        }
    }

    fn nonzero(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        let h = self.half_width as isize;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(move |(k, v)| (k as isize - h, *v))
    }
}

/// `(K * u)(x_i) = Σ_j K(x_i - x_j) u(x_j) w_j` with trapezoid weights `w`.
pub fn discrete_convolution(
    kernel: &OffsetSamples,
    field: &[f64],
    grid: &SpaceGrid,
) -> Result<Vec<f64>> {
    if field.len() != grid.len() {
        return Err(invalid("field length does not match the grid"));
    }
    let dx = grid.dx();
    if ((kernel.spacing - dx) / dx).abs() > 1e-12 {
        return Err(invalid("kernel spacing differs from the grid spacing"));
    }
    let weighted: Vec<f64> = field
        .iter()
        .zip(grid.weights())
        .map(|(u, w)| u * w)
        .collect();
    Ok(convolve_weighted(kernel, &weighted))
}

/// Convolution against a field already multiplied by its quadrature weights.
pub(crate) fn convolve_weighted(kernel: &OffsetSamples, weighted: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; weighted.len()];
    convolve_weighted_into(kernel, weighted, &mut out);
    out
}

pub(crate) fn convolve_weighted_into(kernel: &OffsetSamples, weighted: &[f64], out: &mut [f64]) {
    let n = weighted.len() as isize;
    out.iter_mut().for_each(|v| *v = 0.0);
    for (p, k) in kernel.nonzero() {
        // out[i] += k * weighted[i - p] for 0 <= i - p < n
        let lo = p.max(0);
        let hi = (n + p).min(n);
        for i in lo..hi {
            out[i as usize] += k * weighted[(i - p) as usize];
        }
    }
}

/// Adds `scale * Σ_m f_m g_{m-p}` to `out[p + len - 1]` for every lag
/// `p` in `-(len-1)..=len-1`.
pub(crate) fn accumulate_correlation(f: &[f64], g: &[f64], scale: f64, out: &mut [f64]) {
    let n = f.len();
    for p in -(n as isize - 1)..=(n as isize - 1) {
        let (fs, gs) = if p >= 0 {
            (&f[p as usize..], &g[..n - p as usize])
        } else {
            (&f[..n - (-p) as usize], &g[(-p) as usize..])
        };
        let s: f64 = fs.iter().zip(gs).map(|(a, b)| a * b).sum();
        out[(p + n as isize - 1) as usize] += scale * s;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Space,
    Time,
}

/// Second-order differences: central in the interior, one-sided at the ends.
pub fn finite_difference(field: &FieldSamples, axis: Axis) -> Result<FieldSamples> {
    let nxn = field.grid.len();
    let ntn = field.times.len();
    let mut out = vec![0.0; field.values.len()];
    match axis {
        Axis::Space => {
            if nxn < 3 {
                return Err(invalid("space derivative needs at least 3 nodes"));
            }
            let h = field.grid.dx();
            for n in 0..ntn {
                let row = field.snapshot(n);
                diff_line(row, h, &mut out[n * nxn..(n + 1) * nxn]);
            }
        }
        Axis::Time => {
            if ntn < 3 {
                return Err(invalid("time derivative needs at least 3 snapshots"));
            }
            let h = field.times.dt();
            let mut line = vec![0.0; ntn];
            let mut d = vec![0.0; ntn];
            for i in 0..nxn {
                for (n, v) in line.iter_mut().enumerate() {
                    *v = field.get(n, i);
                }
                diff_line(&line, h, &mut d);
                for (n, v) in d.iter().enumerate() {
                    out[n * nxn + i] = *v;
                }
            }
        }
    }
    FieldSamples::new(field.grid, field.times, out)
}

fn diff_line(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
}
