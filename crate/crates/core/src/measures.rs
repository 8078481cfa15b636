//! The time-averaged pair-difference density `ρ̄`, its support, and the
//! integral kernels `F̄`, `Ḡ` and their `ρ̄`-weighted versions `Q̄`, `R̄`.
//!
//! All quantities live on lattices of offsets `p * dx` between grid nodes. With
//! `a = w u` (trapezoid weights times data), the discrete forms are
//!
//! ```text
//! ρ̄(p)   = Σ_n τ_n (1/dx)  Σ_m a_m a_{m-p}
//! F̄(p,q) = Σ_n τ_n (1/dx²) Σ_m a_m a_{m-p} u_{m-q} w_{m-q}
//! ```
//!
//! where `τ` are the time-averaging weights. These are the exact kernels of
//! the quadratures used by the regression module, so every identity between
//! them holds to round-off.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::grid::SpaceTimeField;
use crate::linalg::{symmetry_error, Gram};

/// Default support threshold relative to `max ρ̄`.
pub const SUPPORT_RELATIVE_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lattice {
    /// Offsets `-half_width..=half_width`.
    Signed,
    /// Distances `0..=half_width`.
    Radial,
}

/// A uniform lattice of offsets with its quadrature weights.
///
/// Signed lattices carry weight `dx` everywhere; radial lattices carry `dx/2`
/// at the origin and `dx` elsewhere. With these weights the discrete `ρ̄` has
/// unit mass exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetGrid {
    pub lattice: Lattice,
    pub spacing: f64,
    pub half_width: usize,
}

impl OffsetGrid {
    pub fn signed(spacing: f64, half_width: usize) -> Self {
        Self {
            lattice: Lattice::Signed,
            spacing,
            half_width,
        }
    }

    pub fn radial(spacing: f64, half_width: usize) -> Self {
        Self {
            lattice: Lattice::Radial,
            spacing,
            half_width,
        }
    }

    pub fn len(&self) -> usize {
        match self.lattice {
            Lattice::Signed => 2 * self.half_width + 1,
            Lattice::Radial => self.half_width + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Signed lattice offset of entry `k`.
    pub fn offset(&self, k: usize) -> isize {
        match self.lattice {
            Lattice::Signed => k as isize - self.half_width as isize,
            Lattice::Radial => k as isize,
        }
    }

    pub fn index_of(&self, p: isize) -> Option<usize> {
        let k = match self.lattice {
            Lattice::Signed => p + self.half_width as isize,
            Lattice::Radial => p,
        };
        (k >= 0 && (k as usize) < self.len()).then_some(k as usize)
    }

    pub fn position(&self, k: usize) -> f64 {
        self.offset(k) as f64 * self.spacing
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.position(k)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![self.spacing; self.len()];
        if self.lattice == Lattice::Radial {
            w[0] *= 0.5;
        }
        w
    }
}

/// A closed interval of offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
}

impl Support {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub grid: OffsetGrid,
    pub density: Vec<f64>,
    pub support_mask: Vec<bool>,
    pub support_threshold: f64,
}

impl EmpiricalMeasure {
    /// Builds a measure and marks its support at the default threshold.
    pub fn new(grid: OffsetGrid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(invalid("density length does not match the offset grid"));
        }
        if density.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("measure density must be finite and nonnegative"));
        }
        let mut m = Self {
            grid,
            support_mask: vec![false; density.len()],
            density,
            support_threshold: 0.0,
        };
        let threshold = SUPPORT_RELATIVE_THRESHOLD * m.max();
        if threshold > 0.0 {
            support_of(&mut m, threshold)?;
        }
        Ok(m)
    }

    pub fn mass(&self) -> f64 {
        self.density
            .iter()
            .zip(self.grid.weights())
            .map(|(r, w)| r * w)
            .sum()
    }

    pub fn max(&self) -> f64 {
        self.density.iter().cloned().fold(0.0, f64::max)
    }

    pub fn at(&self, p: isize) -> f64 {
        self.grid.index_of(p).map_or(0.0, |k| self.density[k])
    }

    /// Smallest interval containing every node marked as support.
    pub fn support(&self) -> Option<Support> {
        let first = self.support_mask.iter().position(|m| *m)?;
        let last = self.support_mask.iter().rposition(|m| *m)?;
        Some(Support {
            lo: self.grid.position(first),
            hi: self.grid.position(last),
        })
    }
}

/// Marks the nodes where `ρ̄ > threshold` and returns their hull.
pub fn support_of(measure: &mut EmpiricalMeasure, threshold: f64) -> Result<Support> {
    if !(threshold > 0.0) {
        return Err(invalid("support threshold must be positive"));
    }
    for (m, r) in measure.support_mask.iter_mut().zip(&measure.density) {
        *m = *r > threshold;
    }
    measure.support_threshold = threshold;
    measure.support().ok_or(Error::EmptySupport { threshold })
}

fn weighted_snapshots(u: &SpaceTimeField) -> (Vec<f64>, Vec<f64>) {
    let w = u.grid().weights();
    let tau = u.times().average_weights();
    let mut a = Vec::with_capacity(u.samples().values().len());
    for n in 0..u.times().len() {
        a.extend(u.snapshot(n).iter().zip(&w).map(|(u, w)| u * w));
    }
    (a, tau)
}

/// `ρ̄` on the signed lattice of every realizable offset.
pub fn compute_rho_general(u: &SpaceTimeField) -> Result<EmpiricalMeasure> {
    let grid = u.grid();
    let nodes = grid.len();
    let dx = grid.dx();
    let (a, tau) = weighted_snapshots(u);
    let mut half = vec![0.0; nodes];
    for (n, t) in tau.iter().enumerate() {
        let a = &a[n * nodes..(n + 1) * nodes];
        for (p, h) in half.iter_mut().enumerate() {
            let s: f64 = a[p..].iter().zip(a).map(|(x, y)| x * y).sum();
            *h += t * s / dx;
        }
    }
    let off = OffsetGrid::signed(dx, grid.nx());
    let density = (0..off.len())
        .map(|k| half[off.offset(k).unsigned_abs()])
        .collect();
    EmpiricalMeasure::new(off, density)
}

/// `ρ̄(r) = ρ̄_gen(r) + ρ̄_gen(-r)` on the radial lattice.
pub fn fold_radial(general: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
    if general.grid.lattice != Lattice::Signed {
        return Err(invalid("folding needs a signed measure"));
    }
    let h = general.grid.half_width;
    let off = OffsetGrid::radial(general.grid.spacing, h);
    let density = (0..=h as isize)
        .map(|k| general.at(k) + general.at(-k))
        .collect();
    EmpiricalMeasure::new(off, density)
}

/// `ρ̄` of pair distances on the radial lattice.
pub fn compute_rho_radial(u: &SpaceTimeField) -> Result<EmpiricalMeasure> {
    fold_radial(&compute_rho_general(u)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMatrixKind {
    GBar,
    RBar,
    FBar,
    QBar,
}

impl KernelMatrixKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::GBar => "G_bar",
            Self::RBar => "R_bar",
            Self::FBar => "F_bar",
            Self::QBar => "Q_bar",
        }
    }
}

/// A symmetric kernel sampled on an offset lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub kind: KernelMatrixKind,
    pub grid: OffsetGrid,
    pub values: DMatrix<f64>,
    pub time_horizon: f64,
}

impl KernelMatrix {
    pub fn at(&self, p: isize, q: isize) -> f64 {
        match (self.grid.index_of(p), self.grid.index_of(q)) {
            (Some(i), Some(j)) => self.values[(i, j)],
            _ => 0.0,
        }
    }

    pub fn symmetry_error(&self) -> f64 {
        symmetry_error(&self.values)
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        let e = SymmetricEigen::new(self.values.clone()).eigenvalues;
        (e.min(), e.max())
    }
}

/// `Σ rows rowsᵀ` where `fill(a, m, row)` writes the Gram row of node `m`
/// of one snapshot (given its weighted values `a`) and returns false to skip it.
fn gram(
    u: &SpaceTimeField,
    width: usize,
    mut fill: impl FnMut(&[f64], usize, &mut [f64]) -> bool,
) -> DMatrix<f64> {
    let nodes = u.grid().len();
    let dx = u.grid().dx();
    let (a, tau) = weighted_snapshots(u);
    let mut acc = Gram::new(width);
    let mut row = vec![0.0; width];
    for (n, t) in tau.iter().enumerate() {
        let a = &a[n * nodes..(n + 1) * nodes];
        for m in 0..nodes {
            let c = t * a[m] / (dx * dx);
            if c > 0.0 && fill(a, m, &mut row) {
                acc.push(libm::sqrt(c), &row);
            }
        }
    }
    acc.finish()
}

fn check_half_width(u: &SpaceTimeField, half_width: usize) -> Result<()> {
    if half_width > u.grid().nx() {
        return Err(invalid("offsets exceed the grid range"));
    }
    Ok(())
}

/// `F̄` on the signed offsets `-half_width..=half_width`.
#[allow(non_snake_case)]
pub fn assemble_F(u: &SpaceTimeField, half_width: usize) -> Result<KernelMatrix> {
    check_half_width(u, half_width)?;
    let h = half_width as isize;
    let values = gram(u, 2 * half_width + 1, |a, m, row| {
        let mut any = false;
        for (k, r) in row.iter_mut().enumerate() {
            let j = m as isize - (k as isize - h);
            *r = if j >= 0 && (j as usize) < a.len() {
                a[j as usize]
            } else {
                0.0
            };
            any |= *r != 0.0;
        }
        any
    });
    Ok(KernelMatrix {
        kind: KernelMatrixKind::FBar,
        grid: OffsetGrid::signed(u.grid().dx(), half_width),
        values,
        time_horizon: u.times().t_end(),
    })
}

/// `Ḡ(r,s) = F̄(r,s) - F̄(r,-s) - F̄(-r,s) + F̄(-r,-s)` on distances
/// `0..=half_width`, assembled directly from antisymmetrized Gram rows.
#[allow(non_snake_case)]
pub fn assemble_G(u: &SpaceTimeField, half_width: usize) -> Result<KernelMatrix> {
    check_half_width(u, half_width)?;
    let values = gram(u, half_width + 1, |a, m, row| {
        let at = |j: isize| {
            if j >= 0 && (j as usize) < a.len() {
                a[j as usize]
            } else {
                0.0
            }
        };
        let mut any = false;
        for (k, r) in row.iter_mut().enumerate() {
            *r = at(m as isize - k as isize) - at(m as isize + k as isize);
            any |= *r != 0.0;
        }
        any
    });
    Ok(KernelMatrix {
        kind: KernelMatrixKind::GBar,
        grid: OffsetGrid::radial(u.grid().dx(), half_width),
        values,
        time_horizon: u.times().t_end(),
    })
}

/// Divides `Ḡ` (or `F̄`) by `ρ̄ ⊗ ρ̄` on the support, giving `R̄` (or `Q̄`).
///
/// Entries touching a node outside the support are set to zero; the second
/// value counts those nodes.
pub fn weight_kernel(
    base: &KernelMatrix,
    measure: &EmpiricalMeasure,
) -> Result<(KernelMatrix, usize)> {
    let kind = match (base.kind, base.grid.lattice, measure.grid.lattice) {
        (KernelMatrixKind::GBar, Lattice::Radial, Lattice::Radial) => KernelMatrixKind::RBar,
        (KernelMatrixKind::FBar, Lattice::Signed, Lattice::Signed) => KernelMatrixKind::QBar,
        _ => {
            return Err(invalid(
                "weighting needs G_bar with a radial measure or F_bar with a signed one",
            ))
        }
    };
    if ((base.grid.spacing - measure.grid.spacing) / measure.grid.spacing).abs() > 1e-12 {
        return Err(invalid("kernel and measure use different spacings"));
    }
    let n = base.grid.len();
    let mut rho = vec![0.0; n];
    let mut masked = 0;
    for (k, r) in rho.iter_mut().enumerate() {
        match measure.grid.index_of(base.grid.offset(k)) {
            Some(j) if measure.support_mask[j] => *r = measure.density[j],
            Some(_) => masked += 1,
            None => return Err(invalid("kernel offsets exceed the measure grid")),
        }
    }
    let values = DMatrix::from_fn(n, n, |i, j| {
        if rho[i] > 0.0 && rho[j] > 0.0 {
            base.values[(i, j)] / (rho[i] * rho[j])
        } else {
            0.0
        }
    });
    Ok((
        KernelMatrix {
            kind,
            grid: base.grid,
            values,
            time_horizon: base.time_horizon,
        },
        masked,
    ))
}

/// `Σ_{p,q} ω_p ω_q K(p,q)² ρ̄(p) ρ̄(q)`, the squared `L²(ρ̄ ⊗ ρ̄)` norm.
pub fn weighted_l2_norm_sq(kernel: &KernelMatrix, measure: &EmpiricalMeasure) -> f64 {
    let w = kernel.grid.weights();
    let rho: Vec<f64> = (0..kernel.grid.len())
        .map(|k| measure.at(kernel.grid.offset(k)))
        .collect();
    let n = kernel.grid.len();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            let k = kernel.values[(i, j)];
            s += w[i] * w[j] * k * k * rho[i] * rho[j];
        }
    }
    s
}

/// Closed forms for the stationary Gaussian `N(0, ν)` of the linear kernel.
///
/// Here `ν` is the diffusion coefficient, which equals the stationary
/// variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianClosedForms {
    pub nu: f64,
}

pub fn gaussian_closed_forms(nu: f64) -> Result<GaussianClosedForms> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(invalid("nu must be positive"));
    }
    Ok(GaussianClosedForms { nu })
}

impl GaussianClosedForms {
    pub fn density(&self, x: f64) -> f64 {
        libm::exp(-x * x / (2.0 * self.nu)) / libm::sqrt(2.0 * core::f64::consts::PI * self.nu)
    }

    pub fn rho_general(&self, x: f64) -> f64 {
        let pi = core::f64::consts::PI;
        libm::exp(-x * x / (4.0 * self.nu)) / (2.0 * libm::sqrt(pi * self.nu))
    }

    pub fn rho_radial(&self, r: f64) -> f64 {
        2.0 * self.rho_general(r)
    }

    pub fn f_bar(&self, x: f64, y: f64) -> f64 {
        let pi = core::f64::consts::PI;
        libm::exp(-(x * x + y * y - x * y) / (3.0 * self.nu))
            / (2.0 * libm::sqrt(3.0) * pi * self.nu)
    }
}

/// Closed forms for the stationary standard Cauchy density.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CauchyClosedForms;

impl CauchyClosedForms {
    pub fn density(&self, x: f64) -> f64 {
        1.0 / (core::f64::consts::PI * (1.0 + x * x))
    }

    pub fn rho_general(&self, x: f64) -> f64 {
        2.0 / (core::f64::consts::PI * (x * x + 4.0))
    }

    pub fn f_bar(&self, x: f64, y: f64) -> f64 {
        let pi2 = core::f64::consts::PI * core::f64::consts::PI;
        2.0 / pi2 * (x * x - x * y + y * y + 12.0)
            / ((x * x + 4.0) * (y * y + 4.0) * (x * x - 2.0 * x * y + y * y + 4.0))
    }
}
