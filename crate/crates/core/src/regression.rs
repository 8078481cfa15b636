//! Piecewise-constant hypothesis spaces and the normal system of the loss
//! `ℰ(c) = cᵀAc - 2cᵀb`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::grid::{
    accumulate_correlation, convolve_weighted_into, finite_difference, Axis, OffsetSamples,
    SpaceTimeField,
};
use crate::kernel::{InteractionKernel, KernelSampling};
use crate::linalg::{sorted_eigen, Gram};
use crate::measures::{EmpiricalMeasure, Lattice, Support};

/// Condition number above which the least-squares solve switches to the
/// pseudo-inverse.
pub const DIRECT_SOLVE_MAX_COND: f64 = 1e12;
/// Eigenvalues below this fraction of the largest are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisMode {
    /// Indicators of distances, paired with the odd kernel `φ(|x|) sign(x)`.
    Radial,
    /// Indicators of signed offsets.
    General,
}

/// Uniform partition `r_0 < … < r_n` with indicator basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    pub knots: Vec<f64>,
    pub dr: f64,
    pub mode: BasisMode,
}

pub fn build_basis(support: Support, n: usize, mode: BasisMode) -> Result<BasisSpec> {
    if n == 0 {
        return Err(invalid("basis needs at least one function"));
    }
    if !(support.lo.is_finite() && support.hi.is_finite() && support.hi > support.lo) {
        return Err(invalid("basis support must be a nonempty interval"));
    }
    if mode == BasisMode::Radial && support.lo < 0.0 {
        return Err(invalid("radial basis support must be nonnegative"));
    }
    let dr = (support.hi - support.lo) / n as f64;
    let mut knots: Vec<f64> = (0..=n).map(|i| support.lo + i as f64 * dr).collect();
    knots[n] = support.hi;
    Ok(BasisSpec { knots, dr, mode })
}

/// `∫_l^h clamp(x, a, b) dx`.
fn clamp_integral(l: f64, h: f64, a: f64, b: f64) -> f64 {
    let prim = |x: f64| {
        if x <= a {
            a * x
        } else if x <= b {
            a * a + 0.5 * (x * x - a * a)
        } else {
            a * a + 0.5 * (b * b - a * a) + b * (x - b)
        }
    };
    prim(h) - prim(l)
}

fn overlap(l: f64, h: f64, a: f64, b: f64) -> f64 {
    (h.min(b) - l.max(a)).max(0.0)
}

impl BasisSpec {
    pub fn len(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.knots[i], self.knots[i + 1])
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| 0.5 * (self.knots[i] + self.knots[i + 1]))
            .collect()
    }

    /// Index of the cell containing `r`, if any.
    pub fn locate(&self, r: f64) -> Option<usize> {
        let (lo, hi) = (self.knots[0], self.knots[self.len()]);
        if !(r >= lo && r <= hi) {
            return None;
        }
        Some((((r - lo) / self.dr) as usize).min(self.len() - 1))
    }

    /// `φ_i(r)`, the indicator of cell `i`.
    pub fn indicator(&self, i: usize, r: f64) -> f64 {
        let (a, b) = self.cell(i);
        if r >= a && r <= b {
            1.0
        } else {
            0.0
        }
    }

    /// `∫_0^r φ_i`; for radial bases this is `Φ_i(r)`, for general ones the
    /// signed integral `Ψ_i(x)`.
    pub fn antiderivative(&self, i: usize, r: f64) -> f64 {
        let (a, b) = self.cell(i);
        r.clamp(a, b) - 0.0f64.clamp(a, b)
    }

    /// The function `Σ c_i φ_i`.
    pub fn evaluate(&self, c: &[f64], r: f64) -> f64 {
        self.locate(r).map_or(0.0, |i| c[i])
    }

    pub fn element(&self, i: usize) -> BasisElement<'_> {
        BasisElement {
            basis: self,
            index: i,
        }
    }

    /// Potential samples `Φ_i(|p dx|)` (radial) or `Ψ_i(p dx)` (general).
    pub fn potential_samples(&self, i: usize, spacing: f64, half_width: usize) -> OffsetSamples {
        OffsetSamples::from_fn(spacing, half_width, |p| {
            let x = p as f64 * spacing;
            match self.mode {
                BasisMode::Radial => self.antiderivative(i, x.abs()),
                BasisMode::General => self.antiderivative(i, x),
            }
        })
    }
}

/// One indicator of a basis, viewed as a kernel on offsets.
#[derive(Debug, Clone, Copy)]
pub struct BasisElement<'a> {
    basis: &'a BasisSpec,
    index: usize,
}

impl KernelSampling for BasisElement<'_> {
    /// Exact averages of the kernel over the cells `[(p-½)dx, (p+½)dx]`, so
    /// knots need not sit on the lattice.
    fn offset_samples(&self, spacing: f64, half_width: usize) -> Result<OffsetSamples> {
        if !(spacing > 0.0) {
            return Err(invalid("offset spacing must be positive"));
        }
        let (a, b) = self.basis.cell(self.index);
        let avg = |x: f64| overlap(x - 0.5 * spacing, x + 0.5 * spacing, a, b) / spacing;
        Ok(OffsetSamples::from_fn(spacing, half_width, |p| {
            let x = p as f64 * spacing;
            match self.basis.mode {
                BasisMode::General => avg(x),
                BasisMode::Radial if p == 0 => 0.0,
                BasisMode::Radial => avg(x.abs()) * x.signum(),
            }
        }))
    }
}

impl BasisElement<'_> {
    /// Cell average of the potential, for reference quadratures.
    pub fn potential_average(&self, x: f64, spacing: f64) -> f64 {
        let (a, b) = self.basis.cell(self.index);
        let (l, h) = (x - 0.5 * spacing, x + 0.5 * spacing);
        let base = 0.0f64.clamp(a, b);
        let integral = match self.basis.mode {
            BasisMode::General => clamp_integral(l, h, a, b),
            BasisMode::Radial if l >= 0.0 => clamp_integral(l, h, a, b),
            BasisMode::Radial if h <= 0.0 => clamp_integral(-h, -l, a, b),
            BasisMode::Radial => clamp_integral(0.0, -l, a, b) + clamp_integral(0.0, h, a, b),
        };
        integral / spacing - base
    }
}

fn kernel_samples(u: &SpaceTimeField, basis: &BasisSpec) -> Result<Vec<OffsetSamples>> {
    let (dx, h) = (u.grid().dx(), u.grid().nx());
    (0..basis.len())
        .map(|i| basis.element(i).offset_samples(dx, h))
        .collect()
}

/// `(K_i * u)` at every node of one snapshot, column `i`.
fn convolutions(kernels: &[OffsetSamples], a: &[f64], out: &mut DMatrix<f64>) {
    let mut col = vec![0.0; a.len()];
    for (i, k) in kernels.iter().enumerate() {
        convolve_weighted_into(k, a, &mut col);
        out.column_mut(i).copy_from_slice(&col);
    }
}

fn weighted(u: &[f64], w: &[f64]) -> Vec<f64> {
    u.iter().zip(w).map(|(u, w)| u * w).collect()
}

/// `A_ij = (1/T) ∫∫ (K_i * u)(K_j * u) u dx dt`.
#[allow(non_snake_case)]
pub fn assemble_A(u: &SpaceTimeField, basis: &BasisSpec) -> Result<DMatrix<f64>> {
    let kernels = kernel_samples(u, basis)?;
    let w = u.grid().weights();
    let tau = u.times().average_weights();
    let nodes = u.grid().len();
    let mut v = DMatrix::zeros(nodes, basis.len());
    let mut gram = Gram::new(basis.len());
    let mut row = vec![0.0; basis.len()];
    for (n, t) in tau.iter().enumerate() {
        let s = u.snapshot(n);
        convolutions(&kernels, &weighted(s, &w), &mut v);
        for m in 0..nodes {
            let c = t * w[m] * s[m];
            if c > 0.0 {
                for (i, r) in row.iter_mut().enumerate() {
                    *r = v[(m, i)];
                }
                gram.push(libm::sqrt(c), &row);
            }
        }
    }
    Ok(gram.finish())
}

/// `b_i = -(1/T) ∫∫ [∂t u (Φ_i * u) + ν ∂x u (K_i * u)] dx dt`, from data only.
///
/// Both terms are evaluated as lag sums `Σ_p k(p) C(p)` against time-averaged
/// cross-correlations `C` of the weighted derivative and the weighted data.
pub fn assemble_b_data(u: &SpaceTimeField, basis: &BasisSpec, nu: f64) -> Result<DVector<f64>> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(invalid("nu must be positive"));
    }
    let ut = finite_difference(u.samples(), Axis::Time)?;
    let ux = finite_difference(u.samples(), Axis::Space)?;
    let w = u.grid().weights();
    let tau = u.times().average_weights();
    let nodes = u.grid().len();
    let mut ct = vec![0.0; 2 * nodes - 1];
    let mut cx = vec![0.0; 2 * nodes - 1];
    for (n, t) in tau.iter().enumerate() {
        let a = weighted(u.snapshot(n), &w);
        accumulate_correlation(&weighted(ut.snapshot(n), &w), &a, *t, &mut ct);
        accumulate_correlation(&weighted(ux.snapshot(n), &w), &a, *t, &mut cx);
    }
    let (dx, h) = (u.grid().dx(), u.grid().nx());
    let kernels = kernel_samples(u, basis)?;
    let b = (0..basis.len()).map(|i| {
        let pot = basis.potential_samples(i, dx, h);
        -(lag_sum(&pot, &ct) + nu * lag_sum(&kernels[i], &cx))
    });
    Ok(DVector::from_iterator(basis.len(), b))
}

fn lag_sum(k: &OffsetSamples, corr: &[f64]) -> f64 {
    k.values().iter().zip(corr).map(|(a, b)| a * b).sum()
}

/// `b_i = ⟪φ_i, φ_true⟫ = (1/T) ∫∫ (K_i * u)(K_true * u) u dx dt`.
pub fn assemble_b_oracle(
    u: &SpaceTimeField,
    basis: &BasisSpec,
    truth: &dyn KernelSampling,
) -> Result<DVector<f64>> {
    let (dx, h) = (u.grid().dx(), u.grid().nx());
    let k_true = truth.offset_samples(dx, h)?;
    let w = u.grid().weights();
    let tau = u.times().average_weights();
    let nodes = u.grid().len();
    let mut d = vec![0.0; 2 * nodes - 1];
    let mut drift = vec![0.0; nodes];
    for (n, t) in tau.iter().enumerate() {
        let s = u.snapshot(n);
        let a = weighted(s, &w);
        convolve_weighted_into(&k_true, &a, &mut drift);
        let f: Vec<f64> = (0..nodes).map(|m| a[m] * drift[m]).collect();
        accumulate_correlation(&f, &a, *t, &mut d);
    }
    let kernels = kernel_samples(u, basis)?;
    Ok(DVector::from_iterator(
        basis.len(),
        kernels.iter().map(|k| lag_sum(k, &d)),
    ))
}

/// Diagonal of `P`: the `ρ̄` mass of each basis cell, `≈ ρ̂(r_i) Δr`.
///
/// Each lattice node carries its density over its control volume; the second
/// value lists cells with zero mass.
#[allow(non_snake_case)]
pub fn assemble_P(
    measure: &EmpiricalMeasure,
    basis: &BasisSpec,
) -> Result<(DVector<f64>, Vec<usize>)> {
    match (measure.grid.lattice, basis.mode) {
        (Lattice::Radial, BasisMode::Radial) | (Lattice::Signed, BasisMode::General) => {}
        _ => return Err(invalid("measure lattice does not match the basis mode")),
    }
    let dx = measure.grid.spacing;
    let mut p = DVector::zeros(basis.len());
    for k in 0..measure.grid.len() {
        let x = measure.grid.position(k);
        let rho = measure.density[k];
        if rho == 0.0 {
            continue;
        }
        let mut l = x - 0.5 * dx;
        if measure.grid.lattice == Lattice::Radial {
            l = l.max(0.0);
        }
        let h = x + 0.5 * dx;
        for i in 0..basis.len() {
            let (a, b) = basis.cell(i);
            p[i] += rho * overlap(l, h, a, b);
        }
    }
    let empty = (0..basis.len()).filter(|&i| p[i] == 0.0).collect();
    Ok((p, empty))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Plain,
    Tikhonov,
    Tsvd,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Plain => "plain",
            Self::Tikhonov => "tikhonov",
            Self::Tsvd => "tsvd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegParams {
    /// Direct solve, or pseudo-inverse when `pseudo_inverse` is set.
    Plain {
        condition: f64,
        pseudo_inverse: bool,
    },
    Tikhonov {
        lambda: f64,
        norm_b: f64,
    },
    Tsvd {
        m: usize,
        weighted: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientEstimate {
    pub c: DVector<f64>,
    pub loss: f64,
    pub method: Method,
    pub reg_params: RegParams,
}

/// `ℰ(c) = cᵀAc - 2cᵀb`.
pub fn loss_value(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    (c.transpose() * a * c)[(0, 0)] - 2.0 * c.dot(b)
}

pub(crate) fn check_system(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<()> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(invalid("A must be square and conform with b"));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(invalid("system has non-finite entries"));
    }
    Ok(())
}

/// Least-squares minimizer: `A⁻¹b` when `cond(A) ≤ 1e12`, otherwise the
/// minimum-norm pseudo-inverse solution.
pub fn solve_unregularized(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<CoefficientEstimate> {
    check_system(a, b)?;
    let (vals, vecs) = sorted_eigen(a);
    let n = vals.len();
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bottom = vals.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let condition = if bottom > 0.0 {
        top / bottom
    } else {
        f64::INFINITY
    };
    let direct = if condition <= DIRECT_SOLVE_MAX_COND {
        a.clone().lu().solve(b)
    } else {
        None
    };
    let pseudo_inverse = direct.is_none();
    let c = match direct {
        Some(c) => c,
        None => {
            let mut c = DVector::zeros(n);
            for k in 0..n {
                if vals[k].abs() > EIGEN_FLOOR * top {
                    let v = vecs.column(k);
                    c += v * (v.dot(b) / vals[k]);
                }
            }
            c
        }
    };
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(
            "least-squares solution is not finite".into(),
        ));
    }
    Ok(CoefficientEstimate {
        loss: loss_value(&c, a, b),
        c,
        method: Method::Plain,
        reg_params: RegParams::Plain {
            condition,
            pseudo_inverse,
        },
    })
}

/// Relative (or, for a zero reference, absolute) `L²(ρ̄)` distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Error {
    pub value: f64,
    pub relative: bool,
}

/// `‖f - g‖ / ‖g‖` in `L²(ρ̄)` over the support, by lattice quadrature.
///
/// The radial origin is skipped so singular kernels can be compared.
pub fn l2rho_distance(
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    measure: &EmpiricalMeasure,
) -> L2Error {
    let w = measure.grid.weights();
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..measure.grid.len() {
        let x = measure.grid.position(k);
        if !measure.support_mask[k] || (measure.grid.lattice == Lattice::Radial && k == 0) {
            continue;
        }
        let q = w[k] * measure.density[k];
        let gx = g(x);
        num += q * (f(x) - gx) * (f(x) - gx);
        den += q * gx * gx;
    }
    if den > 0.0 {
        L2Error {
            value: libm::sqrt(num / den),
            relative: true,
        }
    } else {
        L2Error {
            value: libm::sqrt(num),
            relative: false,
        }
    }
}

/// Error of the piecewise-constant estimate against the true kernel.
pub fn l2rho_error(
    c: &DVector<f64>,
    basis: &BasisSpec,
    kernel: &InteractionKernel,
    measure: &EmpiricalMeasure,
) -> L2Error {
    let c = c.as_slice();
    match basis.mode {
        BasisMode::Radial => l2rho_distance(|r| basis.evaluate(c, r), |r| kernel.phi(r), measure),
        BasisMode::General => l2rho_distance(
            |x| basis.evaluate(c, x),
            |x| kernel.vector_kernel(x),
            measure,
        ),
    }
}

/// The assembled least-squares problem on one basis.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Diagonal of `P`.
    pub p: DVector<f64>,
    pub basis: BasisSpec,
    pub nu: f64,
}

impl RegressionSystem {
    /// Assembles `A`, data-driven `b` and `P` from the data and its measure.
    pub fn assemble(
        u: &SpaceTimeField,
        measure: &EmpiricalMeasure,
        basis: BasisSpec,
        nu: f64,
    ) -> Result<Self> {
        let a = assemble_A(u, &basis)?;
        let b = assemble_b_data(u, &basis, nu)?;
        let (p, _) = assemble_P(measure, &basis)?;
        Ok(Self { a, b, p, basis, nu })
    }

    pub fn p_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.p)
    }
}
