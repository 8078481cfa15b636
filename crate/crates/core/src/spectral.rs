//! Eigen-analysis of the normal matrix and the regularized estimators built
//! on it.
//!
//! The unweighted decomposition is `A = Φ D Φᵀ` with `ΦᵀΦ = I`. The weighted
//! one solves `A ψ = γ P ψ` with `ΨᵀPΨ = I`, through the symmetric matrix
//! `P^{-1/2} A P^{-1/2}` restricted to cells where `P > 0`.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::{sorted_eigen, symmetry_error};
use crate::regression::{
    check_system, loss_value, CoefficientEstimate, Method, RegParams, RegressionSystem, EIGEN_FLOOR,
};

/// Allowed asymmetry of an input matrix, relative to its largest entry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub weighted: bool,
    /// Sorted descending.
    pub eigenvalues: DVector<f64>,
    /// One eigenvector per column, in the full coefficient space.
    pub eigenvectors: DMatrix<f64>,
    /// Diagonal of `P` for weighted decompositions.
    pub weight: Option<DVector<f64>>,
    /// The decomposed matrix.
    pub matrix: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(0.0, f64::max)
    }

    /// Number of eigenvalues above `EIGEN_FLOOR · λ_max`.
    pub fn positive_count(&self) -> usize {
        let floor = EIGEN_FLOOR * self.largest();
        self.eigenvalues.iter().filter(|v| **v > floor).count()
    }

    /// `‖A v - σ v‖` (or `‖A ψ - γ P ψ‖`) for each pair.
    pub fn residuals(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let v = self.eigenvectors.column(k);
                let mut r = &self.matrix * v;
                match &self.weight {
                    Some(p) => r -= p.component_mul(&v) * self.eigenvalues[k],
                    None => r -= v * self.eigenvalues[k],
                }
                r.norm()
            })
            .collect()
    }

    /// `ΦᵀΦ - I` or `ΨᵀPΨ - I`, max entry.
    pub fn orthonormality_error(&self) -> f64 {
        let v = &self.eigenvectors;
        let g = match &self.weight {
            Some(p) => v.transpose() * DMatrix::from_diagonal(p) * v,
            None => v.transpose() * v,
        };
        (g - DMatrix::identity(self.len(), self.len())).amax()
    }
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(invalid("matrix must be square"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    if symmetry_error(a) > SYMMETRY_TOLERANCE * a.amax().max(1.0) {
        return Err(invalid("matrix is not symmetric"));
    }
    Ok(())
}

pub fn svd_unweighted(a: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    check_symmetric(a)?;
    let (eigenvalues, eigenvectors) = sorted_eigen(a);
    Ok(SpectralDecomposition {
        weighted: false,
        eigenvalues,
        eigenvectors,
        weight: None,
        matrix: a.clone(),
    })
}

/// Generalized problem `A ψ = γ P ψ` for diagonal `P`; cells with `P = 0`
/// are dropped, and their eigenvector entries are zero.
pub fn eig_generalized(a: &DMatrix<f64>, p: &DVector<f64>) -> Result<SpectralDecomposition> {
    check_symmetric(a)?;
    if p.len() != a.nrows() {
        return Err(invalid("P does not conform with A"));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid("P must be nonnegative and finite"));
    }
    let keep: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    if keep.is_empty() {
        return Err(invalid("P has no positive entries"));
    }
    let scale: Vec<f64> = keep.iter().map(|&i| 1.0 / libm::sqrt(p[i])).collect();
    let k = keep.len();
    let s = DMatrix::from_fn(k, k, |r, c| scale[r] * a[(keep[r], keep[c])] * scale[c]);
    let s = (&s + s.transpose()) * 0.5;
    let (eigenvalues, v) = sorted_eigen(&s);
    let mut eigenvectors = DMatrix::zeros(p.len(), k);
    for c in 0..k {
        for (r, &i) in keep.iter().enumerate() {
            eigenvectors[(i, c)] = scale[r] * v[(r, c)];
        }
    }
    Ok(SpectralDecomposition {
        weighted: true,
        eigenvalues,
        eigenvectors,
        weight: Some(p.clone()),
        matrix: a.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardRow {
    pub index: usize,
    pub sigma: f64,
    pub b_proj: f64,
    /// `b_proj / sigma`, or NaN below the eigenvalue floor.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardTable {
    pub weighted: bool,
    pub rows: Vec<PicardRow>,
}

pub fn picard_table(decomp: &SpectralDecomposition, b: &DVector<f64>) -> Result<PicardTable> {
    if b.len() != decomp.eigenvectors.nrows() {
        return Err(invalid("b does not conform with the decomposition"));
    }
    let floor = EIGEN_FLOOR * decomp.largest();
    let rows = (0..decomp.len())
        .map(|k| {
            let sigma = decomp.eigenvalues[k];
            let b_proj = decomp.eigenvectors.column(k).dot(b).abs();
            PicardRow {
                index: k,
                sigma,
                b_proj,
                ratio: if sigma > floor {
                    b_proj / sigma
                } else {
                    f64::NAN
                },
            }
        })
        .collect();
    Ok(PicardTable {
        weighted: decomp.weighted,
        rows,
    })
}

/// The two regularization norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegNorm {
    /// `‖c‖² = Δr Σ c_i²`, the `L²` norm of the piecewise-constant function.
    Unweighted,
    /// `‖c‖² = cᵀPc`, the `L²(ρ̄)` norm.
    Weighted,
}

impl RegNorm {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Unweighted => "unweighted",
            Self::Weighted => "weighted",
        }
    }
}

/// The matrix `B` of a regularization norm on a system.
pub fn regularizer(system: &RegressionSystem, norm: RegNorm) -> DMatrix<f64> {
    match norm {
        RegNorm::Unweighted => DMatrix::identity(system.b.len(), system.b.len()) * system.basis.dr,
        RegNorm::Weighted => system.p_matrix(),
    }
}

fn b_norm(c: &DVector<f64>, b: &DMatrix<f64>) -> f64 {
    libm::sqrt((c.transpose() * b * c)[(0, 0)].max(0.0))
}

/// `ĉ_λ = (A + λB)⁻¹ b`.
pub fn tikhonov_solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    reg: &DMatrix<f64>,
    lambda: f64,
) -> Result<CoefficientEstimate> {
    check_system(a, b)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda must be nonnegative"));
    }
    if reg.shape() != a.shape() {
        return Err(invalid("regularizer does not conform with A"));
    }
    check_symmetric(reg)?;
    let shifted = a + reg * lambda;
    let c = shifted
        .clone()
        .cholesky()
        .map(|ch| ch.solve(b))
        .or_else(|| shifted.lu().solve(b))
        .filter(|c| c.iter().all(|v| v.is_finite()))
        .ok_or_else(|| {
            Error::Singular(alloc::format!(
                "A + {lambda:e} B is singular; try a larger lambda"
            ))
        })?;
    Ok(CoefficientEstimate {
        loss: loss_value(&c, a, b),
        reg_params: RegParams::Tikhonov {
            lambda,
            norm_b: b_norm(&c, reg),
        },
        c,
        method: Method::Tikhonov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LCurvePoint {
    pub lambda: f64,
    /// `ℰ(ĉ_λ) - min ℰ`.
    pub excess: f64,
    /// `ℰ(ĉ_λ)`.
    pub loss: f64,
    pub norm: f64,
    /// Signed curvature of the log-log curve; NaN at the ends.
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LCurve {
    pub lambda: f64,
    pub index: usize,
    pub points: Vec<LCurvePoint>,
}

/// Signed curvature of the circle through three points; positive for a
/// counter-clockwise turn.
fn menger(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
    let cross = (q.0 - p.0) * (r.1 - q.1) - (q.1 - p.1) * (r.0 - q.0);
    let d = |a: (f64, f64), b: (f64, f64)| libm::hypot(a.0 - b.0, a.1 - b.1);
    let denom = d(p, q) * d(q, r) * d(p, r);
    if denom > 0.0 {
        2.0 * cross / denom
    } else {
        f64::NAN
    }
}

/// Relative size below which an excess loss is treated as round-off.
const EXCESS_FLOOR: f64 = 1e-26;

/// Picks the `λ` at the corner of `(log(ℰ(ĉ_λ) - min ℰ), log ‖ĉ_λ‖_B)`.
///
/// The excess `(ĉ_λ - ĉ)ᵀ A (ĉ_λ - ĉ)` is evaluated in the eigenbasis of
/// `A`; directions below `EIGEN_FLOOR · λ_max` carry no loss and are left
/// out. Excess values under `1e-26 bᵀA⁺b` are clamped to that floor and get
/// no curvature. Ties go to the larger `λ`. A curve without a convex corner
/// returns the smallest `λ`.
pub fn lcurve_select(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    reg: &DMatrix<f64>,
    lambdas: &[f64],
) -> Result<LCurve> {
    if lambdas.len() < 5 {
        return Err(invalid("L-curve needs at least 5 lambda values"));
    }
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) || !(lambdas[0] > 0.0) {
        return Err(invalid("lambda grid must be positive and increasing"));
    }
    let eig = SymmetricEigen::new(a.clone());
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let beta = eig.eigenvectors.transpose() * b;
    let excess = |c: &DVector<f64>| {
        let y = eig.eigenvectors.transpose() * c;
        let mut sum = 0.0;
        for k in 0..y.len() {
            let g = eig.eigenvalues[k];
            if g > EIGEN_FLOOR * top {
                let d = g * y[k] - beta[k];
                sum += d * d / g;
            }
        }
        sum
    };
    let mut points = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let est = tikhonov_solve(a, b, reg, lambda)?;
        let norm = match est.reg_params {
            RegParams::Tikhonov { norm_b, .. } => norm_b,
            _ => unreachable!(),
        };
        points.push(LCurvePoint {
            lambda,
            excess: excess(&est.c),
            loss: est.loss,
            norm,
            curvature: f64::NAN,
        });
    }
    let scale = excess(&DVector::zeros(b.len()));
    let floor = EXCESS_FLOOR * scale;
    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (libm::log(p.excess.max(floor)), libm::log(p.norm)))
        .collect();
    if !(scale > 0.0) || xy.windows(2).all(|w| w[0] == w[1]) || xy.iter().any(|p| !p.0.is_finite())
    {
        return Err(Error::DegenerateCurve(String::from("all points coincide")));
    }
    for i in 1..xy.len() - 1 {
        if points[i - 1..=i + 1].iter().all(|p| p.excess > floor) {
            points[i].curvature = menger(xy[i - 1], xy[i], xy[i + 1]);
        }
    }
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if p.curvature.is_finite() && p.curvature > 0.0 {
            match best {
                Some(j) if points[j].curvature > p.curvature => {}
                _ => best = Some(i),
            }
        }
    }
    let index = best.unwrap_or(0);
    Ok(LCurve {
        lambda: lambdas[index],
        index,
        points,
    })
}

/// `b_i + level · |b_i| · ξ_i` with standard normal `ξ` drawn from `seed`.
pub fn add_relative_noise(b: &DVector<f64>, level: f64, seed: u64) -> Result<DVector<f64>> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(invalid("noise level must be finite and nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(b.map(|v| {
        let xi: f64 = StandardNormal.sample(&mut rng);
        v + level * libm::fabs(v) * xi
    }))
}

/// Truncated expansion `Σ_{k≤m} (v_kᵀ b / σ_k) v_k`.
pub fn tsvd_solve(
    decomp: &SpectralDecomposition,
    b: &DVector<f64>,
    m: usize,
) -> Result<CoefficientEstimate> {
    let positive = decomp.positive_count();
    if m == 0 || m > positive {
        return Err(invalid(alloc::format!(
            "truncation {m} outside the positive spectrum 1..={positive}"
        )));
    }
    if b.len() != decomp.eigenvectors.nrows() {
        return Err(invalid("b does not conform with the decomposition"));
    }
    let mut c = DVector::zeros(b.len());
    for k in 0..m {
        let v = decomp.eigenvectors.column(k);
        c += v * (v.dot(b) / decomp.eigenvalues[k]);
    }
    Ok(CoefficientEstimate {
        loss: loss_value(&c, &decomp.matrix, b),
        c,
        method: Method::Tsvd,
        reg_params: RegParams::Tsvd {
            m,
            weighted: decomp.weighted,
        },
    })
}

/// The first `m` eigenvectors, a basis of the eigen-subspace of the RKHS.
pub fn rkhs_subspace(decomp: &SpectralDecomposition, m: usize) -> Result<DMatrix<f64>> {
    if m == 0 || m > decomp.positive_count() {
        return Err(invalid("subspace dimension outside the positive spectrum"));
    }
    Ok(decomp.eigenvectors.columns(0, m).into_owned())
}

/// Minimizer of `ℰ` over the column span of `basis`, from the projected
/// system `VᵀAV α = Vᵀb`.
pub fn subspace_minimizer(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    basis: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let projected = basis.transpose() * a * basis;
    let rhs = basis.transpose() * b;
    let alpha = projected
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .or_else(|| projected.lu().solve(&rhs))
        .ok_or_else(|| Error::Singular("projected system is singular".into()))?;
    Ok(basis * alpha)
}

/// One index of the side-by-side spectral comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdComparisonRow {
    pub index: usize,
    pub unweighted: PicardRow,
    /// Absent when `P` vanishes on some cells and the weighted spectrum is shorter.
    pub weighted: Option<PicardRow>,
    pub weighted_ge_unweighted: bool,
}

pub fn compare_svd_report(system: &RegressionSystem) -> Result<Vec<SvdComparisonRow>> {
    let u = picard_table(&svd_unweighted(&system.a)?, &system.b)?;
    let w = picard_table(&eig_generalized(&system.a, &system.p)?, &system.b)?;
    Ok(u.rows
        .iter()
        .enumerate()
        .map(|(i, ur)| {
            let wr = w.rows.get(i).copied();
            SvdComparisonRow {
                index: i,
                unweighted: *ur,
                weighted: wr,
                weighted_ge_unweighted: wr.is_some_and(|w| w.sigma >= ur.sigma),
            }
        })
        .collect())
}

/// Log-spaced grid of `count` values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && count >= 2) {
        return Err(invalid("log grid needs 0 < lo < hi and at least 2 points"));
    }
    let (a, b) = (libm::log(lo), libm::log(hi));
    let mut g: Vec<f64> = (0..count)
        .map(|k| libm::exp(a + (b - a) * k as f64 / (count - 1) as f64))
        .collect();
    g[0] = lo;
    g[count - 1] = hi;
    Ok(g)
}

/// Log grid spanning `1e-15..1e1` times `tr(A)/tr(B)`, the scale at which
/// the penalty competes with the data term.
pub fn lambda_grid(a: &DMatrix<f64>, reg: &DMatrix<f64>, count: usize) -> Result<Vec<f64>> {
    let (ta, tb) = (a.trace(), reg.trace());
    if !(ta > 0.0 && tb > 0.0) {
        return Err(invalid("lambda grid needs positive traces"));
    }
    let s = ta / tb;
    log_grid(1e-15 * s, 1e1 * s, count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spd(n: usize, seed: u64, decay: f64) -> DMatrix<f64> {
        // Deterministic pseudo-random orthogonal basis with a decaying spectrum.
        let mut state = seed;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = DMatrix::from_fn(n, n, |_, _| next());
        let q = m.qr().q();
        let d = DVector::from_fn(n, |i, _| libm::pow(decay, i as f64));
        let a = &q * DMatrix::from_diagonal(&d) * q.transpose();
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn unweighted_examples() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let d = svd_unweighted(&a).unwrap();
        assert_eq!(d.eigenvalues.as_slice(), &[3.0, 1.0]);
        assert!((d.eigenvectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
        let a = random_spd(6, 1, 0.3);
        let d = svd_unweighted(&a).unwrap();
        let rec =
            &d.eigenvectors * DMatrix::from_diagonal(&d.eigenvalues) * d.eigenvectors.transpose();
        assert!((rec - &a).amax() <= 1e-10 * d.largest());
        assert!(d.orthonormality_error() <= 1e-10);
        let mut bad = a.clone();
        bad[(0, 1)] += 1e-3;
        assert!(svd_unweighted(&bad).is_err());
    }

    #[test]
    fn generalized_examples() {
        let a = random_spd(5, 2, 0.5);
        let eye = DVector::from_element(5, 1.0);
        let g = eig_generalized(&a, &eye).unwrap();
        let u = svd_unweighted(&a).unwrap();
        for k in 0..5 {
            assert!((g.eigenvalues[k] - u.eigenvalues[k]).abs() < 1e-12);
        }
        let p = DVector::from_vec(vec![0.5, 2.0, 0.1, 3.0, 1.5]);
        let g = eig_generalized(&DMatrix::from_diagonal(&p), &p).unwrap();
        assert!(g.eigenvalues.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let g = eig_generalized(&a, &p).unwrap();
        assert!(g.orthonormality_error() <= 1e-10);
        assert!(g.residuals().iter().all(|r| *r <= 1e-8 * g.largest()));
        assert!(eig_generalized(&a, &DVector::from_vec(vec![1.0, -1.0, 1.0, 1.0, 1.0])).is_err());
        let zeroed = DVector::from_vec(vec![1.0, 0.0, 1.0, 1.0, 1.0]);
        let mut az = a.clone();
        az.row_mut(1).fill(0.0);
        az.column_mut(1).fill(0.0);
        let g = eig_generalized(&az, &zeroed).unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.eigenvectors.row(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn picard_examples() {
        let a = random_spd(4, 3, 0.2);
        let d = svd_unweighted(&a).unwrap();
        let b = d.eigenvectors.column(0).into_owned();
        let t = picard_table(&d, &b).unwrap();
        assert!((t.rows[0].b_proj - 1.0).abs() < 1e-12);
        assert!(t.rows[1..].iter().all(|r| r.b_proj < 1e-12));
        let z = picard_table(&d, &DVector::zeros(4)).unwrap();
        assert!(z.rows.iter().all(|r| r.b_proj == 0.0));
    }

    #[test]
    fn tikhonov_examples() {
        let a = random_spd(6, 4, 0.4);
        let b = DVector::from_fn(6, |i, _| 1.0 + i as f64);
        let eye = DMatrix::identity(6, 6);
        let t0 = tikhonov_solve(&a, &b, &eye, 0.0).unwrap();
        let plain = crate::regression::solve_unregularized(&a, &b).unwrap();
        assert!((t0.c - &plain.c).norm() <= 1e-10 * plain.c.norm());
        let big = tikhonov_solve(&a, &b, &eye, 1e6).unwrap();
        assert!(big.c.norm() <= 1e-3 * plain.c.norm());
        let grid = log_grid(1e-8, 1e2, 20).unwrap();
        let norms: Vec<f64> = grid
            .iter()
            .map(
                |&l| match tikhonov_solve(&a, &b, &eye, l).unwrap().reg_params {
                    RegParams::Tikhonov { norm_b, .. } => norm_b,
                    _ => unreachable!(),
                },
            )
            .collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        let sing = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(
            tikhonov_solve(
                &sing,
                &DVector::from_vec(vec![1.0, 1.0]),
                &DMatrix::zeros(2, 2),
                0.0
            ),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn lcurve_without_corner_takes_grid_minimum() {
        let a = random_spd(5, 5, 0.1);
        let d = svd_unweighted(&a).unwrap();
        let b = d.eigenvectors.column(0) * 2.0;
        let grid = log_grid(1e-6, 1e2, 25).unwrap();
        let l = lcurve_select(&a, &b, &DMatrix::identity(5, 5), &grid).unwrap();
        assert_eq!(l.index, 0);
        assert!(lcurve_select(&a, &b, &DMatrix::identity(5, 5), &grid[..4]).is_err());
    }

    #[test]
    fn lcurve_is_scale_invariant_and_finds_corner() {
        let a = random_spd(12, 6, 0.2);
        let d = svd_unweighted(&a).unwrap();
        // Smooth truth plus noise that does not decay with the spectrum.
        let mut b = DVector::zeros(12);
        for k in 0..12 {
            let clean = d.eigenvalues[k] * libm::pow(0.5, k as f64);
            let noise = 1e-4 * if k % 2 == 0 { 1.0 } else { -1.0 };
            b += d.eigenvectors.column(k) * (clean + noise);
        }
        let grid = log_grid(1e-12, 1e1, 40).unwrap();
        let eye = DMatrix::identity(12, 12);
        let l1 = lcurve_select(&a, &b, &eye, &grid).unwrap();
        let l2 = lcurve_select(&a, &(&b * 10.0), &eye, &grid).unwrap();
        assert_eq!(l1.index, l2.index);
        assert!(l1.index > 0 && l1.index < grid.len() - 1);
    }

    #[test]
    fn degenerate_lcurve_is_rejected() {
        let a = DMatrix::identity(3, 3);
        let b = DVector::zeros(3);
        let grid = log_grid(1e-3, 1e3, 6).unwrap();
        assert!(lcurve_select(&a, &b, &DMatrix::identity(3, 3), &grid).is_err());
    }

    #[test]
    fn tsvd_matches_projection_and_plain_solve() {
        let a = random_spd(8, 7, 0.5);
        let b = DVector::from_fn(8, |i, _| libm::cos(i as f64));
        let p = DVector::from_fn(8, |i, _| 0.05 + 0.02 * i as f64);
        for d in [
            svd_unweighted(&a).unwrap(),
            eig_generalized(&a, &p).unwrap(),
        ] {
            for m in 1..=8 {
                let t = tsvd_solve(&d, &b, m).unwrap();
                let sub = rkhs_subspace(&d, m).unwrap();
                let c = subspace_minimizer(&a, &b, &sub).unwrap();
                assert!((&t.c - &c).norm() <= 1e-12 * t.c.norm(), "m={m}");
                if m == 1 {
                    let v = d.eigenvectors.column(0);
                    let cos = t.c.dot(&v) / (t.c.norm() * v.norm());
                    assert!((cos.abs() - 1.0).abs() < 1e-12);
                }
            }
            let full = tsvd_solve(&d, &b, 8).unwrap();
            let plain = crate::regression::solve_unregularized(&a, &b).unwrap();
            assert!((full.c - &plain.c).norm() <= 1e-12 * plain.c.norm());
            assert!(tsvd_solve(&d, &b, 9).is_err());
            assert!(tsvd_solve(&d, &b, 0).is_err());
        }
    }

    #[test]
    fn relative_noise_is_seeded_and_scaled() {
        let b = DVector::from_vec(alloc::vec![1.0, -2.0, 0.0, 4.0]);
        let x = add_relative_noise(&b, 0.01, 3).unwrap();
        assert_eq!(x, add_relative_noise(&b, 0.01, 3).unwrap());
        assert_ne!(x, add_relative_noise(&b, 0.01, 4).unwrap());
        assert_eq!(x[2], 0.0);
        for i in 0..4 {
            assert!((x[i] - b[i]).abs() <= 0.06 * b[i].abs());
        }
        assert_eq!(add_relative_noise(&b, 0.0, 3).unwrap(), b);
        assert!(add_relative_noise(&b, -0.1, 3).is_err());
    }

    #[test]
    fn comparison_report_examples() {
        use crate::measures::Support;
        use crate::regression::{build_basis, BasisMode};
        let a = random_spd(5, 8, 0.3);
        let b = DVector::from_fn(5, |i, _| 1.0 - 0.2 * i as f64);
        let basis = build_basis(Support { lo: 0.0, hi: 2.0 }, 5, BasisMode::Radial).unwrap();
        let dr = basis.dr;
        let mut sys = RegressionSystem {
            a,
            b,
            p: DVector::from_element(5, dr),
            basis,
            nu: 0.1,
        };
        let rows = compare_svd_report(&sys).unwrap();
        for r in &rows {
            let w = r.weighted.unwrap();
            assert!((w.sigma - r.unweighted.sigma / dr).abs() <= 1e-12 * w.sigma);
            assert!(
                (w.b_proj - r.unweighted.b_proj / libm::sqrt(dr)).abs()
                    <= 1e-10 * w.b_proj.abs().max(1e-3)
            );
            assert!(r.weighted_ge_unweighted);
        }
        sys.p = DVector::from_element(5, 1.0);
        for r in compare_svd_report(&sys).unwrap() {
            let w = r.weighted.unwrap();
            assert!((w.sigma - r.unweighted.sigma).abs() <= 1e-12 * w.sigma);
            assert!((w.b_proj - r.unweighted.b_proj).abs() <= 1e-12);
        }
        let spectrum: Vec<f64> = rows.iter().map(|r| r.unweighted.sigma).collect();
        sys.b = DVector::zeros(5);
        let empty = compare_svd_report(&sys).unwrap();
        for (r, s) in empty.iter().zip(&spectrum) {
            assert_eq!(r.unweighted.b_proj, 0.0);
            assert_eq!(r.weighted.unwrap().b_proj, 0.0);
            assert_eq!(r.unweighted.sigma, *s);
        }
    }
}
