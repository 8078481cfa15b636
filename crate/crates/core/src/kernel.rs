//! Radial interaction kernels `φ` and their potentials `Φ(r) = ∫_0^r φ`.
//!
//! In one dimension the vector kernel is `K(x) = φ(|x|) sign(x)`.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::grid::{OffsetSamples, SpaceGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `φ(r) = 3 r²`.
    Cubic,
    /// Piecewise linear: `r` up to `inner`, linear decay to zero at `outer`.
    OpinionDynamics,
    /// `φ(r) = r - r^(-1.5)`.
    AttractionRepulsion,
    /// `φ(r) = Σ c_k r^k`.
    Polynomial,
    /// Linear interpolation of a table, constant beyond its ends.
    Tabulated,
}

/// One polynomial piece `Σ coeffs[k] r^k` on `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub coeffs: Vec<f64>,
}

impl Piece {
    fn eval(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c)
    }

    /// `∫_a^b` of the polynomial.
    fn integral(&self, a: f64, b: f64) -> f64 {
        let mut s = 0.0;
        let (mut pa, mut pb) = (a, b);
        for (k, c) in self.coeffs.iter().enumerate() {
            s += c * (pb - pa) / (k + 1) as f64;
            pa *= a;
            pb *= b;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Pieces(Vec<Piece>),
    AttractionRepulsion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionKernel {
    kind: KernelKind,
    repr: Repr,
}

impl InteractionKernel {
    pub fn cubic() -> Self {
        Self {
            kind: KernelKind::Cubic,
            repr: Repr::Pieces(alloc::vec![Piece {
                start: 0.0,
                end: f64::INFINITY,
                coeffs: alloc::vec![0.0, 0.0, 3.0],
            }]),
        }
    }

    pub fn opinion_dynamics(inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && outer > inner && outer.is_finite()) {
            return Err(invalid("opinion dynamics needs 0 < inner < outer"));
        }
        let slope = inner / (outer - inner);
        Ok(Self {
            kind: KernelKind::OpinionDynamics,
            repr: Repr::Pieces(alloc::vec![
                Piece {
                    start: 0.0,
                    end: inner,
                    coeffs: alloc::vec![0.0, 1.0],
                },
                Piece {
                    start: inner,
                    end: outer,
                    coeffs: alloc::vec![slope * outer, -slope],
                },
                Piece {
                    start: outer,
                    end: f64::INFINITY,
                    coeffs: Vec::new(),
                },
            ]),
        })
    }

    pub fn attraction_repulsion() -> Self {
        Self {
            kind: KernelKind::AttractionRepulsion,
            repr: Repr::AttractionRepulsion,
        }
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("polynomial coefficients must be finite"));
        }
        Ok(Self {
            kind: KernelKind::Polynomial,
            repr: Repr::Pieces(alloc::vec![Piece {
                start: 0.0,
                end: f64::INFINITY,
                coeffs,
            }]),
        })
    }

    pub fn zero() -> Self {
        Self::polynomial(Vec::new()).expect("empty polynomial is valid")
    }

    pub fn linear() -> Self {
        Self::polynomial(alloc::vec![0.0, 1.0]).expect("valid")
    }

    /// Piecewise-linear kernel through `(r[k], phi[k])`.
    pub fn tabulated(r: &[f64], phi: &[f64]) -> Result<Self> {
        if r.len() != phi.len() || r.is_empty() {
            return Err(invalid("table needs matching, nonempty r and phi"));
        }
        if r[0] < 0.0 || r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("table radii must be nonnegative and increasing"));
        }
        if r.iter().chain(phi).any(|v| !v.is_finite()) {
            return Err(invalid("table entries must be finite"));
        }
        let n = r.len();
        let mut pieces = Vec::with_capacity(n + 1);
        if r[0] > 0.0 {
            pieces.push(Piece {
                start: 0.0,
                end: r[0],
                coeffs: alloc::vec![phi[0]],
            });
        }
        for k in 0..n - 1 {
            let s = (phi[k + 1] - phi[k]) / (r[k + 1] - r[k]);
            pieces.push(Piece {
                start: r[k],
                end: r[k + 1],
                coeffs: alloc::vec![phi[k] - s * r[k], s],
            });
        }
        pieces.push(Piece {
            start: r[n - 1],
            end: f64::INFINITY,
            coeffs: alloc::vec![phi[n - 1]],
        });
        Ok(Self {
            kind: KernelKind::Tabulated,
            repr: Repr::Pieces(pieces),
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Polynomial pieces, when the kernel has that form.
    pub fn pieces(&self) -> Option<&[Piece]> {
        match &self.repr {
            Repr::Pieces(p) => Some(p),
            Repr::AttractionRepulsion => None,
        }
    }

    /// True when `φ` blows up at `r = 0`.
    pub fn is_singular(&self) -> bool {
        matches!(self.repr, Repr::AttractionRepulsion)
    }

    pub fn phi(&self, r: f64) -> f64 {
        match &self.repr {
            Repr::Pieces(pieces) => pieces
                .iter()
                .find(|p| r < p.end)
                .or(pieces.last())
                .map_or(0.0, |p| p.eval(r)),
            Repr::AttractionRepulsion => r - libm::pow(r, -1.5),
        }
    }

    /// `Φ(r) = ∫_0^r φ(s) ds`.
    ///
    /// The attraction-repulsion potential diverges at the origin; it is
    /// anchored at `Φ(1) = 0` instead.
    pub fn potential(&self, r: f64) -> f64 {
        match &self.repr {
            Repr::Pieces(pieces) => pieces
                .iter()
                .filter(|p| p.start < r)
                .map(|p| p.integral(p.start, r.min(p.end)))
                .sum(),
            Repr::AttractionRepulsion => 0.5 * r * r + 2.0 / libm::sqrt(r) - 2.5,
        }
    }

    /// The vector kernel `K(x) = φ(|x|) sign(x)`, with `K(0) = 0`.
    pub fn vector_kernel(&self, x: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else if x > 0.0 {
            self.phi(x)
        } else {
            -self.phi(-x)
        }
    }
}

/// Anything that can be laid out as a kernel on the signed offset lattice.
pub trait KernelSampling {
    fn offset_samples(&self, spacing: f64, half_width: usize) -> Result<OffsetSamples>;
}

impl KernelSampling for InteractionKernel {
    /// Point samples `K(p * spacing)`; the origin is never evaluated.
    fn offset_samples(&self, spacing: f64, half_width: usize) -> Result<OffsetSamples> {
        let s = OffsetSamples::from_fn(spacing, half_width, |p| {
            self.vector_kernel(p as f64 * spacing)
        });
        if s.values().iter().any(|v| !v.is_finite()) {
            return Err(invalid("kernel produced a non-finite sample"));
        }
        Ok(s)
    }
}

/// Odd samples of `K` on every offset the grid can realize.
pub fn kernel_from_phi(kernel: &InteractionKernel, grid: &SpaceGrid) -> Result<OffsetSamples> {
    kernel.offset_samples(grid.dx(), grid.nx())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_linear_samples() {
        let grid = SpaceGrid::new(-1.0, 1.0, 16).unwrap();
        let z = kernel_from_phi(&InteractionKernel::zero(), &grid).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));
        let l = kernel_from_phi(&InteractionKernel::linear(), &grid).unwrap();
        for p in -16..=16 {
            assert_eq!(l.at(p), p as f64 * grid.dx());
        }
    }

    #[test]
    fn cubic_is_odd() {
        let grid = SpaceGrid::new(-1.0, 1.0, 4).unwrap();
        let k = kernel_from_phi(&InteractionKernel::cubic(), &grid).unwrap();
        assert_eq!(k.at(1), 0.75);
        assert_eq!(k.at(-1), -0.75);
        assert_eq!(k.at(0), 0.0);
        for p in 0..=4 {
            assert_eq!(k.at(p), -k.at(-p));
        }
    }

    #[test]
    fn attraction_repulsion_skips_origin() {
        let grid = SpaceGrid::new(-1.0, 1.0, 64).unwrap();
        let k = kernel_from_phi(&InteractionKernel::attraction_repulsion(), &grid).unwrap();
        assert_eq!(k.at(0), 0.0);
        assert!(k.values().iter().all(|v| v.is_finite()));
        assert!(k.at(1) < 0.0);
    }

    #[test]
    fn potential_matches_phi() {
        let kernels = [
            InteractionKernel::cubic(),
            InteractionKernel::opinion_dynamics(0.4, 1.1).unwrap(),
            InteractionKernel::tabulated(&[0.2, 0.5, 0.9], &[1.0, -0.5, 0.25]).unwrap(),
            InteractionKernel::attraction_repulsion(),
        ];
        for k in &kernels {
            if !k.is_singular() {
                assert_eq!(k.potential(0.0), 0.0);
            }
            let h = 1e-5;
            for i in 1..40 {
                let r = 0.0371 * i as f64;
                let d = (k.potential(r + h) - k.potential(r - h)) / (2.0 * h);
                assert!(
                    (d - k.phi(r)).abs() < 1e-5 * (1.0 + k.phi(r).abs()),
                    "{:?} r={r}",
                    k.kind()
                );
            }
        }
    }

    #[test]
    fn opinion_dynamics_shape() {
        let k = InteractionKernel::opinion_dynamics(0.5, 1.0).unwrap();
        assert!((k.phi(0.25) - 0.25).abs() < 1e-15);
        assert!((k.phi(0.5) - 0.5).abs() < 1e-15);
        assert!((k.phi(0.75) - 0.25).abs() < 1e-15);
        assert_eq!(k.phi(2.0), 0.0);
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        assert!(InteractionKernel::tabulated(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(InteractionKernel::tabulated(&[0.0], &[1.0, 2.0]).is_err());
    }
}
