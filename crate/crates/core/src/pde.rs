//! Finite-volume solver for `∂t u = ν ∂xx u + ∂x [u (K * u)]` on a bounded
//! interval with zero flux at both ends.
//!
//! Control volumes are centred on the nodes and have the trapezoid weights as
//! their lengths, so the trapezoid mass is conserved exactly by telescoping.
//! The face flux is exponentially fitted (Scharfetter-Gummel), which makes a
//! drift that is linear across a face exact and keeps the scheme second order
//! in `dx`. Time stepping is Crank-Nicolson with the drift frozen at a
//! predicted midpoint state.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::grid::{
    convolve_weighted_into, FieldSamples, OffsetSamples, SpaceGrid, SpaceTimeField, TimeGrid,
};
use crate::kernel::{kernel_from_phi, InteractionKernel};

/// Allowed deviation of the initial density's mass from one.
pub const INITIAL_MASS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub nu: f64,
    pub grid: SpaceGrid,
    pub times: TimeGrid,
    pub initial_density: Vec<f64>,
}

impl SolverConfig {
    pub fn new(
        nu: f64,
        grid: SpaceGrid,
        times: TimeGrid,
        initial_density: Vec<f64>,
    ) -> Result<Self> {
        let config = Self {
            nu,
            grid,
            times,
            initial_density,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(invalid("diffusion coefficient must be positive"));
        }
        if self.initial_density.len() != self.grid.len() {
            return Err(invalid("initial density length does not match the grid"));
        }
        if self
            .initial_density
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(invalid("initial density must be finite and nonnegative"));
        }
        let mass: f64 = self
            .initial_density
            .iter()
            .zip(self.grid.weights())
            .map(|(u, w)| u * w)
            .sum();
        if (mass - 1.0).abs() > INITIAL_MASS_TOLERANCE {
            return Err(invalid(alloc::format!("initial density has mass {mass}")));
        }
        Ok(())
    }
}

/// Bernoulli function `z / (e^z - 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-6 {
        1.0 - 0.5 * z + z * z / 12.0
    } else {
        z / libm::expm1(z)
    }
}

struct Stepper<'a> {
    kernel: &'a OffsetSamples,
    nu: f64,
    dx: f64,
    dt: f64,
    weights: Vec<f64>,
    // scratch
    wu: Vec<f64>,
    v: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    cprime: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(kernel: &'a OffsetSamples, nu: f64, grid: &SpaceGrid, dt: f64) -> Self {
        let n = grid.len();
        Self {
            kernel,
            nu,
            dx: grid.dx(),
            dt,
            weights: grid.weights(),
            wu: vec![0.0; n],
            v: vec![0.0; n],
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            rhs: vec![0.0; n],
            cprime: vec![0.0; n],
        }
    }

    /// Drift `K * u` at the nodes; returns `max |K * u|`.
    fn drift(&mut self, u: &[f64]) -> f64 {
        for ((wu, u), w) in self.wu.iter_mut().zip(u).zip(&self.weights) {
            *wu = u * w;
        }
        convolve_weighted_into(self.kernel, &self.wu, &mut self.v);
        self.v.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }

    /// Builds `L` from the current drift so that `w du/dt = L u`, storing its
    /// three diagonals.
    fn assemble(&mut self) {
        let n = self.v.len();
        self.lower.iter_mut().for_each(|x| *x = 0.0);
        self.diag.iter_mut().for_each(|x| *x = 0.0);
        self.upper.iter_mut().for_each(|x| *x = 0.0);
        let c = self.nu / self.dx;
        for i in 0..n - 1 {
            // J = c [B(-P) u_{i+1} - B(P) u_i] enters row i with + and row i+1 with -.
            let p = 0.5 * (self.v[i] + self.v[i + 1]) * self.dx / self.nu;
            let a = c * bernoulli(-p);
            let b = c * bernoulli(p);
            self.diag[i] -= b;
            self.upper[i] += a;
            self.lower[i + 1] += b;
            self.diag[i + 1] -= a;
        }
    }

    /// One Crank-Nicolson solve `(W - dt/2 L) out = (W + dt/2 L) u`.
    fn cn_solve(&mut self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        let h = 0.5 * self.dt;
        for i in 0..n {
            let mut lu = self.diag[i] * u[i];
            if i > 0 {
                lu += self.lower[i] * u[i - 1];
            }
            if i + 1 < n {
                lu += self.upper[i] * u[i + 1];
            }
            self.rhs[i] = self.weights[i] * u[i] + h * lu;
        }
        // Thomas algorithm on the system matrix W - h L.
        let d0 = self.weights[0] - h * self.diag[0];
        self.cprime[0] = -h * self.upper[0] / d0;
        out[0] = self.rhs[0] / d0;
        for i in 1..n {
            let a = -h * self.lower[i];
            let denom = self.weights[i] - h * self.diag[i] - a * self.cprime[i - 1];
            self.cprime[i] = if i + 1 < n {
                -h * self.upper[i] / denom
            } else {
                0.0
            };
            out[i] = (self.rhs[i] - a * out[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            out[i] -= self.cprime[i] * out[i + 1];
        }
    }
}

/// Integrates the mean-field equation over the configured time grid.
pub fn solve_mean_field(
    kernel: &InteractionKernel,
    config: &SolverConfig,
) -> Result<SpaceTimeField> {
    config.validate()?;
    let grid = config.grid;
    let times = config.times;
    let n = grid.len();
    let k = kernel_from_phi(kernel, &grid)?;
    let dt = times.dt();
    let dx = grid.dx();
    let mut stepper = Stepper::new(&k, config.nu, &grid, dt);

    let mut values = Vec::with_capacity(n * times.len());
    values.extend_from_slice(&config.initial_density);
    let mut u = config.initial_density.clone();
    let mut predicted = vec![0.0; n];
    let mut mid = vec![0.0; n];
    let mut next = vec![0.0; n];

    for step in 1..=times.nt() {
        let speed = stepper.drift(&u);
        check_cfl(dt, dx, speed)?;
        stepper.assemble();
        stepper.cn_solve(&u, &mut predicted);
        for ((m, a), b) in mid.iter_mut().zip(&u).zip(&predicted) {
            *m = 0.5 * (a + b);
        }
        let speed = stepper.drift(&mid);
        check_cfl(dt, dx, speed)?;
        stepper.assemble();
        stepper.cn_solve(&u, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                what: "mean-field solve",
                step,
            });
        }
        core::mem::swap(&mut u, &mut next);
        values.extend_from_slice(&u);
    }
    SpaceTimeField::new(FieldSamples::new(grid, times, values)?)
}

fn check_cfl(dt: f64, dx: f64, max_speed: f64) -> Result<()> {
    if !max_speed.is_finite() {
        return Err(Error::Divergence {
            what: "drift",
            step: 0,
        });
    }
    if dt * max_speed > dx {
        return Err(Error::Cfl {
            dt,
            required: dx / max_speed,
            max_speed,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(grid: &SpaceGrid, mean: f64, var: f64) -> Vec<f64> {
        grid.density_from_fn(|x| libm::exp(-(x - mean) * (x - mean) / (2.0 * var)))
            .unwrap()
    }

    fn variance(u: &[f64], grid: &SpaceGrid) -> f64 {
        let w = grid.weights();
        let x = grid.positions();
        let m: f64 = (0..u.len()).map(|i| w[i] * u[i] * x[i]).sum();
        (0..u.len())
            .map(|i| w[i] * u[i] * (x[i] - m) * (x[i] - m))
            .sum()
    }

    #[test]
    fn heat_equation_variance_growth() {
        let grid = SpaceGrid::new(-4.0, 4.0, 256).unwrap();
        let times = TimeGrid::new(1.0, 500).unwrap();
        let (s0, nu) = (0.1, 0.2);
        let config = SolverConfig::new(nu, grid, times, gaussian(&grid, 0.0, s0)).unwrap();
        let u = solve_mean_field(&InteractionKernel::zero(), &config).unwrap();
        for n in [100, 250, 500] {
            let v = variance(u.snapshot(n), &grid);
            let expect = s0 + 2.0 * nu * times.t(n);
            assert!((v - expect).abs() < 0.02 * expect, "{v} vs {expect}");
        }
    }

    #[test]
    fn mass_is_conserved_per_step() {
        let grid = SpaceGrid::new(-1.5, 1.5, 128).unwrap();
        let times = TimeGrid::new(0.5, 1000).unwrap();
        let u0 = grid
            .density_from_fn(|x| {
                libm::exp(-(x - 0.3) * (x - 0.3) / 0.02)
                    + 0.5 * libm::exp(-(x + 0.4) * (x + 0.4) / 0.01)
            })
            .unwrap();
        for kernel in [
            InteractionKernel::cubic(),
            InteractionKernel::opinion_dynamics(0.3, 0.8).unwrap(),
            InteractionKernel::attraction_repulsion(),
        ] {
            let config = SolverConfig::new(0.02, grid, times, u0.clone()).unwrap();
            let u = solve_mean_field(&kernel, &config).unwrap();
            for n in 1..times.len() {
                assert!((u.mass(n) - u.mass(n - 1)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn linear_kernel_gaussian_is_stationary() {
        let nu = 0.25;
        let grid = SpaceGrid::new(-3.5, 3.5, 256).unwrap();
        let times = TimeGrid::new(1.0, 1000).unwrap();
        let u0 = gaussian(&grid, 0.0, nu);
        let config = SolverConfig::new(nu, grid, times, u0.clone()).unwrap();
        let u = solve_mean_field(&InteractionKernel::linear(), &config).unwrap();
        let drift = (0..times.len())
            .flat_map(|n| u.snapshot(n).iter().zip(&u0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        assert!(drift < 1e-3, "{drift}");
    }

    #[test]
    fn cfl_violation_names_required_step() {
        let grid = SpaceGrid::new(-1.0, 1.0, 64).unwrap();
        let times = TimeGrid::new(1.0, 2).unwrap();
        let u0 = grid
            .density_from_fn(|x| if x.abs() < 0.9 { 1.0 } else { 0.0 })
            .unwrap();
        let kernel = InteractionKernel::polynomial(vec![0.0, 1000.0]).unwrap();
        let config = SolverConfig::new(0.1, grid, times, u0).unwrap();
        match solve_mean_field(&kernel, &config) {
            Err(Error::Cfl { dt, required, .. }) => assert!(required < dt),
            other => panic!("expected CFL error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_initial_mass() {
        let grid = SpaceGrid::new(-1.0, 1.0, 16).unwrap();
        let times = TimeGrid::new(1.0, 10).unwrap();
        assert!(SolverConfig::new(0.1, grid, times, vec![1.0; 17]).is_err());
        assert!(SolverConfig::new(0.0, grid, times, vec![0.5; 17]).is_err());
    }
}
