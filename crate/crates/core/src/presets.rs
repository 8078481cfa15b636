//! The three built-in examples: cubic, opinion dynamics and
//! attraction-repulsion, with domains wide enough that the density stays
//! below 1e-10 at both ends over the whole horizon.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::grid::{SpaceGrid, SpaceTimeField, TimeGrid};
use crate::kernel::InteractionKernel;
use crate::particles::{InitialSampler, MixtureComponent};
use crate::pde::{solve_mean_field, SolverConfig};

pub const BUILTIN_NAMES: [&str; 3] = ["cubic", "opinion_dynamics", "attraction_repulsion"];

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub name: &'static str,
    pub kernel: InteractionKernel,
    pub nu: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub t_end: f64,
    pub nt: usize,
    pub initial: InitialSampler,
}

fn two_bumps(center: f64, sd: f64) -> InitialSampler {
    InitialSampler::Mixture(alloc::vec![
        MixtureComponent {
            weight: 0.5,
            mean: -center,
            sd
        },
        MixtureComponent {
            weight: 0.5,
            mean: center,
            sd
        },
    ])
}

impl Example {
    pub fn cubic() -> Self {
        Self {
            name: "cubic",
            kernel: InteractionKernel::cubic(),
            nu: 0.01,
            x_min: -1.0,
            x_max: 1.0,
            nx: 256,
            t_end: 1.0,
            nt: 1000,
            initial: two_bumps(0.3, 0.08),
        }
    }

    pub fn opinion_dynamics() -> Self {
        Self {
            name: "opinion_dynamics",
            kernel: InteractionKernel::opinion_dynamics(0.4, 0.8).expect("valid thresholds"),
            nu: 0.01,
            x_min: -1.5,
            x_max: 1.5,
            nx: 384,
            t_end: 1.0,
            nt: 1000,
            initial: two_bumps(0.3, 0.08),
        }
    }

    pub fn attraction_repulsion() -> Self {
        Self {
            name: "attraction_repulsion",
            kernel: InteractionKernel::attraction_repulsion(),
            nu: 0.01,
            x_min: -2.0,
            x_max: 2.0,
            nx: 256,
            t_end: 1.0,
            nt: 1000,
            initial: two_bumps(0.5, 0.1),
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "cubic" => Ok(Self::cubic()),
            "opinion_dynamics" => Ok(Self::opinion_dynamics()),
            "attraction_repulsion" => Ok(Self::attraction_repulsion()),
            _ => Err(invalid(alloc::format!("unknown example {name}"))),
        }
    }

    pub fn all() -> Vec<Self> {
        BUILTIN_NAMES
            .iter()
            .map(|n| Self::builtin(n).expect("builtin"))
            .collect()
    }

    /// Same example with `nx` and `nt` multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            nx: self.nx * factor,
            nt: self.nt * factor,
            ..self.clone()
        }
    }

    pub fn space_grid(&self) -> Result<SpaceGrid> {
        SpaceGrid::new(self.x_min, self.x_max, self.nx)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_end, self.nt)
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let grid = self.space_grid()?;
        let u0 = grid.density_from_fn(|x| self.initial.density(x))?;
        SolverConfig::new(self.nu, grid, self.time_grid()?, u0)
    }

    pub fn solve(&self) -> Result<SpaceTimeField> {
        solve_mean_field(&self.kernel, &self.solver_config()?)
    }
}
