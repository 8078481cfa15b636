//! Euler-Maruyama simulation of the interacting particle system
//! `dX_i = (1/N) Σ_j K(X_j - X_i) dt + sqrt(2ν) dB_i`.
//!
//! Every particle draws from its own ChaCha stream keyed by its id, so a
//! trajectory depends only on the particle's id and on the whole ensemble's
//! positions, never on storage order.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal, StandardUniform};

use crate::error::{invalid, Error, Result};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::kernel::{InteractionKernel, Piece};

/// Pairs closer than this exert no force on each other under a singular kernel.
pub const SINGULAR_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSampler {
    Gaussian { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    Mixture(Vec<MixtureComponent>),
}

impl InitialSampler {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Gaussian { mean, sd } => mean.is_finite() && *sd >= 0.0 && sd.is_finite(),
            Self::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            Self::Mixture(parts) => {
                !parts.is_empty()
                    && parts.iter().all(|c| {
                        c.weight >= 0.0 && c.mean.is_finite() && c.sd >= 0.0 && c.sd.is_finite()
                    })
                    && parts.iter().map(|c| c.weight).sum::<f64>() > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("malformed initial distribution"))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Self::Gaussian { mean, sd } => mean + sd * normal(rng),
            Self::Uniform { low, high } => {
                let s: f64 = StandardUniform.sample(rng);
                low + (high - low) * s
            }
            Self::Mixture(parts) => {
                let total: f64 = parts.iter().map(|c| c.weight).sum();
                let mut pick: f64 = StandardUniform.sample(rng);
                pick *= total;
                let mut chosen = &parts[parts.len() - 1];
                for c in parts {
                    if pick < c.weight {
                        chosen = c;
                        break;
                    }
                    pick -= c.weight;
                }
                chosen.mean + chosen.sd * normal(rng)
            }
        }
    }

    /// Probability density of the distribution; point masses give 0.
    pub fn density(&self, x: f64) -> f64 {
        let gauss = |mean: f64, sd: f64| {
            if sd > 0.0 {
                let z = (x - mean) / sd;
                libm::exp(-0.5 * z * z) / (sd * libm::sqrt(2.0 * core::f64::consts::PI))
            } else {
                0.0
            }
        };
        match self {
            Self::Gaussian { mean, sd } => gauss(*mean, *sd),
            Self::Uniform { low, high } if high > low && x >= *low && x <= *high => {
                1.0 / (high - low)
            }
            Self::Uniform { .. } => 0.0,
            Self::Mixture(parts) => {
                let total: f64 = parts.iter().map(|c| c.weight).sum();
                parts
                    .iter()
                    .map(|c| c.weight * gauss(c.mean, c.sd))
                    .sum::<f64>()
                    / total
            }
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Particle positions at every time of a grid, stored `[time][particle]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub times: TimeGrid,
    pub ids: Vec<u64>,
    pub nu: f64,
    pub seed: u64,
    positions: Vec<f64>,
}

impl ParticleEnsemble {
    /// Reassembles an ensemble from positions stored `[time][particle]`.
    pub fn from_parts(
        times: TimeGrid,
        ids: Vec<u64>,
        nu: f64,
        seed: u64,
        positions: Vec<f64>,
    ) -> Result<Self> {
        if positions.len() != ids.len() * times.len() {
            return Err(invalid("positions do not match the ids and time grid"));
        }
        Ok(Self {
            times,
            ids,
            nu,
            seed,
            positions,
        })
    }

    pub fn n_particles(&self) -> usize {
        self.ids.len()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn snapshot(&self, n: usize) -> &[f64] {
        let m = self.ids.len();
        &self.positions[n * m..(n + 1) * m]
    }
}

/// Draws `n_particles` initial positions (ids `0..n`) and simulates.
pub fn simulate_particles(
    kernel: &InteractionKernel,
    n_particles: usize,
    nu: f64,
    times: TimeGrid,
    initial: &InitialSampler,
    seed: u64,
) -> Result<ParticleEnsemble> {
    let (ids, start) = initial_positions(n_particles, initial, seed)?;
    let mut positions = Vec::with_capacity(n_particles * times.len());
    simulate_from(kernel, &start, &ids, nu, times, seed, |_, x| {
        positions.extend_from_slice(x)
    })?;
    Ok(ParticleEnsemble {
        times,
        ids,
        nu,
        seed,
        positions,
    })
}

/// Ids `0..n` and their initial positions, each drawn from the particle's stream.
pub fn initial_positions(
    n_particles: usize,
    initial: &InitialSampler,
    seed: u64,
) -> Result<(Vec<u64>, Vec<f64>)> {
    initial.validate()?;
    let ids: Vec<u64> = (0..n_particles as u64).collect();
    // Initial draws use the stream after the noise streams so they never overlap.
    let start = ids
        .iter()
        .map(|&id| initial.sample(&mut stream(seed, id | 1 << 63)))
        .collect();
    Ok((ids, start))
}

/// Runs Euler-Maruyama from explicit positions, calling `observe(step, x)` at
/// every snapshot including the initial one.
pub fn simulate_from(
    kernel: &InteractionKernel,
    start: &[f64],
    ids: &[u64],
    nu: f64,
    times: TimeGrid,
    seed: u64,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let n = start.len();
    if n < 2 {
        return Err(invalid("need at least 2 particles"));
    }
    if ids.len() != n {
        return Err(invalid("one id per particle is required"));
    }
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(invalid("noise level must be nonnegative"));
    }
    if start.iter().any(|x| !x.is_finite()) {
        return Err(invalid("initial positions must be finite"));
    }
    let dt = times.dt();
    let noise = libm::sqrt(2.0 * nu * dt);
    let mut rngs: Vec<ChaCha8Rng> = ids.iter().map(|&id| stream(seed, id)).collect();
    let mut x = start.to_vec();
    let mut force = vec![0.0; n];
    let mut forces = ForceEvaluator::new(kernel, n);
    observe(0, &x);
    for step in 1..=times.nt() {
        forces.evaluate(&x, &mut force);
        for ((xi, fi), rng) in x.iter_mut().zip(&force).zip(rngs.iter_mut()) {
            *xi += fi * dt + noise * normal(rng);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                what: "particle simulation",
                step,
            });
        }
        observe(step, &x);
    }
    Ok(())
}

struct ForceEvaluator<'a> {
    kernel: &'a InteractionKernel,
    order: Vec<usize>,
    sorted: Vec<f64>,
    // prefix[m][j] = Σ_{l<j} sorted[l]^m
    prefix: Vec<Vec<f64>>,
}

impl<'a> ForceEvaluator<'a> {
    fn new(kernel: &'a InteractionKernel, n: usize) -> Self {
        let degree = kernel
            .pieces()
            .map(|p| p.iter().map(|q| q.coeffs.len()).max().unwrap_or(0))
            .unwrap_or(0);
        Self {
            kernel,
            order: (0..n).collect(),
            sorted: vec![0.0; n],
            prefix: vec![vec![0.0; n + 1]; degree],
        }
    }

    fn evaluate(&mut self, x: &[f64], out: &mut [f64]) {
        match self.kernel.pieces() {
            Some(pieces) => self.fast(pieces, x, out),
            None => direct_forces(self.kernel, x, out),
        }
    }

    fn fast(&mut self, pieces: &[Piece], x: &[f64], out: &mut [f64]) {
        let n = x.len();
        self.order.sort_unstable_by(|&a, &b| x[a].total_cmp(&x[b]));
        for (s, &i) in self.sorted.iter_mut().zip(&self.order) {
            *s = x[i];
        }
        for (m, pre) in self.prefix.iter_mut().enumerate() {
            pre[0] = 0.0;
            for j in 0..n {
                pre[j + 1] = pre[j] + libm::pow(self.sorted[j], m as f64);
            }
        }
        let sorted = &self.sorted;
        let prefix = &self.prefix;
        let range_sum = |m: usize, lo: usize, hi: usize| prefix[m][hi] - prefix[m][lo];
        // first index with sorted[j] > t (strict) or >= t
        let above = |t: f64| sorted.partition_point(|&y| y <= t);
        let at_least = |t: f64| sorted.partition_point(|&y| y < t);
        let inv_n = 1.0 / n as f64;
        for (i, xi) in x.iter().enumerate() {
            let mut f = 0.0;
            for piece in pieces {
                if piece.coeffs.iter().all(|c| *c == 0.0) {
                    continue;
                }
                // Neighbours above: r = y - x in [start, end) (r > 0 for the first piece).
                let lo = if piece.start == 0.0 {
                    above(*xi)
                } else {
                    at_least(xi + piece.start)
                };
                let hi = at_least(xi + piece.end).max(lo);
                // Neighbours below: r = x - y in [start, end), y in (x - end, x - start].
                let blo = above(xi - piece.end);
                let bhi = if piece.start == 0.0 {
                    at_least(*xi)
                } else {
                    above(xi - piece.start)
                }
                .max(blo);
                f += poly_shift_sum(&piece.coeffs, *xi, |m| range_sum(m, lo, hi), 1.0);
                f -= poly_shift_sum(&piece.coeffs, *xi, |m| range_sum(m, blo, bhi), -1.0);
            }
            out[i] = f * inv_n;
        }
    }
}

/// `Σ_j Σ_k c_k (s (y_j - x))^k` given power sums `S_m = Σ_j y_j^m`.
fn poly_shift_sum(coeffs: &[f64], x: f64, power_sum: impl Fn(usize) -> f64, s: f64) -> f64 {
    let mut total = 0.0;
    for (k, c) in coeffs.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        // (s (y - x))^k = s^k Σ_m C(k,m) y^m (-x)^(k-m)
        let mut acc = 0.0;
        let mut binom = 1.0;
        for m in 0..=k {
            acc += binom * power_sum(m) * libm::pow(-x, (k - m) as f64);
            binom = binom * (k - m) as f64 / (m + 1) as f64;
        }
        total += c * libm::pow(s, k as f64) * acc;
    }
    total
}

fn direct_forces(kernel: &InteractionKernel, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    let inv_n = 1.0 / n as f64;
    for (i, xi) in x.iter().enumerate() {
        let mut f = 0.0;
        for (j, xj) in x.iter().enumerate() {
            let d = xj - xi;
            if j != i && d.abs() >= SINGULAR_CUTOFF {
                f += kernel.vector_kernel(d);
            }
        }
        out[i] = f * inv_n;
    }
}

/// Histogram on the node control volumes, normalized to unit trapezoid mass.
pub fn empirical_density(positions: &[f64], grid: &SpaceGrid) -> Result<Vec<f64>> {
    let dx = grid.dx();
    let mut counts = vec![0usize; grid.len()];
    let mut inside = 0usize;
    for x in positions {
        if !(*x >= grid.x_min() && *x <= grid.x_max()) {
            continue;
        }
        let i = libm::round((x - grid.x_min()) / dx) as usize;
        counts[i.min(grid.nx())] += 1;
        inside += 1;
    }
    if inside == 0 {
        return Err(invalid("no particle lies inside the grid"));
    }
    Ok(counts
        .iter()
        .zip(grid.weights())
        .map(|(&c, w)| c as f64 / (inside as f64 * w))
        .collect())
}
