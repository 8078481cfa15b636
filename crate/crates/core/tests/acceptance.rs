//! End-to-end acceptance checks, one line per criterion.

use std::error::Error;
use std::process::ExitCode;
use std::result::Result;
use std::thread;
use std::time::Instant;

use meanfield_core::*;
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

type Check = Result<(bool, String), Box<dyn Error>>;

struct Cubic {
    ex: Example,
    u: SpaceTimeField,
    rho: EmpiricalMeasure,
    support: Support,
}

impl Cubic {
    fn new() -> Result<Self, Box<dyn Error>> {
        let ex = Example::cubic();
        let u = ex.solve()?;
        let rho = compute_rho_radial(&u)?;
        let support = rho.support().ok_or("empty support")?;
        Ok(Self {
            ex,
            u,
            rho,
            support,
        })
    }

    fn system(&self, n: usize) -> Result<RegressionSystem, Box<dyn Error>> {
        let basis = build_basis(self.support, n, BasisMode::Radial)?;
        Ok(RegressionSystem::assemble(
            &self.u, &self.rho, basis, self.ex.nu,
        )?)
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn gaussian_closed_forms_match() -> Check {
    let nu = 0.25;
    let grid = SpaceGrid::new(-4.0, 4.0, 256)?;
    let start = InitialSampler::Mixture(vec![
        MixtureComponent {
            weight: 0.7,
            mean: -0.8,
            sd: 0.3,
        },
        MixtureComponent {
            weight: 0.3,
            mean: 1.0,
            sd: 0.4,
        },
    ]);
    let u0 = grid.density_from_fn(|x| start.density(x))?;
    let config = SolverConfig::new(nu, grid, TimeGrid::new(12.0, 2400)?, u0)?;
    let long = solve_mean_field(&InteractionKernel::linear(), &config)?;
    let profile = long.snapshot(long.times().nt()).to_vec();
    let w = grid.weights();
    let mean: f64 = (0..grid.len()).map(|i| w[i] * grid.x(i) * profile[i]).sum();
    let var: f64 = (0..grid.len())
        .map(|i| w[i] * (grid.x(i) - mean).powi(2) * profile[i])
        .sum();

    let data = SpaceTimeField::stationary(grid, TimeGrid::new(1.0, 1000)?, &profile)?;
    let rho = compute_rho_general(&data)?;
    let exact = gaussian_closed_forms(nu)?;
    let floor = 1e-4 * rho.max();
    let region: Vec<usize> = (0..rho.grid.len())
        .filter(|&k| rho.density[k] >= floor)
        .collect();
    let rho_err = region
        .iter()
        .map(|&k| rel_diff(rho.density[k], exact.rho_general(rho.grid.position(k))))
        .fold(0.0, f64::max);

    let h = region
        .iter()
        .map(|&k| rho.grid.offset(k).unsigned_abs())
        .max()
        .unwrap_or(0);
    let f = assemble_F(&data, h)?;
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for k in 0..f.grid.len() {
        for l in 0..f.grid.len() {
            let e = exact.f_bar(f.grid.position(k), f.grid.position(l));
            diff = diff.max((f.values[(k, l)] - e).abs());
            scale = scale.max(e.abs());
        }
    }
    let f_err = diff / scale;
    let var_err = rel_diff(var, nu);
    Ok((
        rho_err <= 1e-3 && f_err <= 1e-3 && var_err <= 1e-3,
        format!(
            "stationary variance/nu-1 {var_err:.1e}, rho pointwise rel {rho_err:.1e}, F sup rel {f_err:.1e}"
        ),
    ))
}

fn mercer_suite() -> Check {
    let mut ok = true;
    let mut worst_eig = f64::NEG_INFINITY;
    let mut worst_off = 0.0f64;
    let mut default_off = 0.0f64;
    for ex in Example::all() {
        let u = ex.solve()?;
        let radial = compute_rho_radial(&u)?;
        let general = compute_rho_general(&u)?;
        let dx = u.grid().dx();
        let reach = radial.support().ok_or("empty support")?.hi;
        let h = ((reach / dx).ceil() as usize + 4).min(u.grid().nx());
        let g = assemble_G(&u, h)?;
        let f = assemble_F(&u, h)?;
        let (r, _) = weight_kernel(&g, &radial)?;
        let (q, _) = weight_kernel(&f, &general)?;
        for k in [&g, &f, &r, &q] {
            let (lo, hi) = k.eigen_range();
            worst_eig = worst_eig.max(-lo / hi);
            ok &= lo >= -1e-10 * hi && k.symmetry_error() <= 1e-12;
        }
        let off = |mask: &[bool]| {
            let mut m = 0.0f64;
            for i in 0..g.grid.len() {
                for j in 0..g.grid.len() {
                    let (a, b) = (
                        radial.grid.index_of(g.grid.offset(i)).unwrap(),
                        radial.grid.index_of(g.grid.offset(j)).unwrap(),
                    );
                    if !mask[a] || !mask[b] {
                        m = m.max(g.values[(i, j)].abs());
                    }
                }
            }
            m
        };
        default_off = default_off.max(off(&radial.support_mask));
        let mut strict = radial.clone();
        let threshold = 1e-12 * strict.max();
        support_of(&mut strict, threshold)?;
        let o = off(&strict.support_mask);
        worst_off = worst_off.max(o);
        ok &= o <= 1e-10;
    }
    Ok((
        ok,
        format!(
            "worst -min/max eigenvalue {worst_eig:.1e}; G off support (1e-12 max threshold) {worst_off:.1e}, at default threshold {default_off:.1e}"
        ),
    ))
}

fn ill_conditioning() -> Check {
    let mut ok = true;
    let mut ratios = Vec::new();
    for ex in Example::all() {
        let u = ex.solve()?;
        let rho = compute_rho_radial(&u)?;
        let support = rho.support().ok_or("empty support")?;
        let mut prev = f64::INFINITY;
        let mut ratio = 0.0;
        for n in [4, 8, 16, 32, 64] {
            let a = assemble_A(&u, &build_basis(support, n, BasisMode::Radial)?)?;
            let d = svd_unweighted(&a)?;
            let lo = d.eigenvalues[n - 1];
            ok &= lo <= prev + 1e-12;
            prev = lo;
            ratio = lo / d.eigenvalues[0];
        }
        ok &= ratio <= 1e-6;
        ratios.push(format!("{} {ratio:.1e}", ex.name));
    }
    Ok((
        ok,
        format!("lambda_min/lambda_max at n=64: {}", ratios.join(", ")),
    ))
}

fn b_consistency(cubic: &Cubic) -> Check {
    let basis = build_basis(cubic.support, 16, BasisMode::Radial)?;
    let gap = |u: &SpaceTimeField| -> Result<f64, Box<dyn Error>> {
        let b = assemble_b_data(u, &basis, cubic.ex.nu)?;
        let o = assemble_b_oracle(u, &basis, &cubic.ex.kernel)?;
        Ok((&b - &o).norm() / o.norm())
    };
    let coarse = gap(&cubic.u)?;
    let fine = gap(&cubic.ex.refined(2).solve()?)?;
    Ok((
        coarse <= 0.01 && coarse / fine >= 3.0,
        format!(
            "gap {coarse:.2e} at nx=256/nt=1000, {fine:.2e} refined, ratio {:.2}",
            coarse / fine
        ),
    ))
}

fn tsvd_equals_subspace(cubic: &Cubic) -> Check {
    let mut worst = 0.0f64;
    for n in [4, 8] {
        let sys = cubic.system(n)?;
        for d in [svd_unweighted(&sys.a)?, eig_generalized(&sys.a, &sys.p)?] {
            for m in 1..=d.positive_count() {
                let t = tsvd_solve(&d, &sys.b, m)?;
                let c = subspace_minimizer(&sys.a, &sys.b, &rkhs_subspace(&d, m)?)?;
                worst = worst.max((&t.c - &c).norm() / t.c.norm());
            }
        }
    }
    Ok((
        worst <= 1e-12,
        format!("cubic, n in {{4, 8}}, all m, both norms: worst relative gap {worst:.1e}"),
    ))
}

fn weighted_dominance() -> Check {
    let mut ok = true;
    let mut notes = Vec::new();
    for ex in Example::all() {
        let u = ex.solve()?;
        let rho = compute_rho_radial(&u)?;
        let basis = build_basis(rho.support().ok_or("empty support")?, 32, BasisMode::Radial)?;
        let sys = RegressionSystem::assemble(&u, &rho, basis, ex.nu)?;
        let rows = compare_svd_report(&sys)?;
        let lead = &rows[..16];
        ok &= lead.iter().all(|r| r.weighted_ge_unweighted);
        let mean_log = |f: &dyn Fn(&SvdComparisonRow) -> f64| {
            lead.iter().map(|r| f(r).log10()).sum::<f64>() / lead.len() as f64
        };
        let ru = mean_log(&|r| r.unweighted.ratio);
        let rw = mean_log(&|r| r.weighted.map_or(f64::NAN, |w| w.ratio));
        notes.push(format!("{} mean log10 ratio u {ru:.2} w {rw:.2}", ex.name));
    }
    Ok((ok, notes.join("; ")))
}

fn estimate_error(
    sys: &RegressionSystem,
    b: &DVector<f64>,
    cubic: &Cubic,
) -> Result<(f64, f64), Box<dyn Error>> {
    let reg = regularizer(sys, RegNorm::Weighted);
    let grid = lambda_grid(&sys.a, &reg, 60)?;
    let chosen = lcurve_select(&sys.a, b, &reg, &grid)?;
    let tik = tikhonov_solve(&sys.a, b, &reg, chosen.lambda)?;
    let plain = solve_unregularized(&sys.a, b)?;
    let err = |c: &DVector<f64>| l2rho_error(c, &sys.basis, &cubic.ex.kernel, &cubic.rho).value;
    Ok((err(&tik.c), err(&plain.c)))
}

fn recovery(cubic: &Cubic) -> Check {
    let sys = cubic.system(16)?;
    let (clean, _) = estimate_error(&sys, &sys.b, cubic)?;
    let noisy = add_relative_noise(&sys.b, 0.01, 7)?;
    let (reg, plain) = estimate_error(&sys, &noisy, cubic)?;
    Ok((
        clean <= 0.15 && reg < plain,
        format!("clean L-curve error {clean:.3}; 1% noise: regularized {reg:.3} vs unregularized {plain:.3e}"),
    ))
}

fn particle_consistency(cubic: &Cubic) -> Check {
    let ex = &cubic.ex;
    let grid = cubic.u.grid();
    let target = cubic.u.snapshot(ex.nt);
    let w = grid.weights();
    let l1 = |n: usize, seed: u64| -> Result<f64, meanfield_core::Error> {
        let (ids, start) = particles::initial_positions(n, &ex.initial, seed)?;
        let mut last = Vec::new();
        particles::simulate_from(
            &ex.kernel,
            &start,
            &ids,
            ex.nu,
            ex.time_grid()?,
            seed,
            |step, x| {
                if step == ex.nt {
                    last = x.to_vec();
                }
            },
        )?;
        let rho = empirical_density(&last, grid)?;
        Ok((0..grid.len())
            .map(|i| w[i] * (rho[i] - target[i]).abs())
            .sum())
    };
    let mut means = Vec::new();
    for n in [100, 1_000, 10_000] {
        let runs: Vec<Result<f64, meanfield_core::Error>> = thread::scope(|s| {
            let handles: Vec<_> = (0..20u64)
                .map(|seed| s.spawn(move || l1(n, seed)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("particle thread"))
                .collect()
        });
        let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
        means.push(runs.iter().sum::<f64>() / runs.len() as f64);
    }
    let monotone = means.windows(2).all(|p| p[1] <= p[0]);
    Ok((
        means[2] <= 0.1 && monotone,
        format!(
            "mean L1 over 20 seeds: N=1e2 {:.3}, N=1e3 {:.3}, N=1e4 {:.3}",
            means[0], means[1], means[2]
        ),
    ))
}

fn bilinear_chain(cubic: &Cubic) -> Check {
    let sys = cubic.system(16)?;
    let basis = &sys.basis;
    let u = &cubic.u;
    let dx = u.grid().dx();
    let h = ((cubic.support.hi / dx).ceil() as usize + 2).min(u.grid().nx());
    let g = assemble_G(u, h)?;
    let mut rho = cubic.rho.clone();
    support_of(&mut rho, f64::MIN_POSITIVE)?;
    let (r, _) = weight_kernel(&g, &rho)?;
    let wts = g.grid.weights();
    let ks = (0..basis.len())
        .map(|i| basis.element(i).offset_samples(dx, h))
        .collect::<Result<Vec<_>, _>>()?;
    let dens: Vec<f64> = (0..g.grid.len())
        .map(|k| rho.at(g.grid.offset(k)))
        .collect();
    let quad = |m: &DMatrix<f64>, i: usize, j: usize, weight: &dyn Fn(usize) -> f64| {
        let mut s = 0.0;
        for k in 0..g.grid.len() {
            for l in 0..g.grid.len() {
                let (p, q) = (g.grid.offset(k), g.grid.offset(l));
                s +=
                    wts[k] * wts[l] * ks[i].at(p) * ks[j].at(q) * weight(k) * weight(l) * m[(k, l)];
            }
        }
        s
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let i = (rand_core::RngCore::next_u32(&mut rng) as usize) % basis.len();
        let j = (rand_core::RngCore::next_u32(&mut rng) as usize) % basis.len();
        let a = sys.a[(i, j)];
        let via_g = quad(&g.values, i, j, &|_| 1.0);
        let via_r = quad(&r.values, i, j, &|k| dens[k]);
        worst = worst.max(rel_diff(via_g, a)).max(rel_diff(via_r, a));
    }
    Ok((
        worst <= 1e-8,
        format!("5 random pairs at n=16: worst relative gap {worst:.1e}"),
    ))
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let cubic = match Cubic::new() {
        Ok(c) => c,
        Err(e) => {
            println!("setup failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    let checks: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        (
            "Gaussian closed forms",
            Box::new(gaussian_closed_forms_match),
        ),
        ("Mercer/PSD suite", Box::new(mercer_suite)),
        ("ill-conditioning", Box::new(ill_conditioning)),
        ("b-assembly consistency", Box::new(|| b_consistency(&cubic))),
        (
            "TSVD = RKHS subspace",
            Box::new(|| tsvd_equals_subspace(&cubic)),
        ),
        ("weighted vs unweighted", Box::new(weighted_dominance)),
        ("kernel recovery", Box::new(|| recovery(&cubic))),
        (
            "particle-PDE consistency",
            Box::new(|| particle_consistency(&cubic)),
        ),
        ("bilinear-form chain", Box::new(|| bilinear_chain(&cubic))),
    ];
    let mut failed = 0;
    for (k, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!(
            "criterion {} {name}: {} ({detail}) [{:.1}s]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} passed in {:.1}s",
        checks.len() - failed,
        checks.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
