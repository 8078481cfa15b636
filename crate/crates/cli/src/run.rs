//! Stages of an experiment and the artifacts each verb writes.

use std::path::{Path, PathBuf};

use meanfield_core::{
    add_relative_noise, assemble_F, assemble_G, build_basis, compare_svd_report,
    compute_rho_general, compute_rho_radial, eig_generalized, empirical_density, l2rho_error,
    lambda_grid, lcurve_select, picard_table, regularizer, simulate_particles, solve_unregularized,
    svd_unweighted, tikhonov_solve, tsvd_solve, weight_kernel, BasisMode, CoefficientEstimate,
    EmpiricalMeasure, Example, FieldSamples, LCurve, RegNorm, RegParams, RegressionSystem,
    SpaceTimeField, SpectralDecomposition,
};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{AtStage, Stage, StageError};
use crate::formats::{self, num, ManifestEntry, MANIFEST_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Solve,
    Assemble,
    Estimate,
    Spectra,
    Picard,
    Sweep,
    Report,
}

/// Output directory that remembers every file written to it.
pub struct Outputs {
    pub dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, StageError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| StageError::new(Stage::Io, format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Path for a new artifact, recorded for the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    /// Writes `manifest.csv` with the size and SHA-256 of every artifact,
    /// sorted by file name.
    pub fn finish(mut self) -> Result<Vec<ManifestEntry>, StageError> {
        self.files.sort();
        let mut entries = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let path = self.dir.join(name);
            let bytes = std::fs::read(&path)
                .map_err(|e| StageError::new(Stage::Io, format!("{}: {e}", path.display())))?;
            entries.push(ManifestEntry {
                file: name.clone(),
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        formats::write_table(
            &self.dir.join("manifest.csv"),
            &MANIFEST_HEADER,
            entries
                .iter()
                .map(|e| vec![e.file.clone(), e.bytes.to_string(), e.sha256.clone()]),
        )?;
        Ok(entries)
    }
}

/// The data, its pair-distance measure and the true kernel.
pub struct Dataset {
    pub example: Example,
    pub u: SpaceTimeField,
    pub rho: EmpiricalMeasure,
}

pub fn load_data(config: &ExperimentConfig) -> Result<Dataset, StageError> {
    let example = config.example()?;
    let u = match &config.pde.data_file {
        Some(path) => formats::read_field(path)?,
        None => example.solve().at(Stage::Solve)?,
    };
    let rho = compute_rho_radial(&u).at(Stage::Measure)?;
    Ok(Dataset { example, u, rho })
}

/// The system on `n` basis functions, with noise added to `b` when configured.
pub fn assemble_system(
    data: &Dataset,
    config: &ExperimentConfig,
    n: usize,
) -> Result<RegressionSystem, StageError> {
    let support = data
        .rho
        .support()
        .ok_or_else(|| StageError::new(Stage::Measure, "empty support"))?;
    let basis = build_basis(support, n, BasisMode::Radial).at(Stage::Assemble)?;
    let mut sys = RegressionSystem::assemble(&data.u, &data.rho, basis, data.example.nu)
        .at(Stage::Assemble)?;
    if config.noise > 0.0 {
        sys.b = add_relative_noise(&sys.b, config.noise, config.seed).at(Stage::Assemble)?;
    }
    Ok(sys)
}

pub struct Estimates {
    pub lcurve: LCurve,
    pub plain: CoefficientEstimate,
    pub tikhonov: CoefficientEstimate,
    pub tsvd: CoefficientEstimate,
}

pub fn decomposition(
    sys: &RegressionSystem,
    norm: RegNorm,
) -> Result<SpectralDecomposition, StageError> {
    match norm {
        RegNorm::Weighted => eig_generalized(&sys.a, &sys.p),
        RegNorm::Unweighted => svd_unweighted(&sys.a),
    }
    .at(Stage::Spectra)
}

/// Plain, L-curve Tikhonov and TSVD estimates in the configured norm.
///
/// Without a configured truncation TSVD keeps the eigenvalues above the
/// L-curve `λ`, scaled to the eigenproblem of the norm.
pub fn estimate(
    sys: &RegressionSystem,
    config: &ExperimentConfig,
) -> Result<Estimates, StageError> {
    let r = &config.regularization;
    let norm = RegNorm::from(r.norm);
    let reg = regularizer(sys, norm);
    let grid = match &r.lambdas {
        Some(l) => l.clone(),
        None => lambda_grid(&sys.a, &reg, r.lambda_count).at(Stage::Estimate)?,
    };
    let lcurve = lcurve_select(&sys.a, &sys.b, &reg, &grid).at(Stage::Estimate)?;
    let tikhonov = tikhonov_solve(&sys.a, &sys.b, &reg, lcurve.lambda).at(Stage::Estimate)?;
    let plain = solve_unregularized(&sys.a, &sys.b).at(Stage::Estimate)?;
    let d = decomposition(sys, norm)?;
    let cut = match norm {
        RegNorm::Weighted => lcurve.lambda,
        RegNorm::Unweighted => lcurve.lambda * sys.basis.dr,
    };
    let m = r
        .truncation
        .unwrap_or_else(|| d.eigenvalues.iter().filter(|l| **l >= cut).count())
        .clamp(1, d.positive_count().max(1));
    let tsvd = tsvd_solve(&d, &sys.b, m).at(Stage::Estimate)?;
    Ok(Estimates {
        lcurve,
        plain,
        tikhonov,
        tsvd,
    })
}

/// Relative `L²(ρ̄)` error of an estimate against the configured kernel.
pub fn recovery_error(data: &Dataset, sys: &RegressionSystem, est: &CoefficientEstimate) -> f64 {
    l2rho_error(&est.c, &sys.basis, &data.example.kernel, &data.rho).value
}

fn write_estimates(
    out: &mut Outputs,
    data: &Dataset,
    sys: &RegressionSystem,
    est: &Estimates,
    norm: RegNorm,
) -> Result<(), StageError> {
    let mut rows = Vec::new();
    for e in [&est.plain, &est.tikhonov, &est.tsvd] {
        let name = e.method.name();
        formats::write_estimate(&out.file(&format!("estimate_{name}.csv")), &sys.basis, e)?;
        let (norm_name, lambda, m) = match e.reg_params {
            RegParams::Plain { .. } => (String::new(), String::new(), String::new()),
            RegParams::Tikhonov { lambda, .. } => {
                (norm.name().to_string(), num(lambda), String::new())
            }
            RegParams::Tsvd { m, .. } => (norm.name().to_string(), String::new(), m.to_string()),
        };
        rows.push(vec![
            name.to_string(),
            norm_name,
            lambda,
            m,
            num(e.loss),
            num(recovery_error(data, sys, e)),
        ]);
    }
    formats::write_table(
        &out.file("recovery.csv"),
        &["method", "norm", "lambda", "truncation", "loss", "error"],
        rows,
    )?;
    let idx = est.lcurve.index;
    formats::write_table(
        &out.file("lcurve.csv"),
        &["lambda", "excess", "loss", "norm", "curvature", "selected"],
        est.lcurve.points.iter().enumerate().map(|(k, p)| {
            vec![
                num(p.lambda),
                num(p.excess),
                num(p.loss),
                num(p.norm),
                num(p.curvature),
                (k == idx).to_string(),
            ]
        }),
    )
}

fn write_spectra(out: &mut Outputs, sys: &RegressionSystem) -> Result<(), StageError> {
    for norm in [RegNorm::Unweighted, RegNorm::Weighted] {
        let d = decomposition(sys, norm)?;
        formats::write_spectra(&out.file(&format!("spectra_{}.csv", norm.name())), &d)?;
    }
    Ok(())
}

fn write_picard(out: &mut Outputs, sys: &RegressionSystem) -> Result<(), StageError> {
    for norm in [RegNorm::Unweighted, RegNorm::Weighted] {
        let d = decomposition(sys, norm)?;
        let table = picard_table(&d, &sys.b).at(Stage::Picard)?;
        formats::write_picard(&out.file(&format!("picard_{}.csv", norm.name())), &table)?;
    }
    let rows = compare_svd_report(sys).at(Stage::Picard)?;
    let blank = || vec![String::new(); 3];
    formats::write_table(
        &out.file("svd_comparison.csv"),
        &[
            "i",
            "sigma",
            "b_proj",
            "ratio",
            "weighted_sigma",
            "weighted_b_proj",
            "weighted_ratio",
            "weighted_ge_unweighted",
        ],
        rows.iter().map(|r| {
            let mut row = vec![
                r.index.to_string(),
                num(r.unweighted.sigma),
                num(r.unweighted.b_proj),
                num(r.unweighted.ratio),
            ];
            row.extend(
                r.weighted
                    .map_or_else(blank, |w| vec![num(w.sigma), num(w.b_proj), num(w.ratio)]),
            );
            row.push(r.weighted_ge_unweighted.to_string());
            row
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub weighted_min: f64,
    pub weighted_max: f64,
    pub error: f64,
}

/// One row per basis size, computed concurrently and returned in the order
/// of `config.basis.sweep`.
pub fn sweep(data: &Dataset, config: &ExperimentConfig) -> Result<Vec<SweepRow>, StageError> {
    let run = |n: usize| -> Result<SweepRow, StageError> {
        let sys = assemble_system(data, config, n)?;
        let u = svd_unweighted(&sys.a).at(Stage::Sweep)?;
        let w = eig_generalized(&sys.a, &sys.p).at(Stage::Sweep)?;
        let est = estimate(&sys, config)?;
        Ok(SweepRow {
            n,
            lambda_min: u.eigenvalues[n - 1],
            lambda_max: u.eigenvalues[0],
            weighted_min: w.eigenvalues.min(),
            weighted_max: w.eigenvalues.max(),
            error: recovery_error(data, &sys, &est.tikhonov),
        })
    };
    std::thread::scope(|s| {
        let handles: Vec<_> = config
            .basis
            .sweep
            .iter()
            .map(|&n| s.spawn(move || run(n)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(StageError::new(Stage::Sweep, "worker panicked")))
            })
            .collect()
    })
}

fn write_sweep(out: &mut Outputs, rows: &[SweepRow]) -> Result<(), StageError> {
    formats::write_table(
        &out.file("sweep.csv"),
        &[
            "n",
            "lambda_min",
            "lambda_max",
            "ratio",
            "weighted_lambda_min",
            "weighted_lambda_max",
            "error",
        ],
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                num(r.lambda_min),
                num(r.lambda_max),
                num(r.lambda_min / r.lambda_max),
                num(r.weighted_min),
                num(r.weighted_max),
                num(r.error),
            ]
        }),
    )
}

fn write_particles(
    out: &mut Outputs,
    data: &Dataset,
    config: &ExperimentConfig,
) -> Result<(), StageError> {
    let Some(pc) = &config.particles else {
        return Ok(());
    };
    let ex = &data.example;
    let times = *data.u.times();
    let ens = simulate_particles(&ex.kernel, pc.count, ex.nu, times, &ex.initial, config.seed)
        .at(Stage::Particles)?;
    formats::write_particles(&out.file("particles.csv"), &ens)?;
    let grid = *data.u.grid();
    let mut values = Vec::with_capacity(grid.len() * times.len());
    for n in 0..times.len() {
        values.extend(empirical_density(ens.snapshot(n), &grid).at(Stage::Particles)?);
    }
    let density = FieldSamples::new(grid, times, values).at(Stage::Particles)?;
    let density = SpaceTimeField::new(density).at(Stage::Particles)?;
    formats::write_field(&out.file("particle_density.csv"), &density)
}

/// Pair-distance kernels on the support, two nodes beyond its edge.
fn write_kernels(out: &mut Outputs, data: &Dataset) -> Result<(), StageError> {
    let dx = data.u.grid().dx();
    let support = data
        .rho
        .support()
        .ok_or_else(|| StageError::new(Stage::Measure, "empty support"))?;
    let half = ((support.hi / dx).round() as usize + 2).min(data.u.grid().nx());
    let general = compute_rho_general(&data.u).at(Stage::Measure)?;
    let g = assemble_G(&data.u, half).at(Stage::Assemble)?;
    let f = assemble_F(&data.u, half).at(Stage::Assemble)?;
    let (r, _) = weight_kernel(&g, &data.rho).at(Stage::Assemble)?;
    let (q, _) = weight_kernel(&f, &general).at(Stage::Assemble)?;
    for k in [&g, &r, &f, &q] {
        formats::write_kernel_matrix(&out.file(&format!("kernel_{}.csv", k.kind.name())), k)?;
    }
    Ok(())
}

/// Runs `verb` and writes its artifacts plus `manifest.csv` into the
/// configured output directory.
pub fn run(verb: Verb, config: &ExperimentConfig) -> Result<Vec<ManifestEntry>, StageError> {
    config.validate()?;
    let mut out = Outputs::create(&config.output)?;
    let data = load_data(config)?;
    let norm = RegNorm::from(config.regularization.norm);
    match verb {
        Verb::Solve => {
            formats::write_field(&out.file("data.csv"), &data.u)?;
            write_particles(&mut out, &data, config)?;
        }
        Verb::Assemble => {
            formats::write_measure(&out.file("measure.csv"), &data.rho)?;
            let sys = assemble_system(&data, config, config.basis.n)?;
            for f in formats::SYSTEM_FILES {
                out.file(f);
            }
            formats::write_system(&out.dir, &sys)?;
            write_kernels(&mut out, &data)?;
        }
        Verb::Estimate => {
            let sys = assemble_system(&data, config, config.basis.n)?;
            let est = estimate(&sys, config)?;
            write_estimates(&mut out, &data, &sys, &est, norm)?;
        }
        Verb::Spectra => write_spectra(&mut out, &assemble_system(&data, config, config.basis.n)?)?,
        Verb::Picard => write_picard(&mut out, &assemble_system(&data, config, config.basis.n)?)?,
        Verb::Sweep => write_sweep(&mut out, &sweep(&data, config)?)?,
        Verb::Report => return run_experiment_with(config, data, out),
    }
    out.finish()
}

/// The full pipeline: data, measure, system bundle, spectra, Picard tables,
/// estimates, recovery summary, basis sweep and the resolved configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ManifestEntry>, StageError> {
    run(Verb::Report, config)
}

fn run_experiment_with(
    config: &ExperimentConfig,
    data: Dataset,
    mut out: Outputs,
) -> Result<Vec<ManifestEntry>, StageError> {
    let norm = RegNorm::from(config.regularization.norm);
    let resolved = ExperimentConfig {
        output: PathBuf::from("."),
        ..config.clone()
    };
    std::fs::write(out.file("config.toml"), resolved.to_toml()).at(Stage::Io)?;
    formats::write_field(&out.file("data.csv"), &data.u)?;
    write_particles(&mut out, &data, config)?;
    formats::write_measure(&out.file("measure.csv"), &data.rho)?;
    let sys = assemble_system(&data, config, config.basis.n)?;
    for f in formats::SYSTEM_FILES {
        out.file(f);
    }
    formats::write_system(&out.dir, &sys)?;
    write_spectra(&mut out, &sys)?;
    write_picard(&mut out, &sys)?;
    let est = estimate(&sys, config)?;
    write_estimates(&mut out, &data, &sys, &est, norm)?;
    write_sweep(&mut out, &sweep(&data, config)?)?;
    out.finish()
}
