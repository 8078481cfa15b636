//! CSV readers and writers for every artifact.
//!
//! Floats are written with their shortest round-trip representation, so
//! every file parses back to the exact values.

use std::fs::File;
use std::path::Path;

use meanfield_core::{
    build_basis, BasisMode, BasisSpec, CoefficientEstimate, EmpiricalMeasure, FieldSamples,
    KernelMatrix, KernelMatrixKind, OffsetGrid, ParticleEnsemble, PicardRow, PicardTable,
    RegressionSystem, SpaceGrid, SpaceTimeField, SpectralDecomposition, Support, TimeGrid,
};
use nalgebra::{DMatrix, DVector};

use crate::error::{AtStage, Stage, StageError};

type Rows = Vec<csv::StringRecord>;

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> StageError {
    StageError::new(Stage::Io, format!("{}: {e}", path.display()))
}

/// Writes a header and rows of already formatted fields.
pub fn write_table(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), StageError> {
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| io_error(path, e))?;
    w.write_record(header).map_err(|e| io_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Reads every record after the header, checking the header matches.
pub fn read_table(path: &Path, header: &[&str]) -> Result<Rows, StageError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let found = r.headers().map_err(|e| io_error(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(io_error(
            path,
            format!(
                "expected header {}, found {}",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    r.records()
        .collect::<Result<Rows, _>>()
        .map_err(|e| io_error(path, e))
}

fn field<T: std::str::FromStr>(
    path: &Path,
    rec: &csv::StringRecord,
    k: usize,
) -> Result<T, StageError>
where
    T::Err: std::fmt::Display,
{
    let raw = rec
        .get(k)
        .ok_or_else(|| io_error(path, format!("record {rec:?} has no column {k}")))?;
    raw.trim()
        .parse()
        .map_err(|e| io_error(path, format!("bad value {raw:?}: {e}")))
}

fn bool_field(path: &Path, rec: &csv::StringRecord, k: usize) -> Result<bool, StageError> {
    match rec.get(k).map(str::trim) {
        Some("true") | Some("1") => Ok(true),
        Some("false") | Some("0") => Ok(false),
        other => Err(io_error(path, format!("bad flag {other:?}"))),
    }
}

/// Distinct values of a column in order of first appearance, assuming
/// contiguous runs.
fn runs(values: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &v in values {
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

pub const FIELD_HEADER: [&str; 3] = ["t", "x", "u"];

pub fn write_field(path: &Path, u: &SpaceTimeField) -> Result<(), StageError> {
    let grid = u.grid();
    let times = u.times();
    let rows = (0..times.len()).flat_map(|n| {
        let t = num(times.t(n));
        let s = u.snapshot(n);
        (0..grid.len()).map(move |i| vec![t.clone(), num(grid.x(i)), num(s[i])])
    });
    write_table(path, &FIELD_HEADER, rows)
}

/// Reads a time-major `t,x,u` file on uniform grids starting at `t = 0`.
pub fn read_field(path: &Path) -> Result<SpaceTimeField, StageError> {
    let rows = read_table(path, &FIELD_HEADER)?;
    let mut t = Vec::with_capacity(rows.len());
    let mut x = Vec::with_capacity(rows.len());
    let mut u = Vec::with_capacity(rows.len());
    for rec in &rows {
        t.push(field::<f64>(path, rec, 0)?);
        x.push(field::<f64>(path, rec, 1)?);
        u.push(field::<f64>(path, rec, 2)?);
    }
    let ts = runs(&t);
    if ts.len() < 2 || x.len() % ts.len() != 0 {
        return Err(io_error(path, "need at least two complete snapshots"));
    }
    let nodes = x.len() / ts.len();
    if nodes < 3 {
        return Err(io_error(path, "need at least three space nodes"));
    }
    let grid = SpaceGrid::new(x[0], x[nodes - 1], nodes - 1).at(Stage::Io)?;
    let times = TimeGrid::new(ts[ts.len() - 1], ts.len() - 1).at(Stage::Io)?;
    let dx = grid.dx();
    let dt = times.dt();
    for (k, rec_t) in t.iter().enumerate() {
        let (n, i) = (k / nodes, k % nodes);
        if (rec_t - times.t(n)).abs() > 1e-9 * dt || (x[k] - grid.x(i)).abs() > 1e-9 * dx {
            return Err(io_error(
                path,
                format!("row {} is off the uniform grid", k + 2),
            ));
        }
    }
    let samples = FieldSamples::new(grid, times, u).at(Stage::Io)?;
    SpaceTimeField::new(samples).map_err(|e| io_error(path, e))
}

pub const PARTICLE_HEADER: [&str; 3] = ["t", "particle_id", "x"];

pub fn write_particles(path: &Path, ens: &ParticleEnsemble) -> Result<(), StageError> {
    let rows = (0..ens.times.len()).flat_map(|n| {
        let t = num(ens.times.t(n));
        let s = ens.snapshot(n);
        ens.ids
            .iter()
            .zip(s)
            .map(move |(id, x)| vec![t.clone(), id.to_string(), num(*x)])
    });
    write_table(path, &PARTICLE_HEADER, rows)
}

/// Reads snapshots written by [`write_particles`]; `nu` and `seed` are not
/// part of the file.
pub fn read_particles(path: &Path, nu: f64, seed: u64) -> Result<ParticleEnsemble, StageError> {
    let rows = read_table(path, &PARTICLE_HEADER)?;
    let mut t = Vec::with_capacity(rows.len());
    let mut positions = Vec::with_capacity(rows.len());
    for rec in &rows {
        t.push(field::<f64>(path, rec, 0)?);
        positions.push(field::<f64>(path, rec, 2)?);
    }
    let first = t.iter().take_while(|v| Some(*v) == t.first()).count();
    let ids: Vec<u64> = rows[..first]
        .iter()
        .map(|r| field(path, r, 1))
        .collect::<Result<_, _>>()?;
    let ts = runs(&t);
    if ts.len() < 2 || ids.is_empty() {
        return Err(io_error(path, "need at least two snapshots"));
    }
    let times = TimeGrid::new(ts[ts.len() - 1], ts.len() - 1).at(Stage::Io)?;
    for (k, rec) in rows.iter().enumerate() {
        if field::<u64>(path, rec, 1)? != ids[k % ids.len()] {
            return Err(io_error(
                path,
                format!("row {} breaks the particle order", k + 2),
            ));
        }
    }
    ParticleEnsemble::from_parts(times, ids, nu, seed, positions).map_err(|e| io_error(path, e))
}

pub const MEASURE_HEADER: [&str; 3] = ["x", "rho", "in_support"];

pub fn write_measure(path: &Path, m: &EmpiricalMeasure) -> Result<(), StageError> {
    let rows = (0..m.grid.len()).map(|k| {
        vec![
            num(m.grid.position(k)),
            num(m.density[k]),
            m.support_mask[k].to_string(),
        ]
    });
    write_table(path, &MEASURE_HEADER, rows)
}

/// Reads a measure; the lattice is radial when the first offset is zero.
/// The support mask comes from the file, the threshold is the default one.
pub fn read_measure(path: &Path) -> Result<EmpiricalMeasure, StageError> {
    let rows = read_table(path, &MEASURE_HEADER)?;
    let mut x = Vec::with_capacity(rows.len());
    let mut rho = Vec::with_capacity(rows.len());
    let mut mask = Vec::with_capacity(rows.len());
    for rec in &rows {
        x.push(field::<f64>(path, rec, 0)?);
        rho.push(field::<f64>(path, rec, 1)?);
        mask.push(bool_field(path, rec, 2)?);
    }
    let spacing = x
        .iter()
        .cloned()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let grid = match x.first() {
        Some(v) if *v == 0.0 && x.len() >= 2 => OffsetGrid::radial(spacing, x.len() - 1),
        Some(v) if *v < 0.0 && x.len() % 2 == 1 => OffsetGrid::signed(spacing, x.len() / 2),
        _ => return Err(io_error(path, "offsets are neither radial nor signed")),
    };
    for (k, xv) in x.iter().enumerate() {
        if (xv - grid.position(k)).abs() > 1e-9 * spacing {
            return Err(io_error(path, format!("row {} is off the lattice", k + 2)));
        }
    }
    let mut m = EmpiricalMeasure::new(grid, rho).map_err(|e| io_error(path, e))?;
    m.support_mask = mask;
    Ok(m)
}

pub const KERNEL_HEADER: [&str; 3] = ["kind", "n", "T"];

pub fn write_kernel_matrix(path: &Path, k: &KernelMatrix) -> Result<(), StageError> {
    let n = k.values.nrows();
    let meta = vec![
        k.kind.name().to_string(),
        n.to_string(),
        num(k.time_horizon),
    ];
    let rows = std::iter::once(meta)
        .chain((0..n).map(|i| (0..n).map(|j| num(k.values[(i, j)])).collect()));
    write_table(path, &KERNEL_HEADER, rows)
}

/// Reads a kernel matrix; the lattice spacing is not stored in the file.
pub fn read_kernel_matrix(path: &Path, spacing: f64) -> Result<KernelMatrix, StageError> {
    let rows = read_table(path, &KERNEL_HEADER)?;
    let meta = rows
        .first()
        .ok_or_else(|| io_error(path, "missing kind,n,T record"))?;
    let kind = match meta.get(0) {
        Some("G_bar") => KernelMatrixKind::GBar,
        Some("R_bar") => KernelMatrixKind::RBar,
        Some("F_bar") => KernelMatrixKind::FBar,
        Some("Q_bar") => KernelMatrixKind::QBar,
        other => return Err(io_error(path, format!("unknown kernel kind {other:?}"))),
    };
    let n: usize = field(path, meta, 1)?;
    let time_horizon: f64 = field(path, meta, 2)?;
    if rows.len() != n + 1 || n == 0 {
        return Err(io_error(path, format!("expected {n} matrix rows")));
    }
    let mut values = DMatrix::zeros(n, n);
    for (i, rec) in rows[1..].iter().enumerate() {
        if rec.len() != n {
            return Err(io_error(
                path,
                format!("row {} has {} entries, expected {n}", i + 3, rec.len()),
            ));
        }
        for j in 0..n {
            values[(i, j)] = field(path, rec, j)?;
        }
    }
    let grid = match kind {
        KernelMatrixKind::GBar | KernelMatrixKind::RBar => OffsetGrid::radial(spacing, n - 1),
        KernelMatrixKind::FBar | KernelMatrixKind::QBar if n % 2 == 1 => {
            OffsetGrid::signed(spacing, n / 2)
        }
        _ => return Err(io_error(path, "signed kernels need an odd size")),
    };
    Ok(KernelMatrix {
        kind,
        grid,
        values,
        time_horizon,
    })
}

pub const SYSTEM_FILES: [&str; 4] = ["A.csv", "b.csv", "P.csv", "basis.csv"];

/// Writes `A.csv`, `b.csv`, `P.csv` and `basis.csv` into `dir`.
pub fn write_system(dir: &Path, sys: &RegressionSystem) -> Result<(), StageError> {
    let n = sys.b.len();
    let a = (0..n).flat_map(|i| (0..n).map(move |j| (i, j)));
    write_table(
        &dir.join("A.csv"),
        &["i", "j", "a"],
        a.map(|(i, j)| vec![i.to_string(), j.to_string(), num(sys.a[(i, j)])]),
    )?;
    write_table(
        &dir.join("b.csv"),
        &["i", "b"],
        (0..n).map(|i| vec![i.to_string(), num(sys.b[i])]),
    )?;
    write_table(
        &dir.join("P.csv"),
        &["i", "p"],
        (0..n).map(|i| vec![i.to_string(), num(sys.p[i])]),
    )?;
    let mode = match sys.basis.mode {
        BasisMode::Radial => "radial",
        BasisMode::General => "general",
    };
    write_table(
        &dir.join("basis.csv"),
        &["i", "r_lo", "r_hi", "mode"],
        (0..n).map(|i| {
            let (lo, hi) = sys.basis.cell(i);
            vec![i.to_string(), num(lo), num(hi), mode.to_string()]
        }),
    )
}

fn read_vector(path: &Path, name: &str) -> Result<DVector<f64>, StageError> {
    let rows = read_table(path, &["i", name])?;
    let mut v = DVector::zeros(rows.len());
    for (k, rec) in rows.iter().enumerate() {
        if field::<usize>(path, rec, 0)? != k {
            return Err(io_error(path, format!("row {} is out of order", k + 2)));
        }
        v[k] = field(path, rec, 1)?;
    }
    Ok(v)
}

pub fn read_basis(path: &Path) -> Result<BasisSpec, StageError> {
    let rows = read_table(path, &["i", "r_lo", "r_hi", "mode"])?;
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(io_error(path, "empty basis")),
    };
    let mode = match first.get(3) {
        Some("radial") => BasisMode::Radial,
        Some("general") => BasisMode::General,
        other => return Err(io_error(path, format!("unknown basis mode {other:?}"))),
    };
    let support = Support {
        lo: field(path, first, 1)?,
        hi: field(path, last, 2)?,
    };
    let basis = build_basis(support, rows.len(), mode).map_err(|e| io_error(path, e))?;
    for (i, rec) in rows.iter().enumerate() {
        let (lo, hi) = basis.cell(i);
        let (flo, fhi): (f64, f64) = (field(path, rec, 1)?, field(path, rec, 2)?);
        if (flo - lo).abs() > 1e-12 * basis.dr || (fhi - hi).abs() > 1e-12 * basis.dr {
            return Err(io_error(
                path,
                format!("cell {i} is not on a uniform partition"),
            ));
        }
    }
    Ok(basis)
}

/// Reads a system bundle; `nu` is not part of it.
pub fn read_system(dir: &Path, nu: f64) -> Result<RegressionSystem, StageError> {
    let basis = read_basis(&dir.join("basis.csv"))?;
    let n = basis.len();
    let b = read_vector(&dir.join("b.csv"), "b")?;
    let p = read_vector(&dir.join("P.csv"), "p")?;
    let path = dir.join("A.csv");
    let rows = read_table(&path, &["i", "j", "a"])?;
    if b.len() != n || p.len() != n || rows.len() != n * n {
        return Err(io_error(
            dir,
            format!("bundle sizes disagree with the {n}-element basis"),
        ));
    }
    let mut a = DMatrix::zeros(n, n);
    for rec in &rows {
        let (i, j): (usize, usize) = (field(&path, rec, 0)?, field(&path, rec, 1)?);
        if i >= n || j >= n {
            return Err(io_error(&path, format!("index ({i}, {j}) outside {n}x{n}")));
        }
        a[(i, j)] = field(&path, rec, 2)?;
    }
    Ok(RegressionSystem { a, b, p, basis, nu })
}

pub const ESTIMATE_HEADER: [&str; 3] = ["i", "r_mid", "c_i"];

pub fn write_estimate(
    path: &Path,
    basis: &BasisSpec,
    est: &CoefficientEstimate,
) -> Result<(), StageError> {
    let mids = basis.midpoints();
    write_table(
        path,
        &ESTIMATE_HEADER,
        (0..est.c.len()).map(|i| vec![i.to_string(), num(mids[i]), num(est.c[i])]),
    )
}

/// Cell midpoints and coefficients.
pub fn read_estimate(path: &Path) -> Result<(Vec<f64>, DVector<f64>), StageError> {
    let rows = read_table(path, &ESTIMATE_HEADER)?;
    let mut mids = Vec::with_capacity(rows.len());
    let mut c = DVector::zeros(rows.len());
    for (k, rec) in rows.iter().enumerate() {
        mids.push(field(path, rec, 1)?);
        c[k] = field(path, rec, 2)?;
    }
    Ok((mids, c))
}

pub const PICARD_HEADER: [&str; 5] = ["i", "sigma", "b_proj", "ratio", "weighted"];

pub fn write_picard(path: &Path, table: &PicardTable) -> Result<(), StageError> {
    write_table(
        path,
        &PICARD_HEADER,
        table.rows.iter().map(|r| {
            vec![
                r.index.to_string(),
                num(r.sigma),
                num(r.b_proj),
                num(r.ratio),
                table.weighted.to_string(),
            ]
        }),
    )
}

pub fn read_picard(path: &Path) -> Result<PicardTable, StageError> {
    let rows = read_table(path, &PICARD_HEADER)?;
    let mut out = Vec::with_capacity(rows.len());
    let mut weighted = false;
    for rec in &rows {
        weighted = bool_field(path, rec, 4)?;
        out.push(PicardRow {
            index: field(path, rec, 0)?,
            sigma: field(path, rec, 1)?,
            b_proj: field(path, rec, 2)?,
            ratio: field(path, rec, 3)?,
        });
    }
    Ok(PicardTable {
        weighted,
        rows: out,
    })
}

pub const SPECTRA_HEADER: [&str; 3] = ["i", "lambda", "weighted"];

pub fn write_spectra(path: &Path, d: &SpectralDecomposition) -> Result<(), StageError> {
    write_table(
        path,
        &SPECTRA_HEADER,
        d.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, l)| vec![i.to_string(), num(*l), d.weighted.to_string()]),
    )
}

/// Whether the spectrum is weighted, and its eigenvalues.
pub fn read_spectra(path: &Path) -> Result<(bool, DVector<f64>), StageError> {
    let rows = read_table(path, &SPECTRA_HEADER)?;
    let mut weighted = false;
    let mut l = DVector::zeros(rows.len());
    for (k, rec) in rows.iter().enumerate() {
        l[k] = field(path, rec, 1)?;
        weighted = bool_field(path, rec, 2)?;
    }
    Ok((weighted, l))
}

pub const MANIFEST_HEADER: [&str; 3] = ["file", "bytes", "sha256"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, StageError> {
    read_table(path, &MANIFEST_HEADER)?
        .iter()
        .map(|rec| {
            Ok(ManifestEntry {
                file: field(path, rec, 0)?,
                bytes: field(path, rec, 1)?,
                sha256: field(path, rec, 2)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use meanfield_core::{
        assemble_G, compute_rho_radial, eig_generalized, picard_table, simulate_particles,
        solve_unregularized, Example, InitialSampler, InteractionKernel,
    };

    fn small_field() -> SpaceTimeField {
        let mut ex = Example::cubic();
        ex.nx = 64;
        ex.nt = 40;
        ex.t_end = 0.2;
        ex.solve().unwrap()
    }

    #[test]
    fn field_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let u = small_field();
        write_field(&path, &u).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,x,u\n0.0,-1.0,"));
        assert_eq!(read_field(&path).unwrap(), u);
    }

    #[test]
    fn malformed_field_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "t,x,rho\n0,0,1\n").unwrap();
        let err = read_field(&path).unwrap_err();
        assert_eq!(err.stage, Stage::Io);
        assert!(err.message.contains("expected header"));
        std::fs::write(
            &path,
            "t,x,u\n0,0,0.5\n0,1,0.5\n0,3,0.5\n1,0,0.5\n1,1,0.5\n1,3,0.5\n",
        )
        .unwrap();
        assert!(read_field(&path)
            .unwrap_err()
            .message
            .contains("off the uniform grid"));
    }

    #[test]
    fn particles_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("particles.csv");
        let ens = simulate_particles(
            &InteractionKernel::cubic(),
            7,
            0.01,
            TimeGrid::new(0.1, 5).unwrap(),
            &InitialSampler::Gaussian { mean: 0.0, sd: 0.2 },
            3,
        )
        .unwrap();
        write_particles(&path, &ens).unwrap();
        assert_eq!(read_particles(&path, 0.01, 3).unwrap(), ens);
    }

    #[test]
    fn measure_and_kernel_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let u = small_field();
        let rho = compute_rho_radial(&u).unwrap();
        let path = dir.path().join("measure.csv");
        write_measure(&path, &rho).unwrap();
        assert_eq!(read_measure(&path).unwrap(), rho);
        let general = meanfield_core::compute_rho_general(&u).unwrap();
        write_measure(&path, &general).unwrap();
        assert_eq!(read_measure(&path).unwrap(), general);

        let g = assemble_G(&u, 20).unwrap();
        let path = dir.path().join("G_bar.csv");
        write_kernel_matrix(&path, &g).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text.starts_with("kind,n,T\nG_bar,21,0.2\n"),
            "{}",
            &text[..40]
        );
        assert_eq!(read_kernel_matrix(&path, u.grid().dx()).unwrap(), g);
    }

    #[test]
    fn system_bundle_and_tables_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let u = small_field();
        let rho = compute_rho_radial(&u).unwrap();
        let basis = build_basis(rho.support().unwrap(), 6, BasisMode::Radial).unwrap();
        let sys = RegressionSystem::assemble(&u, &rho, basis, 0.01).unwrap();
        write_system(dir.path(), &sys).unwrap();
        assert_eq!(read_system(dir.path(), 0.01).unwrap(), sys);

        let est = solve_unregularized(&sys.a, &sys.b).unwrap();
        let path = dir.path().join("estimate.csv");
        write_estimate(&path, &sys.basis, &est).unwrap();
        let (mids, c) = read_estimate(&path).unwrap();
        assert_eq!((mids, c), (sys.basis.midpoints(), est.c));

        let d = eig_generalized(&sys.a, &sys.p).unwrap();
        let path = dir.path().join("spectra.csv");
        write_spectra(&path, &d).unwrap();
        assert_eq!(read_spectra(&path).unwrap(), (true, d.eigenvalues.clone()));

        let table = picard_table(&d, &sys.b).unwrap();
        let path = dir.path().join("picard.csv");
        write_picard(&path, &table).unwrap();
        let back = read_picard(&path).unwrap();
        assert_eq!(back.weighted, table.weighted);
        for (x, y) in back.rows.iter().zip(&table.rows) {
            assert_eq!((x.index, x.sigma, x.b_proj), (y.index, y.sigma, y.b_proj));
            assert!(x.ratio == y.ratio || (x.ratio.is_nan() && y.ratio.is_nan()));
        }
    }

    #[test]
    fn floats_keep_every_bit() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, f64::MIN_POSITIVE, 5e-324] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(num(f64::NAN), "NaN");
    }
}
