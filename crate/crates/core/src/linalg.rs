use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

const CHUNK: usize = 512;

/// Accumulates `Σ r rᵀ` over pushed rows in blocked matrix products.
pub(crate) struct Gram {
    out: DMatrix<f64>,
    chunk: DMatrix<f64>,
    filled: usize,
}

impl Gram {
    pub(crate) fn new(width: usize) -> Self {
        Self {
            out: DMatrix::zeros(width, width),
            chunk: DMatrix::zeros(CHUNK, width),
            filled: 0,
        }
    }

    pub(crate) fn push(&mut self, scale: f64, row: &[f64]) {
        for (k, r) in row.iter().enumerate() {
            self.chunk[(self.filled, k)] = scale * r;
        }
        self.filled += 1;
        if self.filled == CHUNK {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.filled > 0 {
            let rows = self.chunk.rows(0, self.filled);
            self.out.gemm(1.0, &rows.transpose(), &rows, 1.0);
            self.filled = 0;
        }
    }

    /// The symmetrized sum.
    pub(crate) fn finish(mut self) -> DMatrix<f64> {
        self.flush();
        (&self.out + self.out.transpose()) * 0.5
    }
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue.
pub(crate) fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| e.eigenvalues[j].total_cmp(&e.eigenvalues[i]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| e.eigenvalues[i]));
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| e.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub(crate) fn symmetry_error(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        (m - m.transpose()).amax()
    }
}
