//! Triplet assembly and symmetric positive definite solves.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use thiserror::Error;

/// Relative residual every solve must reach after refinement.
pub const SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("matrix is singular or not positive definite")]
    Singular,
    #[error("relative residual {0:e} above tolerance")]
    Residual(f64),
    #[error("matrix assembly failed: {0}")]
    Assembly(String),
}

/// Sparse symmetric matrix in coordinate form. Duplicate entries are summed.
#[derive(Clone, Debug, Default)]
pub struct SymmetricTriplets {
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SymmetricTriplets {
    pub fn new(dim: usize) -> Self {
        SymmetricTriplets { dim, entries: Vec::new() }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    /// Adds `value` at `(row, col)` and `(col, row)`, once on the diagonal.
    pub fn add_sym(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
        if row != col {
            self.entries.push((col, row, value));
        }
    }

    pub fn extend(&mut self, other: &SymmetricTriplets, row_shift: usize, col_shift: usize, factor: f64) {
        for &(r, c, v) in &other.entries {
            self.entries.push((r + row_shift, c + col_shift, v * factor));
        }
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.entries.iter().map(|&(r, c, v)| x[r] * v * y[c]).sum()
    }

    /// Compressed copy with duplicates merged, as sorted `(row, col, value)`.
    pub fn compressed(&self) -> Vec<(usize, usize, f64)> {
        let mut sorted = self.entries.clone();
        sorted.sort_by_key(|e| (e.1, e.0));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        out
    }
}

/// Solves `A x = b` for the rows/columns in `free`, with `x` fixed to `fixed_values` elsewhere.
///
/// `fixed_values` has full dimension; entries at free indices are ignored. Several right-hand
/// sides share one factorization. The reduced matrix must be symmetric positive definite.
pub struct ReducedSolver {
    free: Vec<usize>,
    position: Vec<Option<usize>>,
    reduced: SparseColMat<usize, f64>,
    reduced_triplets: Vec<(usize, usize, f64)>,
    coupling: Vec<(usize, usize, f64)>,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl ReducedSolver {
    pub fn new(matrix: &SymmetricTriplets, free: &[bool]) -> Result<Self, SolveError> {
        let mut position = vec![None; matrix.dim];
        let mut free_list = Vec::new();
        for (i, &is_free) in free.iter().enumerate() {
            if is_free {
                position[i] = Some(free_list.len());
                free_list.push(i);
            }
        }
        let mut reduced_triplets = Vec::new();
        let mut coupling = Vec::new();
        for (r, c, v) in matrix.compressed() {
            match (position[r], position[c]) {
                (Some(pr), Some(pc)) => reduced_triplets.push((pr, pc, v)),
                (Some(pr), None) => coupling.push((pr, c, v)),
                _ => {}
            }
        }
        let n = free_list.len();
        let trip: Vec<Triplet<usize, usize, f64>> =
            reduced_triplets.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let reduced = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| SolveError::Assembly(format!("{e:?}")))?;
        let llt = reduced.sp_cholesky(Side::Lower).map_err(|_| SolveError::Singular)?;
        Ok(ReducedSolver { free: free_list, position, reduced, reduced_triplets, coupling, llt })
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    /// Solves with right-hand side `rhs` (full dimension) and fixed values; returns the full vector.
    pub fn solve(&self, rhs: &[f64], fixed_values: &[f64]) -> Result<Vec<f64>, SolveError> {
        let n = self.free.len();
        let mut b = vec![0.0; n];
        for (k, &i) in self.free.iter().enumerate() {
            b[k] = rhs[i];
        }
        for &(pr, c, v) in &self.coupling {
            b[pr] -= v * fixed_values[c];
        }
        let x = self.solve_reduced(&b)?;
        let mut full = fixed_values.to_vec();
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = x[k];
        }
        Ok(full)
    }

    fn solve_reduced(&self, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        let n = b.len();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut rhs = Mat::<f64>::zeros(n, 1);
        for i in 0..n {
            rhs[(i, 0)] = b[i];
        }
        let sol = self.llt.solve(&rhs);
        let mut x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut rel = f64::INFINITY;
        for _ in 0..4 {
            let r = self.residual(&x, b);
            rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
            if rel <= SOLVE_TOL * 1e-2 {
                break;
            }
            let mut rm = Mat::<f64>::zeros(n, 1);
            for i in 0..n {
                rm[(i, 0)] = r[i];
            }
            let dx = self.llt.solve(&rm);
            for i in 0..n {
                x[i] += dx[(i, 0)];
            }
        }
        if !rel.is_finite() || rel > SOLVE_TOL {
            let r = self.residual(&x, b);
            rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
            if !rel.is_finite() || rel > SOLVE_TOL {
                return Err(SolveError::Residual(rel));
            }
        }
        Ok(x)
    }

    fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut r = b.to_vec();
        for &(row, col, v) in &self.reduced_triplets {
            r[row] -= v * x[col];
        }
        r
    }

    pub fn position(&self, full_index: usize) -> Option<usize> {
        self.position[full_index]
    }

    pub fn reduced_dim(&self) -> usize {
        self.reduced.nrows()
    }
}
