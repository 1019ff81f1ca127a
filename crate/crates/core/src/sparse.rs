//! Compressed sparse row storage and direct solves.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

const RESIDUAL_TOL: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Square matrix from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(dim: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        Self::from_triplets_rect(dim, dim, entries)
    }

    pub fn from_triplets_rect(
        nrows: usize,
        ncols: usize,
        entries: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(row, col, _) in entries {
            if row >= nrows || col >= ncols {
                return Err(Error::IndexOutOfRange {
                    row,
                    col,
                    nrows,
                    ncols,
                });
            }
            counts[row + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; entries.len()];
        let mut vals = vec![0.0; entries.len()];
        let mut next = counts.clone();
        for &(row, col, v) in entries {
            cols[next[row]] = col;
            vals[next[row]] = v;
            next[row] += 1;
        }
        let mut offsets = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        offsets.push(0);
        let mut row_buf: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            row_buf.clear();
            row_buf.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            row_buf.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &row_buf {
                if indices.len() > offsets[i] && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            offsets,
            indices,
            values,
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            offsets: vec![0; nrows + 1],
            indices: vec![],
            values: vec![],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let r = self.offsets[row]..self.offsets[row + 1];
        match self.indices[r.clone()].binary_search(&col) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets_rect(self.ncols, self.nrows, &t).expect("indices in range")
    }

    pub fn scale(&self, s: f64) -> CsrMatrix {
        CsrMatrix {
            values: self.values.iter().map(|v| s * v).collect(),
            ..self.clone()
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    /// Largest absolute entry difference against another matrix of the same shape.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        let neg: Vec<_> = other.triplets().map(|(i, j, v)| (i, j, -v)).collect();
        let mut all: Vec<_> = self.triplets().collect();
        all.extend(neg);
        let diff = CsrMatrix::from_triplets_rect(self.nrows, self.ncols, &all).expect("same shape");
        diff.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sparse LU factorization with residual-checked solves.
pub struct Factorization {
    matrix: CsrMatrix,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization")
            .field("dim", &self.matrix.nrows)
            .field("nnz", &self.matrix.nnz())
            .finish()
    }
}

pub fn factorize(a: &CsrMatrix) -> Result<Factorization> {
    if a.nrows != a.ncols {
        return Err(Error::DimensionMismatch {
            expected: a.nrows,
            got: a.ncols,
        });
    }
    let triplets: Vec<Triplet<usize, usize, f64>> =
        a.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
    let csc = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &triplets)
        .map_err(|_| Error::SingularMatrix)?;
    let lu = csc.sp_lu().map_err(|_| Error::SingularMatrix)?;
    Ok(Factorization {
        matrix: a.clone(),
        lu,
    })
}

impl Factorization {
    fn apply(&self, rhs: &[f64]) -> Vec<f64> {
        let mut m = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.lu.solve_in_place(m.as_mut());
        (0..rhs.len()).map(|i| m[(i, 0)]).collect()
    }

    /// Solve with iterative refinement; fails unless `‖Ax − b‖ ≤ 1e-10 ‖b‖`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.matrix.nrows;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let bnorm = norm(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut x = self.apply(b);
        for step in 0..=REFINEMENT_STEPS {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularMatrix);
            }
            let ax = self.matrix.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            if norm(&r) <= RESIDUAL_TOL * bnorm {
                return Ok(x);
            }
            if step == REFINEMENT_STEPS {
                break;
            }
            let dx = self.apply(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        Err(Error::SingularMatrix)
    }
}

pub fn solve_direct(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    factorize(a)?.solve(b)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
