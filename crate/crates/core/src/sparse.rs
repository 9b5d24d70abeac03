//! Sparse storage and kernels.
//!
//! Matrices are assembled in coordinate form, converted once to CSR and from
//! then on only their value arrays change. The CSR index arrays live behind an
//! [`Arc`] so that every matrix built from the same [`SparsityPattern`] shares
//! one copy of `row_ptr`/`col_idx`; value updates can never touch them.
//!
//! Indices are 0-based. Column indices inside a CSR row are strictly
//! increasing.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Coordinate-format matrix. Used for assembly only.
#[derive(Debug, Clone, PartialEq)]
pub struct CooMatrix {
    n_rows: usize,
    n_cols: usize,
    row_idx: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CooMatrix {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_idx: Vec::new(),
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        row_idx: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if col_idx.len() != row_idx.len() {
            return Err(Error::Dimension {
                context: "COO column indices",
                expected: row_idx.len(),
                found: col_idx.len(),
            });
        }
        if values.len() != row_idx.len() {
            return Err(Error::Dimension {
                context: "COO values",
                expected: row_idx.len(),
                found: values.len(),
            });
        }
        check_bounds(&row_idx, n_rows)?;
        check_bounds(&col_idx, n_cols)?;
        Ok(Self {
            n_rows,
            n_cols,
            row_idx,
            col_idx,
            values,
        })
    }

    /// Extracts the nonzero entries of a row-major dense matrix.
    pub fn from_dense(n_rows: usize, n_cols: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n_rows * n_cols {
            return Err(Error::Dimension {
                context: "dense matrix",
                expected: n_rows * n_cols,
                found: dense.len(),
            });
        }
        let mut coo = Self::new(n_rows, n_cols);
        for r in 0..n_rows {
            for c in 0..n_cols {
                let v = dense[r * n_cols + c];
                if v != 0.0 {
                    coo.row_idx.push(r);
                    coo.col_idx.push(c);
                    coo.values.push(v);
                }
            }
        }
        Ok(coo)
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) -> Result<()> {
        if row >= self.n_rows {
            return Err(Error::IndexOutOfRange {
                index: row,
                bound: self.n_rows,
            });
        }
        if col >= self.n_cols {
            return Err(Error::IndexOutOfRange {
                index: col,
                bound: self.n_cols,
            });
        }
        self.row_idx.push(row);
        self.col_idx.push(col);
        self.values.push(value);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows * self.n_cols];
        for ((&r, &c), &v) in self.row_idx.iter().zip(&self.col_idx).zip(&self.values) {
            out[r * self.n_cols + c] += v;
        }
        out
    }

    pub fn to_csr(&self) -> Result<CsrMatrix> {
        coo_to_csr(self)
    }
}

fn check_bounds(idx: &[usize], bound: usize) -> Result<()> {
    match idx.iter().find(|&&i| i >= bound) {
        Some(&index) => Err(Error::IndexOutOfRange { index, bound }),
        None => Ok(()),
    }
}

/// Converts coordinate storage to CSR. Duplicate coordinates are rejected.
pub fn coo_to_csr(a: &CooMatrix) -> Result<CsrMatrix> {
    let nnz = a.nnz();
    let mut order: Vec<usize> = (0..nnz).collect();
    order.sort_unstable_by_key(|&p| (a.row_idx[p], a.col_idx[p]));

    let mut row_ptr = vec![0usize; a.n_rows + 1];
    let mut col_idx = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    let mut prev: Option<(usize, usize)> = None;
    for &p in &order {
        let key = (a.row_idx[p], a.col_idx[p]);
        if prev == Some(key) {
            return Err(Error::DuplicateEntry {
                row: key.0,
                col: key.1,
            });
        }
        prev = Some(key);
        row_ptr[key.0 + 1] += 1;
        col_idx.push(key.1);
        values.push(a.values[p]);
    }
    for r in 0..a.n_rows {
        row_ptr[r + 1] += row_ptr[r];
    }
    let structure = CsrStructure::new_unchecked(a.n_rows, a.n_cols, row_ptr, col_idx);
    Ok(CsrMatrix {
        structure: Arc::new(structure),
        values,
    })
}

/// Index arrays of a CSR matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrStructure {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    // position of (k, k) per row; empty for non-square matrices
    diag: Vec<Option<usize>>,
}

impl CsrStructure {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 {
            return Err(Error::Dimension {
                context: "CSR row pointers",
                expected: n_rows + 1,
                found: row_ptr.len(),
            });
        }
        if row_ptr[0] != 0 || row_ptr[n_rows] != col_idx.len() {
            return Err(Error::InvalidArgument(
                "row pointers must start at 0 and end at nnz".into(),
            ));
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument(
                "row pointers must be nondecreasing".into(),
            ));
        }
        for r in 0..n_rows {
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(
                    "column indices must be strictly increasing within a row".into(),
                ));
            }
        }
        check_bounds(&col_idx, n_cols)?;
        Ok(Self::new_unchecked(n_rows, n_cols, row_ptr, col_idx))
    }

    fn new_unchecked(n_rows: usize, n_cols: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>) -> Self {
        let diag = if n_rows == n_cols {
            (0..n_rows)
                .map(|r| {
                    let lo = row_ptr[r];
                    col_idx[lo..row_ptr[r + 1]]
                        .binary_search(&r)
                        .ok()
                        .map(|p| lo + p)
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            diag,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Value-array position of the diagonal entry of row `k`, if stored.
    pub fn diagonal_position(&self, k: usize) -> Option<usize> {
        self.diag.get(k).copied().flatten()
    }

    pub fn has_full_diagonal(&self) -> bool {
        self.n_rows == self.n_cols && self.diag.iter().all(Option::is_some)
    }

    /// Value-array position of `(row, col)`, if stored.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.n_rows {
            return None;
        }
        let lo = self.row_ptr[row];
        self.col_idx[lo..self.row_ptr[row + 1]]
            .binary_search(&col)
            .ok()
            .map(|p| lo + p)
    }

    /// Returns a copy of this structure with every missing diagonal entry
    /// inserted, and for each old position its new position.
    fn with_full_diagonal(&self) -> (CsrStructure, Vec<usize>) {
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz() + self.n_rows);
        let mut remap = Vec::with_capacity(self.nnz());
        row_ptr.push(0);
        for r in 0..self.n_rows {
            let mut inserted = false;
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[p];
                if !inserted && c >= r {
                    if c != r {
                        col_idx.push(r);
                    }
                    inserted = true;
                }
                remap.push(col_idx.len());
                col_idx.push(c);
            }
            if !inserted {
                col_idx.push(r);
            }
            row_ptr.push(col_idx.len());
        }
        (
            CsrStructure::new_unchecked(self.n_rows, self.n_cols, row_ptr, col_idx),
            remap,
        )
    }
}

/// Compressed sparse row matrix with a shareable structure.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    structure: Arc<CsrStructure>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let structure = CsrStructure::new(n_rows, n_cols, row_ptr, col_idx)?;
        Self::with_structure(Arc::new(structure), values)
    }

    pub fn with_structure(structure: Arc<CsrStructure>, values: Vec<f64>) -> Result<Self> {
        if values.len() != structure.nnz() {
            return Err(Error::Dimension {
                context: "CSR values",
                expected: structure.nnz(),
                found: values.len(),
            });
        }
        Ok(Self { structure, values })
    }

    pub fn zeros_with_structure(structure: Arc<CsrStructure>) -> Self {
        let values = vec![0.0; structure.nnz()];
        Self { structure, values }
    }

    pub fn identity(n: usize) -> Self {
        let structure = CsrStructure::new_unchecked(n, n, (0..=n).collect(), (0..n).collect());
        Self {
            structure: Arc::new(structure),
            values: vec![1.0; n],
        }
    }

    /// Empty `n_rows x n_cols` matrix.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        let structure = CsrStructure::new_unchecked(n_rows, n_cols, vec![0; n_rows + 1], Vec::new());
        Self {
            structure: Arc::new(structure),
            values: Vec::new(),
        }
    }

    /// Builds from a row-major dense array, keeping nonzeros only.
    pub fn from_dense(n_rows: usize, n_cols: usize, dense: &[f64]) -> Result<Self> {
        CooMatrix::from_dense(n_rows, n_cols, dense)?.to_csr()
    }

    pub fn n_rows(&self) -> usize {
        self.structure.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.structure.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows() == self.n_cols()
    }

    pub fn structure(&self) -> &Arc<CsrStructure> {
        &self.structure
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.structure.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.structure.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the value array only; the structure is immutable.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// True when both matrices hold the very same structure allocation.
    pub fn shares_structure(&self, other: &CsrMatrix) -> bool {
        Arc::ptr_eq(&self.structure, &other.structure)
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.structure.row_ptr[r];
        let hi = self.structure.row_ptr[r + 1];
        (&self.structure.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.structure
            .position(row, col)
            .map_or(0.0, |p| self.values[p])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.n_rows().min(self.n_cols());
        (0..n).map(|k| self.get(k, k)).collect()
    }

    /// Iterates `(row, col, value)` in row order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows()).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n_rows()];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n_cols() {
            return Err(Error::Dimension {
                context: "spmv input",
                expected: self.n_cols(),
                found: x.len(),
            });
        }
        if y.len() != self.n_rows() {
            return Err(Error::Dimension {
                context: "spmv output",
                expected: self.n_rows(),
                found: y.len(),
            });
        }
        self.spmv_unchecked(x, y);
        Ok(())
    }

    /// Kernel without dimension checks; callers guarantee the lengths.
    pub(crate) fn spmv_unchecked(&self, x: &[f64], y: &mut [f64]) {
        let rp = &self.structure.row_ptr;
        let ci = &self.structure.col_idx;
        for (r, out) in y.iter_mut().enumerate() {
            let (lo, hi) = (rp[r], rp[r + 1]);
            *out = ci[lo..hi]
                .iter()
                .zip(&self.values[lo..hi])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    }

    /// `y += alpha * A x`, no dimension checks.
    pub(crate) fn spmv_add_unchecked(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        let rp = &self.structure.row_ptr;
        let ci = &self.structure.col_idx;
        for (r, out) in y.iter_mut().enumerate() {
            let (lo, hi) = (rp[r], rp[r + 1]);
            let acc: f64 = ci[lo..hi]
                .iter()
                .zip(&self.values[lo..hi])
                .map(|(&c, &v)| v * x[c])
                .sum();
            *out += alpha * acc;
        }
    }

    /// Transpose. Read as CSC, this is the original matrix in column order.
    pub fn transpose(&self) -> CsrMatrix {
        let (m, n) = (self.n_rows(), self.n_cols());
        let nnz = self.nnz();
        let mut row_ptr = vec![0usize; n + 1];
        for &c in self.col_idx() {
            row_ptr[c + 1] += 1;
        }
        for c in 0..n {
            row_ptr[c + 1] += row_ptr[c];
        }
        let mut next = row_ptr.clone();
        let mut col_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        for r in 0..m {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let dst = next[c];
                col_idx[dst] = r;
                values[dst] = v;
                next[c] += 1;
            }
        }
        CsrMatrix {
            structure: Arc::new(CsrStructure::new_unchecked(n, m, row_ptr, col_idx)),
            values,
        }
    }

    /// Copy of this matrix with an explicit (possibly zero) entry on every
    /// diagonal position. Returns `self` cloned when already complete.
    pub fn with_full_diagonal(&self) -> CsrMatrix {
        if self.structure.has_full_diagonal() {
            return self.clone();
        }
        let (structure, remap) = self.structure.with_full_diagonal();
        let mut values = vec![0.0; structure.nnz()];
        for (old, &new) in remap.iter().enumerate() {
            values[new] = self.values[old];
        }
        CsrMatrix {
            structure: Arc::new(structure),
            values,
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n_cols();
        let mut out = vec![0.0; self.n_rows() * n];
        for (r, c, v) in self.iter() {
            out[r * n + c] = v;
        }
        out
    }

    pub fn to_coo(&self) -> CooMatrix {
        let mut coo = CooMatrix::new(self.n_rows(), self.n_cols());
        for (r, c, v) in self.iter() {
            coo.row_idx.push(r);
            coo.col_idx.push(c);
            coo.values.push(v);
        }
        coo
    }
}

/// Transposes `a`, so that its CSR arrays read as the CSC form of `a`.
pub fn csr_to_csc(a: &CsrMatrix) -> CsrMatrix {
    a.transpose()
}

/// Logical identity of a structural nonzero in a model generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TransitionId {
    /// Player `player` taking action `action` in state `state`.
    Action {
        player: usize,
        action: usize,
        state: usize,
    },
    /// Exogenous move `from -> to`.
    Nature { from: usize, to: usize },
    Diagonal { state: usize },
}

/// Frozen CSR structure plus the value-array address of each logical
/// transition.
#[derive(Debug, Clone)]
pub struct SparsityPattern {
    structure: Arc<CsrStructure>,
    addresses: BTreeMap<TransitionId, usize>,
}

impl SparsityPattern {
    /// Builds the pattern of an `n x n` generator from its off-diagonal
    /// transitions. Every diagonal position is added as
    /// [`TransitionId::Diagonal`]. Two transitions landing on the same
    /// `(row, col)` are an error.
    pub fn build<I>(n: usize, transitions: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, TransitionId)>,
    {
        let mut entries: Vec<(usize, usize, TransitionId)> = transitions.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= n {
                return Err(Error::IndexOutOfRange { index: r, bound: n });
            }
            if c >= n {
                return Err(Error::IndexOutOfRange { index: c, bound: n });
            }
        }
        entries.extend((0..n).map(|k| (k, k, TransitionId::Diagonal { state: k })));
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut addresses = BTreeMap::new();
        for (pos, w) in entries.iter().enumerate() {
            if pos > 0 && (entries[pos - 1].0, entries[pos - 1].1) == (w.0, w.1) {
                return Err(Error::DuplicateEntry { row: w.0, col: w.1 });
            }
            if addresses.insert(w.2, pos).is_some() {
                return Err(Error::InvalidArgument("transition id used twice".into()));
            }
            row_ptr[w.0 + 1] += 1;
            col_idx.push(w.1);
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            structure: Arc::new(CsrStructure::new_unchecked(n, n, row_ptr, col_idx)),
            addresses,
        })
    }

    pub fn structure(&self) -> &Arc<CsrStructure> {
        &self.structure
    }

    pub fn n_states(&self) -> usize {
        self.structure.n_rows
    }

    pub fn address(&self, id: TransitionId) -> Option<usize> {
        self.addresses.get(&id).copied()
    }

    pub fn addresses(&self) -> impl Iterator<Item = (TransitionId, usize)> + '_ {
        self.addresses.iter().map(|(&k, &v)| (k, v))
    }

    /// All-zero matrix on this pattern.
    pub fn zeros(&self) -> CsrMatrix {
        CsrMatrix::zeros_with_structure(self.structure.clone())
    }

    /// Writes `assignments` into `matrix`'s value array. The matrix must be
    /// built on this pattern. Nothing is written if any address is unknown.
    pub fn update_values(
        &self,
        matrix: &mut CsrMatrix,
        assignments: &[(TransitionId, f64)],
    ) -> Result<()> {
        if !Arc::ptr_eq(&self.structure, &matrix.structure) && *self.structure != *matrix.structure {
            return Err(Error::PatternMismatch);
        }
        let mut resolved = Vec::with_capacity(assignments.len());
        for &(id, value) in assignments {
            let pos = self.address(id).ok_or(Error::UnknownAddress)?;
            resolved.push((pos, value));
        }
        for (pos, value) in resolved {
            matrix.values[pos] = value;
        }
        Ok(())
    }
}
