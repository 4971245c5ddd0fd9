//! Sparse storage and linear solvers.
//!
//! Matrices are assembled into a [`TripletBuffer`] and compressed into a
//! row-sorted [`CsrMatrix`]. The direct path hands the CSR arrays to faer's
//! sparse LU (partial pivoting, COLAMD ordering, supernodal kernels) after
//! an exact power-of-two equilibration, and reuses the symbolic factorization while the sparsity pattern stays fixed,
//! which is the case for every time step on a given mesh.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuRef, LuSymbolicParams, NumericLu, SymbolicLu};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, Par};

use crate::error::{Error, Result};

/// Unsorted `(row, col, value)` entries; duplicates are summed on compression.
#[derive(Debug, Clone)]
pub struct TripletBuffer {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuffer {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, entries: Vec::new() }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, capacity: usize) -> Self {
        Self { n_rows, n_cols, entries: Vec::with_capacity(capacity) }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    /// Appends `scale * block` with its origin shifted to `(row_offset, col_offset)`.
    pub fn push_block(&mut self, block: &CsrMatrix, row_offset: usize, col_offset: usize, scale: f64) {
        self.entries.reserve(block.nnz());
        for i in 0..block.n_rows {
            for (j, v) in block.row(i) {
                self.entries.push((row_offset + i, col_offset + j, scale * v));
            }
        }
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }
}

/// Compresses a triplet buffer into CSR, summing duplicates.
///
/// Structural entries are kept even when their summed value is zero so
/// that repeated assemblies over one mesh share a sparsity pattern.
pub fn compress(t: &TripletBuffer) -> Result<CsrMatrix> {
    let (n_rows, n_cols) = (t.n_rows, t.n_cols);
    let mut counts = vec![0usize; n_rows + 1];
    for &(r, c, _) in &t.entries {
        if r >= n_rows {
            return Err(Error::Shape { what: "triplet row index", expected: n_rows, got: r });
        }
        if c >= n_cols {
            return Err(Error::Shape { what: "triplet column index", expected: n_cols, got: c });
        }
        counts[r + 1] += 1;
    }
    for i in 0..n_rows {
        counts[i + 1] += counts[i];
    }
    let mut next = counts.clone();
    let mut cols = vec![0usize; t.entries.len()];
    let mut vals = vec![0.0; t.entries.len()];
    for &(r, c, v) in &t.entries {
        let k = next[r];
        cols[k] = c;
        vals[k] = v;
        next[r] += 1;
    }

    let mut row_ptr = Vec::with_capacity(n_rows + 1);
    let mut col_idx = Vec::with_capacity(t.entries.len());
    let mut values = Vec::with_capacity(t.entries.len());
    row_ptr.push(0);
    let mut scratch: Vec<(usize, f64)> = Vec::new();
    for i in 0..n_rows {
        scratch.clear();
        scratch
            .extend(cols[counts[i]..counts[i + 1]].iter().copied().zip(vals[counts[i]..counts[i + 1]].iter().copied()));
        // stable sort keeps the summation order deterministic
        scratch.sort_by_key(|&(c, _)| c);
        let mut k = 0;
        while k < scratch.len() {
            let c = scratch[k].0;
            let mut sum = 0.0;
            while k < scratch.len() && scratch[k].0 == c {
                sum += scratch[k].1;
                k += 1;
            }
            col_idx.push(c);
            values.push(sum);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values })
}

/// Compressed sparse row matrix with strictly increasing column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, row_ptr: vec![0; n_rows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self { n_rows: n, n_cols: n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut t = TripletBuffer::new(n_rows, n_cols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        compress(&t).expect("dense rows have consistent indices")
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    /// Stored value at `(i, j)`, zero when the entry is not in the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols, "mul_vec: operand length");
        assert_eq!(y.len(), self.n_rows, "mul_vec: output length");
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletBuffer::with_capacity(self.n_cols, self.n_rows, self.nnz());
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                t.push(j, i, v);
            }
        }
        compress(&t).expect("transpose indices are in range")
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `Σ coef_k · A_k`. Matrices sharing one pattern are combined entrywise;
    /// otherwise the union pattern is built.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> Result<CsrMatrix> {
        let Some(&(_, first)) = terms.first() else {
            return Err(Error::param("linear_combination needs at least one term"));
        };
        for &(_, m) in terms {
            if m.n_rows != first.n_rows || m.n_cols != first.n_cols {
                return Err(Error::Shape { what: "linear combination operand", expected: first.n_rows, got: m.n_rows });
            }
        }
        if terms.iter().all(|(_, m)| m.same_pattern(first)) {
            let mut out = first.clone();
            for (k, v) in out.values.iter_mut().enumerate() {
                *v = terms.iter().map(|&(c, m)| c * m.values[k]).sum();
            }
            return Ok(out);
        }
        let cap = terms.iter().map(|(_, m)| m.nnz()).sum();
        let mut t = TripletBuffer::with_capacity(first.n_rows, first.n_cols, cap);
        for &(c, m) in terms {
            t.push_block(m, 0, 0, c);
        }
        compress(&t)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        d
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// Replaces row `i` by the unit row `e_i`, keeping the pattern.
    /// Inserts the diagonal entry when the pattern lacks it.
    pub(crate) fn set_unit_row(&mut self, i: usize) {
        if self.position(i, i).is_none() {
            self.insert_structural(i, i);
        }
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        for k in range {
            self.values[k] = if self.col_idx[k] == i { 1.0 } else { 0.0 };
        }
    }

    fn insert_structural(&mut self, i: usize, j: usize) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        let k = lo + self.col_idx[lo..hi].partition_point(|&c| c < j);
        self.col_idx.insert(k, j);
        self.values.insert(k, 0.0);
        for p in &mut self.row_ptr[i + 1..] {
            *p += 1;
        }
    }

    /// MatrixMarket coordinate dump (1-based indices).
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        s.push_str("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.n_rows, self.n_cols, self.nnz());
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                let _ = writeln!(s, "{} {} {:.17e}", i + 1, j + 1, v);
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    /// Zero for direct solves.
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = a.mul_vec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    r
}

/// Relative scale of the direct-solve acceptance bound.
pub const DIRECT_RESIDUAL_FACTOR: f64 = 1e-10;

/// Sparse LU solver that keeps the symbolic factorization of the last
/// pattern it saw, and the numeric factors of the last matrix.
///
/// A matrix whose pattern and values both match the previous call is not
/// refactored, so constant operators cost one factorization per run.
#[derive(Default)]
pub struct DirectSolver {
    cached: Option<Cached>,
}

struct Cached {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    symbolic: SymbolicLu<usize>,
    numeric: NumericLu<usize, f64>,
    values: Option<Vec<f64>>,
    scratch: MemBuffer,
}

impl std::fmt::Debug for DirectSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirectSolver").field("cached_dim", &self.cached.as_ref().map(|c| c.n)).finish()
    }
}

impl DirectSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, SolverReport)> {
        let n = a.n_rows;
        if a.n_cols != n {
            return Err(Error::Shape { what: "direct solve (square matrix)", expected: n, got: a.n_cols });
        }
        if b.len() != n {
            return Err(Error::Shape { what: "direct solve right-hand side", expected: n, got: b.len() });
        }
        if n == 0 {
            return Ok((Vec::new(), SolverReport { iterations: 0, residual: 0.0, converged: true }));
        }
        if let Some(index) = empty_line(a) {
            return Err(Error::Singular { index });
        }
        // The CSR arrays of A are the CSC arrays of A^T: factor A^T, solve transposed.
        let pattern = SymbolicSparseColMatRef::new_checked(n, n, &a.row_ptr, None, &a.col_idx);
        let same_pattern =
            self.cached.as_ref().is_some_and(|c| c.n == n && c.row_ptr == a.row_ptr && c.col_idx == a.col_idx);
        if !same_pattern {
            let params = LuSymbolicParams {
                supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
                ..Default::default()
            };
            let symbolic = factorize_symbolic_lu(pattern, params)
                .map_err(|e| Error::param(format!("sparse LU symbolic: {e:?}")))?;
            let req = symbolic
                .factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default())
                .or(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
            self.cached = Some(Cached {
                n,
                row_ptr: a.row_ptr.clone(),
                col_idx: a.col_idx.clone(),
                symbolic,
                numeric: NumericLu::new(),
                values: None,
                scratch: MemBuffer::new(req),
            });
        }
        let cache = self.cached.as_mut().expect("factorization cached");
        let (rs, cs) = equilibrate(a);
        let scaled: Vec<f64> = (0..n)
            .flat_map(|i| (a.row_ptr[i]..a.row_ptr[i + 1]).map(move |k| (i, k)))
            .map(|(i, k)| a.values[k] * rs[i] * cs[a.col_idx[k]])
            .collect();
        if cache.values.as_deref() != Some(&scaled[..]) {
            cache.values = None;
            let mat = SparseColMatRef::new(pattern, &scaled);
            cache
                .symbolic
                .factorize_numeric_lu(
                    &mut cache.numeric,
                    mat,
                    Par::Seq,
                    MemStack::new(&mut cache.scratch),
                    Default::default(),
                )
                .map_err(|e| singular_from(e, a))?;
            cache.values = Some(scaled);
        }
        // `numeric` always comes from `symbolic`: a new pattern resets both.
        let lu = LuRef::new_unchecked(&cache.symbolic, &cache.numeric);
        let scratch = &mut cache.scratch;
        let mut solve = |rhs: &[f64]| -> Vec<f64> {
            let mut col = faer::Mat::<f64>::from_fn(n, 1, |i, _| rhs[i] * rs[i]);
            lu.solve_transpose_in_place_with_conj(Conj::No, col.as_mut(), Par::Seq, MemStack::new(scratch));
            (0..n).map(|j| col[(j, 0)] * cs[j]).collect()
        };
        let mut x = solve(b);
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Singular { index });
        }

        let a_norm = a.frobenius_norm();
        let b_norm = norm2(b);
        let bound = |x: &[f64]| DIRECT_RESIDUAL_FACTOR * (a_norm * norm2(x) + b_norm);
        let mut r = residual(a, &x, b);
        let mut res = norm2(&r);
        // iterative refinement for mildly ill-conditioned saddle systems
        let mut sweeps = 0;
        while res > bound(&x) && sweeps < 3 {
            let dx = solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            r = residual(a, &x, b);
            res = norm2(&r);
            sweeps += 1;
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Singular { index });
        }
        let report = SolverReport { iterations: 0, residual: res, converged: res <= bound(&x) };
        if !report.converged {
            return Err(Error::Solver { stage: "direct", report });
        }
        Ok((x, report))
    }
}

/// Power-of-two row and column scalings that bring the row and column
/// maxima of `R A C` close to one. Powers of two keep the scaling exact.
fn equilibrate(a: &CsrMatrix) -> (Vec<f64>, Vec<f64>) {
    let pow2 = |m: f64| if m > 0.0 { (-m.log2().round()).exp2() } else { 1.0 };
    let rs: Vec<f64> = (0..a.n_rows).map(|i| pow2(a.row(i).fold(0.0, |m, (_, v)| m.max(v.abs())))).collect();
    let mut col_max = vec![0.0f64; a.n_cols];
    for (i, r) in rs.iter().enumerate() {
        for (j, v) in a.row(i) {
            col_max[j] = col_max[j].max((v * r).abs());
        }
    }
    (rs, col_max.into_iter().map(pow2).collect())
}

/// First row or column without any nonzero value.
fn empty_line(a: &CsrMatrix) -> Option<usize> {
    let mut col_seen = vec![false; a.n_cols];
    let mut first_row = None;
    for i in 0..a.n_rows {
        let mut any = false;
        for (j, v) in a.row(i) {
            if v != 0.0 {
                any = true;
                col_seen[j] = true;
            }
        }
        if !any && first_row.is_none() {
            first_row = Some(i);
        }
    }
    let first_col = col_seen.iter().position(|s| !s);
    match (first_row, first_col) {
        (Some(r), Some(c)) => Some(r.min(c)),
        (r, c) => r.or(c),
    }
}

fn singular_from(e: faer::sparse::linalg::LuError, a: &CsrMatrix) -> Error {
    match e {
        faer::sparse::linalg::LuError::SymbolicSingular { index } => {
            Error::Singular { index: empty_line(a).unwrap_or(index) }
        }
        faer::sparse::linalg::LuError::Generic(err) => Error::param(format!("sparse LU: {err:?}")),
    }
}

/// One-shot direct solve.
pub fn solve_direct(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    DirectSolver::new().solve(a, b).map(|(x, _)| x)
}

/// Restart length of [`solve_iterative`].
pub const GMRES_RESTART: usize = 200;

/// Restarted GMRES with right Jacobi preconditioning.
///
/// The preconditioner is `diag(A)^{-1}` with zero diagonal entries (the
/// pressure block of a saddle system) replaced by one. `tol` bounds the
/// absolute residual `‖b − Ax‖₂`. Non-convergence is reported, not raised.
pub fn solve_iterative(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolverReport)> {
    let n = a.n_rows;
    if a.n_cols != n || b.len() != n {
        return Err(Error::Shape {
            what: "iterative solve",
            expected: n,
            got: if a.n_cols != n { a.n_cols } else { b.len() },
        });
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 }).collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut res = norm2(&r);
    let mut iterations = 0;
    while res > tol && iterations < max_iter {
        let m = GMRES_RESTART.min(max_iter - iterations).min(n.max(1));
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = res;
        v.push(r.iter().map(|ri| ri / res).collect());
        let mut k_used = 0;
        for k in 0..m {
            let z: Vec<f64> = v[k].iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
            let mut w = a.mul_vec(&z);
            for (j, vj) in v.iter().enumerate() {
                let hjk = dot(&w, vj);
                h[j][k] = hjk;
                for (wi, vji) in w.iter_mut().zip(vj) {
                    *wi -= hjk * vji;
                }
            }
            let wn = norm2(&w);
            h[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k_used = k + 1;
            if g[k + 1].abs() <= tol * 0.5 || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / wn).collect());
        }
        // back substitution on the k_used × k_used triangle
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                x[i] += yj * v[j][i] * inv_diag[i];
            }
        }
        r = residual(a, &x, b);
        res = norm2(&r);
        if k_used == 0 {
            break;
        }
    }
    Ok((x, SolverReport { iterations, residual: res, converged: res <= tol }))
}
