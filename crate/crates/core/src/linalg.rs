//! Sparse matrices and the two solver paths used for the saddle-point systems:
//! a sparse LU factorization and restarted GMRES with right preconditioning.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Row-compressed sparse matrix with duplicate entries summed.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Coordinate-format accumulator.
#[derive(Clone, Debug)]
pub struct TripletBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn build(mut self) -> SparseMatrix {
        self.entries
            .sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry present") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl SparseMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    /// Rows that store no nonzero entry.
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.n_rows)
            .filter(|&r| self.row_ptr[r] == self.row_ptr[r + 1])
            .collect()
    }

    /// `‖b − Ax‖₂ / ‖b‖₂`, or the absolute residual when `b = 0`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.matvec(x);
        let r = norm2_diff(b, &ax);
        let nb = norm2(b);
        if nb > 0.0 { r / nb } else { r }
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn norm2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Direct,
    Iterative,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// `None` picks by problem size.
    pub kind: Option<SolverKind>,
    /// Target relative residual.
    pub tol: f64,
    /// Iteration cap for the Krylov path, as a multiple of the dimension.
    pub max_iter_factor: usize,
    /// Grid sizes up to this use the direct path when `kind` is `None`.
    pub direct_limit: usize,
}

impl SolveOptions {
    pub fn new(tol: f64, max_iter_factor: usize) -> Self {
        Self {
            kind: None,
            tol,
            max_iter_factor,
            direct_limit: 40 * 40 * 40,
        }
    }

    pub fn with_kind(mut self, kind: SolverKind) -> Self {
        self.kind = Some(kind);
        self
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    pub relative_residual: f64,
    pub iterations: usize,
    pub kind: SolverKind,
}

const ITERATIVE_MARGIN: f64 = 1e-3;

/// Solves `Ax = b`. `grid_points` selects the path when `opts.kind` is unset;
/// `precond_diag` feeds the Jacobi-type right preconditioner of the Krylov path
/// (zero or non-finite entries fall back to 1).
pub fn solve(
    a: &SparseMatrix,
    b: &[f64],
    grid_points: usize,
    precond_diag: &[f64],
    opts: &SolveOptions,
) -> Result<SolveOutcome> {
    if a.n_rows != a.n_cols || b.len() != a.n_rows {
        return Err(Error::AssemblyShape(format!(
            "matrix {}x{}, rhs {}",
            a.n_rows,
            a.n_cols,
            b.len()
        )));
    }
    let kind = opts.kind.unwrap_or(if grid_points <= opts.direct_limit {
        SolverKind::Direct
    } else {
        SolverKind::Iterative
    });
    let (x, iterations) = match kind {
        SolverKind::Direct => (lu_solve(a, b)?, 1),
        SolverKind::Iterative => {
            let inv: Vec<f64> = precond_diag
                .iter()
                .map(|&d| if d != 0.0 && d.is_finite() { 1.0 / d } else { 1.0 })
                .collect();
            let max_iter = opts.max_iter_factor.saturating_mul(a.n_rows).max(1);
            // aim below the acceptance level: the constraint rows are small
            // next to the vector rows in the relative residual
            gmres(a, b, &inv, opts.tol * ITERATIVE_MARGIN, 60, max_iter)?
        }
    };
    let relative_residual = a.relative_residual(&x, b);
    if !relative_residual.is_finite() || relative_residual > opts.tol {
        return Err(Error::SolveFailure(format!(
            "{kind:?} solve reached relative residual {relative_residual:e} > {:e}",
            opts.tol
        )));
    }
    Ok(SolveOutcome {
        x,
        relative_residual,
        iterations,
        kind,
    })
}

/// Sparse LU with partial pivoting followed by two sweeps of iterative
/// refinement.
pub fn lu_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n_rows;
    if n == 0 {
        return Ok(Vec::new());
    }
    if let Some(&r) = a.empty_rows().first() {
        return Err(Error::SolveFailure(format!("row {r} is empty; matrix is singular")));
    }
    let mut trip = Vec::with_capacity(a.nnz());
    for r in 0..n {
        for (c, v) in a.row(r) {
            trip.push(Triplet::new(r, c, v));
        }
    }
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
        .map_err(|e| Error::SolveFailure(format!("sparse matrix creation: {e:?}")))?;
    let lu = mat
        .sp_lu()
        .map_err(|e| Error::SolveFailure(format!("sparse LU: {e:?}")))?;
    let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    lu.solve_in_place(rhs.as_mut());
    let mut x: Vec<f64> = (0..n).map(|i| rhs[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolveFailure("sparse LU produced non-finite values".into()));
    }
    for _ in 0..2 {
        let ax = a.matvec(&x);
        let mut corr = Mat::<f64>::from_fn(n, 1, |i, _| b[i] - ax[i]);
        lu.solve_in_place(corr.as_mut());
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += corr[(i, 0)];
        }
    }
    Ok(x)
}

/// Restarted GMRES(m) with right preconditioning `x = M⁻¹y`, `M⁻¹ = diag(inv)`.
/// Returns the last iterate and the number of inner iterations; the caller
/// checks the residual.
pub fn gmres(
    a: &SparseMatrix,
    b: &[f64],
    inv: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let nb = norm2(b);
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return Ok((x, 0));
    }
    let m = restart.min(n).max(1);
    let mut total = 0usize;
    let mut tmp = vec![0.0; n];
    let mut w = vec![0.0; n];
    while total < max_iter {
        a.matvec_into(&x, &mut tmp);
        let r: Vec<f64> = b.iter().zip(&tmp).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        if beta <= tol * nb {
            return Ok((x, total));
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut hess = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let z: Vec<f64> = v[k].iter().zip(inv).map(|(vi, d)| vi * d).collect();
            a.matvec_into(&z, &mut w);
            for (i, vi) in v.iter().enumerate() {
                let hik = dot(&w, vi);
                hess[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= hik * vj;
                }
            }
            // second Gram-Schmidt pass
            for (i, vi) in v.iter().enumerate() {
                let corr = dot(&w, vi);
                hess[i][k] += corr;
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= corr * vj;
                }
            }
            let hn = norm2(&w);
            hess[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let den = hess[k][k].hypot(hess[k + 1][k]);
            if den == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = hess[k][k] / den;
                sn[k] = hess[k + 1][k] / den;
            }
            hess[k][k] = den;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            let breakdown = hn <= f64::EPSILON * beta;
            if g[k + 1].abs() <= 0.5 * tol * nb || breakdown || total >= max_iter {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        let mut yk = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hess[i][j] * yk[j];
            }
            yk[i] = if hess[i][i] != 0.0 { s / hess[i][i] } else { 0.0 };
        }
        for (j, yj) in yk.iter().enumerate() {
            for ((xi, vi), d) in x.iter_mut().zip(&v[j]).zip(inv) {
                *xi += yj * vi * d;
            }
        }
    }
    Ok((x, total))
}
