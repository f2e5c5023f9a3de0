//! Sparse Metzler matrices and their extremal real eigenvalue.
//!
//! For a Metzler matrix `M` the spectral abscissa `λ_max(M)` is itself an
//! eigenvalue with a nonnegative eigenvector. Shifting by
//! `s = max_i |m_ii| + 1` gives a nonnegative matrix with a strictly positive
//! diagonal whose spectral radius is `λ_max(M) + s`, so plain power iteration
//! from the all-ones vector converges without any irreducibility assumption.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("matrix is empty")]
    Empty,
    #[error("entry ({row}, {col}) outside a {dim}x{dim} matrix")]
    OutOfRange { row: usize, col: usize, dim: usize },
    #[error("off-diagonal entry ({row}, {col}) = {value} is negative")]
    NotMetzler { row: usize, col: usize, value: f64 },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("time grid must be nonnegative and nondecreasing")]
    BadGrid,
    #[error("dense eigensolver did not converge on a {dim}x{dim} matrix")]
    SchurFailed { dim: usize },
    #[error("power iteration did not converge after {} iterations (residual {:e})", .0.iterations, .0.residual)]
    NotConverged(Box<EigResult>),
}

/// Square matrix with nonnegative off-diagonal entries, stored row-compressed.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMetzler {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMetzler {
    /// Assembles from `(row, col, value)` triplets. Repeated positions are
    /// summed; explicit zeros are dropped.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Result<Self, SpectralError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        for (row, col, value) in triplets {
            if row >= dim || col >= dim {
                return Err(SpectralError::OutOfRange { row, col, dim });
            }
            if !value.is_finite() {
                return Err(SpectralError::NonFinite { row, col });
            }
            trips.push((row, col, value));
        }
        trips.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(trips.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (row, col, value) in trips {
            if last == Some((row, col)) {
                *vals.last_mut().expect("previous entry") += value;
            } else {
                cols.push(col);
                vals.push(value);
                row_ptr[row + 1] += 1;
                last = Some((row, col));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = SparseMetzler {
            dim,
            row_ptr,
            cols,
            vals,
        };
        m.drop_zeros();
        for (row, col, value) in m.triplets() {
            if row != col && value < 0.0 {
                return Err(SpectralError::NotMetzler { row, col, value });
            }
        }
        Ok(m)
    }

    fn drop_zeros(&mut self) {
        if self.vals.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut row_ptr = vec![0usize; self.dim + 1];
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.vals[k] != 0.0 {
                    cols.push(self.cols[k]);
                    vals.push(self.vals[k]);
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.vals = vals;
    }

    /// Wraps a dense matrix, keeping its nonzero entries.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self, SpectralError> {
        if m.nrows() != m.ncols() {
            return Err(SpectralError::Dimension {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let dim = m.nrows();
        Self::from_triplets(
            dim,
            (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j, m[(i, j)]))),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Stored entries of row `r` as `(col, value)`, columns ascending.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.cols[span.clone()].binary_search(&col) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// `y = M x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.dim) {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> SparseMetzler {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v)))
            .expect("transpose of a Metzler matrix is Metzler")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        d
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Row→column sparsity graph of the strictly off-diagonal nonzeros.
    pub fn off_diagonal_pattern(&self) -> Vec<Vec<usize>> {
        (0..self.dim)
            .map(|r| self.row(r).filter(|&(c, _)| c != r).map(|(c, _)| c).collect())
            .collect()
    }
}

/// Outcome of a spectral-abscissa computation.
#[derive(Debug, Clone, PartialEq)]
pub struct EigResult {
    pub lambda_max: f64,
    /// Nonnegative, max entry 1.
    pub eigvec: Vec<f64>,
    pub iterations: usize,
    /// `‖M v − λ v‖∞` for the returned `v`.
    pub residual: f64,
    pub converged: bool,
    pub method: EigMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigMethod {
    Power,
    DenseSchur,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Dimensions at or below this use the dense eigensolver.
    pub dense_threshold: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions {
            tol: 1e-10,
            max_iter: 1_000_000,
            dense_threshold: 256,
        }
    }
}

impl EigOptions {
    /// Same tolerances, always the sparse power iteration.
    pub fn power_only(self) -> Self {
        EigOptions {
            dense_threshold: 0,
            ..self
        }
    }
}

/// Maximum real eigenvalue of a Metzler matrix with its Perron vector.
pub fn lambda_max(m: &SparseMetzler, opts: &EigOptions) -> Result<EigResult, SpectralError> {
    if m.dim() == 0 {
        return Err(SpectralError::Empty);
    }
    if m.dim() <= opts.dense_threshold {
        dense_lambda_max(m)
    } else {
        power_lambda_max(m, opts)
    }
}

/// Shifted power iteration on `M + sI`.
pub fn power_lambda_max(m: &SparseMetzler, opts: &EigOptions) -> Result<EigResult, SpectralError> {
    let dim = m.dim();
    if dim == 0 {
        return Err(SpectralError::Empty);
    }
    let shift = m.diagonal().iter().fold(0.0f64, |a, d| a.max(d.abs())) + 1.0;
    let mut x = vec![1.0; dim];
    let mut y = vec![0.0; dim];
    let mut lambda_prev = f64::NAN;
    let mut state = EigResult {
        lambda_max: f64::NAN,
        eigvec: Vec::new(),
        iterations: 0,
        residual: f64::INFINITY,
        converged: false,
        method: EigMethod::Power,
    };
    for it in 1..=opts.max_iter {
        m.mul_vec_into(&x, &mut y);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += shift * xi;
        }
        let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let xx: f64 = x.iter().map(|a| a * a).sum();
        let theta = xy / xx;
        let residual = x
            .iter()
            .zip(&y)
            .map(|(xi, yi)| (yi - theta * xi).abs())
            .fold(0.0, f64::max);
        let lambda = theta - shift;
        let scale = lambda.abs().max(1.0);
        let done = (lambda - lambda_prev).abs() < opts.tol * scale && residual < opts.tol * scale;
        if done || it == opts.max_iter {
            state = EigResult {
                lambda_max: lambda,
                eigvec: x,
                iterations: it,
                residual,
                converged: done,
                method: EigMethod::Power,
            };
            break;
        }
        lambda_prev = lambda;
        let norm = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm == 0.0 || !norm.is_finite() {
            return Err(SpectralError::NonFiniteInput("power iterate"));
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
    }
    if state.converged {
        Ok(state)
    } else {
        Err(SpectralError::NotConverged(Box::new(state)))
    }
}

/// All eigenvalues of a dense matrix via real Schur decomposition, returned
/// as `(re, im)` pairs.
///
/// nalgebra's Francis sweep can stall on some nonsymmetric inputs, so each
/// attempt is capped; on failure the transpose (same spectrum) and then a
/// slightly looser deflation threshold are tried.
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<(f64, f64)>, SpectralError> {
    let cap = 100 * m.nrows().max(10);
    let eps = f64::EPSILON;
    let attempts = [(false, eps), (true, eps), (false, 1e3 * eps), (true, 1e3 * eps)];
    for (transpose, eps) in attempts {
        let a = if transpose { m.transpose() } else { m.clone() };
        if let Some(schur) = nalgebra::linalg::Schur::try_new(a, eps, cap) {
            return Ok(schur
                .complex_eigenvalues()
                .iter()
                .map(|z| (z.re, z.im))
                .collect());
        }
    }
    Err(SpectralError::SchurFailed { dim: m.nrows() })
}

/// Largest real part over the spectrum of a dense matrix.
pub fn dense_spectral_abscissa(m: &DMatrix<f64>) -> Result<f64, SpectralError> {
    Ok(dense_eigenvalues(m)?
        .into_iter()
        .map(|(re, _)| re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Dense eigenvalue followed by inverse iteration for the Perron vector.
///
/// The inverse-iteration shift sits just above `λ_max`, where
/// `(μI − M)^{-1}` is entrywise nonnegative, so the iterates stay nonnegative.
pub fn dense_lambda_max(m: &SparseMetzler) -> Result<EigResult, SpectralError> {
    let dim = m.dim();
    if dim == 0 {
        return Err(SpectralError::Empty);
    }
    let dense = m.to_dense();
    let lambda = match dense_spectral_abscissa(&dense) {
        Ok(l) => l,
        Err(SpectralError::SchurFailed { .. }) => {
            return power_lambda_max(m, &EigOptions::default().power_only())
        }
        Err(e) => return Err(e),
    };
    if !lambda.is_finite() {
        return Err(SpectralError::NonFiniteInput("dense eigenvalues"));
    }
    let scale = lambda.abs().max(m.norm_inf()).max(1.0);
    let mu = lambda + 1e-9 * scale;
    let shifted = DMatrix::from_diagonal_element(dim, dim, mu) - &dense;
    let mut best = EigResult {
        lambda_max: lambda,
        eigvec: vec![1.0; dim],
        iterations: 0,
        residual: residual(m, lambda, &vec![1.0; dim]),
        converged: true,
        method: EigMethod::DenseSchur,
    };
    if let Some(lu) = Some(shifted.lu()).filter(|lu| lu.is_invertible()) {
        let mut x = DVector::from_element(dim, 1.0);
        for it in 1..=8 {
            let Some(y) = lu.solve(&x) else { break };
            let norm = y.amax();
            if norm == 0.0 || !norm.is_finite() {
                break;
            }
            x = y.map(|v| (v / norm).max(0.0));
            let v: Vec<f64> = x.iter().copied().collect();
            let r = residual(m, lambda, &v);
            if r < best.residual {
                best.eigvec = v;
                best.residual = r;
                best.iterations = it;
            }
        }
    }
    Ok(best)
}

fn residual(m: &SparseMetzler, lambda: f64, v: &[f64]) -> f64 {
    m.mul_vec(v)
        .iter()
        .zip(v)
        .map(|(mv, vi)| (mv - lambda * vi).abs())
        .fold(0.0, f64::max)
}

/// True iff the off-diagonal sparsity pattern is strongly connected.
pub fn pattern_is_irreducible(m: &SparseMetzler) -> bool {
    let adj = m.off_diagonal_pattern();
    let mut rev = vec![Vec::new(); adj.len()];
    for (r, cs) in adj.iter().enumerate() {
        for &c in cs {
            rev[c].push(r);
        }
    }
    !adj.is_empty() && all_reached(&adj) && all_reached(&rev)
}

fn all_reached(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|b| b)
}

const UNIFORMIZATION_STEP: f64 = 16.0;
const SERIES_TOL: f64 = 1e-16;

/// `e^{M t_k} v0` for every `t_k` in `grid`, by uniformization.
///
/// `M = s (P − I)` with `P = I + M/s ≥ 0`; each step sums the Poisson-weighted
/// series `Σ_k e^{-sh} (sh)^k / k! P^k v` over nonnegative terms, with
/// `s h ≤ 16` so the weights never underflow.
pub fn expm_action(
    m: &SparseMetzler,
    v0: &[f64],
    grid: &[f64],
) -> Result<Vec<Vec<f64>>, SpectralError> {
    let dim = m.dim();
    if v0.len() != dim {
        return Err(SpectralError::Dimension {
            expected: dim,
            got: v0.len(),
        });
    }
    if v0.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::NonFiniteInput("initial vector"));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(SpectralError::NonFiniteInput("time grid"));
    }
    if grid.first().is_some_and(|&t| t < 0.0) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(SpectralError::BadGrid);
    }
    let mut rate = m.diagonal().iter().fold(0.0f64, |a, d| a.max(-d));
    if rate == 0.0 {
        rate = m.norm_inf().max(1.0);
    }
    // P = I + M / rate
    let p = SparseMetzler::from_triplets(
        dim,
        m.triplets()
            .map(|(r, c, v)| (r, c, v / rate))
            .chain((0..dim).map(|i| (i, i, 1.0))),
    )?;
    let p_norm = p.norm_inf();

    let mut out = Vec::with_capacity(grid.len());
    let mut current = v0.to_vec();
    let mut t_now = 0.0;
    for &t in grid {
        let span = t - t_now;
        if span > 0.0 {
            let steps = (rate * span / UNIFORMIZATION_STEP).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                current = uniformized_step(&p, p_norm, rate * h, &current);
            }
        }
        t_now = t;
        out.push(current.clone());
    }
    Ok(out)
}

fn uniformized_step(p: &SparseMetzler, p_norm: f64, a: f64, v: &[f64]) -> Vec<f64> {
    let mut weight = (-a).exp();
    let mut term = v.to_vec();
    let mut next = vec![0.0; v.len()];
    let mut sum: Vec<f64> = v.iter().map(|x| weight * x).collect();
    let mut k = 0usize;
    loop {
        k += 1;
        p.mul_vec_into(&term, &mut next);
        std::mem::swap(&mut term, &mut next);
        weight *= a / k as f64;
        let mut term_norm = 0.0f64;
        let mut sum_norm = 0.0f64;
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += weight * t;
            term_norm = term_norm.max((weight * t).abs());
            sum_norm = sum_norm.max(s.abs());
        }
        // Later terms shrink geometrically by at most a·‖P‖/(k+1).
        let ratio = a * p_norm / (k + 1) as f64;
        if ratio < 0.5 {
            let tail = term_norm * ratio / (1.0 - ratio);
            if tail <= SERIES_TOL * sum_norm || term_norm == 0.0 {
                break;
            }
        }
        if k > 10_000 {
            break;
        }
    }
    sum
}
