//! First- and second-order lower bounds on the SIS decay rate.
//!
//! The first-order bound comes from `BA − D`. The second-order bound comes
//! from the linear system obeyed by `r = (p, q)`, where `p_i` is the infection
//! probability of node `i` and `q_ij` the probability that `i` is susceptible
//! while `j` is infected. Dropping the nonnegative third-order slack leaves
//! `dr/dt ≤ 𝒜 r` with the `n² × n²` Metzler matrix `𝒜` assembled here.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{is_strongly_connected, DiGraph};
use crate::spectral::{self, EigOptions, EigResult, SparseMetzler, SpectralError};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("rates must be finite and strictly positive ({which}[{index}] = {value})")]
    BadRate {
        which: &'static str,
        index: usize,
        value: f64,
    },
    #[error("dimension mismatch: graph has {graph} nodes, parameters cover {params}")]
    Dimension { graph: usize, params: usize },
    #[error("q index requires i != j (got {0})")]
    DiagonalPair(usize),
    #[error("node {node} out of range for n = {n}")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("second-order matrix needs {needed} nonzeros, above the budget of {budget}")]
    TooLarge { needed: usize, budget: usize },
    #[error("graph must have at least {0} nodes")]
    TooSmall(usize),
    #[error("initial state invalid: {0}")]
    BadInitial(String),
    #[error("beta fraction must be positive and finite (got {0})")]
    BadBetaFraction(f64),
    #[error("adjacency matrix has no positive eigenvalue; cannot normalize beta")]
    NoSpectralRadius,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Per-node infection rates `β_i` and recovery rates `δ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SisParams {
    beta: Vec<f64>,
    delta: Vec<f64>,
}

impl SisParams {
    pub fn new(beta: Vec<f64>, delta: Vec<f64>) -> Result<Self, BoundsError> {
        if beta.len() != delta.len() {
            return Err(BoundsError::Dimension {
                graph: beta.len(),
                params: delta.len(),
            });
        }
        for (which, v) in [("beta", &beta), ("delta", &delta)] {
            if let Some((index, &value)) = v
                .iter()
                .enumerate()
                .find(|(_, &x)| !(x.is_finite() && x > 0.0))
            {
                return Err(BoundsError::BadRate {
                    which,
                    index,
                    value,
                });
            }
        }
        Ok(SisParams { beta, delta })
    }

    pub fn homogeneous(n: usize, beta: f64, delta: f64) -> Result<Self, BoundsError> {
        Self::new(vec![beta; n], vec![delta; n])
    }

    /// `β_i = c / λ_max(A)`, `δ_i = 1`.
    pub fn from_beta_fraction(g: &DiGraph, c: f64, opts: &EigOptions) -> Result<Self, BoundsError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(BoundsError::BadBetaFraction(c));
        }
        let lambda = adjacency_lambda_max(g, opts)?.lambda_max;
        if lambda <= 0.0 {
            return Err(BoundsError::NoSpectralRadius);
        }
        Self::homogeneous(g.node_count(), c / lambda, 1.0)
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn delta_min(&self) -> f64 {
        self.delta.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn check(&self, g: &DiGraph) -> Result<(), BoundsError> {
        if self.len() != g.node_count() {
            return Err(BoundsError::Dimension {
                graph: g.node_count(),
                params: self.len(),
            });
        }
        Ok(())
    }
}

/// Adjacency matrix `A` as a (nonnegative) sparse matrix.
pub fn adjacency_matrix(g: &DiGraph) -> SparseMetzler {
    let n = g.node_count();
    SparseMetzler::from_triplets(n, g.edges().map(|(u, v)| (v, u, 1.0)))
        .expect("adjacency is nonnegative")
}

pub fn adjacency_lambda_max(g: &DiGraph, opts: &EigOptions) -> Result<EigResult, BoundsError> {
    Ok(spectral::lambda_max(&adjacency_matrix(g), opts)?)
}

/// Position of `q_ij` in the stacked state `r = (p_0..p_{n-1}, q_01, q_02, ...)`.
pub fn q_index(i: usize, j: usize, n: usize) -> Result<usize, BoundsError> {
    if i >= n || j >= n {
        return Err(BoundsError::NodeOutOfRange { node: i.max(j), n });
    }
    if i == j {
        return Err(BoundsError::DiagonalPair(i));
    }
    Ok(q_slot(i, j, n))
}

#[inline]
fn q_slot(i: usize, j: usize, n: usize) -> usize {
    n + i * (n - 1) + if j < i { j } else { j - 1 }
}

/// A coordinate of the second-order state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateLabel {
    P(usize),
    Q(usize, usize),
}

/// `BA − D`.
pub fn build_first_order(g: &DiGraph, params: &SisParams) -> Result<SparseMetzler, BoundsError> {
    params.check(g)?;
    let n = g.node_count();
    let beta = params.beta();
    let entries = g
        .edges()
        .map(|(j, i)| (i, j, beta[i]))
        .chain((0..n).map(|i| (i, i, -params.delta()[i])));
    Ok(SparseMetzler::from_triplets(n, entries)?)
}

/// `ρ₁ = −λ_max(BA − D)` together with the solver output.
pub fn rho1(
    g: &DiGraph,
    params: &SisParams,
    opts: &EigOptions,
) -> Result<(f64, EigResult), BoundsError> {
    let eig = spectral::lambda_max(&build_first_order(g, params)?, opts)?;
    Ok((0.0 - eig.lambda_max, eig))
}

/// Default cap on the number of stored entries of `𝒜`.
pub const DEFAULT_NNZ_BUDGET: usize = 50_000_000;

/// Nonzeros of `𝒜`: `n + |E| + 2n(n−1) + (n−2)|E|`.
pub fn second_order_nnz(g: &DiGraph) -> usize {
    let n = g.node_count();
    let e = g.edge_count();
    n + 2 * n * n.saturating_sub(1) + n.saturating_sub(1) * e
}

/// The second-order matrix `𝒜` with its state indexing.
#[derive(Debug, Clone)]
pub struct SecondOrder {
    n: usize,
    matrix: SparseMetzler,
}

impl SecondOrder {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &SparseMetzler {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.n * self.n
    }

    pub fn p_index(&self, i: usize) -> usize {
        i
    }

    pub fn q_index(&self, i: usize, j: usize) -> Result<usize, BoundsError> {
        q_index(i, j, self.n)
    }

    pub fn label(&self, idx: usize) -> StateLabel {
        let n = self.n;
        if idx < n {
            return StateLabel::P(idx);
        }
        let off = idx - n;
        let i = off / (n - 1);
        let r = off % (n - 1);
        StateLabel::Q(i, if r < i { r } else { r + 1 })
    }

    /// Stacked state for a deterministic initial configuration:
    /// `p_i = x_i`, `q_ij = (1 − x_i) x_j`.
    pub fn state_from_infected(&self, infected: &[bool]) -> Result<Vec<f64>, BoundsError> {
        if infected.len() != self.n {
            return Err(BoundsError::BadInitial(format!(
                "expected {} flags, got {}",
                self.n,
                infected.len()
            )));
        }
        let mut r = vec![0.0; self.dim()];
        for i in 0..self.n {
            r[i] = f64::from(u8::from(infected[i]));
            for j in (0..self.n).filter(|&j| j != i) {
                if !infected[i] && infected[j] {
                    r[q_slot(i, j, self.n)] = 1.0;
                }
            }
        }
        Ok(r)
    }
}

/// Assembles `𝒜` in one pass over nodes and edges.
pub fn build_second_order(g: &DiGraph, params: &SisParams) -> Result<SecondOrder, BoundsError> {
    build_second_order_with_budget(g, params, DEFAULT_NNZ_BUDGET)
}

pub fn build_second_order_with_budget(
    g: &DiGraph,
    params: &SisParams,
    budget: usize,
) -> Result<SecondOrder, BoundsError> {
    params.check(g)?;
    let n = g.node_count();
    let needed = second_order_nnz(g);
    if needed > budget {
        return Err(BoundsError::TooLarge { needed, budget });
    }
    let (beta, delta) = (params.beta(), params.delta());
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(needed);
    for i in 0..n {
        // dp_i/dt = -δ_i p_i + β_i Σ_k a_ik q_ik
        t.push((i, i, -delta[i]));
        for &k in g.in_neighbors(i) {
            t.push((i, q_slot(i, k, n), beta[i]));
        }
    }
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            // dq_ij/dt = -γ_ij q_ij + δ_i p_j + β_j Σ_{k≠i} a_jk q_ik
            let row = q_slot(i, j, n);
            let a_ij = if g.adjacent(i, j) { 1.0 } else { 0.0 };
            t.push((row, j, delta[i]));
            t.push((row, row, -(delta[i] + delta[j] + a_ij * beta[i])));
            for &k in g.in_neighbors(j) {
                if k != i {
                    t.push((row, q_slot(i, k, n), beta[j]));
                }
            }
        }
    }
    Ok(SecondOrder {
        n,
        matrix: SparseMetzler::from_triplets(n * n, t)?,
    })
}

/// `ρ₂ = −λ_max(𝒜)`.
pub fn rho2(
    g: &DiGraph,
    params: &SisParams,
    opts: &EigOptions,
) -> Result<(f64, EigResult), BoundsError> {
    let so = build_second_order(g, params)?;
    let eig = spectral::lambda_max(so.matrix(), opts)?;
    Ok((0.0 - eig.lambda_max, eig))
}

/// Upper bound on `p(t)` from the p-block of `e^{𝒜t} r(0)`.
pub fn propagate_bound(
    so: &SecondOrder,
    p0: &[f64],
    q0: &[f64],
    grid: &[f64],
) -> Result<Vec<Vec<f64>>, BoundsError> {
    let n = so.n();
    if p0.len() != n || q0.len() != n * (n - 1) {
        return Err(BoundsError::BadInitial(format!(
            "expected {} + {} initial values, got {} + {}",
            n,
            n * (n - 1),
            p0.len(),
            q0.len()
        )));
    }
    if p0.iter().chain(q0).any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(BoundsError::BadInitial("probabilities must lie in [0, 1]".into()));
    }
    let r0: Vec<f64> = p0.iter().chain(q0).copied().collect();
    let traj = spectral::expm_action(so.matrix(), &r0, grid)?;
    Ok(traj.into_iter().map(|mut r| {
        r.truncate(n);
        r
    }).collect())
}

/// Solver diagnostics reported next to each bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub residual: f64,
}

impl From<&EigResult> for SolverDiagnostics {
    fn from(e: &EigResult) -> Self {
        SolverDiagnostics {
            iterations: e.iterations,
            residual: e.residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub n: usize,
    pub lambda_max_adjacency: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub delta_min: f64,
    pub strongly_connected: bool,
    /// Diagnostics of the `𝒜` eigensolve (the most expensive one).
    pub solver: SolverDiagnostics,
    #[serde(skip)]
    pub solver_first_order: SolverDiagnostics,
    #[serde(skip)]
    pub solver_adjacency: SolverDiagnostics,
}

pub fn compute_bounds(
    g: &DiGraph,
    params: &SisParams,
    opts: &EigOptions,
) -> Result<BoundsReport, BoundsError> {
    let adj = adjacency_lambda_max(g, opts)?;
    let (r1, e1) = rho1(g, params, opts)?;
    let (r2, e2) = rho2(g, params, opts)?;
    Ok(BoundsReport {
        n: g.node_count(),
        lambda_max_adjacency: adj.lambda_max,
        rho1: r1,
        rho2: r2,
        delta_min: params.delta_min(),
        strongly_connected: is_strongly_connected(g),
        solver: (&e2).into(),
        solver_first_order: (&e1).into(),
        solver_adjacency: (&adj).into(),
    })
}

/// Rectangular sparse block that may hold negative entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseBlock {
    pub rows: usize,
    pub cols: usize,
    pub entries: BTreeMap<(usize, usize), f64>,
}

impl SparseBlock {
    fn new(rows: usize, cols: usize) -> Self {
        SparseBlock {
            rows,
            cols,
            entries: BTreeMap::new(),
        }
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        *self.entries.entry((r, c)).or_insert(0.0) += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries.get(&(r, c)).copied().unwrap_or(0.0)
    }
}

/// The splitting `𝒜 = 𝓜 − 𝓝` and the derived matrix `𝓛`.
#[derive(Debug, Clone)]
pub struct ProofMatrices {
    pub n: usize,
    /// `n × n(n−1)`: row `i` holds `β_i a_ik` at `q_ik`.
    pub m12: SparseBlock,
    /// `n(n−1) × n(n−1)`.
    pub m22: SparseBlock,
    /// `n(n−1) × n`: row `(i,j)` holds `−δ_i` at column `j`.
    pub n21: SparseBlock,
    /// Diagonal `δ_i + δ_j`.
    pub n22: Vec<f64>,
    pub delta: Vec<f64>,
    pub rho2: f64,
    /// Present iff `ρ₂ < δ_min`.
    pub l: Option<SparseMetzler>,
}

impl ProofMatrices {
    pub fn applicable(&self) -> bool {
        self.l.is_some()
    }

    /// `𝓜 − 𝓝` as a full `n² × n²` block.
    pub fn reconstruct(&self) -> SparseBlock {
        let n = self.n;
        let mut out = SparseBlock::new(n * n, n * n);
        for (i, d) in self.delta.iter().enumerate() {
            out.add(i, i, -d);
        }
        for (&(r, c), &v) in &self.m12.entries {
            out.add(r, n + c, v);
        }
        for (&(r, c), &v) in &self.m22.entries {
            out.add(n + r, n + c, v);
        }
        for (&(r, c), &v) in &self.n21.entries {
            out.add(n + r, c, -v);
        }
        for (r, &v) in self.n22.iter().enumerate() {
            out.add(n + r, n + r, -v);
        }
        out.entries.retain(|_, v| *v != 0.0);
        out
    }
}

pub fn build_proof_matrices(
    g: &DiGraph,
    params: &SisParams,
    rho2_value: f64,
) -> Result<ProofMatrices, BoundsError> {
    params.check(g)?;
    let n = g.node_count();
    if n < 2 {
        return Err(BoundsError::TooSmall(2));
    }
    let (beta, delta) = (params.beta(), params.delta());
    let nq = n * (n - 1);
    let qs = |i: usize, j: usize| q_slot(i, j, n) - n;

    let mut m12 = SparseBlock::new(n, nq);
    let mut m22 = SparseBlock::new(nq, nq);
    let mut n21 = SparseBlock::new(nq, n);
    let mut n22 = vec![0.0; nq];
    for i in 0..n {
        for &k in g.in_neighbors(i) {
            m12.add(i, qs(i, k), beta[i]);
        }
        for j in (0..n).filter(|&j| j != i) {
            let row = qs(i, j);
            for &k in g.in_neighbors(j) {
                if k != i {
                    m22.add(row, qs(i, k), beta[j]);
                }
            }
            if g.adjacent(i, j) {
                m22.add(row, row, -beta[i]);
            }
            n21.add(row, j, -delta[i]);
            n22[row] = delta[i] + delta[j];
        }
    }

    let l = if rho2_value < params.delta_min() {
        // 𝓛 = (𝓝₂₂ − ρ₂I)⁻¹ (−𝓝₂₁ (D − ρ₂I)⁻¹ 𝓜₁₂ + 𝓜₂₂); both inverses are diagonal.
        let mut t: Vec<(usize, usize, f64)> = Vec::new();
        for (&(row, j), &v) in &n21.entries {
            let scale = -v / (delta[j] - rho2_value);
            for (&(_, c), &w) in m12.entries.range((j, 0)..(j + 1, 0)) {
                t.push((row, c, scale * w));
            }
        }
        t.extend(m22.entries.iter().map(|(&(r, c), &v)| (r, c, v)));
        let t = t
            .into_iter()
            .map(|(r, c, v)| (r, c, v / (n22[r] - rho2_value)));
        Some(SparseMetzler::from_triplets(nq, t)?)
    } else {
        None
    };

    Ok(ProofMatrices {
        n,
        m12,
        m22,
        n21,
        n22,
        delta: delta.to_vec(),
        rho2: rho2_value,
        l,
    })
}

/// Outcome of checking `1 ≤ λ_max(𝓛) < max_i (δ_i − ρ₁)/(δ_i − ρ₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LSandwich {
    pub lambda_max_l: f64,
    pub upper: f64,
    pub holds: bool,
}

/// Slack below 1 tolerated on the lower side of the sandwich.
pub const L_LOWER_TOL: f64 = 1e-7;

pub fn verify_l_sandwich(
    pm: &ProofMatrices,
    rho1_value: f64,
    rho2_value: f64,
    params: &SisParams,
    opts: &EigOptions,
) -> Result<Option<LSandwich>, BoundsError> {
    let Some(l) = &pm.l else { return Ok(None) };
    let lambda = spectral::lambda_max(l, opts)?.lambda_max;
    let upper = params
        .delta()
        .iter()
        .map(|d| (d - rho1_value) / (d - rho2_value))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Some(LSandwich {
        lambda_max_l: lambda,
        upper,
        holds: lambda >= 1.0 - L_LOWER_TOL && lambda < upper,
    }))
}

/// The auxiliary graph on the `n(n−1)` pairs `v_{i,j}`, ordered like the
/// q-block. For every edge `(j, k)`: `v_{i,j} → v_{j,k}` for all `i ≠ j`, and
/// `v_{i,j} → v_{i,k}` whenever `k ≠ i`.
pub fn build_gpp(g: &DiGraph) -> Result<DiGraph, BoundsError> {
    let n = g.node_count();
    if n < 2 {
        return Err(BoundsError::TooSmall(2));
    }
    let node = |i: usize, j: usize| q_slot(i, j, n) - n;
    let mut edges = Vec::new();
    for (j, k) in g.edges() {
        for i in (0..n).filter(|&i| i != j) {
            edges.push((node(i, j), node(j, k)));
            if k != i {
                edges.push((node(i, j), node(i, k)));
            }
        }
    }
    Ok(DiGraph::from_edges(n * (n - 1), edges).expect("pair graph edges are valid"))
}
