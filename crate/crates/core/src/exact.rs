//! Exact decay rate from the full SIS Markov chain.
//!
//! States are bitmasks `x` with bit `i` set iff node `i` is infected. The
//! all-susceptible state `0` is absorbing; the sub-generator on the
//! `2ⁿ − 1` transient states stores state `x` at index `x − 1`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::bounds::{BoundsError, SisParams};
use crate::graph::DiGraph;
use crate::spectral::{self, EigOptions, SparseMetzler, SpectralError};

/// Largest `n` accepted unless the caller raises the limit.
pub const DEFAULT_MAX_EXACT_N: usize = 14;
/// Sub-generators up to this dimension are solved densely.
pub const DENSE_LIMIT: usize = 4095;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("exact chain for n = {n} exceeds the limit of {max} nodes")]
    TooLarge { n: usize, max: usize },
    #[error("initial state must be a nonzero bitmask below 2^{n} (got {x0})")]
    BadInitial { x0: u64, n: usize },
    #[error(transparent)]
    Params(#[from] BoundsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone)]
pub struct CtmcGenerator {
    n: usize,
    matrix: SparseMetzler,
}

impl CtmcGenerator {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Sub-generator on transient states; row/column `x − 1` is state `x`.
    pub fn matrix(&self) -> &SparseMetzler {
        &self.matrix
    }

    pub fn state_index(x: u64) -> usize {
        (x - 1) as usize
    }
}

fn check_size(g: &DiGraph, params: &SisParams, max_n: usize) -> Result<usize, ExactError> {
    let n = g.node_count();
    if params.len() != n {
        return Err(BoundsError::Dimension {
            graph: n,
            params: params.len(),
        }
        .into());
    }
    if n > max_n || n >= 63 {
        return Err(ExactError::TooLarge { n, max: max_n });
    }
    Ok(n)
}

/// Outgoing transitions of state `x`: `(target, rate)`, target `0` meaning absorption.
fn transitions(g: &DiGraph, params: &SisParams, x: u64, mut f: impl FnMut(u64, f64)) {
    for i in 0..g.node_count() {
        let bit = 1u64 << i;
        if x & bit != 0 {
            f(x & !bit, params.delta()[i]);
        } else {
            let pressure = g
                .in_neighbors(i)
                .iter()
                .filter(|&&j| x & (1u64 << j) != 0)
                .count();
            if pressure > 0 {
                f(x | bit, params.beta()[i] * pressure as f64);
            }
        }
    }
}

pub fn build_sub_generator(
    g: &DiGraph,
    params: &SisParams,
    max_n: usize,
) -> Result<CtmcGenerator, ExactError> {
    let n = check_size(g, params, max_n)?;
    let states = (1u64 << n) - 1;
    let mut t = Vec::new();
    for x in 1..=states {
        let row = CtmcGenerator::state_index(x);
        let mut out = 0.0;
        transitions(g, params, x, |y, rate| {
            out += rate;
            if y != 0 {
                t.push((row, CtmcGenerator::state_index(y), rate));
            }
        });
        t.push((row, row, -out));
    }
    Ok(CtmcGenerator {
        n,
        matrix: SparseMetzler::from_triplets(states as usize, t)?,
    })
}

/// Full `2ⁿ × 2ⁿ` generator including the absorbing state at index 0.
pub fn build_full_generator(
    g: &DiGraph,
    params: &SisParams,
    max_n: usize,
) -> Result<SparseMetzler, ExactError> {
    let n = check_size(g, params, max_n)?;
    let size = 1usize << n;
    let mut t = Vec::new();
    for x in 1..size as u64 {
        let mut out = 0.0;
        transitions(g, params, x, |y, rate| {
            out += rate;
            t.push((x as usize, y as usize, rate));
        });
        t.push((x as usize, x as usize, -out));
    }
    Ok(SparseMetzler::from_triplets(size, t)?)
}

/// `ρ = −max Re spec(Q_t)`.
pub fn exact_decay_rate(g: &DiGraph, params: &SisParams) -> Result<f64, ExactError> {
    exact_decay_rate_with(g, params, DEFAULT_MAX_EXACT_N)
}

pub fn exact_decay_rate_with(
    g: &DiGraph,
    params: &SisParams,
    max_n: usize,
) -> Result<f64, ExactError> {
    let q = build_sub_generator(g, params, max_n)?;
    let m = q.matrix();
    let lambda = if m.dim() <= DENSE_LIMIT {
        spectral::dense_spectral_abscissa(&m.to_dense())?
    } else {
        spectral::power_lambda_max(m, &EigOptions::default())?.lambda_max
    };
    Ok(-lambda)
}

/// Eigenvalues of a dense copy of the full generator; used to cross-check the
/// sub-generator formulation on tiny chains.
pub fn full_generator_spectrum(g: &DiGraph, params: &SisParams) -> Result<Vec<(f64, f64)>, ExactError> {
    let full = build_full_generator(g, params, 10)?;
    let dense: DMatrix<f64> = full.to_dense();
    Ok(spectral::dense_eigenvalues(&dense)?)
}

/// State distribution `π(t_k)` over transient states started from `x0`.
pub fn transient_distribution(
    q: &CtmcGenerator,
    x0: u64,
    grid: &[f64],
) -> Result<Vec<Vec<f64>>, ExactError> {
    let n = q.n();
    if x0 == 0 || x0 >= (1u64 << n) {
        return Err(ExactError::BadInitial { x0, n });
    }
    let qt = q.matrix().transpose();
    let mut pi0 = vec![0.0; qt.dim()];
    pi0[CtmcGenerator::state_index(x0)] = 1.0;
    Ok(spectral::expm_action(&qt, &pi0, grid)?)
}

/// Per-node infection probabilities `p_i(t_k)` for the chain started at `x0`.
pub fn exact_marginals(
    g: &DiGraph,
    params: &SisParams,
    x0: u64,
    grid: &[f64],
) -> Result<Vec<Vec<f64>>, ExactError> {
    let q = build_sub_generator(g, params, DEFAULT_MAX_EXACT_N)?;
    let n = q.n();
    let dist = transient_distribution(&q, x0, grid)?;
    Ok(dist
        .iter()
        .map(|pi| {
            let mut p = vec![0.0; n];
            for (idx, &mass) in pi.iter().enumerate() {
                let x = idx as u64 + 1;
                for (i, pi_i) in p.iter_mut().enumerate() {
                    if x & (1u64 << i) != 0 {
                        *pi_i += mass;
                    }
                }
            }
            p.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            p
        })
        .collect())
}
