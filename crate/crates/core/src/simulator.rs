//! Gillespie simulation of the SIS process and Monte Carlo decay-rate fits.
//!
//! Path `k` of an ensemble draws from ChaCha8 stream `k` keyed by the
//! configured seed, so each path is reproducible on its own and the ensemble
//! does not depend on how paths are scheduled across threads. Per-grid-point
//! tallies are integers, which makes the reduction exact in any order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::SisParams;
use crate::graph::DiGraph;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("parameters cover {params} nodes but the graph has {graph}")]
    Dimension { graph: usize, params: usize },
    #[error("decay fit needs at least 5 points with positive mean, found {0}")]
    TooFewPoints(usize),
    #[error("mean infected count is zero throughout the fit window")]
    ZeroSignal,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitialState {
    All,
    Nodes(Vec<usize>),
}

impl InitialState {
    pub fn flags(&self, n: usize) -> Result<Vec<bool>, SimError> {
        match self {
            InitialState::All => Ok(vec![true; n]),
            InitialState::Nodes(nodes) => {
                if nodes.is_empty() {
                    return Err(SimError::Config("initial infected set is empty".into()));
                }
                let mut flags = vec![false; n];
                for &v in nodes {
                    if v >= n {
                        return Err(SimError::Config(format!("initial node {v} out of range")));
                    }
                    flags[v] = true;
                }
                Ok(flags)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub paths: usize,
    pub horizon: f64,
    pub grid_dt: f64,
    pub seed: u64,
    pub initial: InitialState,
    pub fit_window: Option<(f64, f64)>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            paths: 10_000,
            horizon: 100.0,
            grid_dt: 0.1,
            seed: 0,
            initial: InitialState::All,
            fit_window: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.paths == 0 {
            return Err(SimError::Config("paths must be at least 1".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SimError::Config("horizon must be positive".into()));
        }
        if !(self.grid_dt.is_finite() && self.grid_dt > 0.0) {
            return Err(SimError::Config("grid_dt must be positive".into()));
        }
        if let Some((a, b)) = self.fit_window {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(SimError::Config(format!("bad fit window [{a}, {b}]")));
            }
        }
        Ok(())
    }

    /// Sampling times `0, dt, 2dt, …` up to the horizon.
    pub fn grid(&self) -> Vec<f64> {
        let steps = (self.horizon / self.grid_dt + 1e-9).floor() as usize;
        (0..=steps).map(|k| k as f64 * self.grid_dt).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Recovery,
    Infection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub node: usize,
    pub kind: EventKind,
}

/// Infected set plus the number of infected in-neighbors of every node.
struct SisState<'a> {
    g: &'a DiGraph,
    params: &'a SisParams,
    infected: Vec<bool>,
    pressure: Vec<u32>,
    count: usize,
}

impl<'a> SisState<'a> {
    fn new(g: &'a DiGraph, params: &'a SisParams, initial: &[bool]) -> Self {
        let mut s = SisState {
            g,
            params,
            infected: vec![false; g.node_count()],
            pressure: vec![0; g.node_count()],
            count: 0,
        };
        for (i, _) in initial.iter().enumerate().filter(|(_, &b)| b) {
            s.toggle(i);
        }
        s
    }

    #[inline]
    fn rate(&self, i: usize) -> f64 {
        if self.infected[i] {
            self.params.delta()[i]
        } else {
            self.params.beta()[i] * f64::from(self.pressure[i])
        }
    }

    fn total_rate(&self) -> f64 {
        (0..self.infected.len()).map(|i| self.rate(i)).sum()
    }

    fn toggle(&mut self, i: usize) {
        let now = !self.infected[i];
        self.infected[i] = now;
        if now {
            self.count += 1;
            for &v in self.g.out_neighbors(i) {
                self.pressure[v] += 1;
            }
        } else {
            self.count -= 1;
            for &v in self.g.out_neighbors(i) {
                self.pressure[v] -= 1;
            }
        }
    }

    fn pick(&self, target: f64) -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for i in 0..self.infected.len() {
            let r = self.rate(i);
            if r > 0.0 {
                acc += r;
                last = i;
                if target < acc {
                    return i;
                }
            }
        }
        last
    }
}

/// Runs one path, calling `on_sample(k, infected)` at every grid index reached
/// before absorption. Returns the first grid index not sampled (grid length
/// if the path survived past the last grid time).
fn drive_path<R: Rng>(
    g: &DiGraph,
    params: &SisParams,
    initial: &[bool],
    grid: &[f64],
    rng: &mut R,
    mut on_sample: impl FnMut(usize, &[bool]),
    mut on_event: impl FnMut(Event),
) -> usize {
    let mut state = SisState::new(g, params, initial);
    let mut t = 0.0;
    let mut k = 0;
    let horizon = grid.last().copied().unwrap_or(0.0);
    loop {
        let total = state.total_rate();
        if total <= 0.0 {
            // absorbed (or no possible event): later samples are this state
            if state.count == 0 {
                return k;
            }
            while k < grid.len() {
                on_sample(k, &state.infected);
                k += 1;
            }
            return k;
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        let t_next = t + wait;
        while k < grid.len() && grid[k] < t_next {
            on_sample(k, &state.infected);
            k += 1;
        }
        if t_next > horizon {
            return k;
        }
        let node = state.pick(rng.gen::<f64>() * total);
        let kind = if state.infected[node] {
            EventKind::Recovery
        } else {
            EventKind::Infection
        };
        state.toggle(node);
        on_event(Event {
            time: t_next,
            node,
            kind,
        });
        t = t_next;
    }
}

/// The random stream used for path `index` of an ensemble seeded with `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn check_dims(g: &DiGraph, params: &SisParams) -> Result<(), SimError> {
    if params.len() != g.node_count() {
        return Err(SimError::Dimension {
            graph: g.node_count(),
            params: params.len(),
        });
    }
    Ok(())
}

/// Infection flags of one path at each grid time.
pub fn run_single_path<R: Rng>(
    g: &DiGraph,
    params: &SisParams,
    initial: &[bool],
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<bool>>, SimError> {
    check_dims(g, params)?;
    let n = g.node_count();
    let mut samples = vec![vec![false; n]; grid.len()];
    drive_path(
        g,
        params,
        initial,
        grid,
        rng,
        |k, x| samples[k].copy_from_slice(x),
        |_| {},
    );
    Ok(samples)
}

/// Every event of one path up to `horizon`.
pub fn run_path_events<R: Rng>(
    g: &DiGraph,
    params: &SisParams,
    initial: &[bool],
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<Event>, SimError> {
    check_dims(g, params)?;
    let mut events = Vec::new();
    drive_path(g, params, initial, &[horizon], rng, |_, _| {}, |e| events.push(e));
    Ok(events)
}

/// Ensemble statistics on the sampling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `p[k][i]`: fraction of paths with node `i` infected at `times[k]`.
    pub p: Vec<Vec<f64>>,
    pub p_stderr: Vec<Vec<f64>>,
    /// Mean infected count.
    pub m: Vec<f64>,
    pub m_stderr: Vec<f64>,
    pub paths: usize,
}

impl Trajectory {
    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.p.first().map_or(0, Vec::len);
        write!(w, "t,m,stderr_m")?;
        for i in 0..n {
            write!(w, ",p_{i}")?;
        }
        writeln!(w)?;
        for k in 0..self.times.len() {
            write!(w, "{},{},{}", self.times[k], self.m[k], self.m_stderr[k])?;
            for v in &self.p[k] {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Tally {
    n: usize,
    infected: Vec<u64>,
    m_sum: Vec<u64>,
    m_sq: Vec<u64>,
}

impl Tally {
    fn new(n: usize, len: usize) -> Self {
        Tally {
            n,
            infected: vec![0; n * len],
            m_sum: vec![0; len],
            m_sq: vec![0; len],
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.infected.iter_mut().zip(other.infected) {
            *a += b;
        }
        for (a, b) in self.m_sum.iter_mut().zip(other.m_sum) {
            *a += b;
        }
        for (a, b) in self.m_sq.iter_mut().zip(other.m_sq) {
            *a += b;
        }
        self
    }
}

pub fn run_ensemble(g: &DiGraph, params: &SisParams, cfg: &SimConfig) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    check_dims(g, params)?;
    let n = g.node_count();
    let initial = cfg.initial.flags(n)?;
    let grid = cfg.grid();
    let len = grid.len();

    let tally = (0..cfg.paths as u64)
        .into_par_iter()
        .fold(
            || Tally::new(n, len),
            |mut acc, index| {
                let mut rng = path_rng(cfg.seed, index);
                drive_path(
                    g,
                    params,
                    &initial,
                    &grid,
                    &mut rng,
                    |k, x| {
                        let row = &mut acc.infected[k * acc.n..(k + 1) * acc.n];
                        let mut count = 0u64;
                        for (slot, &on) in row.iter_mut().zip(x) {
                            if on {
                                *slot += 1;
                                count += 1;
                            }
                        }
                        acc.m_sum[k] += count;
                        acc.m_sq[k] += count * count;
                    },
                    |_| {},
                );
                acc
            },
        )
        .reduce(|| Tally::new(n, len), Tally::merge);

    let total = cfg.paths as f64;
    let mut p = Vec::with_capacity(len);
    let mut p_stderr = Vec::with_capacity(len);
    let mut m = Vec::with_capacity(len);
    let mut m_stderr = Vec::with_capacity(len);
    for k in 0..len {
        let row: Vec<f64> = tally.infected[k * n..(k + 1) * n]
            .iter()
            .map(|&c| c as f64 / total)
            .collect();
        p_stderr.push(row.iter().map(|&q| (q * (1.0 - q) / total).sqrt()).collect());
        p.push(row);
        let mean = tally.m_sum[k] as f64 / total;
        let var = if cfg.paths > 1 {
            ((tally.m_sq[k] as f64 - total * mean * mean) / (total - 1.0)).max(0.0)
        } else {
            0.0
        };
        m.push(mean);
        m_stderr.push((var / total).sqrt());
    }
    Ok(Trajectory {
        times: grid,
        p,
        p_stderr,
        m,
        m_stderr,
        paths: cfg.paths,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowRule {
    Explicit,
    Automatic,
    /// The automatic start `0.2·horizon` left fewer than 5 points, so the
    /// start moved to `0.2·t_end`.
    AutomaticShortened,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub rho_hat: f64,
    pub window: (f64, f64),
    pub window_rule: WindowRule,
    pub slope_stderr: f64,
    /// `ln C` of the fitted `m(t) ≈ C e^{−ρ t}`.
    pub intercept: f64,
    pub points: usize,
    /// The statistic fitted; always the mean infected count.
    pub statistic: String,
}

const MIN_FIT_POINTS: usize = 5;

fn points_in(traj: &Trajectory, a: f64, b: f64) -> (Vec<(f64, f64)>, usize) {
    let mut pts = Vec::new();
    let mut total = 0;
    for (&t, &m) in traj.times.iter().zip(&traj.m) {
        if t >= a && t <= b {
            total += 1;
            if m > 0.0 {
                pts.push((t, m.ln()));
            }
        }
    }
    (pts, total)
}

/// Least-squares fit of `ln m(t)` against `t`; `ρ̂` is the negated slope.
pub fn estimate_decay(traj: &Trajectory, window: Option<(f64, f64)>) -> Result<DecayEstimate, SimError> {
    if traj.times.is_empty() {
        return Err(SimError::TooFewPoints(0));
    }
    let (a, b, rule) = match window {
        Some((a, b)) => (a, b, WindowRule::Explicit),
        None => {
            let m0 = traj.m[0];
            let floor = (10.0 / (traj.paths as f64).sqrt()).max(1e-3 * m0);
            let end = traj
                .times
                .iter()
                .zip(&traj.m)
                .filter(|(_, &m)| m >= floor && m > 0.0)
                .map(|(&t, _)| t)
                .next_back()
                .unwrap_or(0.0);
            let start = 0.2 * traj.horizon();
            if points_in(traj, start, end).0.len() >= MIN_FIT_POINTS {
                (start, end, WindowRule::Automatic)
            } else {
                (0.2 * end, end, WindowRule::AutomaticShortened)
            }
        }
    };
    let (pts, in_window) = points_in(traj, a, b);
    if pts.is_empty() && in_window > 0 {
        return Err(SimError::ZeroSignal);
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(SimError::TooFewPoints(pts.len()));
    }
    let k = pts.len() as f64;
    let tbar = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tbar).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * tbar;
    let sse: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let slope_stderr = (sse / (k - 2.0) / sxx).sqrt();
    Ok(DecayEstimate {
        rho_hat: -slope,
        window: (a, b),
        window_rule: rule,
        slope_stderr,
        intercept,
        points: pts.len(),
        statistic: "mean_infected".into(),
    })
}
