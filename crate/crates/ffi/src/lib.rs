//! C ABI over `sisbound`.
//!
//! Graphs and parameter sets are opaque heap handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns a
//! [`SisbStatus`]; on failure `sisb_last_error_message` describes the most
//! recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sisbound::bounds::{self, BoundsError, SisParams};
use sisbound::exact::{self, ExactError};
use sisbound::graph::{self, DiGraph, Family, GraphError, GraphGenSpec, ParseOptions};
use sisbound::simulator::{self, InitialState, SimConfig, SimError};
use sisbound::spectral::{EigOptions, SpectralError};

/// Result codes. The nonzero values match the CLI exit codes where they overlap.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SisbStatus {
    Ok = 0,
    InvalidArgument = 1,
    Input = 2,
    Numeric = 3,
    Resource = 4,
    NullPointer = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SisbFamily {
    Er = 0,
    Ba = 1,
    Nws = 2,
}

/// Opaque directed graph.
pub struct SisbGraph(DiGraph);

/// Opaque per-node rate set.
pub struct SisbParams(SisParams);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SisbBounds {
    pub n: usize,
    pub lambda_max_adjacency: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub delta_min: f64,
    pub strongly_connected: bool,
    pub solver_iterations: usize,
    pub solver_residual: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SisbDecay {
    pub rho_hat: f64,
    pub slope_stderr: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub points: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(SisbStatus, String);

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        let code = match e {
            GraphError::InvalidSpec(_) => SisbStatus::InvalidArgument,
            _ => SisbStatus::Input,
        };
        Failure(code, e.to_string())
    }
}

impl From<SpectralError> for Failure {
    fn from(e: SpectralError) -> Self {
        Failure(SisbStatus::Numeric, e.to_string())
    }
}

impl From<BoundsError> for Failure {
    fn from(e: BoundsError) -> Self {
        let code = match e {
            BoundsError::TooLarge { .. } => SisbStatus::Resource,
            BoundsError::Spectral(_) | BoundsError::NoSpectralRadius => SisbStatus::Numeric,
            _ => SisbStatus::InvalidArgument,
        };
        Failure(code, e.to_string())
    }
}

impl From<ExactError> for Failure {
    fn from(e: ExactError) -> Self {
        let code = match e {
            ExactError::TooLarge { .. } => SisbStatus::Resource,
            ExactError::Spectral(_) => SisbStatus::Numeric,
            _ => SisbStatus::InvalidArgument,
        };
        Failure(code, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::TooFewPoints(_) | SimError::ZeroSignal => SisbStatus::Numeric,
            SimError::Io(_) => SisbStatus::Input,
            _ => SisbStatus::InvalidArgument,
        };
        Failure(code, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SisbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SisbStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            SisbStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SisbStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or point to a live handle created by this library.
unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(null(what))
    } else {
        Ok(p)
    }
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sisb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sisb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses edge-list text (`u v` per line).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sisb_graph_parse(
    text: *const c_char,
    bidirect: bool,
    out: *mut *mut SisbGraph,
) -> SisbStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if text.is_null() {
            return Err(null("text"));
        }
        let text = CStr::from_ptr(text)
            .to_str()
            .map_err(|_| Failure(SisbStatus::Input, "edge list is not UTF-8".into()))?;
        let g = graph::parse_edge_list_str(
            text,
            ParseOptions {
                bidirect,
                node_count: None,
            },
        )?;
        *out = Box::into_raw(Box::new(SisbGraph(g)));
        Ok(())
    })
}

/// Builds a graph from `len` directed edges `src[k] -> dst[k]` on `n` nodes.
///
/// # Safety
/// `src` and `dst` must each point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sisb_graph_from_edges(
    n: usize,
    src: *const usize,
    dst: *const usize,
    len: usize,
    out: *mut *mut SisbGraph,
) -> SisbStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let (src, dst) = if len == 0 {
            (&[][..], &[][..])
        } else {
            if src.is_null() || dst.is_null() {
                return Err(null("edge array"));
            }
            (
                std::slice::from_raw_parts(src, len),
                std::slice::from_raw_parts(dst, len),
            )
        };
        if n == 0 {
            return Err(GraphError::Empty.into());
        }
        let g = DiGraph::from_edges(n, src.iter().copied().zip(dst.iter().copied()))?;
        *out = Box::into_raw(Box::new(SisbGraph(g)));
        Ok(())
    })
}

/// Random bidirected graph. `p` is the ER edge probability or the NWS shortcut
/// probability; `m` is the BA attachment count; `k` the NWS ring half-degree.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sisb_graph_generate(
    family: SisbFamily,
    n: usize,
    p: f64,
    m: usize,
    k: usize,
    seed: u64,
    out: *mut *mut SisbGraph,
) -> SisbStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let family = match family {
            SisbFamily::Er => Family::Er { p },
            SisbFamily::Ba => Family::Ba { m },
            SisbFamily::Nws => Family::Nws { k, p },
        };
        let g = graph::gen_random(&GraphGenSpec { family, n, seed })?;
        *out = Box::into_raw(Box::new(SisbGraph(g)));
        Ok(())
    })
}

/// New handle holding the largest strongly connected component of `g`.
///
/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sisb_graph_largest_scc(
    g: *const SisbGraph,
    out: *mut *mut SisbGraph,
) -> SisbStatus {
    guard(|| {
        let g = borrow(g, "graph")?;
        let out = out_ptr(out, "out")?;
        let (h, _) = graph::restrict_to_largest_scc(&g.0);
        *out = Box::into_raw(Box::new(SisbGraph(h)));
        Ok(())
    })
}

/// # Safety
/// `g` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sisb_graph_free(g: *mut SisbGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn sisb_graph_node_count(g: *const SisbGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.node_count())
}

/// Directed edge count, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn sisb_graph_edge_count(g: *const SisbGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.edge_count())
}

/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn sisb_graph_is_strongly_connected(g: *const SisbGraph) -> bool {
    g.as_ref().is_some_and(|g| graph::is_strongly_connected(&g.0))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sisb_params_homogeneous(
    n: usize,
    beta: f64,
    delta: f64,
    out: *mut *mut SisbParams,
) -> SisbStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(SisbParams(SisParams::homogeneous(n, beta, delta)?)));
        Ok(())
    })
}

/// Per-node rates copied from two arrays of length `n`.
///
/// # Safety
/// `beta` and `delta` must each point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sisb_params_from_arrays(
    beta: *const f64,
    delta: *const f64,
    n: usize,
    out: *mut *mut SisbParams,
) -> SisbStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if n > 0 && (beta.is_null() || delta.is_null()) {
            return Err(null("rate array"));
        }
        let (b, d) = if n == 0 {
            (Vec::new(), Vec::new())
        } else {
            (
                std::slice::from_raw_parts(beta, n).to_vec(),
                std::slice::from_raw_parts(delta, n).to_vec(),
            )
        };
        *out = Box::into_raw(Box::new(SisbParams(SisParams::new(b, d)?)));
        Ok(())
    })
}

/// `beta_i = c / lambda_max(A)`, `delta_i = 1`.
///
/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sisb_params_beta_fraction(
    g: *const SisbGraph,
    c: f64,
    out: *mut *mut SisbParams,
) -> SisbStatus {
    guard(|| {
        let g = borrow(g, "graph")?;
        let out = out_ptr(out, "out")?;
        let p = SisParams::from_beta_fraction(&g.0, c, &EigOptions::default())?;
        *out = Box::into_raw(Box::new(SisbParams(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sisb_params_free(p: *mut SisbParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// First- and second-order decay-rate bounds.
///
/// # Safety
/// `g` and `params` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sisb_bounds(
    g: *const SisbGraph,
    params: *const SisbParams,
    out: *mut SisbBounds,
) -> SisbStatus {
    guard(|| {
        let g = borrow(g, "graph")?;
        let params = borrow(params, "params")?;
        let out = out_ptr(out, "out")?;
        let r = bounds::compute_bounds(&g.0, &params.0, &EigOptions::default())?;
        *out = SisbBounds {
            n: r.n,
            lambda_max_adjacency: r.lambda_max_adjacency,
            rho1: r.rho1,
            rho2: r.rho2,
            delta_min: r.delta_min,
            strongly_connected: r.strongly_connected,
            solver_iterations: r.solver.iterations,
            solver_residual: r.solver.residual,
        };
        Ok(())
    })
}

/// Exact decay rate; `max_n = 0` selects the library default limit.
///
/// # Safety
/// `g` and `params` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sisb_exact_decay_rate(
    g: *const SisbGraph,
    params: *const SisbParams,
    max_n: usize,
    out: *mut f64,
) -> SisbStatus {
    guard(|| {
        let g = borrow(g, "graph")?;
        let params = borrow(params, "params")?;
        let out = out_ptr(out, "out")?;
        let limit = if max_n == 0 { exact::DEFAULT_MAX_EXACT_N } else { max_n };
        *out = exact::exact_decay_rate_with(&g.0, &params.0, limit)?;
        Ok(())
    })
}

/// Monte Carlo decay-rate estimate from an all-infected start with the
/// automatic fit window.
///
/// # Safety
/// `g` and `params` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sisb_simulate_decay(
    g: *const SisbGraph,
    params: *const SisbParams,
    paths: usize,
    horizon: f64,
    grid_dt: f64,
    seed: u64,
    out: *mut SisbDecay,
) -> SisbStatus {
    guard(|| {
        let g = borrow(g, "graph")?;
        let params = borrow(params, "params")?;
        let out = out_ptr(out, "out")?;
        let cfg = SimConfig {
            paths,
            horizon,
            grid_dt,
            seed,
            initial: InitialState::All,
            fit_window: None,
        };
        let traj = simulator::run_ensemble(&g.0, &params.0, &cfg)?;
        let est = simulator::estimate_decay(&traj, None)?;
        *out = SisbDecay {
            rho_hat: est.rho_hat,
            slope_stderr: est.slope_stderr,
            window_start: est.window.0,
            window_end: est.window.1,
            points: est.points,
        };
        Ok(())
    })
}
