//! `sisbound` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 input, 3 numeric, 4 resource guard.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{self, BoundsError, SisParams};
use crate::exact::{self, ExactError};
use crate::graph::{self, DiGraph, Family, GraphError, GraphGenSpec, ParseOptions};
use crate::simulator::{self, InitialState, SimConfig, SimError};
use crate::spectral::{EigOptions, SpectralError};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Numeric(String),
    Resource(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Resource(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage error", m),
            CliError::Input(m) => ("input error", m),
            CliError::Numeric(m) => ("numeric error", m),
            CliError::Resource(m) => ("resource limit", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::TooLarge { .. } => CliError::Resource(e.to_string()),
            BoundsError::Spectral(s) => s.into(),
            BoundsError::NoSpectralRadius => CliError::Numeric(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ExactError> for CliError {
    fn from(e: ExactError) -> Self {
        match e {
            ExactError::TooLarge { .. } => CliError::Resource(e.to_string()),
            ExactError::Params(b) => b.into(),
            ExactError::Spectral(s) => s.into(),
            ExactError::BadInitial { .. } => CliError::Input(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Io(_) | SimError::Dimension { .. } => CliError::Input(e.to_string()),
            SimError::TooFewPoints(_) | SimError::ZeroSignal => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "sisbound", version, about = "Decay-rate bounds for SIS epidemics on directed networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// First- and second-order lower bounds as JSON.
    Bounds(BoundsArgs),
    /// Monte Carlo trajectory (CSV) and decay fit (JSON).
    Simulate(SimulateArgs),
    /// Exact decay rate from the full Markov chain.
    Exact(ExactArgs),
    /// Generate a random graph edge list.
    Gen(GenArgs),
    /// Sweep random-graph families and compare bounds with simulation.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Edge-list file ("u v" per line means u -> v).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Insert both orientations of every listed edge.
    #[arg(long)]
    pub bidirect: bool,
    /// Homogeneous infection rate.
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Per-node infection rates, one per line.
    #[arg(long)]
    pub beta_file: Option<PathBuf>,
    /// Infection rate c / lambda_max(A) with recovery rate 1.
    #[arg(long)]
    pub beta_frac: Option<f64>,
    /// Homogeneous recovery rate (default 1).
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Per-node recovery rates, one per line.
    #[arg(long)]
    pub delta_file: Option<PathBuf>,
    /// RNG seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value defaults; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of sample paths (default 10000).
    #[arg(long)]
    pub paths: Option<usize>,
    /// Simulated time span (default 100).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Sampling interval (default 0.1).
    #[arg(long)]
    pub grid_dt: Option<f64>,
    /// "all" or a file listing initially infected node ids.
    #[arg(long)]
    pub init: Option<String>,
    /// Fit window "A,B".
    #[arg(long)]
    pub fit_window: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[command(flatten)]
    pub common: Common,
    /// Largest node count accepted for the 2^n-state chain.
    #[arg(long)]
    pub max_n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyName {
    Er,
    Ba,
    Nws,
}

impl FamilyName {
    fn parse(s: &str) -> Result<Self, CliError> {
        <FamilyName as ValueEnum>::from_str(s.trim(), true)
            .map_err(|_| CliError::Usage(format!("unknown family {s:?}")))
    }

    fn name(self) -> &'static str {
        match self {
            FamilyName::Er => "er",
            FamilyName::Ba => "ba",
            FamilyName::Nws => "nws",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct FamilyParams {
    /// ER edge probability / NWS shortcut probability.
    #[arg(long)]
    pub p: Option<f64>,
    /// BA attachment count.
    #[arg(long)]
    pub m: Option<usize>,
    /// NWS ring half-degree.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub family: Option<FamilyName>,
    /// Node count.
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub family_params: FamilyParams,
    /// Keep only the largest strongly connected component.
    #[arg(long)]
    pub scc_restrict: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated families (er,ba,nws).
    #[arg(long)]
    pub families: Option<String>,
    /// Comma-separated node counts.
    #[arg(long)]
    pub sizes: Option<String>,
    /// Comma-separated beta fractions.
    #[arg(long)]
    pub beta_fracs: Option<String>,
    /// Random graphs per cell (default 20).
    #[arg(long)]
    pub realizations: Option<usize>,
    #[command(flatten)]
    pub family_params: FamilyParams,
    /// Number of sample paths (default 10000).
    #[arg(long)]
    pub paths: Option<usize>,
    /// Simulated time span (default 100).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Sampling interval (default 0.1).
    #[arg(long)]
    pub grid_dt: Option<f64>,
}

/// Parsed `key=value` configuration file.
#[derive(Debug, Default)]
struct ConfigFile(HashMap<String, String>);

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut map = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Input(format!("{}:{}: expected key=value", path.display(), lineno + 1))
            })?;
            map.insert(k.trim().replace('_', "-"), v.trim().to_string());
        }
        Ok(ConfigFile(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.0
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        Ok(self.get::<bool>(key)?.unwrap_or(false))
    }
}

fn pick<T: std::str::FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str) -> Result<Option<T>, CliError> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(key),
    }
}

/// Shared flags after merging the config file.
#[derive(Debug, Clone, Default)]
struct Resolved {
    graph: Option<PathBuf>,
    bidirect: bool,
    beta: Option<f64>,
    beta_file: Option<PathBuf>,
    beta_frac: Option<f64>,
    delta: Option<f64>,
    delta_file: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

fn resolve(common: &Common, cfg: &ConfigFile) -> Result<Resolved, CliError> {
    let beta_flags = common.beta.is_some() || common.beta_file.is_some() || common.beta_frac.is_some();
    let delta_flags = common.delta.is_some() || common.delta_file.is_some();
    let empty = ConfigFile::default();
    // A beta mode chosen on the command line replaces every beta key from the file.
    let beta_src = if beta_flags { &empty } else { cfg };
    let delta_src = if delta_flags { &empty } else { cfg };
    Ok(Resolved {
        graph: pick(common.graph.clone(), cfg, "graph")?,
        bidirect: common.bidirect || cfg.flag("bidirect")?,
        beta: pick(common.beta, beta_src, "beta")?,
        beta_file: pick(common.beta_file.clone(), beta_src, "beta-file")?,
        beta_frac: pick(common.beta_frac, beta_src, "beta-frac")?,
        delta: pick(common.delta, delta_src, "delta")?,
        delta_file: pick(common.delta_file.clone(), delta_src, "delta-file")?,
        seed: pick(common.seed, cfg, "seed")?,
        out: pick(common.out.clone(), cfg, "out")?,
    })
}

fn load_graph(r: &Resolved) -> Result<DiGraph, CliError> {
    let path = r
        .graph
        .as_ref()
        .ok_or_else(|| CliError::Usage("--graph is required".into()))?;
    let file = fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let opts = ParseOptions {
        bidirect: r.bidirect,
        node_count: None,
    };
    graph::parse_edge_list(io::BufReader::new(file), opts)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_values(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .flat_map(str::split_whitespace)
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| CliError::Input(format!("{}: bad number {tok:?}", path.display())))
        })
        .collect()
}

fn per_node(values: Vec<f64>, n: usize, path: &Path) -> Result<Vec<f64>, CliError> {
    if values.len() != n {
        return Err(CliError::Input(format!(
            "{}: expected {n} rates, found {}",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}

fn resolve_params(g: &DiGraph, r: &Resolved, opts: &EigOptions) -> Result<SisParams, CliError> {
    let n = g.node_count();
    let modes = usize::from(r.beta.is_some())
        + usize::from(r.beta_file.is_some())
        + usize::from(r.beta_frac.is_some());
    if modes != 1 {
        return Err(CliError::Usage(
            "specify exactly one of --beta, --beta-file, --beta-frac".into(),
        ));
    }
    if r.delta.is_some() && r.delta_file.is_some() {
        return Err(CliError::Usage("specify at most one of --delta, --delta-file".into()));
    }
    let delta = match (&r.delta_file, r.delta) {
        (Some(path), _) => per_node(read_values(path)?, n, path)?,
        (None, Some(d)) => vec![d; n],
        (None, None) => vec![1.0; n],
    };
    let beta = if let Some(b) = r.beta {
        vec![b; n]
    } else if let Some(path) = &r.beta_file {
        per_node(read_values(path)?, n, path)?
    } else {
        let c = r.beta_frac.expect("one beta mode is set");
        if !(c.is_finite() && c > 0.0) {
            return Err(CliError::Usage(format!("--beta-frac must be positive (got {c})")));
        }
        let lambda = bounds::adjacency_lambda_max(g, opts)?.lambda_max;
        if lambda <= 0.0 {
            return Err(CliError::Numeric("adjacency matrix has lambda_max <= 0".into()));
        }
        vec![c / lambda; n]
    };
    Ok(SisParams::new(beta, delta)?)
}

/// Writes via a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => write_atomic(p, bytes).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("report serializes");
    s.push(b'\n');
    s
}

fn cmd_bounds(args: &BoundsArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let r = resolve(&args.common, &cfg)?;
    let opts = EigOptions::default();
    let g = load_graph(&r)?;
    let params = resolve_params(&g, &r, &opts)?;
    let report = bounds::compute_bounds(&g, &params, &opts)?;
    if !report.strongly_connected {
        eprintln!("warning: graph is not strongly connected; strict ordering of the bounds is not guaranteed");
    }
    emit(r.out.as_deref(), &to_json(&report))
}

fn parse_window(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("--fit-window expects A,B (got {s:?})"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_init(s: &str) -> Result<InitialState, CliError> {
    if s == "all" {
        return Ok(InitialState::All);
    }
    let path = Path::new(s);
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{s}: {e}")))?;
    let nodes = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .flat_map(str::split_whitespace)
        .map(|t| t.parse::<usize>().map_err(|_| CliError::Input(format!("{s}: bad node id {t:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(InitialState::Nodes(nodes))
}

#[derive(Serialize)]
struct DecayReport<'a> {
    #[serde(flatten)]
    estimate: &'a simulator::DecayEstimate,
    paths: usize,
    horizon: f64,
    grid_dt: f64,
    seed: u64,
}

fn decay_path(out: &Path) -> PathBuf {
    out.with_extension("decay.json")
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg_file = ConfigFile::load(args.common.config.as_deref())?;
    let r = resolve(&args.common, &cfg_file)?;
    let opts = EigOptions::default();
    let g = load_graph(&r)?;
    let params = resolve_params(&g, &r, &opts)?;
    let defaults = SimConfig::default();
    let init = pick(args.init.clone(), &cfg_file, "init")?;
    let window = pick(args.fit_window.clone(), &cfg_file, "fit-window")?;
    let cfg = SimConfig {
        paths: pick(args.paths, &cfg_file, "paths")?.unwrap_or(defaults.paths),
        horizon: pick(args.horizon, &cfg_file, "horizon")?.unwrap_or(defaults.horizon),
        grid_dt: pick(args.grid_dt, &cfg_file, "grid-dt")?.unwrap_or(defaults.grid_dt),
        seed: r.seed.unwrap_or(defaults.seed),
        initial: init.as_deref().map(parse_init).transpose()?.unwrap_or(InitialState::All),
        fit_window: window.as_deref().map(parse_window).transpose()?,
    };
    let traj = simulator::run_ensemble(&g, &params, &cfg)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    emit(r.out.as_deref(), &csv)?;

    let estimate = simulator::estimate_decay(&traj, cfg.fit_window)?;
    let report = to_json(&DecayReport {
        estimate: &estimate,
        paths: cfg.paths,
        horizon: cfg.horizon,
        grid_dt: cfg.grid_dt,
        seed: cfg.seed,
    });
    match r.out.as_deref() {
        Some(out) => {
            let p = decay_path(out);
            write_atomic(&p, &report).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        }
        None => {
            io::stderr().write_all(&report)?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ExactReport {
    n: usize,
    transient_states: usize,
    rho: f64,
}

fn cmd_exact(args: &ExactArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let r = resolve(&args.common, &cfg)?;
    let opts = EigOptions::default();
    let g = load_graph(&r)?;
    let params = resolve_params(&g, &r, &opts)?;
    let max_n = pick(args.max_n, &cfg, "max-n")?.unwrap_or(exact::DEFAULT_MAX_EXACT_N);
    if max_n > exact::DEFAULT_MAX_EXACT_N && g.node_count() > exact::DEFAULT_MAX_EXACT_N {
        eprintln!(
            "warning: dense solve of a {}-state chain needs about {} MiB",
            (1u64 << g.node_count()) - 1,
            ((1u128 << (2 * g.node_count())) * 8) >> 20
        );
    }
    let rho = exact::exact_decay_rate_with(&g, &params, max_n)?;
    emit(
        r.out.as_deref(),
        &to_json(&ExactReport {
            n: g.node_count(),
            transient_states: (1usize << g.node_count()) - 1,
            rho,
        }),
    )
}

fn family_spec(
    name: FamilyName,
    n: usize,
    fp: &FamilyParams,
    cfg: &ConfigFile,
) -> Result<Family, CliError> {
    Ok(match name {
        FamilyName::Er => {
            let default_p = if n > 1 { (4.0 / (n - 1) as f64).min(1.0) } else { 1.0 };
            Family::Er {
                p: pick(fp.p, cfg, "p")?.unwrap_or(default_p),
            }
        }
        FamilyName::Ba => Family::Ba {
            m: pick(fp.m, cfg, "m")?.unwrap_or(2),
        },
        FamilyName::Nws => Family::Nws {
            k: pick(fp.k, cfg, "k")?.unwrap_or(2),
            p: pick(fp.p, cfg, "p")?.unwrap_or(0.1),
        },
    })
}

fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let r = resolve(&args.common, &cfg)?;
    let family = match args.family {
        Some(f) => f,
        None => match cfg.0.get("family") {
            Some(s) => FamilyName::parse(s)?,
            None => return Err(CliError::Usage("--family is required".into())),
        },
    };
    let n = pick(args.n, &cfg, "n")?.ok_or_else(|| CliError::Usage("--n is required".into()))?;
    let spec = GraphGenSpec {
        family: family_spec(family, n, &args.family_params, &cfg)?,
        n,
        seed: r.seed.unwrap_or(0),
    };
    let mut g = graph::gen_random(&spec)?;
    if args.scc_restrict || cfg.flag("scc-restrict")? {
        g = graph::restrict_to_largest_scc(&g).0;
    }
    emit(r.out.as_deref(), graph::edge_list_string(&g).as_bytes())
}

/// One realization of an experiment sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub family: String,
    pub n: usize,
    pub n_scc: usize,
    pub beta_frac: f64,
    pub seed: u64,
    pub rho1: f64,
    pub rho2: f64,
    pub rho_hat: f64,
    pub e1: f64,
    pub e2: f64,
    pub status: String,
}

pub const EXPERIMENT_HEADER: &str = "family,n,n_scc,beta_frac,seed,rho1,rho2,rho_hat,e1,e2,status";

impl ExperimentRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.family,
            self.n,
            self.n_scc,
            self.beta_frac,
            self.seed,
            self.rho1,
            self.rho2,
            self.rho_hat,
            self.e1,
            self.e2,
            self.status
        )
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    let items = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| CliError::Usage(format!("--{what}: bad entry {t:?}"))))
        .collect::<Result<Vec<T>, _>>()?;
    if items.is_empty() {
        return Err(CliError::Usage(format!("--{what} must not be empty")));
    }
    Ok(items)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of realization `r` in cell `cell` of a sweep seeded with `base`.
pub fn realization_seed(base: u64, cell: u64, r: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(cell)) ^ r)
}

fn run_realization(
    family: FamilyName,
    n: usize,
    beta_frac: f64,
    seed: u64,
    fp: &FamilyParams,
    cfg_file: &ConfigFile,
    sim: &SimConfig,
) -> Result<ExperimentRow, (usize, String)> {
    let opts = EigOptions::default();
    let spec = GraphGenSpec {
        family: family_spec(family, n, fp, cfg_file).map_err(|e| (0, e.to_string()))?,
        n,
        seed,
    };
    let g = graph::gen_random(&spec).map_err(|e| (0, e.to_string()))?;
    let (g, _) = graph::restrict_to_largest_scc(&g);
    let n_scc = g.node_count();
    if n_scc < 2 {
        return Err((n_scc, "largest strongly connected component has fewer than 2 nodes".into()));
    }
    let fail = |e: String| (n_scc, e);
    let params = SisParams::from_beta_fraction(&g, beta_frac, &opts).map_err(|e| fail(e.to_string()))?;
    let (rho1, _) = bounds::rho1(&g, &params, &opts).map_err(|e| fail(e.to_string()))?;
    let (rho2, _) = bounds::rho2(&g, &params, &opts).map_err(|e| fail(e.to_string()))?;
    let sim = SimConfig {
        seed,
        ..sim.clone()
    };
    let traj = simulator::run_ensemble(&g, &params, &sim).map_err(|e| fail(e.to_string()))?;
    let est = simulator::estimate_decay(&traj, sim.fit_window).map_err(|e| fail(e.to_string()))?;
    let rho_hat = est.rho_hat;
    Ok(ExperimentRow {
        family: family.name().into(),
        n,
        n_scc,
        beta_frac,
        seed,
        rho1,
        rho2,
        rho_hat,
        e1: (rho_hat - rho1) / rho_hat,
        e2: (rho_hat - rho2) / rho_hat,
        status: "ok".into(),
    })
}

#[derive(Debug, Clone, Serialize)]
struct CellSummary {
    family: String,
    n: usize,
    beta_frac: f64,
    ok: usize,
    failed: usize,
    mean_rho1: f64,
    mean_rho2: f64,
    mean_rho_hat: f64,
    mean_e1: f64,
    mean_e2: f64,
}

const SUMMARY_HEADER: &str = "family,n,beta_frac,ok,failed,mean_rho1,mean_rho2,mean_rho_hat,mean_e1,mean_e2";

fn summarize(family: &str, n: usize, beta_frac: f64, rows: &[ExperimentRow]) -> CellSummary {
    let ok: Vec<&ExperimentRow> = rows.iter().filter(|r| r.status == "ok").collect();
    let mean = |f: fn(&ExperimentRow) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
        }
    };
    CellSummary {
        family: family.into(),
        n,
        beta_frac,
        ok: ok.len(),
        failed: rows.len() - ok.len(),
        mean_rho1: mean(|r| r.rho1),
        mean_rho2: mean(|r| r.rho2),
        mean_rho_hat: mean(|r| r.rho_hat),
        mean_e1: mean(|r| r.e1),
        mean_e2: mean(|r| r.e2),
    }
}

fn plot_script(summary_csv: &str) -> String {
    format!(
        r#"# Relative errors of the first-order (e1) and second-order (e2) bounds.
import csv
from collections import defaultdict
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open({summary_csv:?})))
fracs = sorted({{float(r["beta_frac"]) for r in rows}}, reverse=True)
markers = {{"er": "o", "ba": "^", "nws": "s"}}
fig, axes = plt.subplots(len(fracs), 1, figsize=(5, 3 * len(fracs)), squeeze=False)
for ax, c in zip(axes[:, 0], fracs):
    series = defaultdict(list)
    for r in rows:
        if float(r["beta_frac"]) == c and int(r["ok"]) > 0:
            series[r["family"]].append((int(r["n"]), float(r["mean_e1"]), float(r["mean_e2"])))
    for fam, pts in sorted(series.items()):
        pts.sort()
        ns = [p[0] for p in pts]
        ax.plot(ns, [p[1] for p in pts], markers.get(fam, "x") + "--", mfc="none", label=fam + " e1")
        ax.plot(ns, [p[2] for p in pts], markers.get(fam, "x") + "-", label=fam + " e2")
    ax.set_title("beta = %g / lambda_max(A)" % c)
    ax.set_xlabel("n")
    ax.set_ylabel("relative error")
    ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig({png:?})
"#,
        png = summary_csv.replace(".summary.csv", ".png"),
    )
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<(), CliError> {
    let cfg_file = ConfigFile::load(args.common.config.as_deref())?;
    let r = resolve(&args.common, &cfg_file)?;
    let need = |flag: Option<String>, key: &str| -> Result<String, CliError> {
        pick(flag, &cfg_file, key)?.ok_or_else(|| CliError::Usage(format!("--{key} is required")))
    };
    let families = need(args.families.clone(), "families")?
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(FamilyName::parse)
        .collect::<Result<Vec<_>, _>>()?;
    if families.is_empty() {
        return Err(CliError::Usage("--families must not be empty".into()));
    }
    let sizes: Vec<usize> = parse_list(&need(args.sizes.clone(), "sizes")?, "sizes")?;
    let fracs: Vec<f64> = parse_list(&need(args.beta_fracs.clone(), "beta-fracs")?, "beta-fracs")?;
    if let Some(c) = fracs.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
        return Err(CliError::Usage(format!("beta fraction must be positive (got {c})")));
    }
    let realizations = pick(args.realizations, &cfg_file, "realizations")?.unwrap_or(20);
    if realizations == 0 {
        return Err(CliError::Usage("--realizations must be at least 1".into()));
    }
    let defaults = SimConfig::default();
    let sim = SimConfig {
        paths: pick(args.paths, &cfg_file, "paths")?.unwrap_or(defaults.paths),
        horizon: pick(args.horizon, &cfg_file, "horizon")?.unwrap_or(defaults.horizon),
        grid_dt: pick(args.grid_dt, &cfg_file, "grid-dt")?.unwrap_or(defaults.grid_dt),
        ..defaults
    };
    sim.validate()?;
    let base = r.seed.unwrap_or(0);

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut cell = 0u64;
    for &family in &families {
        for &n in &sizes {
            for &c in &fracs {
                let mut cell_rows = Vec::with_capacity(realizations);
                for k in 0..realizations as u64 {
                    let seed = realization_seed(base, cell, k);
                    let row = run_realization(family, n, c, seed, &args.family_params, &cfg_file, &sim)
                        .unwrap_or_else(|(n_scc, msg)| {
                            eprintln!("warning: {} n={n} c={c} seed={seed}: {msg}", family.name());
                            ExperimentRow {
                                family: family.name().into(),
                                n,
                                n_scc,
                                beta_frac: c,
                                seed,
                                rho1: f64::NAN,
                                rho2: f64::NAN,
                                rho_hat: f64::NAN,
                                e1: f64::NAN,
                                e2: f64::NAN,
                                status: format!("failed: {}", msg.replace([',', '\n'], ";")),
                            }
                        });
                    cell_rows.push(row);
                }
                summaries.push(summarize(family.name(), n, c, &cell_rows));
                rows.extend(cell_rows);
                cell += 1;
            }
        }
    }

    let mut body = String::from(EXPERIMENT_HEADER);
    body.push('\n');
    for row in &rows {
        body.push_str(&row.csv_line());
        body.push('\n');
    }
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for s in &summaries {
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            s.family, s.n, s.beta_frac, s.ok, s.failed, s.mean_rho1, s.mean_rho2, s.mean_rho_hat, s.mean_e1, s.mean_e2
        ));
    }
    match r.out.as_deref() {
        Some(out) => {
            emit(Some(out), body.as_bytes())?;
            let summary_path = out.with_extension("summary.csv");
            emit(Some(&summary_path), summary.as_bytes())?;
            let script = plot_script(&summary_path.to_string_lossy());
            emit(Some(&out.with_extension("plot.py")), script.as_bytes())?;
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            stdout.write_all(b"\n# summary\n")?;
            stdout.write_all(summary.as_bytes())?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the chosen command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Bounds(a) => cmd_bounds(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Exact(a) => cmd_exact(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sisbound: {e}");
            e.exit_code()
        }
    }
}
