//! Directed contact networks.
//!
//! An edge `(u, v)` is a directed edge from `u` to `v`, so `u` is an
//! in-neighbor of `v` and the adjacency entry `a[v][u]` is 1. Every consumer in
//! this crate reads the graph through [`DiGraph::adjacent`] or the neighbor
//! lists, which keeps the orientation convention in one place.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: self-loop on node {node}")]
    SelfLoop { line: usize, node: usize },
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoopEdge(usize),
    #[error("graph has no nodes")]
    Empty,
    #[error("invalid generator parameters: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Directed graph on nodes `0..n` without self-loops or parallel edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph {
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
    edges: usize,
}

impl DiGraph {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        DiGraph {
            out: vec![Vec::new(); n],
            inc: vec![Vec::new(); n],
            edges: 0,
        }
    }

    /// Builds a graph from directed edges `(u, v)`; duplicates are merged.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut out = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::NodeOutOfRange(u, v, n));
            }
            if u == v {
                return Err(GraphError::SelfLoopEdge(u));
            }
            out[u].push(v);
        }
        let mut inc = vec![Vec::new(); n];
        let mut count = 0;
        for (u, list) in out.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            count += list.len();
            for &v in list.iter() {
                inc[v].push(u);
            }
        }
        // `inc` lists are filled in increasing `u`, hence already sorted.
        Ok(DiGraph {
            out,
            inc,
            edges: count,
        })
    }

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    /// Out-neighbors of `u`, ascending.
    pub fn out_neighbors(&self, u: usize) -> &[usize] {
        &self.out[u]
    }

    /// In-neighbors of `v`, ascending. These are the nodes `j` with `a[v][j] = 1`.
    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        &self.inc[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.out[u].binary_search(&v).is_ok()
    }

    /// Adjacency entry `a[i][j]`: true iff `j` is an in-neighbor of `i`.
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.has_edge(j, i)
    }

    /// All edges in lexicographic `(u, v)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v)))
    }

    /// The graph with every edge reversed.
    pub fn reversed(&self) -> DiGraph {
        DiGraph {
            out: self.inc.clone(),
            inc: self.out.clone(),
            edges: self.edges,
        }
    }

    /// True iff `a[i][j] = a[j][i]` for every pair.
    pub fn is_bidirected(&self) -> bool {
        self.edges().all(|(u, v)| self.has_edge(v, u))
    }

    /// Induced subgraph on `keep` (ascending original ids), relabeled `0..keep.len()`.
    pub fn induced(&self, keep: &[usize]) -> DiGraph {
        let mut map = vec![usize::MAX; self.node_count()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let edges = self
            .edges()
            .filter(|&(u, v)| map[u] != usize::MAX && map[v] != usize::MAX)
            .map(|(u, v)| (map[u], map[v]));
        DiGraph::from_edges(keep.len(), edges).expect("induced edges are valid")
    }
}

/// Options for [`parse_edge_list`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Insert the reverse of every listed edge as well.
    pub bidirect: bool,
    /// Node count override; must cover every listed id.
    pub node_count: Option<usize>,
}

/// Reads the plain edge-list format: one `u v` pair per line, `#` comments,
/// blank lines, and an optional `n=N` directive.
pub fn parse_edge_list<R: BufRead>(reader: R, opts: ParseOptions) -> Result<DiGraph, GraphError> {
    let mut edges = Vec::new();
    let mut directive: Option<usize> = None;
    let mut max_id: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("n=") {
            let n = rest.trim().parse::<usize>().map_err(|_| GraphError::Parse {
                line: lineno,
                msg: format!("bad node-count directive {line:?}"),
            })?;
            directive = Some(n);
            continue;
        }
        let mut tokens = line.split_whitespace();
        let (a, b) = match (tokens.next(), tokens.next(), tokens.next()) {
            (Some(a), Some(b), None) => (a, b),
            (_, _, Some(_)) => {
                return Err(GraphError::Parse {
                    line: lineno,
                    msg: "expected exactly two node ids".into(),
                })
            }
            _ => {
                return Err(GraphError::Parse {
                    line: lineno,
                    msg: "expected two node ids".into(),
                })
            }
        };
        let u = parse_id(a, lineno)?;
        let v = parse_id(b, lineno)?;
        if u == v {
            return Err(GraphError::SelfLoop {
                line: lineno,
                node: u,
            });
        }
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
        if opts.bidirect {
            edges.push((v, u));
        }
    }
    let implied = max_id.map_or(0, |m| m + 1);
    let n = match opts.node_count.or(directive) {
        Some(n) if n < implied => {
            return Err(GraphError::Parse {
                line: 0,
                msg: format!("node count {n} is smaller than 1 + max id ({implied})"),
            })
        }
        Some(n) => n,
        None => implied,
    };
    if n == 0 {
        return Err(GraphError::Empty);
    }
    DiGraph::from_edges(n, edges)
}

fn parse_id(token: &str, line: usize) -> Result<usize, GraphError> {
    let value: i64 = token.parse().map_err(|_| GraphError::Parse {
        line,
        msg: format!("non-integer node id {token:?}"),
    })?;
    usize::try_from(value).map_err(|_| GraphError::Parse {
        line,
        msg: format!("negative node id {value}"),
    })
}

/// Convenience wrapper over [`parse_edge_list`] for in-memory text.
pub fn parse_edge_list_str(text: &str, opts: ParseOptions) -> Result<DiGraph, GraphError> {
    parse_edge_list(text.as_bytes(), opts)
}

/// Writes edges sorted by `(u, v)`. An `n=N` directive is emitted only when the
/// node count is not implied by the largest id.
pub fn write_edge_list<W: Write>(g: &DiGraph, mut w: W) -> std::io::Result<()> {
    let implied = g.edges().map(|(u, v)| u.max(v) + 1).max().unwrap_or(0);
    if implied != g.node_count() {
        writeln!(w, "n={}", g.node_count())?;
    }
    for (u, v) in g.edges() {
        writeln!(w, "{u} {v}")?;
    }
    Ok(())
}

pub fn edge_list_string(g: &DiGraph) -> String {
    let mut buf = Vec::new();
    write_edge_list(g, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("edge list is ASCII")
}

fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

/// One forward and one backward sweep from node 0.
pub fn is_strongly_connected(g: &DiGraph) -> bool {
    if g.node_count() == 0 {
        return false;
    }
    reachable(&g.out, 0).into_iter().all(|b| b) && reachable(&g.inc, 0).into_iter().all(|b| b)
}

/// Strongly connected components (iterative Tarjan). Each component is sorted
/// ascending; components come out in reverse topological order.
pub fn strongly_connected_components(g: &DiGraph) -> Vec<Vec<usize>> {
    let n = g.node_count();
    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0;
    // (node, position in its out-list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (u, ref mut pos)) = call.last_mut() {
            if let Some(&v) = g.out[u].get(*pos) {
                *pos += 1;
                if index[v] == UNVISITED {
                    index[v] = next;
                    low[v] = next;
                    next += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    call.push((v, 0));
                } else if on_stack[v] {
                    low[u] = low[u].min(index[v]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[u]);
            }
            if low[u] == index[u] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == u {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps
}

/// Induced subgraph on the largest strongly connected component, plus the map
/// from new ids to original ids. Among equally large components the one
/// holding the smallest original id wins.
pub fn restrict_to_largest_scc(g: &DiGraph) -> (DiGraph, Vec<usize>) {
    let comps = strongly_connected_components(g);
    let best = comps
        .into_iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
        .unwrap_or_default();
    (g.induced(&best), best)
}

/// Random graph families. All of them emit bidirected graphs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    /// Erdős–Rényi: each unordered pair independently with probability `p`.
    Er { p: f64 },
    /// Barabási–Albert: clique on `m` nodes, then each new node attaches to
    /// `m` distinct existing nodes with probability proportional to degree.
    Ba { m: usize },
    /// Newman–Watts–Strogatz: ring with `k` neighbors per side, then one
    /// shortcut per ring edge with probability `p`. No rewiring.
    Nws { k: usize, p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphGenSpec {
    pub family: Family,
    pub n: usize,
    pub seed: u64,
}

impl GraphGenSpec {
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |msg: String| Err(GraphError::InvalidSpec(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        match self.family {
            Family::Er { p } | Family::Nws { p, .. } if !(0.0..=1.0).contains(&p) => {
                bad(format!("probability {p} outside [0, 1]"))
            }
            Family::Ba { m } if m == 0 || m >= self.n => {
                bad(format!("BA needs 1 <= m < n (m={m}, n={})", self.n))
            }
            Family::Nws { k, .. } if k == 0 || 2 * k >= self.n => {
                bad(format!("NWS needs 1 <= k and 2k < n (k={k}, n={})", self.n))
            }
            _ => Ok(()),
        }
    }
}

/// Deterministic given `spec.seed`.
pub fn gen_random(spec: &GraphGenSpec) -> Result<DiGraph, GraphError> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    match spec.family {
        Family::Er { p } => {
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen::<f64>() < p {
                        pairs.push((i, j));
                    }
                }
            }
        }
        Family::Ba { m } => {
            // Each node appears in `targets` once per incident edge.
            let mut targets: Vec<usize> = Vec::new();
            for i in 0..m {
                for j in i + 1..m {
                    pairs.push((i, j));
                    targets.push(i);
                    targets.push(j);
                }
            }
            for new in m..n {
                let mut chosen: Vec<usize> = Vec::with_capacity(m);
                while chosen.len() < m {
                    let pick = if targets.is_empty() {
                        rng.gen_range(0..new)
                    } else {
                        *targets.choose(&mut rng).expect("nonempty")
                    };
                    if !chosen.contains(&pick) {
                        chosen.push(pick);
                    }
                }
                for &t in &chosen {
                    pairs.push((t, new));
                    targets.push(t);
                    targets.push(new);
                }
            }
        }
        Family::Nws { k, p } => {
            let mut neighbors = vec![std::collections::BTreeSet::new(); n];
            let mut ring = Vec::new();
            for i in 0..n {
                for d in 1..=k {
                    let j = (i + d) % n;
                    ring.push((i, j));
                    neighbors[i].insert(j);
                    neighbors[j].insert(i);
                }
            }
            for &(u, _) in &ring {
                if rng.gen::<f64>() < p {
                    if neighbors[u].len() >= n - 1 {
                        continue;
                    }
                    let mut w = rng.gen_range(0..n);
                    while w == u || neighbors[u].contains(&w) {
                        w = rng.gen_range(0..n);
                    }
                    neighbors[u].insert(w);
                    neighbors[w].insert(u);
                }
            }
            for (u, set) in neighbors.iter().enumerate() {
                pairs.extend(set.iter().filter(|&&v| u < v).map(|&v| (u, v)));
            }
        }
    }
    DiGraph::from_edges(n, pairs.into_iter().flat_map(|(u, v)| [(u, v), (v, u)]))
}
