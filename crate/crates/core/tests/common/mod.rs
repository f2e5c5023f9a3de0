#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sisbound::graph::{parse_edge_list, ParseOptions};
use sisbound::{DiGraph, SisParams};

pub fn karate() -> DiGraph {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/karate.txt");
    let f = std::fs::File::open(path).expect("karate data");
    parse_edge_list(
        std::io::BufReader::new(f),
        ParseOptions {
            bidirect: true,
            node_count: None,
        },
    )
    .unwrap()
}

pub fn graph(n: usize, edges: &[(usize, usize)]) -> DiGraph {
    DiGraph::from_edges(n, edges.iter().copied()).unwrap()
}

pub fn bidirected(n: usize, edges: &[(usize, usize)]) -> DiGraph {
    DiGraph::from_edges(n, edges.iter().flat_map(|&(u, v)| [(u, v), (v, u)])).unwrap()
}

pub fn directed_cycle(n: usize) -> DiGraph {
    DiGraph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
}

pub fn complete(n: usize) -> DiGraph {
    DiGraph::from_edges(n, (0..n).flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))).unwrap()
}

/// Random strongly connected digraph: a Hamiltonian cycle through a random
/// permutation plus each remaining ordered pair with probability `density`.
pub fn random_strong_digraph<R: Rng>(n: usize, density: f64, rng: &mut R) -> DiGraph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|k| (order[k], order[(k + 1) % n])).collect();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.gen::<f64>() < density {
                edges.push((u, v));
            }
        }
    }
    DiGraph::from_edges(n, edges).unwrap()
}

pub fn random_rates<R: Rng>(n: usize, lo: f64, hi: f64, rng: &mut R) -> SisParams {
    let beta = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    let delta = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    SisParams::new(beta, delta).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
