mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use sisbound::bounds::{
    build_first_order, build_gpp, build_proof_matrices, build_second_order, build_second_order_with_budget,
    compute_bounds, propagate_bound, q_index, rho1, rho2, second_order_nnz, BoundsError, StateLabel,
};
use sisbound::exact::{exact_decay_rate, exact_marginals};
use sisbound::spectral::{pattern_is_irreducible, EigOptions};
use sisbound::{DiGraph, SisParams};

use common::*;

fn opts() -> EigOptions {
    EigOptions::default()
}

fn arb_instance() -> impl Strategy<Value = (DiGraph, SisParams)> {
    (3usize..7, any::<u64>()).prop_map(|(n, seed)| {
        let mut r = rng(seed);
        let g = random_strong_digraph(n, 0.3, &mut r);
        let p = random_rates(n, 0.5, 2.0, &mut r);
        (g, p)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bounds_are_ordered((g, p) in arb_instance()) {
        let (r1, _) = rho1(&g, &p, &opts()).unwrap();
        let (r2, _) = rho2(&g, &p, &opts()).unwrap();
        let ex = exact_decay_rate(&g, &p).unwrap();
        prop_assert!(r1 < p.delta_min());
        prop_assert!(r2 > r1);
        prop_assert!(ex >= r2 - 1e-9);
    }

    #[test]
    fn splitting_reconstructs_second_order_matrix((g, p) in arb_instance()) {
        let so = build_second_order(&g, &p).unwrap();
        let pm = build_proof_matrices(&g, &p, 0.0).unwrap();
        let rebuilt = pm.reconstruct();
        let original: Vec<_> = so.matrix().triplets().collect();
        prop_assert_eq!(rebuilt.entries.len(), original.len());
        for (r, c, v) in original {
            prop_assert!((rebuilt.get(r, c) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn propagated_bound_dominates_exact_marginals((g, p) in arb_instance()) {
        let n = g.node_count();
        let so = build_second_order(&g, &p).unwrap();
        let grid: Vec<f64> = (0..=20).map(|k| 0.25 * k as f64).collect();
        let r0 = so.state_from_infected(&vec![true; n]).unwrap();
        let bound = propagate_bound(&so, &r0[..n], &r0[n..], &grid).unwrap();
        let exact = exact_marginals(&g, &p, (1 << n) - 1, &grid).unwrap();
        for (b, e) in bound.iter().zip(&exact) {
            for i in 0..n {
                prop_assert!(e[i] <= b[i] + 1e-9, "exact {} above bound {}", e[i], b[i]);
            }
        }
    }

    #[test]
    fn pair_graph_matches_pattern_of_l((g, p) in arb_instance()) {
        let (r2, _) = rho2(&g, &p, &opts()).unwrap();
        prop_assume!(r2 < p.delta_min());
        let pm = build_proof_matrices(&g, &p, r2).unwrap();
        let l = pm.l.unwrap();
        let from_l: BTreeSet<(usize, usize)> = l.triplets().filter(|(r, c, _)| r != c).map(|(r, c, _)| (r, c)).collect();
        let gpp = build_gpp(&g.reversed()).unwrap();
        let from_gpp: BTreeSet<(usize, usize)> = gpp.edges().collect();
        prop_assert_eq!(from_l, from_gpp);
        prop_assert!(pattern_is_irreducible(&l));
    }
}

#[test]
fn complete_three_node_graph() {
    // Characteristic polynomial of the second-order matrix is
    // lambda (lambda + 3)(lambda + 4)^3 (lambda^2 + 3 lambda + 3)^2.
    let g = complete(3);
    let p = SisParams::homogeneous(3, 1.0, 1.0).unwrap();
    let report = compute_bounds(&g, &p, &opts()).unwrap();
    assert!((report.rho1 + 1.0).abs() < 1e-12);
    assert!(report.rho2.abs() < 1e-10, "{}", report.rho2);
    assert!((report.lambda_max_adjacency - 2.0).abs() < 1e-12);
    let ex = exact_decay_rate(&g, &p).unwrap();
    assert!((ex - 0.2984378812835762).abs() < 1e-9, "{ex}");
    assert!(report.strongly_connected);
}

#[test]
fn two_node_closure_is_exact() {
    let g = directed_cycle(2);
    let p = SisParams::new(vec![1.3, 0.6], vec![0.9, 1.4]).unwrap();
    let so = build_second_order(&g, &p).unwrap();
    let grid: Vec<f64> = (0..=40).map(|k| 0.1 * k as f64).collect();
    for (x0, flags) in [(0b11u64, [true, true]), (0b01, [true, false]), (0b10, [false, true])] {
        let r0 = so.state_from_infected(&flags).unwrap();
        let bound = propagate_bound(&so, &r0[..2], &r0[2..], &grid).unwrap();
        let exact = exact_marginals(&g, &p, x0, &grid).unwrap();
        for (b, e) in bound.iter().zip(&exact) {
            assert!((b[0] - e[0]).abs() < 1e-6 && (b[1] - e[1]).abs() < 1e-6, "{b:?} vs {e:?}");
        }
    }
    let (r2, _) = rho2(&g, &p, &opts()).unwrap();
    let ex = exact_decay_rate(&g, &p).unwrap();
    assert!((r2 - ex).abs() < 1e-9);
}

#[test]
fn second_order_rows_have_expected_support() {
    let mut r = rng(3);
    for _ in 0..20 {
        let n = 5;
        let g = random_strong_digraph(n, 0.3, &mut r);
        let p = random_rates(n, 0.5, 2.0, &mut r);
        let so = build_second_order(&g, &p).unwrap();
        assert_eq!(so.matrix().nnz(), second_order_nnz(&g));
        assert_eq!(so.matrix().nnz(), n + 2 * n * (n - 1) + (n - 1) * g.edge_count());
        for row in 0..so.dim() {
            let cols: BTreeSet<usize> = so.matrix().row(row).map(|(c, _)| c).collect();
            let expected: BTreeSet<usize> = match so.label(row) {
                StateLabel::P(i) => std::iter::once(i)
                    .chain(g.in_neighbors(i).iter().map(|&k| q_index(i, k, n).unwrap()))
                    .collect(),
                StateLabel::Q(i, j) => [j, row]
                    .into_iter()
                    .chain(g.in_neighbors(j).iter().filter(|&&k| k != i).map(|&k| q_index(i, k, n).unwrap()))
                    .collect(),
            };
            assert_eq!(cols, expected, "row {row}");
            if let StateLabel::Q(i, j) = so.label(row) {
                let gamma = p.delta()[i] + p.delta()[j] + if g.adjacent(i, j) { p.beta()[i] } else { 0.0 };
                assert!((so.matrix().get(row, row) + gamma).abs() < 1e-14);
                assert_eq!(so.matrix().get(row, j), p.delta()[i]);
            }
        }
    }
}

#[test]
fn first_order_matrix_entries() {
    let g = DiGraph::from_edges(3, [(0, 1), (1, 2), (2, 0), (0, 2)]).unwrap();
    let p = SisParams::new(vec![0.5, 0.7, 1.1], vec![1.3, 0.4, 2.2]).unwrap();
    let m = build_first_order(&g, &p).unwrap().to_dense();
    // Row i holds beta_i at each in-neighbor column.
    let expected = nalgebra::dmatrix![
        -1.3, 0.0, 0.5;
        0.7, -0.4, 0.0;
        1.1, 1.1, -2.2
    ];
    assert_eq!(m, expected);
}

#[test]
fn state_vector_from_infected_set() {
    let g = directed_cycle(3);
    let p = SisParams::homogeneous(3, 1.0, 1.0).unwrap();
    let so = build_second_order(&g, &p).unwrap();
    let r = so.state_from_infected(&[true, false, true]).unwrap();
    assert_eq!(&r[..3], &[1.0, 0.0, 1.0]);
    for i in 0..3 {
        for j in (0..3).filter(|&j| j != i) {
            // q_ij is "i susceptible, j infected".
            let expect = (i == 1 && j != 1) as u8 as f64;
            assert_eq!(r[so.q_index(i, j).unwrap()], expect);
        }
    }
}

#[test]
fn error_paths() {
    let g = directed_cycle(3);
    let p = SisParams::homogeneous(3, 1.0, 1.0).unwrap();
    assert!(matches!(
        build_second_order_with_budget(&g, &p, 10),
        Err(BoundsError::TooLarge { .. })
    ));
    let p2 = SisParams::homogeneous(2, 1.0, 1.0).unwrap();
    assert!(matches!(rho1(&g, &p2, &opts()), Err(BoundsError::Dimension { .. })));
    let so = build_second_order(&g, &p).unwrap();
    assert!(propagate_bound(&so, &[1.0; 3], &[1.0; 5], &[0.0]).is_err());
    assert!(propagate_bound(&so, &[1.5, 0.0, 0.0], &[0.0; 6], &[0.0]).is_err());
    assert!(build_gpp(&DiGraph::empty(1)).is_err());
    // Single node: the second-order matrix degenerates to -delta.
    let one = DiGraph::empty(1);
    let p1 = SisParams::homogeneous(1, 1.0, 2.5).unwrap();
    assert!((rho2(&one, &p1, &opts()).unwrap().0 - 2.5).abs() < 1e-14);
}

#[test]
fn report_json_schema() {
    let g = karate();
    let p = SisParams::from_beta_fraction(&g, 0.9, &opts()).unwrap();
    let report = compute_bounds(&g, &p, &opts()).unwrap();
    assert!((report.rho1 - 0.1).abs() < 1e-8);
    assert!((report.lambda_max_adjacency - 6.725697727631747).abs() < 1e-8);
    assert!(report.rho2 > report.rho1 && report.rho2 < 1.0);
    let v: serde_json::Value = serde_json::to_value(&report).unwrap();
    let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    let expected: BTreeSet<&str> =
        ["n", "lambda_max_adjacency", "rho1", "rho2", "delta_min", "strongly_connected", "solver"].into();
    assert_eq!(keys, expected);
    let solver: BTreeSet<&str> = v["solver"].as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(solver, ["iterations", "residual"].into());
}

#[test]
fn dense_solver_does_not_stall() {
    // Random ER realization whose second-order matrix made an uncapped
    // Francis QR sweep loop forever.
    use sisbound::graph::{gen_random, restrict_to_largest_scc, Family, GraphGenSpec};
    let spec = GraphGenSpec { family: Family::Er { p: 4.0 / 11.0 }, n: 12, seed: 2558736989570252433 };
    let g = restrict_to_largest_scc(&gen_random(&spec).unwrap()).0;
    let p = SisParams::from_beta_fraction(&g, 0.9, &opts()).unwrap();
    let (dense, _) = rho2(&g, &p, &opts()).unwrap();
    let power = EigOptions { tol: 1e-13, ..EigOptions::default() }.power_only();
    let (iter, _) = rho2(&g, &p, &power).unwrap();
    assert!((dense - iter).abs() < 1e-8, "{dense} vs {iter}");
}
