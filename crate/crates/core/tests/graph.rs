use std::collections::HashMap;

use mqne_core::blockgraph::{
    allowed_successor, build_graph, extend_path, random_path, walk_from, BlockGraph, Path, StartPolicy,
};
use mqne_core::gateblock::{enumerate_library, BlockLibrary, Gate, GateBlock, LibraryMode, LibrarySpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn qubits(g: &Gate) -> Vec<usize> {
    match *g {
        Gate::Rot { qubit } => vec![qubit],
        Gate::Crx { control, target } => vec![control, target],
    }
}

/// `y` may follow `x` when it has a gate, none of its gates could slide into `x`
/// without overlapping, and none repeats a gate of `x` verbatim.
fn oracle(x: &GateBlock, y: &GateBlock) -> bool {
    let xg: Vec<Gate> = x.gates().collect();
    let touched: Vec<usize> = xg.iter().flat_map(qubits).collect();
    let yg: Vec<Gate> = y.gates().collect();
    !yg.is_empty()
        && yg.iter().all(|g| {
            let blocked = qubits(g).iter().any(|q| touched.contains(q));
            blocked && !xg.contains(g)
        })
}

fn full(k: usize) -> BlockLibrary {
    enumerate_library(&LibrarySpec::new(k, LibraryMode::Full)).unwrap()
}

#[test]
fn adjacency_equals_brute_force_for_small_k() {
    for k in 1..=4 {
        let lib = full(k);
        for exclude in [true, false] {
            let g = build_graph(&lib, exclude).unwrap();
            for (i, x) in lib.blocks().iter().enumerate() {
                for (j, y) in lib.blocks().iter().enumerate() {
                    let both = g.is_node(i) && g.is_node(j);
                    assert_eq!(g.has_edge(i, j), both && oracle(x, y), "k={k} {i}->{j}");
                    assert_eq!(allowed_successor(x, y).unwrap(), oracle(x, y));
                }
                assert!(!g.has_edge(i, i));
            }
        }
    }
}

#[test]
fn nonadjacent_rules_match_brute_force() {
    let lib = enumerate_library(&LibrarySpec::new(4, LibraryMode::NonAdjacent)).unwrap();
    let g = build_graph(&lib, true).unwrap();
    for (i, x) in lib.blocks().iter().enumerate() {
        for (j, y) in lib.blocks().iter().enumerate() {
            if g.is_node(i) && g.is_node(j) {
                assert_eq!(g.has_edge(i, j), oracle(x, y));
            }
        }
    }
}

#[test]
fn every_nonempty_node_has_a_successor_from_two_qubits() {
    for k in 2..=7 {
        let g = build_graph(&full(k), true).unwrap();
        assert!(g.nodes().iter().all(|&x| g.out_degree(x) > 0), "k={k}");
    }
}

#[test]
fn sampled_paths_obey_the_rules() {
    let lib = full(7);
    let g = build_graph(&lib, true).unwrap();
    let start = StartPolicy::all_rotations(&lib).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..10_000 {
        let policy = if i % 2 == 0 { start } else { StartPolicy::UniformRandom };
        let mut p = random_path(&g, 3, policy, &mut rng).unwrap();
        for _ in 0..3 {
            p = extend_path(&g, &p, 2, &mut rng).unwrap();
        }
        assert_eq!(p.len(), 9);
        for w in p.nodes().windows(2) {
            assert!(oracle(&lib.blocks()[w[0]], &lib.blocks()[w[1]]));
        }
        g.validate_path(&p).unwrap();
    }
}

#[test]
fn transitions_are_uniform() {
    let lib = full(7);
    let g = build_graph(&lib, true).unwrap();
    let x = lib.all_rotations_index().unwrap();
    let succ = g.successors(x);
    let draws = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for _ in 0..draws {
        *counts.entry(walk_from(&g, x, 1, &mut rng).unwrap()[0]).or_default() += 1;
    }
    assert_eq!(counts.len(), succ.len());
    let expected = draws as f64 / succ.len() as f64;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dof = (succ.len() - 1) as f64;
    assert!((chi2 - dof).abs() <= 3.0 * (2.0 * dof).sqrt(), "chi2 {chi2} with {dof} dof");
}

#[test]
fn extension_depends_only_on_last_node() {
    let lib = full(5);
    let g = build_graph(&lib, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_path(&g, 4, StartPolicy::UniformRandom, &mut rng).unwrap();
    let last = a.last();
    // A different history ending at the same node.
    let pred = g.nodes().iter().copied().find(|&p| g.has_edge(p, last) && p != a.nodes()[2]).unwrap();
    let b = Path::new(vec![pred, last]).unwrap();
    g.validate_path(&b).unwrap();
    for seed in 0..50 {
        let ea = extend_path(&g, &a, 6, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let eb = extend_path(&g, &b, 6, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(ea.nodes()[4..], eb.nodes()[2..]);
        assert_eq!(ea.nodes()[..4], a.nodes()[..]);
    }
}

#[test]
fn graph_text_round_trip_at_seven_qubits() {
    let g = build_graph(&full(7), true).unwrap();
    let back = BlockGraph::from_adjacency_text(&g.to_adjacency_text()).unwrap();
    assert_eq!(back.edge_count(), g.edge_count());
    for &x in g.nodes() {
        assert_eq!(back.successors(x), g.successors(x));
    }
}
