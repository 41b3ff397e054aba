//! Small named graphs and a random graph generator, shared by examples,
//! tests and the command-line tool.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::{build_star_graph, GraphSpec, StarGraph};

/// Two vertices `1, 1*` with `W_{1,1*} = wa`, `W_{1*,1} = wb`.
pub fn dual_pair(wa: f64, wb: f64) -> StarGraph {
    named(vec!["1", "1*"], vec![1, 0], vec![(0, 1, wa), (1, 0, wb)])
}

/// A single dual pair `a, a*` (indices 0, 1) and a self-dual vertex `c`
/// (index 2). Weights: `a→a*` = `x`, `a*→a` = `y`, the class
/// `{a→c, c→a*}` = `p`, the class `{c→a, a*→c}` = `q`.
pub fn three_vertex(x: f64, y: f64, p: f64, q: f64) -> StarGraph {
    named(
        vec!["a", "a*", "c"],
        vec![1, 0, 2],
        vec![(0, 1, x), (1, 0, y), (0, 2, p), (2, 1, p), (2, 0, q), (1, 2, q)],
    )
}

/// Initial weights on [`three_vertex`] satisfying the divergence condition
/// for the start `a`.
pub fn three_vertex_balanced() -> StarGraph {
    three_vertex(1.0, 2.0, 1.0, 1.0)
}

/// One dual pair `a, a*` and two self-dual vertices `c, d`.
pub fn four_vertex() -> StarGraph {
    named(
        vec!["a", "a*", "c", "d"],
        vec![1, 0, 2, 3],
        vec![
            (0, 1, 1.0),
            (1, 0, 1.5),
            (0, 2, 0.8),
            (2, 1, 0.8),
            (2, 0, 1.2),
            (1, 2, 1.2),
            (2, 3, 1.0),
            (3, 2, 1.0),
            (0, 3, 0.6),
            (3, 1, 0.6),
            (3, 0, 0.9),
            (1, 3, 0.9),
        ],
    )
}

/// Dual pair `a, a*` attached to both ends of the self-dual path
/// `c - d - e - f`.
pub fn six_vertex() -> StarGraph {
    named(
        vec!["a", "a*", "c", "d", "e", "f"],
        vec![1, 0, 2, 3, 4, 5],
        vec![
            (0, 1, 1.0),
            (1, 0, 1.5),
            (0, 2, 0.8),
            (2, 1, 0.8),
            (2, 0, 1.2),
            (1, 2, 1.2),
            (2, 3, 1.0),
            (3, 2, 1.0),
            (3, 4, 0.7),
            (4, 3, 0.7),
            (4, 5, 1.0),
            (5, 4, 1.0),
            (0, 5, 0.6),
            (5, 1, 0.6),
            (5, 0, 0.9),
            (1, 5, 0.9),
        ],
    )
}

/// Complete graph on `n` self-dual vertices with unit weights.
pub fn complete_undirected(n: usize) -> StarGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                edges.push((i, j, 1.0));
            }
        }
    }
    build_star_graph((0..n).collect(), edges).expect("complete graph is valid")
}

fn named(names: Vec<&str>, star: Vec<usize>, edges: Vec<(usize, usize, f64)>) -> StarGraph {
    StarGraph::from_spec(GraphSpec {
        names: names.into_iter().map(String::from).collect(),
        star,
        edges,
        require_connected: true,
    })
    .expect("fixture graph is valid")
}

/// Random strongly connected ⋆-graph on `n >= 2` vertices with `pairs` dual
/// pairs (`2 * pairs <= n`) and weights drawn uniformly in `[lo, hi]` per
/// edge class. Extra edges appear with probability `density`.
pub fn random_star_graph<R: Rng>(rng: &mut R, n: usize, pairs: usize, density: f64, lo: f64, hi: f64) -> StarGraph {
    assert!(n >= 2 && 2 * pairs <= n);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut star: Vec<usize> = (0..n).collect();
    for k in 0..pairs {
        let (a, b) = (perm[2 * k], perm[2 * k + 1]);
        star[a] = b;
        star[b] = a;
    }
    let mut adj = vec![vec![false; n]; n];
    let add = |adj: &mut Vec<Vec<bool>>, i: usize, j: usize| {
        if i != j {
            adj[i][j] = true;
            adj[star[j]][star[i]] = true;
        }
    };
    perm.shuffle(rng);
    for k in 0..n {
        add(&mut adj, perm[k], perm[(k + 1) % n]);
    }
    for i in 0..n {
        for j in 0..n {
            if rng.random::<f64>() < density {
                add(&mut adj, i, j);
            }
        }
    }
    let mut weight = vec![vec![0.0; n]; n];
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if adj[i][j] && weight[i][j] == 0.0 {
                let w = lo + (hi - lo) * rng.random::<f64>();
                weight[i][j] = w;
                weight[star[j]][star[i]] = w;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if adj[i][j] {
                edges.push((i, j, weight[i][j]));
            }
        }
    }
    build_star_graph(star, edges).expect("random graph is valid")
}
