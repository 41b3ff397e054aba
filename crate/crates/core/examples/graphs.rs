//! Building ⋆-graphs: named fixtures, de Bruijn and doubled constructions,
//! validation errors and the divergence condition for ⋆-ERRW weights.

use starvrjp::fixtures::{four_vertex, three_vertex};
use starvrjp::graph::{check_divergence_condition, de_bruijn_graph, doubled_graph, GraphSpec, StarGraph, DEFAULT_SIZE_CAP};

fn describe(label: &str, g: &StarGraph) {
    let v1: Vec<String> = g.v1().iter().map(|&i| format!("({}, {})", g.name(i), g.name(g.dual_vertex(i)))).collect();
    println!(
        "{label}: {} vertices, {} edges, {} edge classes, V0 = {:?}, V1 = [{}], hash {}",
        g.n(),
        g.edges().len(),
        g.edge_classes().len(),
        g.v0().iter().map(|&i| g.name(i)).collect::<Vec<_>>(),
        v1.join(", "),
        g.hash()
    );
}

fn main() -> starvrjp::Result<()> {
    describe("four_vertex", &four_vertex());
    describe("de Bruijn (2, 3)", &de_bruijn_graph(2, 3, 1.0, DEFAULT_SIZE_CAP)?);
    describe("doubled 3-cycle glued at 0", &doubled_graph(3, &[(0, 1, 1.0), (1, 2, 2.0), (2, 0, 0.5)], Some(0))?);

    // W_{a,c} must equal W_{c*,a*} = W_{c,a*}.
    let bad = GraphSpec {
        names: vec!["a".into(), "a*".into(), "c".into()],
        star: vec![1, 0, 2],
        edges: vec![(0, 1, 1.0), (1, 0, 1.0), (0, 2, 2.0), (2, 1, 1.0), (2, 0, 1.0), (1, 2, 1.0)],
        require_connected: true,
    };
    match StarGraph::from_spec(bad) {
        Ok(_) => println!("unexpectedly valid"),
        Err(e) => println!("rejected: {e}"),
    }

    for (x, y, p, q) in [(1.0, 2.0, 1.0, 1.0), (1.0, 1.0, 1.0, 1.0)] {
        let g = three_vertex(x, y, p, q);
        let holds = check_divergence_condition(&g, g.weights(), 0);
        println!("three_vertex({x}, {y}, {p}, {q}) from a: divergence condition {holds}");
    }
    Ok(())
}
