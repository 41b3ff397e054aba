//! ⋆-ERRW sampling, exact partial exchangeability by path enumeration and
//! the gamma mixture of ⋆-VRJP jump chains.

use starvrjp::fixtures::{three_vertex, three_vertex_balanced};
use starvrjp::simulate::{errw_path_probability, run_errw, stream_rng};
use starvrjp::stats::{test_exchangeability, test_gamma_mixture, ExchangeMode};

fn main() -> starvrjp::Result<()> {
    let g = three_vertex_balanced();
    let alpha = g.weights().clone();
    let mut rng = stream_rng(1, 0);
    let path = run_errw(&g, &alpha, 0, 8, &mut rng);
    let names: Vec<&str> = path.iter().map(|&v| g.name(v)).collect();
    println!("ERRW path from a: {names:?}, probability {:.3e}", errw_path_probability(&g, &alpha, 0, &path)?);

    let ok = test_exchangeability(&g, &ExchangeMode::Errw(alpha.clone()), 0, 6)?;
    let bad_graph = three_vertex(1.0, 1.0, 1.0, 1.0);
    let bad = test_exchangeability(&bad_graph, &ExchangeMode::Errw(bad_graph.weights().clone()), 0, 6)?;
    let vrjp = test_exchangeability(&g, &ExchangeMode::RandomizedVrjp, 0, 6)?;
    for r in [&ok, &bad, &vrjp] {
        println!("{}: spread {:.2e}, pass {}", r.name, r.checks[0].value, r.pass);
    }

    let mix = test_gamma_mixture(&g, &alpha, 0, 4, 20_000, 2, false)?;
    println!("gamma mixture vs exact ERRW: p = {:.3}, pass {}", mix.chi_square[0].p_value, mix.pass);
    Ok(())
}
