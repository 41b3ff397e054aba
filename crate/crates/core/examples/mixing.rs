//! Monte-Carlo check of the mixing law: moments of the limit U over many
//! randomized runs against quadrature moments of the mixing measure.
//! Usage: `cargo run --release --example mixing -- [n_traj] [t_max]`.

use starvrjp::fixtures::four_vertex;
use starvrjp::stats::{estimate_mixing, RunOptions};

fn main() -> starvrjp::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let t_max: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(10.0);
    let g = four_vertex();
    let r = estimate_mixing(&g, 0, n, t_max, 42, &RunOptions::default())?;
    for e in &r.estimates {
        println!("{:<18} {:>8.4} reference {:>8.4}  z {:>6.2}", e.label, e.value, e.reference, e.z);
    }
    for c in &r.checks {
        println!("{}: {:.2e} (tolerance {})", c.label, c.value, c.tolerance);
    }
    println!("{}", serde_json::to_string(&r).expect("serializable report"));
    Ok(())
}
