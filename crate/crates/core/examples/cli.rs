//! Drives the command-line front end on the bundled configuration files,
//! writing reports under the system temporary directory.

use std::path::Path;

fn main() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs");
    let out = std::env::temp_dir().join("starvrjp-cli-example");
    for (cmd, file) in [
        ("validate", "simulate.toml"),
        ("validate", "asymmetric.toml"),
        ("verify", "verify.toml"),
        ("simulate", "simulate.toml"),
        ("estimate", "estimate.toml"),
    ] {
        let dir = out.join(cmd);
        let config = configs.join(file);
        let args = ["starvrjp", cmd, "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap()];
        let code = starvrjp::cli::main_with_args(args);
        println!("{cmd} {file}: exit {code}");
    }
    println!("outputs in {}", out.display());
}
