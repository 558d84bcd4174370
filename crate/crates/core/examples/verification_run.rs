//! A driver run over a small matrix, written as a JSON report.

use capillary::driver::{run, RunConfig, Subcommand};
use capillary::Model;

fn main() -> capillary::Result<()> {
    let cfg = RunConfig {
        models: vec![Model::Hyperbolic],
        n: vec![2],
        theta: vec![1.0471975511965976],
        res: vec![16, 32],
        ..RunConfig::default()
    };
    let file = run(Subcommand::Convergence, &cfg)?;
    for rec in &file.records {
        println!("{:<70} {:.2e} {:?}", rec.label(), rec.finest(), rec.verdict);
    }
    for s in &file.skipped {
        println!("skipped {}: {}", s.what, s.reason);
    }
    let path = std::env::temp_dir().join("capillary-convergence.json");
    std::fs::write(&path, file.to_json())?;
    println!("report written to {}", path.display());
    Ok(())
}
