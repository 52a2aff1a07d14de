// A reduced run of the simulated design comparison.

use robustfill::study::{run_simulated_example, Recipe, StudyConfig};

pub fn run_example() -> robustfill::Result<()> {
    let cfg = StudyConfig {
        designs: vec![Recipe::TrMaxProLHD, Recipe::DTJCA],
        replications: 4,
        lhd_iters: 5_000,
        jca_restarts: 4,
        ..StudyConfig::default()
    };
    let report = run_simulated_example(&cfg)?;
    println!("config hash {}", report.config_hash);
    for s in &report.summaries {
        println!(
            "{:<12} completed {}/{}  median RMSPE {:.4}  median |x error| {:.4}",
            s.design.name(),
            s.completed,
            s.attempted,
            s.median_rmspe,
            s.median_abs_error
        );
    }
    Ok(())
}

fn main() -> robustfill::Result<()> {
    run_example()
}
