// Optimal one-dimensional design when the control setting is perturbed by internal noise.

use robustfill::criteria::{imse_internal, InternalNoiseSpec};
use robustfill::generators::{optimal_internal_design, uniform_design};

pub fn run_example() -> robustfill::Result<()> {
    let spec = InternalNoiseSpec::new(1.0 / 12.0, 50.0)?;
    let opt = optimal_internal_design(10, &spec, 0)?;
    let grid: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
    println!("optimized points: {:?}", opt.points.iter().map(|p| (p * 1e4).round() / 1e4).collect::<Vec<_>>());
    println!("expected IMSE: optimized {:.6e}", opt.imse);
    println!("               endpoint grid {:.6e}", imse_internal(&grid, &spec)?);
    println!("               midpoints {:.6e}", imse_internal(&uniform_design(10)?, &spec)?);
    Ok(())
}

fn main() -> robustfill::Result<()> {
    run_example()
}
