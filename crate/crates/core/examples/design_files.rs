// Writes a design and a WRMSE profile to disk and reads the design back.

use robustfill::generators::{double_transformed_noise, maximin_lhd};
use robustfill::io::{emit_profile, read_design, write_design};
use robustfill::{CorrelationParams, NoiseModel};

pub fn run_example() -> robustfill::Result<()> {
    let dir = std::env::temp_dir().join("robustfill-example");
    std::fs::create_dir_all(&dir)?;
    let model = NoiseModel::coded_normal();
    let d = double_transformed_noise(&maximin_lhd(8, 1, 0, 5_000)?.as_noise(), std::slice::from_ref(&model), 2.0 / 3.0)?;
    let path = dir.join("design.csv");
    write_design(&d, &path)?;
    assert_eq!(read_design(&path)?, d);
    println!("{}", std::fs::read_to_string(&path)?);
    let grid: Vec<Vec<f64>> = (0..=50).map(|i| vec![i as f64 / 50.0]).collect();
    emit_profile(&d, &CorrelationParams::isotropic(1, 30.0)?, &model, &grid, dir.join("profile.csv"))?;
    println!("profile written to {}", dir.join("profile.csv").display());
    Ok(())
}

fn main() -> robustfill::Result<()> {
    run_example()
}
