// One-dimensional IRMSE-optimal noise designs, max-min selection and a hybrid noise array.

use robustfill::generators::{hybrid_noise_design, maximin_lhd, robust_1d_noise_design, RobustOptions};
use robustfill::NoiseModel;

pub fn run_example() -> robustfill::Result<()> {
    let thetas = [5.0, 10.0, 20.0, 30.0];
    let opts = RobustOptions {
        restarts: 6,
        ..RobustOptions::default()
    };
    let robust = robust_1d_noise_design(12, &thetas, &NoiseModel::coded_normal(), 0, &opts)?;
    println!("efficiency table (rows: design optimal for theta, columns: evaluated at theta)");
    for (t, row) in thetas.iter().zip(&robust.efficiency) {
        let cells: Vec<String> = row.iter().map(|e| format!("{e:.3}")).collect();
        println!("  {t:>4}: {}", cells.join("  "));
    }
    println!("selected theta = {}", thetas[robust.selected]);
    let u = maximin_lhd(12, 2, 5, 20_000)?.as_noise();
    let hybrid = hybrid_noise_design(&u, &robust.transformation)?;
    println!("hybrid array, first rows: {:?}", &hybrid.rows()[..3]);
    Ok(())
}

fn main() -> robustfill::Result<()> {
    run_example()
}
