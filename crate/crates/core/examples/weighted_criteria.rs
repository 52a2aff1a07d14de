// Density-weighted criteria for transformed and double transformed noise designs.

use robustfill::criteria::{imse, irmse, wrmse_many, CriterionConfig};
use robustfill::generators::{double_transformed_noise, transformed_noise, uniform_design};
use robustfill::{CorrelationParams, Design, NoiseModel, QuadratureSpec};

pub fn run_example() -> robustfill::Result<()> {
    let model = NoiseModel::coded_normal();
    let u = Design::with_roles(uniform_design(10)?.into_iter().map(|v| vec![v]).collect(), 0, 1)?;
    let tr = transformed_noise(&u, std::slice::from_ref(&model))?;
    let dt = double_transformed_noise(&u, std::slice::from_ref(&model), 2.0 / 3.0)?;
    let cfg = CriterionConfig::with_k(1.0).with_quadrature(QuadratureSpec::Composite { nodes: 2000 });
    for theta in [10.0, 1000.0] {
        let th = CorrelationParams::isotropic(1, theta)?;
        println!(
            "theta = {theta:>6}: IRMSE tr {:.4e}, dt {:.4e}; IMSE tr {:.4e}, dt {:.4e}",
            irmse(&tr, &th, &model, &cfg)?,
            irmse(&dt, &th, &model, &cfg)?,
            imse(&tr, &th, &model, &cfg)?,
            imse(&dt, &th, &model, &cfg)?,
        );
    }
    // WRMSE profile of the transformed design, the tails are where it fails
    let th = CorrelationParams::isotropic(1, 10.0)?;
    let grid: Vec<Vec<f64>> = (0..=8).map(|i| vec![i as f64 / 8.0]).collect();
    for (p, w) in grid.iter().zip(wrmse_many(&tr, &th, &grid, &model)?) {
        println!("z = {:.3}  WRMSE = {w:.3e}", p[0]);
    }
    Ok(())
}

fn main() -> robustfill::Result<()> {
    run_example()
}
