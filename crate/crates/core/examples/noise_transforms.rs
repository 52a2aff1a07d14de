// Maps a uniform noise column through the inverse CDF, with and without the Beta pre-warp.

use robustfill::generators::{double_transformed_noise, transformed_noise, uniform_design};
use robustfill::{Design, NoiseModel};

pub fn run_example() -> robustfill::Result<()> {
    let sigma = 1.0 / 6.0;
    let model = NoiseModel::normal(0.5, sigma)?;
    let u = Design::with_roles(uniform_design(100)?.into_iter().map(|v| vec![v]).collect(), 0, 1)?;
    let tr = transformed_noise(&u, std::slice::from_ref(&model))?;
    println!("transformed: outermost point at {:.3} sd", extreme(&tr) / sigma);
    for alpha in [2.0 / 3.0, 0.476] {
        let dt = double_transformed_noise(&u, std::slice::from_ref(&model), alpha)?;
        println!("double transformed, alpha = {alpha:.3}: outermost point at {:.3} sd", extreme(&dt) / sigma);
    }
    Ok(())
}

fn extreme(d: &Design) -> f64 {
    d.column(0).iter().map(|z| (z - 0.5).abs()).fold(0.0, f64::max)
}

fn main() -> robustfill::Result<()> {
    run_example()
}
