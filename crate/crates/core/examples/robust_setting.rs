// Fits a model to a crossed experiment and finds the control setting least sensitive to noise.

use robustfill::generators::{jittered_cross_array, maximin_lhd, transformed_noise, uniform_design};
use robustfill::gp::fit_kriging;
use robustfill::study::{robust_setting, Loss, RobustSearch};
use robustfill::{Design, FitOptions, NoiseModel};

pub fn run_example() -> robustfill::Result<()> {
    let noise = NoiseModel::coded_normal();
    let control = Design::with_roles(uniform_design(6)?.into_iter().map(|v| vec![v]).collect(), 1, 0)?;
    let unit = jittered_cross_array(&control, &maximin_lhd(6, 1, 0, 5_000)?.as_noise(), 0, 4)?.design;
    let d = transformed_noise(&unit, std::slice::from_ref(&noise))?;
    // noise enters through (x - 0.35), so the response is flat in z at x = 0.35
    let y: Vec<f64> = d.rows().iter().map(|r| (r[0] - 0.35) * (r[1] - 0.5) + 0.2 * r[0]).collect();
    let model = fit_kriging(&d, &y, &FitOptions::default())?;
    let s = robust_setting(&model, Loss::Variance, &noise, &RobustSearch::default())?;
    println!("robust setting x = {:.3} (variance {:.2e})", s.x[0], s.objective);
    Ok(())
}

fn main() -> robustfill::Result<()> {
    run_example()
}
