// Fits an ordinary kriging model and checks it against held-out points.

use robustfill::generators::maxpro_lhd;
use robustfill::gp::fit_kriging;
use robustfill::FitOptions;

fn truth(x: &[f64]) -> f64 {
    (5.0 * x[0]).sin() + (x[1] - 0.4).powi(2)
}

pub fn run_example() -> robustfill::Result<()> {
    let d = maxpro_lhd(25, 2, 3, 10_000)?;
    let y: Vec<f64> = d.rows().iter().map(|r| truth(r)).collect();
    let model = fit_kriging(&d, &y, &FitOptions::default())?;
    println!("theta = {:?}, mu = {:.4}, tau2 = {:.4}", model.theta().values(), model.mu(), model.tau2());
    for p in [[0.1, 0.9], [0.5, 0.5], [0.85, 0.2]] {
        let sd = model.predict_variance(&p).sqrt();
        println!("at {p:?}: predicted {:.4} ± {sd:.4}, true {:.4}", model.predict_mean(&p), truth(&p));
    }
    Ok(())
}

fn main() -> robustfill::Result<()> {
    run_example()
}
