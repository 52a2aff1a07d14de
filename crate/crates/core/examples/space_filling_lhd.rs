// Maximin and maximum projection Latin hypercubes.

use robustfill::generators::{maximin_lhd, maxpro_criterion, maxpro_lhd, DEFAULT_ITERS};

pub fn run_example() -> robustfill::Result<()> {
    let mm = maximin_lhd(20, 3, 1, DEFAULT_ITERS)?;
    let mp = maxpro_lhd(20, 3, 1, DEFAULT_ITERS)?;
    println!("{:<10} {:>12} {:>12}", "design", "min dist", "MaxPro");
    for (name, d) in [("maximin", &mm), ("maxpro", &mp)] {
        println!("{name:<10} {:>12.4} {:>12.4}", d.min_distance(), maxpro_criterion(d.rows()));
    }
    Ok(())
}

fn main() -> robustfill::Result<()> {
    run_example()
}
