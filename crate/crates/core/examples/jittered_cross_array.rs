// Crosses two maximin arrays, then jitters the crossed runs into a space-filling design.

use robustfill::generators::{cross_array, fill_distance, jittered_cross_array, maximin_lhd, DEFAULT_RESTARTS};

pub fn run_example() -> robustfill::Result<()> {
    let control = maximin_lhd(4, 2, 1, 20_000)?;
    let noise = maximin_lhd(5, 2, 2, 20_000)?.as_noise();
    let (crossed, structure) = cross_array(&control, &noise)?;
    let fill = fill_distance(&crossed)?;
    println!("cross array: {} runs, fill distance {:.4} at {:?}", crossed.n_runs(), fill.value, fill.point);
    let jca = jittered_cross_array(&control, &noise, 7, DEFAULT_RESTARTS)?;
    println!(
        "jittered: cube half-width {:.4}, MaxPro {:.4}, winning restart {}",
        jca.half_width, jca.objective, jca.restart
    );
    println!("distinct levels in x1: {}", {
        let mut c = jca.design.column(0);
        c.sort_by(f64::total_cmp);
        c.dedup();
        c.len()
    });
    println!("clusters per control run: {}", structure.n2());
    Ok(())
}

fn main() -> robustfill::Result<()> {
    run_example()
}
