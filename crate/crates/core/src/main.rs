use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use robustfill::criteria::{imse, irmse, irmse_1d, irmse_k, CriterionConfig};
use robustfill::generators::{
    cross_array, double_transformed_noise, hybrid_noise_design, jittered_cross_array, maximin_lhd, maxpro_lhd,
    optimal_1d_design, robust_1d_noise_design, transformed_noise, RobustOptions,
};
use robustfill::gp::fit_kriging;
use robustfill::io::{
    config_from_json, design_to_csv, profile_to_csv, read_design, report_to_csv, report_to_json,
};
use robustfill::study::{robust_setting, run_simulated_example, Loss, RobustSearch};
use robustfill::{CorrelationParams, Design, Error, FitOptions, NoiseModel};

#[derive(Parser)]
#[command(name = "robustfill", version, about = "Space-filling designs for robust parameter design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignType {
    Mmlhd,
    Maxprolhd,
    Cross,
    Jca,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseKind {
    None,
    Tr,
    Dt,
    Hybrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionKind {
    Irmse,
    Imse,
    WrmseProfile,
    MinmaxEff,
}

#[derive(clap::Args)]
struct NoiseArgs {
    /// Mean of the normal noise distribution, in coded units.
    #[arg(long, default_value_t = 0.5)]
    noise_mean: f64,
    /// Standard deviation of the normal noise distribution, in coded units.
    #[arg(long, default_value_t = 1.0 / 6.0)]
    noise_sd: f64,
}

impl NoiseArgs {
    fn model(&self) -> robustfill::Result<NoiseModel> {
        NoiseModel::normal(self.noise_mean, self.noise_sd)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a design and write it as CSV.
    Generate {
        #[arg(long = "type", value_enum)]
        kind: DesignType,
        /// Runs of the Latin hypercube, or of the control array for cross designs.
        #[arg(long)]
        n1: usize,
        /// Runs of the noise array for cross designs.
        #[arg(long, default_value_t = 0)]
        n2: usize,
        /// Control factors.
        #[arg(long, default_value_t = 1)]
        p: usize,
        /// External noise factors.
        #[arg(long, default_value_t = 1)]
        q: usize,
        #[arg(long, value_enum, default_value = "none")]
        noise: NoiseKind,
        #[arg(long, default_value_t = 2.0 / 3.0)]
        alpha: f64,
        /// Correlation parameters for the hybrid transformation.
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,30")]
        theta_set: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = robustfill::generators::DEFAULT_ITERS)]
        iters: usize,
        #[arg(long, default_value_t = robustfill::generators::DEFAULT_RESTARTS)]
        restarts: usize,
        #[command(flatten)]
        noise_model: NoiseArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Score a design under a design criterion.
    Evaluate {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, value_enum, default_value = "irmse")]
        criterion: CriterionKind,
        /// One value for every column, or a comma-separated value per column.
        #[arg(long, value_delimiter = ',')]
        theta: Vec<f64>,
        /// Isotropic correlation parameters for the min-max efficiency.
        #[arg(long, value_delimiter = ',')]
        theta_set: Vec<f64>,
        /// Power of the noise density in the IRMSE weight.
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        /// Grid points per axis for profiles.
        #[arg(long, default_value_t = 201)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        noise_model: NoiseArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fit a kriging model by maximum likelihood.
    Fit {
        #[arg(long)]
        design: PathBuf,
        /// One response per line, optionally after a header line.
        #[arg(long)]
        response: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fit a kriging model and search for the robust control setting.
    Robust {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        response: PathBuf,
        /// `variance` or `quadratic:TARGET`.
        #[arg(long, default_value = "variance")]
        loss: String,
        #[arg(long, default_value_t = 501)]
        grid: usize,
        #[arg(long, default_value_t = 8)]
        noise_nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        noise_model: NoiseArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the simulated design comparison.
    Simulate {
        /// JSON config with top-level key `robustfill_config_v1`.
        #[arg(long)]
        config: PathBuf,
        /// Full report as JSON.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// One CSV line per replication and design.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn emit(text: &str, path: Option<&Path>) -> robustfill::Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn read_response(path: &Path) -> robustfill::Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut y = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => y.push(v),
            _ if i == 0 => {}
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("`{s}` is not a finite number"),
                })
            }
        }
    }
    Ok(y)
}

fn theta_for(design: &Design, theta: &[f64]) -> robustfill::Result<CorrelationParams> {
    match theta {
        [] => Err(Error::Config("--theta is required".into())),
        [t] => CorrelationParams::isotropic(design.n_factors(), *t),
        ts => CorrelationParams::new(ts.to_vec()),
    }
}

fn axis_grid(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    match m {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect(),
    }
}

fn noise_only_points(design: &Design) -> robustfill::Result<Vec<f64>> {
    if design.n_factors() != 1 || design.noise_columns().len() != 1 {
        return Err(Error::InvalidDesign("this criterion needs a single external noise column".into()));
    }
    Ok(design.column(0))
}

#[allow(clippy::too_many_arguments)]
fn generate(
    kind: DesignType,
    n1: usize,
    n2: usize,
    p: usize,
    q: usize,
    noise: NoiseKind,
    alpha: f64,
    theta_set: &[f64],
    seed: u64,
    iters: usize,
    restarts: usize,
    model: &NoiseModel,
) -> robustfill::Result<Design> {
    let unit = match kind {
        DesignType::Mmlhd | DesignType::Maxprolhd => {
            let f = if matches!(kind, DesignType::Mmlhd) { maximin_lhd } else { maxpro_lhd };
            let d = f(n1, p + q, seed, iters)?;
            Design::with_roles(d.rows().to_vec(), p, q)?
        }
        DesignType::Cross | DesignType::Jca => {
            if n2 == 0 {
                return Err(Error::Config("--n2 is required for cross designs".into()));
            }
            let control = maximin_lhd(n1, p, seed, iters)?;
            let noise = maximin_lhd(n2, q, seed.wrapping_add(1), iters)?.as_noise();
            if matches!(kind, DesignType::Cross) {
                cross_array(&control, &noise)?.0
            } else {
                jittered_cross_array(&control, &noise, seed, restarts)?.design
            }
        }
    };
    match noise {
        NoiseKind::None => Ok(unit),
        NoiseKind::Tr => transformed_noise(&unit, std::slice::from_ref(model)),
        NoiseKind::Dt => double_transformed_noise(&unit, std::slice::from_ref(model), alpha),
        NoiseKind::Hybrid => {
            let robust = robust_1d_noise_design(unit.n_runs(), theta_set, model, seed, &RobustOptions::default())?;
            hybrid_noise_design(&unit, &robust.transformation)
        }
    }
}

fn run(cli: Cli) -> robustfill::Result<()> {
    match cli.command {
        Command::Generate {
            kind,
            n1,
            n2,
            p,
            q,
            noise,
            alpha,
            theta_set,
            seed,
            iters,
            restarts,
            noise_model,
            output,
        } => {
            let d = generate(
                kind,
                n1,
                n2,
                p,
                q,
                noise,
                alpha,
                &theta_set,
                seed,
                iters,
                restarts,
                &noise_model.model()?,
            )?;
            emit(&design_to_csv(&d), output.as_deref())
        }
        Command::Evaluate {
            design,
            criterion,
            theta,
            theta_set,
            k,
            grid,
            seed,
            noise_model,
            output,
        } => {
            let d = read_design(&design)?;
            let model = noise_model.model()?;
            let text = match criterion {
                CriterionKind::Irmse | CriterionKind::Imse => {
                    let th = theta_for(&d, &theta)?;
                    let cfg = CriterionConfig::with_k(k);
                    let v = match criterion {
                        CriterionKind::Imse => imse(&d, &th, &model, &cfg)?,
                        _ if k == 1.0 => irmse(&d, &th, &model, &cfg)?,
                        _ => irmse_k(&d, &th, &model, &cfg)?,
                    };
                    format!("{v:.16e}\n")
                }
                CriterionKind::WrmseProfile => {
                    let th = theta_for(&d, &theta)?;
                    let axes: Vec<Vec<f64>> = d
                        .factors()
                        .iter()
                        .map(|f| {
                            if f.role.is_noise_ext() {
                                let (lo, hi) = model.effective_support();
                                axis_grid(lo.max(model.support().0), hi.min(model.support().1), grid)
                            } else {
                                axis_grid(0.0, 1.0, grid)
                            }
                        })
                        .collect();
                    if axes.len() > 2 {
                        return Err(Error::InvalidDesign("profiles are limited to designs with at most two columns".into()));
                    }
                    let points: Vec<Vec<f64>> = if axes.len() == 1 {
                        axes[0].iter().map(|&a| vec![a]).collect()
                    } else {
                        axes[0].iter().flat_map(|&a| axes[1].iter().map(move |&b| vec![a, b])).collect()
                    };
                    profile_to_csv(&d, &th, &model, &points)?
                }
                CriterionKind::MinmaxEff => {
                    let z = noise_only_points(&d)?;
                    if theta_set.is_empty() {
                        return Err(Error::Config("--theta-set is required".into()));
                    }
                    let mut eff = Vec::with_capacity(theta_set.len());
                    for &t in &theta_set {
                        let own = irmse_1d(&z, t, &model)?;
                        let opt = optimal_1d_design(z.len(), t, &model, seed, &RobustOptions::default())?;
                        eff.push(opt.irmse.min(own) / own);
                    }
                    let min = eff.iter().cloned().fold(f64::INFINITY, f64::min);
                    let mut out = String::from("theta,efficiency\n");
                    for (t, e) in theta_set.iter().zip(&eff) {
                        out.push_str(&format!("{t},{e:.16e}\n"));
                    }
                    out.push_str(&format!("min,{min:.16e}\n"));
                    out
                }
            };
            emit(&text, output.as_deref())
        }
        Command::Fit {
            design,
            response,
            seed,
            output,
        } => {
            let d = read_design(&design)?;
            let y = read_response(&response)?;
            let m = fit_kriging(&d, &y, &FitOptions { seed, ..FitOptions::default() })?;
            let out = json!({
                "mu": m.mu(),
                "tau2": m.tau2(),
                "theta": m.theta().values(),
                "nugget": m.factor().nugget(),
                "neg_log_likelihood": m.neg_log_likelihood(),
            });
            emit(&(serde_json::to_string_pretty(&out)? + "\n"), output.as_deref())
        }
        Command::Robust {
            design,
            response,
            loss,
            grid,
            noise_nodes,
            seed,
            noise_model,
            output,
        } => {
            let loss = match loss.as_str() {
                "variance" => Loss::Variance,
                s => match s.strip_prefix("quadratic:").and_then(|t| t.parse::<f64>().ok()) {
                    Some(target) => Loss::Quadratic { target },
                    None => return Err(Error::Config(format!("unknown loss `{s}`"))),
                },
            };
            let d = read_design(&design)?;
            let y = read_response(&response)?;
            let m = fit_kriging(&d, &y, &FitOptions { seed, ..FitOptions::default() })?;
            let search = RobustSearch {
                grid_points: grid,
                noise_nodes,
            };
            let s = robust_setting(&m, loss, &noise_model.model()?, &search)?;
            let names: Vec<&str> = d.control_columns().iter().map(|&j| d.factors()[j].name.as_str()).collect();
            let out = json!({
                "controls": names,
                "x": s.x,
                "objective": s.objective,
                "flat": s.flat,
            });
            emit(&(serde_json::to_string_pretty(&out)? + "\n"), output.as_deref())
        }
        Command::Simulate { config, output, csv } => {
            let cfg = config_from_json(&fs::read_to_string(&config)?)?;
            let report = run_simulated_example(&cfg)?;
            if let Some(p) = csv {
                fs::write(p, report_to_csv(&report))?;
            }
            match output {
                Some(p) => fs::write(p, report_to_json(&report)? + "\n")?,
                None => {
                    println!("design,attempted,completed,median_rmspe,median_abs_error");
                    for s in &report.summaries {
                        println!(
                            "{},{},{},{:.6e},{:.6e}",
                            s.design.name(),
                            s.attempted,
                            s.completed,
                            s.median_rmspe,
                            s.median_abs_error
                        );
                    }
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = std::env::var("ROBUSTFILL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else if matches!(e, Error::Io(_)) {
                ExitCode::FAILURE
            } else {
                ExitCode::from(2)
            }
        }
    }
}
