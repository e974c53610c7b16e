//! Command-line entry point.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use oisim::artifacts::{
    execute_conventional, execute_map_validate, execute_oi, write_map_artifacts,
    write_run_artifacts,
};
use oisim::config::{build_run, load_run_config};

#[derive(Parser)]
#[command(
    name = "oisim",
    about = "Map-facilitated optimal identification of N-level quantum systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Use the full optimization budgets instead of the desk scale.
    #[arg(long)]
    paper_scale: bool,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the control field for identification quality.
    Oi(Common),
    /// Random-field baseline inversion (dense time sampling).
    Conventional {
        #[command(flatten)]
        common: Common,
        /// Override the number of time samples.
        #[arg(long)]
        q: Option<usize>,
    },
    /// Build one surrogate map and report its accuracy and speedup.
    MapValidate(Common),
}

fn run(cli: Cli) -> Result<(), (u8, String)> {
    let (common, q_override, which) = match &cli.command {
        Command::Oi(c) => (c, None, "oi"),
        Command::Conventional { common, q } => (common, *q, "conventional"),
        Command::MapValidate(c) => (c, None, "map-validate"),
    };

    if !common.config.exists() {
        return Err((2, format!("config file not found: {}", common.config.display())));
    }

    if common.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(common.workers)
            .build_global()
            .map_err(|e| (1, format!("cannot configure worker pool: {e}")))?;
    }

    let mut config = load_run_config(&common.config).map_err(|e| (1, e.to_string()))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if common.paper_scale {
        config.apply_paper_scale();
    }
    if let Some(out) = &common.out {
        config.out_dir = out.display().to_string();
    }
    if let Some(q) = q_override {
        config.q_conventional = q;
    }

    let base_dir = common.config.parent().unwrap_or_else(|| std::path::Path::new("."));
    let built = build_run(&config, base_dir).map_err(|e| (1, e.to_string()))?;
    let out_dir = PathBuf::from(&config.out_dir);

    match which {
        "oi" => {
            let (result, manifest) = execute_oi(&built).map_err(|e| (1, e.to_string()))?;
            write_run_artifacts(&out_dir, &manifest, &result).map_err(|e| (1, e.to_string()))?;
            println!(
                "oi: q={} measurements={} avg_rel_uncertainty={:.6} (H {:.6}, mu {:.6}) members={} out={}",
                manifest.summary.q,
                manifest.summary.measurements,
                manifest.summary.avg_rel_uncertainty,
                manifest.summary.avg_rel_uncertainty_h,
                manifest.summary.avg_rel_uncertainty_mu,
                manifest.summary.family_members,
                out_dir.display()
            );
        }
        "conventional" => {
            let (result, manifest) = execute_conventional(&built).map_err(|e| (1, e.to_string()))?;
            write_run_artifacts(&out_dir, &manifest, &result).map_err(|e| (1, e.to_string()))?;
            println!(
                "conventional: q={} measurements={} avg_rel_uncertainty={:.6} (H {:.6}, mu {:.6}) members={} out={}",
                manifest.summary.q,
                manifest.summary.measurements,
                manifest.summary.avg_rel_uncertainty,
                manifest.summary.avg_rel_uncertainty_h,
                manifest.summary.avg_rel_uncertainty_mu,
                manifest.summary.family_members,
                out_dir.display()
            );
        }
        _ => {
            let (map, report) = execute_map_validate(&built).map_err(|e| (1, e.to_string()))?;
            write_map_artifacts(&out_dir, &map, &report).map_err(|e| (1, e.to_string()))?;
            print!("{}", report.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
