use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use insilico_core::factor::Estimator;
use insilico_core::pipeline::{self, BackendKind, Grouping, PipelineError, RunConfig};
use insilico_core::stats::Center;

#[derive(Parser, Debug)]
#[command(name = "insilico", version, about = "Simulated survey respondents and psychometric comparison")]
struct Cli {
    #[arg(long, global = true, default_value = "insilico.toml")]
    config: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, global = true, value_enum)]
    estimator: Option<EstimatorArg>,
    #[arg(long = "bootstrap-b", global = true)]
    bootstrap_b: Option<usize>,
    #[arg(long = "levene-center", global = true, value_enum)]
    levene_center: Option<CenterArg>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Expand the quota table (or mirror the real sample) into out/roster.csv.
    Quota,
    /// Render prompts, collect completions and write out/sim_dataset.csv.
    Generate,
    /// Normalize the real dataset into out/real_dataset.csv.
    Ingest,
    /// Screen items by content validity and prune them with iterated EFA.
    Prototype {
        /// Simulated dataset; defaults to out/sim_dataset.csv.
        #[arg(long)]
        sim: Option<PathBuf>,
    },
    /// Fit the measurement model to one dataset.
    Cfa {
        #[arg(long, value_enum, default_value_t = DataArg::Real)]
        data: DataArg,
    },
    /// Run the invariance ladder.
    Invariance {
        #[arg(long, value_enum, default_value_t = GroupArg::Source)]
        group: GroupArg,
    },
    /// Distributional comparisons between real and simulated scores.
    Compare,
    /// All hypotheses and the study report.
    Validate,
    /// Re-render out/report.txt from out/report.json.
    Report {
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EstimatorArg {
    Ml,
    Mlr,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CenterArg {
    Median,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum DataArg {
    Real,
    Sim,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GroupArg {
    Source,
    Gender,
}

fn config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(b) = cli.backend {
        cfg.backend.kind = match b {
            BackendArg::Mock => BackendKind::Mock,
            BackendArg::Http => BackendKind::Http,
        };
    }
    if let Some(e) = cli.estimator {
        cfg.estimator = Some(match e {
            EstimatorArg::Ml => Estimator::Ml,
            EstimatorArg::Mlr => Estimator::Mlr,
        });
    }
    if let Some(b) = cli.bootstrap_b {
        cfg.battery.bootstrap_b = b;
    }
    if let Some(c) = cli.levene_center {
        cfg.battery.levene_center = match c {
            CenterArg::Median => Center::Median,
            CenterArg::Mean => Center::Mean,
        };
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = std::env::current_dir()?.join(o);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Command::Report { json } = &cli.command {
        let path = match json {
            Some(p) => p.clone(),
            None => config(cli)?.out_path("report.json"),
        };
        let text = pipeline::cmd_report(&path)?;
        let txt = path.with_extension("txt");
        std::fs::write(&txt, &text).with_context(|| format!("writing {}", txt.display()))?;
        print!("{text}");
        return Ok(());
    }
    let cfg = config(cli)?;
    log::info!("config hash {} seed {}", cfg.config_hash(), cfg.seed);
    match &cli.command {
        Command::Quota => {
            let roster = pipeline::cmd_quota(&cfg)?;
            println!("{} personas -> {}", roster.len(), cfg.out_path("roster.csv").display());
        }
        Command::Generate => {
            let g = pipeline::cmd_generate(&cfg)?;
            println!(
                "{} rows -> {} ({} requests sent, {} reused, {:.1}% cells with template gaps, {} personas all invalid)",
                g.matrix.n_rows(),
                cfg.out_path("sim_dataset.csv").display(),
                g.requested,
                g.resumed,
                100.0 * g.gap_rate,
                g.all_invalid.len()
            );
        }
        Command::Ingest => {
            let m = pipeline::cmd_ingest(&cfg)?;
            println!("{} rows -> {}", m.n_rows(), cfg.out_path("real_dataset.csv").display());
        }
        Command::Prototype { sim } => {
            let scale = pipeline::load_scale(&cfg)?;
            let data = match sim {
                Some(p) => pipeline::read_dataset(p, &scale)?,
                None => pipeline::load_sim(&cfg, &scale)?,
            };
            let a = pipeline::cmd_prototype(&cfg, &data)?;
            print!("{}", a.prototype.pruning_log());
        }
        Command::Cfa { data } => {
            let scale = pipeline::load_scale(&cfg)?;
            let (m, name) = match data {
                DataArg::Real => (pipeline::load_real(&cfg, &scale)?, "cfa_real"),
                DataArg::Sim => (pipeline::load_sim(&cfg, &scale)?, "cfa_sim"),
            };
            let fit = pipeline::cmd_cfa(&cfg, &m, name)?;
            println!("{}", pipeline::fit_line(&fit));
        }
        Command::Invariance { group } => {
            let scale = pipeline::load_scale(&cfg)?;
            let real = pipeline::load_real(&cfg, &scale)?;
            let sim = pipeline::load_sim(&cfg, &scale)?;
            let g = match group {
                GroupArg::Source => Grouping::Source,
                GroupArg::Gender => Grouping::Gender,
            };
            print!("{}", pipeline::cmd_invariance(&cfg, &real, &sim, g)?.to_table());
        }
        Command::Compare => {
            let scale = pipeline::load_scale(&cfg)?;
            let real = pipeline::load_real(&cfg, &scale)?;
            let sim = pipeline::load_sim(&cfg, &scale)?;
            print!("{}", pipeline::cmd_compare(&cfg, &real, &sim)?.to_table());
        }
        Command::Validate => {
            let scale = pipeline::load_scale(&cfg)?;
            let real = pipeline::load_real(&cfg, &scale)?;
            let sim = pipeline::load_sim(&cfg, &scale)?;
            let report = pipeline::cmd_validate(&cfg, &sim, &real)?;
            print!("{}", report.hypotheses.to_table());
        }
        Command::Report { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<PipelineError>().map(PipelineError::exit_code).unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}
