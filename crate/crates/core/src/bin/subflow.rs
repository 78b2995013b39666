use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use subflow::cli::{generate_random_functions, render_report, run_scenario, to_json, Format, ScenarioConfig};
use subflow::pflow::evolve;
use subflow::subop::{frac_generator, norm_bound_from};
use subflow::{Error, Result};

#[derive(Parser)]
#[command(name = "subflow", version, about = "p-Laplacian flows, subordination and inequality checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks selected in a scenario config and write the report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output file; defaults to the config's output path, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Export one trajectory of the flow as CSV.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        /// JSON array with the initial data; random when absent.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of equally spaced output times.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the fractional generator once and dump it as JSON.
    Fracgen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_out(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn initial_data(config: &ScenarioConfig, init: Option<&PathBuf>, seed: Option<u64>) -> Result<Vec<f64>> {
    let graph = config.space.build()?;
    match init {
        Some(path) => {
            let u: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            graph.space().check_shape(&u)?;
            Ok(u)
        }
        None => {
            let seed = seed.unwrap_or(config.seed);
            let mut us = generate_random_functions(graph.space(), seed, 1, config.distribution);
            us.pop().ok_or_else(|| Error::Config("the space has no free nodes".into()))
        }
    }
}

#[derive(serde::Serialize)]
struct FracDump {
    alpha: f64,
    input: Vec<f64>,
    value: Vec<f64>,
    head_bound: f64,
    tail_bound: f64,
    norm_lhs: f64,
    norm_rhs: f64,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, format, seed } => {
            let mut cfg = ScenarioConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let format = format.or(cfg.output.as_ref().map(|o| o.format)).unwrap_or(Format::Csv);
            let out = out.or(cfg.output.as_ref().map(|o| o.path.clone()));
            let report = run_scenario(&cfg)?;
            write_out(out.as_ref(), &render_report(&report, format)?)
        }
        Command::Evolve { config, init, seed, samples, out } => {
            let cfg = ScenarioConfig::from_file(&config)?;
            let graph = cfg.space.build()?;
            let u = initial_data(&cfg, init.as_ref(), seed)?;
            let k = samples.unwrap_or(cfg.flow.n_steps).max(1);
            let times: Vec<f64> = (1..=k).map(|i| cfg.flow.t_final * i as f64 / k as f64).collect();
            let traj = evolve(&graph, &u, &cfg.energy, &cfg.flow, &times)?;
            let mut buf = Vec::new();
            traj.write_csv(&mut buf)?;
            write_out(out.as_ref(), &String::from_utf8_lossy(&buf))
        }
        Command::Fracgen { config, init, seed, out } => {
            let cfg = ScenarioConfig::from_file(&config)?;
            let sub = cfg
                .subordination
                .ok_or_else(|| Error::Config("fracgen needs a subordination section".into()))?;
            let plan = sub.plan()?;
            let graph = cfg.space.build()?;
            let u = initial_data(&cfg, init.as_ref(), seed)?;
            let g = frac_generator(&graph, &u, &cfg.energy, &plan)?;
            let nb = norm_bound_from(&graph, &u, &g, plan.stable.alpha);
            let dump = FracDump {
                alpha: plan.stable.alpha,
                input: u,
                value: g.value,
                head_bound: g.head_bound,
                tail_bound: g.tail_bound,
                norm_lhs: nb.lhs,
                norm_rhs: nb.rhs,
            };
            write_out(out.as_ref(), &to_json(&dump)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
