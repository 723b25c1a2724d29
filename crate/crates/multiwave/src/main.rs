use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use multiwave::core::allocation::{a_optimal_neyman, a_optimal_wright, neyman, wright};
use multiwave::core::{gen_frame, AOptWeights, ScenarioSpec};
use multiwave::designfile::DesignFile;
use multiwave::{emit, io, run_experiment, Error, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "multiwave", version, about = "Multiwave two-phase sampling designs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation experiment described by a TOML config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's replicate count.
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Allocate a sample over strata from a CSV of stratum summaries
    /// (columns stratum,N,sd_p1..sd_pP).
    Allocate {
        #[arg(long)]
        summaries: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        min_per_stratum: usize,
        /// Comma-separated A-optimality weights (default: equal).
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        /// Parameter (1-based) for the single-parameter methods.
        #[arg(long, default_value_t = 1)]
        param: usize,
        #[arg(long, value_enum, default_value_t = Method::AoptWright)]
        method: Method,
    },
    /// Run one multiwave design on a CSV frame described by a TOML file.
    Design {
        #[arg(long)]
        config: PathBuf,
        /// Where to write the sampled units (unit,stratum,wave).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write a simulated cohort for a built-in scenario to CSV.
    Generate {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Neyman,
    Wright,
    AoptNeyman,
    AoptWright,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            replicates,
            threads,
            output,
        } => simulate(&config, replicates, threads, output),
        Command::Allocate {
            summaries,
            n,
            min_per_stratum,
            weights,
            param,
            method,
        } => allocate(&summaries, n, min_per_stratum, weights, param, method),
        Command::Design { config, output } => design(&config, output.as_deref()),
        Command::Generate { scenario, seed, output } => {
            let spec = ScenarioSpec::preset(&scenario).map_err(|e| Error::Config(e.to_string()))?;
            io::write_frame(&gen_frame(&spec, seed)?, &output)
        }
    }
}

fn simulate(path: &Path, replicates: Option<usize>, threads: Option<usize>, output: Option<PathBuf>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    if threads.is_some() {
        cfg.threads = threads;
    }
    if let Some(o) = output {
        cfg.output_dir = o;
    } else if cfg.output_dir.is_relative() {
        if let Some(dir) = path.parent() {
            cfg.output_dir = dir.join(&cfg.output_dir);
        }
    }
    let exp = run_experiment(&cfg)?;
    for p in emit::emit(&exp.table, &cfg.output_dir)? {
        eprintln!("wrote {}", p.display());
    }
    print!("{}", emit::render_text(&exp.table));
    Ok(())
}

fn allocate(
    path: &Path,
    n: usize,
    min: usize,
    weights: Option<Vec<f64>>,
    param: usize,
    method: Method,
) -> Result<()> {
    let (ids, strata) = io::read_summaries(path)?;
    let p = strata[0].sd_by_param.len();
    if param == 0 || param > p {
        return Err(Error::Config(format!("--param must lie in 1..={p}")));
    }
    let weights = match weights {
        Some(w) if w.len() != p => return Err(Error::Config(format!("{} weights for {p} parameters", w.len()))),
        Some(w) => AOptWeights::normalized(&w).map_err(|e| Error::Config(e.to_string()))?,
        None => AOptWeights::equal(p),
    };
    let (counts, objective): (Vec<String>, f64) = match method {
        Method::Neyman => {
            let a = neyman(&strata, param - 1, n as f64)?;
            (a.counts.iter().map(|c| format!("{c:.4}")).collect(), a.objective)
        }
        Method::AoptNeyman => {
            let a = a_optimal_neyman(&strata, &weights, n as f64)?;
            (a.counts.iter().map(|c| format!("{c:.4}")).collect(), a.objective)
        }
        Method::Wright => {
            let a = wright(&strata, param - 1, n, min)?;
            (a.counts.iter().map(ToString::to_string).collect(), a.objective)
        }
        Method::AoptWright => {
            let a = a_optimal_wright(&strata, &weights, n, min)?;
            (a.counts.iter().map(ToString::to_string).collect(), a.objective)
        }
    };
    println!("stratum,n");
    for (id, c) in ids.iter().zip(&counts) {
        println!("{id},{c}");
    }
    eprintln!("objective: {objective}");
    Ok(())
}

fn design(path: &Path, output: Option<&Path>) -> Result<()> {
    let file = DesignFile::load(path)?;
    let (frame, run) = file.run()?;
    let strata = frame.strata()?;
    for w in &run.waves {
        println!("wave {}: draws {:?} ({:?})", w.wave, w.draws, w.source);
    }
    let problem = file.problem();
    for (t, (ipw, gr)) in problem.tracked.iter().zip(run.ipw.tracked.iter().zip(&run.gr.tracked)) {
        println!("{}: IPW {ipw:.6}  GR {gr:.6}", t.label);
    }
    if let Some(out) = output {
        let mut w = csv::Writer::from_path(out).map_err(|e| Error::Csv {
            path: out.into(),
            source: e,
        })?;
        let wrap = |e: csv::Error| Error::Csv {
            path: out.into(),
            source: e,
        };
        w.write_record(["unit", "stratum", "wave"]).map_err(wrap)?;
        for &(u, wave) in &run.sampled {
            w.write_record([u.to_string(), (strata.label(u) + 1).to_string(), wave.to_string()])
                .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: out.into(),
            source: e,
        })?;
    }
    Ok(())
}
