use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use vi_brd::analysis::equilibrium_oracle;
use vi_brd::export::read_csv;
use vi_brd::scenario::{analyze_trajectory, list_scenarios, run_scenario, Format, RunOptions, Scenario, ScenarioReport};

#[derive(Parser)]
#[command(name = "vi-brd", version, about = "Best-response dynamics for variational inequalities on polytopes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate scenarios, write their artifacts and evaluate their checks.
    Run {
        /// Built-in names or scenario files.
        #[arg(required = true)]
        scenarios: Vec<String>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, env = "VI_BRD_OUT", default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
    },
    /// List built-in scenarios and any scenario files in a directory.
    List {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Re-evaluate a scenario's checks against a trajectory CSV.
    Analyze {
        csv: PathBuf,
        #[arg(long)]
        scenario: String,
    },
    /// Print the equilibrium found by active-set enumeration.
    Oracle { scenario: String },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { scenarios, step, horizon, out, svg, format } => {
            let format = match format {
                OutputFormat::Csv => Format::Csv,
                OutputFormat::Json => Format::Json,
            };
            run(&scenarios, step, horizon, &out, RunOptions { svg, format })
        }
        Command::List { dir } => {
            let listing = list_scenarios(dir.as_deref());
            for e in &listing.entries {
                match &e.source {
                    Some(p) => println!("{:<22} {} ({})", e.name, e.description, p.display()),
                    None => println!("{:<22} {}", e.name, e.description),
                }
            }
            for w in &listing.warnings {
                eprintln!("warning: {w}");
            }
            Ok(true)
        }
        Command::Analyze { csv, scenario } => {
            let scn = Scenario::resolve(&scenario)?;
            let record = read_csv(&csv, scn.config.step).with_context(|| format!("reading {}", csv.display()))?;
            let summary = analyze_trajectory(&scn, &record)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(summary.all_pass())
        }
        Command::Oracle { scenario } => {
            let scn = Scenario::resolve(&scenario)?;
            let inst = scn.build()?;
            let Some(f) = inst.operator.as_affine() else {
                bail!("the oracle needs an affine operator; `{}` has an entropy term", scn.name);
            };
            let x = equilibrium_oracle(&f, &inst.set)?;
            println!("{}", serde_json::to_string(&x.iter().collect::<Vec<_>>())?);
            Ok(true)
        }
    }
}

fn run(names: &[String], step: Option<f64>, horizon: Option<f64>, out: &Path, opts: RunOptions) -> Result<bool> {
    let mut scenarios = Vec::with_capacity(names.len());
    for name in names {
        let mut scn = Scenario::resolve(name)?;
        if let Some(h) = step {
            scn.config.step = h;
        }
        if let Some(t) = horizon {
            scn.config.horizon = t;
        }
        scenarios.push(scn);
    }
    let results: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = scenarios.iter().map(|scn| s.spawn(move || run_scenario(scn, out, opts))).collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    });
    let mut all = true;
    for (scn, result) in scenarios.iter().zip(results) {
        let report = result.with_context(|| format!("scenario {}", scn.name))?;
        print_report(&report);
        all &= report.passed();
    }
    Ok(all)
}

fn print_report(report: &ScenarioReport) {
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!("{verdict} {} (gap {:.3e}, {} samples)", report.name, report.summary.gap_final, report.record.len());
    if let Some(e) = &report.error {
        println!("  error: {e}");
    }
    for c in &report.summary.bound_checks {
        println!("  {} {:<22} margin {:.3e}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.margin);
    }
    for f in &report.files {
        println!("  wrote {}", f.display());
    }
}
