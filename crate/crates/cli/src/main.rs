use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use recourse_core::harness::{
    collect_report, emit_plot_data, recompute_metrics, render_table, run_grid, EffortCondition, ExperimentGrid,
    GridOutcome, Intervention, MetricsReport, Profile, Settings, AGGREGATE_DIR, PLOTS_DIR, TABLES_DIR,
};
use recourse_core::Error;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "recourse", version, about = "Recourse fairness simulations and experiment grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML settings file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Base seed; cell seeds are base, base+1, ...
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Seeds per cell.
    #[arg(long, global = true, value_name = "N")]
    seeds: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    #[arg(long, global = true, value_parser = ["desk", "paper"])]
    profile: Option<String>,
    #[arg(long, global = true, value_parser = ["baseline", "cns", "cda", "cns+cda", "grr"])]
    intervention: Option<String>,
    /// Also write raw event logs for grid runs.
    #[arg(long, global = true)]
    keep_logs: bool,
    /// Print the fully resolved settings and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the base configuration for the given seeds, keeping the event logs.
    Run,
    /// Run the full experiment grid and write aggregates, tables and plot data.
    Grid,
    /// Recompute per-run metrics from stored event logs and re-aggregate.
    Metrics,
    /// Render the results table from the aggregate.
    Table,
    /// Write plot data from the stored runs.
    Plots,
}

fn resolve(cli: &Cli) -> Result<Settings, Error> {
    let mut s = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    if let Some(p) = &cli.profile {
        s.profile = Profile::parse(p).expect("validated by clap");
    }
    if let Some(n) = cli.seeds {
        s.seeds.count = Some(n);
    }
    if let Some(seed) = cli.seed {
        s.simulation.seed = seed;
    }
    if let Some(w) = cli.workers {
        s.output.workers = w;
    }
    if let Some(i) = &cli.intervention {
        s.interventions.enabled = vec![i.parse()?];
    }
    if cli.keep_logs {
        s.output.keep_logs = true;
    }
    if matches!(cli.command, Command::Run) {
        let intervention = s.interventions.enabled.first().copied().unwrap_or(Intervention::Baseline);
        intervention.apply(&mut s.simulation);
        s.interventions.enabled = vec![intervention];
        s.q.values = vec![s.simulation.population.q];
        s.effort.conditions = vec![EffortCondition {
            e_a: s.simulation.population.e_a,
            e_d: s.simulation.population.e_d,
        }];
        s.seeds.count = Some(cli.seeds.unwrap_or(1));
        s.seeds.overrides.clear();
        s.output.keep_logs = true;
    }
    Ok(s)
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_table(report: &MetricsReport, out: &Path) -> Result<String, Error> {
    let table = render_table(report);
    write_text(&out.join(TABLES_DIR).join("table.txt"), &table.text)?;
    write_text(&out.join(TABLES_DIR).join("table.csv"), &table.csv)?;
    Ok(table.text)
}

fn grid_summary(outcome: &GridOutcome) -> serde_json::Value {
    let cells: Vec<_> = outcome
        .report
        .cells
        .iter()
        .map(|c| {
            json!({
                "config": c.cell_hash,
                "intervention": c.key.intervention.as_str(),
                "q": c.key.q,
                "e_a": c.key.effort.e_a,
                "e_d": c.key.effort.e_d,
                "seeds": c.seeds.len(),
                "retr": c.summary("retr").map(|s| s.mean),
                "dttr": c.summary("dttr").map(|s| s.mean),
            })
        })
        .collect();
    json!({
        "status": "ok",
        "executed": outcome.executed,
        "reused": outcome.reused,
        "warnings": outcome.warnings,
        "cells": cells,
    })
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let settings = resolve(cli)?;
    if cli.print_config {
        print!("{}", settings.to_toml());
        return Ok(());
    }
    let out = &cli.out;
    match cli.command {
        Command::Run | Command::Grid => {
            let grid: ExperimentGrid = settings.grid();
            let outcome = run_grid(&grid, out, settings.run_options())?;
            for w in &outcome.warnings {
                eprintln!("{}", json!({"status": "warning", "message": w}));
            }
            if matches!(cli.command, Command::Grid) {
                write_table(&outcome.report, out)?;
                emit_plot_data(&outcome.report, &out.join(PLOTS_DIR))?;
            }
            println!("{}", grid_summary(&outcome));
        }
        Command::Metrics => {
            let n = recompute_metrics(out)?;
            println!("{}", json!({"status": "ok", "recomputed": n}));
        }
        Command::Table => {
            let report = MetricsReport::read_aggregate(&out.join(AGGREGATE_DIR))?;
            print!("{}", write_table(&report, out)?);
        }
        Command::Plots => {
            let report = collect_report(out)?;
            let files = emit_plot_data(&report, &out.join(PLOTS_DIR))?;
            let files: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
            println!("{}", json!({"status": "ok", "files": files}));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", json!({"status": "error", "kind": "usage", "message": first}));
            return ExitCode::from(2);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"status": "error", "kind": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}
