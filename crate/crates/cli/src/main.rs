use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use foliflow::flow_models::Classification;
use foliflow::scenarios::{
    analyze_state, exit_code_for, hyperbolicity_map, parse_flow, parse_list, run_scenario, run_solve, HyperbolicityMap,
    MapAxis, MapSpec, RunOutput, ScenarioConfig,
};
use foliflow::symmetric_functions::{elementary_from_roots, tau_from_sigma};
use foliflow::FlowError;

#[derive(Parser)]
#[command(name = "foliflow", version, about = "Extrinsic geometric flows of codimension-one foliations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Truncated matrix, spectrum and classification of a flow at one point.
    Analyze(AnalyzeArgs),
    /// Evolve root-expression initial data under a flow.
    Solve(RunArgs),
    /// Run one of the built-in worked examples.
    Scenario {
        /// cone, pseudosphere, reeb_i, reeb_ii, circles, ricci_n2, ricci_n3_map, ent_wave, umbilical_burgers
        name: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Classify a flow over a plane of σ values.
    Map(MapArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// a,b,cells
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long)]
    t_end: Option<String>,
    #[arg(long)]
    t_samples: Option<String>,
    /// +1 or -1
    #[arg(long, allow_hyphen_values = true)]
    orientation: Option<String>,
    /// characteristics, conservation, fd, auto
    #[arg(long)]
    scheme: Option<String>,
    /// ricci_ex, ent:s, power:m, constant:c
    #[arg(long)]
    flow: Option<String>,
    /// Output directory for CSV files and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reserved; the numerics are deterministic.
    #[arg(long)]
    seed: Option<String>,
    /// Any other config key, as key=value.
    #[arg(long = "set", value_name = "KEY=VALUE", allow_hyphen_values = true)]
    set: Vec<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, default_value = "ricci_ex")]
    flow: String,
    /// Power sums τ₁,…,τ_n.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["sigma", "roots"])]
    tau: Option<String>,
    /// Elementary symmetric values σ₁,…,σ_n.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "roots")]
    sigma: Option<String>,
    /// Principal curvatures k₁,…,k_n.
    #[arg(long, allow_hyphen_values = true)]
    roots: Option<String>,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long, default_value = "ricci_ex")]
    flow: String,
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// index,lo,hi,count for the horizontal σ axis.
    #[arg(long, allow_hyphen_values = true, default_value = "1,-6,6,100")]
    x_axis: String,
    /// index,lo,hi,count for the vertical σ axis.
    #[arg(long, allow_hyphen_values = true, default_value = "3,-9,9,100")]
    y_axis: String,
    /// Remaining σ values (zeros by default).
    #[arg(long, allow_hyphen_values = true)]
    base: Option<String>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(name: Option<&str>, args: &RunArgs) -> foliflow::Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(p) => ScenarioConfig::from_file(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(n) = name {
        cfg.set("scenario", n)?;
    }
    let flags = [
        ("grid", &args.grid),
        ("t_end", &args.t_end),
        ("t_samples", &args.t_samples),
        ("orientation", &args.orientation),
        ("scheme", &args.scheme),
        ("flow", &args.flow),
        ("seed", &args.seed),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| FlowError::InvalidInput(format!("--set expects key=value, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Prints to stdout; a closed pipe is not an error.
fn emit(v: &serde_json::Value) {
    let text = serde_json::to_string_pretty(v).expect("json serialises");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_run(out: &RunOutput) {
    emit(&out.report.to_json());
}

fn parse_axis(v: &str) -> foliflow::Result<MapAxis> {
    let parts = parse_list("axis", v)?;
    if parts.len() != 4 || parts[0] < 1.0 || parts[3] < 1.0 {
        return Err(FlowError::InvalidInput(format!("axis '{v}': expected index,lo,hi,count")));
    }
    Ok(MapAxis { index: parts[0] as usize, lo: parts[1], hi: parts[2], count: parts[3] as usize })
}

fn analyze(a: &AnalyzeArgs) -> foliflow::Result<i32> {
    let tau = match (&a.tau, &a.sigma, &a.roots) {
        (Some(t), _, _) => parse_list("tau", t)?,
        (_, Some(s), _) => {
            let s = parse_list("sigma", s)?;
            tau_from_sigma(&s, s.len())
        }
        (_, _, Some(r)) => {
            let k = parse_list("roots", r)?;
            tau_from_sigma(&elementary_from_roots(&k), k.len())
        }
        _ => return Err(FlowError::InvalidInput("give one of --tau, --sigma, --roots".into())),
    };
    if tau.is_empty() {
        return Err(FlowError::InvalidInput("empty state".into()));
    }
    let family = parse_flow(&a.flow, tau.len())?;
    let v = analyze_state(&family, &tau)?;
    emit(&v);
    Ok(0)
}

fn map(a: &MapArgs) -> anyhow::Result<i32> {
    let family = parse_flow(&a.flow, a.n)?;
    let base = match &a.base {
        Some(b) => parse_list("base", b)?,
        None => vec![0.0; a.n],
    };
    let spec = MapSpec { x: parse_axis(&a.x_axis)?, y: parse_axis(&a.y_axis)?, base_sigma: base, threads: a.threads };
    let m = hyperbolicity_map(&family, &spec)?;
    let count = |c: Classification| m.classes.iter().flatten().filter(|&&x| x == c).count();
    let summary = serde_json::json!({
        "flow": a.flow,
        "n": a.n,
        "cells": m.xs.len() * m.ys.len(),
        "strictly-hyperbolic": count(Classification::StrictlyHyperbolic),
        "hyperbolic": count(Classification::Hyperbolic),
        "not-hyperbolic": count(Classification::NotHyperbolic),
    });
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut csv = String::from("x,t,value\n");
        for (y, row) in m.ys.iter().zip(&m.classes) {
            for (x, c) in m.xs.iter().zip(row) {
                csv.push_str(&format!("{x},{y},{}\n", HyperbolicityMap::code(*c)));
            }
        }
        std::fs::write(dir.join("classification.csv"), csv)?;
        std::fs::write(dir.join("map.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    emit(&summary);
    Ok(0)
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Analyze(a) => Ok(analyze(&a)?),
        Command::Solve(args) => {
            let out = run_solve(&build_config(None, &args)?)?;
            print_run(&out);
            Ok(out.report.exit_code())
        }
        Command::Scenario { name, run } => {
            let out = run_scenario(&build_config(Some(&name), &run)?)?;
            print_run(&out);
            Ok(out.report.exit_code())
        }
        Command::Map(a) => map(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<FlowError>().map_or(1, exit_code_for);
            ExitCode::from(code as u8)
        }
    }
}
