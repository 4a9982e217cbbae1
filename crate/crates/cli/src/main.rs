//! Command-line surface for the optimization pipeline.
//!
//! `transpose` and `validate` cover the design-time half; `simulate` runs
//! the service-composition benchmark over its environment trace, `optimize`
//! runs a single timestep against stored artifacts, `compare` builds the
//! metrics table over several runs and `report` renders it into per-panel
//! data files plus a plot script.
//!
//! Exit codes: 0 success, 1 usage error, 2 input error, 3 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fmoea_core::engine::Algorithm;
use fmoea_core::feature_model::{parse_model, validate_model, FeatureModel};
use fmoea_core::scenario::{
    compare_runs, comparison_csv, front_json, knees_csv, pairwise_csv, parse_knees_csv,
    run_log_csv, simulate_systems, timing_csv, RunSeries, Scenario, Transposition, Variant,
};
use fmoea_core::soa::{
    default_trace, generate_soa, systems_from_trace_csv, trace_to_csv, SoaKnobs, SoaSystem,
};

#[derive(Parser)]
#[command(name = "fmoea", version, about = "Feature-model guided multi-objective optimization for self-adaptive systems", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transpose a feature model into chromosome, grown-model and dependency documents.
    Transpose {
        /// Feature-model document (JSON).
        #[arg(long)]
        model: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Parse a model document and report structural diagnostics.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run one optimization against a stored system (or one trace timestep).
    Optimize {
        #[command(flatten)]
        inputs: BenchmarkInputs,
        #[command(flatten)]
        run: RunArgs,
        /// Trace timestep to evaluate against (needs --trace).
        #[arg(long, default_value_t = 0)]
        timestep: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the benchmark across its environment trace, one optimization per timestep.
    Simulate {
        #[command(flatten)]
        inputs: BenchmarkInputs,
        #[command(flatten)]
        run: RunArgs,
        /// Number of timesteps (defaults to the profile's setting).
        #[arg(long)]
        timesteps: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare two or more simulation runs (by their output directories).
    Compare {
        /// Run directories containing knees.csv.
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Render a comparison into per-panel data files and a plot script.
    Report {
        /// results.csv written by `compare`.
        #[arg(long)]
        comparison: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct BenchmarkInputs {
    /// Feature-model document; defaults to generating the benchmark model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Benchmark system file (JSON) with per-service qualities.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Environment trace (CSV). Generated when absent.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Seed for generating the benchmark system when no files are given.
    #[arg(long, default_value_t = 42)]
    soa_seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    Nsga2,
    Ibea,
    #[value(name = "moead-stm")]
    MoeadStm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Full,
    PlainOps,
    RandomPick,
    PlainRandom,
    Binary,
    Weighted,
}

impl VariantArg {
    fn to_variant(self) -> Variant {
        match self {
            VariantArg::Full => Variant::Full,
            VariantArg::PlainOps => Variant::PlainOps,
            VariantArg::RandomPick => Variant::RandomPick,
            VariantArg::PlainRandom => Variant::PlainRandom,
            VariantArg::Binary => Variant::Binary,
            VariantArg::Weighted => Variant::Weighted,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProfileArg {
    /// Population 100, 10 generations, 102 timesteps.
    Paper,
    /// Population 40, 5 generations, 20 timesteps.
    Ci,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value_t = AlgoArg::Nsga2)]
    algo: AlgoArg,
    #[arg(long, value_enum, default_value_t = VariantArg::Full)]
    variant: VariantArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ProfileArg::Paper)]
    profile: ProfileArg,
    /// Population size (overrides the profile).
    #[arg(long)]
    pop: Option<usize>,
    /// Generation count (overrides the profile).
    #[arg(long)]
    gens: Option<usize>,
    #[arg(long)]
    mutation_rate: Option<f64>,
    #[arg(long)]
    crossover_rate: Option<f64>,
}

impl RunArgs {
    fn scenario(&self) -> Scenario {
        let algorithm = match self.algo {
            AlgoArg::Nsga2 => Algorithm::Nsga2,
            AlgoArg::Ibea => Algorithm::ibea(),
            AlgoArg::MoeadStm => Algorithm::moead_stm(),
        };
        let mut s = match self.profile {
            ProfileArg::Paper => {
                Scenario::paper_profile(self.variant.to_variant(), algorithm, self.seed)
            }
            ProfileArg::Ci => Scenario::ci_profile(self.variant.to_variant(), algorithm, self.seed),
        };
        if let Some(p) = self.pop {
            s.population = p;
        }
        if let Some(g) = self.gens {
            s.generations = g;
        }
        if let Some(m) = self.mutation_rate {
            s.mutation_rate = m;
        }
        if let Some(c) = self.crossover_rate {
            s.crossover_rate = c;
        }
        s
    }

    fn default_timesteps(&self) -> usize {
        match self.profile {
            ProfileArg::Paper => 102,
            ProfileArg::Ci => 20,
        }
    }
}

/// Errors sorted into exit codes: anyhow context strings starting with
/// "input:" map to 2, everything else to 3. Usage errors never reach here.
fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let input = format!("{e:#}").contains("input:");
            ExitCode::from(if input { 2 } else { 3 })
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Transpose { model, out } => cmd_transpose(&model, &out),
        Command::Validate { model } => cmd_validate(&model),
        Command::Optimize {
            inputs,
            run,
            timestep,
            out,
        } => cmd_optimize(inputs, run, timestep, &out),
        Command::Simulate {
            inputs,
            run,
            timesteps,
            out,
        } => cmd_simulate(inputs, run, timesteps, &out),
        Command::Compare { runs, out } => cmd_compare(&runs, &out),
        Command::Report { comparison, out } => cmd_report(&comparison, &out),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("input: cannot read {}", path.display()))
}

fn load_model(path: &Path) -> Result<FeatureModel> {
    let doc = read_to_string(path)?;
    parse_model(&doc).map_err(|e| anyhow!("input: {}: {e}", path.display()))
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    fs::write(dir.join(name), content)
        .with_context(|| format!("cannot write {}", dir.join(name).display()))
}

fn write_meta(dir: &Path, what: &str) -> Result<()> {
    // the only place a timestamp appears in any output
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_out(
        dir,
        "meta.json",
        &format!("{{\n  \"command\": \"{what}\",\n  \"created_unix\": {now}\n}}\n"),
    )
}

fn cmd_transpose(model_path: &Path, out: &Path) -> Result<ExitCode> {
    let model = load_model(model_path)?;
    let tr = Transposition::of(&model).map_err(|e| anyhow!("input: {e}"))?;
    if tr.spec.gene_count() == 0 {
        eprintln!("warning: model has no variability; the chromosome is empty");
    }
    write_out(out, "chromosome.json", &tr.chromosome_document())?;
    write_out(out, "grown_model.json", &tr.grown_document())?;
    write_out(out, "dependencies.json", &tr.dependency_document())?;
    write_meta(out, "transpose")?;
    println!(
        "{} genes, search space {}",
        tr.spec.gene_count(),
        tr.spec.search_space_size
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(model_path: &Path) -> Result<ExitCode> {
    let doc = read_to_string(model_path)?;
    match parse_model(&doc) {
        Ok(model) => {
            let diags = validate_model(&model);
            if diags.is_empty() {
                println!("ok: {} features", model.feature_count());
                Ok(ExitCode::SUCCESS)
            } else {
                for d in diags {
                    eprintln!("{d}");
                }
                Ok(ExitCode::from(2))
            }
        }
        Err(e) => {
            eprintln!("{e}");
            Ok(ExitCode::from(2))
        }
    }
}

struct Bench {
    system: SoaSystem,
    model: FeatureModel,
    /// Per-timestep systems, decoded from the trace file.
    systems: Vec<SoaSystem>,
    trace_csv: String,
}

/// Loads or generates the benchmark trio (model, system, trace).
fn load_bench(inputs: &BenchmarkInputs, timesteps: usize) -> Result<Bench> {
    let (system, model) = match (&inputs.system, &inputs.model) {
        (Some(sys_path), Some(model_path)) => {
            let system = SoaSystem::from_json(&read_to_string(sys_path)?)
                .map_err(|e| anyhow!("input: {}: {e}", sys_path.display()))?;
            (system, load_model(model_path)?)
        }
        (None, None) => generate_soa(inputs.soa_seed, &SoaKnobs::default()),
        _ => bail!("input: --system and --model must be given together"),
    };
    let trace_csv = match &inputs.trace {
        Some(path) => read_to_string(path)?,
        None => {
            let trace = default_trace(&system, timesteps);
            trace_to_csv(&system, &trace, timesteps).map_err(|e| anyhow!("{e}"))?
        }
    };
    let systems = systems_from_trace_csv(&system, &trace_csv).map_err(|e| anyhow!("input: {e}"))?;
    Ok(Bench {
        system,
        model,
        systems,
        trace_csv,
    })
}

fn cmd_simulate(
    inputs: BenchmarkInputs,
    run: RunArgs,
    timesteps: Option<usize>,
    out: &Path,
) -> Result<ExitCode> {
    let steps = timesteps.unwrap_or_else(|| run.default_timesteps());
    let bench = load_bench(&inputs, steps)?;
    if bench.systems.len() < steps {
        bail!(
            "input: trace has {} timesteps, need {steps}",
            bench.systems.len()
        );
    }
    let tr = Transposition::of(&bench.model).map_err(|e| anyhow!("input: {e}"))?;
    let scenario = run.scenario();
    let outcomes = simulate_systems(&bench.systems[..steps], &bench.model, &tr, &scenario)
        .map_err(|e| anyhow!("simulation failed: {e}"))?;

    write_out(out, "model.json", &fmoea_core::feature_model::serialize_model(&bench.model))?;
    write_out(out, "system.json", &bench.system.to_json())?;
    write_out(out, "trace.csv", &bench.trace_csv)?;
    write_out(out, "run_log.csv", &run_log_csv(&outcomes))?;
    write_out(out, "knees.csv", &knees_csv(&outcomes))?;
    write_out(out, "timing.csv", &timing_csv(&outcomes))?;
    write_meta(out, "simulate")?;
    let mean_valid: f64 =
        outcomes.iter().map(|o| o.valid_fraction).sum::<f64>() / outcomes.len() as f64;
    println!(
        "{} timesteps, mean valid fraction {:.3}",
        outcomes.len(),
        mean_valid
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_optimize(
    inputs: BenchmarkInputs,
    run: RunArgs,
    timestep: usize,
    out: &Path,
) -> Result<ExitCode> {
    let bench = load_bench(&inputs, timestep + 1)?;
    let tr = Transposition::of(&bench.model).map_err(|e| anyhow!("input: {e}"))?;
    let scenario = run.scenario();
    let system = bench
        .systems
        .get(timestep)
        .ok_or_else(|| anyhow!("input: trace has no timestep {timestep}"))?
        .clone();

    let outcomes = {
        // run the timestep directly against the stored per-step system
        use fmoea_core::operators::OperatorMode;
        use fmoea_core::scenario::{binary_spec, run_timestep, BinarySoaProblem};
        use fmoea_core::soa::SoaProblem;
        let seed = fmoea_core::scenario::timestep_seed(scenario.seed, timestep);
        if scenario.variant.binary_encoding() {
            let (bspec, btrees, bchains) = binary_spec(&bench.model);
            let bctx = fmoea_core::operators::OperatorContext {
                spec: &bspec,
                trees: &btrees,
                chains: &bchains,
                mode: OperatorMode::Plain,
            };
            let problem = BinarySoaProblem::new(&bench.model, &system);
            vec![run_timestep(&problem, &bctx, None, &scenario, timestep, seed)
                .map_err(|e| anyhow!("optimization failed: {e}"))?]
        } else {
            let mode = if scenario.variant.dependency_aware() {
                OperatorMode::DependencyAware
            } else {
                OperatorMode::Plain
            };
            let ctx = tr.operator_context(mode);
            let repair = tr.operator_context(OperatorMode::DependencyAware);
            let problem = SoaProblem::new(&system, &tr.spec, &tr.trees);
            vec![run_timestep(&problem, &ctx, Some(&repair), &scenario, timestep, seed)
                .map_err(|e| anyhow!("optimization failed: {e}"))?]
        }
    };

    write_out(out, "run_log.csv", &run_log_csv(&outcomes))?;
    write_out(out, "knees.csv", &knees_csv(&outcomes))?;
    write_out(out, "front.json", &front_json(&outcomes[0]))?;
    write_out(out, "timing.csv", &timing_csv(&outcomes))?;
    write_meta(out, "optimize")?;
    let k = &outcomes[0].knee;
    println!(
        "chosen ({}) objectives: throughput {:.3}, cost {:.3}; valid fraction {:.3}",
        k.strategy.label(),
        k.objectives[0],
        k.objectives[1],
        outcomes[0].valid_fraction
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(runs: &[PathBuf], out: &Path) -> Result<ExitCode> {
    let mut series = Vec::new();
    for dir in runs {
        let path = dir.join("knees.csv");
        let csv = read_to_string(&path)?;
        let rows = parse_knees_csv(&csv).map_err(|e| anyhow!("input: {}: {e}", path.display()))?;
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        series.push(RunSeries { label, rows });
    }
    let result = compare_runs(&series).map_err(|e| anyhow!("input: {e}"))?;
    write_out(out, "results.csv", &comparison_csv(&result))?;
    write_out(out, "pairwise.csv", &pairwise_csv(&result))?;
    write_meta(out, "compare")?;
    for (i, label) in result.labels.iter().enumerate() {
        println!(
            "{label}: HV {:.4} ED {:.4} valid {:.1}%",
            result.hv[i], result.ed[i], result.valid_pct[i]
        );
    }
    Ok(ExitCode::SUCCESS)
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Renders the comparison panels written next to this script."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
PANELS = ["gm_obj0", "gm_obj1", "hv", "ed", "valid_pct"]

fig, axes = plt.subplots(1, len(PANELS), figsize=(4 * len(PANELS), 4))
for ax, panel in zip(axes, PANELS):
    rows = list(csv.DictReader(open(HERE / f"panel_{panel}.csv")))
    ax.bar([r["approach"] for r in rows], [float(r["value"]) for r in rows])
    ax.set_title(panel)
    ax.tick_params(axis="x", rotation=45)
fig.tight_layout()
fig.savefig(HERE / "panels.png", dpi=150)
print(f"wrote {HERE / 'panels.png'}")
"#;

fn cmd_report(comparison: &Path, out: &Path) -> Result<ExitCode> {
    let csv = read_to_string(comparison)?;
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| anyhow!("input: comparison file is empty"))?
        .split(',')
        .collect();
    let need = ["approach", "gm_obj0", "gm_obj1", "hv", "ed", "valid_pct"];
    for col in need {
        if !header.contains(&col) {
            bail!("input: comparison file lacks column `{col}`");
        }
    }
    let idx = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let mut panels: Vec<(String, String)> = need[1..]
        .iter()
        .map(|col| (col.to_string(), String::from("approach,value\n")))
        .collect();
    let mut rows = 0;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != header.len() {
            bail!("input: malformed comparison row `{line}`");
        }
        for (col, content) in panels.iter_mut() {
            content.push_str(&format!("{},{}\n", cols[idx("approach")], cols[idx(col)]));
        }
        rows += 1;
    }
    if rows == 0 {
        bail!("input: comparison file has no data rows");
    }
    for (col, content) in &panels {
        write_out(out, &format!("panel_{col}.csv"), content)?;
    }
    write_out(out, "plot_panels.py", PLOT_SCRIPT)?;
    write_meta(out, "report")?;
    println!("{rows} approaches, {} panels", panels.len());
    Ok(ExitCode::SUCCESS)
}
