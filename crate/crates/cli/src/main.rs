// SPDX-License-Identifier: Apache-2.0

//! `xbarlife`: batch front end for endurance-aware SNN mapping.

mod artifacts;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use artifacts::Artifacts;
use xbarlife::config::RunConfig;
use xbarlife::energy::EnergyReport;
use xbarlife::error::{Error, ExitClass};
use xbarlife::partition::{partition_workload, Clustering};
use xbarlife::pipeline::{run_strategy, Platform, Strategy, StrategyRun};
use xbarlife::swarm::{pareto_front, LogRecord};
use xbarlife::workload::{generate, stats, ActivationDist, GeneratorSpec, SnnGraph, Topology};

#[derive(Parser)]
#[command(name = "xbarlife", version, about = "Endurance-aware mapping of SNNs onto PCM crossbars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for partitioning, the swarm and arbitrary placement.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tiles: Option<usize>,
    /// Crossbar size as ROWSxCOLS.
    #[arg(long, value_parser = parse_dims)]
    crossbar: Option<(usize, usize)>,
    /// Technology node in nm.
    #[arg(long)]
    node: Option<u32>,
    /// Ambient temperature in K.
    #[arg(long)]
    temp: Option<f64>,
    /// Swarm iterations.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    /// Worker threads for parallel stages.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct WorkloadArgs {
    /// Workload JSON; falls back to the config's [workload] generator.
    #[arg(long)]
    workload: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic workload.
    Gen {
        /// `feedforward:L1,L2,...` or `reservoir:N,P`.
        #[arg(long)]
        topology: Option<String>,
        /// `uniform:LO,HI` or `zipf:S,MAX`.
        #[arg(long)]
        activations: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output workload file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Current, self-heating and endurance maps of one crossbar.
    EnduranceMap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster, map and place one workload with one strategy.
    Map {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        workload: WorkloadArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all three strategies on one clustering.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        workload: WorkloadArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluated-point log and its lifetime/energy Pareto front.
    Pareto {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        workload: WorkloadArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default configuration.
    Defaults,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got `{s}`"))?;
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    Ok((num(r)?, num(c)?))
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Lifts a library result into the crate error so the exit class survives.
trait Lib<T> {
    fn lib(self) -> Result<T, Error>;
}

impl<T, E: Into<Error>> Lib<T> for Result<T, E> {
    fn lib(self) -> Result<T, Error> {
        self.map_err(Into::into)
    }
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.pso.seed = s;
        cfg.partition.seed = s;
    }
    if let Some(t) = common.tiles {
        cfg.tiles = t;
    }
    if let Some((r, c)) = common.crossbar {
        cfg.crossbar.rows = r;
        cfg.crossbar.cols = c;
    }
    if let Some(n) = common.node {
        cfg.crossbar.node_nm = n;
    }
    if let Some(t) = common.temp {
        cfg.crossbar.t_ambient = t;
    }
    if let Some(i) = common.iterations {
        cfg.pso.iterations = i;
    }
    if let Some(s) = common.strategy {
        cfg.strategy = s;
    }
    cfg.validate()?;
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    Ok(cfg)
}

fn load_workload(args: &WorkloadArgs, cfg: &RunConfig) -> Result<SnnGraph> {
    match (&args.workload, &cfg.workload) {
        (Some(p), _) => Ok(SnnGraph::load(p).lib()?),
        (None, Some(spec)) => Ok(generate(spec).lib()?),
        (None, None) => Err(Error::Config("no workload: pass --workload or set a [workload] section".into()).into()),
    }
}

fn cmd_gen(
    topology: Option<String>,
    activations: Option<String>,
    seed: Option<u64>,
    config: Option<PathBuf>,
    out: &Path,
) -> Result<()> {
    let base = match config {
        Some(p) => RunConfig::load(p)?.workload,
        None => None,
    };
    let spec = match (base, topology, activations) {
        (Some(mut s), t, a) => {
            if let Some(t) = t {
                s.topology = t.parse::<Topology>().lib()?;
            }
            if let Some(a) = a {
                s.activations = a.parse::<ActivationDist>().lib()?;
            }
            s
        }
        (None, Some(t), Some(a)) => GeneratorSpec {
            topology: t.parse().lib()?,
            activations: a.parse().lib()?,
            seed: 0,
        },
        _ => {
            return Err(Error::Config("gen needs --topology and --activations, or a config with [workload]".into()).into())
        }
    };
    let spec = GeneratorSpec {
        seed: seed.unwrap_or(spec.seed),
        ..spec
    };
    let graph = generate(&spec).lib()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    graph.save(out).lib()?;
    eprintln!("{}", serde_json::to_string(&stats(&graph))?);
    Ok(())
}

fn cmd_endurance_map(common: &Common, out: &Path) -> Result<()> {
    let cfg = resolve(common)?;
    let mut art = Artifacts::create(out)?;
    let t = Instant::now();
    let platform = cfg.platform()?;
    art.time("endurance_map", t.elapsed().as_secs_f64());
    let map = &platform.endurance;
    art.text("currents.csv", &map.source.currents.to_csv_string())?;
    art.text("t_sh_peak.csv", &map.t_sh_peak.to_csv_string())?;
    art.text("endurance.csv", &map.endurance.to_csv_string())?;
    art.text("amorphization_time.csv", &map.amorphization_time.to_csv_string())?;
    #[derive(Serialize)]
    struct Summary<'a> {
        calibration: xbarlife::circuit::CalibrationSummary,
        endurance_model: xbarlife::thermal::EnduranceModel,
        unique_simulations: usize,
        endurance_min: f64,
        endurance_max: f64,
        crossbar: &'a xbarlife::circuit::CrossbarConfig,
    }
    art.json(
        "summary.json",
        &Summary {
            calibration: map.source.summary(),
            endurance_model: map.model,
            unique_simulations: map.unique_simulations,
            endurance_min: map.endurance.min(),
            endurance_max: map.endurance.max(),
            crossbar: &platform.crossbar,
        },
    )?;
    finish(art, "endurance-map", &cfg)
}

fn finish(mut art: Artifacts, command: &str, cfg: &RunConfig) -> Result<()> {
    let toml = cfg.to_toml();
    art.text("config.toml", &toml)?;
    art.finish(command, &toml, cfg.pso.seed)
}

struct Prepared {
    cfg: RunConfig,
    platform: Platform,
    clustering: Clustering,
}

fn prepare(common: &Common, workload: &WorkloadArgs, art: &mut Artifacts) -> Result<Prepared> {
    let cfg = resolve(common)?;
    let graph = load_workload(workload, &cfg)?;
    let t = Instant::now();
    let platform = cfg.platform()?;
    art.time("endurance_map", t.elapsed().as_secs_f64());
    let t = Instant::now();
    let clustering = partition_workload(&graph, platform.dims(), &cfg.partition).lib()?;
    art.time("partition", t.elapsed().as_secs_f64());
    art.json("clustering.json", &clustering.export())?;
    Ok(Prepared {
        cfg,
        platform,
        clustering,
    })
}

fn run(p: &Prepared, strategy: Strategy, art: &mut Artifacts) -> Result<StrategyRun> {
    let r = run_strategy(&p.platform, &p.clustering, strategy, &p.cfg.pso)?;
    art.time(&format!("pso_{strategy}"), r.elapsed_s);
    Ok(r)
}

#[derive(Serialize)]
struct MappingOut<'a> {
    strategy: Strategy,
    tiles: usize,
    assignment: &'a [usize],
    min_lifetime: f64,
    min_tile: usize,
}

fn cmd_map(common: &Common, workload: &WorkloadArgs, out: &Path) -> Result<()> {
    let mut art = Artifacts::create(out)?;
    let p = prepare(common, workload, &mut art)?;
    let r = run(&p, p.cfg.strategy, &mut art)?;
    art.json(
        "mapping.json",
        &MappingOut {
            strategy: r.strategy,
            tiles: p.platform.tiles,
            assignment: &r.mapping.assignment,
            min_lifetime: r.lifetime.min_lifetime,
            min_tile: r.lifetime.min_tile,
        },
    )?;
    art.json("placement.json", &r.lifetime.export_placements())?;
    for t in &r.lifetime.tiles {
        art.text(&format!("lifetime_tile{}.csv", t.tile), &t.lifetime.to_csv_string())?;
    }
    art.json("energy.json", &r.energy)?;
    art.text("energy.csv", &format!("{}\n{}\n", EnergyReport::CSV_HEADER, r.energy.csv_row()))?;
    art.jsonl("swarm_log.jsonl", &r.swarm.log)?;
    let mut hist = String::from("iter,g_best_score\n");
    for (k, s) in r.swarm.history.iter().enumerate() {
        hist.push_str(&format!("{k},{s}\n"));
    }
    art.text("history.csv", &hist)?;
    finish(art, "map", &p.cfg)
}

#[derive(Serialize)]
struct CompareRow<'a> {
    strategy: Strategy,
    assignment: &'a [usize],
    min_lifetime: f64,
    min_tile: usize,
    lifetime_vs_spinemap: f64,
    energy: &'a EnergyReport,
}

fn cmd_compare(common: &Common, workload: &WorkloadArgs, out: &Path) -> Result<()> {
    let mut art = Artifacts::create(out)?;
    let p = prepare(common, workload, &mut art)?;
    let runs = Strategy::ALL
        .into_iter()
        .map(|s| run(&p, s, &mut art))
        .collect::<Result<Vec<_>>>()?;
    let base = runs[0].lifetime.min_lifetime;
    let rows: Vec<CompareRow> = runs
        .iter()
        .map(|r| CompareRow {
            strategy: r.strategy,
            assignment: &r.mapping.assignment,
            min_lifetime: r.lifetime.min_lifetime,
            min_tile: r.lifetime.min_tile,
            lifetime_vs_spinemap: r.lifetime.min_lifetime / base,
            energy: &r.energy,
        })
        .collect();
    let mut csv = format!("strategy,min_lifetime,lifetime_vs_spinemap,{}\n", EnergyReport::CSV_HEADER);
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.strategy,
            r.min_lifetime,
            r.lifetime_vs_spinemap,
            r.energy.csv_row()
        ));
    }
    art.json("compare.json", &rows)?;
    art.text("compare.csv", &csv)?;
    finish(art, "compare", &p.cfg)
}

/// Swarm log point as (energy, lifetime); infeasible points become NaN.
fn log_point(r: &LogRecord) -> (f64, f64) {
    (r.energy_j.unwrap_or(f64::NAN), r.min_lifetime.unwrap_or(f64::NAN))
}

fn cmd_pareto(common: &Common, workload: &WorkloadArgs, out: &Path) -> Result<()> {
    let mut art = Artifacts::create(out)?;
    let p = prepare(common, workload, &mut art)?;
    let r = run(&p, p.cfg.strategy, &mut art)?;
    let log = &r.swarm.log;
    art.jsonl("swarm_log.jsonl", log)?;
    let points: Vec<(f64, f64)> = log.iter().map(log_point).collect();
    let mut csv = String::from("log_index,iter,particle,energy_J,min_lifetime,assignment\n");
    for f in pareto_front(&points) {
        let rec = &log[f.index];
        let assignment: Vec<String> = rec.assignment.iter().map(usize::to_string).collect();
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            f.index,
            rec.iter,
            rec.particle,
            f.energy,
            f.lifetime,
            assignment.join(";")
        ));
    }
    art.text("pareto.csv", &csv)?;
    finish(art, "pareto", &p.cfg)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            topology,
            activations,
            seed,
            config,
            out,
        } => cmd_gen(topology, activations, seed, config, &out),
        Command::EnduranceMap { common, out } => cmd_endurance_map(&common, &out),
        Command::Map { common, workload, out } => cmd_map(&common, &workload, &out),
        Command::Compare { common, workload, out } => cmd_compare(&common, &workload, &out),
        Command::Pareto { common, workload, out } => cmd_pareto(&common, &workload, &out),
        Command::Defaults => {
            print!("{}", RunConfig::default().to_toml());
            Ok(())
        }
    }
}

fn exit_class(err: &anyhow::Error) -> ExitClass {
    err.downcast_ref::<Error>().map_or(ExitClass::Internal, Error::exit_class)
}

fn report(class: ExitClass, message: &str) -> ExitCode {
    let line = serde_json::json!({
        "error": class.label(),
        "code": class.code(),
        "message": message,
    });
    println!("{line}");
    ExitCode::from(class.code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let first = e.to_string().lines().next().unwrap_or_default().to_owned();
            return report(ExitClass::Config, &first);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            report(exit_class(&err), &format!("{err:#}"))
        }
    }
}
