use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use carleson_core::carleson_disc::{onebox_constant, write_onebox_csv};
use carleson_core::gramian::sequence_gram_norm;
use carleson_core::kernel::{Domain, KernelSpec};
use carleson_core::linalg::PowerOptions;
use carleson_core::occupancy::{exact_distribution, ratio_check, OccupancyProblem};
use carleson_core::sequence::{
    read_sequence, sample_ball, sample_polydisc, write_sequence, CountingProfile,
    RadiusPlacement, SampleConfig, DEFAULT_POINT_CAP,
};
use carleson_core::separation::{
    cluster_count, greedy_partition, rectangle_collisions, separation_constant,
    write_collisions_jsonl, Metric,
};
use carleson_lab::config::ExperimentConfig;
use carleson_lab::plotdata::{emit_plotdata, PlotFormat};
use carleson_lab::runner::{read_results, run_experiment, RunOptions};
use carleson_lab::summary::summarize;
use carleson_lab::{LabError, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "carleson-lab", version, about = "Random sequences, Gramians and occupancy statistics")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Base seed for commands that sample.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for experiment runs.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Output file (single commands) or directory (experiments).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a random sequence and write it in text form.
    Generate(GenerateArgs),
    /// Norm of the normalized Gramian of a stored sequence.
    GramNorm(GramNormArgs),
    /// Rectangle collisions, clusters and separation of a stored sequence.
    Separation(SeparationArgs),
    /// Exact law of the number of boxes holding exactly r points.
    Occupancy(OccupancyArgs),
    /// Dyadic one-box Carleson constant of a stored disc sequence.
    Onebox(OneboxArgs),
    /// Run or summarize experiment campaigns.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Polydisc,
    Ball,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Midpoint,
    UniformInBand,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Szego,
    Dirichlet,
    BesovSobolev,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "polydisc")]
    domain: DomainArg,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    beta: f64,
    /// Truncation degree of the counting profile.
    #[arg(long)]
    depth: u32,
    #[arg(long, value_enum, default_value = "midpoint")]
    placement: PlacementArg,
    #[arg(long, default_value_t = DEFAULT_POINT_CAP)]
    point_cap: u64,
}

#[derive(Args)]
struct GramNormArgs {
    /// Sequence file written by `generate`.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "szego")]
    kernel: KernelArg,
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1024)]
    dense_cap: usize,
}

#[derive(Args)]
struct SeparationArgs {
    input: PathBuf,
    /// Number of separated sequences allowed in the union.
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Clusters are counted in ρ-balls of radius 2^-scale.
    #[arg(long, default_value_t = 2)]
    cluster_scale: u32,
    /// Also run the greedy partition at this threshold.
    #[arg(long)]
    delta: Option<f64>,
    /// Write the collision events as JSON lines to this file.
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Args)]
struct OccupancyArgs {
    /// Number of points n.
    #[arg(long)]
    points: u64,
    /// Number of boxes N.
    #[arg(long)]
    boxes: u64,
    #[arg(long, default_value_t = 2)]
    r: u32,
}

#[derive(Args)]
struct OneboxArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Run (or resume) the campaign described by a TOML config.
    Run {
        config: PathBuf,
    },
    /// Summarize a results file and emit plot data next to it.
    Summarize {
        results: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        format: FormatArg,
    },
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| LabError::Io {
            path: p.clone(),
            source: e,
        })?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn open(path: &Path) -> Result<io::BufReader<File>> {
    File::open(path).map(io::BufReader::new).map_err(|e| LabError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn emit_json(out: &Option<PathBuf>, value: &serde_json::Value) -> Result<()> {
    let mut w = output(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(carleson_core::Error::from)?;
    Ok(())
}

fn generate(g: &Global, a: &GenerateArgs) -> Result<()> {
    let domain = match a.domain {
        DomainArg::Polydisc => Domain::Polydisc(a.dim),
        DomainArg::Ball => Domain::Ball(a.dim),
    };
    let profile = CountingProfile::exponential(domain, a.c, a.beta, a.depth)?;
    let config = SampleConfig {
        placement: match a.placement {
            PlacementArg::Midpoint => RadiusPlacement::Midpoint,
            PlacementArg::UniformInBand => RadiusPlacement::UniformInBand,
        },
        point_cap: a.point_cap,
    };
    let seq = match domain {
        Domain::Polydisc(_) => sample_polydisc(&profile, &config, g.seed)?,
        Domain::Ball(_) => sample_ball(&profile, &config, g.seed)?,
    };
    let mut w = output(&g.out)?;
    write_sequence(&seq, &mut w)?;
    w.flush().map_err(carleson_core::Error::from)?;
    Ok(())
}

fn gram_norm(g: &Global, a: &GramNormArgs) -> Result<()> {
    let seq = read_sequence(open(&a.input)?)?;
    let d = seq.domain().dim();
    let spec = match a.kernel {
        KernelArg::Szego => KernelSpec::szego(d),
        KernelArg::Dirichlet => KernelSpec::dirichlet(a.a, d),
        KernelArg::BesovSobolev => KernelSpec::besov_sobolev(a.a, d),
    }?;
    let opts = PowerOptions {
        tol: a.tol,
        seed: g.seed,
        ..PowerOptions::default()
    };
    let est = sequence_gram_norm(&spec, &seq, &opts, a.dense_cap)?;
    emit_json(
        &g.out,
        &json!({
            "points": seq.len(),
            "norm": est.value,
            "iterations": est.iterations,
            "converged": est.converged,
        }),
    )
}

fn separation(g: &Global, a: &SeparationArgs) -> Result<()> {
    let seq = read_sequence(open(&a.input)?)?;
    let events = rectangle_collisions(&seq, a.m)?;
    if let Some(path) = &a.events {
        let file = File::create(path).map_err(|e| LabError::Io {
            path: path.clone(),
            source: e,
        })?;
        write_collisions_jsonl(&events, BufWriter::new(file))?;
    }
    let mut report = json!({
        "points": seq.len(),
        "collisions": events.len(),
        "clusters": cluster_count(&seq, a.m, a.cluster_scale)?,
        "separation": separation_constant(&seq, Metric::Rho)?,
    });
    if let Some(delta) = a.delta {
        let part = greedy_partition(&seq, delta, Metric::Rho)?;
        report["partition_parts"] = json!(part.parts);
        report["partition_max_degree"] = json!(part.max_degree);
    }
    emit_json(&g.out, &report)
}

fn occupancy(g: &Global, a: &OccupancyArgs) -> Result<()> {
    let p = OccupancyProblem::new(a.points, a.boxes, a.r)?;
    let law = exact_distribution(&p);
    let ratio = ratio_check(&p).ok();
    emit_json(
        &g.out,
        &json!({
            "points": p.points(),
            "boxes": p.boxes(),
            "r": p.r(),
            "alpha": p.alpha(),
            "p_r": p.p_r(),
            "alpha_r": p.alpha_r(),
            "sigma_r_sq": p.sigma_r_sq(),
            "ratio": ratio,
            "law": law.probs,
        }),
    )
}

fn onebox(g: &Global, a: &OneboxArgs) -> Result<()> {
    let seq = read_sequence(open(&a.input)?)?;
    let report = onebox_constant(&seq, a.gamma)?;
    let mut w = output(&g.out)?;
    write_onebox_csv(&report, &mut w)?;
    w.flush().map_err(carleson_core::Error::from)?;
    eprintln!(
        "constant {} (all arcs at most {})",
        report.constant,
        report.all_arcs_bound()
    );
    Ok(())
}

fn experiment(g: &Global, cmd: &ExperimentCommand) -> Result<()> {
    match cmd {
        ExperimentCommand::Run { config } => {
            let config = ExperimentConfig::load(config)?;
            let out_dir = g
                .out
                .clone()
                .or_else(|| config.output.clone())
                .unwrap_or_else(|| PathBuf::from("results").join(&config.id));
            let report = run_experiment(&config, &RunOptions { out_dir: out_dir.clone(), threads: g.threads })?;
            let failed = report.results.iter().filter(|r| r.error.is_some()).count();
            eprintln!(
                "{}: {} cells computed, {} reused, {failed} failed, results in {}",
                config.id,
                report.computed,
                report.reused,
                out_dir.display()
            );
            Ok(())
        }
        ExperimentCommand::Summarize { results, format } => {
            let rows = read_results(results)?;
            let summary = summarize(&rows)?;
            let dir = g
                .out
                .clone()
                .unwrap_or_else(|| results.parent().unwrap_or(Path::new(".")).to_path_buf());
            let format = match format {
                FormatArg::Csv => PlotFormat::Csv,
                FormatArg::Json => PlotFormat::Json,
                FormatArg::Both => PlotFormat::Both,
            };
            let mut written = emit_plotdata(&summary, &dir, format)?;
            let path = dir.join("summary.json");
            let file = File::create(&path).map_err(|e| LabError::Io {
                path: path.clone(),
                source: e,
            })?;
            serde_json::to_writer_pretty(BufWriter::new(file), &summary)?;
            written.push(path);
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(&cli.global, a),
        Command::GramNorm(a) => gram_norm(&cli.global, a),
        Command::Separation(a) => separation(&cli.global, a),
        Command::Occupancy(a) => occupancy(&cli.global, a),
        Command::Onebox(a) => onebox(&cli.global, a),
        Command::Experiment(c) => experiment(&cli.global, c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
