//! The `ponas` command line.
//!
//! Primary output is JSON on stdout. Every document starts with
//! `tool_version`, `seed` and `command`. Exit codes: 0 success, 2 usage,
//! 3 infeasible, 4 I/O, 5 validation.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::accuracy_table::{synth_table, AccuracyLossTable, SynthProfile, Table, TableDocument};
use crate::analysis::{evolution_csv, importance_csv, kendall_tau, PairedSamples};
use crate::cost_model::{architecture_cost, Constraint, LayerCostTable, Metric};
use crate::error::Error;
use crate::fmt::{fixed, micros_raw};
use crate::progressive_builder::{build_table, SyntheticEvaluator, TwoStageSchedule};
use crate::search_space::{decode, default_macro, Chromosome, LARGEST_BLOCK};
use crate::specializer::{ablation_networks, brute_force, specialize, GaConfig, Selection};
use crate::TOOL_VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_VALIDATION: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "ponas",
    version,
    about = "Accuracy-table construction and constrained network specialization"
)]
struct Cli {
    /// Seed for every random choice; echoed into the output.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Side file for the command's artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Worker threads for parallel evaluation (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// FLOPs and parameters of an architecture of the default macro.
    Cost {
        /// Comma-separated genes, `largest` or `smallest`.
        #[arg(long)]
        genes: String,
        /// Include the per-slot listing.
        #[arg(long)]
        expanded: bool,
    },
    /// Fill the accuracy table layer by layer against an evaluator.
    BuildTable {
        #[arg(long, value_enum, default_value_t = EvaluatorKind::Synthetic)]
        evaluator: EvaluatorKind,
    },
    /// Generate a synthetic accuracy table directly.
    SynthTable {
        #[arg(long, default_value_t = 19)]
        layers: usize,
        #[arg(long, default_value_t = 12)]
        candidates: usize,
        #[arg(long, value_enum, default_value_t = ProfileArg::Peaked)]
        profile: ProfileArg,
    },
    /// Convert an accuracy table into the accuracy-loss domain.
    LossTable {
        #[arg(long)]
        table: PathBuf,
    },
    /// Genetic search for the lowest-loss network under a cost ceiling.
    Specialize {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 1000)]
        generations: usize,
        #[arg(long, default_value_t = 20)]
        population: usize,
        #[arg(long, default_value_t = 0.1)]
        mutation: f64,
        #[arg(long, default_value_t = 100)]
        repair_attempts: usize,
        #[arg(long, value_enum, default_value_t = SelectionArg::Pooled)]
        selection: SelectionArg,
        /// Evolution curve CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Exhaustive search; small spaces only.
    Oracle {
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// Layer importance, rank correlation and ablation networks
    #[command(subcommand)]
    Analyze(Analyze),
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Accuracy table, or a loss table with `"domain": "loss"`.
    #[arg(long)]
    table: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::Flops)]
    metric: MetricArg,
    /// Largest admissible cost in units of --metric (MACs or parameters)
    #[arg(long)]
    ceiling: u64,
    /// Per-layer block costs; defaults to the built-in macro-architecture.
    #[arg(long)]
    costs: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Analyze {
    /// Maximum loss per layer.
    Importance {
        #[arg(long)]
        table: PathBuf,
    },
    /// Kendall's tau-b between two comma-separated samples.
    Kendall {
        #[arg(long, allow_hyphen_values = true)]
        xs: String,
        #[arg(long, allow_hyphen_values = true)]
        ys: String,
    },
    /// Worst network, and the worst network with its least or most
    /// important layer restored.
    AblationWorst {
        #[arg(long)]
        table: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EvaluatorKind {
    Synthetic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    Peaked,
    Uniform,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricArg {
    Flops,
    Params,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Flops => Metric::Flops,
            MetricArg::Params => Metric::Params,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SelectionArg {
    Pooled,
    ParentsOnly,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CmdResult = std::result::Result<String, Failure>;

#[derive(Serialize)]
struct Output<'a, T: Serialize> {
    tool_version: &'static str,
    seed: u64,
    command: &'a str,
    #[serde(flatten)]
    body: T,
}

struct Ctx {
    seed: u64,
    out: Option<PathBuf>,
    format: Format,
    threads: Option<usize>,
    command: String,
}

impl Ctx {
    fn render<T: Serialize>(&self, body: T) -> String {
        let doc = Output {
            tool_version: TOOL_VERSION,
            seed: self.seed,
            command: &self.command,
            body,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("output serializes");
        s.push('\n');
        s
    }

    fn json_only(&self) -> std::result::Result<(), Failure> {
        if self.format == Format::Csv {
            return Err(Failure::Usage(format!(
                "`{}` has no CSV output",
                self.command
            )));
        }
        Ok(())
    }

    fn write_side(&self, path: &Path, text: &str) -> std::result::Result<(), Failure> {
        std::fs::write(path, text).map_err(|e| Failure::Lib(Error::io(path, e)))
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out.clone(),
        format: cli.format,
        threads: cli.threads,
        command: command_name(&cli.command),
    };
    // Commands whose primary output is the only artifact copy it to --out.
    let mirror_out = matches!(
        cli.command,
        Command::Cost { .. }
            | Command::Oracle { .. }
            | Command::Analyze(Analyze::Kendall { .. } | Analyze::AblationWorst { .. })
    );
    let result = match cli.command {
        Command::Cost { genes, expanded } => cmd_cost(&ctx, &genes, expanded),
        Command::BuildTable { evaluator } => cmd_build_table(&ctx, evaluator),
        Command::SynthTable {
            layers,
            candidates,
            profile,
        } => cmd_synth_table(&ctx, layers, candidates, profile),
        Command::LossTable { table } => cmd_loss_table(&ctx, &table),
        Command::Specialize {
            problem,
            generations,
            population,
            mutation,
            repair_attempts,
            selection,
            log,
        } => {
            let cfg = GaConfig {
                population,
                parents_kept: population / 2,
                generations,
                mutation_prob: mutation,
                seed: ctx.seed,
                repair_attempts,
                selection: match selection {
                    SelectionArg::Pooled => Selection::Pooled,
                    SelectionArg::ParentsOnly => Selection::ParentsOnly,
                },
            };
            cmd_specialize(&ctx, &problem, &cfg, log.as_deref(), stderr)
        }
        Command::Oracle { problem } => cmd_oracle(&ctx, &problem),
        Command::Analyze(a) => match a {
            Analyze::Importance { table } => cmd_importance(&ctx, &table),
            Analyze::Kendall { xs, ys } => cmd_kendall(&ctx, &xs, &ys),
            Analyze::AblationWorst { table } => cmd_ablation(&ctx, &table),
        },
    };
    let result = result.and_then(|text| match (&ctx.out, mirror_out) {
        (Some(path), true) => ctx.write_side(path, &text).map(|()| text),
        _ => Ok(text),
    });
    match result {
        Ok(text) => match stdout.write_all(text.as_bytes()) {
            Ok(()) => EXIT_OK,
            Err(_) => EXIT_IO,
        },
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Lib(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            match e {
                Error::Infeasible { .. } => EXIT_INFEASIBLE,
                Error::Io { .. } => EXIT_IO,
                _ => EXIT_VALIDATION,
            }
        }
    }
}

fn command_name(c: &Command) -> String {
    match c {
        Command::Cost { .. } => "cost",
        Command::BuildTable { .. } => "build-table",
        Command::SynthTable { .. } => "synth-table",
        Command::LossTable { .. } => "loss-table",
        Command::Specialize { .. } => "specialize",
        Command::Oracle { .. } => "oracle",
        Command::Analyze(Analyze::Importance { .. }) => "analyze importance",
        Command::Analyze(Analyze::Kendall { .. }) => "analyze kendall",
        Command::Analyze(Analyze::AblationWorst { .. }) => "analyze ablation-worst",
    }
    .to_string()
}

#[derive(Serialize)]
struct CostOut {
    genes: Chromosome,
    flops: u64,
    params: u64,
    flops_m: Box<RawValue>,
    params_m: Box<RawValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    architecture: Option<crate::search_space::ArchitectureJson>,
}

fn cmd_cost(ctx: &Ctx, genes: &str, expanded: bool) -> CmdResult {
    ctx.json_only()?;
    let m = default_macro();
    let chromosome = match genes.trim() {
        "largest" => Chromosome::uniform(m.num_searchable(), LARGEST_BLOCK),
        "smallest" => Chromosome::uniform(m.num_searchable(), 0),
        list => list
            .parse::<Chromosome>()
            .map_err(|e| Failure::Usage(e.to_string()))?,
    };
    let spec = decode(&chromosome, &m).map_err(|e| Failure::Usage(e.to_string()))?;
    let cost = architecture_cost(&spec)?;
    Ok(ctx.render(CostOut {
        genes: chromosome,
        flops: cost.flops,
        params: cost.params,
        flops_m: fixed(cost.flops as f64 / 1e6, 2),
        params_m: fixed(cost.params as f64 / 1e6, 2),
        architecture: expanded.then(|| spec.to_json(true)),
    }))
}

#[derive(Serialize)]
struct Manifest {
    evaluator: &'static str,
    schedule: TwoStageSchedule,
    evaluations: usize,
    table: TableDocument,
    best_genes: Chromosome,
}

fn cmd_build_table(ctx: &Ctx, evaluator: EvaluatorKind) -> CmdResult {
    ctx.json_only()?;
    let m = default_macro();
    let out = match evaluator {
        EvaluatorKind::Synthetic => {
            let eval = SyntheticEvaluator::new(ctx.seed, m.num_searchable());
            build_table(&m, &eval, ctx.threads)?
        }
    };
    let text = ctx.render(Manifest {
        evaluator: "synthetic",
        schedule: TwoStageSchedule::default(),
        evaluations: out.evaluations,
        table: out.table.document(),
        best_genes: out.best_genes,
    });
    if let Some(path) = &ctx.out {
        ctx.write_side(path, &out.table.to_json())?;
    }
    Ok(text)
}

fn cmd_synth_table(ctx: &Ctx, layers: usize, candidates: usize, profile: ProfileArg) -> CmdResult {
    ctx.json_only()?;
    let profile = match profile {
        ProfileArg::Peaked => SynthProfile::Peaked,
        ProfileArg::Uniform => SynthProfile::Uniform,
    };
    let table = synth_table(ctx.seed, layers, candidates, profile)?;
    if let Some(path) = &ctx.out {
        table.save(path)?;
    }
    Ok(ctx.render(table.document()))
}

fn cmd_loss_table(ctx: &Ctx, path: &Path) -> CmdResult {
    ctx.json_only()?;
    let loss = Table::load(path)?.into_loss();
    if let Some(out) = &ctx.out {
        loss.save(out)?;
    }
    Ok(ctx.render(loss.document()))
}

struct Problem {
    loss: AccuracyLossTable,
    costs: LayerCostTable,
    constraint: Constraint,
}

fn load_problem(args: &ProblemArgs) -> std::result::Result<Problem, Failure> {
    let loss = Table::load(&args.table)?.into_loss();
    let costs = match &args.costs {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            LayerCostTable::from_json(&text)?
        }
        None => LayerCostTable::from_macro(&default_macro())?,
    };
    let constraint = Constraint::new(args.metric.into(), args.ceiling)?;
    Ok(Problem {
        loss,
        costs,
        constraint,
    })
}

#[derive(Serialize)]
struct SpecializeOut {
    genes: Chromosome,
    loss: Box<RawValue>,
    flops: u64,
    params: u64,
    generations: usize,
    metric: Metric,
    ceiling: u64,
}

#[derive(Serialize)]
struct SpecializeManifest<'a> {
    #[serde(flatten)]
    result: &'a SpecializeOut,
    config: &'a GaConfig,
    wall_clock_ms: Box<RawValue>,
}

fn cmd_specialize(
    ctx: &Ctx,
    args: &ProblemArgs,
    cfg: &GaConfig,
    log: Option<&Path>,
    stderr: &mut dyn Write,
) -> CmdResult {
    ctx.json_only()?;
    let p = load_problem(args)?;
    let started = Instant::now();
    let out = specialize(&p.loss, &p.costs, p.constraint, cfg)?;
    let elapsed = started.elapsed().as_secs_f64() * 1e3;
    let _ = writeln!(stderr, "specialized in {elapsed:.1} ms");

    let result = SpecializeOut {
        genes: out.chromosome.clone(),
        loss: micros_raw(out.loss_micros),
        flops: out.cost.flops,
        params: out.cost.params,
        generations: cfg.generations,
        metric: p.constraint.metric(),
        ceiling: p.constraint.ceiling(),
    };
    if let Some(path) = log {
        ctx.write_side(path, &evolution_csv(&out.log))?;
    }
    if let Some(path) = &ctx.out {
        let manifest = ctx.render(SpecializeManifest {
            result: &result,
            config: cfg,
            wall_clock_ms: fixed(elapsed, 3),
        });
        ctx.write_side(path, &manifest)?;
    }
    Ok(ctx.render(result))
}

#[derive(Serialize)]
struct OracleOut {
    genes: Chromosome,
    loss: Box<RawValue>,
    flops: u64,
    params: u64,
    metric: Metric,
    ceiling: u64,
}

fn cmd_oracle(ctx: &Ctx, args: &ProblemArgs) -> CmdResult {
    ctx.json_only()?;
    let p = load_problem(args)?;
    let (genes, loss) = brute_force(&p.loss, &p.costs, p.constraint)?;
    let cost = p.costs.cost(genes.genes());
    Ok(ctx.render(OracleOut {
        genes,
        loss: micros_raw(loss),
        flops: cost.flops,
        params: cost.params,
        metric: p.constraint.metric(),
        ceiling: p.constraint.ceiling(),
    }))
}

#[derive(Serialize)]
struct ImportanceOut {
    max_loss: Vec<Box<RawValue>>,
}

fn cmd_importance(ctx: &Ctx, path: &Path) -> CmdResult {
    let loss = Table::load(path)?.into_loss();
    let csv = importance_csv(&loss);
    if let Some(out) = &ctx.out {
        ctx.write_side(out, &csv)?;
    }
    Ok(match ctx.format {
        Format::Csv => csv,
        Format::Json => ctx.render(ImportanceOut {
            max_loss: loss
                .layer_importance_micros()
                .into_iter()
                .map(|m| micros_raw(u64::from(m)))
                .collect(),
        }),
    })
}

fn parse_floats(s: &str) -> std::result::Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Failure::Usage(format!("{v:?}: {e}")))
        })
        .collect()
}

#[derive(Serialize)]
struct KendallOut {
    n: usize,
    tau: Box<RawValue>,
}

fn cmd_kendall(ctx: &Ctx, xs: &str, ys: &str) -> CmdResult {
    let samples = PairedSamples::new(parse_floats(xs)?, parse_floats(ys)?)?;
    let tau = kendall_tau(&samples)?;
    Ok(match ctx.format {
        Format::Csv => format!("tau\n{}\n", fixed(tau, 6).get()),
        Format::Json => ctx.render(KendallOut {
            n: samples.len(),
            tau: fixed(tau, 6),
        }),
    })
}

#[derive(Serialize)]
struct Network {
    genes: Chromosome,
    loss: Box<RawValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    restored_layer: Option<usize>,
}

#[derive(Serialize)]
struct AblationOut {
    worst: Network,
    worst_least: Network,
    worst_most: Network,
}

fn cmd_ablation(ctx: &Ctx, path: &Path) -> CmdResult {
    ctx.json_only()?;
    let loss = Table::load(path)?.into_loss();
    let a = ablation_networks(&loss);
    let network = |genes: Chromosome, restored_layer| Network {
        loss: micros_raw(loss.total_micros(genes.genes())),
        genes,
        restored_layer,
    };
    Ok(ctx.render(AblationOut {
        worst: network(a.worst, None),
        worst_least: network(a.worst_least, Some(a.least_layer)),
        worst_most: network(a.worst_most, Some(a.most_layer)),
    }))
}
