//! Command-line front end: spectra, masks, energies, the invariant suite and
//! training runs.
//!
//! Exit codes: 0 success, 1 bad input, 2 numerical failure, 3 invariant
//! failure, 4 training divergence, 64 usage error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use grafourier::export::{format_sig, ExportBundle, ExportFormat, Quantity, SIGNIFICANT_DIGITS};
use grafourier::graph::{self, DatasetFormat};
use grafourier::harness::{self, FaultInjection, SuiteOptions, SyntheticKind, TrainConfig};
use grafourier::{sfmask, spectral, Error, GraphDataset, MaskMode, ModelConfig};

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_INVARIANT: u8 = 3;
const EXIT_DIVERGED: u8 = 4;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "grafourier",
    version,
    about = "Spectral structure-frequency masks for graph attention"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalues and eigenvectors of the normalized Laplacian.
    Spectrum {
        #[arg(long)]
        graph: PathBuf,
        /// JSON file, or a directory of CSV files.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Structure matrix S, energy filter F and refined mask M.
    Mask {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Full)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Per-node low and high frequency energies of every graph in a dataset.
    Energy {
        #[command(flatten)]
        dataset: DatasetArgs,
        /// CSV file with columns graph_id,node_id,e_low,e_high.
        #[arg(long)]
        out: PathBuf,
    },
    /// Any subset of L, eigenvalues, eigenvectors, S, F, M, e_low, e_high.
    Export {
        #[arg(long)]
        graph: PathBuf,
        /// Comma-separated quantity names.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "L,eigenvalues,eigenvectors,S,F,M"
        )]
        what: Vec<String>,
        #[arg(long, value_enum, default_value_t = Mode::Full)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Run the invariant suite on seeded random instances.
    Check {
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt the pipeline to confirm the suite notices.
        #[arg(long, value_enum)]
        inject_fault: Option<Fault>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a masked graph transformer and write a run report.
    Train(TrainArgs),
}

#[derive(Debug, Args)]
struct DatasetArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Detected from the directory contents when omitted.
    #[arg(long, value_enum)]
    dataset_format: Option<LayoutArg>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(
        long,
        conflicts_with = "synthetic",
        required_unless_present = "synthetic"
    )]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, requires = "dataset")]
    dataset_format: Option<LayoutArg>,
    #[arg(long, value_enum)]
    synthetic: Option<Synthetic>,
    /// Number of synthetic graphs.
    #[arg(long, default_value_t = 100)]
    graphs: usize,
    #[arg(long, default_value_t = 6)]
    min_nodes: usize,
    #[arg(long, default_value_t = 14)]
    max_nodes: usize,
    /// Seed for synthetic data generation, independent of the model seed.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Share of the train split to use, in (0, 1].
    #[arg(long, default_value_t = 1.0, value_parser = parse_fraction)]
    fraction: f64,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    mask_mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    epochs: u64,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 8)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let f: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if f > 0.0 && f <= 1.0 {
        Ok(f)
    } else {
        Err(format!("{f} is outside (0, 1]"))
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    StructureOnly,
    None,
}

impl From<Mode> for MaskMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Full => MaskMode::Full,
            Mode::StructureOnly => MaskMode::StructureOnly,
            Mode::None => MaskMode::None,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LayoutArg {
    EdgeListDir,
    TuBatch,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Synthetic {
    DenseVsSparse,
    TwoCommunity,
    PathVsCycle,
}

impl From<Synthetic> for SyntheticKind {
    fn from(s: Synthetic) -> Self {
        match s {
            Synthetic::DenseVsSparse => SyntheticKind::DenseVsSparse,
            Synthetic::TwoCommunity => SyntheticKind::TwoCommunity,
            Synthetic::PathVsCycle => SyntheticKind::PathVsCycle,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Fault {
    PerturbEigenvectors,
    SkipClamp,
}

/// A failure together with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            msg: msg.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Diverged { .. } => EXIT_DIVERGED,
            ref e if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

/// Input failures, prefixed with the offending path unless the message
/// already carries it.
fn input_error(path: &Path, e: Error) -> Failure {
    match e {
        Error::Io { .. } => Failure::input(e.to_string()),
        e => Failure::input(format!("{}: {e}", path.display())),
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> CmdResult {
    match cmd {
        Command::Spectrum { graph, out, format } => export(
            &graph,
            &[Quantity::Eigenvalues, Quantity::Eigenvectors],
            MaskMode::None,
            &out,
            format,
        ),
        Command::Mask {
            graph,
            mode,
            out,
            format,
        } => export(
            &graph,
            &[Quantity::Structure, Quantity::Filter, Quantity::Mask],
            mode.into(),
            &out,
            format,
        ),
        Command::Export {
            graph,
            what,
            mode,
            out,
            format,
        } => {
            let wanted = what
                .iter()
                .map(|w| w.trim().parse::<Quantity>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure {
                    code: EXIT_USAGE,
                    msg: e.to_string(),
                })?;
            export(&graph, &wanted, mode.into(), &out, format)
        }
        Command::Energy { dataset, out } => energy(&dataset, &out),
        Command::Check {
            trials,
            seed,
            inject_fault,
            out,
        } => check(trials, seed, inject_fault, out.as_deref()),
        Command::Train(args) => train(&args),
    }
}

fn export(
    path: &Path,
    wanted: &[Quantity],
    mode: MaskMode,
    out: &Path,
    format: Format,
) -> CmdResult {
    let g = graph::read_graph(path).map_err(|e| input_error(path, e))?;
    let needs_features = mode == MaskMode::Full
        && wanted.iter().any(|q| {
            matches!(
                q,
                Quantity::Filter | Quantity::Mask | Quantity::EnergyLow | Quantity::EnergyHigh
            )
        });
    if needs_features && g.features().is_none() {
        return Err(Failure::input(format!(
            "{}: graph has no node features; add a #features section or pass --mode structure-only or --mode none",
            path.display()
        )));
    }
    let l = spectral::normalized_laplacian(&g);
    let dec = spectral::eig_sym(&l)?;
    let x = g.features();
    let comps = sfmask::components_from(dec, if mode == MaskMode::Full { x } else { None }, mode)?;
    let bundle = ExportBundle::from_components(&comps, Some(&l), wanted)?;
    bundle.write(out, format.into())?;
    Ok(())
}

fn load_dataset(args: &DatasetArgs) -> Result<GraphDataset, Failure> {
    let layout = match args.dataset_format {
        Some(LayoutArg::EdgeListDir) => DatasetFormat::EdgeListDir,
        Some(LayoutArg::TuBatch) => DatasetFormat::TuBatch,
        None => graph::detect_format(&args.dataset),
    };
    graph::parse_dataset(&args.dataset, layout).map_err(|e| input_error(&args.dataset, e))
}

fn energy(args: &DatasetArgs, out: &Path) -> CmdResult {
    let ds = load_dataset(args)?;
    let mut csv = String::from("graph_id,node_id,e_low,e_high\n");
    for (k, g) in ds.graphs().iter().enumerate() {
        if g.features().is_none() {
            return Err(Failure::input(format!(
                "graph {k} has no node features; energies need a node attribute file or #features sections"
            )));
        }
        let comps = sfmask::build_components(g, None, MaskMode::Full)?;
        let ep = comps.energy.expect("full mode computes energies");
        for (i, (lo, hi)) in ep.low.iter().zip(&ep.high).enumerate() {
            let _ = writeln!(
                csv,
                "{k},{i},{},{}",
                format_sig(*lo, SIGNIFICANT_DIGITS),
                format_sig(*hi, SIGNIFICANT_DIGITS)
            );
        }
    }
    write_file(out, &csv)
}

fn check(trials: u64, seed: u64, fault: Option<Fault>, out: Option<&Path>) -> CmdResult {
    let mut opts = SuiteOptions::new(seed, trials as usize);
    opts.faults = FaultInjection {
        skip_clamp: matches!(fault, Some(Fault::SkipClamp)),
        eigenvector_perturbation: matches!(fault, Some(Fault::PerturbEigenvectors)).then_some(1e-3),
    };
    let report = harness::invariant_suite(&opts)?;
    let text = report.to_string();
    print!("{text}");
    if let Some(out) = out {
        write_file(out, &text)?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        Err(Failure {
            code: EXIT_INVARIANT,
            msg: format!("{failed} invariant check(s) failed"),
        })
    }
}

fn train(a: &TrainArgs) -> CmdResult {
    let ds = match (&a.dataset, a.synthetic) {
        (Some(path), _) => load_dataset(&DatasetArgs {
            dataset: path.clone(),
            dataset_format: a.dataset_format,
        })?,
        (None, Some(kind)) => harness::gen_synthetic(
            kind.into(),
            a.graphs,
            a.min_nodes..=a.max_nodes,
            a.data_seed,
        )?,
        (None, None) => unreachable!("clap requires --dataset or --synthetic"),
    };
    let cfg = TrainConfig {
        epochs: a.epochs as usize,
        learning_rate: a.lr,
        train_fraction: a.fraction,
        seed: a.seed,
        mask_mode: a.mask_mode.into(),
    };
    if a.heads == 0 || !a.hidden.is_multiple_of(a.heads) {
        return Err(Failure {
            code: EXIT_USAGE,
            msg: format!(
                "--hidden {} is not divisible by --heads {}",
                a.hidden, a.heads
            ),
        });
    }
    let mcfg = ModelConfig::new(
        ds.feature_dim().unwrap_or(1),
        a.hidden,
        a.layers,
        a.heads,
        ds.num_classes().max(1),
    )
    .with_seed(a.seed);
    let report = harness::train(&ds, &cfg, &mcfg)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_file(&a.out, &json)?;
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "graphs_used={} final_loss={:.6} train_accuracy={} val_accuracy={} test_accuracy={}",
        report.train_graphs_used,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        show(report.train_accuracy),
        show(report.val_accuracy),
        show(report.test_accuracy),
    );
    Ok(())
}

fn write_file(path: &Path, body: &str) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| Failure::input(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, body).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}
