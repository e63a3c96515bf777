use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use inftda_core::baselines::BaselineError;
use inftda_core::dp::{DpError, PrivacyBudget, PrivacyType, SensitivityModel};
use inftda_core::eval::{self, EvalError, ExperimentSpec, Mechanism, RunParams};
use inftda_core::io::{self as dio, Dataset, IoError};
use inftda_core::release::{self, export_tree, ExportLevel, OrderStrategy, ReleaseConfig, ReleaseError};
use inftda_core::synth::{self, PartitionKind, Sparsity, SynthError, SynthSpec};
use inftda_core::tree::TreeMode;

#[derive(Parser)]
#[command(name = "inftda", version, about = "Private release of hierarchical origin/destination data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse hierarchy and trip CSVs into a binary dataset.
    Ingest {
        #[arg(long = "hierarchy-o")]
        hierarchy_o: PathBuf,
        #[arg(long = "hierarchy-d")]
        hierarchy_d: PathBuf,
        #[arg(long)]
        trips: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset (CSV files plus data.bin) into a directory.
    Synth {
        #[arg(long, value_enum, default_value_t = Kind::Binary)]
        kind: Kind,
        #[arg(long, value_enum, default_value_t = SparsityArg::Complete)]
        sparsity: SparsityArg,
        #[arg(long, default_value_t = synth::DEFAULT_EXPONENT)]
        exponent: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the number of partition levels.
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Release a dataset with one mechanism and write the leaf table.
    Release(ReleaseArgs),
    /// Compare a released leaf table with the true data, per level.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        release: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Destination)]
        mode: ModeArg,
    },
    /// Run an experiment grid described by a JSON file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct ReleaseArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "inftda")]
    mechanism: String,
    #[arg(long, conflicts_with = "rho", required_unless_present = "rho")]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    delta: f64,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_enum, default_value_t = OrderArg::Asc)]
    order: OrderArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Destination)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = PrivacyArg::Bounded)]
    privacy: PrivacyArg,
    /// Maximum trips per user.
    #[arg(long, default_value_t = 1)]
    m: u32,
    /// A user's trips may repeat the same O/D pair.
    #[arg(long)]
    non_distinct: bool,
    /// Run on a single worker.
    #[arg(long)]
    serial: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Binary,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum SparsityArg {
    Complete,
    Dense,
    Sparse,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Asc,
    Desc,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Destination,
    Origin,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrivacyArg {
    Bounded,
    Unbounded,
}

impl From<SparsityArg> for Sparsity {
    fn from(s: SparsityArg) -> Self {
        match s {
            SparsityArg::Complete => Sparsity::Complete,
            SparsityArg::Dense => Sparsity::Dense,
            SparsityArg::Sparse => Sparsity::Sparse,
        }
    }
}

impl From<OrderArg> for OrderStrategy {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Asc => OrderStrategy::Ascending,
            OrderArg::Desc => OrderStrategy::Descending,
            OrderArg::Random => OrderStrategy::Random,
        }
    }
}

impl From<ModeArg> for TreeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Destination => TreeMode::Destination,
            ModeArg::Origin => TreeMode::Origin,
        }
    }
}

const INPUT: (u8, &str) = (3, "input");
const PRIVACY: (u8, &str) = (4, "privacy");
const CONFIG: (u8, &str) = (4, "config");
const INCOMPATIBLE: (u8, &str) = (5, "incompatible");

fn dp_class(e: &DpError) -> (u8, &'static str) {
    match e {
        DpError::UnsupportedSensitivity(_) => INCOMPATIBLE,
        _ => PRIVACY,
    }
}

fn release_class(e: &ReleaseError) -> Option<(u8, &'static str)> {
    match e {
        ReleaseError::InconsistentInput { .. } => Some(INPUT),
        ReleaseError::Dp(e) => Some(dp_class(e)),
        _ => None,
    }
}

fn baseline_class(e: &BaselineError) -> Option<(u8, &'static str)> {
    match e {
        BaselineError::UniverseTooLarge { .. } => Some(INCOMPATIBLE),
        BaselineError::Dp(e) => Some(dp_class(e)),
        BaselineError::Release(e) => release_class(e),
        _ => None,
    }
}

/// Exit status and label for the failure class of an error chain.
fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        let class = if let Some(e) = cause.downcast_ref::<EvalError>() {
            match e {
                EvalError::UnknownMechanism(_) => Some(INPUT),
                EvalError::Release(e) => release_class(e),
                EvalError::Baseline(e) => baseline_class(e),
                EvalError::Dp(e) => Some(dp_class(e)),
                _ => None,
            }
        } else if let Some(e) = cause.downcast_ref::<ReleaseError>() {
            release_class(e)
        } else if let Some(e) = cause.downcast_ref::<BaselineError>() {
            baseline_class(e)
        } else if let Some(e) = cause.downcast_ref::<DpError>() {
            Some(dp_class(e))
        } else if cause.is::<SynthError>() {
            Some(CONFIG)
        } else if cause.is::<IoError>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            Some(INPUT)
        } else {
            None
        };
        if let Some(class) = class {
            return class;
        }
    }
    (1, "internal")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, label) = classify(&err);
            eprintln!("error[{label}]: {err:#}");
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            hierarchy_o,
            hierarchy_d,
            trips,
            out,
        } => ingest(&hierarchy_o, &hierarchy_d, &trips, &out),
        Command::Synth {
            kind,
            sparsity,
            exponent,
            seed,
            levels,
            out,
        } => {
            let mut spec = match kind {
                Kind::Binary => SynthSpec::binary(sparsity.into(), seed),
                Kind::Random => SynthSpec::random(sparsity.into(), seed),
            }
            .with_exponent(exponent);
            if let Some(levels) = levels {
                spec = spec.with_levels(levels);
            }
            synthesize(&spec, &out)
        }
        Command::Release(args) => release_cmd(&args),
        Command::Evaluate {
            truth,
            release,
            out,
            mode,
        } => evaluate(&truth, &release, &out, mode.into()),
        Command::Sweep { config } => sweep(&config),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn ingest(h_o: &Path, h_d: &Path, trips: &Path, out: &Path) -> Result<()> {
    let origin = dio::read_hierarchy(open(h_o)?).with_context(|| format!("reading {}", h_o.display()))?;
    let destination =
        dio::read_hierarchy(open(h_d)?).with_context(|| format!("reading {}", h_d.display()))?;
    if origin.levels() != destination.levels() {
        bail!(IoError::Tree(inftda_core::tree::TreeError::LevelMismatch {
            origin: origin.levels(),
            destination: destination.levels(),
        }));
    }
    let table = dio::read_trips(open(trips)?, &origin, &destination)
        .with_context(|| format!("reading {}", trips.display()))?;
    let ds = Dataset::new(origin, destination, table);
    ds.save(out)?;
    eprintln!(
        "ingested {} trips over {} O/D pairs",
        ds.trips.total(),
        ds.trips.support_size()
    );
    Ok(())
}

fn synthesize(spec: &SynthSpec, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let (origin, destination, trips) = synth::generate(spec)?;
    dio::write_hierarchy(&origin, create(&dir.join("hierarchy_o.csv"))?)?;
    dio::write_hierarchy(&destination, create(&dir.join("hierarchy_d.csv"))?)?;
    dio::write_trips(&trips, &origin, &destination, create(&dir.join("trips.csv"))?)?;
    let ds = Dataset::new(origin, destination, trips);
    ds.save(&dir.join("data.bin"))?;
    eprintln!(
        "generated {} trips over {} O/D pairs ({} x {} leaves)",
        ds.trips.total(),
        ds.trips.support_size(),
        ds.origin.leaf_count(),
        ds.destination.leaf_count()
    );
    Ok(())
}

fn release_cmd(args: &ReleaseArgs) -> Result<()> {
    let mechanism: Mechanism = args.mechanism.parse()?;
    let budget = match (args.epsilon, args.rho) {
        (_, Some(rho)) => PrivacyBudget::from_rho(rho, args.delta)?,
        (Some(eps), None) => PrivacyBudget::from_epsilon_delta(eps, args.delta)?,
        (None, None) => bail!("either --epsilon or --rho is required"),
    };
    let privacy = match args.privacy {
        PrivacyArg::Bounded => PrivacyType::Bounded,
        PrivacyArg::Unbounded => PrivacyType::Unbounded,
    };
    let sensitivity = SensitivityModel::new(privacy, args.m, !args.non_distinct)?;
    let ds = Dataset::load(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    let truth = ds.tree(args.mode.into())?;

    let order = match mechanism {
        Mechanism::TdaLinfRandom => OrderStrategy::Random,
        _ => args.order.into(),
    };
    let config = ReleaseConfig::new(budget, args.seed)
        .with_sensitivity(sensitivity)
        .with_order(order)
        .with_parallel(!args.serial);
    let (tree, meta) = match mechanism {
        Mechanism::Inftda | Mechanism::TdaLinfRandom | Mechanism::TdaL2 => {
            let mut r = if mechanism == Mechanism::TdaL2 {
                inftda_core::baselines::tda_l2(&truth, &config)?
            } else {
                release::release(&truth, &config)?
            };
            r.metadata.mechanism = mechanism.name().to_string();
            (r.tree, serde_json::to_value(&r.metadata)?)
        }
        Mechanism::VanillaGauss | Mechanism::Sh => {
            let params = RunParams {
                budget,
                sensitivity,
                order,
                seed: args.seed,
                parallel: !args.serial,
            };
            let out = eval::run_mechanism(mechanism, &truth, &params)?;
            let meta = serde_json::json!({
                "mechanism": mechanism.name(),
                "mode": privacy,
                "tree_mode": truth.mode(),
                "rho": budget.rho(),
                "epsilon": budget.epsilon(),
                "delta": budget.delta(),
                "sensitivity": sensitivity,
                "seed": args.seed,
                "depth": truth.depth(),
                "wall_ms": out.wall_ms,
            });
            (out.tree, meta)
        }
    };
    let rows = export_tree(&tree, ExportLevel::Leaves)?;
    dio::write_flows(&rows, create(&args.out)?)?;
    if let Some(path) = &args.meta {
        serde_json::to_writer_pretty(create(path)?, &meta)?;
    }
    eprintln!("released {} leaf rows with {}", rows.len(), mechanism);
    Ok(())
}

fn evaluate(truth: &Path, release: &Path, out: &Path, mode: TreeMode) -> Result<()> {
    let ds = Dataset::load(truth).with_context(|| format!("loading {}", truth.display()))?;
    let true_tree = ds.tree(mode)?;
    let rows = dio::read_flows(open(release)?).with_context(|| format!("reading {}", release.display()))?;
    let leaves = dio::flows_to_leaves(&rows, &ds.origin, &ds.destination, "release")?;
    let released = leaves
        .to_tree(
            true_tree.origin_hierarchy().clone(),
            true_tree.destination_hierarchy().clone(),
            mode,
        )
        .map_err(IoError::from)?;
    let metrics = eval::evaluate(&true_tree, &released)?;
    eval::write_metrics_csv(&metrics, create(out)?)?;
    Ok(())
}

/// Sweep file: datasets to run and the experiment grid applied to each.
#[derive(Deserialize)]
struct SweepConfig {
    out_dir: PathBuf,
    datasets: Vec<SweepDataset>,
    #[serde(default)]
    experiment: ExperimentSpec,
    #[serde(default)]
    mode: TreeMode,
}

#[derive(Deserialize)]
struct SweepDataset {
    name: String,
    #[serde(flatten)]
    source: DatasetSource,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DatasetSource {
    Data { data: PathBuf },
    Synth { synth: SweepSynth },
}

#[derive(Deserialize)]
struct SweepSynth {
    kind: PartitionKind,
    sparsity: Sparsity,
    #[serde(default = "default_exponent")]
    exponent: f64,
    #[serde(default)]
    seed: u64,
    levels: Option<usize>,
}

fn default_exponent() -> f64 {
    synth::DEFAULT_EXPONENT
}

impl SweepSynth {
    fn spec(&self) -> SynthSpec {
        let spec = match self.kind {
            PartitionKind::Binary => SynthSpec::binary(self.sparsity, self.seed),
            PartitionKind::Random => SynthSpec::random(self.sparsity, self.seed),
        }
        .with_exponent(self.exponent);
        match self.levels {
            Some(levels) => spec.with_levels(levels),
            None => spec,
        }
    }
}

fn sweep(config_path: &Path) -> Result<()> {
    let config: SweepConfig = serde_json::from_reader(open(config_path)?)
        .with_context(|| format!("parsing {}", config_path.display()))?;
    // relative paths resolve against the config file
    let base = config_path.parent().unwrap_or(Path::new("."));
    let out_dir = base.join(&config.out_dir);
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for entry in &config.datasets {
        let ds = match &entry.source {
            DatasetSource::Data { data } => Dataset::load(&base.join(data))
                .with_context(|| format!("loading dataset {}", entry.name))?,
            DatasetSource::Synth { synth: preset } => {
                let (o, d, t) = synth::generate(&preset.spec())?;
                Dataset::new(o, d, t)
            }
        };
        let truth = ds.tree(config.mode)?;
        let report = eval::run_experiment(&entry.name, &truth, &config.experiment)?;
        report.write_csv(create(&out_dir.join(format!("{}.csv", entry.name)))?)?;
        report.write_json(create(&out_dir.join(format!("{}.json", entry.name)))?)?;
        eprintln!("{}: {} runs", entry.name, report.runs.len());
    }
    Ok(())
}
