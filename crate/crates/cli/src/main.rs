use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mrforge::dataset::{self, AugmentationPlan, Mnist};
use mrforge::experiment::{self, ExperimentConfig, ResultsLog, SgdTrainer};
use mrforge::mr::{LabeledSample, MetamorphicRelation, MrKind, ParamDraw, ParamSpec};
use mrforge::nn::{self, TrainConfig};
use mrforge::seed;
use mrforge::stats::TestKind;
use mrforge::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(
    name = "mrforge",
    version,
    about = "Train MNIST classifiers with metamorphic-relation substitutes",
    after_help = "Exit codes: 0 success, 2 configuration error, 3 data or format error, \
                  4 runtime error (divergence, too few applicable samples)."
)]
struct Cli {
    /// Directory holding the four MNIST IDX files (optionally gzipped).
    #[arg(
        long,
        global = true,
        env = "MRFORGE_DATA_DIR",
        default_value = "data/mnist"
    )]
    data_dir: PathBuf,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the dataset and print sample counts and file checksums.
    Ingest,
    /// Draw S, apply the substitution protocol and write a manifest.
    Augment(AugmentArgs),
    /// Train one network from a manifest.
    Train(TrainArgs),
    /// Report a saved network's accuracy on the test pool.
    Evaluate(EvaluateArgs),
    /// Run baseline vs relation-trained trials and test the difference.
    Experiment(ExperimentArgs),
    /// Summarise a results log.
    Report(ReportArgs),
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    mr: MrKind,
    #[arg(long, default_value_t = 1500)]
    k: usize,
    /// Target m/(2k).
    #[arg(long)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    /// Train on S.
    Baseline,
    /// Train on S'.
    Mr,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "mr")]
    set: Which,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
}

impl TrainFlags {
    fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.lr_decay {
            cfg.lr_decay = v;
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Evaluate on a seeded subset of this size instead of the whole test pool.
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// The five published conditions.
    Paper,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// TOML file with experiment settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mr: Option<MrKind>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long, value_enum)]
    test: Option<TestArg>,
    #[command(flatten)]
    train: TrainFlags,
    /// Worker threads; trials run concurrently.
    #[arg(long)]
    workers: Option<usize>,
    /// Results log to append to.
    #[arg(long, default_value = "results/results.jsonl")]
    out: PathBuf,
    #[arg(long)]
    csv: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    Welch,
    Pooled,
    Paired,
}

impl From<TestArg> for TestKind {
    fn from(t: TestArg) -> Self {
        match t {
            TestArg::Welch => TestKind::Welch,
            TestArg::Pooled => TestKind::Pooled,
            TestArg::Paired => TestKind::Paired,
        }
    }
}

#[derive(Args)]
struct ReportArgs {
    /// Results log written by `experiment`.
    #[arg(long, default_value = "results/results.jsonl")]
    log: PathBuf,
    #[arg(long, value_enum, default_value = "welch")]
    test: TestArg,
    #[arg(long)]
    csv: bool,
}

/// Everything needed to rebuild S and S' from the pools.
#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    mr: MrKind,
    k: usize,
    m: usize,
    ratio: f64,
    seed: u64,
    params: ParamSpec,
    /// Training-pool indices of S, in order.
    s: Vec<usize>,
    /// Training-pool indices of S1.
    s1: Vec<usize>,
    /// Training-pool indices of the retained sources.
    sources: Vec<usize>,
    /// Training-pool indices of the removed-and-dropped samples.
    discarded: Vec<usize>,
    /// One draw per source, in `sources` order.
    draws: Vec<ParamDraw>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidParameter(_) | Error::Size { .. } => EXIT_CONFIG,
            Error::Format { .. }
            | Error::Range(_)
            | Error::Io { .. }
            | Error::InsufficientData(_) => EXIT_DATA,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_err(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Ingest => ingest(&cli.data_dir),
        Command::Augment(a) => augment(&cli.data_dir, a),
        Command::Train(a) => train(&cli.data_dir, a),
        Command::Evaluate(a) => evaluate(&cli.data_dir, a),
        Command::Experiment(a) => run_experiment(&cli.data_dir, a),
        Command::Report(a) => report(a),
    }
}

fn ingest(dir: &Path) -> CliResult {
    let data = Mnist::load(dir)?;
    println!("train: {}, test: {}", data.train.len(), data.test.len());
    for name in [
        dataset::TRAIN_IMAGES,
        dataset::TRAIN_LABELS,
        dataset::TEST_IMAGES,
        dataset::TEST_LABELS,
    ] {
        let path = dataset::locate(dir, name)?;
        let bytes = std::fs::read(&path).map_err(|e| {
            Failure::from(Error::Io {
                context: format!("reading {}", path.display()),
                source: e,
            })
        })?;
        println!(
            "sha256 {}  {}",
            hex::encode(Sha256::digest(&bytes)),
            path.display()
        );
    }
    Ok(())
}

fn augment(dir: &Path, a: AugmentArgs) -> CliResult {
    let data = Mnist::load(dir)?;
    let s_idx =
        dataset::training_indices(&data.train, a.k, seed::derive(a.seed, "select-train", 0))?;
    let s = data.train.gather(&s_idx);
    let plan =
        AugmentationPlan::from_ratio(a.k, a.ratio, a.mr, seed::derive(a.seed, "augment", 0))?;
    let mr = MetamorphicRelation::with_defaults(a.mr);
    let split = dataset::build_augmented_set(&s, &plan, &mr)?;
    let pool_of = |positions: &[usize]| positions.iter().map(|&p| s_idx[p]).collect::<Vec<_>>();
    let manifest = Manifest {
        mr: a.mr,
        k: a.k,
        m: plan.m,
        ratio: a.ratio,
        seed: a.seed,
        params: mr.params.clone(),
        s1: pool_of(&split.s1_positions),
        sources: pool_of(&split.source_positions),
        discarded: pool_of(&split.discarded_positions),
        draws: split.groups.iter().map(|g| g.param_draw.clone()).collect(),
        s: s_idx,
    };
    write_json(&a.out, &manifest)?;
    println!(
        "k={} m={} |S1|={} |S2|={} |S'|={} -> {}",
        a.k,
        plan.m,
        split.s1.len(),
        split.s2.len(),
        split.s_prime.len(),
        a.out.display()
    );
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(value).expect("manifest serialises");
    std::fs::write(path, text + "\n").map_err(|e| {
        Failure::from(Error::Io {
            context: format!("writing {}", path.display()),
            source: e,
        })
    })
}

fn read_manifest(path: &Path) -> CliResult<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Failure::from(Error::Io {
            context: format!("reading {}", path.display()),
            source: e,
        })
    })?;
    serde_json::from_str(&text).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("{}: not a manifest: {e}", path.display()),
    })
}

fn rebuild(data: &Mnist, m: &Manifest, which: Which) -> CliResult<Vec<LabeledSample>> {
    let n = data.train.len();
    let all = [&m.s, &m.s1, &m.sources, &m.discarded];
    if let Some(&bad) = all.iter().flat_map(|v| v.iter()).find(|&&i| i >= n) {
        return Err(config_err(format!(
            "manifest index {bad} is outside the training pool ({n})"
        )));
    }
    if m.draws.len() != m.sources.len() {
        return Err(config_err(
            "manifest has a different number of draws and sources",
        ));
    }
    Ok(match which {
        Which::Baseline => data.train.gather(&m.s),
        Which::Mr => {
            let mr = MetamorphicRelation::new(m.mr, m.params.clone())?;
            let sources = data.train.gather(&m.sources);
            let mut set = data.train.gather(&m.s1);
            let followups = sources
                .iter()
                .zip(&m.draws)
                .map(|(src, d)| mr.followup_with(src, d.clone()).map(|g| g.followup))
                .collect::<mrforge::Result<Vec<_>>>()?;
            set.extend(sources);
            set.extend(followups);
            set
        }
    })
}

fn train(dir: &Path, a: TrainArgs) -> CliResult {
    let data = Mnist::load(dir)?;
    let manifest = read_manifest(&a.manifest)?;
    let set = rebuild(&data, &manifest, a.set)?;
    let mut cfg = TrainConfig {
        seed: seed::derive(manifest.seed, "train", 0),
        ..TrainConfig::default()
    };
    a.train.apply(&mut cfg);
    let init = nn::init_params::<f32>(seed::derive(manifest.seed, "init", 0));
    let trained = nn::train(init, &set, &cfg)?;
    nn::io::save(&trained.params, &a.out)?;
    println!(
        "trained on {} samples for {} epochs, final loss {:.4} -> {}",
        set.len(),
        cfg.epochs,
        trained.epoch_losses.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

fn evaluate(dir: &Path, a: EvaluateArgs) -> CliResult {
    let params = nn::io::load(&a.model)?;
    let data = Mnist::load(dir)?;
    let test = match a.test_size {
        Some(n) => dataset::select_test_set(&data.test, n, a.seed)?,
        None => data.test.samples.clone(),
    };
    println!(
        "accuracy: {:.4} ({} samples)",
        nn::accuracy(&params, &test)?,
        test.len()
    );
    Ok(())
}

fn experiment_template(a: &ExperimentArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_err(format!("reading {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = a.mr {
        cfg.mr = v;
    }
    if let Some(v) = a.k {
        cfg.k = v;
    }
    if let Some(v) = a.ratio {
        cfg.ratio = v;
    }
    if let Some(v) = a.trials {
        cfg.trials = v;
    }
    if let Some(v) = a.seed {
        cfg.base_seed = v;
    }
    if let Some(v) = a.test_size {
        cfg.test_size = v;
    }
    if let Some(v) = a.test {
        cfg.test_kind = v.into();
    }
    a.train.apply(&mut cfg.train);
    Ok(cfg)
}

fn run_experiment(dir: &Path, a: ExperimentArgs) -> CliResult {
    let template = experiment_template(&a)?;
    let configs = match a.preset {
        Some(Preset::Paper) => {
            if a.mr.is_some() || a.k.is_some() || a.ratio.is_some() {
                return Err(config_err("--preset fixes --mr, --k and --ratio"));
            }
            experiment::paper_preset(&template)
        }
        None => vec![template],
    };
    for cfg in &configs {
        cfg.validate()?;
        if cfg.trials < 5 {
            log::warn!(
                "{}: only {} trials; the t-test will have little power",
                cfg.label(),
                cfg.trials
            );
        }
    }
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let data = Mnist::load(dir)?;
    let log = ResultsLog::new(&a.out);
    let mut first_error = None;
    for cfg in &configs {
        eprintln!("running {} ({} trials)", cfg.label(), cfg.trials);
        match experiment::run_experiment(cfg, &data, &SgdTrainer, Some(&log), workers) {
            Ok(out) => eprintln!(
                "{}: t = {:.3}, dof = {:.2}, p = {:.4}",
                cfg.label(),
                out.test.t_stat,
                out.test.dof,
                out.test.p_value
            ),
            Err(e) => {
                eprintln!("{}: failed: {e}", cfg.label());
                first_error.get_or_insert(e);
            }
        }
    }
    let kind = configs[0].test_kind;
    print_report(&experiment::report(&a.out, kind)?, a.csv);
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn print_report(rows: &[experiment::ReportRow], csv: bool) {
    if csv {
        print!("{}", experiment::render_csv(rows));
    } else {
        print!("{}", experiment::render_table(rows));
    }
}

fn report(a: ReportArgs) -> CliResult {
    print_report(&experiment::report(&a.log, a.test.into())?, a.csv);
    Ok(())
}
