use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use patchsel::corpus::{generate_corpus, CorpusConfig, CorpusManifest, Split};
use patchsel::eval::{evaluate, export_maps, patch_histogram, EvalOptions, Restorer};
use patchsel::mosaic::BayerPattern;
use patchsel::training::{train_loop, Checkpoint, TrainData, TrainRun, Trainer};
use patchsel::Error;

#[derive(Parser)]
#[command(
    name = "patchsel",
    version,
    about = "Patch-selective training for joint denoising and demosaicing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic easy/hard image corpus.
    GenCorpus(GenCorpusArgs),
    /// Train from a run configuration file.
    Train(TrainArgs),
    /// PSNR report of a checkpoint or the bilinear baseline.
    Eval(EvalArgs),
    /// Per-patch PSNR histogram.
    Hist(HistArgs),
    /// Export trainability maps of a checkpoint with a PatchNet.
    Maps(MapsArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    n_train: usize,
    #[arg(long, default_value_t = 40)]
    n_val: usize,
    #[arg(long, default_value_t = 40)]
    n_test: usize,
    #[arg(long, default_value_t = 0.2)]
    hard_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// `key = value` run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Corpus root; repeat to train on several, matched with `oversample`.
    /// Validation uses the first corpus.
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from a checkpoint. With a config differing from the one
    /// stored, the weights seed a fresh run (fine-tuning).
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    ckpt: Option<PathBuf>,
    /// Evaluate a non-learned baseline instead of a checkpoint.
    #[arg(long, value_parser = ["bilinear"])]
    baseline: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    corpus: PathBuf,
    /// Comma-separated noise levels in 8-bit units.
    #[arg(long, value_delimiter = ',', default_value = "5,10,15")]
    sigmas: Vec<f64>,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "rggb")]
    pattern: String,
}

#[derive(Args)]
struct HistArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Noise level in 8-bit units.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// A split name, or `all`.
    #[arg(long, default_value = "all")]
    split: String,
    #[arg(long, default_value_t = 64)]
    patch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MapsArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "val")]
    split: String,
    #[arg(long, default_value_t = 10.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Usage(_)) { 1 } else { 2 })
        }
    }
}

fn run(cmd: Command) -> patchsel::Result<()> {
    match cmd {
        Command::GenCorpus(a) => {
            let cfg = CorpusConfig {
                n_train: a.n_train,
                n_val: a.n_val,
                n_test: a.n_test,
                hard_fraction: a.hard_frac,
                height: a.height,
                width: a.width,
                seed: a.seed,
            };
            let m = generate_corpus(&a.out, &cfg)?;
            println!("wrote {} images to {}", m.len(), a.out.display());
        }
        Command::Train(a) => {
            let text = std::fs::read_to_string(&a.config).map_err(|e| Error::Io {
                path: a.config.clone(),
                source: e,
            })?;
            let run = TrainRun::parse(&text)?;
            let manifests = a
                .corpus
                .iter()
                .map(|c| CorpusManifest::load(c).map(|m| m.split(Split::Train)))
                .collect::<patchsel::Result<Vec<_>>>()?;
            let val = CorpusManifest::load(&a.corpus[0])?.split(Split::Val);
            let data = TrainData::load(&manifests, &val)?;
            let mut trainer = match &a.resume {
                Some(path) => {
                    let ckpt = Checkpoint::load(path)?;
                    let same = TrainRun::parse(&ckpt.config)? == run;
                    Trainer::from_checkpoint(&ckpt, if same { None } else { Some(run) })?
                }
                None => Trainer::new(run)?,
            };
            let log = train_loop(&mut trainer, &data, &a.out)?;
            for m in &log {
                println!("{}", m.to_line());
            }
        }
        Command::Eval(a) => {
            let (restorer, id) = load_model(&a.model)?;
            let manifest = load_split(&a.corpus, &a.split)?;
            let opts = EvalOptions {
                pattern: BayerPattern::parse(&a.pattern)?,
                seed: a.seed,
                ..Default::default()
            };
            let mut report = evaluate(&restorer, &id, &manifest, &a.sigmas, &opts)?;
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            report.timestamp = Some(format!("{secs}"));
            print!("{}", report.to_tsv());
        }
        Command::Hist(a) => {
            let (restorer, _) = load_model(&a.model)?;
            let manifest = load_split(&a.corpus, &a.split)?;
            let opts = EvalOptions {
                seed: a.seed,
                patch_size: a.patch_size,
                ..Default::default()
            };
            print!(
                "{}",
                patch_histogram(&restorer, &manifest, a.bins, a.sigma, &opts)?.to_tsv()
            );
        }
        Command::Maps(a) => {
            let ckpt = Checkpoint::load(&a.ckpt)?;
            let manifest = load_split(&a.corpus, &a.split)?;
            let opts = EvalOptions {
                seed: a.seed,
                ..Default::default()
            };
            let exports = export_maps(&ckpt, &manifest, &a.out, a.sigma, &opts)?;
            println!("wrote {} maps to {}", exports.len(), a.out.display());
        }
    }
    Ok(())
}

fn load_model(m: &ModelArgs) -> patchsel::Result<(Restorer, String)> {
    match &m.ckpt {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let ckpt = Checkpoint::from_bytes(&bytes)?;
            Ok((Restorer::from_checkpoint(&ckpt)?, Checkpoint::fingerprint(&bytes)))
        }
        None => Ok((Restorer::Bilinear, "bilinear".to_string())),
    }
}

fn load_split(root: &Path, split: &str) -> patchsel::Result<CorpusManifest> {
    let m = CorpusManifest::load(root)?;
    if split == "all" {
        return Ok(m);
    }
    let split: Split = split
        .parse()
        .map_err(|_| Error::Usage(format!("unknown split {split:?}")))?;
    let m = m.split(split);
    if m.is_empty() {
        return Err(Error::Usage("selected split is empty".into()));
    }
    Ok(m)
}
