use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use zs_apa::backend::{AcousticBackend, OnnxBackend};
use zs_apa::eval::{self, EvalConfig, SweepParam};
use zs_apa::masking::{MaskStrategy, RandomMasking, RegularMasking, SpanBudget};
use zs_apa::{load_audio, score, Error, MockBackend, Result, ScoreConfig};

/// Zero-shot pronunciation scoring by masked token recovery.
#[derive(Parser)]
#[command(name = "zs-apa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one WAV file and print the report as JSON.
    Score(ScoreArgs),
    /// Score a manifest and correlate with human ratings.
    Evaluate(EvaluateArgs),
    /// Evaluate once per value of one hyperparameter and emit CSV.
    Sweep(SweepArgs),
    /// Build a manifest from the speechocean762 score file and audio tree.
    ConvertManifest(ConvertArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ModelArgs {
    /// Model bundle directory.
    #[arg(long, value_name = "DIR")]
    model: Option<PathBuf>,
    /// Use the built-in signal-statistics backend instead of a bundle.
    #[arg(long)]
    mock: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Random,
    Regular,
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long, value_enum, default_value_t = Strategy::Random)]
    strategy: Strategy,
    /// Fraction of frames masked per repetition, in (0, 1].
    #[arg(long, default_value_t = 0.2)]
    mask_prob: f64,
    /// Span length in frames.
    #[arg(long, default_value_t = 5)]
    mask_len: usize,
    /// Repetitions for random masking.
    #[arg(long, default_value_t = 50)]
    reps: usize,
    /// Slices (and repetitions) for regular masking.
    #[arg(long, default_value_t = 20)]
    slices: usize,
    /// Transformer layer (1-based) whose features are tokenized.
    #[arg(long, default_value_t = zs_apa::scoring::DEFAULT_LAYER)]
    layer: usize,
    /// Divide aMRT by the mean number of masked frames.
    #[arg(long)]
    normalize: bool,
    /// Read the mask probability as the fraction of span starts.
    #[arg(long)]
    literal_start_fraction: bool,
}

impl MaskArgs {
    fn config(&self, seed: u64) -> Result<ScoreConfig> {
        if !(self.mask_prob > 0.0 && self.mask_prob <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "--mask-prob must be in (0, 1], got {}",
                self.mask_prob
            )));
        }
        let strategy = match self.strategy {
            Strategy::Random => MaskStrategy::Random(RandomMasking {
                mask_percent: self.mask_prob * 100.0,
                span_len: self.mask_len,
                repetitions: self.reps,
                budget: if self.literal_start_fraction {
                    SpanBudget::StartFraction
                } else {
                    SpanBudget::TotalFraction
                },
            }),
            Strategy::Regular => MaskStrategy::Regular(RegularMasking {
                slices: self.slices,
            }),
        };
        strategy.validate()?;
        Ok(ScoreConfig {
            strategy,
            layer: self.layer,
            seed,
            normalize: self.normalize,
        })
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long, value_name = "FILE")]
    wav: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    mask: MaskArgs,
    #[arg(long, default_value_t = zs_apa::scoring::DEFAULT_SEEDS[0])]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    /// JSON-lines manifest.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    mask: MaskArgs,
    #[arg(long, value_delimiter = ',', default_value = "13,21,100")]
    seeds: Vec<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "ZS_APA_WORKERS", default_value_t = 0)]
    workers: usize,
    /// Skip manifest entries whose audio is missing.
    #[arg(long)]
    skip_missing: bool,
}

impl RunArgs {
    fn eval_config(&self) -> Result<EvalConfig> {
        Ok(EvalConfig {
            scoring: self.mask.config(self.seeds.first().copied().unwrap_or_default())?,
            seeds: self.seeds.clone(),
            workers: self.workers,
            skip_missing: self.skip_missing,
        })
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Where to write the result JSON.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// mask-prob, mask-len, layer or slices.
    #[arg(long, value_parser = parse_param)]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    values: Vec<f64>,
    /// CSV destination; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn parse_param(s: &str) -> std::result::Result<SweepParam, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct ConvertArgs {
    /// The dataset's scores.json.
    #[arg(long, value_name = "FILE")]
    scores: PathBuf,
    /// Directory searched recursively for <utt_id>.wav.
    #[arg(long, value_name = "DIR")]
    wav_dir: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn open_backend(args: &ModelArgs) -> Result<Box<dyn AcousticBackend>> {
    match &args.model {
        Some(dir) if !args.mock => Ok(Box::new(OnnxBackend::open(dir)?)),
        _ => Ok(Box::new(MockBackend::new())),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::File::create(path)?.write_all(bytes)?;
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let config = args.mask.config(args.seed)?;
    let mut backend = open_backend(&args.model)?;
    let clip = load_audio(&args.wav)?;
    let report = score(&mut backend, &clip, &config)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let config = args.run.eval_config()?;
    let backend = open_backend(&args.run.model)?;
    let entries = eval::read_manifest(&args.run.manifest)?;
    let result = eval::evaluate(&entries, backend.as_ref(), &config)?;
    for id in &result.skipped {
        eprintln!("skipped {id}: audio missing");
    }
    let mut json = serde_json::to_vec_pretty(&result)?;
    json.push(b'\n');
    write_file(&args.out, &json)?;
    println!("{:.4} ± {:.4}", result.pcc_mean, result.pcc_std);
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let config = args.run.eval_config()?;
    let backend = open_backend(&args.run.model)?;
    let entries = eval::read_manifest(&args.run.manifest)?;
    let rows = eval::sweep(&entries, backend.as_ref(), &config, args.param, &args.values)?;
    let mut csv = Vec::new();
    eval::write_sweep_csv(&mut csv, &rows)?;
    match &args.out {
        Some(path) => write_file(path, &csv)?,
        None => std::io::stdout().write_all(&csv)?,
    }
    Ok(())
}

fn cmd_convert(args: ConvertArgs) -> Result<()> {
    let conversion = eval::convert_speechocean(&args.scores, &args.wav_dir)?;
    if !conversion.missing.is_empty() {
        eprintln!(
            "no audio for {} utterances: {}",
            conversion.missing.len(),
            conversion.missing.join(", ")
        );
    }
    eval::write_manifest(&args.out, &conversion.entries)?;
    println!("{}", conversion.entries.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Score(args) => cmd_score(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::ConvertManifest(args) => cmd_convert(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
