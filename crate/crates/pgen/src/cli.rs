//! Command-line entry point: train, generate, analyze, gradcheck.
//!
//! Exit codes: 0 success, 1 runtime error (message on stderr), 2 usage
//! error. Every run prints its effective configuration, so any result is
//! reproducible from the log line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    compare_frequencies, emit_frequency_table, emit_learning_curve, word_frequencies,
    LearningCurve,
};
use crate::corpus::{CorpusText, Normalization, PatternDataset, Vocabulary, WindowConfig};
use crate::error::{Error, Result};
use crate::generator::{generate, GenerationRequest, SamplingMode};
use crate::network::{CellKind, NetworkConfig, NetworkParams, Preset};
use crate::numerics::child_seed;
use crate::trainer::{
    gradient_check, train_epoch, Checkpoint, TrainConfig, TrainerState,
};

#[derive(Parser)]
#[command(
    name = "pgen",
    about = "Character-level recurrent text generation for Persian poetry",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on one or more corpora (several corpora are merged
    /// into one blended-style corpus before training)
    Train(TrainArgs),
    /// Generate text from a trained checkpoint
    Generate(GenerateArgs),
    /// Compare word frequencies of a real and a generated text
    Analyze(AnalyzeArgs),
    /// Verify analytic gradients against finite differences on a tiny model
    Gradcheck(GradcheckArgs),
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_cell(s: &str) -> std::result::Result<CellKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus file (repeat to merge several corpora in flag order)
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    /// Pattern window length in characters
    #[arg(long, default_value_t = 20)]
    window: usize,
    #[arg(long, value_parser = parse_preset, default_value = "deep")]
    preset: Preset,
    /// Recurrent cell (defaults to gru for deep, lstm for baseline)
    #[arg(long, value_parser = parse_cell)]
    cell: Option<CellKind>,
    /// Recurrent layer width (applies to both layers of the deep preset)
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value_t = 0.2)]
    dropout: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Global gradient-norm clip threshold
    #[arg(long, default_value_t = 5.0)]
    clip: f64,
    /// Fixes all stochasticity: init, shuffling, dropout
    #[arg(long, default_value_t = 42)]
    seed_rng: u64,
    /// Checkpoint output path
    #[arg(long)]
    out: PathBuf,
    /// Write the learning curve as CSV
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Also save the checkpoint every N epochs (0 = only at the end)
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
}

#[derive(Args)]
struct GenerateArgs {
    /// Checkpoint produced by `pgen train`
    #[arg(long)]
    model: PathBuf,
    /// Seed text given directly on the command line
    #[arg(long, conflicts_with = "seed_file", required_unless_present = "seed_file")]
    seed_text: Option<String>,
    /// Seed text read from a UTF-8 file
    #[arg(long)]
    seed_file: Option<PathBuf>,
    /// Exact number of characters to generate
    #[arg(long, default_value_t = 200)]
    limit: usize,
    /// greedy | temp
    #[arg(long, default_value = "temp")]
    mode: String,
    #[arg(long, default_value_t = 0.8)]
    temperature: f64,
    #[arg(long, default_value_t = 42)]
    seed_rng: u64,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// The real (training) text
    #[arg(long)]
    real: PathBuf,
    /// The generated text
    #[arg(long)]
    generated: PathBuf,
    /// How many top tokens each side contributes
    #[arg(long, default_value_t = 50)]
    top_k: usize,
    /// Write `<prefix>.real.tsv` and `<prefix>.generated.tsv`
    #[arg(long)]
    out_prefix: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_parser = parse_preset, default_value = "deep")]
    preset: Preset,
    /// Recurrent cell (defaults to gru for deep, lstm for baseline)
    #[arg(long, value_parser = parse_cell)]
    cell: Option<CellKind>,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
}

/// Runs the CLI on the given argument list and returns the process exit
/// code. Split from `main` so tests can drive it in-process.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return err.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Train(args) => train(args),
        Command::Generate(args) => generate_cmd(args),
        Command::Analyze(args) => analyze(args),
        Command::Gradcheck(args) => gradcheck(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}

fn default_cell(preset: Preset) -> CellKind {
    match preset {
        Preset::Baseline => CellKind::Lstm,
        Preset::Deep => CellKind::Gru,
    }
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",")
}

fn train(args: TrainArgs) -> Result<i32> {
    let cell = args.cell.unwrap_or_else(|| default_cell(args.preset));
    println!(
        "config: train corpus={} epochs={} window={} preset={} cell={} hidden={} dropout={} \
         batch={} lr={} clip={} seed-rng={} out={} curve={} checkpoint-every={} normalization=on",
        display_paths(&args.corpus),
        args.epochs,
        args.window,
        args.preset,
        cell,
        args.hidden,
        args.dropout,
        args.batch,
        args.lr,
        args.clip,
        args.seed_rng,
        args.out.display(),
        args.curve.as_ref().map_or("-".to_string(), |p| p.display().to_string()),
        args.checkpoint_every,
    );

    // Load corpora and merge them in flag order before building the
    // vocabulary, so the checkpoint records the union vocabulary.
    let mut corpora = args.corpus.iter();
    let first = corpora.next().ok_or_else(|| {
        Error::InvalidArgument("at least one --corpus is required".into())
    })?;
    let mut text = CorpusText::load(first, Normalization::On)?;
    for path in corpora {
        let next = CorpusText::load(path, Normalization::On)?;
        text = text.merge(&next);
    }
    let vocab = Vocabulary::build(&text);
    let window_cfg = WindowConfig::new(args.window)?;
    let dataset = PatternDataset::extract(&text, &vocab, &window_cfg)?;
    println!(
        "corpus: {} characters, vocabulary {}, {} windows of {}",
        text.len(),
        vocab.size(),
        dataset.len(),
        args.window
    );

    let config = match args.preset {
        Preset::Baseline => NetworkConfig::baseline(vocab.size(), args.window),
        Preset::Deep => NetworkConfig::deep(vocab.size(), args.window),
    }
    .with_cell(cell)
    .with_hidden(args.hidden)
    .with_dropout(args.dropout);
    config.validate()?;

    let train_cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        clip_norm: args.clip,
        shuffle_seed: child_seed(args.seed_rng, 2),
        checkpoint_every: args.checkpoint_every,
        ..TrainConfig::default()
    };
    train_cfg.validate()?;

    let mut init_rng = crate::numerics::Rng::new(child_seed(args.seed_rng, 0));
    let mut params = NetworkParams::init(&config, &mut init_rng)?;
    let mut state = TrainerState::new(&params, child_seed(args.seed_rng, 1));
    let mut curve = LearningCurve::new();

    for _ in 0..train_cfg.epochs {
        let report = train_epoch(&dataset, &mut params, &config, &train_cfg, &mut state)?;
        println!(
            "epoch {} loss={:.6} acc={:.6} ({:.1}s)",
            report.epoch_index, report.mean_loss, report.accuracy, report.wall_seconds
        );
        let epoch = report.epoch_index;
        curve.push(report)?;
        if train_cfg.checkpoint_every > 0 && epoch as usize % train_cfg.checkpoint_every == 0 {
            save_checkpoint(&config, &vocab, &params, &state, &args.out)?;
        }
    }
    save_checkpoint(&config, &vocab, &params, &state, &args.out)?;
    println!("saved {}", args.out.display());
    if let Some(curve_path) = &args.curve {
        emit_learning_curve(&curve, curve_path)?;
        println!("wrote {}", curve_path.display());
    }
    Ok(0)
}

fn save_checkpoint(
    config: &NetworkConfig,
    vocab: &Vocabulary,
    params: &NetworkParams,
    state: &TrainerState,
    path: &Path,
) -> Result<()> {
    Checkpoint {
        config: config.clone(),
        vocab: vocab.clone(),
        params: params.clone(),
        adam: state.adam.clone(),
        epoch_index: state.epoch_index,
        rng: state.rng.clone(),
    }
    .save(path)
}

fn generate_cmd(args: GenerateArgs) -> Result<i32> {
    let mode = match args.mode.as_str() {
        "greedy" => SamplingMode::Greedy,
        "temp" => SamplingMode::Temperature(args.temperature),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown mode {other:?} (expected greedy or temp)"
            )))
        }
    };
    let seed_text = match (&args.seed_text, &args.seed_file) {
        (Some(text), None) => text.clone(),
        (None, Some(path)) => {
            std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?
        }
        _ => {
            return Err(Error::InvalidArgument(
                "exactly one of --seed-text or --seed-file is required".into(),
            ))
        }
    };
    // The seed goes through the same normalization as training corpora so
    // it matches the checkpoint vocabulary.
    let seed_text = CorpusText::from_text(&seed_text, "seed", Normalization::On)?.to_string();
    println!(
        "config: generate model={} seed-chars={} limit={} mode={} temperature={} seed-rng={} out={}",
        args.model.display(),
        seed_text.chars().count(),
        args.limit,
        args.mode,
        args.temperature,
        args.seed_rng,
        args.out.as_ref().map_or("-".to_string(), |p| p.display().to_string()),
    );

    let checkpoint = Checkpoint::load(&args.model)?;
    let request = GenerationRequest {
        seed_text,
        limit: args.limit,
        mode,
        rng_seed: args.seed_rng,
    };
    let result = generate(&checkpoint.params, &checkpoint.config, &checkpoint.vocab, &request)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, result.text.as_bytes()).map_err(|e| Error::io(path, e))?;
            println!("wrote {} characters to {}", result.text.chars().count(), path.display());
        }
        None => {
            println!("{}", result.text);
        }
    }
    Ok(0)
}

fn analyze(args: AnalyzeArgs) -> Result<i32> {
    println!(
        "config: analyze real={} generated={} top-k={} out-prefix={}",
        args.real.display(),
        args.generated.display(),
        args.top_k,
        args.out_prefix.as_ref().map_or("-".to_string(), |p| p.display().to_string()),
    );
    let real_text =
        std::fs::read_to_string(&args.real).map_err(|e| Error::io(&args.real, e))?;
    let generated_text = std::fs::read_to_string(&args.generated)
        .map_err(|e| Error::io(&args.generated, e))?;
    let real = word_frequencies(&real_text);
    let generated = word_frequencies(&generated_text);
    let report = compare_frequencies(&real, &generated, args.top_k)?;
    println!(
        "tokens: real {} distinct / {} total, generated {} distinct / {} total",
        real.len(),
        real.total(),
        generated.len(),
        generated.total()
    );
    println!(
        "similarity: cosine={:.6} shared-tokens={} top-k={}",
        report.cosine, report.shared_tokens, report.top_k
    );
    if let Some(prefix) = &args.out_prefix {
        let mut real_path = prefix.as_os_str().to_owned();
        real_path.push(".real.tsv");
        let mut generated_path = prefix.as_os_str().to_owned();
        generated_path.push(".generated.tsv");
        let real_path = PathBuf::from(real_path);
        let generated_path = PathBuf::from(generated_path);
        emit_frequency_table(&real, args.top_k, &real_path)?;
        emit_frequency_table(&generated, args.top_k, &generated_path)?;
        println!("wrote {} and {}", real_path.display(), generated_path.display());
    }
    Ok(0)
}

fn gradcheck(args: GradcheckArgs) -> Result<i32> {
    let cell = args.cell.unwrap_or_else(|| default_cell(args.preset));
    println!(
        "config: gradcheck preset={} cell={} epsilon={}",
        args.preset, cell, args.epsilon
    );
    // Tiny model: V=5, L=3, H=4, no dropout.
    let mut config = match args.preset {
        Preset::Baseline => NetworkConfig::baseline(5, 3),
        Preset::Deep => NetworkConfig::deep(5, 3),
    }
    .with_cell(cell)
    .with_hidden(4)
    .with_dropout(0.0);
    if args.preset == Preset::Deep {
        config.dense1 = 6;
        config.dense2 = 4;
    }
    let threshold = 1e-4;
    let mut worst: f64 = 0.0;
    for seed in [1u64, 22, 333] {
        let params = NetworkParams::init(&config, &mut crate::numerics::Rng::new(seed))?;
        let report = gradient_check(&params, &config, &[0, 2, 4], 1, args.epsilon)?;
        for tensor in &report.tensors {
            println!(
                "seed {seed} {name}: max rel error {err:.3e}",
                name = tensor.name,
                err = tensor.max_rel_error
            );
        }
        worst = worst.max(report.max_rel_error);
    }
    if worst < threshold {
        println!("gradcheck PASS: max rel error {worst:.3e} < {threshold:e}");
        Ok(0)
    } else {
        eprintln!("gradcheck FAIL: max rel error {worst:.3e} >= {threshold:e}");
        Ok(1)
    }
}
