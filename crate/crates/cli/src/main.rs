use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use entgen::models::Variant;
use entgen::par::Execution;
use entgen::Error;

mod commands;
mod settings;

use settings::Settings;

#[derive(Parser)]
#[command(name = "entgen", version, about = "Entailment generation from premises and images")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run batch work on one thread (outputs are identical either way).
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split triples by premise/image group and build the vocabulary.
    Prepare(PrepareArgs),
    /// Train a model on a prepared data directory.
    Train(TrainArgs),
    /// Decode hypotheses for one split.
    Generate(GenerateArgs),
    /// Score generations: BLEU-1, METEOR, CIDEr and perplexity per run.
    Evaluate(EvaluateArgs),
    /// Premise/reference overlap buckets against per-instance CIDEr.
    Analyze(AnalyzeArgs),
    /// Latin-square assignment for a human evaluation.
    Design(DesignArgs),
    /// Tally human judgements per condition.
    Tally(TallyArgs),
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    triples: PathBuf,
    /// Feature file used to check that every image id resolves.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_freq: Option<u64>,
    /// Split fractions as TRAIN,DEV,TEST.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    fractions: Option<Vec<f64>>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory written by `prepare`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long, conflicts_with = "greedy")]
    beam: Option<usize>,
    #[arg(long)]
    greedy: bool,
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Defaults to RUN/generations.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    decode: DecodeArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Run directories; each becomes one report row.
    #[arg(long, required = true)]
    run: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Score each reference slot separately and average.
    #[arg(long)]
    single_ref: bool,
    /// Defaults to evaluation.tsv in the first run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    dice_threshold: Option<f64>,
    /// Directory for the report and plot data; defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    /// One item id per line.
    #[arg(long, conflicts_with = "num_items")]
    items: Option<PathBuf>,
    /// Generate ids item000, item001, ...
    #[arg(long)]
    num_items: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    conditions: Option<Vec<String>>,
    #[arg(long)]
    participants: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TallyArgs {
    #[arg(long)]
    responses: PathBuf,
    /// Design export to validate the responses against.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Design(_) => 2,
        Error::Data(_) | Error::Format { .. } | Error::Validation(_) | Error::Io(_) => 3,
        _ => 4,
    }
}

fn apply_decode(s: &mut Settings, a: &DecodeArgs) {
    if a.greedy {
        s.decode.beam = 0;
    }
    if let Some(k) = a.beam {
        s.decode.beam = k;
    }
    if let Some(n) = a.max_len {
        s.decode.max_len = n;
    }
    // a width-1 beam is greedy search; one spelling keeps the config hash stable
    if s.decode.beam == 1 {
        s.decode.beam = 0;
    }
}

fn run(cli: Cli) -> entgen::Result<()> {
    let mut s = Settings::load(cli.config.as_deref())?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Prepare(a) => {
            if let Some(v) = a.seed {
                s.data.split_seed = v;
            }
            if let Some(v) = a.min_freq {
                s.data.min_freq = v;
            }
            if let Some(f) = a.fractions {
                (s.data.train_fraction, s.data.dev_fraction, s.data.test_fraction) = (f[0], f[1], f[2]);
            }
            commands::prepare(&s, &a.triples, a.features.as_deref(), &a.out)
        }
        Command::Train(a) => {
            if let Some(v) = a.variant {
                s.model.variant = v;
            }
            if let Some(v) = a.seed {
                s.train.seed = v;
            }
            if let Some(v) = a.epochs {
                s.train.epochs = v;
            }
            if let Some(v) = a.batch {
                s.train.batch_size = v;
            }
            if let Some(v) = a.lr {
                s.train.lr = v;
            }
            commands::train(&s, &a.data, a.features.as_deref(), &a.out, exec)
        }
        Command::Generate(a) => {
            apply_decode(&mut s, &a.decode);
            let out = a.out.unwrap_or_else(|| a.run.join(commands::GENERATIONS));
            commands::generate(&s, &a.run, &a.data, a.features.as_deref(), &a.split, &out, exec)
        }
        Command::Evaluate(a) => {
            s.eval.single_ref |= a.single_ref;
            let out = a.out.unwrap_or_else(|| a.run[0].join("evaluation.tsv"));
            commands::evaluate(&s, &a.run, &a.data, a.features.as_deref(), &a.split, &out, exec)
        }
        Command::Analyze(a) => {
            if let Some(v) = a.dice_threshold {
                s.eval.dice_threshold = v;
            }
            let out = a.out.unwrap_or_else(|| a.run.clone());
            commands::analyze(&s, &a.run, &a.data, &a.split, &out, exec)
        }
        Command::Design(a) => {
            if let Some(v) = a.conditions {
                s.design.conditions = v;
            }
            if let Some(v) = a.participants {
                s.design.participants = v;
            }
            if let Some(v) = a.seed {
                s.design.seed = v;
            }
            commands::design(&s, a.items.as_deref(), a.num_items, &a.out)
        }
        Command::Tally(a) => commands::tally(&s, &a.responses, a.design.as_deref(), &a.out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("entgen: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
