use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uqbench::config::NliBackend;
use uqbench::harness::{run_calibrate, run_evaluate, run_score};
use uqbench::report::EvalReport;
use uqbench::synth::{generate, SynthSpec};
use uqbench::{Error, RunConfig};
use uqbench_core::Method;

/// Score, calibrate and evaluate uncertainty estimates for model outputs.
#[derive(Parser, Debug)]
#[command(name = "uqbench", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    background: Option<PathBuf>,
    /// Precomputed similarity matrices (JSONL).
    #[arg(long)]
    similarity_file: Option<PathBuf>,
    /// Comma-separated method ids.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    quality_metric: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_rejection: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    nli_endpoint: Option<String>,
    /// `stub` or `http`.
    #[arg(long)]
    nli_provider: Option<String>,
}

impl Overrides {
    fn apply(self, config: &mut RunConfig) -> Result<(), Error> {
        let Overrides {
            dataset,
            train,
            background,
            similarity_file,
            methods,
            quality_metric,
            output_dir,
            seed,
            max_rejection,
            workers,
            nli_endpoint,
            nli_provider,
        } = self;
        if dataset.is_some() {
            config.dataset_path = dataset;
        }
        if train.is_some() {
            config.train_path = train;
        }
        if background.is_some() {
            config.background_path = background;
        }
        if similarity_file.is_some() {
            config.similarity_path = similarity_file;
        }
        if let Some(m) = methods {
            config.methods = m.into_iter().map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect();
        }
        if let Some(q) = quality_metric {
            config.quality_metric = q;
        }
        if let Some(o) = output_dir {
            config.output_dir = o;
        }
        if let Some(s) = seed {
            config.seed = s;
        }
        if let Some(m) = max_rejection {
            config.max_rejection = m;
        }
        if workers.is_some() {
            config.workers = workers;
        }
        if let Some(e) = nli_endpoint {
            config.nli.endpoint = e;
        }
        if let Some(p) = nli_provider {
            config.nli.provider = match p.as_str() {
                "stub" => NliBackend::Stub,
                "http" => NliBackend::Http,
                other => return Err(Error::Config(format!("unknown NLI provider {other:?}"))),
            };
        }
        Ok(())
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score the dataset (and the train split, if set) with every method.
    Score {
        #[command(flatten)]
        overrides: Overrides,
        /// Print every method id and exit.
        #[arg(long)]
        list_methods: bool,
    },
    /// Fit calibration models on the train split's scores.
    Calibrate {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compute PRR, ROC/PR-AUC and calibration error; writes the report.
    Evaluate {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the text table of an existing report.
    Report {
        /// Report JSON; defaults to `report.json` in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write a seeded synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthSpec::default().n)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = SynthSpec::default().vocab_size)]
        vocab_size: usize,
        #[arg(long, default_value_t = SynthSpec::default().samples)]
        samples: usize,
        #[arg(long, default_value_t = SynthSpec::default().noise)]
        noise: f64,
        #[arg(long, default_value_t = SynthSpec::default().correlation)]
        correlation: f64,
        #[arg(long, default_value_t = SynthSpec::default().embedding_dim)]
        embedding_dim: usize,
        #[arg(long, default_value = "r")]
        id_prefix: String,
    },
}

fn config_with(path: Option<&std::path::Path>, overrides: Overrides) -> Result<RunConfig, Error> {
    let mut config = RunConfig::load(path)?;
    overrides.apply(&mut config)?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    let path = cli.config.as_deref();
    match cli.command {
        Command::Score { list_methods: true, .. } => {
            for m in Method::all() {
                println!("{m}");
            }
        }
        Command::Score { overrides, .. } => {
            let summary = run_score(&config_with(path, overrides)?)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            let t = &summary.test;
            eprintln!(
                "scored {} records: {} scores, {} skips, {} bad lines",
                t.records, t.scores, t.skips, t.bad_lines
            );
            if let Some(t) = &summary.train {
                eprintln!(
                    "train split: {} records: {} scores, {} skips, {} bad lines",
                    t.records, t.scores, t.skips, t.bad_lines
                );
            }
        }
        Command::Calibrate { overrides } => {
            let models = run_calibrate(&config_with(path, overrides)?)?;
            eprintln!("fitted normalizers for {} methods", models.methods.len());
        }
        Command::Evaluate { overrides } => {
            print!("{}", run_evaluate(&config_with(path, overrides)?)?.render_table());
        }
        Command::Report { input, overrides } => {
            let config = config_with(path, overrides)?;
            let input = input.unwrap_or_else(|| config.report_path());
            print!("{}", EvalReport::load(&input)?.render_table());
        }
        Command::Synth { out, n, seed, vocab_size, samples, noise, correlation, embedding_dim, id_prefix } => {
            let spec = SynthSpec {
                n,
                seed,
                vocab_size,
                samples,
                noise,
                correlation,
                embedding_dim,
                id_prefix,
                ..Default::default()
            };
            uqbench::io::write_dataset(&out, &generate(&spec)).map_err(|e| Error::io(&out, e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
