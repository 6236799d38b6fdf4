use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use resynth_detect::asv::{train_model, AsvModel, FeatureConfig};
use resynth_detect::attack::{bim_attack_enrolled, AttackConfig};
use resynth_detect::detect::score_variation;
use resynth_detect::harness::config::ExperimentConfig;
use resynth_detect::harness::corpus::synth_corpus;
use resynth_detect::harness::experiment::{
    eval_corpus_config, render_report, run_experiment, train_config, train_corpus_config,
    ExperimentError,
};
use resynth_detect::harness::wav::{load_wav, save_wav};
use resynth_detect::resynth::{ResynthError, Resynthesizer};

#[derive(Parser)]
#[command(
    name = "resynth-detect",
    version,
    about = "Re-synthesis based detection of adversarial attacks on speaker verification"
)]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config file (TOML, see `harness::config`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic evaluation corpus (WAV files and trials.txt).
    Corpus,
    /// Train the toy speaker-verification model and write model.json.
    Train,
    /// Score one enrollment/test pair.
    Score(PairArgs),
    /// Craft an adversarial version of a test utterance.
    Attack(AttackArgs),
    /// Pass one utterance through a re-synthesis method.
    Resynth(ResynthArgs),
    /// Score variation of one trial under a re-synthesis method.
    Detect(DetectArgs),
    /// Run the full experiment and write all reports.
    Experiment,
    /// Re-render the report files from a finished experiment cache.
    Report,
}

#[derive(Args)]
struct PairArgs {
    /// Model JSON; defaults to `model` from the config.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    enroll: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Budget in PCM16 units.
    #[arg(long)]
    epsilon: f64,
    /// Step in PCM16 units; defaults to `alpha` from the config.
    #[arg(long)]
    alpha: Option<f64>,
    /// Push the score down (target trial) instead of up.
    #[arg(long)]
    target: bool,
    /// Snap the result to the PCM16 grid inside the budget.
    #[arg(long)]
    quantize: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ResynthArgs {
    /// identity, gl-lin, gl-mel, gaussian or vocoder.
    #[arg(long)]
    method: String,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    method: String,
    /// Flag the trial as adversarial when d exceeds this value.
    #[arg(long)]
    threshold: Option<f64>,
}

enum CliError {
    Usage(String),
    Data(String),
    Bridge(String),
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    fn resynth(e: ResynthError) -> Self {
        match e {
            ResynthError::Bridge(_) => CliError::Bridge(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        if e.is_bridge() {
            CliError::Bridge(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(CliError::data)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.validate().map_err(CliError::data)?;
    Ok(cfg)
}

fn load_model(arg: &Option<PathBuf>, cfg: &ExperimentConfig) -> Result<AsvModel, CliError> {
    let path = arg.as_ref().or(cfg.model.as_ref()).ok_or_else(|| {
        CliError::Usage("no model given; pass --model or run `train` first".into())
    })?;
    AsvModel::load(path).map_err(CliError::data)
}

fn resynthesizer(
    cfg: &ExperimentConfig,
    name: &str,
    sample_rate: u32,
) -> Result<Resynthesizer, CliError> {
    let cfg = ExperimentConfig {
        methods: vec![name.to_string()],
        ..cfg.clone()
    };
    let method = cfg
        .resynth_methods()
        .map_err(|e| CliError::Usage(e.to_string()))?
        .remove(0);
    Resynthesizer::new(method, sample_rate).map_err(CliError::resynth)
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(CliError::data)
        }
        _ => Ok(()),
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Corpus => {
            let corpus = synth_corpus(&eval_corpus_config(&cfg)).map_err(CliError::data)?;
            corpus.write(&cfg.out_dir).map_err(CliError::data)?;
            println!(
                "wrote {} utterances and {} trials to {}",
                corpus.utterances.len(),
                corpus.trials.len(),
                cfg.out_dir.display()
            );
        }
        Command::Train => {
            let corpus = synth_corpus(&train_corpus_config(&cfg)).map_err(CliError::data)?;
            let outcome = train_model(
                &corpus.labeled(),
                FeatureConfig::default(),
                &train_config(&cfg),
            )
            .map_err(CliError::data)?;
            std::fs::create_dir_all(&cfg.out_dir).map_err(CliError::data)?;
            let path = cfg.out_dir.join("model.json");
            outcome.model.save(&path).map_err(CliError::data)?;
            println!(
                "validation EER {:.4} (initial {:.4}); model written to {}",
                outcome.validation_eer,
                outcome.initial_eer,
                path.display()
            );
        }
        Command::Score(a) => {
            let model = load_model(&a.model, &cfg)?;
            let (enroll, test) = (
                load_wav(&a.enroll).map_err(CliError::data)?,
                load_wav(&a.test).map_err(CliError::data)?,
            );
            let scorer = model.scorer().map_err(CliError::data)?;
            println!("{}", scorer.score(&test, &enroll).map_err(CliError::data)?);
        }
        Command::Attack(a) => {
            let model = load_model(&a.pair.model, &cfg)?;
            let enroll = load_wav(&a.pair.enroll).map_err(CliError::data)?;
            let test = load_wav(&a.pair.test).map_err(CliError::data)?;
            let mut attack = AttackConfig::new(a.epsilon, a.alpha.unwrap_or(cfg.alpha), a.target)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            attack.quantize = a.quantize || cfg.quantize;
            let scorer = model.scorer().map_err(CliError::data)?;
            let enrolled = scorer.enroll(&enroll).map_err(CliError::data)?;
            let before = enrolled.score(&test).map_err(CliError::data)?;
            let outcome = bim_attack_enrolled(&enrolled, &test, &attack).map_err(CliError::data)?;
            let after = enrolled
                .score(&outcome.adversarial)
                .map_err(CliError::data)?;
            create_parent(&a.output)?;
            save_wav(&a.output, &outcome.adversarial).map_err(CliError::data)?;
            println!(
                "score {before} -> {after} after {} iterations",
                outcome.iterations
            );
        }
        Command::Resynth(a) => {
            let x = load_wav(&a.input).map_err(CliError::data)?;
            let y = resynthesizer(&cfg, &a.method, x.sample_rate())?
                .apply(&x)
                .map_err(CliError::resynth)?;
            create_parent(&a.output)?;
            save_wav(&a.output, &y).map_err(CliError::data)?;
        }
        Command::Detect(a) => {
            let model = load_model(&a.pair.model, &cfg)?;
            let enroll = load_wav(&a.pair.enroll).map_err(CliError::data)?;
            let test = load_wav(&a.pair.test).map_err(CliError::data)?;
            let resynth = resynthesizer(&cfg, &a.method, test.sample_rate())?
                .apply(&test)
                .map_err(CliError::resynth)?;
            let scorer = model.scorer().map_err(CliError::data)?;
            let enrolled = scorer.enroll(&enroll).map_err(CliError::data)?;
            let s = enrolled.score(&test).map_err(CliError::data)?;
            let s_prime = enrolled.score(&resynth).map_err(CliError::data)?;
            let d = score_variation(s, s_prime);
            match a.threshold {
                Some(tau) => println!("s {s} s' {s_prime} d {d} adversarial {}", d > tau),
                None => println!("s {s} s' {s_prime} d {d}"),
            }
        }
        Command::Experiment => {
            let out = run_experiment(&cfg)?;
            println!(
                "{} trials ({} resumed); reports in {}",
                out.records.len(),
                out.timings.resumed_trials,
                cfg.out_dir.display()
            );
        }
        Command::Report => {
            render_report(&cfg.out_dir)?;
            println!("reports rendered in {}", cfg.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Bridge(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
