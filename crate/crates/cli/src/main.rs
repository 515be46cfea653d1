//! `prak`: Czech forced alignment from the command line.
//!
//! Exit codes: 0 success, 1 processing error, 2 usage or configuration error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use rayon::prelude::*;

use prak_core::am;
use prak_core::decoder::{align, PhonePrior};
use prak_core::eval::{score, EvalReport, ScoreOptions};
use prak_core::frontend::{self, CONTEXT_FRAMES};
use prak_core::g2p::{G2p, PronSausage};
use prak_core::io_textgrid::{TextGrid, PHONE_TIER};
use prak_core::par::Execution;
use prak_core::phoneset::PhoneInventory;
use prak_core::textnorm::{clean_text, ExceptionRuleSet};
use prak_core::trainer::{self, ingest_manifest, prepare_corpus, ManifestFormat, Trainer};

use config::Config;

#[derive(Parser)]
#[command(name = "prak", version, about = "Czech forced alignment")]
struct Cli {
    /// INI configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration and progress details.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align a transcript with one or more recordings and write TextGrids.
    Align(AlignArgs),
    /// Print the pronunciation variants of a transcript.
    Pron(PronArgs),
    /// Train an acoustic model from a corpus.
    Train(TrainArgs),
    /// Score hypothesis TextGrids against references.
    Eval(EvalArgs),
    /// Check that a transcript cleans up and transcribes.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct AlignArgs {
    /// Recording to align; repeat to align several against the same text.
    #[arg(long, required = true)]
    audio: Vec<PathBuf>,
    #[arg(long)]
    text: PathBuf,
    #[arg(long, env = "PRAK_MODEL")]
    model: Option<PathBuf>,
    /// Directory for TextGrids; defaults to next to each recording.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Minimum phone duration in frames (1-3).
    #[arg(long)]
    min_dur: Option<usize>,
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct PronArgs {
    #[arg(long)]
    text: PathBuf,
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Print SAMPA instead of IPA.
    #[arg(long)]
    sampa: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// `path`/`sentence` TSV or two-column `audio<TAB>text`.
    Tsv,
    /// Directory of `.wav`/`.txt` pairs.
    Dir,
}

#[derive(Args)]
struct TrainArgs {
    /// Manifest file or directory of recordings.
    #[arg(long)]
    manifest: PathBuf,
    /// Defaults to `dir` for directories and `tsv` otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Output directory for the model, checkpoints and log.
    #[arg(long)]
    out: PathBuf,
    /// Continue from the last checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "ref", required = true)]
    reference: Vec<PathBuf>,
    #[arg(long, required = true)]
    hyp: Vec<PathBuf>,
    #[arg(long, default_value = PHONE_TIER)]
    tier: String,
    #[arg(long)]
    include_silence: bool,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, required = true)]
    text: Vec<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
}

enum Failure {
    Usage(anyhow::Error),
    Processing(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Processing(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" }))
        .format_target(false)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Processing(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(usage)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Align(a) => cmd_align(a, &mut cfg, cli.verbose),
        Command::Pron(a) => cmd_pron(a, &mut cfg, cli.verbose),
        Command::Train(a) => cmd_train(a, &mut cfg, cli.verbose),
        Command::Eval(a) => cmd_eval(a),
        Command::Validate(a) => cmd_validate(a, &mut cfg, cli.verbose),
    }
}

fn echo(cfg: &Config, verbose: bool) {
    if verbose {
        eprintln!("# effective configuration\n{cfg}");
    }
}

fn require(path: &Path, what: &str) -> Outcome {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(anyhow!("{what} {} does not exist", path.display())))
    }
}

fn load_g2p(cfg: &Config) -> Result<G2p, Failure> {
    match &cfg.inventory {
        None => Ok(G2p::czech()),
        Some(p) => {
            let inv = PhoneInventory::load(p).map_err(|e| usage(anyhow!("inventory {}: {e}", p.display())))?;
            G2p::new(inv).map_err(|e| usage(anyhow!("inventory {}: {e}", p.display())))
        }
    }
}

fn load_rules(cfg: &Config) -> Result<ExceptionRuleSet, Failure> {
    match &cfg.rules {
        None => Ok(ExceptionRuleSet::default()),
        Some(p) => {
            require(p, "rule file")?;
            ExceptionRuleSet::load(p).map_err(|e| usage(anyhow!("{e}")))
        }
    }
}

fn transcribe(path: &Path, g2p: &G2p, rules: &ExceptionRuleSet) -> anyhow::Result<PronSausage> {
    let raw = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let text = clean_text(&raw).with_context(|| path.display().to_string())?;
    g2p.pron_generate(&text, rules).with_context(|| path.display().to_string())
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(usage(anyhow!("--jobs must be positive")));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Failure::Processing(e.into()))
}

fn cmd_align(a: AlignArgs, cfg: &mut Config, verbose: bool) -> Outcome {
    if let Some(m) = a.model {
        cfg.model = Some(m);
    }
    if let Some(r) = a.rules {
        cfg.rules = Some(r);
    }
    if let Some(x) = a.alpha {
        cfg.decoder.alpha = x;
    }
    if let Some(d) = a.min_dur {
        cfg.decoder.min_duration = d;
    }
    cfg.validate().map_err(usage)?;
    echo(cfg, verbose);
    let model = cfg
        .model
        .clone()
        .ok_or_else(|| usage(anyhow!("no model: pass --model, set PRAK_MODEL or [paths] model")))?;
    require(&model, "model")?;
    require(&a.text, "text file")?;
    for p in &a.audio {
        require(p, "audio file")?;
    }
    if let Some(d) = &a.out_dir {
        std::fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
    }
    let g2p = load_g2p(cfg)?;
    let rules = load_rules(cfg)?;
    let inv = g2p.inventory();
    let (params, _) = am::load(&model, inv).map_err(|e| anyhow!(e))?;
    let prior_file = trainer::prior_path(&model);
    let prior = if prior_file.exists() {
        trainer::read_prior(&prior_file, inv).map_err(|e| anyhow!(e))?
    } else {
        warn!("{} not found; using a uniform phone prior", prior_file.display());
        PhonePrior::uniform(inv.len())
    };
    let sausage = transcribe(&a.text, &g2p, &rules)?;
    let pool = thread_pool(a.jobs)?;
    let cfg = &*cfg;
    let results: Vec<anyhow::Result<PathBuf>> = pool.install(|| {
        a.audio
            .par_iter()
            .map(|audio_path| -> anyhow::Result<PathBuf> {
                let audio = frontend::load_audio(audio_path)?;
                let duration = audio.duration();
                let grid = if sausage.words.is_empty() {
                    TextGrid::silent(duration)
                } else {
                    let feats = frontend::compute_mfcc(&audio, cfg.dither)?;
                    if feats.num_frames == 0 {
                        return Err(anyhow!("recording is shorter than one frame"));
                    }
                    let inputs = frontend::utterance_inputs(&feats, CONTEXT_FRAMES)?;
                    let post = am::forward(&params, &inputs, Execution::Sequential)?;
                    let result = align(&post, &sausage, inv, &prior, cfg.decoder)?;
                    TextGrid::from_alignment(&result.alignment, inv, Some(duration))?
                };
                let stem = audio_path.file_stem().unwrap_or_default();
                let dir = a
                    .out_dir
                    .clone()
                    .unwrap_or_else(|| audio_path.parent().unwrap_or(Path::new("")).to_path_buf());
                let out = dir.join(stem).with_extension("TextGrid");
                grid.write(&out)?;
                Ok(out)
            })
            .collect()
    });
    let mut failed = 0;
    for (audio_path, r) in a.audio.iter().zip(results) {
        match r {
            Ok(out) => println!("{}", out.display()),
            Err(e) => {
                failed += 1;
                eprintln!("error: {}: {e:#}", audio_path.display());
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Processing(anyhow!("{failed} of {} recordings failed", a.audio.len())));
    }
    Ok(())
}

fn cmd_pron(a: PronArgs, cfg: &mut Config, verbose: bool) -> Outcome {
    if let Some(r) = a.rules {
        cfg.rules = Some(r);
    }
    echo(cfg, verbose);
    require(&a.text, "text file")?;
    let g2p = load_g2p(cfg)?;
    let rules = load_rules(cfg)?;
    let sausage = transcribe(&a.text, &g2p, &rules)?;
    print!("{}", sausage.render(g2p.inventory(), a.sampa).map_err(|e| anyhow!(e))?);
    Ok(())
}

fn cmd_validate(a: ValidateArgs, cfg: &mut Config, verbose: bool) -> Outcome {
    if let Some(r) = a.rules {
        cfg.rules = Some(r);
    }
    echo(cfg, verbose);
    for p in &a.text {
        require(p, "text file")?;
    }
    let g2p = load_g2p(cfg)?;
    let rules = load_rules(cfg)?;
    let mut failed = 0;
    for p in &a.text {
        match transcribe(p, &g2p, &rules) {
            Ok(s) => println!("ok\t{}\t{} words\t{} pronunciation paths", p.display(), s.words.len(), s.path_count()),
            Err(e) => {
                failed += 1;
                println!("fail\t{}\t{e:#}", p.display());
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Processing(anyhow!("{failed} of {} transcripts failed", a.text.len())));
    }
    Ok(())
}

fn cmd_train(a: TrainArgs, cfg: &mut Config, verbose: bool) -> Outcome {
    if let Some(r) = a.rules {
        cfg.rules = Some(r);
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.validate().map_err(usage)?;
    echo(cfg, verbose);
    require(&a.manifest, "manifest")?;
    let format = match a.format {
        Some(Format::Tsv) => ManifestFormat::Tsv,
        Some(Format::Dir) => ManifestFormat::DirPairs,
        None if a.manifest.is_dir() => ManifestFormat::DirPairs,
        None => ManifestFormat::Tsv,
    };
    if a.resume && !trainer::log_path(&a.out).exists() {
        return Err(usage(anyhow!("nothing to resume in {}", a.out.display())));
    }
    let g2p = load_g2p(cfg)?;
    let rules = load_rules(cfg)?;
    let pool = thread_pool(a.jobs)?;
    pool.install(|| -> Outcome {
        let manifest = ingest_manifest(&a.manifest, format).map_err(|e| anyhow!(e))?;
        for issue in &manifest.report {
            let at = issue.line.map_or(String::new(), |l| format!("line {l}: "));
            warn!("{at}{}: {}", issue.item, issue.problem);
        }
        let exec = Execution::default();
        let (corpus, failed) = prepare_corpus(&manifest, &g2p, &rules, cfg.dither, exec);
        for (item, msg) in &failed {
            warn!("skipping {item}: {msg}");
        }
        let (trainer, _) =
            Trainer::new(g2p.inventory().clone(), cfg.train_config(), &corpus, exec).map_err(|e| anyhow!(e))?;
        println!(
            "training on {} utterances, {} frames",
            trainer.utterance_ids().len(),
            trainer.total_frames()
        );
        let mut state = if a.resume {
            let s = trainer::resume_from_dir(&trainer, &a.out).map_err(|e| anyhow!(e))?;
            println!("resuming after epoch {}", s.epoch);
            s
        } else {
            trainer.bootstrap().map_err(|e| anyhow!(e))?
        };
        trainer
            .run(&mut state, Some(&a.out), |r| {
                println!(
                    "epoch {:>3}  loss {:.4}  changed {:.3}%",
                    r.epoch,
                    r.loss,
                    100.0 * r.change_fraction
                );
            })
            .map_err(|e| anyhow!(e))?;
        println!("{}", a.out.join(trainer::MODEL_FILE).display());
        Ok(())
    })
}

fn cmd_eval(a: EvalArgs) -> Outcome {
    if a.reference.len() != a.hyp.len() {
        return Err(usage(anyhow!(
            "{} reference files but {} hypothesis files",
            a.reference.len(),
            a.hyp.len()
        )));
    }
    for p in a.reference.iter().chain(&a.hyp) {
        require(p, "TextGrid")?;
    }
    let opts = ScoreOptions {
        include_silence: a.include_silence,
        ..Default::default()
    };
    let tier = |p: &Path| -> anyhow::Result<_> {
        let grid = TextGrid::read(p)?;
        grid.timed_phones(&a.tier)
            .ok_or_else(|| anyhow!("{} has no interval tier {:?}", p.display(), a.tier))
    };
    let mut total = EvalReport::default();
    for (r, h) in a.reference.iter().zip(&a.hyp) {
        let report = score(&tier(r)?, &tier(h)?, opts).with_context(|| format!("{} vs {}", r.display(), h.display()))?;
        total.add(&report);
    }
    if a.json {
        println!("{:#}", total.to_json(a.include_silence));
    } else {
        print!("{}", total.table(a.include_silence));
    }
    Ok(())
}
