//! Self-bootstrapping acoustic-model training.
//!
//! Epoch 0 labels every utterance with the uniform 30 ms bootstrap of its
//! canonical pronunciation. Each later epoch trains on the previous epoch's
//! frame labels (one shuffled pass by default), recounts the phone prior
//! from those labels and realigns every utterance with prior-boosted
//! Viterbi over the full variant graph.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::am::{self, AmConfig, AmError, AmParams, Optimizer, OptimizerState};
use crate::decoder::{bootstrap_alignment, viterbi, AlignGraph, Alignment, DecodeError, PhonePrior, ViterbiResult};
use crate::frontend::{self, FeatureMatrix, FrontendError};
use crate::g2p::{G2p, PronSausage};
use crate::par::Execution;
use crate::phoneset::PhoneInventory;
use crate::textnorm::{clean_text, ExceptionRuleSet};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{path}: line {line}: {message}")]
    Manifest { path: String, line: usize, message: String },
    #[error("nothing to train on: {0}")]
    EmptyCorpus(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("training log {path}: {message}")]
    Log { path: String, message: String },
    #[error(transparent)]
    Am(#[from] AmError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> TrainError {
    TrainError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestFormat {
    /// Tab-separated rows; either a header naming `path` and `sentence`
    /// columns, or two columns `audio<TAB>text`.
    Tsv,
    /// A directory of `name.wav` / `name.txt` pairs.
    DirPairs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub audio: PathBuf,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestIssue {
    /// Manifest line, when the manifest is a file.
    pub line: Option<usize>,
    pub item: String,
    pub problem: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub format: ManifestFormat,
    pub entries: Vec<ManifestEntry>,
    /// Rows or files left out, with reasons.
    pub report: Vec<ManifestIssue>,
}

pub fn ingest_manifest(path: &Path, format: ManifestFormat) -> Result<CorpusManifest, TrainError> {
    let mut m = match format {
        ManifestFormat::Tsv => ingest_tsv(path)?,
        ManifestFormat::DirPairs => ingest_dir(path)?,
    };
    let mut kept = Vec::with_capacity(m.entries.len());
    for e in m.entries.drain(..) {
        match clean_text(e.text.as_bytes()) {
            Ok(_) => kept.push(e),
            Err(err) => m.report.push(ManifestIssue {
                line: None,
                item: e.audio.display().to_string(),
                problem: format!("transcript rejected: {err}"),
            }),
        }
    }
    m.entries = kept;
    if m.entries.is_empty() {
        return Err(TrainError::EmptyCorpus(format!(
            "{} has no usable entries ({} problems)",
            path.display(),
            m.report.len()
        )));
    }
    Ok(m)
}

fn ingest_tsv(path: &Path) -> Result<CorpusManifest, TrainError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
    let (mut audio_col, mut text_col, mut width) = (0, 1, 2);
    if let Some((_, first)) = lines.peek() {
        let cols: Vec<&str> = first.split('\t').map(str::trim).collect();
        if let (Some(a), Some(t)) = (
            cols.iter().position(|c| *c == "path"),
            cols.iter().position(|c| *c == "sentence"),
        ) {
            (audio_col, text_col, width) = (a, t, cols.len());
            lines.next();
        }
    }
    let mut entries = Vec::new();
    let mut report = Vec::new();
    for (i, line) in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < width.max(2) || cols.len() <= audio_col.max(text_col) {
            return Err(TrainError::Manifest {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("expected {} tab-separated columns, found {}", width.max(2), cols.len()),
            });
        }
        let name = cols[audio_col].trim();
        let direct = base.join(name);
        let clips = base.join("clips").join(name);
        let audio = if direct.is_file() {
            direct
        } else if clips.is_file() {
            clips
        } else {
            report.push(ManifestIssue {
                line: Some(i + 1),
                item: name.to_string(),
                problem: "audio file not found".into(),
            });
            continue;
        };
        entries.push(ManifestEntry {
            audio,
            text: cols[text_col].to_string(),
        });
    }
    Ok(CorpusManifest {
        format: ManifestFormat::Tsv,
        entries,
        report,
    })
}

fn ingest_dir(dir: &Path) -> Result<CorpusManifest, TrainError> {
    let mut wavs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    wavs.sort();
    let mut entries = Vec::new();
    let mut report = Vec::new();
    for wav in wavs {
        let txt = wav.with_extension("txt");
        match fs::read(&txt) {
            Ok(bytes) => match String::from_utf8(bytes) {
                Ok(text) => entries.push(ManifestEntry { audio: wav, text }),
                Err(_) => report.push(ManifestIssue {
                    line: None,
                    item: txt.display().to_string(),
                    problem: "transcript is not UTF-8".into(),
                }),
            },
            Err(_) => report.push(ManifestIssue {
                line: None,
                item: wav.display().to_string(),
                problem: "no matching .txt transcript".into(),
            }),
        }
    }
    Ok(CorpusManifest {
        format: ManifestFormat::DirPairs,
        entries,
        report,
    })
}

/// Features and pronunciation lattice of one training utterance.
#[derive(Debug, Clone)]
pub struct CorpusUtterance {
    pub id: String,
    pub features: FeatureMatrix,
    pub sausage: PronSausage,
    pub duration: f64,
}

/// Loads audio, extracts features and generates pronunciations for every
/// manifest entry. Failures are returned alongside, not raised.
pub fn prepare_corpus(
    manifest: &CorpusManifest,
    g2p: &G2p,
    rules: &ExceptionRuleSet,
    dither: bool,
    exec: Execution,
) -> (Vec<CorpusUtterance>, Vec<(String, String)>) {
    let results = exec.map(&manifest.entries, |e| -> Result<CorpusUtterance, String> {
        let audio = frontend::load_audio(&e.audio).map_err(|x| x.to_string())?;
        let features = frontend::compute_mfcc(&audio, dither).map_err(|x| x.to_string())?;
        let text = clean_text(e.text.as_bytes()).map_err(|x| x.to_string())?;
        let sausage = g2p.pron_generate(&text, rules).map_err(|x| x.to_string())?;
        Ok(CorpusUtterance {
            id: e.audio.display().to_string(),
            features,
            sausage,
            duration: audio.duration(),
        })
    });
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (e, r) in manifest.entries.iter().zip(results) {
        match r {
            Ok(u) => ok.push(u),
            Err(msg) => failed.push((e.audio.display().to_string(), msg)),
        }
    }
    (ok, failed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub passes_per_epoch: usize,
    pub seed: u64,
    /// Stop once the fraction of frames changing label falls below this.
    pub change_threshold: f64,
    pub alpha: f64,
    pub min_duration: usize,
    pub optimizer: Optimizer,
    pub hidden_dims: Vec<usize>,
    pub context: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 256,
            passes_per_epoch: 1,
            seed: 0,
            change_threshold: 0.001,
            alpha: 1.0,
            min_duration: 1,
            optimizer: Optimizer::default(),
            hidden_dims: vec![120, 120],
            context: frontend::CONTEXT_FRAMES,
        }
    }
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's batches, before each update.
    pub loss: f64,
    /// Fraction of frames whose label changed in this epoch's realignment.
    pub change_fraction: f64,
    pub frames: usize,
    /// Frame counts per phone code behind the prior used for realignment.
    pub phone_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub epoch: usize,
    pub params: AmParams,
    pub optimizer: OptimizerState,
    pub alignments: Vec<Alignment>,
    pub prior: PhonePrior,
    pub history: Vec<EpochRecord>,
}

struct Prepared {
    id: String,
    frames: usize,
    offset: usize,
    graph: AlignGraph,
    canonical: String,
}

pub struct Trainer {
    inventory: PhoneInventory,
    cfg: TrainConfig,
    am_cfg: AmConfig,
    exec: Execution,
    utts: Vec<Prepared>,
    inputs: Vec<f32>,
    input_dim: usize,
    total_frames: usize,
}

impl Trainer {
    /// Builds windows and alignment graphs. Utterances whose text cannot fit
    /// their frame count are skipped with a warning and listed in the second
    /// return value.
    pub fn new(
        inventory: PhoneInventory,
        cfg: TrainConfig,
        corpus: &[CorpusUtterance],
        exec: Execution,
    ) -> Result<(Self, Vec<(String, String)>), TrainError> {
        if cfg.batch_size == 0 || cfg.passes_per_epoch == 0 {
            return Err(TrainError::Config("batch size and passes per epoch must be positive".into()));
        }
        let num_ceps = corpus.first().map_or(13, |u| u.features.dim);
        let input_dim = frontend::input_dim(num_ceps, cfg.context);
        let am_cfg = AmConfig {
            input_dim,
            hidden_dims: cfg.hidden_dims.clone(),
            output_dim: inventory.len(),
            seed: cfg.seed,
        };
        am_cfg.validate()?;
        let built = exec.map(corpus, |u| -> Result<(AlignGraph, Vec<f32>), String> {
            if u.features.num_frames == 0 {
                return Err("audio shorter than one frame".into());
            }
            if u.features.dim != num_ceps {
                return Err(format!("feature dimension {} differs from {num_ceps}", u.features.dim));
            }
            let graph = AlignGraph::build(&u.sausage, &inventory, cfg.min_duration).map_err(|e| e.to_string())?;
            let canonical_len = u.sausage.canonical().chars().count();
            if graph.min_frames > u.features.num_frames || canonical_len > u.features.num_frames {
                return Err(DecodeError::TextTooLong {
                    needed: graph.min_frames.max(canonical_len),
                    frames: u.features.num_frames,
                }
                .to_string());
            }
            let inputs = frontend::utterance_inputs(&u.features, cfg.context).map_err(|e| e.to_string())?;
            Ok((graph, inputs))
        });
        let mut utts = Vec::new();
        let mut inputs = Vec::new();
        let mut skipped = Vec::new();
        let mut offset = 0;
        for (u, r) in corpus.iter().zip(built) {
            match r {
                Ok((graph, x)) => {
                    inputs.extend_from_slice(&x);
                    utts.push(Prepared {
                        id: u.id.clone(),
                        frames: u.features.num_frames,
                        offset,
                        graph,
                        canonical: u.sausage.canonical(),
                    });
                    offset += u.features.num_frames;
                }
                Err(msg) => {
                    warn!("skipping {}: {msg}", u.id);
                    skipped.push((u.id.clone(), msg));
                }
            }
        }
        if utts.is_empty() {
            return Err(TrainError::EmptyCorpus("every utterance was skipped".into()));
        }
        Ok((
            Self {
                inventory,
                cfg,
                am_cfg,
                exec,
                utts,
                inputs,
                input_dim,
                total_frames: offset,
            },
            skipped,
        ))
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn am_config(&self) -> &AmConfig {
        &self.am_cfg
    }

    pub fn inventory(&self) -> &PhoneInventory {
        &self.inventory
    }

    pub fn utterance_ids(&self) -> Vec<&str> {
        self.utts.iter().map(|u| u.id.as_str()).collect()
    }

    pub fn total_frames(&self) -> usize {
        self.total_frames
    }

    fn utt_inputs(&self, i: usize) -> &[f32] {
        let u = &self.utts[i];
        &self.inputs[u.offset * self.input_dim..(u.offset + u.frames) * self.input_dim]
    }

    /// Epoch 0: uniform bootstrap alignments and freshly initialized weights.
    pub fn bootstrap(&self) -> Result<TrainState, TrainError> {
        let silence = self.inventory.silence();
        let alignments = self
            .utts
            .iter()
            .map(|u| bootstrap_alignment(&u.canonical, u.frames, silence))
            .collect::<Result<Vec<_>, _>>()?;
        let params = AmParams::init(&self.am_cfg)?;
        let prior = PhonePrior::recount(&alignments, &self.inventory)?;
        Ok(TrainState {
            epoch: 0,
            optimizer: OptimizerState::new(self.cfg.optimizer, &params),
            params,
            alignments,
            prior,
            history: Vec::new(),
        })
    }

    /// State after `epoch` from saved weights and the prior counts recorded
    /// for that epoch: realigning reproduces the epoch's alignments. The
    /// optimizer restarts from zero moments.
    pub fn resume(&self, params: AmParams, record: &EpochRecord, history: Vec<EpochRecord>) -> Result<TrainState, TrainError> {
        if params.dims() != self.am_cfg.dims().as_slice() {
            return Err(TrainError::Config(format!(
                "checkpoint dims {:?} do not match {:?}",
                params.dims(),
                self.am_cfg.dims()
            )));
        }
        let prior = self.prior_from_record(record)?;
        let results = self.realign(&params, &prior)?;
        let alignments: Vec<Alignment> = results.into_iter().map(|r| r.alignment).collect();
        Ok(TrainState {
            epoch: record.epoch,
            optimizer: OptimizerState::new(self.cfg.optimizer, &params),
            prior: PhonePrior::recount(&alignments, &self.inventory)?,
            params,
            alignments,
            history,
        })
    }

    pub fn prior_from_record(&self, record: &EpochRecord) -> Result<PhonePrior, TrainError> {
        prior_from_counts(&self.inventory, &record.phone_counts)
    }

    /// Viterbi realignment of every utterance.
    pub fn realign(&self, params: &AmParams, prior: &PhonePrior) -> Result<Vec<ViterbiResult>, TrainError> {
        let idx: Vec<usize> = (0..self.utts.len()).collect();
        let inner = Execution::Sequential;
        self.exec
            .map(&idx, |&i| -> Result<ViterbiResult, TrainError> {
                let post = am::forward(params, self.utt_inputs(i), inner)?;
                Ok(viterbi(&post, &self.utts[i].graph, prior, self.cfg.alpha)?)
            })
            .into_iter()
            .collect()
    }

    /// Frame order for an epoch's gradient pass.
    fn shuffled_frames(&self, epoch: usize, pass: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.total_frames).collect();
        let seed = self
            .cfg
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((epoch as u64) << 8 | pass as u64);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order
    }

    /// One epoch: train on the current labels, then realign.
    pub fn epoch(&self, state: &mut TrainState) -> Result<EpochRecord, TrainError> {
        let epoch = state.epoch + 1;
        let mut labels = Vec::with_capacity(self.total_frames);
        for a in &state.alignments {
            labels.extend(a.frame_labels(&self.inventory)?);
        }
        let dim = self.input_dim;
        let mut batch = Vec::with_capacity(self.cfg.batch_size * dim);
        let mut targets = Vec::with_capacity(self.cfg.batch_size);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for pass in 0..self.cfg.passes_per_epoch {
            for chunk in self.shuffled_frames(epoch, pass).chunks(self.cfg.batch_size) {
                batch.clear();
                targets.clear();
                for &f in chunk {
                    batch.extend_from_slice(&self.inputs[f * dim..(f + 1) * dim]);
                    targets.push(labels[f]);
                }
                let loss = am::train_step(
                    &mut state.params,
                    &mut state.optimizer,
                    &batch,
                    &targets,
                    self.cfg.learning_rate,
                    self.exec,
                )?;
                loss_sum += loss * chunk.len() as f64;
                seen += chunk.len();
            }
        }
        // The prior comes from the labels just trained on.
        let prior = PhonePrior::recount(&state.alignments, &self.inventory)?;
        let results = self.realign(&state.params, &prior)?;
        let mut changed = 0usize;
        for (old, new) in state.alignments.iter().zip(&results) {
            let a = old.frame_labels(&self.inventory)?;
            let b = new.alignment.frame_labels(&self.inventory)?;
            changed += a.iter().zip(&b).filter(|(x, y)| x != y).count();
        }
        let record = EpochRecord {
            epoch,
            loss: loss_sum / seen.max(1) as f64,
            change_fraction: changed as f64 / self.total_frames as f64,
            frames: self.total_frames,
            phone_counts: counts_by_code(&self.inventory, &prior),
        };
        state.alignments = results.into_iter().map(|r| r.alignment).collect();
        state.prior = PhonePrior::recount(&state.alignments, &self.inventory)?;
        state.epoch = epoch;
        state.history.push(record.clone());
        Ok(record)
    }

    /// Runs epochs until the configured count or until labels settle.
    /// With `out_dir`, writes `epoch-NNN.prakam` checkpoints, appends to
    /// `train.log.jsonl` and writes the final `model.prakam`.
    pub fn run(
        &self,
        state: &mut TrainState,
        out_dir: Option<&Path>,
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<(), TrainError> {
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        let settled = |s: &TrainState| {
            s.history
                .last()
                .is_some_and(|r| r.change_fraction < self.cfg.change_threshold)
        };
        while state.epoch < self.cfg.epochs && !settled(state) {
            let record = self.epoch(state)?;
            info!(
                "epoch {} loss {:.4} changed {:.3}%",
                record.epoch,
                record.loss,
                100.0 * record.change_fraction
            );
            if let Some(dir) = out_dir {
                am::save(&state.params, &self.am_cfg, &self.inventory, &checkpoint_path(dir, record.epoch))?;
                append_log(&log_path(dir), &record)?;
            }
            on_epoch(&record);
        }
        if let Some(dir) = out_dir {
            let model = dir.join(MODEL_FILE);
            am::save(&state.params, &self.am_cfg, &self.inventory, &model)?;
            write_prior(&prior_path(&model), &self.inventory, &state.prior)?;
        }
        Ok(())
    }
}

/// Phone counts keyed by inventory code.
pub fn counts_by_code(inv: &PhoneInventory, prior: &PhonePrior) -> BTreeMap<String, u64> {
    inv.phones()
        .iter()
        .zip(&prior.counts)
        .map(|(p, &c)| (p.code.to_string(), c))
        .collect()
}

pub fn prior_from_counts(inv: &PhoneInventory, counts: &BTreeMap<String, u64>) -> Result<PhonePrior, TrainError> {
    let mut out = vec![0u64; inv.len()];
    for (code, &n) in counts {
        let mut chars = code.chars();
        let idx = match (chars.next(), chars.next()) {
            (Some(c), None) => inv.position(c),
            _ => None,
        };
        let idx = idx.ok_or_else(|| TrainError::Config(format!("unknown phone {code:?} in phone counts")))?;
        out[idx] = n;
    }
    Ok(PhonePrior::from_counts(out))
}

/// Sidecar holding the phone counts of a model's final alignments:
/// `model.prakam` pairs with `model.prior.json`.
pub fn prior_path(model: &Path) -> PathBuf {
    model.with_extension("prior.json")
}

pub fn write_prior(path: &Path, inv: &PhoneInventory, prior: &PhonePrior) -> Result<(), TrainError> {
    let json = serde_json::json!({ "phone_counts": counts_by_code(inv, prior) });
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, format!("{json:#}\n")).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn read_prior(path: &Path, inv: &PhoneInventory) -> Result<PhonePrior, TrainError> {
    #[derive(Deserialize)]
    struct PriorFile {
        phone_counts: BTreeMap<String, u64>,
    }
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: PriorFile = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
    prior_from_counts(inv, &file.phone_counts)
}

pub const MODEL_FILE: &str = "model.prakam";
pub const LOG_FILE: &str = "train.log.jsonl";

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch-{epoch:03}.prakam"))
}

pub fn log_path(dir: &Path) -> PathBuf {
    dir.join(LOG_FILE)
}

fn append_log(path: &Path, record: &EpochRecord) -> Result<(), TrainError> {
    let line = serde_json::to_string(record).map_err(|e| io_err(path, e))?;
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    writeln!(f, "{line}").map_err(|e| io_err(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<EpochRecord>, TrainError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TrainError::Log {
                path: path.display().to_string(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Restores the state after the last logged epoch in `dir`.
pub fn resume_from_dir(trainer: &Trainer, dir: &Path) -> Result<TrainState, TrainError> {
    let history = read_log(&log_path(dir))?;
    let last = history
        .last()
        .cloned()
        .ok_or_else(|| TrainError::Log {
            path: log_path(dir).display().to_string(),
            message: "no epochs recorded".into(),
        })?;
    let (params, _) = am::load(&checkpoint_path(dir, last.epoch), trainer.inventory())?;
    trainer.resume(params, &last, history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_corpus, mini_inventory, SynthConfig};

    fn small_corpus(n: usize) -> Vec<CorpusUtterance> {
        generate_corpus(&SynthConfig {
            utterances: n,
            seed: 5,
            ..Default::default()
        })
        .iter()
        .enumerate()
        .map(|(i, u)| CorpusUtterance {
            id: format!("u{i}"),
            features: frontend::compute_mfcc(&u.audio, false).unwrap(),
            sausage: u.sausage(),
            duration: u.audio.duration(),
        })
        .collect()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden_dims: vec![16],
            epochs: 3,
            change_threshold: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn epoch_zero_is_bootstrap() {
        let corpus = small_corpus(3);
        let (t, skipped) = Trainer::new(mini_inventory(), small_cfg(), &corpus, Execution::Sequential).unwrap();
        assert!(skipped.is_empty());
        let s = t.bootstrap().unwrap();
        for (a, u) in s.alignments.iter().zip(&corpus) {
            assert_eq!(
                a,
                &bootstrap_alignment(&u.sausage.canonical(), u.features.num_frames, '_').unwrap()
            );
        }
    }

    #[test]
    fn too_long_text_is_skipped() {
        let mut corpus = small_corpus(2);
        corpus[1].sausage = PronSausage::from_words(&[("x", &"a".repeat(5000))], '_');
        let (t, skipped) = Trainer::new(mini_inventory(), small_cfg(), &corpus, Execution::Sequential).unwrap();
        assert_eq!(t.utterance_ids(), vec!["u0"]);
        assert_eq!(skipped.len(), 1);
        assert!(skipped[0].1.contains("too long"));
    }

    #[test]
    fn deterministic_and_mode_independent() {
        let corpus = small_corpus(3);
        let run = |exec| {
            let (t, _) = Trainer::new(mini_inventory(), small_cfg(), &corpus, exec).unwrap();
            let mut s = t.bootstrap().unwrap();
            t.run(&mut s, None, |_| {}).unwrap();
            (s.params, s.history)
        };
        let a = run(Execution::Sequential);
        let b = run(Execution::Sequential);
        let c = run(Execution::Parallel);
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.1.len(), 3);
    }

    #[test]
    fn targets_come_from_previous_epoch() {
        let corpus = small_corpus(2);
        let (t, _) = Trainer::new(mini_inventory(), small_cfg(), &corpus, Execution::Sequential).unwrap();
        let mut s = t.bootstrap().unwrap();
        let before = s.alignments.clone();
        let prior_before = s.prior.clone();
        let rec = t.epoch(&mut s).unwrap();
        // Prior recorded for epoch 1 is the bootstrap recount.
        assert_eq!(t.prior_from_record(&rec).unwrap(), prior_before);
        // Realigning with the new weights and that prior gives the stored labels.
        let again: Vec<Alignment> = t.realign(&s.params, &prior_before).unwrap().into_iter().map(|r| r.alignment).collect();
        assert_eq!(again, s.alignments);
        assert_ne!(before, s.alignments);
        assert_eq!(s.prior, PhonePrior::recount(&s.alignments, t.inventory()).unwrap());
    }

    #[test]
    fn checkpoints_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = small_corpus(3);
        let (t, _) = Trainer::new(mini_inventory(), small_cfg(), &corpus, Execution::Sequential).unwrap();
        let mut full = t.bootstrap().unwrap();
        t.run(&mut full, None, |_| {}).unwrap();

        let two = TrainConfig {
            epochs: 2,
            ..small_cfg()
        };
        let (t2, _) = Trainer::new(mini_inventory(), two, &corpus, Execution::Sequential).unwrap();
        let mut s = t2.bootstrap().unwrap();
        t2.run(&mut s, Some(dir.path()), |_| {}).unwrap();
        assert!(checkpoint_path(dir.path(), 2).exists());
        let model = dir.path().join(MODEL_FILE);
        assert_eq!(read_prior(&prior_path(&model), t.inventory()).unwrap(), s.prior);
        assert_eq!(read_log(&log_path(dir.path())).unwrap().len(), 2);

        // Checkpoint 2 reproduces epoch 2's alignments.
        let resumed = resume_from_dir(&t, dir.path()).unwrap();
        assert_eq!(resumed.epoch, 2);
        assert_eq!(resumed.alignments, s.alignments);

        let mut resumed = resumed;
        t.run(&mut resumed, Some(dir.path()), |_| {}).unwrap();
        let log = read_log(&log_path(dir.path())).unwrap();
        assert_eq!(log.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(log[..2], full.history[..2]);
    }

    #[test]
    fn manifests() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_corpus(&SynthConfig {
            utterances: 2,
            ..Default::default()
        });
        for (name, u) in ["a", "b"].iter().zip(&corpus) {
            frontend::write_wav(&dir.path().join(format!("{name}.wav")), &u.audio).unwrap();
            fs::write(dir.path().join(format!("{name}.txt")), &u.text).unwrap();
        }
        let m = ingest_manifest(dir.path(), ManifestFormat::DirPairs).unwrap();
        assert_eq!(m.entries.len(), 2);

        let tsv = dir.path().join("train.tsv");
        fs::write(&tsv, "client_id\tpath\tsentence\nx\ta.wav\tsama\nx\tc.wav\tmise\nx\tb.wav\tosa\n").unwrap();
        let m = ingest_manifest(&tsv, ManifestFormat::Tsv).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.report.len(), 1);
        assert_eq!(m.report[0].line, Some(3));

        fs::write(&tsv, "a.wav\tsama\nb.wav\n").unwrap();
        match ingest_manifest(&tsv, ManifestFormat::Tsv) {
            Err(TrainError::Manifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        fs::write(&tsv, "").unwrap();
        assert!(matches!(ingest_manifest(&tsv, ManifestFormat::Tsv), Err(TrainError::EmptyCorpus(_))));
        fs::write(&tsv, "a.wav\tv roce 1990\n").unwrap();
        let err = ingest_manifest(&tsv, ManifestFormat::Tsv).unwrap_err();
        assert!(matches!(err, TrainError::EmptyCorpus(_)));
    }
}
