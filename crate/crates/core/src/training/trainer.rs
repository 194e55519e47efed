//! Minibatch training loops for the three stages.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{read_arrays, write_arrays, Gradients, TypingModel};
use crate::sample::MentionSample;

use super::losses::{partitioned_objective_grad, LossKind, Target};
use super::optim::Adam;
use super::pseudo::{pseudo_label_sets, self_training_grad, PseudoLabels};
use super::LossConfig;

const STATE_FILE: &str = "state.json";
const OPTIMIZER_FILE: &str = "optimizer.bin";
const TEACHER_FILE: &str = "teacher_probs.bin";
const A_STREAM: u64 = 0x5eed_a11a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Optimizer steps per stage.
    pub steps: u64,
    pub seed: u64,
    /// Save a resumable checkpoint every this many steps; 0 saves only at the end.
    pub checkpoint_every: u64,
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from the latest checkpoint of the stage when one exists.
    pub resume: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 32,
            steps: 1000,
            seed: 13,
            checkpoint_every: 0,
            checkpoint_dir: None,
            resume: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    fn stage_dir(&self, stage: &str) -> Option<PathBuf> {
        self.checkpoint_dir.as_ref().map(|d| d.join(stage))
    }
}

/// Per-step minibatch loss of one stage run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub stage: String,
    pub losses: Vec<(u64, f64)>,
}

impl TrainLog {
    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        writeln!(out, "step\tloss").expect("write to vec");
        for (s, l) in &self.losses {
            writeln!(out, "{s}\t{l:.6}").expect("write to vec");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Epoch-wise shuffled minibatches; batch `step` is a pure function of the seed,
/// so a resumed run sees the same batches as an uninterrupted one.
#[derive(Debug)]
pub struct BatchSchedule {
    n: usize,
    batch_size: usize,
    seed: u64,
    cached: Option<(u64, Vec<usize>)>,
}

impl BatchSchedule {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        BatchSchedule {
            n,
            batch_size: batch_size.min(n).max(1),
            seed,
            cached: None,
        }
    }

    pub fn batch(&mut self, step: u64) -> &[usize] {
        if self.n == 0 {
            return &[];
        }
        let per_epoch = self.n.div_ceil(self.batch_size) as u64;
        let (epoch, b) = (step / per_epoch, (step % per_epoch) as usize);
        if self.cached.as_ref().map(|c| c.0) != Some(epoch) {
            let mut perm: Vec<usize> = (0..self.n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(epoch);
            perm.shuffle(&mut rng);
            self.cached = Some((epoch, perm));
        }
        let perm = &self.cached.as_ref().expect("filled above").1;
        &perm[b * self.batch_size..((b + 1) * self.batch_size).min(self.n)]
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StageState {
    stage: String,
    step: u64,
}

fn save_state(dir: &Path, stage: &str, step: u64, model: &TypingModel, opt: &Adam) -> Result<()> {
    let tmp = dir.with_extension("tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    model.save(&tmp)?;
    opt.save(&tmp.join(OPTIMIZER_FILE))?;
    let state = serde_json::to_string(&StageState {
        stage: stage.to_string(),
        step,
    })
    .expect("state serializes");
    let state_path = tmp.join(STATE_FILE);
    fs::write(&state_path, state).map_err(|e| Error::io(&state_path, e))?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

fn load_state(dir: &Path, model: &TypingModel, opt: &mut Adam) -> Result<Option<(TypingModel, u64)>> {
    let state_path = dir.join(STATE_FILE);
    if !state_path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&state_path).map_err(|e| Error::io(&state_path, e))?;
    let state: StageState =
        serde_json::from_str(&text).map_err(|e| Error::format(&state_path, e.line(), e.to_string()))?;
    let loaded = TypingModel::load(dir, model.vocab_arc())?;
    opt.load(&dir.join(OPTIMIZER_FILE))?;
    Ok(Some((loaded, state.step)))
}

/// Runs `cfg.steps` optimizer steps; `batch_grad` returns the minibatch loss and
/// its parameter gradient for a given step.
fn run_stage<F>(
    stage: &str,
    mut model: TypingModel,
    cfg: &TrainConfig,
    mut batch_grad: F,
) -> Result<(TypingModel, TrainLog)>
where
    F: FnMut(&TypingModel, u64) -> Result<(f64, Gradients)>,
{
    cfg.validate()?;
    let mut opt = Adam::new(cfg.lr, &model.params());
    let dir = cfg.stage_dir(stage);
    let mut start = 0;
    if let (true, Some(d)) = (cfg.resume, &dir) {
        if let Some((m, step)) = load_state(&d.join("latest"), &model, &mut opt)? {
            log::info!("{stage}: resuming at step {step}");
            model = m;
            start = step;
        }
    }
    let mut log = TrainLog {
        stage: stage.to_string(),
        losses: Vec::new(),
    };
    for step in start..cfg.steps {
        let (loss, grads) = batch_grad(&model, step)?;
        if !loss.is_finite() {
            return Err(Error::NumericDomain {
                index: step as usize,
                value: loss,
            });
        }
        opt.step(model.params_mut(), &grads);
        log.losses.push((step, loss));
        if step % 100 == 0 {
            log::debug!("{stage} step {step}: loss {loss:.6}");
        }
        if let Some(d) = &dir {
            if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps {
                save_state(&d.join("latest"), stage, step + 1, &model, &opt)?;
            }
        }
    }
    if let Some(d) = &dir {
        save_state(&d.join("latest"), stage, cfg.steps.max(start), &model, &opt)?;
    }
    Ok((model, log))
}

/// Adds `weight * d loss_i / d params` for each sample of a batch; returns the
/// weighted loss sum. Forward passes run in parallel, accumulation is ordered.
fn accumulate<F>(
    model: &TypingModel,
    samples: &[MentionSample],
    batch: &[usize],
    weight: f64,
    grads: &mut Gradients,
    loss_grad: F,
) -> Result<f64>
where
    F: Fn(usize, &[f64]) -> Result<(f64, Vec<f64>)> + Sync,
{
    let per: Vec<Result<_>> = batch
        .par_iter()
        .map(|&i| {
            let tr = model.trace(&samples[i])?;
            let (l, g) = loss_grad(i, &tr.logits)?;
            Ok((tr, l, g))
        })
        .collect();
    let mut total = 0.0;
    for r in per {
        let (tr, l, mut g) = r?;
        g.iter_mut().for_each(|x| *x *= weight);
        model.backward(&tr, &g, grads);
        total += weight * l;
    }
    Ok(total)
}

fn targets(model: &TypingModel, samples: &[MentionSample]) -> Result<Vec<Target>> {
    samples
        .par_iter()
        .map(|s| Target::from_sample(s, model.vocab()))
        .collect()
}

fn supervised(
    stage: &str,
    model: TypingModel,
    samples: &[MentionSample],
    kind: LossKind,
    cfg: &TrainConfig,
) -> Result<(TypingModel, TrainLog)> {
    let tg = targets(&model, samples)?;
    if samples.is_empty() && cfg.steps > 0 {
        return Err(Error::InvalidInput(format!("{stage}: no training samples")));
    }
    let mut sched = BatchSchedule::new(samples.len(), cfg.batch_size, cfg.seed);
    let vocab = model.vocab_arc();
    run_stage(stage, model, cfg, |m, step| {
        let batch = sched.batch(step);
        let mut grads = m.zero_grads();
        let w = 1.0 / batch.len() as f64;
        let loss = accumulate(m, samples, batch, w, &mut grads, |i, z| {
            partitioned_objective_grad(&tg[i], z, &vocab, kind)
        })?;
        Ok((loss, grads))
    })
}

/// Trains on automatically labeled samples with provenance-weighted losses.
pub fn pretrain(
    model: TypingModel,
    weak: &[MentionSample],
    loss: &LossConfig,
    cfg: &TrainConfig,
) -> Result<(TypingModel, TrainLog)> {
    loss.validate()?;
    let kind = LossKind::Weighted {
        alpha_strong: loss.alpha_strong,
    };
    supervised("pretrain", model, weak, kind, cfg)
}

/// Continues training on human-annotated samples with plain cross entropy.
pub fn finetune(h: TypingModel, human: &[MentionSample], cfg: &TrainConfig) -> Result<(TypingModel, TrainLog)> {
    supervised("finetune", h, human, LossKind::Plain, cfg)
}

fn weak_indices(model: &TypingModel, s: &MentionSample) -> Result<BTreeSet<usize>> {
    s.labels()
        .map(|l| model.vocab().index_of(l).ok_or_else(|| Error::UnknownType(l.clone())))
        .collect()
}

/// Teacher probabilities for every sample, one row each.
pub fn teacher_probabilities(teacher: &TypingModel, samples: &[MentionSample]) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = samples.par_iter().map(|s| teacher.forward(s)).collect::<Result<_>>()?;
    let d = teacher.num_types();
    Ok(Array2::from_shape_vec((rows.len(), d), rows.concat()).expect("rows have num_types entries"))
}

fn cached_teacher_probabilities(
    teacher: &TypingModel,
    samples: &[MentionSample],
    cfg: &TrainConfig,
) -> Result<Array2<f64>> {
    let path = cfg.stage_dir("selftrain").map(|d| d.join(TEACHER_FILE));
    if let (true, Some(p)) = (cfg.resume, &path) {
        if p.exists() {
            let mut arrays = read_arrays(p)?;
            if arrays.len() == 1 && arrays[0].dim() == (samples.len(), teacher.num_types()) {
                return Ok(arrays.remove(0));
            }
            log::warn!("ignoring stale teacher cache {}", p.display());
        }
    }
    let probs = teacher_probabilities(teacher, samples)?;
    if let Some(p) = &path {
        let dir = p.parent().expect("cache file has a parent");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_arrays(p, &[&probs])?;
    }
    Ok(probs)
}

/// Student initialized from `h`, trained on human batches plus `lambda` times
/// the pseudo-label loss on automatically labeled batches, with `m` as teacher.
pub fn self_train(
    h: TypingModel,
    m: &TypingModel,
    human: &[MentionSample],
    weak: &[MentionSample],
    loss: &LossConfig,
    cfg: &TrainConfig,
) -> Result<(TypingModel, TrainLog)> {
    loss.validate()?;
    m.check_vocab(h.vocab())?;
    if human.is_empty() || weak.is_empty() {
        return Err(Error::InvalidInput(
            "self-training needs human and automatically labeled samples".into(),
        ));
    }
    let tg = targets(&h, human)?;
    let probs = cached_teacher_probabilities(m, weak, cfg)?;
    let pseudo: Vec<PseudoLabels> = weak
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let weak_labels = weak_indices(&h, s)?;
            let row = probs.row(i);
            pseudo_label_sets(
                row.as_slice().expect("standard layout"),
                &weak_labels,
                loss.p_threshold,
                loss.p_weak,
            )
        })
        .collect::<Result<_>>()?;
    let mut sched_h = BatchSchedule::new(human.len(), cfg.batch_size, cfg.seed);
    let mut sched_a = BatchSchedule::new(weak.len(), cfg.batch_size, cfg.seed ^ A_STREAM);
    let vocab = h.vocab_arc();
    let lambda = loss.lambda;
    run_stage("selftrain", h, cfg, |model, step| {
        let mut grads = model.zero_grads();
        let batch = sched_h.batch(step);
        let w = 1.0 / batch.len() as f64;
        let mut total = accumulate(model, human, batch, w, &mut grads, |i, z| {
            partitioned_objective_grad(&tg[i], z, &vocab, LossKind::Plain)
        })?;
        if lambda > 0.0 {
            let batch = sched_a.batch(step);
            let w = lambda / batch.len() as f64;
            total += accumulate(model, weak, batch, w, &mut grads, |i, z| {
                self_training_grad(z, &pseudo[i])
            })?;
        }
        Ok((total, grads))
    })
}
