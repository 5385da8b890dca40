//! The two training stages, with per-step metrics and resumable checkpoints.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{LrSchedule, Stage1Config, Stage2Config};
use super::losses::{
    align_objective, dfr_objective, dir_objective, latent_shape, AlignBindings, AlignVariant, DirWeights,
    GraphLoss, LossNoise, LossPart, LossReport, PartValue,
};
use crate::autograd::{Graph, Tensor};
use crate::corpus::LabeledImage;
use crate::error::{Error, Result};
use crate::isp::{degrade_random, make_pair, ImageRgb};
use crate::networks::{load_checkpoint, save_checkpoint, ModelBundle, ModelConfig, NetId, OptimizerState, TrainingState};
use crate::nn::{Adam, Bound};

pub const STAGE1_CKPT: &str = "stage1.ckpt";
pub const STAGE2_CKPT: &str = "stage2.ckpt";
pub const STAGE1_METRICS: &str = "metrics_stage1.csv";
pub const STAGE2_METRICS: &str = "metrics_stage2.csv";

/// Networks held fixed during the second stage.
pub const FROZEN_IN_STAGE2: [NetId; 3] = [NetId::DirEncoder, NetId::DfrEncoder, NetId::Decoder];

const PRETRAIN_TAG: &str = "task_pretrain";

const METRICS_HEADER: [&str; 13] = [
    "epoch",
    "step",
    "loss",
    "loss_total",
    "mi_x1",
    "mi_x2",
    "mi_y",
    "d_akl",
    "prior_kl",
    "recon",
    "latent_l1",
    "task",
    "lr",
];

#[derive(Debug, Serialize)]
struct MetricsRow<'a> {
    epoch: usize,
    step: usize,
    loss: &'a str,
    loss_total: f64,
    mi_x1: Option<f64>,
    mi_x2: Option<f64>,
    mi_y: Option<f64>,
    d_akl: Option<f64>,
    prior_kl: Option<f64>,
    recon: Option<f64>,
    latent_l1: Option<f64>,
    task: Option<f64>,
    lr: f64,
}

/// Step-level CSV log. Resuming keeps only rows of completed epochs.
pub struct MetricsLog {
    writer: csv::Writer<File>,
}

impl MetricsLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        writer.write_record(METRICS_HEADER)?;
        Ok(Self { writer })
    }

    fn resume(path: &Path, epochs_done: usize) -> Result<Self> {
        let mut kept = Vec::new();
        if path.exists() {
            let mut reader = csv::Reader::from_path(path)?;
            for rec in reader.records() {
                let rec = rec?;
                let epoch: usize = rec[0].parse().map_err(|_| Error::Input(format!("bad epoch in {}", path.display())))?;
                if epoch < epochs_done || &rec[2] == PRETRAIN_TAG {
                    kept.push(rec);
                }
            }
        }
        let mut log = Self::create(path)?;
        for rec in &kept {
            log.writer.write_record(rec)?;
        }
        Ok(log)
    }

    fn open(path: &Path, resume: bool, epochs_done: usize) -> Result<Self> {
        if resume {
            Self::resume(path, epochs_done)
        } else {
            Self::create(path)
        }
    }

    fn log(&mut self, epoch: usize, step: usize, loss: &str, report: &LossReport, lr: f64) -> Result<()> {
        let get = |p| report.get(p);
        self.writer.serialize(MetricsRow {
            epoch,
            step,
            loss,
            loss_total: report.total,
            mi_x1: get(LossPart::MiX1),
            mi_x2: get(LossPart::MiX2),
            mi_y: get(LossPart::MiY),
            d_akl: get(LossPart::DAkl),
            prior_kl: get(LossPart::PriorKl),
            recon: get(LossPart::Recon),
            latent_l1: get(LossPart::LatentL1),
            task: get(LossPart::Task),
            lr,
        })?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io("metrics", e))
    }
}

/// Result of a training stage.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub bundle: ModelBundle,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub epochs_done: usize,
    pub step: usize,
}

struct Optimizers(BTreeMap<NetId, Adam>);

impl Optimizers {
    fn new() -> Self {
        Self(BTreeMap::new())
    }

    fn from_state(state: &TrainingState) -> Self {
        Self(state.optimizers.iter().map(|o| (o.net, o.adam.clone())).collect())
    }

    fn to_state(&self) -> Vec<OptimizerState> {
        self.0
            .iter()
            .map(|(net, adam)| OptimizerState {
                net: *net,
                adam: adam.clone(),
            })
            .collect()
    }
}

enum StepInput<'a> {
    Dir {
        x1: &'a Tensor,
        x2: &'a Tensor,
        weights: DirWeights,
        noise: &'a LossNoise,
    },
    Dfr {
        y: &'a Tensor,
        beta_star: f64,
        noise: &'a LossNoise,
    },
    Align {
        variant: AlignVariant,
        x: &'a Tensor,
        y: &'a Tensor,
        labels: &'a [usize],
        gamma1: f64,
        gamma2: f64,
    },
    Task {
        x: &'a Tensor,
        labels: &'a [usize],
    },
}

impl StepInput<'_> {
    fn trainable(&self) -> Vec<NetId> {
        match self {
            StepInput::Dir { .. } => vec![NetId::DirEncoder, NetId::Critic],
            StepInput::Dfr { .. } => vec![NetId::DfrEncoder, NetId::Decoder, NetId::DfrCritic],
            StepInput::Align { variant, gamma1, .. } => {
                let mut nets = vec![variant.net()];
                if *variant == AlignVariant::WithPilot && *gamma1 > 0.0 {
                    nets.push(NetId::TaskHead);
                }
                nets
            }
            StepInput::Task { .. } => vec![NetId::TaskHead],
        }
    }

    fn build<'g>(&self, g: &'g Graph, bundle: &ModelBundle, b: &[Bound<'g>]) -> Result<GraphLoss<'g>> {
        let p = |n: NetId| &b[n as usize];
        match *self {
            StepInput::Dir {
                x1,
                x2,
                weights,
                noise,
            } => dir_objective(g, bundle, p(NetId::DirEncoder), p(NetId::Critic), x1, x2, weights, noise),
            StepInput::Dfr { y, beta_star, noise } => dfr_objective(
                g,
                bundle,
                p(NetId::DfrEncoder),
                p(NetId::Decoder),
                p(NetId::DfrCritic),
                y,
                beta_star,
                noise,
            ),
            StepInput::Align {
                variant,
                x,
                y,
                labels,
                gamma1,
                gamma2,
            } => {
                let bind = AlignBindings {
                    dir_encoder: p(NetId::DirEncoder),
                    dfr_encoder: p(NetId::DfrEncoder),
                    decoder: p(NetId::Decoder),
                    alignment: p(variant.net()),
                    task_head: p(NetId::TaskHead),
                };
                align_objective(g, bundle, &bind, variant, x, y, labels, gamma1, gamma2)
            }
            StepInput::Task { x, labels } => {
                let logits = bundle.task_head.forward(p(NetId::TaskHead), g.constant(x.clone()));
                let ce = logits.cross_entropy(labels);
                Ok(GraphLoss {
                    report: LossReport {
                        total: ce.item(),
                        parts: vec![PartValue {
                            part: LossPart::Task,
                            value: ce.item(),
                            weight: 1.0,
                        }],
                    },
                    total: ce,
                })
            }
        }
    }
}

/// One gradient step on the networks the input trains.
fn run_step(
    bundle: &mut ModelBundle,
    opts: &mut Optimizers,
    input: &StepInput<'_>,
    lr: f64,
    epoch: usize,
    step: usize,
) -> Result<LossReport> {
    let nets = input.trainable();
    let g = Graph::new();
    let bound: Vec<Bound<'_>> = NetId::ALL
        .iter()
        .map(|n| bundle.params(*n).bind(&g, nets.contains(n)))
        .collect();
    let loss = input.build(&g, bundle, &bound)?;
    if let Some(part) = loss.report.non_finite_part() {
        return Err(Error::NonFinite { part, epoch, step });
    }
    let mut grads = g.backward(loss.total);
    let per_net: Vec<Vec<Tensor>> = nets.iter().map(|n| bound[*n as usize].grads(&mut grads)).collect();
    drop(bound);
    for (net, gr) in nets.iter().zip(&per_net) {
        let ps = bundle.params_mut(*net)?;
        let adam = opts.0.entry(*net).or_insert_with(|| Adam::new(ps));
        adam.update(ps, gr, lr);
    }
    Ok(loss.report)
}

/// Fixed per-epoch stream so a resumed run replays the same draws.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

fn batch_refs(images: &[&ImageRgb]) -> Result<Tensor> {
    ImageRgb::batch(images)
}

fn check_images(images: &[&ImageRgb]) -> Result<()> {
    let first = images
        .first()
        .ok_or_else(|| Error::Input("training corpus is empty".into()))?;
    if images.iter().any(|im| (im.height(), im.width()) != (first.height(), first.width())) {
        return Err(Error::Input("training images must share one size".into()));
    }
    Ok(())
}

fn save(path: &Path, bundle: &ModelBundle, stage: u8, epochs_done: usize, step: usize, cfg: serde_json::Value, opts: &Optimizers) -> Result<()> {
    save_checkpoint(
        path,
        bundle,
        &TrainingState {
            stage,
            epochs_done,
            step,
            training_config: cfg,
            optimizers: opts.to_state(),
        },
    )
}

fn load_resume(path: &Path, stage: u8) -> Result<(ModelBundle, TrainingState)> {
    if !path.exists() {
        return Err(Error::Input(format!(
            "cannot resume: no checkpoint at {} (run without --resume to start fresh)",
            path.display()
        )));
    }
    let (bundle, state) = load_checkpoint(path)?;
    if state.stage != stage {
        return Err(Error::Checkpoint(format!(
            "{} holds a stage-{} checkpoint, expected stage {stage}",
            path.display(),
            state.stage
        )));
    }
    Ok((bundle, state))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Stage I: per batch of clean images, degrade each twice and take one step
/// on the two-view objective and one on the degradation-free objective.
pub fn train_stage1(
    images: &[&ImageRgb],
    model: &ModelConfig,
    cfg: &Stage1Config,
    out_dir: &Path,
    resume: bool,
) -> Result<StageOutput> {
    cfg.validate()?;
    check_images(images)?;
    ensure_dir(out_dir)?;
    let ckpt = out_dir.join(STAGE1_CKPT);
    let metrics = out_dir.join(STAGE1_METRICS);
    let (mut bundle, mut opts, start, mut step) = if resume {
        let (bundle, state) = load_resume(&ckpt, 1)?;
        (bundle, Optimizers::from_state(&state), state.epochs_done, state.step)
    } else {
        (ModelBundle::new(model)?, Optimizers::new(), 0, 0)
    };
    let mut log = MetricsLog::open(&metrics, resume, start)?;
    let profile = cfg.profile()?;
    let schedule = cfg.schedule();
    let weights = DirWeights {
        lambda: cfg.lambda_weight,
        beta: cfg.beta_weight,
    };
    let cfg_json = serde_json::to_value(cfg)?;
    let bs = cfg.batch_size.min(images.len());
    for epoch in start..cfg.max_epochs {
        let t0 = Instant::now();
        let lr = schedule.at(epoch);
        let mut rng = epoch_rng(cfg.seed, epoch);
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(&mut rng);
        let (mut sum_dir, mut sum_dfr, mut n_batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(bs) {
            if chunk.len() < 2 {
                continue;
            }
            let clean: Vec<&ImageRgb> = chunk.iter().map(|&i| images[i]).collect();
            let (mut v1, mut v2) = (Vec::with_capacity(bs), Vec::with_capacity(bs));
            for c in &clean {
                let (a, b) = make_pair(c, &profile, &mut rng)?;
                v1.push(a.image);
                v2.push(b.image);
            }
            let x1 = batch_refs(&v1.iter().collect::<Vec<_>>())?;
            let x2 = batch_refs(&v2.iter().collect::<Vec<_>>())?;
            let y = batch_refs(&clean)?;
            let shape = latent_shape(&bundle, &y)?;
            let noise = LossNoise::draw(&shape, &mut rng)?;
            let input = StepInput::Dir {
                x1: &x1,
                x2: &x2,
                weights,
                noise: &noise,
            };
            let dir = run_step(&mut bundle, &mut opts, &input, lr, epoch, step)?;
            log.log(epoch, step, "dir", &dir, lr)?;
            let noise = LossNoise::draw(&shape, &mut rng)?;
            let input = StepInput::Dfr {
                y: &y,
                beta_star: cfg.beta_star,
                noise: &noise,
            };
            let dfr = run_step(&mut bundle, &mut opts, &input, lr, epoch, step)?;
            log.log(epoch, step, "dfr", &dfr, lr)?;
            sum_dir += dir.total;
            sum_dfr += dfr.total;
            n_batches += 1;
            step += 1;
        }
        log.flush()?;
        save(&ckpt, &bundle, 1, epoch + 1, step, cfg_json.clone(), &opts)?;
        let nb = n_batches.max(1) as f64;
        log::info!(
            "stage 1 epoch {}/{}: dir {:.4} dfr {:.4} lr {lr:e} ({:.1}s)",
            epoch + 1,
            cfg.max_epochs,
            sum_dir / nb,
            sum_dfr / nb,
            t0.elapsed().as_secs_f64()
        );
    }
    if start >= cfg.max_epochs || !ckpt.exists() {
        save(&ckpt, &bundle, 1, start.max(cfg.max_epochs), step, cfg_json, &opts)?;
    }
    Ok(StageOutput {
        bundle,
        checkpoint: ckpt,
        metrics,
        epochs_done: cfg.max_epochs.max(start),
        step,
    })
}

fn frozen_checksums(bundle: &ModelBundle) -> BTreeMap<NetId, String> {
    FROZEN_IN_STAGE2.iter().map(|n| (*n, bundle.params(*n).checksum())).collect()
}

fn verify_frozen(bundle: &ModelBundle, expected: &BTreeMap<NetId, String>) -> Result<()> {
    for (net, sum) in expected {
        if bundle.params(*net).checksum() != *sum {
            return Err(Error::FrozenViolation(net.to_string()));
        }
    }
    Ok(())
}

/// Supervised epochs of the task head on clean images.
fn pretrain_task_head(
    bundle: &mut ModelBundle,
    opts: &mut Optimizers,
    samples: &[&LabeledImage],
    cfg: &Stage2Config,
    log: &mut MetricsLog,
) -> Result<()> {
    let bs = cfg.batch_size.min(samples.len());
    for epoch in 0..cfg.task_pretrain_epochs {
        let mut rng = epoch_rng(cfg.seed ^ 0x7a5c, epoch);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (i, chunk) in order.chunks(bs).enumerate() {
            let imgs: Vec<&ImageRgb> = chunk.iter().map(|&i| &samples[i].image).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| samples[i].label).collect();
            let x = batch_refs(&imgs)?;
            let rep = run_step(bundle, opts, &StepInput::Task { x: &x, labels: &labels }, cfg.task_lr, epoch, i)?;
            log.log(epoch, i, PRETRAIN_TAG, &rep, cfg.task_lr)?;
            total += rep.total;
        }
        log::info!(
            "task head pretraining epoch {}/{}: ce {:.4}",
            epoch + 1,
            cfg.task_pretrain_epochs,
            total / order.chunks(bs).len() as f64
        );
    }
    // A fresh optimizer for the alignment phase.
    opts.0.remove(&NetId::TaskHead);
    Ok(())
}

fn check_labels(samples: &[&LabeledImage], n_classes: usize) -> Result<()> {
    if let Some(s) = samples.iter().find(|s| s.label >= n_classes) {
        return Err(Error::Input(format!(
            "sample {} has label {} but the model has {n_classes} classes",
            s.id, s.label
        )));
    }
    Ok(())
}

/// Stage II: with the Stage-I networks frozen, trains the alignment network
/// (and the task head when `gamma1 > 0`) on freshly degraded views.
pub fn train_stage2(
    samples: &[&LabeledImage],
    stage1_ckpt: &Path,
    cfg: &Stage2Config,
    out_dir: &Path,
    resume: bool,
) -> Result<StageOutput> {
    cfg.validate()?;
    let images: Vec<&ImageRgb> = samples.iter().map(|s| &s.image).collect();
    check_images(&images)?;
    if !stage1_ckpt.exists() {
        return Err(Error::Input(format!(
            "stage-1 checkpoint {} not found (run `train --stage 1` first or set stage1_checkpoint)",
            stage1_ckpt.display()
        )));
    }
    ensure_dir(out_dir)?;
    let (stage1, _) = load_checkpoint(stage1_ckpt)?;
    let expected = frozen_checksums(&stage1);
    check_labels(samples, stage1.config.n_classes)?;
    let ckpt = out_dir.join(STAGE2_CKPT);
    let metrics = out_dir.join(STAGE2_METRICS);
    let cfg_json = serde_json::to_value(cfg)?;
    let (mut bundle, mut opts, start, mut step, mut log) = if resume {
        let (bundle, state) = load_resume(&ckpt, 2)?;
        verify_frozen(&bundle, &expected)?;
        let log = MetricsLog::open(&metrics, true, state.epochs_done)?;
        (bundle, Optimizers::from_state(&state), state.epochs_done, state.step, log)
    } else {
        let mut bundle = stage1;
        let names: Vec<&str> = FROZEN_IN_STAGE2.iter().map(|n| n.as_str()).collect();
        bundle.freeze(&names)?;
        let mut opts = Optimizers::new();
        let mut log = MetricsLog::create(&metrics)?;
        if cfg.gamma1 > 0.0 && cfg.task_pretrain_epochs > 0 {
            pretrain_task_head(&mut bundle, &mut opts, samples, cfg, &mut log)?;
        }
        save(&ckpt, &bundle, 2, 0, 0, cfg_json.clone(), &opts)?;
        (bundle, opts, 0, 0, log)
    };
    let profile = cfg.profile()?;
    let schedule: LrSchedule = cfg.schedule();
    let bs = cfg.batch_size.min(samples.len());
    for epoch in start..cfg.max_epochs {
        let t0 = Instant::now();
        let lr = schedule.at(epoch);
        let mut rng = epoch_rng(cfg.seed, epoch);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(bs) {
            let mut views = Vec::with_capacity(chunk.len());
            for &i in chunk {
                views.push(degrade_random(&samples[i].image, &profile, &mut rng)?.image);
            }
            let x = batch_refs(&views.iter().collect::<Vec<_>>())?;
            let y = batch_refs(&chunk.iter().map(|&i| &samples[i].image).collect::<Vec<_>>())?;
            let labels: Vec<usize> = chunk.iter().map(|&i| samples[i].label).collect();
            let mut input = StepInput::Align {
                variant: AlignVariant::WithPilot,
                x: &x,
                y: &y,
                labels: &labels,
                gamma1: cfg.gamma1,
                gamma2: cfg.gamma2,
            };
            let rep = run_step(&mut bundle, &mut opts, &input, lr, epoch, step)?;
            log.log(epoch, step, "align", &rep, lr)?;
            sum += rep.total;
            if cfg.train_no_pilot {
                if let StepInput::Align { variant, .. } = &mut input {
                    *variant = AlignVariant::ZeroPilot;
                }
                let rep = run_step(&mut bundle, &mut opts, &input, lr, epoch, step)?;
                log.log(epoch, step, "align_no_pilot", &rep, lr)?;
            }
            n_batches += 1;
            step += 1;
        }
        log.flush()?;
        verify_frozen(&bundle, &expected)?;
        save(&ckpt, &bundle, 2, epoch + 1, step, cfg_json.clone(), &opts)?;
        log::info!(
            "stage 2 epoch {}/{}: align {:.4} lr {lr:e} ({:.1}s)",
            epoch + 1,
            cfg.max_epochs,
            sum / n_batches.max(1) as f64,
            t0.elapsed().as_secs_f64()
        );
    }
    verify_frozen(&bundle, &expected)?;
    Ok(StageOutput {
        bundle,
        checkpoint: ckpt,
        metrics,
        epochs_done: cfg.max_epochs.max(start),
        step,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::gen_toy_corpus_sized;
    use crate::training::gradcheck::{miniature_config, MINI_SIZE};

    fn corpus(n: usize) -> Vec<LabeledImage> {
        gen_toy_corpus_sized(n, 3, MINI_SIZE, 4)
            .unwrap()
            .into_iter()
            .map(|s| LabeledImage {
                id: s.id,
                label: s.label,
                image: s.clean,
            })
            .collect()
    }

    fn s1cfg(epochs: usize) -> Stage1Config {
        Stage1Config {
            max_epochs: epochs,
            batch_size: 4,
            lr_initial: 1e-3,
            lr_final: 1e-4,
            lr_drop_epoch: 1,
            seed: 9,
            ..Stage1Config::default()
        }
    }

    fn run1(dir: &Path, epochs: usize, resume: bool) -> StageOutput {
        let c = corpus(10);
        let imgs: Vec<&ImageRgb> = c.iter().map(|s| &s.image).collect();
        train_stage1(&imgs, &miniature_config(2), &s1cfg(epochs), dir, resume).unwrap()
    }

    fn read(p: &Path) -> String {
        std::fs::read_to_string(p).unwrap()
    }

    #[test]
    fn stage1_logs_both_losses_every_step() {
        let dir = tempfile::tempdir().unwrap();
        let out = run1(dir.path(), 2, false);
        let text = read(&out.metrics);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER.join(","));
        // Batches of 4, 4 and 2 per epoch.
        assert_eq!(out.step, 6);
        assert_eq!(lines.len(), 1 + 2 * 6);
        assert!(lines[1].contains(",dir,") && lines[2].contains(",dfr,"));
        assert!(lines.last().unwrap().ends_with(",0.0001"));
        assert!(NetId::ALL.iter().all(|n| !out.bundle.is_frozen(*n)));
    }

    #[test]
    fn stage1_is_deterministic_and_resumes_exactly() {
        let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let full = run1(a.path(), 2, false);
        let again = run1(b.path(), 2, false);
        assert_eq!(read(&full.metrics), read(&again.metrics));
        run1(c.path(), 1, false);
        let resumed = run1(c.path(), 2, true);
        assert_eq!(resumed.epochs_done, 2);
        assert_eq!(read(&full.metrics), read(&resumed.metrics));
        for n in NetId::ALL {
            assert_eq!(full.bundle.params(n).checksum(), resumed.bundle.params(n).checksum(), "{n}");
        }
    }

    #[test]
    fn resume_without_checkpoint_is_an_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus(4);
        let imgs: Vec<&ImageRgb> = c.iter().map(|s| &s.image).collect();
        let err = train_stage1(&imgs, &miniature_config(2), &s1cfg(1), dir.path(), true).unwrap_err();
        assert_eq!(err.kind(), "input");
    }

    fn s2cfg(epochs: usize) -> Stage2Config {
        Stage2Config {
            max_epochs: epochs,
            batch_size: 4,
            seed: 1,
            train_no_pilot: true,
            task_pretrain_epochs: 1,
            ..Stage2Config::classification()
        }
    }

    #[test]
    fn stage2_keeps_frozen_networks_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let s1 = run1(&dir.path().join("s1"), 1, false);
        let c = corpus(8);
        let refs: Vec<&LabeledImage> = c.iter().collect();
        let out = train_stage2(&refs, &s1.checkpoint, &s2cfg(2), &dir.path().join("s2"), false).unwrap();
        for n in FROZEN_IN_STAGE2 {
            assert!(out.bundle.is_frozen(n));
            assert_eq!(out.bundle.params(n).checksum(), s1.bundle.params(n).checksum());
        }
        for n in [NetId::Alignment, NetId::AlignmentNoPilot, NetId::TaskHead] {
            assert_ne!(out.bundle.params(n).checksum(), s1.bundle.params(n).checksum(), "{n}");
        }
        let text = read(&out.metrics);
        assert!(text.contains(",task_pretrain,"));
        assert_eq!(text.matches(",align,").count(), 4);
        assert_eq!(text.matches(",align_no_pilot,").count(), 4);
    }

    #[test]
    fn stage2_resume_matches_a_straight_run() {
        let dir = tempfile::tempdir().unwrap();
        let s1 = run1(&dir.path().join("s1"), 1, false);
        let c = corpus(8);
        let refs: Vec<&LabeledImage> = c.iter().collect();
        let full = train_stage2(&refs, &s1.checkpoint, &s2cfg(2), &dir.path().join("a"), false).unwrap();
        train_stage2(&refs, &s1.checkpoint, &s2cfg(1), &dir.path().join("b"), false).unwrap();
        let resumed = train_stage2(&refs, &s1.checkpoint, &s2cfg(2), &dir.path().join("b"), true).unwrap();
        assert_eq!(read(&full.metrics), read(&resumed.metrics));
        assert_eq!(
            full.bundle.params(NetId::Alignment).checksum(),
            resumed.bundle.params(NetId::Alignment).checksum()
        );
    }

    #[test]
    fn stage2_without_stage1_checkpoint_names_the_remedy() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus(4);
        let refs: Vec<&LabeledImage> = c.iter().collect();
        let err = train_stage2(&refs, &dir.path().join("missing.ckpt"), &s2cfg(1), dir.path(), false).unwrap_err();
        assert_eq!(err.kind(), "input");
        assert!(err.to_string().contains("--stage 1"));
    }

    #[test]
    fn drifted_frozen_weights_are_detected() {
        let mut b = ModelBundle::new(&miniature_config(0)).unwrap();
        let sums = frozen_checksums(&b);
        verify_frozen(&b, &sums).unwrap();
        b.params_mut_unchecked(NetId::Decoder).params_mut()[0].value.data_mut()[0] += 1e-12;
        assert_eq!(verify_frozen(&b, &sums).unwrap_err().kind(), "frozen_violation");
    }

    #[test]
    fn non_finite_loss_names_the_part() {
        let mut b = ModelBundle::new(&miniature_config(0)).unwrap();
        b.params_mut(NetId::DfrEncoder).unwrap().params_mut()[0].value.data_mut()[0] = f64::NAN;
        let c = corpus(4);
        let y = ImageRgb::batch(&c.iter().map(|s| &s.image).collect::<Vec<_>>()).unwrap();
        let noise = LossNoise::draw(&latent_shape(&b, &y).unwrap(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let input = StepInput::Dfr {
            y: &y,
            beta_star: 1.0,
            noise: &noise,
        };
        let err = run_step(&mut b, &mut Optimizers::new(), &input, 1e-3, 3, 7).unwrap_err();
        match err {
            Error::NonFinite { part, epoch, step } => {
                assert_eq!((epoch, step), (3, 7));
                assert!(["mi_y", "recon", "prior_kl"].contains(&part.as_str()), "{part}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn frozen_sets_refuse_optimizer_updates() {
        let mut b = ModelBundle::new(&miniature_config(0)).unwrap();
        b.freeze(&["dfr_encoder"]).unwrap();
        let c = corpus(4);
        let y = ImageRgb::batch(&c.iter().map(|s| &s.image).collect::<Vec<_>>()).unwrap();
        let noise = LossNoise::draw(&latent_shape(&b, &y).unwrap(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let input = StepInput::Dfr {
            y: &y,
            beta_star: 1.0,
            noise: &noise,
        };
        let err = run_step(&mut b, &mut Optimizers::new(), &input, 1e-3, 0, 0).unwrap_err();
        assert_eq!(err.kind(), "frozen_violation");
    }
}
