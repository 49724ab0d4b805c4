use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::autograd::{cosine_lr, LrSchedule};
use crate::corpus::{make_patch_grid, sample_stream, CorpusManifest, Difficulty};
use crate::error::{Error, Result};
use crate::eval::{degrade_for_eval, EVAL_SEED};
use crate::image::Image;
use crate::mosaic::{psnr, sigma_from_8bit, MosaicSample};
use crate::rng;

use super::step::{TrainItem, Trainer};

pub const METRICS_FILE: &str = "metrics.tsv";
pub const METRICS_HEADER: &str =
    "epoch\tlr\ttrain_loss\tval_psnr_easy_db\tval_psnr_hard_db\tmean_t_easy\tmean_t_hard\tskipped_batches";
pub const LAST_CHECKPOINT: &str = "last.pfck";
pub const ABORT_CHECKPOINT: &str = "abort.pfck";

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}.pfck")
}

/// Images a run trains and validates on, held in memory.
pub struct TrainData {
    /// One list per training source, matched with the run's oversampling.
    pub sources: Vec<Vec<Image>>,
    pub val: Vec<(Image, Difficulty)>,
}

impl TrainData {
    pub fn load(train: &[CorpusManifest], val: &CorpusManifest) -> Result<Self> {
        let sources = train.iter().map(|m| m.load_all()).collect::<Result<Vec<_>>>()?;
        if sources.iter().any(|s| s.is_empty()) {
            return Err(Error::config("empty training manifest"));
        }
        let val = val
            .load_all()?
            .into_iter()
            .zip(val.entries.iter().map(|e| e.label))
            .collect();
        Ok(TrainData { sources, val })
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    /// 1-based index of the completed epoch.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_psnr_easy: f64,
    pub val_psnr_hard: f64,
    pub mean_t_easy: f64,
    pub mean_t_hard: f64,
    pub skipped_batches: usize,
}

impl EpochMetrics {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{:.6e}\t{:.8e}\t{}\t{}\t{}\t{}\t{}",
            self.epoch,
            self.lr,
            self.train_loss,
            fixed(self.val_psnr_easy, 4),
            fixed(self.val_psnr_hard, 4),
            fixed(self.mean_t_easy, 6),
            fixed(self.mean_t_hard, 6),
            self.skipped_batches
        )
    }
}

fn fixed(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else {
        "nan".to_string()
    }
}

/// The degraded items of one epoch, in visiting order. Every random choice
/// is keyed by (seed, epoch, position).
pub fn epoch_items(trainer: &Trainer, data: &TrainData, epoch: usize) -> Result<Vec<TrainItem>> {
    let run = &trainer.run;
    let sizes: Vec<usize> = data.sources.iter().map(Vec::len).collect();
    let oversample = if run.oversample.len() == 1 && sizes.len() > 1 {
        vec![run.oversample[0]; sizes.len()]
    } else {
        run.oversample.clone()
    };
    let order = sample_stream(&sizes, &oversample, run.seed, epoch as u64)?;
    order
        .iter()
        .enumerate()
        .map(|(pos, &(src, idx))| {
            let key = [run.seed, epoch as u64, pos as u64];
            let gt = data.sources[src][idx].clone();
            let mut r = rng::rng_for(&[rng::stream::SIGMA, key[0], key[1], key[2]]);
            let sigma_8bit = if run.sigma_max > run.sigma_min {
                r.gen_range(run.sigma_min..=run.sigma_max)
            } else {
                run.sigma_min
            };
            let noise_seed = rng::derive_seed(&[rng::stream::NOISE, key[0], key[1], key[2]]);
            let grid = make_patch_grid(
                gt.height(),
                gt.width(),
                run.patch_size,
                run.augment,
                rng::derive_seed(&key),
            )?;
            let sample = MosaicSample::degrade(gt, run.pattern, sigma_from_8bit(sigma_8bit), noise_seed)?;
            Ok(TrainItem { sample, grid })
        })
        .collect()
}

/// Validation PSNR (easy, hard) and mean trainability over valid patches
/// (easy, hard); trainabilities are NaN without a PatchNet.
pub fn validate(trainer: &mut Trainer, data: &TrainData) -> Result<(f64, f64, f64, f64)> {
    let sigma = sigma_from_8bit(trainer.run.val_sigma);
    let mut psnr_sum = [0.0; 2];
    let mut psnr_n = [0usize; 2];
    let mut t_sum = [0.0; 2];
    let mut t_n = [0usize; 2];
    for (i, (gt, label)) in data.val.iter().enumerate() {
        let slot = usize::from(*label == Difficulty::Hard);
        let sample = degrade_for_eval(gt.clone(), i, sigma, trainer.run.pattern, EVAL_SEED)?;
        let pred = trainer.restore.restore_sample(&sample, sigma)?;
        psnr_sum[slot] += psnr(&pred, gt)?;
        psnr_n[slot] += 1;
        if let Some(p) = trainer.patch.as_mut() {
            let grid = make_patch_grid(gt.height(), gt.width(), trainer.run.patch_size, false, 0)?;
            let map = p.infer_map(&pred, &grid)?;
            for (t, valid) in map.values.iter().zip(grid.valid_mask()) {
                if valid {
                    t_sum[slot] += t;
                    t_n[slot] += 1;
                }
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
    Ok((
        mean(psnr_sum[0], psnr_n[0]),
        mean(psnr_sum[1], psnr_n[1]),
        mean(t_sum[0], t_n[0]),
        mean(t_sum[1], t_n[1]),
    ))
}

/// Runs the remaining epochs of `trainer`, writing `metrics.tsv` and one
/// checkpoint per epoch under `out`. A non-finite loss saves
/// `abort.pfck` and stops with an error.
pub fn train_loop(trainer: &mut Trainer, data: &TrainData, out: &Path) -> Result<Vec<EpochMetrics>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let sched = LrSchedule::new(trainer.run.base_lr, trainer.run.epochs);
    let mut log = Vec::new();
    while trainer.epoch < trainer.run.epochs {
        let epoch = trainer.epoch;
        let lr = cosine_lr(epoch, &sched)?;
        let items = epoch_items(trainer, data, epoch)?;
        let (mut loss_sum, mut counted, mut skipped) = (0.0, 0usize, 0usize);
        for batch in items.chunks(trainer.run.batch_size) {
            let sg = match trainer.train_step(batch, epoch, lr) {
                Ok(sg) => sg,
                Err(e @ Error::NonFinite(_)) => {
                    trainer.checkpoint().save(&out.join(ABORT_CHECKPOINT))?;
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            if sg.skipped || sg.guarded {
                skipped += 1;
            } else {
                loss_sum += sg.record.total;
                counted += 1;
            }
        }
        trainer.epoch += 1;
        trainer.round_state();
        let (pe, ph, te, th) = validate(trainer, data)?;
        let metrics = EpochMetrics {
            epoch: trainer.epoch,
            lr,
            train_loss: if counted == 0 { 0.0 } else { loss_sum / counted as f64 },
            val_psnr_easy: pe,
            val_psnr_hard: ph,
            mean_t_easy: te,
            mean_t_hard: th,
            skipped_batches: skipped,
        };
        log::info!("{}", metrics.to_line());
        let ckpt = trainer.checkpoint();
        ckpt.save(&out.join(epoch_checkpoint_name(trainer.epoch)))?;
        ckpt.save(&out.join(LAST_CHECKPOINT))?;
        append_metrics(&out.join(METRICS_FILE), &metrics)?;
        log.push(metrics);
    }
    Ok(log)
}

fn append_metrics(path: &PathBuf, m: &EpochMetrics) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(METRICS_HEADER);
        text.push('\n');
    }
    text.push_str(&m.to_line());
    text.push('\n');
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
