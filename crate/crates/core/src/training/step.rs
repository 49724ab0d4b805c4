use std::collections::BTreeMap;

use crate::autograd::{AdamConfig, AdamState, ParamStore, Tape, Tensor};
use crate::corpus::PatchGrid;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::models::{ModelState, PatchNet, RestoreNet};
use crate::mosaic::MosaicSample;

use super::checkpoint::{Checkpoint, OptimGroup, RngState};
use super::config::{Objective, TrainMode, TrainRun};
use super::loss::{
    batch_segments, bce_with_logits, hnm_weights, reweighted_loss, reweighted_loss_var, LossRecord, WEIGHT_EPS,
};
use crate::mosaic::psnr_from_mse;

/// One training example: a degraded image, the σ it was degraded with, and
/// the patch grid its loss is measured on.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub sample: MosaicSample,
    pub grid: PatchGrid,
}

/// Gradients of one step, before any optimizer update.
#[derive(Debug)]
pub struct StepGrads {
    pub record: LossRecord,
    /// Aligned with the RestoreNet parameter store.
    pub restore: Vec<Option<Vec<f64>>>,
    /// Aligned with the PatchNet parameter store, already signed for a
    /// descent step.
    pub patch: Option<Vec<Option<Vec<f64>>>>,
    /// No patch carried weight: nothing to learn from this batch.
    pub skipped: bool,
    /// The trainability sum fell to the ε guard.
    pub guarded: bool,
}

/// Models, optimizer state and counters of a run in progress.
pub struct Trainer {
    pub run: TrainRun,
    pub restore: RestoreNet,
    pub patch: Option<PatchNet>,
    pub adam_restore: AdamState,
    pub adam_patch: Option<AdamState>,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
}

impl Trainer {
    pub fn new(run: TrainRun) -> Result<Self> {
        run.validate()?;
        let restore = RestoreNet::build(run.restore_config(), run.seed)?;
        let patch = match run.mode {
            TrainMode::PatchNet => Some(PatchNet::build(run.patchnet_config()?, run.seed)?),
            _ => None,
        };
        let adam_restore = AdamState::new(restore.params(), AdamConfig::default());
        let adam_patch = patch
            .as_ref()
            .map(|p| AdamState::new(p.params(), AdamConfig::default()));
        Ok(Trainer {
            run,
            restore,
            patch,
            adam_restore,
            adam_patch,
            epoch: 0,
            step: 0,
        })
    }

    /// Gradients and loss record of one batch at the given epoch (0-based),
    /// without touching any parameter. BN running statistics of PatchNet
    /// do advance.
    pub fn step_grads(&mut self, batch: &[TrainItem], epoch: usize) -> Result<StepGrads> {
        if batch.is_empty() {
            return Err(Error::Usage("empty batch".into()));
        }
        let pattern = batch[0].sample.pattern;
        if batch.iter().any(|b| b.sample.pattern != pattern) {
            return Err(Error::config("a batch must share one Bayer pattern"));
        }
        let raws: Vec<_> = batch.iter().map(|b| &b.sample.noisy_raw).collect();
        let sigmas: Vec<f64> = batch.iter().map(|b| b.sample.sigma).collect();
        let gts: Vec<&Image> = batch.iter().map(|b| &b.sample.ground_truth).collect();
        let grids: Vec<PatchGrid> = batch.iter().map(|b| b.grid).collect();
        let (target, segments, num_patches) = batch_segments(&gts, &grids)?;
        let mask: Vec<f64> = grids
            .iter()
            .flat_map(|g| g.valid_mask())
            .map(|v| if v { 1.0 } else { 0.0 })
            .collect();

        let mut tape = Tape::new();
        let input = tape.constant(self.restore.input_tensor(&raws, &sigmas, pattern)?);
        let (pred, rbinder) = self.restore.forward(&mut tape, input, true)?;
        let losses = tape.segment_mse(pred, target.clone(), segments.clone(), num_patches)?;
        let mask_var = tape.constant(Tensor::new(vec![num_patches], mask.clone())?);

        let mut bce = None;
        let mut pbinder = None;
        let t_var = match self.run.mode {
            TrainMode::Uniform => mask_var,
            TrainMode::Hnm => {
                let psnr = patch_psnr(tape.value(pred).data(), &target, &segments, num_patches);
                let threshold = self.threshold(epoch)?;
                let w: Vec<f64> = hnm_weights(&psnr, threshold)
                    .iter()
                    .zip(&mask)
                    .map(|(a, b)| a * b)
                    .collect();
                tape.constant(Tensor::new(vec![num_patches], w)?)
            }
            TrainMode::PatchNet => {
                let threshold = if self.run.objective == Objective::Regress {
                    Some(self.threshold(epoch)?)
                } else {
                    None
                };
                let patch = self
                    .patch
                    .as_mut()
                    .ok_or_else(|| Error::Internal("patchnet mode without a PatchNet".into()))?;
                let src = if self.run.detach_input { tape.detach(pred) } else { pred };
                let pads: Vec<[usize; 4]> = grids
                    .iter()
                    .map(|g| [g.pad_top, g.pad_bottom, g.pad_left, g.pad_right])
                    .collect();
                let padded = tape.pad2d_each(src, &pads)?;
                let (out, binder) = patch.forward(&mut tape, padded, false, true, true)?;
                pbinder = Some(binder);
                if out.grid_h * out.grid_w * batch.len() != num_patches {
                    return Err(Error::Internal("patch grid and PatchNet map disagree".into()));
                }
                let t = tape.reshape(out.t, vec![num_patches])?;
                let t = tape.mul(t, mask_var)?;
                if let Some(threshold) = threshold {
                    let psnr = patch_psnr(tape.value(pred).data(), &target, &segments, num_patches);
                    let labels = hnm_weights(&psnr, threshold);
                    let logits = tape.reshape(out.logits, vec![num_patches])?;
                    bce = Some(bce_with_logits(&mut tape, logits, &labels, &mask)?);
                    tape.detach(t)
                } else {
                    t
                }
            }
        };

        let mut record = reweighted_loss(tape.value(losses).data(), tape.value(t_var).data(), WEIGHT_EPS)
            .map_err(|e| Error::NonFinite(format!("step {}: {e}", self.step)))?;
        record.step = self.step;
        let t_sum: f64 = record.t.iter().sum();
        let skipped = self.run.mode == TrainMode::Hnm && t_sum == 0.0;
        let guarded = self.run.mode == TrainMode::PatchNet && t_sum <= WEIGHT_EPS;

        let total = reweighted_loss_var(&mut tape, losses, t_var, WEIGHT_EPS)?;
        let objective = match bce {
            Some(b) => tape.add(total, b)?,
            None => total,
        };
        let mut grads = tape.backward(objective)?;
        let restore = rbinder.grads(&mut grads);
        let patch = pbinder.map(|b| {
            let mut g = b.grads(&mut grads);
            if self.run.objective == Objective::Max {
                for v in g.iter_mut().flatten() {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            g
        });
        Ok(StepGrads {
            record,
            restore,
            patch,
            skipped,
            guarded,
        })
    }

    /// Full step: gradients, then Adam on both networks at learning rate `lr`.
    pub fn train_step(&mut self, batch: &[TrainItem], epoch: usize, lr: f64) -> Result<StepGrads> {
        let sg = self.step_grads(batch, epoch)?;
        if !sg.record.total.is_finite() {
            return Err(Error::NonFinite(format!("loss at step {}", self.step)));
        }
        if !sg.skipped {
            self.adam_restore.step(self.restore.params_mut(), &sg.restore, lr)?;
            if let (Some(p), Some(adam), Some(g)) = (self.patch.as_mut(), self.adam_patch.as_mut(), &sg.patch) {
                adam.step(p.params_mut(), g, lr * self.run.patchnet_lr_scale)?;
            }
        }
        self.step += 1;
        Ok(sg)
    }

    /// HNM threshold in dB at a 0-based epoch.
    pub fn threshold(&self, epoch: usize) -> Result<f64> {
        let h = self
            .run
            .hnm
            .ok_or_else(|| Error::config("this mode needs an HNM threshold"))?;
        let last = self.run.epochs.saturating_sub(1);
        super::loss::hnm_threshold(epoch.min(last), h.start_db, h.end_db, last)
    }

    /// Rounds every piece of persistent state to f32 so that a run resumed
    /// from a checkpoint continues exactly like the uninterrupted one.
    pub fn round_state(&mut self) {
        self.restore.round_to_f32();
        self.adam_restore.round_to_f32();
        if let Some(p) = self.patch.as_mut() {
            p.round_to_f32();
        }
        if let Some(a) = self.adam_patch.as_mut() {
            a.round_to_f32();
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut tensors = self.restore.state_tensors();
        let mut optim = vec![optim_group(
            RestoreNet::PREFIX,
            self.restore.params(),
            &self.adam_restore,
        )];
        if let (Some(p), Some(a)) = (&self.patch, &self.adam_patch) {
            tensors.extend(p.state_tensors());
            optim.push(optim_group(PatchNet::PREFIX, p.params(), a));
        }
        Checkpoint {
            config: self.run.to_text(),
            tensors,
            optim,
            rng: RngState {
                seed: self.run.seed,
                epoch: self.epoch as u64,
                step: self.step,
            },
        }
    }

    /// Rebuilds a trainer from a checkpoint, optionally under a different
    /// run (fine-tuning in another mode). Model topology must match.
    pub fn from_checkpoint(ckpt: &Checkpoint, run: Option<TrainRun>) -> Result<Self> {
        let saved = TrainRun::parse(&ckpt.config)?;
        let same_run = run.is_none();
        let run = run.unwrap_or(saved.clone());
        if run.restore_config() != saved.restore_config() {
            return Err(Error::config("RestoreNet topology differs from the checkpoint"));
        }
        let mut t = Trainer::new(run)?;
        t.restore.load_state(&ckpt.tensors)?;
        load_optim(ckpt, RestoreNet::PREFIX, t.restore.params(), &mut t.adam_restore)?;
        if let (Some(p), Some(a)) = (t.patch.as_mut(), t.adam_patch.as_mut()) {
            if ckpt.has_prefix(&format!("{}.", PatchNet::PREFIX)) {
                p.load_state(&ckpt.tensors)?;
                load_optim(ckpt, PatchNet::PREFIX, p.params(), a)?;
            }
        }
        if same_run {
            t.epoch = ckpt.rng.epoch as usize;
            t.step = ckpt.rng.step;
        }
        Ok(t)
    }
}

fn optim_group(name: &str, params: &ParamStore, adam: &AdamState) -> OptimGroup {
    let table = |bufs: &[Vec<f64>]| -> BTreeMap<String, Tensor> {
        params
            .iter()
            .zip(bufs)
            .map(|(p, b)| {
                (
                    p.name.clone(),
                    Tensor::new(p.value.shape().to_vec(), b.clone()).expect("moment matches parameter"),
                )
            })
            .collect()
    };
    OptimGroup {
        name: name.to_string(),
        step: adam.step,
        beta1: adam.config.beta1,
        beta2: adam.config.beta2,
        eps: adam.config.eps,
        first_moments: table(&adam.m),
        second_moments: table(&adam.v),
    }
}

fn load_optim(ckpt: &Checkpoint, name: &str, params: &ParamStore, adam: &mut AdamState) -> Result<()> {
    let g = ckpt
        .optim
        .iter()
        .find(|g| g.name == name)
        .ok_or_else(|| Error::config(format!("checkpoint lacks optimizer state for {name}")))?;
    adam.step = g.step;
    adam.config = AdamConfig {
        beta1: g.beta1,
        beta2: g.beta2,
        eps: g.eps,
    };
    for (i, p) in params.iter().enumerate() {
        let fetch = |table: &BTreeMap<String, Tensor>| -> Result<Vec<f64>> {
            let t = table
                .get(&p.name)
                .ok_or_else(|| Error::config(format!("optimizer state lacks {}", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(Error::shape(format!("optimizer state for {} has wrong shape", p.name)));
            }
            Ok(t.data().to_vec())
        };
        adam.m[i] = fetch(&g.first_moments)?;
        adam.v[i] = fetch(&g.second_moments)?;
    }
    Ok(())
}

/// Clamped PSNR per segment of a flat prediction.
fn patch_psnr(pred: &[f64], target: &[f64], segments: &[u32], n: usize) -> Vec<f64> {
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for ((&p, &t), &s) in pred.iter().zip(target).zip(segments) {
        let d = p.clamp(0.0, 1.0) - t.clamp(0.0, 1.0);
        sums[s as usize] += d * d;
        counts[s as usize] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| psnr_from_mse(if c > 0 { s / c as f64 } else { 0.0 }, 1.0))
        .collect()
}
