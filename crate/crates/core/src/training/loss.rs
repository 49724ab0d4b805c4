use std::rc::Rc;

use crate::autograd::{Tape, Tensor, Var};
use crate::corpus::PatchGrid;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mosaic::psnr_from_mse;

/// Guard added to the trainability sum.
pub const WEIGHT_EPS: f64 = 1e-8;

/// Per-patch losses of one image, row-major over the patch grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchLosses {
    pub values: Vec<f64>,
    /// Patches that take part in training: at most half padding.
    pub valid: Vec<bool>,
}

/// Mean squared error per patch over the non-padded pixels of all three
/// channels. Excluded patches report 0.
pub fn per_patch_loss(pred: &Image, gt: &Image, grid: &PatchGrid) -> Result<PatchLosses> {
    let (sums, counts) = patch_sums(pred, gt, grid, false)?;
    let valid = grid.valid_mask();
    let values = sums
        .iter()
        .zip(&counts)
        .zip(&valid)
        .map(|((&s, &c), &v)| if v && c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    Ok(PatchLosses { values, valid })
}

/// PSNR per patch on clamped values; excluded patches report the cap.
pub fn per_patch_psnr(pred: &Image, gt: &Image, grid: &PatchGrid) -> Result<Vec<f64>> {
    let (sums, counts) = patch_sums(pred, gt, grid, true)?;
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| psnr_from_mse(if c > 0 { s / c as f64 } else { 0.0 }, 1.0))
        .collect())
}

fn patch_sums(pred: &Image, gt: &Image, grid: &PatchGrid, clamp: bool) -> Result<(Vec<f64>, Vec<usize>)> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width())
        || (grid.height, grid.width) != (gt.height(), gt.width())
    {
        return Err(Error::shape("prediction, ground truth and patch grid disagree in size"));
    }
    let ids = grid.segment_ids(0);
    let n = grid.num_patches();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for ((&p, &t), &id) in pred.data().iter().zip(gt.data()).zip(&ids) {
        let d = if clamp {
            p.clamp(0.0, 1.0) - t.clamp(0.0, 1.0)
        } else {
            p - t
        };
        sums[id as usize] += d * d;
        counts[id as usize] += 1;
    }
    Ok((sums, counts))
}

/// Outcome of one reweighted-loss evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub losses: Vec<f64>,
    pub t: Vec<f64>,
    /// `N·t_p / (Σt + ε)`.
    pub weights: Vec<f64>,
    pub total: f64,
    pub step: u64,
}

impl LossRecord {
    pub fn n(&self) -> usize {
        self.losses.len()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `Σ t_p·L_p / (Σt + ε)`: the mean loss with each patch weighted by
/// `N·t_p / (Σt + ε)`.
pub fn reweighted_loss(losses: &[f64], t: &[f64], eps: f64) -> Result<LossRecord> {
    if losses.len() != t.len() || losses.is_empty() {
        return Err(Error::shape(format!(
            "reweighted loss: {} losses, {} trainabilities",
            losses.len(),
            t.len()
        )));
    }
    if let Some(i) = losses.iter().chain(t).position(|v| !v.is_finite()) {
        let (what, idx) = if i < losses.len() {
            ("loss", i)
        } else {
            ("trainability", i - losses.len())
        };
        return Err(Error::NonFinite(format!("{what} of patch {idx}")));
    }
    let n = losses.len() as f64;
    let denom = t.iter().sum::<f64>() + eps;
    let weights: Vec<f64> = t.iter().map(|&tp| n * tp / denom).collect();
    let total = t.iter().zip(losses).map(|(&tp, &l)| tp * l).sum::<f64>() / denom;
    Ok(LossRecord {
        losses: losses.to_vec(),
        t: t.to_vec(),
        weights,
        total,
        step: 0,
    })
}

/// Differentiable form of [`reweighted_loss`] on flat vectors of equal length.
pub fn reweighted_loss_var(tape: &mut Tape, losses: Var, t: Var, eps: f64) -> Result<Var> {
    let tl = tape.mul(t, losses)?;
    let num = tape.sum(tl);
    let den = tape.sum(t);
    let den = tape.add_scalar(den, eps);
    tape.div(num, den)
}

/// 1 where the patch is below `threshold` dB, 0 elsewhere.
pub fn hnm_weights(psnr_db: &[f64], threshold: f64) -> Vec<f64> {
    psnr_db.iter().map(|&p| if p < threshold { 1.0 } else { 0.0 }).collect()
}

/// Threshold for `epoch` on a linear ramp from `start_db` at epoch 0 to
/// `end_db` at `total_epochs`.
pub fn hnm_threshold(epoch: usize, start_db: f64, end_db: f64, total_epochs: usize) -> Result<f64> {
    if epoch > total_epochs {
        return Err(Error::config(format!(
            "epoch {epoch} outside threshold schedule of {total_epochs} epochs"
        )));
    }
    if total_epochs == 0 {
        return Ok(start_db);
    }
    Ok(start_db + (end_db - start_db) * epoch as f64 / total_epochs as f64)
}

/// Binary cross-entropy of sigmoid(`logits`) against 0/1 `targets`,
/// averaged over the entries where `mask` is 1.
pub fn bce_with_logits(tape: &mut Tape, logits: Var, targets: &[f64], mask: &[f64]) -> Result<Var> {
    let n = targets.len();
    if mask.len() != n || tape.value(logits).len() != n {
        return Err(Error::shape("bce: logits, targets and mask differ in length"));
    }
    // softplus(z) - y·z is the cross-entropy of sigmoid(z) against y
    let y = tape.constant(Tensor::new(vec![n], targets.to_vec())?);
    let m = tape.constant(Tensor::new(vec![n], mask.to_vec())?);
    let sp = tape.softplus(logits);
    let yz = tape.mul(y, logits)?;
    let per = tape.sub(sp, yz)?;
    let per = tape.mul(per, m)?;
    let s = tape.sum(per);
    let count = mask.iter().sum::<f64>().max(1.0);
    Ok(tape.scale(s, 1.0 / count))
}

/// Flat target and segment map for a batch of ground-truth images, each
/// tiled by its own grid; patch ids run consecutively across the batch.
pub fn batch_segments(gts: &[&Image], grids: &[PatchGrid]) -> Result<(Rc<Vec<f64>>, Rc<Vec<u32>>, usize)> {
    if gts.len() != grids.len() {
        return Err(Error::shape("one patch grid per image required"));
    }
    let mut target = Vec::new();
    let mut segments = Vec::new();
    let mut base = 0usize;
    for (gt, grid) in gts.iter().zip(grids) {
        if (grid.height, grid.width) != (gt.height(), gt.width()) {
            return Err(Error::shape("patch grid does not match image size"));
        }
        target.extend_from_slice(gt.data());
        segments.extend(grid.segment_ids(base as u32));
        base += grid.num_patches();
    }
    Ok((Rc::new(target), Rc::new(segments), base))
}
