use std::path::Path;

use crate::corpus::{make_patch_grid, pnm, CorpusManifest, Difficulty};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::models::{ModelState, PatchNet, TrainabilityMap};
use crate::mosaic::sigma_from_8bit;
use crate::training::{per_patch_loss, Checkpoint, TrainRun};

use super::report::{degrade_for_eval, EvalOptions, Restorer};

/// Trainability maps are binarized at this value.
pub const KEEP_THRESHOLD: f64 = 0.5;
const TINT: f64 = 0.35;

/// Builds the selector network stored in a checkpoint.
pub fn patchnet_from_checkpoint(ckpt: &Checkpoint) -> Result<PatchNet> {
    if !ckpt.has_prefix(&format!("{}.", PatchNet::PREFIX)) {
        return Err(Error::Usage("checkpoint has no PatchNet weights".into()));
    }
    let run = TrainRun::parse(&ckpt.config)?;
    let mut net = PatchNet::build(run.patchnet_config()?, run.seed)?;
    net.load_state(&ckpt.tensors)?;
    Ok(net)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapExport {
    pub name: String,
    pub map: TrainabilityMap,
    /// `t >= 0.5` per patch.
    pub keep: Vec<bool>,
    pub epoch: u64,
}

/// Trainability and restoration loss of one valid patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchStat {
    pub image: usize,
    pub label: Difficulty,
    pub t: f64,
    pub loss: f64,
}

/// Restores each manifest image and scores it with `patch`; returns the
/// maps and the per-patch statistics of valid patches.
pub fn trainability_maps(
    patch: &mut PatchNet,
    restorer: &Restorer,
    manifest: &CorpusManifest,
    sigma_8bit: f64,
    opts: &EvalOptions,
) -> Result<(Vec<(Image, TrainabilityMap)>, Vec<PatchStat>)> {
    let sigma = sigma_from_8bit(sigma_8bit);
    let k = patch.config().patch_size;
    let mut maps = Vec::new();
    let mut stats = Vec::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        let gt = manifest.load_image(i)?;
        let sample = degrade_for_eval(gt.clone(), i, sigma, opts.pattern, opts.seed)?;
        let pred = restorer.restore(&sample.noisy_raw, sigma, opts.pattern)?;
        let grid = make_patch_grid(gt.height(), gt.width(), k, false, 0)?;
        let map = patch.infer_map(&pred, &grid)?;
        let losses = per_patch_loss(&pred, &gt, &grid)?;
        for (p, &t) in map.values.iter().enumerate() {
            if losses.valid[p] {
                stats.push(PatchStat {
                    image: i,
                    label: e.label,
                    t,
                    loss: losses.values[p],
                });
            }
        }
        maps.push((pred, map));
    }
    Ok((maps, stats))
}

/// Writes `<img>_tmap.pgm` (one pixel per patch) and `<img>_overlay.ppm`
/// (restored image, kept patches tinted blue and ignored ones green) for
/// every manifest image.
pub fn export_maps(
    ckpt: &Checkpoint,
    manifest: &CorpusManifest,
    out: &Path,
    sigma_8bit: f64,
    opts: &EvalOptions,
) -> Result<Vec<MapExport>> {
    let mut patch = patchnet_from_checkpoint(ckpt)?;
    let restorer = Restorer::from_checkpoint(ckpt)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (maps, _) = trainability_maps(&mut patch, &restorer, manifest, sigma_8bit, opts)?;
    let mut exports = Vec::new();
    for ((img, map), entry) in maps.into_iter().zip(&manifest.entries) {
        let name = entry
            .path
            .with_extension("")
            .to_string_lossy()
            .replace(['/', '\\'], "_");
        pnm::write_pgm8(
            &map.values,
            map.grid_h,
            map.grid_w,
            &out.join(format!("{name}_tmap.pgm")),
        )?;
        let keep: Vec<bool> = map.values.iter().map(|&t| t >= KEEP_THRESHOLD).collect();
        pnm::write_ppm16(&overlay(&img, &map, &keep), &out.join(format!("{name}_overlay.ppm")))?;
        exports.push(MapExport {
            name,
            map,
            keep,
            epoch: ckpt.rng.epoch,
        });
    }
    Ok(exports)
}

fn overlay(img: &Image, map: &TrainabilityMap, keep: &[bool]) -> Image {
    let mut out = img.clamped();
    let (top, left) = map.origin;
    let k = map.patch_size;
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = ((y + top) / k) * map.grid_w + (x + left) / k;
            let c = if keep[p] { 2 } else { 1 };
            out.set(c, y, x, (out.get(c, y, x) + TINT).min(1.0));
        }
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::shape("spearman needs two equal-length samples of size >= 2"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}
