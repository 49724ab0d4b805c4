use std::fmt::Write;

use crate::corpus::{make_patch_grid, CorpusManifest, Difficulty};
use crate::error::{Error, Result};
use crate::image::{Image, Raw};
use crate::models::{ModelState, RestoreNet};
use crate::mosaic::{bilinear_demosaic, psnr, sigma_from_8bit, BayerPattern, MosaicSample};
use crate::rng;
use crate::training::{per_patch_psnr, Checkpoint, TrainRun};

/// Base of the evaluation noise seeds.
pub const EVAL_SEED: u64 = 0;

/// Noise seed for test image `index` at noise level `sigma`:
/// `derive_seed([EVAL, base, index, bits(sigma)])`.
pub fn eval_seed(base: u64, index: usize, sigma: f64) -> u64 {
    rng::derive_seed(&[rng::stream::EVAL, base, index as u64, sigma.to_bits()])
}

/// Degrades test image `index` exactly as every evaluation does.
pub fn degrade_for_eval(gt: Image, index: usize, sigma: f64, pattern: BayerPattern, base: u64) -> Result<MosaicSample> {
    MosaicSample::degrade(gt, pattern, sigma, eval_seed(base, index, sigma))
}

/// Anything that turns a noisy raw back into RGB.
pub enum Restorer {
    Bilinear,
    Net(Box<RestoreNet>),
}

impl Restorer {
    /// Builds the restoration network stored in a checkpoint. Only
    /// `restore.*` tensors are read.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let run = TrainRun::parse(&ckpt.config)?;
        let mut net = RestoreNet::build(run.restore_config(), run.seed)?;
        net.load_state(&ckpt.tensors)?;
        Ok(Restorer::Net(Box::new(net)))
    }

    pub fn restore(&self, raw: &Raw, sigma: f64, pattern: BayerPattern) -> Result<Image> {
        match self {
            Restorer::Bilinear => bilinear_demosaic(raw, pattern),
            Restorer::Net(net) => net.restore(raw, sigma, pattern),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub pattern: BayerPattern,
    pub seed: u64,
    /// Patch size of the patch-level PSNR list.
    pub patch_size: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            pattern: BayerPattern::RGGB,
            seed: EVAL_SEED,
            patch_size: 64,
        }
    }
}

/// Results at one noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaRow {
    pub sigma_8bit: f64,
    pub per_image: Vec<f64>,
    pub labels: Vec<Difficulty>,
    pub mean: f64,
    pub mean_easy: f64,
    pub mean_hard: f64,
    /// Every valid patch of every image, manifest order.
    pub patch_psnr: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub model_id: String,
    /// Filled in by the caller; evaluation itself is a pure function.
    pub timestamp: Option<String>,
    pub rows: Vec<SigmaRow>,
}

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut s = format!("# model\t{}\n# dataset\t{}\n", self.model_id, self.dataset);
        if let Some(t) = &self.timestamp {
            let _ = writeln!(s, "# timestamp\t{t}");
        }
        s.push_str("sigma\tmean_psnr_db\teasy_psnr_db\thard_psnr_db\timages\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{:.4}\t{:.4}\t{:.4}\t{}",
                r.sigma_8bit,
                r.mean,
                r.mean_easy,
                r.mean_hard,
                r.per_image.len()
            );
        }
        s
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Full-image PSNR of `restorer` on every manifest image at each noise
/// level (8-bit units), plus per-patch PSNRs.
pub fn evaluate(
    restorer: &Restorer,
    model_id: &str,
    manifest: &CorpusManifest,
    sigmas_8bit: &[f64],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(Error::Usage("evaluation manifest is empty".into()));
    }
    if sigmas_8bit.is_empty() {
        return Err(Error::Usage("no noise levels given".into()));
    }
    let images = manifest.load_all()?;
    let labels: Vec<Difficulty> = manifest.entries.iter().map(|e| e.label).collect();
    let mut rows = Vec::new();
    for &s8 in sigmas_8bit {
        let sigma = sigma_from_8bit(s8);
        let mut per_image = Vec::with_capacity(images.len());
        let mut patch_psnr = Vec::new();
        for (i, gt) in images.iter().enumerate() {
            let sample = degrade_for_eval(gt.clone(), i, sigma, opts.pattern, opts.seed)?;
            let pred = restorer.restore(&sample.noisy_raw, sigma, opts.pattern)?;
            per_image.push(psnr(&pred, gt)?);
            let grid = make_patch_grid(gt.height(), gt.width(), opts.patch_size, false, 0)?;
            let p = per_patch_psnr(&pred, gt, &grid)?;
            patch_psnr.extend(p.iter().zip(grid.valid_mask()).filter(|(_, v)| *v).map(|(p, _)| *p));
        }
        let subset = |l: Difficulty| mean(per_image.iter().zip(&labels).filter(|(_, &x)| x == l).map(|(p, _)| *p));
        rows.push(SigmaRow {
            sigma_8bit: s8,
            mean: mean(per_image.iter().copied()),
            mean_easy: subset(Difficulty::Easy),
            mean_hard: subset(Difficulty::Hard),
            per_image,
            labels: labels.clone(),
            patch_psnr,
        });
    }
    Ok(EvalReport {
        dataset: manifest.root.display().to_string(),
        model_id: model_id.to_string(),
        timestamp: None,
        rows,
    })
}

/// Equal-width histogram over `[lo, hi]`; values outside land in the end
/// bins, so the counts always sum to the number of values.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Usage(format!("need at least 2 bins, got {bins}")));
        }
        if !(hi > lo) {
            return Err(Error::Usage("histogram range is empty".into()));
        }
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let b = ((v - lo) / width).floor();
            let b = if b.is_nan() {
                0.0
            } else {
                b.clamp(0.0, (bins - 1) as f64)
            };
            counts[b as usize] += 1;
        }
        Ok(Histogram { lo, hi, counts })
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }

    /// Lower edge of the fullest bin; ties go to the lower bin.
    pub fn mode(&self) -> f64 {
        let best = self
            .counts
            .iter()
            .enumerate()
            .fold(0, |b, (i, &c)| if c > self.counts[b] { i } else { b });
        self.bin_edges(best).0
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("bin_lo\tbin_hi\tcount\n");
        for (i, c) in self.counts.iter().enumerate() {
            let (a, b) = self.bin_edges(i);
            let _ = writeln!(s, "{a:.2}\t{b:.2}\t{c}");
        }
        s
    }
}

/// Per-patch PSNR values of every manifest image at one noise level.
pub fn patch_psnrs(
    restorer: &Restorer,
    manifest: &CorpusManifest,
    sigma_8bit: f64,
    opts: &EvalOptions,
) -> Result<Vec<(Difficulty, f64)>> {
    let sigma = sigma_from_8bit(sigma_8bit);
    let mut out = Vec::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        let gt = manifest.load_image(i)?;
        let sample = degrade_for_eval(gt.clone(), i, sigma, opts.pattern, opts.seed)?;
        let pred = restorer.restore(&sample.noisy_raw, sigma, opts.pattern)?;
        let grid = make_patch_grid(gt.height(), gt.width(), opts.patch_size, false, 0)?;
        let p = per_patch_psnr(&pred, &gt, &grid)?;
        out.extend(
            p.iter()
                .zip(grid.valid_mask())
                .filter(|(_, v)| *v)
                .map(|(p, _)| (e.label, *p)),
        );
    }
    Ok(out)
}

/// Histogram of per-patch PSNR over [0, 100] dB; the capped value lands in
/// the top bin.
pub fn patch_histogram(
    restorer: &Restorer,
    manifest: &CorpusManifest,
    bins: usize,
    sigma_8bit: f64,
    opts: &EvalOptions,
) -> Result<Histogram> {
    let values: Vec<f64> = patch_psnrs(restorer, manifest, sigma_8bit, opts)?
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    Histogram::new(&values, bins, 0.0, crate::mosaic::PSNR_CAP_DB)
}
