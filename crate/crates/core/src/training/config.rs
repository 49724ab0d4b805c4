use std::fmt;
use std::str::FromStr;

use crate::autograd::DEFAULT_BASE_LR;
use crate::error::{Error, Result};
use crate::models::{PatchNetConfig, PatchNetVariant, RestoreNetConfig};
use crate::mosaic::BayerPattern;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Uniform,
    Hnm,
    PatchNet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// PatchNet descends the reweighted loss together with RestoreNet.
    Min,
    /// PatchNet ascends the reweighted loss while RestoreNet descends it.
    Max,
    /// PatchNet regresses the hard-patch indicator with cross-entropy.
    Regress,
}

macro_rules! keyword_enum {
    ($ty:ident, $what:literal, $($variant:ident => $name:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    _ => Err(Error::config(format!(concat!("unknown ", $what, " {:?}"), s))),
                }
            }
        }
    };
}

keyword_enum!(TrainMode, "mode", Uniform => "uniform", Hnm => "hnm", PatchNet => "patchnet");
keyword_enum!(Objective, "objective", Min => "min", Max => "max", Regress => "regress");

/// Linear per-epoch threshold, in dB, from `start` at the first epoch to
/// `end` at the last.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HnmSchedule {
    pub start_db: f64,
    pub end_db: f64,
}

/// Everything that determines a training run. Serialized as `key = value`
/// lines; the text form is echoed into every checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRun {
    pub mode: TrainMode,
    pub objective: Objective,
    pub detach_input: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// PatchNet learning rate as a multiple of the RestoreNet one.
    pub patchnet_lr_scale: f64,
    /// Noise range in 8-bit units, drawn uniformly per image and epoch.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Noise level of the per-epoch validation pass, 8-bit units.
    pub val_sigma: f64,
    pub seed: u64,
    pub pattern: BayerPattern,
    pub patch_size: usize,
    pub temperature: f64,
    pub patchnet_variant: PatchNetVariant,
    pub patchnet_width_div: usize,
    pub restore_channels: usize,
    pub restore_depth: usize,
    pub sigma_conditioning: bool,
    pub hnm: Option<HnmSchedule>,
    pub augment: bool,
    pub oversample: Vec<usize>,
}

impl Default for TrainRun {
    fn default() -> Self {
        TrainRun {
            mode: TrainMode::Uniform,
            objective: Objective::Max,
            detach_input: true,
            epochs: 30,
            batch_size: 4,
            base_lr: DEFAULT_BASE_LR,
            patchnet_lr_scale: 1.0,
            sigma_min: 0.0,
            sigma_max: 16.0,
            val_sigma: 10.0,
            seed: 0,
            pattern: BayerPattern::RGGB,
            patch_size: 64,
            temperature: 2.0,
            patchnet_variant: PatchNetVariant::Tiny,
            patchnet_width_div: 8,
            restore_channels: 32,
            restore_depth: 4,
            sigma_conditioning: true,
            hnm: None,
            augment: true,
            oversample: vec![1],
        }
    }
}

const KEYS: &[&str] = &[
    "mode",
    "objective",
    "detach_input",
    "epochs",
    "batch_size",
    "base_lr",
    "patchnet_lr_scale",
    "sigma_min",
    "sigma_max",
    "val_sigma",
    "seed",
    "pattern",
    "patch_size",
    "temperature",
    "patchnet_variant",
    "patchnet_width_div",
    "restore_channels",
    "restore_depth",
    "sigma_conditioning",
    "hnm_threshold",
    "hnm_start_db",
    "hnm_end_db",
    "augment",
    "oversample",
];

impl TrainRun {
    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are skipped; unknown and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut run = TrainRun::default();
        let mut seen: Vec<&str> = Vec::new();
        let (mut start, mut end) = (None, None);
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let here = offset;
            offset += line.len();
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| Error::parse(here, format!("expected `key = value`, got {body:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let Some(&key) = KEYS.iter().find(|&&k| k == key) else {
                return Err(Error::parse(here, format!("unknown key {key:?}")));
            };
            if seen.contains(&key) {
                return Err(Error::parse(here, format!("key {key:?} given twice")));
            }
            seen.push(key);
            let at = |e: Error| Error::parse(here, format!("{key}: {e}"));
            match key {
                "mode" => run.mode = value.parse().map_err(at)?,
                "objective" => run.objective = value.parse().map_err(at)?,
                "detach_input" => run.detach_input = boolean(value).map_err(at)?,
                "epochs" => run.epochs = number(value).map_err(at)?,
                "batch_size" => run.batch_size = number(value).map_err(at)?,
                "base_lr" => run.base_lr = number(value).map_err(at)?,
                "patchnet_lr_scale" => run.patchnet_lr_scale = number(value).map_err(at)?,
                "sigma_min" => run.sigma_min = number(value).map_err(at)?,
                "sigma_max" => run.sigma_max = number(value).map_err(at)?,
                "val_sigma" => run.val_sigma = number(value).map_err(at)?,
                "seed" => run.seed = number(value).map_err(at)?,
                "pattern" => run.pattern = BayerPattern::parse(value).map_err(at)?,
                "patch_size" => run.patch_size = number(value).map_err(at)?,
                "temperature" => run.temperature = number(value).map_err(at)?,
                "patchnet_variant" => run.patchnet_variant = value.parse().map_err(at)?,
                "patchnet_width_div" => run.patchnet_width_div = number(value).map_err(at)?,
                "restore_channels" => run.restore_channels = number(value).map_err(at)?,
                "restore_depth" => run.restore_depth = number(value).map_err(at)?,
                "sigma_conditioning" => run.sigma_conditioning = boolean(value).map_err(at)?,
                "hnm_threshold" => {
                    let t: f64 = number(value).map_err(at)?;
                    start = Some(t);
                    end = Some(t);
                }
                "hnm_start_db" => start = Some(number(value).map_err(at)?),
                "hnm_end_db" => end = Some(number(value).map_err(at)?),
                "augment" => run.augment = boolean(value).map_err(at)?,
                "oversample" => {
                    run.oversample = value
                        .split(',')
                        .map(|v| number(v.trim()))
                        .collect::<Result<_>>()
                        .map_err(at)?
                }
                _ => unreachable!("key list and match arms agree"),
            }
        }
        if seen.contains(&"hnm_threshold") && (seen.contains(&"hnm_start_db") || seen.contains(&"hnm_end_db")) {
            return Err(Error::config("give either hnm_threshold or hnm_start_db/hnm_end_db"));
        }
        run.hnm = match (start, end) {
            (Some(start_db), Some(end_db)) => Some(HnmSchedule { start_db, end_db }),
            (None, None) => None,
            _ => return Err(Error::config("hnm_start_db and hnm_end_db must be given together")),
        };
        if run.hnm.is_none() && run.uses_threshold() {
            run.hnm = Some(HnmSchedule {
                start_db: 40.0,
                end_db: 40.0,
            });
        }
        run.validate()?;
        Ok(run)
    }

    /// Whether this run consumes an HNM threshold.
    pub fn uses_threshold(&self) -> bool {
        self.mode == TrainMode::Hnm || (self.mode == TrainMode::PatchNet && self.objective == Objective::Regress)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::config("base_lr must be positive"));
        }
        if !(self.patchnet_lr_scale > 0.0 && self.patchnet_lr_scale.is_finite()) {
            return Err(Error::config("patchnet_lr_scale must be positive"));
        }
        if !(0.0 <= self.sigma_min && self.sigma_min <= self.sigma_max && self.sigma_max.is_finite()) {
            return Err(Error::config("need 0 <= sigma_min <= sigma_max"));
        }
        if !(self.val_sigma >= 0.0 && self.val_sigma.is_finite()) {
            return Err(Error::config("val_sigma must be non-negative"));
        }
        match (self.hnm, self.uses_threshold()) {
            (Some(_), false) => {
                return Err(Error::config(
                    "an HNM threshold is only valid in hnm mode or the regress objective",
                ))
            }
            (None, true) => return Err(Error::config("this mode needs an HNM threshold")),
            _ => {}
        }
        if self.oversample.is_empty() || self.oversample.contains(&0) {
            return Err(Error::config("oversample factors must be >= 1"));
        }
        self.restore_config().validate()?;
        self.patchnet_config()?;
        Ok(())
    }

    pub fn restore_config(&self) -> RestoreNetConfig {
        RestoreNetConfig {
            channels: self.restore_channels,
            depth: self.restore_depth,
            sigma_conditioning: self.sigma_conditioning,
        }
    }

    pub fn patchnet_config(&self) -> Result<PatchNetConfig> {
        PatchNetConfig::new(self.patchnet_variant, self.patch_size, self.temperature)?
            .with_width_div(self.patchnet_width_div)
    }

    /// Canonical text form; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("mode = {}", self.mode),
            format!("objective = {}", self.objective),
            format!("detach_input = {}", self.detach_input),
            format!("epochs = {}", self.epochs),
            format!("batch_size = {}", self.batch_size),
            format!("base_lr = {:?}", self.base_lr),
            format!("patchnet_lr_scale = {:?}", self.patchnet_lr_scale),
            format!("sigma_min = {:?}", self.sigma_min),
            format!("sigma_max = {:?}", self.sigma_max),
            format!("val_sigma = {:?}", self.val_sigma),
            format!("seed = {}", self.seed),
            format!("pattern = {}", self.pattern.name()),
            format!("patch_size = {}", self.patch_size),
            format!("temperature = {:?}", self.temperature),
            format!("patchnet_variant = {}", self.patchnet_variant),
            format!("patchnet_width_div = {}", self.patchnet_width_div),
            format!("restore_channels = {}", self.restore_channels),
            format!("restore_depth = {}", self.restore_depth),
            format!("sigma_conditioning = {}", self.sigma_conditioning),
        ];
        if let Some(h) = self.hnm {
            lines.push(format!("hnm_start_db = {:?}", h.start_db));
            lines.push(format!("hnm_end_db = {:?}", h.end_db));
        }
        lines.push(format!("augment = {}", self.augment));
        let over: Vec<String> = self.oversample.iter().map(|o| o.to_string()).collect();
        lines.push(format!("oversample = {}", over.join(",")));
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }
}

fn boolean(v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("expected a boolean, got {v:?}"))),
    }
}

fn number<T: FromStr>(v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("expected a number, got {v:?}")))
}
