use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::block::{ResBlock, ResBlockConfig};
use super::layers::{Builder, Conv, Ctx};
use super::{num_stages, ModelState};
use crate::autograd::{Binder, BnStats, ParamStore, Tape, Tensor, Var};
use crate::corpus::PatchGrid;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

const STEM_CHANNELS: usize = 64;
const STAGE_CHANNELS: [usize; 6] = [64, 64, 128, 256, 512, 1024];
const STAGE_BOTTLENECKS: [usize; 6] = [16, 16, 32, 64, 128, 256];
const TINY_BLOCKS: [usize; 6] = [1, 1, 1, 2, 2, 1];
const LARGE_BLOCKS: [usize; 6] = [3, 3, 4, 6, 6, 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchNetVariant {
    Tiny,
    Large,
}

impl fmt::Display for PatchNetVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatchNetVariant::Tiny => "tiny",
            PatchNetVariant::Large => "large",
        })
    }
}

impl FromStr for PatchNetVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(PatchNetVariant::Tiny),
            "large" => Ok(PatchNetVariant::Large),
            _ => Err(Error::config(format!("unknown PatchNet variant {s:?}"))),
        }
    }
}

/// Stage layout of the selector network.
///
/// The 64-pixel layout has six stages, each ending in a 2×2 average pool.
/// Smaller patches keep all six stages and drop the pool from the last
/// `6 - log2(k)` of them; larger patches append copies of the last stage.
/// Either way the number of pools equals `log2(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchNetConfig {
    pub variant: PatchNetVariant,
    pub patch_size: usize,
    pub temperature: f64,
    /// Divides every channel count; 1 is the full-width network.
    pub width_div: usize,
    pub blocks: Vec<usize>,
    pub channels: Vec<usize>,
    pub bottlenecks: Vec<usize>,
    pub pool: Vec<bool>,
}

impl PatchNetConfig {
    pub fn new(variant: PatchNetVariant, patch_size: usize, temperature: f64) -> Result<Self> {
        let pools = num_stages(patch_size)?;
        let n = pools.max(6);
        let base = match variant {
            PatchNetVariant::Tiny => TINY_BLOCKS,
            PatchNetVariant::Large => LARGE_BLOCKS,
        };
        let at = |arr: &[usize; 6], i: usize| arr[i.min(5)];
        let cfg = PatchNetConfig {
            variant,
            patch_size,
            temperature,
            width_div: 1,
            blocks: (0..n).map(|i| at(&base, i)).collect(),
            channels: (0..n).map(|i| at(&STAGE_CHANNELS, i)).collect(),
            bottlenecks: (0..n).map(|i| at(&STAGE_BOTTLENECKS, i)).collect(),
            pool: (0..n).map(|i| i < pools).collect(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_width_div(mut self, width_div: usize) -> Result<Self> {
        self.width_div = width_div;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let pools = num_stages(self.patch_size)?;
        let n = self.blocks.len();
        if n == 0 || self.channels.len() != n || self.bottlenecks.len() != n || self.pool.len() != n {
            return Err(Error::config("PatchNet stage lists differ in length"));
        }
        if self.pool.iter().filter(|&&p| p).count() != pools {
            return Err(Error::config(format!(
                "PatchNet with {}-pixel patches needs {pools} pooling stages",
                self.patch_size
            )));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        let d = self.width_div;
        if d == 0 || STEM_CHANNELS % d != 0 {
            return Err(Error::config(format!("invalid width divisor {d}")));
        }
        for (&c, &b) in self.channels.iter().zip(&self.bottlenecks) {
            if c % d != 0 || b % d != 0 || b == 0 || c % b != 0 {
                return Err(Error::config(format!(
                    "stage width {c}/{b} incompatible with width divisor {d}"
                )));
            }
        }
        Ok(())
    }

    pub fn num_pools(&self) -> usize {
        self.pool.iter().filter(|&&p| p).count()
    }

    pub fn total_blocks(&self) -> usize {
        self.blocks.iter().sum()
    }
}

struct Stage {
    blocks: Vec<ResBlock>,
    pool: bool,
}

/// Selector network: restored RGB in, one trainability per k×k patch out.
pub struct PatchNet {
    config: PatchNetConfig,
    params: ParamStore,
    bn: Vec<BnStats>,
    bn_names: Vec<String>,
    stem: Conv,
    stages: Vec<Stage>,
    head: Conv,
}

/// Output of a forward pass on an (N, 3, H, W) batch.
pub struct PatchNetOutput {
    /// Pre-sigmoid scores, (N, 1, H/k, W/k).
    pub logits: Var,
    /// `tempered_sigmoid(logits, T)`, same shape.
    pub t: Var,
    pub grid_h: usize,
    pub grid_w: usize,
}

/// Per-patch trainabilities of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainabilityMap {
    pub values: Vec<f64>,
    pub grid_h: usize,
    pub grid_w: usize,
    pub patch_size: usize,
    /// (top, left) padding of the image inside the patch grid.
    pub origin: (usize, usize),
}

impl TrainabilityMap {
    pub fn get(&self, gy: usize, gx: usize) -> f64 {
        self.values[gy * self.grid_w + gx]
    }
}

impl PatchNet {
    pub const PREFIX: &'static str = "patch";

    pub fn build(config: PatchNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::rng_for(&[seed, rng::stream::INIT, 2]);
        let mut b = Builder::new(&mut r);
        let d = config.width_div;
        let p = Self::PREFIX;
        let stem_ch = STEM_CHANNELS / d;
        let stem = b.conv(&format!("{p}.stem"), 3, stem_ch, 1, 1.0)?;
        let mut in_ch = stem_ch;
        let mut stages = Vec::new();
        for s in 0..config.blocks.len() {
            let (ch, bott) = (config.channels[s] / d, config.bottlenecks[s] / d);
            let mut blocks = Vec::new();
            for k in 0..config.blocks[s] {
                let cfg = ResBlockConfig {
                    in_channels: in_ch,
                    channels: ch,
                    ratio: ch / bott,
                    with_bn: true,
                    alpha: super::LEAKY_SLOPE,
                };
                blocks.push(ResBlock::build(
                    &mut b,
                    &format!("{p}.stage{}.block{k}", s + 1),
                    cfg,
                    1.0,
                )?);
                in_ch = ch;
            }
            stages.push(Stage {
                blocks,
                pool: config.pool[s],
            });
        }
        let head = b.conv(&format!("{p}.head"), in_ch, 1, 1, 0.5)?;
        let Builder {
            params, bn, bn_names, ..
        } = b;
        Ok(PatchNet {
            config,
            params,
            bn,
            bn_names,
            stem,
            stages,
            head,
        })
    }

    pub fn config(&self) -> &PatchNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn head(&self) -> &Conv {
        &self.head
    }

    pub fn num_pool_layers(&self) -> usize {
        self.stages.iter().filter(|s| s.pool).count()
    }

    pub fn num_blocks(&self) -> usize {
        self.stages.iter().map(|s| s.blocks.len()).sum()
    }

    /// Runs the network on `x` (N, 3, H, W) with H, W multiples of k. With
    /// `detach` set the input is cut from its producer first. Parameters are
    /// tape leaves only when `track` is set; the returned binder maps them.
    pub fn forward<'a>(
        &'a mut self,
        tape: &mut Tape,
        x: Var,
        detach: bool,
        training: bool,
        track: bool,
    ) -> Result<(PatchNetOutput, Binder<'a>)> {
        let (_, c, h, w) = tape.value(x).dims4()?;
        let k = self.config.patch_size;
        if c != 3 {
            return Err(Error::shape(format!("PatchNet expects RGB input, got {c} channels")));
        }
        if h % k != 0 || w % k != 0 {
            return Err(Error::shape(format!(
                "PatchNet input {h}x{w} is not a multiple of the {k}-pixel patch"
            )));
        }
        let x = if detach { tape.detach(x) } else { x };
        let alpha = super::LEAKY_SLOPE;
        let mut ctx = Ctx {
            tape,
            binder: Binder::new(&self.params, track),
            bn: &mut self.bn,
            training,
        };
        let mut h_ = self.stem.forward(&mut ctx, x)?;
        h_ = ctx.tape.leaky_relu(h_, alpha);
        for stage in &self.stages {
            for block in &stage.blocks {
                h_ = block.forward(&mut ctx, h_)?;
            }
            if stage.pool {
                h_ = ctx.tape.avg_pool2(h_)?;
            }
        }
        let logits = self.head.forward(&mut ctx, h_)?;
        let t = ctx.tape.tempered_sigmoid(logits, self.config.temperature)?;
        let Ctx { binder, .. } = ctx;
        Ok((
            PatchNetOutput {
                logits,
                t,
                grid_h: h / k,
                grid_w: w / k,
            },
            binder,
        ))
    }

    /// Inference-mode trainability map of one image placed in `grid`.
    pub fn infer_map(&mut self, image: &Image, grid: &PatchGrid) -> Result<TrainabilityMap> {
        if grid.patch_size != self.config.patch_size {
            return Err(Error::shape(format!(
                "grid uses {}-pixel patches, network expects {}",
                grid.patch_size, self.config.patch_size
            )));
        }
        if (grid.height, grid.width) != (image.height(), image.width()) {
            return Err(Error::shape("patch grid does not match image size"));
        }
        let mut tape = Tape::new();
        let x = tape.constant(image.clone().into_tensor());
        let x = tape.pad2d(x, grid.pad_top, grid.pad_bottom, grid.pad_left, grid.pad_right)?;
        let (out, _) = self.forward(&mut tape, x, false, false, false)?;
        Ok(TrainabilityMap {
            values: tape.value(out.t).data().to_vec(),
            grid_h: out.grid_h,
            grid_w: out.grid_w,
            patch_size: grid.patch_size,
            origin: (grid.pad_top, grid.pad_left),
        })
    }

    pub fn round_to_f32(&mut self) {
        self.params.round_to_f32();
        for s in &mut self.bn {
            for v in s.mean.iter_mut().chain(s.var.iter_mut()) {
                *v = *v as f32 as f64;
            }
        }
    }
}

impl ModelState for PatchNet {
    fn state_tensors(&self) -> BTreeMap<String, Tensor> {
        let mut out: BTreeMap<String, Tensor> = self.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        for (name, s) in self.bn_names.iter().zip(&self.bn) {
            let c = s.mean.len();
            out.insert(
                format!("{name}.running_mean"),
                Tensor::new(vec![c], s.mean.clone()).expect("sized"),
            );
            out.insert(
                format!("{name}.running_var"),
                Tensor::new(vec![c], s.var.clone()).expect("sized"),
            );
        }
        out
    }

    fn load_state(&mut self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        let fetch = |name: &str, shape: &[usize]| -> Result<Tensor> {
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::config(format!("checkpoint lacks tensor {name}")))?;
            if t.shape() != shape {
                return Err(Error::shape(format!(
                    "tensor {name}: stored {:?}, model expects {shape:?}",
                    t.shape()
                )));
            }
            Ok(t.clone())
        };
        for p in self.params.iter_mut() {
            p.value = fetch(&p.name, &p.value.shape().to_vec())?;
        }
        for (name, s) in self.bn_names.iter().zip(self.bn.iter_mut()) {
            let c = s.mean.len();
            s.mean = fetch(&format!("{name}.running_mean"), &[c])?.into_data();
            s.var = fetch(&format!("{name}.running_var"), &[c])?.into_data();
        }
        Ok(())
    }
}
