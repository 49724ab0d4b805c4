use std::collections::BTreeMap;

use super::block::{ResBlock, ResBlockConfig};
use super::layers::{Builder, Conv, Ctx};
use super::ModelState;
use crate::autograd::{Binder, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::image::{Image, Raw};
use crate::mosaic::{pack_raw, BayerPattern, MosaicSample};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestoreNetConfig {
    pub channels: usize,
    pub depth: usize,
    pub sigma_conditioning: bool,
}

impl Default for RestoreNetConfig {
    fn default() -> Self {
        RestoreNetConfig {
            channels: 32,
            depth: 4,
            sigma_conditioning: true,
        }
    }
}

impl RestoreNetConfig {
    pub const RATIO: usize = 2;

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("RestoreNet depth must be >= 1"));
        }
        if self.channels == 0 || self.channels % Self::RATIO != 0 {
            return Err(Error::config(format!(
                "RestoreNet channels must be a positive multiple of {}, got {}",
                Self::RATIO,
                self.channels
            )));
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        4 + usize::from(self.sigma_conditioning)
    }
}

/// Restoration backbone: packed half-resolution mosaic (plus a constant σ
/// plane) → stem → bottleneck blocks → 12 channels → depth-to-space ×2.
pub struct RestoreNet {
    config: RestoreNetConfig,
    params: ParamStore,
    stem: Conv,
    blocks: Vec<ResBlock>,
    head: Conv,
}

impl RestoreNet {
    pub const PREFIX: &'static str = "restore";

    pub fn build(config: RestoreNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::rng_for(&[seed, rng::stream::INIT, 1]);
        let mut b = Builder::new(&mut r);
        let p = Self::PREFIX;
        let c = config.channels;
        let stem = b.conv(&format!("{p}.stem"), config.input_channels(), c, 3, 1.0)?;
        let blocks = (0..config.depth)
            .map(|i| {
                ResBlock::build(
                    &mut b,
                    &format!("{p}.block{i}"),
                    ResBlockConfig::new(c, RestoreNetConfig::RATIO, false),
                    0.1,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let head = b.conv(&format!("{p}.head"), c, 12, 3, 0.5)?;
        let params = b.params;
        Ok(RestoreNet {
            config,
            params,
            stem,
            blocks,
            head,
        })
    }

    pub fn config(&self) -> &RestoreNetConfig {
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

    pub fn blocks(&self) -> &[ResBlock] {
        &self.blocks
    }

    /// Network input for a batch: (N, 4[+1], H/2, W/2).
    pub fn input_tensor(&self, raws: &[&Raw], sigmas: &[f64], pattern: BayerPattern) -> Result<Tensor> {
        if raws.len() != sigmas.len() || raws.is_empty() {
            return Err(Error::shape("need one sigma per raw and at least one raw"));
        }
        let (h, w) = (raws[0].height(), raws[0].width());
        let cin = self.config.input_channels();
        let mut data = Vec::with_capacity(raws.len() * cin * h * w / 4);
        for (raw, &sigma) in raws.iter().zip(sigmas) {
            if (raw.height(), raw.width()) != (h, w) {
                return Err(Error::shape("raws in a batch must share dimensions"));
            }
            if !(sigma >= 0.0) {
                return Err(Error::config(format!("sigma must be >= 0, got {sigma}")));
            }
            data.extend_from_slice(pack_raw(raw, pattern)?.data());
            if self.config.sigma_conditioning {
                data.extend(std::iter::repeat(sigma).take(h * w / 4));
            }
        }
        Tensor::new(vec![raws.len(), cin, h / 2, w / 2], data)
    }

    /// Predicted linear RGB, (N, 3, H, W); values are not clamped.
    pub fn forward<'a>(&'a self, tape: &mut Tape, input: Var, track: bool) -> Result<(Var, Binder<'a>)> {
        let (_, c, _, _) = tape.value(input).dims4()?;
        if c != self.config.input_channels() {
            return Err(Error::shape(format!(
                "RestoreNet expects {} input channels, got {c}",
                self.config.input_channels()
            )));
        }
        let mut no_bn = [];
        let mut ctx = Ctx {
            tape,
            binder: Binder::new(&self.params, track),
            bn: &mut no_bn,
            training: true,
        };
        let mut h = self.stem.forward(&mut ctx, input)?;
        h = ctx.tape.leaky_relu(h, super::LEAKY_SLOPE);
        for block in &self.blocks {
            h = block.forward(&mut ctx, h)?;
        }
        let h = self.head.forward(&mut ctx, h)?;
        let out = ctx.tape.pixel_shuffle(h, 2)?;
        Ok((out, ctx.binder))
    }

    /// Inference on one noisy raw.
    pub fn restore(&self, raw: &Raw, sigma: f64, pattern: BayerPattern) -> Result<Image> {
        let mut tape = Tape::new();
        let input = tape.constant(self.input_tensor(&[raw], &[sigma], pattern)?);
        let (out, _) = self.forward(&mut tape, input, false)?;
        let mut images = Image::batch_from_tensor(tape.value(out))?;
        Ok(images.remove(0))
    }

    /// Restores a degraded sample, conditioning on `sigma`.
    pub fn restore_sample(&self, sample: &MosaicSample, sigma: f64) -> Result<Image> {
        let out = self.restore(&sample.noisy_raw, sigma, sample.pattern)?;
        if (out.height(), out.width()) != (sample.ground_truth.height(), sample.ground_truth.width()) {
            return Err(Error::shape("restored image does not match ground truth size"));
        }
        Ok(out)
    }

    pub fn round_to_f32(&mut self) {
        self.params.round_to_f32();
    }
}

impl ModelState for RestoreNet {
    fn state_tensors(&self) -> BTreeMap<String, Tensor> {
        self.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect()
    }

    fn load_state(&mut self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        for p in self.params.iter_mut() {
            let t = tensors
                .get(&p.name)
                .ok_or_else(|| Error::config(format!("checkpoint lacks tensor {}", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(Error::shape(format!(
                    "tensor {}: stored {:?}, model expects {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(())
    }
}
