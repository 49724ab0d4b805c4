use rand::Rng;

use super::layers::{Bn, Builder, Conv, Ctx};
use crate::autograd::Var;
use crate::error::{Error, Result};

/// Bottleneck residual block: `x + F(x)` with
/// F = 1×1 reduce → 3×3 → 3×3 expand, leaky-ReLU between convolutions,
/// no activation after the last one, optional BN after each convolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResBlockConfig {
    pub in_channels: usize,
    pub channels: usize,
    pub ratio: usize,
    pub with_bn: bool,
    pub alpha: f64,
}

impl ResBlockConfig {
    pub fn new(channels: usize, ratio: usize, with_bn: bool) -> Self {
        ResBlockConfig {
            in_channels: channels,
            channels,
            ratio,
            with_bn,
            alpha: super::LEAKY_SLOPE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratio == 0 || self.channels == 0 || self.channels % self.ratio != 0 {
            return Err(Error::config(format!(
                "block channels {} not divisible by bottleneck ratio {}",
                self.channels, self.ratio
            )));
        }
        if self.in_channels == 0 {
            return Err(Error::config("block input channels must be positive"));
        }
        Ok(())
    }

    pub fn bottleneck(&self) -> usize {
        self.channels / self.ratio
    }
}

#[derive(Clone, Debug)]
pub struct ResBlock {
    config: ResBlockConfig,
    convs: [Conv; 3],
    bns: Option<[Bn; 3]>,
    /// 1×1 projection on the skip path when channel counts differ.
    proj: Option<Conv>,
}

impl ResBlock {
    /// `expand_gain` scales the initial weights of the last convolution.
    pub(crate) fn build<R: Rng>(
        b: &mut Builder<R>,
        name: &str,
        config: ResBlockConfig,
        expand_gain: f64,
    ) -> Result<Self> {
        config.validate()?;
        let mid = config.bottleneck();
        let convs = [
            b.conv(&format!("{name}.reduce"), config.in_channels, mid, 1, 1.0)?,
            b.conv(&format!("{name}.mid"), mid, mid, 3, 1.0)?,
            b.conv(&format!("{name}.expand"), mid, config.channels, 3, expand_gain)?,
        ];
        let bns = if config.with_bn {
            Some([
                b.batch_norm(&format!("{name}.bn_reduce"), mid)?,
                b.batch_norm(&format!("{name}.bn_mid"), mid)?,
                b.batch_norm(&format!("{name}.bn_expand"), config.channels)?,
            ])
        } else {
            None
        };
        let proj = if config.in_channels != config.channels {
            Some(b.conv(&format!("{name}.proj"), config.in_channels, config.channels, 1, 0.5)?)
        } else {
            None
        };
        Ok(ResBlock {
            config,
            convs,
            bns,
            proj,
        })
    }

    pub fn config(&self) -> &ResBlockConfig {
        &self.config
    }

    pub fn convs(&self) -> &[Conv; 3] {
        &self.convs
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(ctx, h)?;
            if let Some(bns) = &self.bns {
                h = bns[i].forward(ctx, h)?;
            }
            if i < 2 {
                h = ctx.tape.leaky_relu(h, self.config.alpha);
            }
        }
        let skip = match &self.proj {
            Some(p) => p.forward(ctx, x)?,
            None => x,
        };
        ctx.tape.add(skip, h)
    }
}
