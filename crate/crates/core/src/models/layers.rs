use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Binder, BnStats, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Per-forward-pass state shared by all layers of one model.
pub struct Ctx<'t, 'p> {
    pub tape: &'t mut Tape,
    pub binder: Binder<'p>,
    pub bn: &'t mut [BnStats],
    pub training: bool,
}

impl Ctx<'_, '_> {
    pub fn param(&mut self, id: ParamId) -> Var {
        self.binder.var(self.tape, id)
    }
}

/// Collects parameters and BN layers while a model is being built.
pub(crate) struct Builder<'r, R: Rng> {
    pub params: ParamStore,
    pub bn: Vec<BnStats>,
    pub bn_names: Vec<String>,
    pub rng: &'r mut R,
}

impl<'r, R: Rng> Builder<'r, R> {
    pub fn new(rng: &'r mut R) -> Self {
        Builder {
            params: ParamStore::new(),
            bn: Vec::new(),
            bn_names: Vec::new(),
            rng,
        }
    }

    /// He-normal weights scaled by `gain`, zero bias.
    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, kernel: usize, gain: f64) -> Result<Conv> {
        let fan_in = (cin * kernel * kernel) as f64;
        let std = gain * (2.0 / fan_in).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let n = cout * cin * kernel * kernel;
        let w: Vec<f64> = (0..n).map(|_| normal.sample(self.rng)).collect();
        let weight = self.params.add(
            format!("{name}.weight"),
            Tensor::new(vec![cout, cin, kernel, kernel], w)?,
        )?;
        let bias = self.params.add(format!("{name}.bias"), Tensor::zeros(vec![cout]))?;
        Ok(Conv {
            weight,
            bias,
            pad: kernel / 2,
        })
    }

    pub fn batch_norm(&mut self, name: &str, channels: usize) -> Result<Bn> {
        let gamma = self
            .params
            .add(format!("{name}.gamma"), Tensor::full(vec![channels], 1.0))?;
        let beta = self.params.add(format!("{name}.beta"), Tensor::zeros(vec![channels]))?;
        self.bn.push(BnStats::new(channels));
        self.bn_names.push(name.to_string());
        Ok(Bn {
            gamma,
            beta,
            stats: self.bn.len() - 1,
        })
    }
}

/// Stride-1 "same" convolution.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pad: usize,
}

impl Conv {
    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = ctx.param(self.bias);
        ctx.tape.conv2d(x, w, Some(b), 1, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct Bn {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: usize,
}

impl Bn {
    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let g = ctx.param(self.gamma);
        let b = ctx.param(self.beta);
        let training = ctx.training;
        ctx.tape.batch_norm(x, g, b, &mut ctx.bn[self.stats], training)
    }
}
