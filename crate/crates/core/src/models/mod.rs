//! Network builders: the bottleneck residual block, the patch selector
//! (PatchNet) and the restoration backbone (RestoreNet).

mod block;
mod layers;
mod patchnet;
mod restorenet;

use std::collections::BTreeMap;

pub use block::{ResBlock, ResBlockConfig};
pub use layers::{Conv, Ctx};
pub use patchnet::{PatchNet, PatchNetConfig, PatchNetOutput, PatchNetVariant, TrainabilityMap};
pub use restorenet::{RestoreNet, RestoreNetConfig};

use crate::autograd::{Binder, BnStats, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::rng;

/// Negative slope of every leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Number of 2× down-sampling stages that reduce a k×k patch to one value.
pub fn num_stages(k: usize) -> Result<usize> {
    if k < 2 || !k.is_power_of_two() {
        return Err(Error::config(format!("patch size {k} is not a power of two >= 2")));
    }
    Ok(k.trailing_zeros() as usize)
}

/// Named tensors that make up a model's persistent state.
pub trait ModelState {
    fn state_tensors(&self) -> BTreeMap<String, crate::autograd::Tensor>;
    fn load_state(&mut self, tensors: &BTreeMap<String, crate::autograd::Tensor>) -> Result<()>;
}

/// A single residual block with its own parameters.
pub struct BlockModel {
    pub params: ParamStore,
    pub bn: Vec<BnStats>,
    pub block: ResBlock,
}

pub fn build_res_block(config: ResBlockConfig, seed: u64) -> Result<BlockModel> {
    let mut r = rng::rng_for(&[seed, rng::stream::INIT, 3]);
    let mut b = layers::Builder::new(&mut r);
    let block = ResBlock::build(&mut b, "block", config, 1.0)?;
    Ok(BlockModel {
        params: b.params,
        bn: b.bn,
        block,
    })
}

impl BlockModel {
    pub fn forward<'a>(
        &'a mut self,
        tape: &mut Tape,
        x: Var,
        training: bool,
        track: bool,
    ) -> Result<(Var, Binder<'a>)> {
        let mut ctx = Ctx {
            tape,
            binder: Binder::new(&self.params, track),
            bn: &mut self.bn,
            training,
        };
        let y = self.block.forward(&mut ctx, x)?;
        Ok((y, ctx.binder))
    }
}
