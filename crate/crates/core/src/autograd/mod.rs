//! Dense `f64` tensors, a reverse-mode tape, the layer primitives the
//! networks need, and the Adam optimizer with its cosine schedule.

mod kernels;
pub mod optim;
pub mod param;
pub mod tape;
pub mod tensor;

pub use optim::{cosine_lr, AdamConfig, AdamState, LrSchedule, DEFAULT_BASE_LR};
pub use param::{Binder, Param, ParamId, ParamStore};
pub use tape::{sigmoid, softplus, BnStats, Gradients, Tape, Var, NO_SEGMENT};
pub use tensor::Tensor;
