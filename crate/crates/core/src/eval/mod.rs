//! Evaluation: PSNR reports, per-patch PSNR histograms and trainability
//! map export. Reports and histograms only ever run the restoration
//! network; the selector network is confined to [`maps`].

pub mod maps;
mod report;

pub use maps::{export_maps, patchnet_from_checkpoint, spearman, trainability_maps, MapExport, PatchStat};
pub use report::{
    degrade_for_eval, eval_seed, evaluate, patch_histogram, patch_psnrs, EvalOptions, EvalReport, Histogram, Restorer,
    SigmaRow, EVAL_SEED,
};
