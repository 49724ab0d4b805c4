//! Procedural image corpus: generators, image files, the manifest, patch
//! tiling and the training sample stream.

mod gen;
mod manifest;
mod patches;
pub mod pnm;

pub use gen::{gen_image, ImageKind, ImageSpec};
pub use manifest::{
    corpus_specs, generate_corpus, CorpusConfig, CorpusManifest, Difficulty, ManifestEntry, Split, MANIFEST_FILE,
};
pub use patches::{make_patch_grid, PatchGrid, PatchRect, AUGMENT_PAD};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// One epoch's shuffled visiting order over several sources. Source `i`
/// has `sizes[i]` items, each repeated `oversample[i]` times. Items are
/// `(source, index)` pairs.
pub fn sample_stream(sizes: &[usize], oversample: &[usize], seed: u64, epoch: u64) -> Result<Vec<(usize, usize)>> {
    if sizes.len() != oversample.len() {
        return Err(Error::config(format!(
            "{} sources but {} oversampling factors",
            sizes.len(),
            oversample.len()
        )));
    }
    let mut order = Vec::new();
    for (src, (&n, &rep)) in sizes.iter().zip(oversample).enumerate() {
        for _ in 0..rep {
            order.extend((0..n).map(|i| (src, i)));
        }
    }
    order.shuffle(&mut rng::rng_for(&[seed, rng::stream::SHUFFLE, epoch]));
    Ok(order)
}
