use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Total zero padding per axis added by augmentation, before extending
/// to a multiple of the patch size.
pub const AUGMENT_PAD: usize = 64;

/// Placement of an `height x width` image inside a zero-padded canvas
/// tiled by `patch_size` squares.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub height: usize,
    pub width: usize,
    pub patch_size: usize,
    pub pad_top: usize,
    pub pad_bottom: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

/// Image-space rectangle covered by one patch, half-open.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchRect {
    pub y0: usize,
    pub y1: usize,
    pub x0: usize,
    pub x1: usize,
}

impl PatchRect {
    pub fn area(&self) -> usize {
        (self.y1 - self.y0) * (self.x1 - self.x0)
    }
}

/// With `augment`, a random split of [`AUGMENT_PAD`] pixels goes on each
/// side of both axes; otherwise the padding is the minimum needed and is
/// centered. Any remainder up to a multiple of `k` goes bottom/right.
pub fn make_patch_grid(height: usize, width: usize, k: usize, augment: bool, seed: u64) -> Result<PatchGrid> {
    if k == 0 {
        return Err(Error::config("patch size must be positive"));
    }
    if height == 0 || width == 0 {
        return Err(Error::shape(format!("cannot tile a {height}x{width} image")));
    }
    let split = |len: usize, r: &mut rand_chacha::ChaCha8Rng| {
        let (lead, trail) = if augment {
            let lead = r.gen_range(0..=AUGMENT_PAD);
            (lead, AUGMENT_PAD - lead)
        } else {
            let total = (k - len % k) % k;
            (total / 2, total - total / 2)
        };
        let extra = (k - (len + lead + trail) % k) % k;
        (lead, trail + extra)
    };
    let mut r = rng::rng_for(&[seed, rng::stream::PAD]);
    let (pad_top, pad_bottom) = split(height, &mut r);
    let (pad_left, pad_right) = split(width, &mut r);
    Ok(PatchGrid {
        height,
        width,
        patch_size: k,
        pad_top,
        pad_bottom,
        pad_left,
        pad_right,
    })
}

impl PatchGrid {
    pub fn padded_height(&self) -> usize {
        self.height + self.pad_top + self.pad_bottom
    }

    pub fn padded_width(&self) -> usize {
        self.width + self.pad_left + self.pad_right
    }

    pub fn grid_h(&self) -> usize {
        self.padded_height() / self.patch_size
    }

    pub fn grid_w(&self) -> usize {
        self.padded_width() / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid_h() * self.grid_w()
    }

    /// Image pixels covered by patch `(gy, gx)`; empty when it lies
    /// entirely in the padding.
    pub fn patch_rect(&self, gy: usize, gx: usize) -> PatchRect {
        let k = self.patch_size;
        let clip = |start: usize, pad: usize, len: usize| {
            let a = start.saturating_sub(pad).min(len);
            let b = (start + k).saturating_sub(pad).min(len);
            (a, b)
        };
        let (y0, y1) = clip(gy * k, self.pad_top, self.height);
        let (x0, x1) = clip(gx * k, self.pad_left, self.width);
        PatchRect { y0, y1, x0, x1 }
    }

    pub fn valid_fraction(&self, gy: usize, gx: usize) -> f64 {
        self.patch_rect(gy, gx).area() as f64 / (self.patch_size * self.patch_size) as f64
    }

    /// A patch counts unless more than half of it is padding.
    pub fn is_valid(&self, gy: usize, gx: usize) -> bool {
        2 * self.patch_rect(gy, gx).area() >= self.patch_size * self.patch_size
    }

    /// Row-major validity of every patch.
    pub fn valid_mask(&self) -> Vec<bool> {
        (0..self.grid_h())
            .flat_map(|gy| (0..self.grid_w()).map(move |gx| (gy, gx)))
            .map(|(gy, gx)| self.is_valid(gy, gx))
            .collect()
    }

    /// Patch id (offset by `base`) of every sample of a planar
    /// `3 x height x width` image.
    pub fn segment_ids(&self, base: u32) -> Vec<u32> {
        let k = self.patch_size;
        let gw = self.grid_w();
        let plane: Vec<u32> = (0..self.height)
            .flat_map(|y| {
                let gy = (y + self.pad_top) / k;
                (0..self.width).map(move |x| base + (gy * gw + (x + self.pad_left) / k) as u32)
            })
            .collect();
        let mut ids = Vec::with_capacity(plane.len() * 3);
        for _ in 0..3 {
            ids.extend_from_slice(&plane);
        }
        ids
    }
}
