//! Bayer degradation model (mask, clean raw, additive Gaussian noise), the
//! packed network input, a bilinear demosaic reference, and PSNR.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::image::{Image, Raw};

/// PSNR reported when two images agree to within `MSE < 1e-12`.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    R = 0,
    G = 1,
    B = 2,
}

/// 2×2 colour filter layout, row-major: `[(0,0), (0,1), (1,0), (1,1)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BayerPattern([Channel; 4]);

impl Default for BayerPattern {
    fn default() -> Self {
        Self::RGGB
    }
}

impl BayerPattern {
    pub const RGGB: BayerPattern = BayerPattern([Channel::R, Channel::G, Channel::G, Channel::B]);
    pub const BGGR: BayerPattern = BayerPattern([Channel::B, Channel::G, Channel::G, Channel::R]);
    pub const GRBG: BayerPattern = BayerPattern([Channel::G, Channel::R, Channel::B, Channel::G]);
    pub const GBRG: BayerPattern = BayerPattern([Channel::G, Channel::B, Channel::R, Channel::G]);

    pub fn new(layout: [Channel; 4]) -> Result<Self> {
        let count = |c| layout.iter().filter(|&&l| l == c).count();
        let p = BayerPattern(layout);
        if count(Channel::R) != 1 || count(Channel::B) != 1 || count(Channel::G) != 2 {
            return Err(Error::config(format!("{layout:?} is not a Bayer layout")));
        }
        // the two greens must sit on a diagonal
        let diag = |a: usize, b: usize| layout[a] == Channel::G && layout[b] == Channel::G;
        if !(diag(0, 3) || diag(1, 2)) {
            return Err(Error::config(format!("{layout:?} greens are not diagonal")));
        }
        Ok(p)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let chans: Vec<Channel> = s
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'R' => Ok(Channel::R),
                'G' => Ok(Channel::G),
                'B' => Ok(Channel::B),
                _ => Err(Error::config(format!("bad Bayer pattern {s:?}"))),
            })
            .collect::<Result<_>>()?;
        let arr: [Channel; 4] = chans
            .try_into()
            .map_err(|_| Error::config(format!("bad Bayer pattern {s:?}")))?;
        Self::new(arr)
    }

    /// Lowercase layout string such as `rggb`.
    pub fn name(&self) -> String {
        self.0
            .iter()
            .map(|c| match c {
                Channel::R => 'r',
                Channel::G => 'g',
                Channel::B => 'b',
            })
            .collect()
    }

    pub fn layout(&self) -> [Channel; 4] {
        self.0
    }

    #[inline]
    pub fn channel_at(&self, y: usize, x: usize) -> Channel {
        self.0[(y & 1) * 2 + (x & 1)]
    }

    fn site_of(&self, c: Channel) -> (usize, usize) {
        let i = self.0.iter().position(|&l| l == c).expect("valid layout");
        (i / 2, i % 2)
    }

    /// Offsets of the packed planes: R, G on the red row, G on the blue row, B.
    pub fn packed_sites(&self) -> [(usize, usize); 4] {
        let r = self.site_of(Channel::R);
        let b = self.site_of(Channel::B);
        [r, (r.0, 1 - r.1), (b.0, 1 - b.1), b]
    }
}

fn check_even(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!(
            "Bayer data needs even non-zero dims, got {h}x{w}"
        )));
    }
    Ok(())
}

/// Binary 3-plane mask with exactly one active channel per pixel.
pub fn bayer_mask(height: usize, width: usize, pattern: BayerPattern) -> Result<Image> {
    check_even(height, width)?;
    let mut m = Image::zeros(height, width);
    for y in 0..height {
        for x in 0..width {
            m.set(pattern.channel_at(y, x) as usize, y, x, 1.0);
        }
    }
    Ok(m)
}

/// Clean raw: each pixel keeps the channel its filter passes.
pub fn mosaic_apply(image: &Image, pattern: BayerPattern) -> Result<Raw> {
    let (h, w) = (image.height(), image.width());
    check_even(h, w)?;
    if image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        log::warn!("mosaic_apply: image has values outside [0, 1]; passing them through");
    }
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            data.push(image.get(pattern.channel_at(y, x) as usize, y, x));
        }
    }
    Raw::new(h, w, data)
}

/// Places raw samples back into their channel planes, zeros elsewhere.
pub fn embed_raw(raw: &Raw, pattern: BayerPattern) -> Image {
    let mut im = Image::zeros(raw.height(), raw.width());
    for y in 0..raw.height() {
        for x in 0..raw.width() {
            im.set(pattern.channel_at(y, x) as usize, y, x, raw.get(y, x));
        }
    }
    im
}

/// Adds i.i.d. zero-mean Gaussian noise with standard deviation `sigma`
/// (on the [0, 1] scale). Values are not clamped.
pub fn add_noise(raw: &Raw, sigma: f64, seed: u64) -> Result<Raw> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::config(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(raw.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = raw.clone();
    for v in out.data_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * z;
    }
    Ok(out)
}

/// Converts a noise level on the 8-bit scale to the [0, 1] scale.
pub fn sigma_from_8bit(sigma_8bit: f64) -> f64 {
    sigma_8bit / 255.0
}

/// Ground truth with its clean and noisy raw renderings.
#[derive(Clone, Debug, PartialEq)]
pub struct MosaicSample {
    pub ground_truth: Image,
    pub clean_raw: Raw,
    pub noisy_raw: Raw,
    pub sigma: f64,
    pub pattern: BayerPattern,
    pub seed: u64,
}

impl MosaicSample {
    pub fn degrade(ground_truth: Image, pattern: BayerPattern, sigma: f64, seed: u64) -> Result<Self> {
        let clean_raw = mosaic_apply(&ground_truth, pattern)?;
        let noisy_raw = add_noise(&clean_raw, sigma, seed)?;
        Ok(MosaicSample {
            ground_truth,
            clean_raw,
            noisy_raw,
            sigma,
            pattern,
            seed,
        })
    }
}

/// Packs a raw into a (4, H/2, W/2) tensor: R, G(red row), G(blue row), B.
pub fn pack_raw(raw: &Raw, pattern: BayerPattern) -> Result<Tensor> {
    let (h, w) = (raw.height(), raw.width());
    check_even(h, w)?;
    let (hh, hw) = (h / 2, w / 2);
    let mut data = Vec::with_capacity(h * w);
    for (dy, dx) in pattern.packed_sites() {
        for y in 0..hh {
            for x in 0..hw {
                data.push(raw.get(2 * y + dy, 2 * x + dx));
            }
        }
    }
    Tensor::new(vec![4, hh, hw], data)
}

/// Inverse of [`pack_raw`].
pub fn unpack_raw(packed: &Tensor, pattern: BayerPattern) -> Result<Raw> {
    let (hh, hw) = match packed.shape() {
        &[4, hh, hw] => (hh, hw),
        s => return Err(Error::shape(format!("packed raw must be (4, h, w), got {s:?}"))),
    };
    let mut data = vec![0.0; 4 * hh * hw];
    let w = 2 * hw;
    for (p, (dy, dx)) in pattern.packed_sites().into_iter().enumerate() {
        for y in 0..hh {
            for x in 0..hw {
                data[(2 * y + dy) * w + 2 * x + dx] = packed.data()[(p * hh + y) * hw + x];
            }
        }
    }
    Raw::new(2 * hh, w, data)
}

const GREEN_KERNEL: [[f64; 3]; 3] = [[0.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 0.0]];
const RB_KERNEL: [[f64; 3]; 3] = [[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]];

/// Bilinear interpolation of the missing samples of every channel.
///
/// Evaluated as a normalized convolution over the available same-channel
/// neighbours, which in the interior is ordinary bilinear interpolation and
/// at the border reuses the nearest same-channel sample (edge replication).
/// Sampled sites are returned unchanged.
pub fn bilinear_demosaic(raw: &Raw, pattern: BayerPattern) -> Result<Image> {
    let (h, w) = (raw.height(), raw.width());
    check_even(h, w)?;
    let mut out = Image::zeros(h, w);
    for (c, kernel) in [
        (Channel::R, &RB_KERNEL),
        (Channel::G, &GREEN_KERNEL),
        (Channel::B, &RB_KERNEL),
    ] {
        for y in 0..h {
            for x in 0..w {
                if pattern.channel_at(y, x) == c {
                    out.set(c as usize, y, x, raw.get(y, x));
                    continue;
                }
                let (mut num, mut den) = (0.0, 0.0);
                for (ky, row) in kernel.iter().enumerate() {
                    let yy = y as isize + ky as isize - 1;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for (kx, &k) in row.iter().enumerate() {
                        let xx = x as isize + kx as isize - 1;
                        if k == 0.0 || xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let (yy, xx) = (yy as usize, xx as usize);
                        if pattern.channel_at(yy, xx) == c {
                            num += k * raw.get(yy, xx);
                            den += k;
                        }
                    }
                }
                out.set(c as usize, y, x, num / den);
            }
        }
    }
    Ok(out)
}

/// Mean squared error after clamping both inputs to [0, 1].
pub fn clamped_mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("mse: {} vs {} samples", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::shape("mse of empty inputs"));
    }
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.clamp(0.0, 1.0) - y.clamp(0.0, 1.0);
            d * d
        })
        .sum();
    Ok(s / a.len() as f64)
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse < 1e-12 {
        PSNR_CAP_DB
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// PSNR in dB over raw sample slices, inputs clamped to [0, 1].
pub fn psnr_slices(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(clamped_mse(a, b)?, peak))
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::shape(format!(
            "psnr: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    psnr_slices(a.data(), b.data(), 1.0)
}
