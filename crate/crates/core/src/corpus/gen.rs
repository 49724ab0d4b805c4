use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ImageKind {
    Flat,
    Gradient,
    SmoothNoise,
    Sinusoid,
    Checkerboard,
    Stripes,
    MixedCollage,
}

impl ImageKind {
    pub const EASY: [ImageKind; 3] = [ImageKind::Flat, ImageKind::Gradient, ImageKind::SmoothNoise];
    pub const HARD: [ImageKind; 4] = [
        ImageKind::Sinusoid,
        ImageKind::Checkerboard,
        ImageKind::Stripes,
        ImageKind::MixedCollage,
    ];

    /// Periodic and high-frequency kinds are hard to demosaic.
    pub fn is_hard(self) -> bool {
        Self::HARD.contains(&self)
    }

    pub fn name(self) -> &'static str {
        match self {
            ImageKind::Flat => "flat",
            ImageKind::Gradient => "gradient",
            ImageKind::SmoothNoise => "smooth-noise",
            ImageKind::Sinusoid => "sinusoid",
            ImageKind::Checkerboard => "checkerboard",
            ImageKind::Stripes => "stripes",
            ImageKind::MixedCollage => "mixed-collage",
        }
    }
}

impl fmt::Display for ImageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ImageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::EASY
            .iter()
            .chain(Self::HARD.iter())
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown image kind {s:?}")))
    }
}

/// Full description of a procedural image. `frequency` is in cycles per
/// image width for the periodic kinds and lattice cells per image for
/// smooth noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageSpec {
    pub kind: ImageKind,
    pub height: usize,
    pub width: usize,
    pub frequency: f64,
    pub angle: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub seed: u64,
}

impl ImageSpec {
    /// Draws the kind-specific parameters from `seed`.
    pub fn from_seed(kind: ImageKind, height: usize, width: usize, seed: u64) -> Self {
        let mut r = rng::rng_for(&[seed, rng::stream::IMAGE]);
        let w = width as f64;
        let (frequency, angle, amplitude, offset) = match kind {
            ImageKind::Flat => (0.0, 0.0, r.gen_range(0.0..0.3), r.gen_range(0.3..0.7)),
            ImageKind::Gradient => (
                0.0,
                r.gen_range(0.0..2.0 * PI),
                r.gen_range(0.1..0.5),
                r.gen_range(0.3..0.7),
            ),
            ImageKind::SmoothNoise => (
                r.gen_range(1.5..4.0),
                0.0,
                r.gen_range(0.1..0.35),
                r.gen_range(0.35..0.65),
            ),
            ImageKind::Sinusoid => (
                w / r.gen_range(3.0..8.0),
                r.gen_range(0.0..PI),
                r.gen_range(0.25..0.45),
                r.gen_range(0.45..0.55),
            ),
            ImageKind::Checkerboard => (
                w / [4.0, 6.0, 8.0][r.gen_range(0..3)],
                0.0,
                r.gen_range(0.25..0.45),
                r.gen_range(0.45..0.55),
            ),
            ImageKind::Stripes => (
                w / r.gen_range(3.0..8.0),
                [0.0, PI / 2.0, PI / 4.0, r.gen_range(0.0..PI)][r.gen_range(0..4)],
                r.gen_range(0.25..0.45),
                r.gen_range(0.45..0.55),
            ),
            ImageKind::MixedCollage => (0.0, 0.0, 0.0, 0.0),
        };
        ImageSpec {
            kind,
            height,
            width,
            frequency,
            angle,
            amplitude,
            offset,
            seed,
        }
    }
}

/// Renders `spec`. Values leaving [0, 1] are clamped with a warning.
pub fn gen_image(spec: &ImageSpec) -> Result<Image> {
    let (h, w) = (spec.height, spec.width);
    if h == 0 || w == 0 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::config(format!(
            "image dims must be even and non-zero, got {h}x{w}"
        )));
    }
    if !spec.amplitude.is_finite() || !spec.offset.is_finite() || !spec.frequency.is_finite() {
        return Err(Error::config("image spec has non-finite parameters"));
    }
    let mut r = rng::rng_for(&[spec.seed, rng::stream::IMAGE, 1]);
    let phases: [f64; 3] = std::array::from_fn(|_| r.gen_range(0.0..2.0 * PI));
    // textures share a phase up to a small per-channel jitter, so the
    // channels stay correlated the way real textures are
    let base = r.gen_range(0.0..2.0 * PI);
    let tex_phase: [f64; 3] = std::array::from_fn(|_| base + r.gen_range(-0.35..0.35));
    let gain: [f64; 3] = std::array::from_fn(|_| r.gen_range(0.6..1.0));
    let (a, o) = (spec.amplitude, spec.offset);
    let (ca, sa) = (spec.angle.cos(), spec.angle.sin());
    let mut img = Image::zeros(h, w);
    match spec.kind {
        ImageKind::Flat => fill(&mut img, |c, _, _| o + a * phases[c].sin()),
        ImageKind::Gradient => {
            let extent = (h.max(w)) as f64;
            fill(&mut img, |c, y, x| {
                let proj = ((x as f64 - w as f64 / 2.0) * ca + (y as f64 - h as f64 / 2.0) * sa) / extent;
                o + a * phases[c].cos() * proj
            })
        }
        ImageKind::SmoothNoise => {
            let cells = spec.frequency.max(1.0).ceil() as usize;
            let lattice: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..(cells + 1) * (cells + 1)).map(|_| r.gen_range(-1.0..1.0)).collect())
                .collect();
            fill(&mut img, |c, y, x| {
                let fy = y as f64 / h as f64 * cells as f64;
                let fx = x as f64 / w as f64 * cells as f64;
                let (iy, ix) = (fy.floor() as usize, fx.floor() as usize);
                let (ty, tx) = (smoothstep(fy - iy as f64), smoothstep(fx - ix as f64));
                let at = |yy: usize, xx: usize| lattice[c][yy.min(cells) * (cells + 1) + xx.min(cells)];
                let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
                let bot = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
                o + a * (top * (1.0 - ty) + bot * ty)
            })
        }
        ImageKind::Sinusoid => {
            let k = 2.0 * PI * spec.frequency / w as f64;
            fill(&mut img, |c, y, x| {
                o + a * gain[c] * (k * (x as f64 * ca + y as f64 * sa) + tex_phase[c]).sin()
            })
        }
        ImageKind::Checkerboard => {
            let cell = ((w as f64 / spec.frequency.max(1e-9)) / 2.0).round().max(1.0) as usize;
            fill(&mut img, |c, y, x| {
                let s = if (y / cell + x / cell) % 2 == 0 { 1.0 } else { -1.0 };
                o + s * a * gain[c]
            })
        }
        ImageKind::Stripes => {
            let k = spec.frequency / w as f64;
            fill(&mut img, |c, y, x| {
                let u = (x as f64 * ca + y as f64 * sa) * k;
                let s = if u - u.floor() < 0.35 { 1.0 } else { -1.0 };
                o + s * a * gain[c]
            })
        }
        ImageKind::MixedCollage => {
            let (hh, hw) = (h / 2, w / 2);
            for q in 0..4usize {
                let pool: Vec<ImageKind> = ImageKind::EASY.iter().chain(&ImageKind::HARD[..3]).copied().collect();
                let kind = pool[r.gen_range(0..pool.len())];
                let sub =
                    ImageSpec::from_seed(kind, hh + hh % 2, hw + hw % 2, rng::derive_seed(&[spec.seed, q as u64]));
                let tile = gen_image(&sub)?;
                let (y0, x0) = ((q / 2) * hh, (q % 2) * hw);
                for c in 0..3 {
                    for y in 0..hh {
                        for x in 0..hw {
                            img.set(c, y0 + y, x0 + x, tile.get(c, y, x));
                        }
                    }
                }
            }
        }
    }
    let mut clamped = 0usize;
    for v in img.data_mut() {
        if !(0.0..=1.0).contains(v) {
            clamped += 1;
            *v = v.clamp(0.0, 1.0);
        }
    }
    if clamped > 0 {
        log::warn!("{} image: clamped {clamped} samples into [0, 1]", spec.kind);
    }
    Ok(img)
}

fn fill(img: &mut Image, f: impl Fn(usize, usize, usize) -> f64) {
    for c in 0..3 {
        for y in 0..img.height() {
            for x in 0..img.width() {
                img.set(c, y, x, f(c, y, x));
            }
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}
