use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Planar linear-RGB image, channel-major (3 × H × W).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 3 * height * width {
            return Err(Error::shape(format!(
                "{height}x{width} RGB image needs {} samples, got {}",
                3 * height * width,
                data.len()
            )));
        }
        Ok(Image { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * height * width);
        for v in rgb {
            data.extend(std::iter::repeat(v).take(height * width));
        }
        Image { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, [0.0; 3])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn clamped(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// Copies a rectangular window (rows `y0..y0+h`, cols `x0..x0+w`).
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Image {
        let mut out = Image::zeros(h, w);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    out.set(c, y, x, self.get(c, y0 + y, x0 + x));
                }
            }
        }
        out
    }

    pub fn into_tensor(self) -> Tensor {
        Tensor::new(vec![1, 3, self.height, self.width], self.data).expect("sizes agree")
    }

    /// Splits an (N, 3, H, W) tensor into images.
    pub fn batch_from_tensor(t: &Tensor) -> Result<Vec<Image>> {
        let (n, c, h, w) = t.dims4()?;
        if c != 3 {
            return Err(Error::shape(format!("expected 3 channels, got {c}")));
        }
        Ok(t.data()
            .chunks_exact(3 * h * w)
            .take(n)
            .map(|d| Image {
                height: h,
                width: w,
                data: d.to_vec(),
            })
            .collect())
    }

    /// Stacks same-sized images into (N, 3, H, W).
    pub fn stack(images: &[&Image]) -> Result<Tensor> {
        let first = images.first().ok_or_else(|| Error::shape("cannot stack zero images"))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::with_capacity(images.len() * 3 * h * w);
        for im in images {
            if im.height != h || im.width != w {
                return Err(Error::shape(format!(
                    "stack: {}x{} image in a {h}x{w} batch",
                    im.height, im.width
                )));
            }
            data.extend_from_slice(&im.data);
        }
        Tensor::new(vec![images.len(), 3, h, w], data)
    }
}

/// Single-plane sensor image.
#[derive(Clone, Debug, PartialEq)]
pub struct Raw {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Raw {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "{height}x{width} raw needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Raw { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }
}
