//! Dense kernels behind the tape operations. Every reduction runs in a fixed
//! order so repeated evaluations are bit-identical.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// C = A·B + beta·C with optional transposes; A is m×k, B is k×n after
/// transposition, all buffers row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover exactly m*k, k*n and m*n elements (checked
    // above in debug builds and by every caller's shape validation), and the
    // strides describe those layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output columns `[lo, hi)` whose input column `ox*stride + kx - pad`
/// falls inside the image.
fn valid_cols(g: &ConvGeom, kx: usize) -> (usize, usize) {
    let lo = (g.pad.saturating_sub(kx)).div_ceil(g.stride).min(g.wo);
    let hi = if g.w + g.pad > kx {
        ((g.w + g.pad - kx - 1) / g.stride + 1).min(g.wo)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let plane = g.ho * g.wo;
    for c in 0..g.cin {
        let src = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_cols(g, kx);
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let out = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let srow = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    out[..lo].fill(0.0);
                    out[hi..].fill(0.0);
                    if hi > lo {
                        let ix0 = lo * g.stride + kx - g.pad;
                        if g.stride == 1 {
                            out[lo..hi].copy_from_slice(&srow[ix0..ix0 + hi - lo]);
                        } else {
                            for (i, o) in out[lo..hi].iter_mut().enumerate() {
                                *o = srow[ix0 + i * g.stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let plane = g.ho * g.wo;
    for c in 0..g.cin {
        let dst = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_cols(g, kx);
                if hi <= lo {
                    continue;
                }
                let ix0 = lo * g.stride + kx - g.pad;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let drow = &mut dst[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let srow = &src[oy * g.wo + lo..oy * g.wo + hi];
                    if g.stride == 1 {
                        drow[ix0..ix0 + hi - lo].iter_mut().zip(srow).for_each(|(d, s)| *d += s);
                    } else {
                        for (i, s) in srow.iter().enumerate() {
                            drow[ix0 + i * g.stride] += s;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(x: &[f64], w: &[f64], b: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let plane = g.ho * g.wo;
    let k = g.k();
    let mut out = vec![0.0; g.n * g.cout * plane];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![0.0; k * plane]
    };
    for n in 0..g.n {
        let xn = &x[n * g.cin * g.h * g.w..(n + 1) * g.cin * g.h * g.w];
        let yn = &mut out[n * g.cout * plane..(n + 1) * g.cout * plane];
        if let Some(b) = b {
            for (co, row) in yn.chunks_exact_mut(plane).enumerate() {
                row.fill(b[co]);
            }
        }
        let src: &[f64] = if g.is_pointwise() {
            xn
        } else {
            im2col(xn, g, &mut cols);
            &cols
        };
        gemm(
            g.cout,
            k,
            plane,
            w,
            false,
            src,
            false,
            if b.is_some() { 1.0 } else { 0.0 },
            yn,
        );
    }
    out
}

pub(crate) struct ConvGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
}

pub(crate) fn conv2d_backward(x: &[f64], w: &[f64], dy: &[f64], g: &ConvGeom, need: (bool, bool, bool)) -> ConvGrads {
    let (need_dx, need_dw, need_db) = need;
    let plane = g.ho * g.wo;
    let k = g.k();
    let in_sz = g.cin * g.h * g.w;
    let mut dx = need_dx.then(|| vec![0.0; g.n * in_sz]);
    let mut dw = need_dw.then(|| vec![0.0; g.cout * k]);
    let mut db = need_db.then(|| vec![0.0; g.cout]);
    let pointwise = g.is_pointwise();
    let mut cols = if pointwise { Vec::new() } else { vec![0.0; k * plane] };
    let mut dcols = if pointwise || !need_dx {
        Vec::new()
    } else {
        vec![0.0; k * plane]
    };
    for n in 0..g.n {
        let xn = &x[n * in_sz..(n + 1) * in_sz];
        let dyn_ = &dy[n * g.cout * plane..(n + 1) * g.cout * plane];
        if let Some(db) = db.as_mut() {
            for (co, row) in dyn_.chunks_exact(plane).enumerate() {
                db[co] += row.iter().sum::<f64>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            let src: &[f64] = if pointwise {
                xn
            } else {
                im2col(xn, g, &mut cols);
                &cols
            };
            // dW += dY · colsᵀ
            gemm(g.cout, plane, k, dyn_, false, src, true, 1.0, dw);
        }
        if let Some(dx) = dx.as_mut() {
            let dxn = &mut dx[n * in_sz..(n + 1) * in_sz];
            if pointwise {
                gemm(k, g.cout, plane, w, true, dyn_, false, 0.0, dxn);
            } else {
                gemm(k, g.cout, plane, w, true, dyn_, false, 0.0, &mut dcols);
                col2im(&dcols, g, dxn);
            }
        }
    }
    ConvGrads { dx, dw, db }
}

pub(crate) fn avg_pool2_forward(x: &[f64], n: usize, c: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; n * c * ho * wo];
    for p in 0..n * c {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for oy in 0..ho {
            let r0 = &src[2 * oy * w..(2 * oy + 1) * w];
            let r1 = &src[(2 * oy + 1) * w..(2 * oy + 2) * w];
            for ox in 0..wo {
                dst[oy * wo + ox] = 0.25 * ((r0[2 * ox] + r0[2 * ox + 1]) + (r1[2 * ox] + r1[2 * ox + 1]));
            }
        }
    }
    out
}

pub(crate) fn avg_pool2_backward(dy: &[f64], n: usize, c: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut dx = vec![0.0; n * c * h * w];
    for p in 0..n * c {
        let src = &dy[p * ho * wo..(p + 1) * ho * wo];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = 0.25 * src[(y / 2) * wo + x / 2];
            }
        }
    }
    dx
}
