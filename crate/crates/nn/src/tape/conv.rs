//! Valid (unpadded) 2-D convolution over NHWC tensors via im2col + GEMM.

use crate::tensor::gemm;
use crate::{Float, NnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub ci: usize,
    pub kh: usize,
    pub kw: usize,
    pub co: usize,
    pub sh: usize,
    pub sw: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(input: &[usize], kernel: &[usize], stride: (usize, usize)) -> Result<Self> {
        let [n, h, w, ci] = *input else {
            return Err(NnError::shape("conv2d", format!("input must be [N,H,W,C], got {input:?}")));
        };
        let [kh, kw, kci, co] = *kernel else {
            return Err(NnError::shape("conv2d", format!("kernel must be [KH,KW,Cin,Cout], got {kernel:?}")));
        };
        if kci != ci {
            return Err(NnError::shape("conv2d", format!("kernel expects {kci} input channels, input has {ci}")));
        }
        if kh > h || kw > w {
            return Err(NnError::shape("conv2d", format!("kernel {kh}x{kw} larger than input {h}x{w}")));
        }
        let (sh, sw) = stride;
        if sh == 0 || sw == 0 {
            return Err(NnError::invalid("conv2d", "stride must be positive"));
        }
        Ok(ConvGeom { n, h, w, ci, kh, kw, co, sh, sw, oh: (h - kh) / sh + 1, ow: (w - kw) / sw + 1 })
    }

    pub fn rows(&self) -> usize {
        self.n * self.oh * self.ow
    }

    pub fn patch(&self) -> usize {
        self.kh * self.kw * self.ci
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.n, self.oh, self.ow, self.co]
    }
}

/// `[rows, patch]` matrix; for fixed `(n, oy, ox, ky)` the `(kx, c)` span is
/// one contiguous run of the input.
pub(crate) fn im2col<T: Float>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let run = g.kw * g.ci;
    let mut cols = Vec::with_capacity(g.rows() * g.patch());
    for n in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                for ky in 0..g.kh {
                    let iy = oy * g.sh + ky;
                    let start = ((n * g.h + iy) * g.w + ox * g.sw) * g.ci;
                    cols.extend_from_slice(&x[start..start + run]);
                }
            }
        }
    }
    cols
}

fn col2im<T: Float>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let run = g.kw * g.ci;
    let mut src = cols.chunks_exact(run);
    for n in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                for ky in 0..g.kh {
                    let iy = oy * g.sh + ky;
                    let start = ((n * g.h + iy) * g.w + ox * g.sw) * g.ci;
                    let chunk = src.next().expect("col buffer sized by geometry");
                    for (d, &c) in dx[start..start + run].iter_mut().zip(chunk) {
                        *d += c;
                    }
                }
            }
        }
    }
}

pub(crate) fn forward<T: Float>(x: &[T], kernel: &[T], g: &ConvGeom) -> Vec<T> {
    let cols = im2col(x, g);
    let mut y = vec![T::zero(); g.rows() * g.co];
    gemm(g.rows(), g.patch(), g.co, &cols, false, kernel, false, T::zero(), &mut y);
    y
}

pub(crate) fn backward_kernel<T: Float>(x: &[T], grad: &[T], g: &ConvGeom) -> Vec<T> {
    let cols = im2col(x, g);
    let mut dk = vec![T::zero(); g.patch() * g.co];
    gemm(g.patch(), g.rows(), g.co, &cols, true, grad, false, T::zero(), &mut dk);
    dk
}

pub(crate) fn backward_input<T: Float>(kernel: &[T], grad: &[T], g: &ConvGeom) -> Vec<T> {
    let mut dcols = vec![T::zero(); g.rows() * g.patch()];
    gemm(g.rows(), g.co, g.patch(), grad, false, kernel, true, T::zero(), &mut dcols);
    let mut dx = vec![T::zero(); g.n * g.h * g.w * g.ci];
    col2im(&dcols, g, &mut dx);
    dx
}
