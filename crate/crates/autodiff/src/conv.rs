//! Strided 2D convolution kernels on NHWC buffers, lowered to GEMM through
//! im2col / col2im. Kernels are laid out `kh × kw × c_in × c_out`.

use crate::scalar::Scalar;

/// Zero padding added around the spatial dims before a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const ZERO: Padding = Padding {
        top: 0,
        bottom: 0,
        left: 0,
        right: 0,
    };

    /// Padding for a kernel of the given extent that makes a stride-`s`
    /// convolution map an even extent `n` to `n / s`.
    ///
    /// Even kernels pad `k/2 - 1` before and `k/2` after; odd kernels pad
    /// `(k - 1)/2` on both sides.
    pub fn same_halving_1d(k: usize) -> (usize, usize) {
        if k % 2 == 0 {
            (k / 2 - 1, k / 2)
        } else {
            ((k - 1) / 2, (k - 1) / 2)
        }
    }

    pub fn same_halving(kh: usize, kw: usize) -> Self {
        let (top, bottom) = Self::same_halving_1d(kh);
        let (left, right) = Self::same_halving_1d(kw);
        Padding {
            top,
            bottom,
            left,
            right,
        }
    }
}

/// Full description of one forward convolution (the "big" side is the input).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub sh: usize,
    pub sw: usize,
    pub pad: Padding,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    /// Returns `None` when the padded input is smaller than the kernel.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        h: usize,
        w: usize,
        cin: usize,
        kh: usize,
        kw: usize,
        cout: usize,
        stride: (usize, usize),
        pad: Padding,
    ) -> Option<Self> {
        let (sh, sw) = stride;
        if sh == 0 || sw == 0 {
            return None;
        }
        let ph = h + pad.top + pad.bottom;
        let pw = w + pad.left + pad.right;
        if ph < kh || pw < kw {
            return None;
        }
        Some(Self {
            n,
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            sh,
            sw,
            pad,
            oh: (ph - kh) / sh + 1,
            ow: (pw - kw) / sw + 1,
        })
    }

    pub fn input_len(&self) -> usize {
        self.n * self.h * self.w * self.cin
    }

    pub fn output_len(&self) -> usize {
        self.n * self.oh * self.ow * self.cout
    }

    pub fn rows(&self) -> usize {
        self.n * self.oh * self.ow
    }

    pub fn patch(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    /// Input row index for output row `o` and kernel tap `k`, if inside the image.
    #[inline]
    fn src(&self, o: usize, k: usize, stride: usize, pad_before: usize, extent: usize) -> Option<usize> {
        let pos = (o * stride + k) as isize - pad_before as isize;
        if pos >= 0 && (pos as usize) < extent {
            Some(pos as usize)
        } else {
            None
        }
    }
}

/// Gather input patches into a `rows × patch` matrix.
pub fn im2col<T: Scalar>(g: &ConvGeometry, input: &[T]) -> Vec<T> {
    let patch = g.patch();
    let mut cols = vec![T::zero(); g.rows() * patch];
    let cin = g.cin;
    for b in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = (b * g.oh + oy) * g.ow + ox;
                let dst = &mut cols[row * patch..(row + 1) * patch];
                for ky in 0..g.kh {
                    let Some(iy) = g.src(oy, ky, g.sh, g.pad.top, g.h) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = g.src(ox, kx, g.sw, g.pad.left, g.w) else {
                            continue;
                        };
                        let s = ((b * g.h + iy) * g.w + ix) * cin;
                        let d = (ky * g.kw + kx) * cin;
                        dst[d..d + cin].copy_from_slice(&input[s..s + cin]);
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add a `rows × patch` matrix back onto an input-shaped buffer.
pub fn col2im<T: Scalar>(g: &ConvGeometry, cols: &[T]) -> Vec<T> {
    let patch = g.patch();
    let mut out = vec![T::zero(); g.input_len()];
    let cin = g.cin;
    for b in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = (b * g.oh + oy) * g.ow + ox;
                let src = &cols[row * patch..(row + 1) * patch];
                for ky in 0..g.kh {
                    let Some(iy) = g.src(oy, ky, g.sh, g.pad.top, g.h) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = g.src(ox, kx, g.sw, g.pad.left, g.w) else {
                            continue;
                        };
                        let d = ((b * g.h + iy) * g.w + ix) * cin;
                        let s = (ky * g.kw + kx) * cin;
                        for c in 0..cin {
                            out[d + c] += src[s + c];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Forward convolution. Returns the output and the im2col buffer.
pub fn conv_forward<T: Scalar>(g: &ConvGeometry, input: &[T], kernel: &[T]) -> (Vec<T>, Vec<T>) {
    let cols = im2col(g, input);
    let mut out = vec![T::zero(); g.output_len()];
    T::gemm(g.rows(), g.patch(), g.cout, &cols, false, kernel, false, T::zero(), &mut out);
    (out, cols)
}

/// Gradient of a convolution w.r.t. its input, given the output gradient.
/// This is also the forward pass of the transposed convolution.
pub fn conv_input_grad<T: Scalar>(g: &ConvGeometry, grad_out: &[T], kernel: &[T]) -> Vec<T> {
    let mut dcols = vec![T::zero(); g.rows() * g.patch()];
    T::gemm(g.rows(), g.cout, g.patch(), grad_out, false, kernel, true, T::zero(), &mut dcols);
    col2im(g, &dcols)
}

/// Gradient of a convolution w.r.t. its kernel, from the im2col buffer.
pub fn conv_kernel_grad<T: Scalar>(g: &ConvGeometry, cols: &[T], grad_out: &[T]) -> Vec<T> {
    let mut dk = vec![T::zero(); g.patch() * g.cout];
    T::gemm(g.patch(), g.rows(), g.cout, cols, true, grad_out, false, T::zero(), &mut dk);
    dk
}
