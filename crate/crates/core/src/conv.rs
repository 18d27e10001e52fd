//! Patch-matrix convolution kernels shared by the tape's forward and
//! backward rules.

use alloc::vec;

use crate::real::Real;

#[derive(Debug, Clone, Copy)]
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
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn patch_len(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Expands one sample `[cin, h, w]` into `[cin*kh*kw, oh*ow]`.
fn im2col<T: Real>(g: &ConvGeom, input: &[T], cols: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.cin {
        let src = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src_row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds `[cin*kh*kw, oh*ow]` back into one sample `[cin, h, w]`.
fn col2im_add<T: Real>(g: &ConvGeom, cols: &[T], grad_in: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.cin {
        let dst = &mut grad_in[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, &v) in src[oy * g.ow..(oy + 1) * g.ow].iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst_row[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn forward<T: Real>(g: &ConvGeom, input: &[T], kernel: &[T], bias: Option<&[T]>, out: &mut [T]) {
    let plane = g.out_plane();
    let k = g.patch_len();
    let mut cols = if g.is_pointwise() { vec![] } else { vec![T::zero(); k * plane] };
    for s in 0..g.n {
        let x = &input[s * g.cin * g.h * g.w..(s + 1) * g.cin * g.h * g.w];
        let y = &mut out[s * g.cout * plane..(s + 1) * g.cout * plane];
        let patches: &[T] = if g.is_pointwise() {
            x
        } else {
            im2col(g, x, &mut cols);
            &cols
        };
        T::gemm(g.cout, k, plane, kernel, (k as isize, 1), patches, (plane as isize, 1), T::zero(), y, (plane as isize, 1));
        if let Some(b) = bias {
            for (row, &bv) in y.chunks_exact_mut(plane).zip(b) {
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
}

/// Accumulates the requested gradients of a convolution given the gradient
/// of its output.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    g: &ConvGeom,
    input: &[T],
    kernel: &[T],
    grad_out: &[T],
    grad_input: Option<&mut [T]>,
    grad_kernel: Option<&mut [T]>,
    grad_bias: Option<&mut [T]>,
) {
    let plane = g.out_plane();
    let k = g.patch_len();
    let pointwise = g.is_pointwise();

    if let Some(gb) = grad_bias {
        for s in 0..g.n {
            let gy = &grad_out[s * g.cout * plane..(s + 1) * g.cout * plane];
            for (acc, row) in gb.iter_mut().zip(gy.chunks_exact(plane)) {
                *acc += row.iter().copied().sum::<T>();
            }
        }
    }

    if let Some(gk) = grad_kernel {
        let mut cols = if pointwise { vec![] } else { vec![T::zero(); k * plane] };
        for s in 0..g.n {
            let x = &input[s * g.cin * g.h * g.w..(s + 1) * g.cin * g.h * g.w];
            let gy = &grad_out[s * g.cout * plane..(s + 1) * g.cout * plane];
            let patches: &[T] = if pointwise {
                x
            } else {
                im2col(g, x, &mut cols);
                &cols
            };
            // dK[cout, k] += dY[cout, plane] * patches^T[plane, k]
            T::gemm(g.cout, plane, k, gy, (plane as isize, 1), patches, (1, plane as isize), T::one(), gk, (k as isize, 1));
        }
    }

    if let Some(gi) = grad_input {
        let mut cols = vec![T::zero(); k * plane];
        for s in 0..g.n {
            let gy = &grad_out[s * g.cout * plane..(s + 1) * g.cout * plane];
            let gx = &mut gi[s * g.cin * g.h * g.w..(s + 1) * g.cin * g.h * g.w];
            if pointwise {
                // dX[cin, plane] += K^T[cin, cout] * dY[cout, plane]
                T::gemm(k, g.cout, plane, kernel, (1, k as isize), gy, (plane as isize, 1), T::one(), gx, (plane as isize, 1));
            } else {
                T::gemm(k, g.cout, plane, kernel, (1, k as isize), gy, (plane as isize, 1), T::zero(), &mut cols, (plane as isize, 1));
                col2im_add(g, &cols, gx);
            }
        }
    }
}
