//! Convolution kernels built on im2col / col2im plus a GEMM.
//!
//! Kernels are stored `[c_out, c_in, k_h, k_w]` for both the forward and the
//! transposed convolution. The transposed convolution is the adjoint of a
//! zero-padding strided convolution: every input cell scatters a weighted
//! copy of the kernel into the output.

use crate::tensor::{gemm, Element, MatRef, Tensor};

/// Sliding-window geometry over one `c × h × w` map.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Geometry {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

/// Upper bound on the number of elements of one unfolded column buffer;
/// batches are processed in groups of samples that fit.
const COLS_BUDGET: usize = 1 << 20;

fn group_size(n: usize, rows: usize, positions: usize) -> usize {
    (COLS_BUDGET / (rows * positions).max(1)).clamp(1, n)
}

/// Unfolds `src` (`c × h × w`) into the `c·kh·kw × oh·ow` block of `cols`
/// whose rows start `ld` elements apart.
pub(crate) fn im2col<T: Element>(src: &[T], g: &Geometry, cols: &mut [T], ld: usize) {
    for ci in 0..g.c {
        let plane = &src[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * ld..row * ld + g.positions()];
                for oy in 0..g.oh {
                    let out_row = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.pad == 0 && g.stride == 1 {
                        out_row.copy_from_slice(&src_row[kx..kx + g.ow]);
                    } else {
                        for (ox, o) in out_row.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            *o = if ix < 0 || ix >= g.w as isize {
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
}

/// Adjoint of [`im2col`]: accumulates the block of `cols` back into `dst`
/// (`c × h × w`).
pub(crate) fn col2im<T: Element>(cols: &[T], g: &Geometry, dst: &mut [T], ld: usize) {
    for ci in 0..g.c {
        let plane = &mut dst[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * ld..row * ld + g.positions()];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let in_row = &src[oy * g.ow..(oy + 1) * g.ow];
                    let dst_row = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.pad == 0 && g.stride == 1 {
                        for (d, &s) in dst_row[kx..kx + g.ow].iter_mut().zip(in_row) {
                            *d = *d + s;
                        }
                    } else {
                        for (ox, &s) in in_row.iter().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && (ix as usize) < g.w {
                                dst_row[ix as usize] = dst_row[ix as usize] + s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Copies samples `[s0, s0 + group)` of a `[n, c, len]` buffer into a
/// `c × group·len` matrix.
fn gather<T: Element>(src: &[T], c: usize, len: usize, s0: usize, group: usize, dst: &mut [T]) {
    let ld = group * len;
    for j in 0..group {
        let sample = &src[(s0 + j) * c * len..(s0 + j + 1) * c * len];
        for ch in 0..c {
            dst[ch * ld + j * len..ch * ld + (j + 1) * len].copy_from_slice(&sample[ch * len..(ch + 1) * len]);
        }
    }
}

/// Inverse of [`gather`].
fn scatter<T: Element>(src: &[T], c: usize, len: usize, s0: usize, group: usize, dst: &mut [T]) {
    let ld = group * len;
    for j in 0..group {
        let sample = &mut dst[(s0 + j) * c * len..(s0 + j + 1) * c * len];
        for ch in 0..c {
            sample[ch * len..(ch + 1) * len].copy_from_slice(&src[ch * ld + j * len..ch * ld + (j + 1) * len]);
        }
    }
}

/// Sample groups `(first, count)` covering a batch of `n`.
fn groups(n: usize, group: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).step_by(group).map(move |s0| (s0, group.min(n - s0)))
}

fn add_channel_bias<T: Element>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        for v in chunk {
            *v = *v + b;
        }
    }
}

fn accumulate_channel_bias_grad<T: Element>(dy: &[T], db: &mut [T], plane: usize) {
    for (chunk, g) in dy.chunks(plane).zip(db.iter_mut()) {
        *g = *g + chunk.iter().copied().sum::<T>();
    }
}

pub(crate) fn conv2d_geometry(
    input: &[usize],
    kernel: [usize; 2],
    stride: usize,
    pad: usize,
) -> Geometry {
    let (c, h, w) = (input[0], input[1], input[2]);
    Geometry {
        c,
        h,
        w,
        kh: kernel[0],
        kw: kernel[1],
        stride,
        pad,
        oh: (h + 2 * pad - kernel[0]) / stride + 1,
        ow: (w + 2 * pad - kernel[1]) / stride + 1,
    }
}

pub(crate) fn conv2d_forward<T: Element>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let n = x.dim(0);
    let co = kernel.dim(0);
    let g = conv2d_geometry(x.sample_shape(), [kernel.dim(2), kernel.dim(3)], stride, pad);
    let (ck, ohw) = (g.rows(), g.positions());
    let in_len = x.sample_len();
    let group = group_size(n, ck, ohw);
    let mut cols = vec![T::zero(); ck * group * ohw];
    let mut prod = vec![T::zero(); co * group * ohw];
    let mut out = vec![T::zero(); n * co * ohw];
    for (s0, m) in groups(n, group) {
        let ld = m * ohw;
        for j in 0..m {
            let s = s0 + j;
            im2col(&x.data()[s * in_len..(s + 1) * in_len], &g, &mut cols[j * ohw..], ld);
        }
        gemm(MatRef::rm(kernel.data(), co, ck), MatRef::rm(&cols[..ck * ld], ck, ld), T::zero(), &mut prod[..co * ld]);
        scatter(&prod, co, ohw, s0, m, &mut out);
    }
    for out_s in out.chunks_mut(co * ohw) {
        add_channel_bias(out_s, bias.data(), ohw);
    }
    Tensor::new(vec![n, co, g.oh, g.ow], out).expect("conv2d output shape")
}

/// Accumulates kernel and bias gradients; returns the input gradient when
/// `input_grad` is set.
pub(crate) fn conv2d_backward<T: Element>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    dy: &Tensor<T>,
    dkernel: &mut Tensor<T>,
    dbias: &mut Tensor<T>,
    stride: usize,
    pad: usize,
    input_grad: bool,
) -> Option<Tensor<T>> {
    let n = x.dim(0);
    let co = kernel.dim(0);
    let g = conv2d_geometry(x.sample_shape(), [kernel.dim(2), kernel.dim(3)], stride, pad);
    let (ck, ohw) = (g.rows(), g.positions());
    let in_len = x.sample_len();
    let group = group_size(n, ck, ohw);
    let mut cols = vec![T::zero(); ck * group * ohw];
    let mut dyg = vec![T::zero(); co * group * ohw];
    let mut dx = if input_grad { vec![T::zero(); x.len()] } else { Vec::new() };
    for dy_s in dy.data().chunks(co * ohw) {
        accumulate_channel_bias_grad(dy_s, dbias.data_mut(), ohw);
    }
    for (s0, m) in groups(n, group) {
        let ld = m * ohw;
        gather(dy.data(), co, ohw, s0, m, &mut dyg);
        for j in 0..m {
            let s = s0 + j;
            im2col(&x.data()[s * in_len..(s + 1) * in_len], &g, &mut cols[j * ohw..], ld);
        }
        gemm(
            MatRef::rm(&dyg[..co * ld], co, ld),
            MatRef::rm_t(&cols[..ck * ld], ld, ck),
            T::one(),
            dkernel.data_mut(),
        );
        if input_grad {
            gemm(MatRef::rm_t(kernel.data(), ck, co), MatRef::rm(&dyg[..co * ld], co, ld), T::zero(), &mut cols[..ck * ld]);
            for j in 0..m {
                let s = s0 + j;
                col2im(&cols[j * ohw..], &g, &mut dx[s * in_len..(s + 1) * in_len], ld);
            }
        }
    }
    input_grad.then(|| Tensor::new(x.shape().to_vec(), dx).expect("conv2d input-gradient shape"))
}

pub(crate) fn conv_transpose_extent(input: usize, kernel: usize, stride: usize, adjust: usize) -> usize {
    (input - 1) * stride + kernel + adjust
}

/// Geometry of the equivalent forward convolution, which maps the
/// transposed convolution's output back onto its input grid.
fn conv_transpose_geometry(
    input: &[usize],
    c_out: usize,
    kernel: [usize; 2],
    stride: usize,
    adjust: [usize; 2],
) -> Geometry {
    let (h, w) = (input[1], input[2]);
    Geometry {
        c: c_out,
        h: conv_transpose_extent(h, kernel[0], stride, adjust[0]),
        w: conv_transpose_extent(w, kernel[1], stride, adjust[1]),
        kh: kernel[0],
        kw: kernel[1],
        stride,
        pad: 0,
        oh: h,
        ow: w,
    }
}

/// Reorders `[c_out, c_in, kh, kw]` into a `c_in × (c_out·kh·kw)` matrix.
fn pack_transpose_kernel<T: Element>(kernel: &Tensor<T>) -> Vec<T> {
    let (co, ci) = (kernel.dim(0), kernel.dim(1));
    let kk = kernel.dim(2) * kernel.dim(3);
    let mut packed = vec![T::zero(); kernel.len()];
    for o in 0..co {
        for i in 0..ci {
            let src = &kernel.data()[(o * ci + i) * kk..(o * ci + i + 1) * kk];
            packed[i * co * kk + o * kk..i * co * kk + (o + 1) * kk].copy_from_slice(src);
        }
    }
    packed
}

pub(crate) fn conv_transpose2d_forward<T: Element>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    adjust: [usize; 2],
) -> Tensor<T> {
    let n = x.dim(0);
    let (co, ci) = (kernel.dim(0), kernel.dim(1));
    let g = conv_transpose_geometry(x.sample_shape(), co, [kernel.dim(2), kernel.dim(3)], stride, adjust);
    let (rows, hw) = (g.rows(), g.positions());
    let packed = pack_transpose_kernel(kernel);
    let out_len = co * g.h * g.w;
    let group = group_size(n, rows, hw);
    let mut xg = vec![T::zero(); ci * group * hw];
    let mut cols = vec![T::zero(); rows * group * hw];
    let mut out = vec![T::zero(); n * out_len];
    for (s0, m) in groups(n, group) {
        let ld = m * hw;
        gather(x.data(), ci, hw, s0, m, &mut xg);
        gemm(MatRef::rm_t(&packed, rows, ci), MatRef::rm(&xg[..ci * ld], ci, ld), T::zero(), &mut cols[..rows * ld]);
        for j in 0..m {
            let s = s0 + j;
            col2im(&cols[j * hw..], &g, &mut out[s * out_len..(s + 1) * out_len], ld);
        }
    }
    for out_s in out.chunks_mut(out_len) {
        add_channel_bias(out_s, bias.data(), g.h * g.w);
    }
    Tensor::new(vec![n, co, g.h, g.w], out).expect("conv_transpose2d output shape")
}

/// Accumulates kernel and bias gradients; returns the input gradient when
/// `input_grad` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_transpose2d_backward<T: Element>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    dy: &Tensor<T>,
    dkernel: &mut Tensor<T>,
    dbias: &mut Tensor<T>,
    stride: usize,
    adjust: [usize; 2],
    input_grad: bool,
) -> Option<Tensor<T>> {
    let n = x.dim(0);
    let (co, ci) = (kernel.dim(0), kernel.dim(1));
    let kk = kernel.dim(2) * kernel.dim(3);
    let g = conv_transpose_geometry(x.sample_shape(), co, [kernel.dim(2), kernel.dim(3)], stride, adjust);
    let (rows, hw) = (g.rows(), g.positions());
    let packed = pack_transpose_kernel(kernel);
    let out_len = co * g.h * g.w;
    let group = group_size(n, rows, hw);
    let mut dpacked = vec![T::zero(); packed.len()];
    let mut dcols = vec![T::zero(); rows * group * hw];
    let mut xg = vec![T::zero(); ci * group * hw];
    let mut dx = if input_grad { vec![T::zero(); x.len()] } else { Vec::new() };
    for dy_s in dy.data().chunks(out_len) {
        accumulate_channel_bias_grad(dy_s, dbias.data_mut(), g.h * g.w);
    }
    for (s0, m) in groups(n, group) {
        let ld = m * hw;
        for j in 0..m {
            let s = s0 + j;
            im2col(&dy.data()[s * out_len..(s + 1) * out_len], &g, &mut dcols[j * hw..], ld);
        }
        gather(x.data(), ci, hw, s0, m, &mut xg);
        gemm(MatRef::rm(&xg[..ci * ld], ci, ld), MatRef::rm_t(&dcols[..rows * ld], ld, rows), T::one(), &mut dpacked);
        if input_grad {
            gemm(MatRef::rm(&packed, ci, rows), MatRef::rm(&dcols[..rows * ld], rows, ld), T::zero(), &mut xg[..ci * ld]);
            scatter(&xg, ci, hw, s0, m, &mut dx);
        }
    }
    let dk = dkernel.data_mut();
    for o in 0..co {
        for i in 0..ci {
            for t in 0..kk {
                let d = &mut dk[(o * ci + i) * kk + t];
                *d = *d + dpacked[i * co * kk + o * kk + t];
            }
        }
    }
    input_grad.then(|| Tensor::new(x.shape().to_vec(), dx).expect("conv_transpose2d input-gradient shape"))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop correlation used as an oracle for the GEMM path.
    fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Vec<f64> {
        let (n, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (co, kh, kw) = (k.dim(0), k.dim(2), k.dim(3));
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let mut out = vec![0.0; n * co * oh * ow];
        for s in 0..n {
            for o in 0..co {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = b[o];
                        for i in 0..c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (y * stride + ky) as isize - pad as isize;
                                    let ix = (xx * stride + kx) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += x.get(&[s, i, iy as usize, ix as usize]).unwrap()
                                            * k.get(&[o, i, ky, kx]).unwrap();
                                    }
                                }
                            }
                        }
                        out[((s * co + o) * oh + y) * ow + xx] = acc;
                    }
                }
            }
        }
        out
    }

    fn naive_conv_transpose(x: &Tensor<f64>, k: &Tensor<f64>, b: &[f64], stride: usize, adj: [usize; 2]) -> Vec<f64> {
        let (n, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (co, kh, kw) = (k.dim(0), k.dim(2), k.dim(3));
        let oh = (h - 1) * stride + kh + adj[0];
        let ow = (w - 1) * stride + kw + adj[1];
        let mut out = vec![0.0; n * co * oh * ow];
        for s in 0..n {
            for o in 0..co {
                for v in &mut out[(s * co + o) * oh * ow..(s * co + o + 1) * oh * ow] {
                    *v = b[o];
                }
                for i in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            let val = x.get(&[s, i, y, xx]).unwrap();
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let oy = y * stride + ky;
                                    let ox = xx * stride + kx;
                                    out[((s * co + o) * oh + oy) * ow + ox] +=
                                        val * k.get(&[o, i, ky, kx]).unwrap();
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn ramp(shape: Vec<usize>, scale: f64) -> Tensor<f64> {
        Tensor::from_fn(shape, |i| ((i * 37 % 11) as f64 - 5.0) * scale).unwrap()
    }

    #[test]
    fn conv_matches_naive_loops() {
        for &(stride, pad) in &[(1, 0), (2, 0), (1, 1), (2, 1)] {
            let x = ramp(vec![2, 3, 7, 6], 0.1);
            let k = ramp(vec![4, 3, 3, 2], 0.2);
            let b = [0.1, -0.2, 0.3, 0.0];
            let bias = Tensor::new(vec![4], b.to_vec()).unwrap();
            let y = conv2d_forward(&x, &k, &bias, stride, pad);
            let want = naive_conv(&x, &k, &b, stride, pad);
            for (a, e) in y.data().iter().zip(&want) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_transpose_matches_naive_loops() {
        for &(stride, adj) in &[(1, [0, 0]), (2, [0, 0]), (2, [1, 1]), (3, [2, 0])] {
            let x = ramp(vec![2, 3, 4, 5], 0.1);
            let k = ramp(vec![2, 3, 3, 2], 0.3);
            let b = [0.5, -0.25];
            let bias = Tensor::new(vec![2], b.to_vec()).unwrap();
            let y = conv_transpose2d_forward(&x, &k, &bias, stride, adj);
            let want = naive_conv_transpose(&x, &k, &b, stride, adj);
            assert_eq!(y.len(), want.len());
            for (a, e) in y.data().iter().zip(&want) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    /// <dy, conv(x)> == <conv^T(dy), x> for the input gradient.
    #[test]
    fn conv_backward_is_adjoint_of_forward() {
        let x = ramp(vec![1, 2, 6, 5], 0.1);
        let k = ramp(vec![3, 2, 2, 3], 0.2);
        let zero_b = Tensor::zeros(vec![3]).unwrap();
        let y = conv2d_forward(&x, &k, &zero_b, 2, 1);
        let dy = ramp(y.shape().to_vec(), 0.07);
        let mut dk = Tensor::zeros(k.shape().to_vec()).unwrap();
        let mut db = Tensor::zeros(vec![3]).unwrap();
        let dx = conv2d_backward(&x, &k, &dy, &mut dk, &mut db, 2, 1, true).unwrap();
        let lhs: f64 = dy.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = dx.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        // linear in the kernel too
        let rhs_k: f64 = dk.data().iter().zip(k.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs_k).abs() < 1e-10);
    }

    #[test]
    fn conv_transpose_backward_is_adjoint_of_forward() {
        let x = ramp(vec![2, 3, 4, 5], 0.1);
        let k = ramp(vec![2, 3, 3, 2], 0.2);
        let zero_b = Tensor::zeros(vec![2]).unwrap();
        let y = conv_transpose2d_forward(&x, &k, &zero_b, 2, [1, 0]);
        let dy = ramp(y.shape().to_vec(), 0.07);
        let mut dk = Tensor::zeros(k.shape().to_vec()).unwrap();
        let mut db = Tensor::zeros(vec![2]).unwrap();
        let dx = conv_transpose2d_backward(&x, &k, &dy, &mut dk, &mut db, 2, [1, 0], true).unwrap();
        let lhs: f64 = dy.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = dx.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        let rhs_k: f64 = dk.data().iter().zip(k.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs_k).abs() < 1e-10);
    }

    /// Batches larger than one column group give the same result as
    /// per-sample evaluation.
    #[test]
    fn grouped_batches_match_single_samples() {
        let n = 2 * COLS_BUDGET / (9 * 38 * 38) + 1;
        let x = ramp(vec![n, 1, 40, 40], 0.1);
        let k = ramp(vec![2, 1, 3, 3], 0.2);
        let b = Tensor::new(vec![2], vec![0.1, -0.1]).unwrap();
        assert!(group_size(n, 9, 38 * 38) < n);
        let y = conv2d_forward(&x, &k, &b, 1, 0);
        let dy = ramp(y.shape().to_vec(), 0.03);
        let (mut dk, mut db) = (Tensor::zeros(vec![2, 1, 3, 3]).unwrap(), Tensor::zeros(vec![2]).unwrap());
        let dx = conv2d_backward(&x, &k, &dy, &mut dk, &mut db, 1, 0, true).unwrap();
        let mut dk1 = Tensor::zeros(vec![2, 1, 3, 3]).unwrap();
        let mut db1 = Tensor::zeros(vec![2]).unwrap();
        for s in [0, n / 2, n - 1] {
            let xs = x.select_rows(&[s]).unwrap();
            let ys = conv2d_forward(&xs, &k, &b, 1, 0);
            assert_eq!(ys.data(), y.select_rows(&[s]).unwrap().data());
            let dys = dy.select_rows(&[s]).unwrap();
            let dxs = conv2d_backward(&xs, &k, &dys, &mut dk1, &mut db1, 1, 0, true).unwrap();
            for (a, e) in dxs.data().iter().zip(dx.select_rows(&[s]).unwrap().data()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
        let yt = conv_transpose2d_forward(&y, &k.reshaped(vec![1, 2, 3, 3]).unwrap(), &Tensor::zeros(vec![1]).unwrap(), 1, [0, 0]);
        for s in [0, n - 1] {
            let ys = y.select_rows(&[s]).unwrap();
            let yts = conv_transpose2d_forward(&ys, &k.reshaped(vec![1, 2, 3, 3]).unwrap(), &Tensor::zeros(vec![1]).unwrap(), 1, [0, 0]);
            for (a, e) in yts.data().iter().zip(yt.select_rows(&[s]).unwrap().data()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }
}
