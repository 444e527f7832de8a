//! 2×2 max pooling with stride 2. Trailing odd rows/columns are dropped and
//! ties resolve to the first cell in row-major order.

use crate::tensor::{Element, Tensor};

pub const WINDOW: usize = 2;

/// Returns the pooled tensor and, per output cell, the flat input index of the
/// selected maximum.
pub(crate) fn forward<T: Element>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let (n, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (oh, ow) = (h / WINDOW, w / WINDOW);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + oy * WINDOW * w + ox * WINDOW;
                let mut best = data[best_idx];
                for dy in 0..WINDOW {
                    for dx in 0..WINDOW {
                        let idx = base + (oy * WINDOW + dy) * w + ox * WINDOW + dx;
                        if data[idx] > best {
                            best = data[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (Tensor::new(vec![n, c, oh, ow], out).expect("pool output shape"), argmax)
}

pub(crate) fn backward<T: Element>(input_shape: &[usize], argmax: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape.to_vec()).expect("pool input shape");
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        d[i] = d[i] + g;
    }
    dx
}
