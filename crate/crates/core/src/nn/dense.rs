use crate::tensor::{gemm, Element, MatRef, Tensor};

/// `y = x·Wᵀ + b` for `x: [n, in]`, `W: [out, in]`.
pub(crate) fn forward<T: Element>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    let (n, din) = (x.dim(0), x.dim(1));
    let dout = weight.dim(0);
    let mut out = vec![T::zero(); n * dout];
    gemm(MatRef::rm(x.data(), n, din), MatRef::rm_t(weight.data(), din, dout), T::zero(), &mut out);
    for row in out.chunks_mut(dout) {
        for (v, &b) in row.iter_mut().zip(bias.data()) {
            *v = *v + b;
        }
    }
    Tensor::new(vec![n, dout], out).expect("dense output shape")
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `input_grad` is set.
pub(crate) fn backward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dy: &Tensor<T>,
    dweight: &mut Tensor<T>,
    dbias: &mut Tensor<T>,
    input_grad: bool,
) -> Option<Tensor<T>> {
    let (n, din) = (x.dim(0), x.dim(1));
    let dout = weight.dim(0);
    // dW += dYᵀ·X
    gemm(
        MatRef::rm_t(dy.data(), dout, n),
        MatRef::rm(x.data(), n, din),
        T::one(),
        dweight.data_mut(),
    );
    for row in dy.data().chunks(dout) {
        for (g, &d) in dbias.data_mut().iter_mut().zip(row) {
            *g = *g + d;
        }
    }
    if !input_grad {
        return None;
    }
    let mut dx = vec![T::zero(); n * din];
    gemm(MatRef::rm(dy.data(), n, dout), MatRef::rm(weight.data(), dout, din), T::zero(), &mut dx);
    Some(Tensor::new(vec![n, din], dx).expect("dense input-gradient shape"))
}
