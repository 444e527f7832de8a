use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Mean squared error over every element, with its gradient `2(pred − target)/count`.
///
/// The sum is accumulated in `f64` regardless of the element type.
pub fn mse_loss<T: Element>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::dim("mse_loss target", pred.shape(), target.shape()));
    }
    let count = pred.len() as f64;
    let scale = T::from_f64_lossy(2.0 / count);
    let mut sum = 0.0f64;
    let grad: Vec<T> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            let df = d.to_f64().unwrap_or(f64::NAN);
            sum += df * df;
            d * scale
        })
        .collect();
    Ok((sum / count, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Loss value only.
pub fn mse<T: Element>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::dim("mse target", pred.shape(), target.shape()));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = (p - t).to_f64().unwrap_or(f64::NAN);
            d * d
        })
        .sum();
    Ok(sum / pred.len() as f64)
}
