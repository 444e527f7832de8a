use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{conv, dense, pool};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// A trainable tensor with its gradient accumulator and Adam moments.
#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub step_count: u64,
}

impl<T: Element> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let zeros = Tensor::zeros(value.shape().to_vec()).expect("parameter shape");
        Parameter {
            name: name.into(),
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
            step_count: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv2d,
    #[serde(rename = "maxpool2d")]
    MaxPool2d,
    ConvTranspose2d,
    Relu,
    Flatten,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv2d => "conv2d",
            LayerKind::MaxPool2d => "maxpool2d",
            LayerKind::ConvTranspose2d => "conv_transpose2d",
            LayerKind::Relu => "relu",
            LayerKind::Flatten => "flatten",
        };
        f.write_str(s)
    }
}

/// Declarative description of one layer. Shapes exclude the batch axis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerConfig {
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
    },
    #[serde(rename = "maxpool2d")]
    MaxPool2d,
    ConvTranspose2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        output_adjust: [usize; 2],
    },
    Relu,
    Flatten,
}

impl LayerConfig {
    pub fn dense(in_features: usize, out_features: usize) -> Self {
        LayerConfig::Dense { in_features, out_features }
    }

    /// Valid, stride-1 square-kernel convolution.
    pub fn conv2d(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        LayerConfig::Conv2d {
            in_channels,
            out_channels,
            kernel: [kernel, kernel],
            stride: 1,
            padding: 0,
        }
    }

    /// Transposed convolution whose output adjustment is solved so that an
    /// `input` extent maps exactly onto `target`.
    pub fn conv_transpose2d_to(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        input: [usize; 2],
        target: [usize; 2],
    ) -> Result<Self> {
        let adj_h = output_adjust(input[0], kernel, stride, target[0])?;
        let adj_w = output_adjust(input[1], kernel, stride, target[1])?;
        Ok(LayerConfig::ConvTranspose2d {
            in_channels,
            out_channels,
            kernel: [kernel, kernel],
            stride,
            output_adjust: [adj_h, adj_w],
        })
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            LayerConfig::Dense { .. } => LayerKind::Dense,
            LayerConfig::Conv2d { .. } => LayerKind::Conv2d,
            LayerConfig::MaxPool2d => LayerKind::MaxPool2d,
            LayerConfig::ConvTranspose2d { .. } => LayerKind::ConvTranspose2d,
            LayerConfig::Relu => LayerKind::Relu,
            LayerConfig::Flatten => LayerKind::Flatten,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::config(format!("{}: {msg}", self.kind())));
        match *self {
            LayerConfig::Dense { in_features, out_features } => {
                if in_features == 0 || out_features == 0 {
                    return bad("feature counts must be >= 1");
                }
            }
            LayerConfig::Conv2d { in_channels, out_channels, kernel, stride, .. } => {
                if in_channels == 0 || out_channels == 0 || kernel.contains(&0) || stride == 0 {
                    return bad("channels, kernel and stride must be >= 1");
                }
            }
            LayerConfig::ConvTranspose2d { in_channels, out_channels, kernel, stride, output_adjust } => {
                if in_channels == 0 || out_channels == 0 || kernel.contains(&0) || stride == 0 {
                    return bad("channels, kernel and stride must be >= 1");
                }
                if output_adjust.iter().any(|&a| a >= stride) {
                    return bad("output adjustment must be smaller than the stride");
                }
            }
            LayerConfig::MaxPool2d | LayerConfig::Relu | LayerConfig::Flatten => {}
        }
        Ok(())
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        let ctx = || format!("{} input", self.kind());
        match *self {
            LayerConfig::Dense { in_features, out_features } => {
                if input != [in_features] {
                    return Err(Error::dim(ctx(), [in_features], input));
                }
                Ok(vec![out_features])
            }
            LayerConfig::Conv2d { in_channels, out_channels, kernel, stride, padding } => {
                let [c, h, w] = image_shape(input, ctx)?;
                if c != in_channels {
                    return Err(Error::dim(ctx(), format!("{in_channels} channels"), c));
                }
                let (hp, wp) = (h + 2 * padding, w + 2 * padding);
                if hp < kernel[0] || wp < kernel[1] {
                    return Err(Error::dim(
                        format!("{} kernel {kernel:?} against padded input", self.kind()),
                        format!("padded extents >= {kernel:?}"),
                        [hp, wp],
                    ));
                }
                Ok(vec![out_channels, (hp - kernel[0]) / stride + 1, (wp - kernel[1]) / stride + 1])
            }
            LayerConfig::MaxPool2d => {
                let [c, h, w] = image_shape(input, ctx)?;
                if h < pool::WINDOW || w < pool::WINDOW {
                    return Err(Error::dim(ctx(), "spatial extents >= 2", [h, w]));
                }
                Ok(vec![c, h / pool::WINDOW, w / pool::WINDOW])
            }
            LayerConfig::ConvTranspose2d { in_channels, out_channels, kernel, stride, output_adjust } => {
                let [c, h, w] = image_shape(input, ctx)?;
                if c != in_channels {
                    return Err(Error::dim(ctx(), format!("{in_channels} channels"), c));
                }
                Ok(vec![
                    out_channels,
                    conv::conv_transpose_extent(h, kernel[0], stride, output_adjust[0]),
                    conv::conv_transpose_extent(w, kernel[1], stride, output_adjust[1]),
                ])
            }
            LayerConfig::Relu => Ok(input.to_vec()),
            LayerConfig::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Names and shapes of the trainable tensors, in storage order.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerConfig::Dense { in_features, out_features } => vec![
                ("weight", vec![out_features, in_features]),
                ("bias", vec![out_features]),
            ],
            LayerConfig::Conv2d { in_channels, out_channels, kernel, .. }
            | LayerConfig::ConvTranspose2d { in_channels, out_channels, kernel, .. } => vec![
                ("weight", vec![out_channels, in_channels, kernel[0], kernel[1]]),
                ("bias", vec![out_channels]),
            ],
            LayerConfig::MaxPool2d | LayerConfig::Relu | LayerConfig::Flatten => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerConfig::Dense { in_features, .. } => in_features,
            LayerConfig::Conv2d { in_channels, kernel, .. }
            | LayerConfig::ConvTranspose2d { in_channels, kernel, .. } => in_channels * kernel[0] * kernel[1],
            _ => 1,
        }
    }
}

fn image_shape(input: &[usize], ctx: impl Fn() -> String) -> Result<[usize; 3]> {
    match *input {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(Error::dim(ctx(), "[channels, height, width]", input)),
    }
}

fn output_adjust(input: usize, kernel: usize, stride: usize, target: usize) -> Result<usize> {
    let base = conv::conv_transpose_extent(input, kernel, stride, 0);
    if target < base || target - base >= stride {
        return Err(Error::config(format!(
            "transposed convolution cannot map extent {input} to {target} \
             with kernel {kernel} and stride {stride} (reachable: {base}..{})",
            base + stride - 1
        )));
    }
    Ok(target - base)
}

#[derive(Clone, Debug)]
enum Cache<T> {
    Input(Tensor<T>),
    Mask(Vec<bool>),
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Shape(Vec<usize>),
}

/// One layer: configuration, parameters and the activations saved for backward.
#[derive(Clone, Debug)]
pub struct Layer<T> {
    config: LayerConfig,
    params: Vec<Parameter<T>>,
    cache: Option<Cache<T>>,
}

impl<T: Element> Layer<T> {
    /// Kaiming-uniform (fan-in) weights, zero biases.
    pub fn new<R: Rng + ?Sized>(config: LayerConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let bound = (6.0 / config.fan_in() as f64).sqrt();
        let params = config
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let value = if name == "weight" {
                    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.random_range(-bound..bound)))
                } else {
                    Tensor::zeros(shape)
                }?;
                Ok(Parameter::new(name, value))
            })
            .collect::<Result<_>>()?;
        Ok(Layer { config, params, cache: None })
    }

    pub fn config(&self) -> &LayerConfig {
        &self.config
    }

    pub fn kind(&self) -> LayerKind {
        self.config.kind()
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        if x.ndim() < 2 {
            return Err(Error::dim(
                format!("{} input", self.kind()),
                "[batch, ...]",
                x.shape(),
            ));
        }
        let mut out = vec![x.dim(0)];
        out.extend(self.config.output_shape(x.sample_shape())?);
        Ok(out)
    }

    /// Forward pass without recording anything for backward.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        Ok(match self.config {
            LayerConfig::MaxPool2d => pool::forward(x).0,
            LayerConfig::Relu => x.map(|v| if v > T::zero() { v } else { T::zero() }),
            _ => self.compute(x)?,
        })
    }

    fn compute(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let p = &self.params;
        Ok(match self.config {
            LayerConfig::Dense { .. } => dense::forward(x, &p[0].value, &p[1].value),
            LayerConfig::Conv2d { stride, padding, .. } => {
                conv::conv2d_forward(x, &p[0].value, &p[1].value, stride, padding)
            }
            LayerConfig::ConvTranspose2d { stride, output_adjust, .. } => {
                conv::conv_transpose2d_forward(x, &p[0].value, &p[1].value, stride, output_adjust)
            }
            LayerConfig::Flatten => x.reshaped(vec![x.dim(0), x.sample_len()])?,
            LayerConfig::MaxPool2d | LayerConfig::Relu => self.infer(x)?,
        })
    }

    /// Forward pass that stores what [`Layer::backward`] needs.
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let (out, cache) = match self.config {
            LayerConfig::MaxPool2d => {
                let (out, argmax) = pool::forward(x);
                (out, Cache::Pool { input_shape: x.shape().to_vec(), argmax })
            }
            LayerConfig::Relu => {
                let mask: Vec<bool> = x.data().iter().map(|&v| v > T::zero()).collect();
                let out = x.map(|v| if v > T::zero() { v } else { T::zero() });
                (out, Cache::Mask(mask))
            }
            LayerConfig::Flatten => (self.compute(x)?, Cache::Shape(x.shape().to_vec())),
            _ => (self.compute(x)?, Cache::Input(x.clone())),
        };
        self.cache = Some(cache);
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    /// Consumes the cache recorded by the preceding forward pass.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.backward_inner(dy, true)?.expect("input gradient requested"))
    }

    /// Like [`Layer::backward`], but only accumulates parameter gradients.
    pub fn backward_params(&mut self, dy: &Tensor<T>) -> Result<()> {
        self.backward_inner(dy, false).map(|_| ())
    }

    fn backward_inner(&mut self, dy: &Tensor<T>, input_grad: bool) -> Result<Option<Tensor<T>>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State(format!("{} backward called without forward", self.kind())))?;
        let expected_out = match &cache {
            Cache::Input(x) => self.check_input(x)?,
            Cache::Mask(mask) => vec![mask.len()],
            Cache::Pool { input_shape, .. } => {
                let mut s = vec![input_shape[0]];
                s.extend(self.config.output_shape(&input_shape[1..])?);
                s
            }
            Cache::Shape(shape) => vec![shape[0], shape[1..].iter().product()],
        };
        let shape_ok = match &cache {
            Cache::Mask(mask) => dy.len() == mask.len(),
            _ => dy.shape() == expected_out.as_slice(),
        };
        if !shape_ok {
            return Err(Error::dim(format!("{} output gradient", self.kind()), expected_out, dy.shape()));
        }
        let config = self.config.clone();
        Ok(match (config, cache) {
            (LayerConfig::Dense { .. }, Cache::Input(x)) => {
                let (w, b) = self.weight_and_bias();
                dense::backward(&x, &w.value, dy, &mut w.grad, &mut b.grad, input_grad)
            }
            (LayerConfig::Conv2d { stride, padding, .. }, Cache::Input(x)) => {
                let (w, b) = self.weight_and_bias();
                conv::conv2d_backward(&x, &w.value, dy, &mut w.grad, &mut b.grad, stride, padding, input_grad)
            }
            (LayerConfig::ConvTranspose2d { stride, output_adjust, .. }, Cache::Input(x)) => {
                let (w, b) = self.weight_and_bias();
                conv::conv_transpose2d_backward(
                    &x,
                    &w.value,
                    dy,
                    &mut w.grad,
                    &mut b.grad,
                    stride,
                    output_adjust,
                    input_grad,
                )
            }
            (LayerConfig::MaxPool2d, Cache::Pool { input_shape, argmax }) => {
                Some(pool::backward(&input_shape, &argmax, dy))
            }
            (LayerConfig::Relu, Cache::Mask(mask)) => {
                let mut dx = dy.clone();
                for (d, &keep) in dx.data_mut().iter_mut().zip(&mask) {
                    if !keep {
                        *d = T::zero();
                    }
                }
                Some(dx)
            }
            (LayerConfig::Flatten, Cache::Shape(shape)) => Some(dy.reshaped(shape)?),
            _ => return Err(Error::State(format!("{} cache does not match layer", self.kind()))),
        })
    }

    fn weight_and_bias(&mut self) -> (&mut Parameter<T>, &mut Parameter<T>) {
        match self.params.as_mut_slice() {
            [w, b] => (w, b),
            _ => unreachable!("weighted layers hold exactly weight and bias"),
        }
    }

    /// Discrete activation pattern (ReLU masks, pool winners) of the last forward.
    pub(crate) fn activation_pattern(&self, out: &mut Vec<usize>) {
        match &self.cache {
            Some(Cache::Mask(mask)) => out.extend(mask.iter().map(|&b| b as usize)),
            Some(Cache::Pool { argmax, .. }) => out.extend_from_slice(argmax),
            _ => {}
        }
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(config: LayerConfig) -> Layer<f64> {
        Layer::new(config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    fn set(layer: &mut Layer<f64>, idx: usize, data: &[f64]) {
        layer.params_mut()[idx].value.data_mut().copy_from_slice(data);
    }

    #[test]
    fn dense_identity_and_hand_product() {
        let mut l = layer(LayerConfig::dense(2, 2));
        set(&mut l, 0, &[1.0, 0.0, 0.0, 1.0]);
        set(&mut l, 1, &[0.0, 0.0]);
        let x = Tensor::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(l.infer(&x).unwrap().data(), &[3.0, 4.0]);

        set(&mut l, 0, &[1.0, 1.0, 1.0, -1.0]);
        let x = Tensor::from_rows(&[[2.0, 3.0]]).unwrap();
        assert_eq!(l.forward(&x).unwrap().data(), &[5.0, -1.0]);
    }

    #[test]
    fn dense_wrong_in_dim_is_dimension_error() {
        let l = layer(LayerConfig::dense(2, 2));
        let x = Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let err = l.infer(&x).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }), "{err}");
        assert!(err.to_string().contains("[2]") && err.to_string().contains("[3]"));
    }

    #[test]
    fn dense_backward_closed_form() {
        let mut l = layer(LayerConfig::dense(3, 2));
        set(&mut l, 0, &[1.0, 2.0, 3.0, -1.0, 0.5, 2.0]);
        let x = Tensor::from_rows(&[[1.0, -1.0, 2.0]]).unwrap();
        l.forward(&x).unwrap();
        let delta = Tensor::from_rows(&[[0.5, -2.0]]).unwrap();
        let dx = l.backward(&delta).unwrap();
        // Wᵀδ
        assert_eq!(dx.data(), &[0.5 + 2.0, 1.0 - 1.0, 1.5 - 4.0]);
        // δ xᵀ
        assert_eq!(l.params()[0].grad.data(), &[0.5, -0.5, 1.0, -2.0, 2.0, -4.0]);
        assert_eq!(l.params()[1].grad.data(), &[0.5, -2.0]);
    }

    #[test]
    fn conv2d_identity_and_all_ones() {
        let mut l = layer(LayerConfig::conv2d(1, 1, 1));
        set(&mut l, 0, &[1.0]);
        let x = Tensor::from_fn(vec![1, 1, 3, 3], |i| i as f64).unwrap();
        assert_eq!(l.infer(&x).unwrap(), x);

        let mut l = layer(LayerConfig::conv2d(1, 1, 2));
        set(&mut l, 0, &[1.0; 4]);
        let ones = Tensor::full(vec![1, 1, 3, 3], 1.0).unwrap();
        let y = l.infer(&ones).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[4.0; 4]);
    }

    #[test]
    fn conv2d_shape_at_full_input() {
        let c = LayerConfig::conv2d(1, 32, 3);
        assert_eq!(c.output_shape(&[1, 56, 924]).unwrap(), vec![32, 54, 922]);
        assert!(matches!(c.output_shape(&[1, 2, 924]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn maxpool_examples() {
        let l = layer(LayerConfig::MaxPool2d);
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(l.infer(&x).unwrap().data(), &[4.0]);

        let x = Tensor::from_fn(vec![1, 1, 3, 3], |i| (i + 1) as f64).unwrap();
        let y = l.infer(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[5.0]);

        let c = Tensor::full(vec![2, 3, 4, 6], 7.5).unwrap();
        assert!(l.infer(&c).unwrap().data().iter().all(|&v| v == 7.5));

        let tiny = Tensor::<f64>::zeros(vec![1, 1, 1, 4]).unwrap();
        assert!(matches!(l.infer(&tiny), Err(Error::Dimension { .. })));
    }

    #[test]
    fn maxpool_ties_pick_first_row_major() {
        let mut l = layer(LayerConfig::MaxPool2d);
        let x = Tensor::new(vec![1, 1, 2, 2], vec![0.0, 3.0, 3.0, 3.0]).unwrap();
        l.forward(&x).unwrap();
        let dx = l.backward(&Tensor::full(vec![1, 1, 1, 1], 1.0).unwrap()).unwrap();
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn conv_transpose_identity_and_overlap_sum() {
        let mut l = layer(LayerConfig::ConvTranspose2d {
            in_channels: 1,
            out_channels: 1,
            kernel: [1, 1],
            stride: 1,
            output_adjust: [0, 0],
        });
        set(&mut l, 0, &[1.0]);
        let x = Tensor::from_fn(vec![1, 1, 2, 3], |i| i as f64 - 2.0).unwrap();
        assert_eq!(l.infer(&x).unwrap(), x);

        let mut l = layer(LayerConfig::ConvTranspose2d {
            in_channels: 1,
            out_channels: 1,
            kernel: [2, 2],
            stride: 1,
            output_adjust: [0, 0],
        });
        set(&mut l, 0, &[1.0; 4]);
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = l.infer(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(y.data(), &[1.0, 3.0, 2.0, 4.0, 10.0, 6.0, 3.0, 7.0, 4.0]);
    }

    #[test]
    fn conv_transpose_inverts_encoder_chain() {
        // 56 -> 54 -> 27 -> 26 -> 13 and back via stride-2 transposes
        let up1 = LayerConfig::conv_transpose2d_to(64, 32, 3, 2, [13, 230], [27, 461]).unwrap();
        let mid = up1.output_shape(&[64, 13, 230]).unwrap();
        assert_eq!(mid, vec![32, 27, 461]);
        let up2 = LayerConfig::conv_transpose2d_to(32, 1, 3, 2, [27, 461], [56, 924]).unwrap();
        assert_eq!(up2.output_shape(&mid).unwrap(), vec![1, 56, 924]);
        match up2 {
            LayerConfig::ConvTranspose2d { output_adjust, .. } => assert_eq!(output_adjust, [1, 1]),
            _ => unreachable!(),
        }
        assert!(matches!(
            LayerConfig::conv_transpose2d_to(32, 1, 3, 2, [27, 461], [58, 924]),
            Err(Error::Config(_))
        ));
        assert!(LayerConfig::conv_transpose2d_to(32, 1, 3, 2, [27, 461], [54, 924]).is_err());
    }

    #[test]
    fn relu_examples() {
        let mut l = layer(LayerConfig::Relu);
        let x = Tensor::new(vec![1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(l.forward(&x).unwrap().data(), &[0.0, 0.0, 2.0]);
        let pos = Tensor::new(vec![1, 3], vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(l.infer(&pos).unwrap(), pos);
        let neg = Tensor::new(vec![1, 3], vec![-3.0, -0.1, -2.0]).unwrap();
        assert!(l.infer(&neg).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut l = layer(LayerConfig::dense(2, 2));
        let g = Tensor::zeros(vec![1, 2]).unwrap();
        assert!(matches!(l.backward(&g), Err(Error::State(_))));
        let mut r = layer(LayerConfig::Relu);
        assert!(matches!(r.backward(&g), Err(Error::State(_))));
    }

    #[test]
    fn kaiming_bounds_and_zero_bias() {
        let l = layer(LayerConfig::dense(24, 10));
        let bound = (6.0f64 / 24.0).sqrt();
        assert!(l.params()[0].value.data().iter().all(|v| v.abs() < bound));
        assert!(l.params()[1].value.data().iter().all(|&v| v == 0.0));
    }
}
