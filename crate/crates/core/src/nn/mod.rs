//! Layers and layer stacks with hand-written forward/backward passes.

mod conv;
mod dense;
mod layer;
mod pool;

pub use layer::{Layer, LayerConfig, LayerKind, Parameter};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// An ordered stack of layers applied one after another.
#[derive(Clone, Debug)]
pub struct Sequential<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Element> Default for Sequential<T> {
    fn default() -> Self {
        Sequential { layers: Vec::new() }
    }
}

impl<T: Element> Sequential<T> {
    pub fn new<R: Rng + ?Sized>(configs: &[LayerConfig], rng: &mut R) -> Result<Self> {
        let layers = configs
            .iter()
            .map(|c| Layer::new(c.clone(), rng))
            .collect::<Result<_>>()?;
        Ok(Sequential { layers })
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Self {
        Sequential { layers }
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Appends the layers of `other` after this stack's layers.
    pub fn chain(mut self, other: Sequential<T>) -> Self {
        self.layers.extend(other.layers);
        self
    }

    pub fn configs(&self) -> Vec<LayerConfig> {
        self.layers.iter().map(|l| l.config().clone()).collect()
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut iter = self.layers.iter_mut();
        let Some(first) = iter.next() else {
            return Ok(x.clone());
        };
        let mut h = first.forward(x)?;
        for layer in iter {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut iter = self.layers.iter();
        let Some(first) = iter.next() else {
            return Ok(x.clone());
        };
        let mut h = first.infer(x)?;
        for layer in iter {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    /// Backpropagates `grad` through the stack, accumulating into every
    /// parameter gradient, and returns the gradient w.r.t. the stack input.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        if let Some(layer) = self.layers.iter().find(|l| !l.has_cache()) {
            return Err(Error::State(format!(
                "backward requested but {} layer has no recorded forward pass",
                layer.kind()
            )));
        }
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Backpropagates `grad` into the parameter gradients only, skipping work
    /// that would just produce the gradient w.r.t. the stack input.
    pub fn backward_params(&mut self, grad: &Tensor<T>) -> Result<()> {
        if let Some(layer) = self.layers.iter().find(|l| !l.has_cache()) {
            return Err(Error::State(format!(
                "backward requested but {} layer has no recorded forward pass",
                layer.kind()
            )));
        }
        let Some(first) = self.layers.iter().position(|l| !l.params().is_empty()) else {
            return Ok(());
        };
        let mut g = grad.clone();
        for layer in self.layers[first + 1..].iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        self.layers[first].backward_params(&g)
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.layers.iter().flat_map(|l| l.params().iter())
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut().iter_mut())
    }

    /// `(prefix.layer_index.param_name, parameter)` for every parameter.
    pub fn named_parameters<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (String, &'a Parameter<T>)> + 'a {
        self.layers.iter().enumerate().flat_map(move |(i, l)| {
            l.params().iter().map(move |p| (format!("{prefix}.{i}.{}", p.name), p))
        })
    }

    pub fn num_params(&self) -> usize {
        self.parameters().map(Parameter::len).sum()
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        output_shape(&self.configs(), input)
    }

    pub(crate) fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for l in &self.layers {
            l.activation_pattern(&mut out);
        }
        out
    }
}

/// Shape inference over a list of layer configurations.
pub fn output_shape(configs: &[LayerConfig], input: &[usize]) -> Result<Vec<usize>> {
    configs
        .iter()
        .try_fold(input.to_vec(), |shape, c| c.output_shape(&shape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradients() {
        let configs = [
            LayerConfig::conv2d(1, 2, 2),
            LayerConfig::Relu,
            LayerConfig::MaxPool2d,
            LayerConfig::Flatten,
            LayerConfig::dense(2 * 2 * 3, 3),
        ];
        let mut net = Sequential::<f64>::new(&configs, &mut rng()).unwrap();
        let x = Tensor::from_fn(vec![2, 1, 5, 7], |i| (i as f64 * 0.37).sin()).unwrap();
        let y = net.forward(&x).unwrap();
        net.zero_grad();
        net.backward(&Tensor::zeros(y.shape().to_vec()).unwrap()).unwrap();
        assert!(net.parameters().all(|p| p.grad.data().iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn backward_before_forward_fails() {
        let mut net = Sequential::<f32>::new(&[LayerConfig::dense(3, 2)], &mut rng()).unwrap();
        let g = Tensor::zeros(vec![1, 2]).unwrap();
        assert!(matches!(net.backward(&g), Err(Error::State(_))));
    }

    #[test]
    fn infer_and_forward_agree() {
        let configs = [LayerConfig::dense(4, 5), LayerConfig::Relu, LayerConfig::dense(5, 2)];
        let mut net = Sequential::<f32>::new(&configs, &mut rng()).unwrap();
        let x = Tensor::from_fn(vec![3, 4], |i| i as f32 * 0.1 - 0.5).unwrap();
        assert_eq!(net.infer(&x).unwrap(), net.forward(&x).unwrap());
    }

    fn relu_net() -> Sequential<f64> {
        Sequential::new(&[LayerConfig::Relu], &mut rng()).unwrap()
    }

    proptest! {
        #[test]
        fn relu_is_idempotent(v in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
            let net = relu_net();
            let x = Tensor::new(vec![1, v.len()], v).unwrap();
            let once = net.infer(&x).unwrap();
            prop_assert_eq!(net.infer(&once).unwrap(), once);
        }

        #[test]
        fn layer_shapes_follow_closed_form(
            batch in 1usize..3,
            cin in 1usize..3,
            cout in 1usize..4,
            h in 4usize..10,
            w in 4usize..10,
            k in 1usize..4,
            stride in 1usize..3,
            pad in 0usize..2,
        ) {
            let mut r = rng();
            let x = Tensor::<f64>::from_fn(vec![batch, cin, h, w], |i| ((i * 7) % 5) as f64 - 2.0).unwrap();
            let cases = [
                (LayerConfig::Conv2d { in_channels: cin, out_channels: cout, kernel: [k, k], stride, padding: pad },
                 vec![batch, cout, (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1]),
                (LayerConfig::ConvTranspose2d { in_channels: cin, out_channels: cout, kernel: [k, k], stride, output_adjust: [stride - 1, 0] },
                 vec![batch, cout, (h - 1) * stride + k + stride - 1, (w - 1) * stride + k]),
                (LayerConfig::MaxPool2d, vec![batch, cin, h / 2, w / 2]),
                (LayerConfig::Relu, vec![batch, cin, h, w]),
                (LayerConfig::Flatten, vec![batch, cin * h * w]),
            ];
            for (config, want) in cases {
                let mut layer = Layer::<f64>::new(config, &mut r).unwrap();
                let y = layer.forward(&x).unwrap();
                prop_assert_eq!(y.shape(), want.as_slice());
                let dx = layer.backward(&y).unwrap();
                prop_assert_eq!(dx.shape(), x.shape());
            }
        }
    }
}
