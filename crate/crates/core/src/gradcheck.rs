//! Central finite-difference verification of the analytic backward passes.
//!
//! Coordinates whose perturbation flips a ReLU mask or a max-pool winner are
//! discarded and replaced, so the comparison only happens where the network
//! is differentiable.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::loss::mse_loss;
use crate::models::{ModelId, ModelSpec};
use crate::nn::{LayerConfig, LayerKind, Sequential};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradcheckConfig {
    pub eps: f64,
    pub samples_per_tensor: usize,
    pub seed: u64,
    /// Lower bound on the denominator of the relative error.
    pub abs_floor: f64,
    /// Test hook: perturbs the analytic gradient of the first parameter so
    /// that the check is expected to fail.
    pub corrupt_first_gradient: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            eps: 1e-6,
            samples_per_tensor: 200,
            seed: 0,
            abs_floor: 1e-6,
            corrupt_first_gradient: false,
        }
    }
}

/// Worst coordinate found in one parameter tensor.
#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub layer_index: usize,
    pub layer_kind: LayerKind,
    pub param: String,
    pub numel: usize,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub params: Vec<ParamCheck>,
}

impl GradcheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn loss_and_pattern(net: &mut Sequential<f64>, input: &Tensor<f64>, target: &Tensor<f64>) -> Result<(f64, Vec<usize>)> {
    let out = net.forward(input)?;
    let (loss, _) = mse_loss(&out, target)?;
    Ok((loss, net.activation_pattern()))
}

/// Compares backprop gradients of `mse(net(input), target)` against central
/// differences on up to `samples_per_tensor` coordinates of every parameter.
pub fn gradcheck(
    net: &mut Sequential<f64>,
    input: &Tensor<f64>,
    target: &Tensor<f64>,
    cfg: &GradcheckConfig,
) -> Result<GradcheckReport> {
    let out = net.forward(input)?;
    let (_, grad) = mse_loss(&out, target)?;
    let base_pattern = net.activation_pattern();
    net.zero_grad();
    net.backward(&grad)?;

    let mut analytic: Vec<Vec<f64>> = net.parameters().map(|p| p.grad.data().to_vec()).collect();
    if cfg.corrupt_first_gradient {
        if let Some(first) = analytic.first_mut() {
            for g in first.iter_mut() {
                *g = *g * 1.05 + 1e-3;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradcheckReport { max_rel_error: 0.0, params: Vec::new() };
    let mut flat = 0;
    for li in 0..net.len() {
        let kind = net.layers()[li].kind();
        for pi in 0..net.layers()[li].params().len() {
            let numel = net.layers()[li].params()[pi].len();
            let name = net.layers()[li].params()[pi].name.clone();
            let mut order: Vec<usize> = (0..numel).collect();
            order.shuffle(&mut rng);
            let mut check = ParamCheck {
                layer_index: li,
                layer_kind: kind,
                param: name,
                numel,
                checked: 0,
                skipped_kinks: 0,
                worst_index: 0,
                analytic: 0.0,
                numeric: 0.0,
                rel_error: 0.0,
            };
            for idx in order {
                if check.checked >= cfg.samples_per_tensor {
                    break;
                }
                let original = net.layers()[li].params()[pi].value.data()[idx];
                let eval = |value: f64, net: &mut Sequential<f64>| -> Result<(f64, Vec<usize>)> {
                    net.layers_mut()[li].params_mut()[pi].value.data_mut()[idx] = value;
                    loss_and_pattern(net, input, target)
                };
                let (plus, pat_plus) = eval(original + cfg.eps, net)?;
                let (minus, pat_minus) = eval(original - cfg.eps, net)?;
                net.layers_mut()[li].params_mut()[pi].value.data_mut()[idx] = original;
                if pat_plus != base_pattern || pat_minus != base_pattern {
                    check.skipped_kinks += 1;
                    continue;
                }
                let numeric = (plus - minus) / (2.0 * cfg.eps);
                let a = analytic[flat][idx];
                let err = relative_error(a, numeric, cfg.abs_floor);
                check.checked += 1;
                if err >= check.rel_error {
                    check.rel_error = err;
                    check.worst_index = idx;
                    check.analytic = a;
                    check.numeric = numeric;
                }
            }
            report.max_rel_error = report.max_rel_error.max(check.rel_error);
            report.params.push(check);
            flat += 1;
        }
    }
    // leave caches consistent with the unperturbed parameters
    net.forward(input)?;
    Ok(report)
}

/// A small network with a fixed probe batch, used by the CLI and tests.
pub struct ToyProblem {
    pub name: &'static str,
    pub net: Sequential<f64>,
    pub input: Tensor<f64>,
    pub target: Tensor<f64>,
}

fn probe(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Result<Tensor<f64>> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn toy(name: &'static str, configs: &[LayerConfig], input: Vec<usize>, rng: &mut ChaCha8Rng) -> Result<ToyProblem> {
    let mut net = Sequential::new(configs, rng)?;
    // nonzero biases keep bias-only output cells off the ReLU kink
    for p in net.parameters_mut().filter(|p| p.name == "bias") {
        for b in p.value.data_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    let mut out_shape = vec![input[0]];
    out_shape.extend(net.output_shape(&input[1..])?);
    Ok(ToyProblem {
        name,
        net,
        input: probe(input, rng)?,
        target: probe(out_shape, rng)?,
    })
}

/// Compositions covering every layer kind, plus small-input versions of the
/// full model graphs.
pub fn toy_problems(seed: u64) -> Result<Vec<ToyProblem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![
        toy(
            "dense_relu",
            &[LayerConfig::dense(12, 16), LayerConfig::Relu, LayerConfig::dense(16, 8), LayerConfig::Relu, LayerConfig::dense(8, 3)],
            vec![4, 12],
            &mut rng,
        )?,
        toy(
            "conv_pool_dense",
            &[
                LayerConfig::conv2d(1, 4, 3),
                LayerConfig::Relu,
                LayerConfig::MaxPool2d,
                LayerConfig::conv2d(4, 6, 2),
                LayerConfig::Relu,
                LayerConfig::MaxPool2d,
                LayerConfig::Flatten,
                LayerConfig::dense(6 * 1 * 2, 3),
            ],
            vec![3, 1, 10, 14],
            &mut rng,
        )?,
        toy(
            "conv_transpose_chain",
            &[
                LayerConfig::conv_transpose2d_to(3, 4, 3, 2, [3, 4], [7, 10])?,
                LayerConfig::Relu,
                LayerConfig::conv_transpose2d_to(4, 1, 3, 2, [7, 10], [16, 21])?,
            ],
            vec![2, 3, 3, 4],
            &mut rng,
        )?,
    ];
    let graphs: [(&'static str, ModelId, bool); 4] = [
        ("m2_localizer", ModelId::M2, false),
        ("m3_autoencoder", ModelId::M3, true),
        ("m4_autoencoder", ModelId::M4, true),
        ("m4_localizer", ModelId::M4, false),
    ];
    for (name, model, autoencoder) in graphs {
        let spec = ModelSpec::new(model, [10, 14]);
        let stacks = spec.layer_stacks()?;
        let configs = if autoencoder {
            [stacks.encoder, stacks.decoder].concat()
        } else {
            [stacks.encoder, stacks.head].concat()
        };
        let mut input = vec![2];
        input.extend(spec.network_input_shape());
        out.push(toy(name, &configs, input, &mut rng)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0, 1e-6), 0.0);
        assert!((relative_error(1.0, 1.1, 1e-6) - 0.1 / 1.1).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-9, 1e-6) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn dense_relu_toy_is_tight() {
        let mut problems = toy_problems(3).unwrap();
        let p = &mut problems[0];
        let report = gradcheck(&mut p.net, &p.input, &p.target, &GradcheckConfig::default()).unwrap();
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
        assert!(report.params.iter().all(|c| c.checked == c.numel.min(200)));
    }

    #[test]
    fn every_toy_tensor_is_exercised() {
        for mut p in toy_problems(0).unwrap() {
            let report = gradcheck(&mut p.net, &p.input, &p.target, &GradcheckConfig::default()).unwrap();
            for c in &report.params {
                assert!(c.checked > 0, "{}: {} {} never checked", p.name, c.layer_index, c.param);
            }
        }
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let mut problems = toy_problems(3).unwrap();
        let p = &mut problems[0];
        let cfg = GradcheckConfig { corrupt_first_gradient: true, ..GradcheckConfig::default() };
        let report = gradcheck(&mut p.net, &p.input, &p.target, &cfg).unwrap();
        assert!(report.max_rel_error > 1e-2);
    }
}
