//! The four localization architectures.
//!
//! | model | pretraining        | localizer                                  |
//! |-------|--------------------|--------------------------------------------|
//! | M1    | none               | MLP head 128/64/3 on the flattened sample  |
//! | M2    | none               | conv(32,k3)/pool/conv(64,k2)/pool + head   |
//! | M3    | MLP autoencoder    | encoder 256/128/64/32 + head               |
//! | M4    | CNN autoencoder    | conv encoder of M2 + head                  |
//!
//! MLP models see a sample as a flat vector of `h·w` values, CNN models as a
//! one-channel `1 × h × w` image.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::loss::{mse, mse_loss};
use crate::nn::{self, LayerConfig, Parameter, Sequential};
use crate::tensor::{Element, Tensor};

pub const HEAD_WIDTHS: [usize; 3] = [128, 64, 3];
pub const MLP_ENCODER_WIDTHS: [usize; 4] = [256, 128, 64, 32];
pub const CNN_CHANNELS: [usize; 2] = [32, 64];
pub const CNN_KERNELS: [usize; 2] = [3, 2];
pub const DECODER_KERNEL: usize = 3;
pub const DECODER_STRIDE: usize = 2;
/// Antennas × subcarriers of one averaged CSI sample.
pub const CSI_SHAPE: [usize; 2] = [56, 924];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    M1,
    M2,
    M3,
    M4,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [ModelId::M1, ModelId::M2, ModelId::M3, ModelId::M4];

    /// Whether the model is trained in two phases with an autoencoder.
    pub fn is_pretrained(self) -> bool {
        matches!(self, ModelId::M3 | ModelId::M4)
    }

    pub fn is_convolutional(self) -> bool {
        matches!(self, ModelId::M2 | ModelId::M4)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelId::M1 => "m1",
            ModelId::M2 => "m2",
            ModelId::M3 => "m3",
            ModelId::M4 => "m4",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(ModelId::M1),
            "m2" => Ok(ModelId::M2),
            "m3" => Ok(ModelId::M3),
            "m4" => Ok(ModelId::M4),
            other => Err(Error::config(format!("unknown model `{other}` (expected m1, m2, m3 or m4)"))),
        }
    }
}

fn default_true() -> bool {
    true
}

/// Which architecture, at which input size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: ModelId,
    /// Sample extents `[h, w]` (antennas × subcarriers for real data).
    pub input: [usize; 2],
    /// Keep the ReLU after the last decoder layer.
    #[serde(default = "default_true")]
    pub final_activation: bool,
}

/// Layer lists of one model, split by role.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerStacks {
    pub encoder: Vec<LayerConfig>,
    pub decoder: Vec<LayerConfig>,
    pub head: Vec<LayerConfig>,
}

fn mlp_head(in_features: usize) -> Vec<LayerConfig> {
    let mut layers = vec![LayerConfig::Flatten];
    let mut prev = in_features;
    for (i, &w) in HEAD_WIDTHS.iter().enumerate() {
        layers.push(LayerConfig::dense(prev, w));
        if i + 1 < HEAD_WIDTHS.len() {
            layers.push(LayerConfig::Relu);
        }
        prev = w;
    }
    layers
}

fn conv_encoder() -> Vec<LayerConfig> {
    vec![
        LayerConfig::conv2d(1, CNN_CHANNELS[0], CNN_KERNELS[0]),
        LayerConfig::Relu,
        LayerConfig::MaxPool2d,
        LayerConfig::conv2d(CNN_CHANNELS[0], CNN_CHANNELS[1], CNN_KERNELS[1]),
        LayerConfig::Relu,
        LayerConfig::MaxPool2d,
    ]
}

impl ModelSpec {
    pub fn new(model: ModelId, input: [usize; 2]) -> Self {
        ModelSpec { model, input, final_activation: true }
    }

    /// Full-size CSI input of 56 × 924.
    pub fn full_size(model: ModelId) -> Self {
        Self::new(model, CSI_SHAPE)
    }

    pub fn without_final_activation(mut self) -> Self {
        self.final_activation = false;
        self
    }

    /// Per-sample shape fed to the first layer.
    pub fn network_input_shape(&self) -> Vec<usize> {
        let [h, w] = self.input;
        if self.model.is_convolutional() {
            vec![1, h, w]
        } else {
            vec![h * w]
        }
    }

    fn infer_shape(&self, configs: &[LayerConfig], input: &[usize], what: &str) -> Result<Vec<usize>> {
        nn::output_shape(configs, input).map_err(|e| {
            Error::config(format!(
                "{} {what} is infeasible for input {:?}: {e}",
                self.model, self.input
            ))
        })
    }

    pub fn layer_stacks(&self) -> Result<LayerStacks> {
        let [h, w] = self.input;
        if h == 0 || w == 0 {
            return Err(Error::config(format!("input extents must be >= 1, got {:?}", self.input)));
        }
        let input = self.network_input_shape();
        let stacks = match self.model {
            ModelId::M1 => LayerStacks { encoder: vec![], decoder: vec![], head: mlp_head(h * w) },
            ModelId::M2 => {
                let features = conv_encoder();
                let out = self.infer_shape(&features, &input, "convolutional feature stack")?;
                let mut head = features;
                head.extend(mlp_head(out.iter().product()));
                LayerStacks { encoder: vec![], decoder: vec![], head }
            }
            ModelId::M3 => {
                let mut encoder = Vec::new();
                let mut prev = h * w;
                for &width in &MLP_ENCODER_WIDTHS {
                    encoder.push(LayerConfig::dense(prev, width));
                    encoder.push(LayerConfig::Relu);
                    prev = width;
                }
                let mut decoder = Vec::new();
                let mut widths: Vec<usize> = MLP_ENCODER_WIDTHS.iter().rev().skip(1).copied().collect();
                widths.push(h * w);
                for width in widths {
                    decoder.push(LayerConfig::dense(prev, width));
                    decoder.push(LayerConfig::Relu);
                    prev = width;
                }
                if !self.final_activation {
                    decoder.pop();
                }
                let latent = MLP_ENCODER_WIDTHS[MLP_ENCODER_WIDTHS.len() - 1];
                LayerStacks { encoder, decoder, head: mlp_head(latent) }
            }
            ModelId::M4 => {
                let encoder = conv_encoder();
                let after_first_pool = self.infer_shape(&encoder[..3], &input, "first encoder block")?;
                let latent = self.infer_shape(&encoder, &input, "convolutional encoder")?;
                let mut decoder = vec![
                    LayerConfig::conv_transpose2d_to(
                        CNN_CHANNELS[1],
                        CNN_CHANNELS[0],
                        DECODER_KERNEL,
                        DECODER_STRIDE,
                        [latent[1], latent[2]],
                        [after_first_pool[1], after_first_pool[2]],
                    )?,
                    LayerConfig::Relu,
                    LayerConfig::conv_transpose2d_to(
                        CNN_CHANNELS[0],
                        1,
                        DECODER_KERNEL,
                        DECODER_STRIDE,
                        [after_first_pool[1], after_first_pool[2]],
                        [h, w],
                    )?,
                    LayerConfig::Relu,
                ];
                if !self.final_activation {
                    decoder.pop();
                }
                LayerStacks { encoder, decoder, head: mlp_head(latent.iter().product()) }
            }
        };
        // every stack must chain end to end
        let latent = self.infer_shape(&stacks.encoder, &input, "encoder")?;
        let out = self.infer_shape(&stacks.head, &latent, "localizer head")?;
        debug_assert_eq!(out, vec![3]);
        if !stacks.decoder.is_empty() {
            let recon = self.infer_shape(&stacks.decoder, &latent, "decoder")?;
            if recon != input {
                return Err(Error::config(format!(
                    "{} decoder reconstructs {recon:?} instead of {input:?}",
                    self.model
                )));
            }
        }
        Ok(stacks)
    }

    /// Per-sample latent shape produced by the encoder.
    pub fn latent_shape(&self) -> Result<Vec<usize>> {
        let stacks = self.layer_stacks()?;
        nn::output_shape(&stacks.encoder, &self.network_input_shape())
    }

    /// Machine-readable layer listing with shapes and parameter counts.
    pub fn architecture(&self) -> Result<ArchitectureDump> {
        let stacks = self.layer_stacks()?;
        let input = self.network_input_shape();
        let mut stages = Vec::new();
        let mut latent = input.clone();
        let mut add_stage = |name: &str, configs: &[LayerConfig], start: &[usize]| -> Result<Vec<usize>> {
            let mut shape = start.to_vec();
            let mut layers = Vec::new();
            for (index, config) in configs.iter().enumerate() {
                let out = config.output_shape(&shape)?;
                let params: Vec<ParamDump> = config
                    .param_shapes()
                    .into_iter()
                    .map(|(name, shape)| ParamDump { name: name.to_string(), shape })
                    .collect();
                layers.push(LayerDump {
                    index,
                    config: config.clone(),
                    input_shape: shape.clone(),
                    output_shape: out.clone(),
                    param_count: config.param_count(),
                    params,
                });
                shape = out;
            }
            stages.push(StageDump {
                name: name.to_string(),
                param_count: layers.iter().map(|l| l.param_count).sum(),
                layers,
            });
            Ok(shape)
        };
        if !stacks.encoder.is_empty() {
            latent = add_stage("encoder", &stacks.encoder, &input)?;
            add_stage("decoder", &stacks.decoder, &latent)?;
        }
        add_stage("head", &stacks.head, &latent)?;
        Ok(ArchitectureDump {
            model: self.model,
            input_shape: input,
            latent_shape: latent,
            total_params: stages.iter().map(|s| s.param_count).sum(),
            stages,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamDump {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDump {
    pub index: usize,
    #[serde(flatten)]
    pub config: LayerConfig,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub params: Vec<ParamDump>,
    pub param_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDump {
    pub name: String,
    pub layers: Vec<LayerDump>,
    pub param_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureDump {
    pub model: ModelId,
    pub input_shape: Vec<usize>,
    pub latent_shape: Vec<usize>,
    pub stages: Vec<StageDump>,
    pub total_params: usize,
}

impl ArchitectureDump {
    pub fn stage(&self, name: &str) -> Option<&StageDump> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("architecture dump serializes")
    }
}

/// Checks a `[batch, h, w]` batch against the spec and reshapes it for the network.
fn network_batch<T: Element>(spec: &ModelSpec, x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.ndim() != 3 || x.sample_shape() != spec.input {
        return Err(Error::dim(
            format!("{} input batch", spec.model),
            format!("[batch, {}, {}]", spec.input[0], spec.input[1]),
            x.shape(),
        ));
    }
    let mut shape = vec![x.dim(0)];
    shape.extend(spec.network_input_shape());
    x.reshaped(shape)
}

fn named_tensors<T: Element>(out: &mut Vec<(String, Tensor<T>)>, stack: &Sequential<T>, prefix: &str) {
    out.extend(stack.named_parameters(prefix).map(|(n, p)| (n, p.value.clone())));
}

fn norm_tensors<T: Element>(out: &mut Vec<(String, Tensor<T>)>, norm: &Standardizer<T>, prefix: &str) {
    if let Some((mean, std)) = norm.stats() {
        out.push((format!("{prefix}.mean"), mean.clone()));
        out.push((format!("{prefix}.std"), std.clone()));
    }
}

/// Copies named tensors into matching parameters. Every parameter of the
/// listed stacks must be present with the same shape.
fn load_stacks<T: Element>(
    tensors: &[(String, Tensor<T>)],
    stacks: Vec<(&str, &mut Sequential<T>)>,
) -> Result<()> {
    let mut problems = Vec::new();
    let mut assignments = Vec::new();
    for (prefix, stack) in &stacks {
        for (name, p) in stack.named_parameters(prefix) {
            match tensors.iter().find(|(n, _)| *n == name) {
                None => problems.push(format!("{name}: missing (expected {:?})", p.value.shape())),
                Some((_, t)) if t.shape() != p.value.shape() => problems.push(format!(
                    "{name}: checkpoint shape {:?}, model shape {:?}",
                    t.shape(),
                    p.value.shape()
                )),
                Some((_, t)) => assignments.push((name, t.clone())),
            }
        }
    }
    let prefixes: Vec<&str> = stacks.iter().map(|(p, _)| *p).collect();
    for (name, t) in tensors {
        let owned = prefixes.iter().any(|p| name.starts_with(&format!("{p}.")));
        if owned && !assignments.iter().any(|(n, _)| n == name) && !problems.iter().any(|p| p.starts_with(name.as_str())) {
            problems.push(format!("{name}: unexpected tensor of shape {:?}", t.shape()));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Integrity(format!(
            "checkpoint does not fit the model; offending layers: {}",
            problems.join("; ")
        )));
    }
    for (prefix, stack) in stacks {
        let names: Vec<String> = stack.named_parameters(prefix).map(|(n, _)| n).collect();
        for (p, name) in stack.parameters_mut().zip(names) {
            let (_, t) = assignments.iter().find(|(n, _)| *n == name).expect("validated above");
            p.value = t.clone();
        }
    }
    Ok(())
}

fn load_norm<T: Element>(tensors: &[(String, Tensor<T>)], prefix: &str) -> Result<Standardizer<T>> {
    let mean = tensors.iter().find(|(n, _)| *n == format!("{prefix}.mean"));
    let std = tensors.iter().find(|(n, _)| *n == format!("{prefix}.std"));
    match (mean, std) {
        (None, None) => Ok(Standardizer::disabled()),
        (Some((_, m)), Some((_, s))) => Standardizer::from_stats(m.clone(), s.clone()),
        _ => Err(Error::Integrity(format!("{prefix}: mean and std must be stored together"))),
    }
}

/// Encoder/decoder pair trained by reconstruction.
#[derive(Clone, Debug)]
pub struct Autoencoder<T = f32> {
    spec: ModelSpec,
    pub encoder: Sequential<T>,
    pub decoder: Sequential<T>,
    pub input_norm: Standardizer<T>,
}

impl<T: Element> Autoencoder<T> {
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        if !spec.model.is_pretrained() {
            return Err(Error::config(format!("{} has no autoencoder (use m3 or m4)", spec.model)));
        }
        let stacks = spec.layer_stacks()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Autoencoder {
            spec: spec.clone(),
            encoder: Sequential::new(&stacks.encoder, &mut rng)?,
            decoder: Sequential::new(&stacks.decoder, &mut rng)?,
            input_norm: Standardizer::disabled(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Standardized network input and the matching reconstruction target.
    fn prepare(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let normed = self.input_norm.apply(x)?;
        network_batch(&self.spec, &normed)
    }

    /// Latent representation `z` for a `[batch, h, w]` batch.
    pub fn encode(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.encoder.infer(&self.prepare(x)?)
    }

    /// Reconstruction `r`, returned in the input's units and shape.
    pub fn reconstruct(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let z = self.encode(x)?;
        let r = self.decoder.infer(&z)?.reshape(x.shape().to_vec())?;
        self.input_norm.invert(&r)
    }

    /// Reconstruction MSE in standardized units.
    pub fn reconstruction_loss(&self, x: &Tensor<T>) -> Result<f64> {
        let input = self.prepare(x)?;
        let r = self.decoder.infer(&self.encoder.infer(&input)?)?;
        mse(&r, &input)
    }

    /// Forward + backward for one batch; gradients are zeroed first.
    pub fn train_batch(&mut self, x: &Tensor<T>) -> Result<f64> {
        let input = self.prepare(x)?;
        self.encoder.zero_grad();
        self.decoder.zero_grad();
        let z = self.encoder.forward(&input)?;
        let r = self.decoder.forward(&z)?;
        let (loss, grad) = mse_loss(&r, &input)?;
        let gz = self.decoder.backward(&grad)?;
        self.encoder.backward_params(&gz)?;
        Ok(loss)
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.encoder.parameters_mut().chain(self.decoder.parameters_mut())
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.decoder.num_params()
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        named_tensors(&mut out, &self.encoder, "encoder");
        named_tensors(&mut out, &self.decoder, "decoder");
        norm_tensors(&mut out, &self.input_norm, "input_norm");
        out
    }

    pub fn load_named(&mut self, tensors: &[(String, Tensor<T>)]) -> Result<()> {
        let norm = load_norm(tensors, "input_norm")?;
        load_stacks(tensors, vec![("encoder", &mut self.encoder), ("decoder", &mut self.decoder)])?;
        self.input_norm = norm;
        Ok(())
    }
}

/// Position estimator: optional (pretrained) encoder followed by the MLP head.
#[derive(Clone, Debug)]
pub struct Localizer<T = f32> {
    spec: ModelSpec,
    pub encoder: Sequential<T>,
    pub head: Sequential<T>,
    pub encoder_frozen: bool,
    pub input_norm: Standardizer<T>,
    pub target_norm: Standardizer<T>,
}

impl<T: Element> Localizer<T> {
    /// Fresh localizer. For M3/M4 the encoder is randomly initialised and
    /// normally replaced by [`Localizer::load_encoder`].
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let stacks = spec.layer_stacks()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Sequential::new(&stacks.encoder, &mut rng)?;
        let head = Sequential::new(&stacks.head, &mut rng)?;
        Ok(Localizer {
            spec: spec.clone(),
            encoder,
            head,
            encoder_frozen: spec.model.is_pretrained(),
            input_norm: Standardizer::disabled(),
            target_norm: Standardizer::disabled(),
        })
    }

    /// Localizer reusing the encoder (and input standardization) of a
    /// pretrained autoencoder, with a freshly initialised head.
    pub fn from_autoencoder(ae: &Autoencoder<T>, seed: u64) -> Result<Self> {
        let mut loc = Self::build(ae.spec(), seed)?;
        loc.encoder = ae.encoder.clone();
        loc.input_norm = ae.input_norm.clone();
        Ok(loc)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn has_encoder(&self) -> bool {
        !self.encoder.is_empty()
    }

    fn features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let input = network_batch(&self.spec, &self.input_norm.apply(x)?)?;
        self.encoder.infer(&input)
    }

    /// Position estimates `[batch, 3]` in the units of the training targets.
    pub fn predict_position(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.head.infer(&self.features(x)?)?;
        self.target_norm.invert(&y)
    }

    /// MSE against `positions` in standardized target units.
    pub fn loss(&self, x: &Tensor<T>, positions: &Tensor<T>) -> Result<f64> {
        let y = self.head.infer(&self.features(x)?)?;
        mse(&y, &self.target_norm.apply(positions)?)
    }

    /// Forward + backward for one batch; gradients are zeroed first. With a
    /// frozen encoder no encoder gradient is computed.
    pub fn train_batch(&mut self, x: &Tensor<T>, positions: &Tensor<T>) -> Result<f64> {
        let input = network_batch(&self.spec, &self.input_norm.apply(x)?)?;
        let target = self.target_norm.apply(positions)?;
        self.head.zero_grad();
        let trains_encoder = self.has_encoder() && !self.encoder_frozen;
        let z = if trains_encoder {
            self.encoder.zero_grad();
            self.encoder.forward(&input)?
        } else {
            self.encoder.infer(&input)?
        };
        let y = self.head.forward(&z)?;
        let (loss, grad) = mse_loss(&y, &target)?;
        if trains_encoder {
            let gz = self.head.backward(&grad)?;
            self.encoder.backward_params(&gz)?;
        } else {
            self.head.backward_params(&grad)?;
        }
        Ok(loss)
    }

    /// Parameters the optimizer may update: the head, plus the encoder when unfrozen.
    pub fn trainable_parameters_mut(&mut self) -> Box<dyn Iterator<Item = &mut Parameter<T>> + '_> {
        if self.encoder_frozen {
            Box::new(self.head.parameters_mut())
        } else {
            Box::new(self.encoder.parameters_mut().chain(self.head.parameters_mut()))
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        named_tensors(&mut out, &self.encoder, "encoder");
        named_tensors(&mut out, &self.head, "head");
        norm_tensors(&mut out, &self.input_norm, "input_norm");
        norm_tensors(&mut out, &self.target_norm, "target_norm");
        out
    }

    pub fn load_named(&mut self, tensors: &[(String, Tensor<T>)]) -> Result<()> {
        let input_norm = load_norm(tensors, "input_norm")?;
        let target_norm = load_norm(tensors, "target_norm")?;
        load_stacks(tensors, vec![("encoder", &mut self.encoder), ("head", &mut self.head)])?;
        self.input_norm = input_norm;
        self.target_norm = target_norm;
        Ok(())
    }

    /// Loads only the encoder and input standardization, e.g. from an
    /// autoencoder checkpoint.
    pub fn load_encoder(&mut self, tensors: &[(String, Tensor<T>)]) -> Result<()> {
        if !self.has_encoder() {
            return Err(Error::config(format!("{} has no encoder to load", self.spec.model)));
        }
        let input_norm = load_norm(tensors, "input_norm")?;
        load_stacks(tensors, vec![("encoder", &mut self.encoder)])?;
        self.input_norm = input_norm;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_id_parsing() {
        assert_eq!("M3".parse::<ModelId>().unwrap(), ModelId::M3);
        assert!("m5".parse::<ModelId>().is_err());
        assert_eq!(ModelId::M4.to_string(), "m4");
    }

    #[test]
    fn m3_encoder_param_count_closed_form() {
        let dump = ModelSpec::full_size(ModelId::M3).architecture().unwrap();
        let expected = 51744 * 256 + 256 + 256 * 128 + 128 + 128 * 64 + 64 + 64 * 32 + 32;
        assert_eq!(dump.stage("encoder").unwrap().param_count, expected);
        assert_eq!(dump.latent_shape, vec![32]);
    }

    #[test]
    fn m4_latent_and_head_input() {
        let spec = ModelSpec::full_size(ModelId::M4);
        assert_eq!(spec.latent_shape().unwrap(), vec![64, 13, 230]);
        let stacks = spec.layer_stacks().unwrap();
        assert_eq!(stacks.head[1], LayerConfig::dense(191_360, 128));
    }

    #[test]
    fn too_small_input_is_config_error() {
        for model in [ModelId::M2, ModelId::M4] {
            let err = ModelSpec::new(model, [4, 4]).layer_stacks().unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{err}");
        }
    }

    #[test]
    fn unreachable_decoder_extent_is_config_error() {
        // 11 -> 9 -> 4 -> 3 -> 1, and no output adjustment below the stride maps 4 back to 11
        let err = ModelSpec::new(ModelId::M4, [11, 13]).layer_stacks().unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(ModelSpec::new(ModelId::M2, [11, 13]).layer_stacks().is_ok());
    }

    #[test]
    fn heads_share_structure() {
        let tail = |m: ModelId| {
            let head = ModelSpec::new(m, [16, 32]).layer_stacks().unwrap().head;
            let n = head.len();
            head[n - 5..].iter().skip(1).cloned().collect::<Vec<_>>()
        };
        let m1 = tail(ModelId::M1);
        for m in [ModelId::M2, ModelId::M3, ModelId::M4] {
            assert_eq!(tail(m), m1, "{m}");
        }
    }

    #[test]
    fn zero_input_zero_bias_encoder_gives_zero_latent() {
        let ae = Autoencoder::<f64>::build(&ModelSpec::new(ModelId::M3, [4, 6]), 1).unwrap();
        let x = Tensor::zeros(vec![2, 4, 6]).unwrap();
        assert!(ae.encode(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reconstruct_keeps_input_shape() {
        for (model, input) in [(ModelId::M3, [5, 7]), (ModelId::M4, [16, 32]), (ModelId::M4, [10, 14])] {
            let ae = Autoencoder::<f32>::build(&ModelSpec::new(model, input), 2).unwrap();
            let x = Tensor::from_fn(vec![3, input[0], input[1]], |i| (i as f32 * 0.1).sin()).unwrap();
            assert_eq!(ae.reconstruct(&x).unwrap().shape(), x.shape());
            assert!(ae.reconstruction_loss(&x).unwrap() > 0.0);
        }
    }

    #[test]
    fn wrong_input_shape_is_dimension_error() {
        let loc = Localizer::<f32>::build(&ModelSpec::new(ModelId::M1, [4, 4]), 0).unwrap();
        let x = Tensor::zeros(vec![2, 4, 5]).unwrap();
        assert!(matches!(loc.predict_position(&x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn autoencoder_rejected_for_supervised_models() {
        assert!(Autoencoder::<f32>::build(&ModelSpec::new(ModelId::M1, [8, 8]), 0).is_err());
    }
}
