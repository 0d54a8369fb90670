//! Feed-forward networks with a mean-field Gaussian posterior over every
//! weight and bias.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
    Softmax,
}

impl Activation {
    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Linear => {}
            Activation::Softmax => {
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                z.iter_mut().for_each(|v| *v = (*v - m).exp());
                let s: f64 = z.iter().sum();
                z.iter_mut().for_each(|v| *v /= s);
            }
        }
    }
}

/// One dense layer. Matrices are stored row-major, `outputs × inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    inputs: usize,
    outputs: usize,
    weight_mean: Vec<f64>,
    weight_std: Vec<f64>,
    bias_mean: Vec<f64>,
    bias_std: Vec<f64>,
    activation: Activation,
}

impl LayerSpec {
    pub fn new(
        weight_mean: Vec<Vec<f64>>,
        weight_std: Vec<Vec<f64>>,
        bias_mean: Vec<f64>,
        bias_std: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        let outputs = weight_mean.len();
        let inputs = weight_mean.first().map_or(0, Vec::len);
        if outputs == 0 || inputs == 0 {
            return Err(Error::ShapeMismatch("empty weight matrix".into()));
        }
        let flatten = |m: Vec<Vec<f64>>, what: &str| -> Result<Vec<f64>> {
            if m.len() != outputs || m.iter().any(|r| r.len() != inputs) {
                return Err(Error::ShapeMismatch(format!(
                    "{what} is not {outputs}x{inputs}"
                )));
            }
            Ok(m.into_iter().flatten().collect())
        };
        let weight_mean = flatten(weight_mean, "weight_mean")?;
        let weight_std = flatten(weight_std, "weight_std")?;
        for (v, what) in [(&bias_mean, "bias_mean"), (&bias_std, "bias_std")] {
            if v.len() != outputs {
                return Err(Error::ShapeMismatch(format!(
                    "{what} has length {} but the layer has {outputs} outputs",
                    v.len()
                )));
            }
        }
        Ok(Self {
            inputs,
            outputs,
            weight_mean,
            weight_std,
            bias_mean,
            bias_std,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        self.outputs * self.inputs + self.outputs
    }

    fn means(&self) -> impl Iterator<Item = f64> + '_ {
        self.weight_mean.iter().chain(&self.bias_mean).copied()
    }

    fn stds(&self) -> impl Iterator<Item = f64> + '_ {
        self.weight_std.iter().chain(&self.bias_std).copied()
    }

    fn to_repr(&self) -> LayerRepr {
        let rows = |v: &[f64]| v.chunks(self.inputs).map(<[f64]>::to_vec).collect();
        LayerRepr {
            weight_mean: rows(&self.weight_mean),
            weight_std: rows(&self.weight_std),
            bias_mean: self.bias_mean.clone(),
            bias_std: self.bias_std.clone(),
            activation: self.activation,
        }
    }
}

/// On-disk layout of a layer; matrices are nested row-major arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRepr {
    weight_mean: Vec<Vec<f64>>,
    weight_std: Vec<Vec<f64>>,
    bias_mean: Vec<f64>,
    bias_std: Vec<f64>,
    activation: Activation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    layers: Vec<LayerRepr>,
    input_dim: usize,
    output_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnnModel {
    layers: Vec<LayerSpec>,
    input_dim: usize,
    output_dim: usize,
}

/// A concrete draw of every network parameter, layer by layer, weights
/// (row-major) before biases.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSample {
    pub params: Vec<f64>,
    pub seed: u64,
}

impl BnnModel {
    /// Validates the layer chain and the posterior scales.
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::ShapeMismatch("model has no layers".into()))?;
        let input_dim = first.inputs;
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::ShapeMismatch(format!(
                    "layer {k} produces {} values but layer {} expects {}",
                    pair[0].outputs,
                    k + 1,
                    pair[1].inputs
                )));
            }
        }
        let last = layers.len() - 1;
        for (k, layer) in layers.iter().enumerate() {
            if layer.activation == Activation::Softmax && k != last {
                return Err(Error::ShapeMismatch(format!(
                    "softmax on hidden layer {k}"
                )));
            }
            if layer.stds().any(|s| s < 0.0) {
                return Err(Error::NegativeStd { layer: k });
            }
            if layer.means().chain(layer.stds()).any(|v| !v.is_finite()) {
                return Err(Error::MalformedFile(format!(
                    "non-finite parameter in layer {k}"
                )));
            }
        }
        let output_dim = layers[last].outputs;
        Ok(Self {
            layers,
            input_dim,
            output_dim,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: ModelRepr =
            serde_json::from_str(text).map_err(|e| Error::MalformedFile(e.to_string()))?;
        let layers = repr
            .layers
            .into_iter()
            .map(|l| LayerSpec::new(l.weight_mean, l.weight_std, l.bias_mean, l.bias_std, l.activation))
            .collect::<Result<Vec<_>>>()?;
        let model = Self::new(layers)?;
        if model.input_dim != repr.input_dim || model.output_dim != repr.output_dim {
            return Err(Error::ShapeMismatch(format!(
                "declared dims {}→{} but layers give {}→{}",
                repr.input_dim, repr.output_dim, model.input_dim, model.output_dim
            )));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        let repr = ModelRepr {
            layers: self.layers.iter().map(LayerSpec::to_repr).collect(),
            input_dim: self.input_dim,
            output_dim: self.output_dim,
        };
        serde_json::to_string_pretty(&repr).expect("model serializes")
    }

    /// Reads and validates a model file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn mean_weights(&self) -> WeightSample {
        WeightSample {
            params: self.layers.iter().flat_map(LayerSpec::means).collect(),
            seed: 0,
        }
    }

    /// Draws every parameter independently as `mean + std * z`.
    pub fn sample_weights(&self, seed: u64) -> WeightSample {
        let mut rng = rng_from_seed(seed);
        let mut params = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            for (m, s) in layer.means().zip(layer.stds()) {
                let z: f64 = rng.sample(StandardNormal);
                params.push(if s == 0.0 { m } else { m + s * z });
            }
        }
        WeightSample { params, seed }
    }

    pub fn forward(&self, w: &WeightSample, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim, x.len())?;
        check_dim(self.param_count(), w.params.len())?;
        let mut act = x.to_vec();
        let mut offset = 0;
        for layer in &self.layers {
            let (wts, rest) = w.params[offset..].split_at(layer.inputs * layer.outputs);
            let bias = &rest[..layer.outputs];
            let mut z: Vec<f64> = wts
                .chunks(layer.inputs)
                .zip(bias)
                .map(|(row, b)| row.iter().zip(&act).map(|(a, v)| a * v).sum::<f64>() + b)
                .collect();
            layer.activation.apply(&mut z);
            act = z;
            offset += layer.param_count();
        }
        Ok(act)
    }

    /// Short content fingerprint used to tag sample files.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_json().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// A reproducible random network standing in for a trained posterior.
///
/// Hidden layers use `activation`; the final layer is linear, except that
/// `Softmax` puts softmax on the output and ReLU on the hidden layers.
/// Means are `weight_scale * z / sqrt(fan_in)`, every std is `std_scale`.
pub fn synth_model(
    arch: &[usize],
    activation: Activation,
    weight_scale: f64,
    std_scale: f64,
    seed: u64,
) -> Result<BnnModel> {
    if arch.len() < 2 {
        return Err(Error::EmptyArch);
    }
    if arch.contains(&0) {
        return Err(Error::ShapeMismatch("zero-width layer".into()));
    }
    if std_scale < 0.0 {
        return Err(Error::NegativeStd { layer: 0 });
    }
    let (hidden, output) = match activation {
        Activation::Softmax => (Activation::Relu, Activation::Softmax),
        a => (a, Activation::Linear),
    };
    let mut rng = rng_from_seed(seed);
    let n_layers = arch.len() - 1;
    let layers = arch
        .windows(2)
        .enumerate()
        .map(|(k, pair)| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let scale = weight_scale / (fan_in as f64).sqrt();
            let weight_mean = (0..fan_out)
                .map(|_| (0..fan_in).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            let bias_mean = (0..fan_out)
                .map(|_| 0.1 * weight_scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let act = if k + 1 == n_layers { output } else { hidden };
            LayerSpec::new(
                weight_mean,
                vec![vec![std_scale; fan_in]; fan_out],
                bias_mean,
                vec![std_scale; fan_out],
                act,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    BnnModel::new(layers)
}
