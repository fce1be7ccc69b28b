//! Two-layer graph attention network over Hanan grids.
//!
//! Layer 1 projects the 3 node features to 2 channels in each of 8 heads,
//! concatenates the heads and applies ELU. Layer 2 projects the resulting 16
//! values to a single channel with one head and applies a sigmoid, giving a
//! Steiner probability per node.
//!
//! For head `h`, node `i` attends over `N(i) ∪ {i}`:
//!
//! ```text
//! z_j    = W_h x_j
//! e_ij   = LeakyReLU_0.2(a_src · z_i + a_dst · z_j)
//! α_ij   = softmax_j(e_ij)
//! out_i  = Σ_j α_ij z_j + b_h
//! ```

mod backward;
mod forward;

pub use backward::model_backward;
pub use forward::{
    attention_coefficients, gat_layer_forward, model_forward, model_forward_with_masks,
    AttentionCoefficients, DropoutMasks, ForwardCache, Mode,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::FEATURE_DIM;
use crate::rng::DetRng;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const SIGMOID_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadCombine {
    Concatenate,
    Average,
}

/// Learnable tensors of one layer, all row-major.
///
/// - `kernel`: `heads × in_dim × out_dim`
/// - `att_src`, `att_dst`, `bias`: `heads × out_dim`
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensors {
    pub kernel: Vec<f64>,
    pub att_src: Vec<f64>,
    pub att_dst: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerTensors {
    pub fn zeros(in_dim: usize, out_dim: usize, heads: usize) -> Self {
        LayerTensors {
            kernel: vec![0.0; heads * in_dim * out_dim],
            att_src: vec![0.0; heads * out_dim],
            att_dst: vec![0.0; heads * out_dim],
            bias: vec![0.0; heads * out_dim],
        }
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [&self.kernel, &self.att_src, &self.att_dst, &self.bias]
    }

    pub fn slices_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.kernel,
            &mut self.att_src,
            &mut self.att_dst,
            &mut self.bias,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayerParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub heads: usize,
    pub activation: Activation,
    pub combine: HeadCombine,
    pub tensors: LayerTensors,
}

impl GatLayerParams {
    pub fn zeros(
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        activation: Activation,
        combine: HeadCombine,
    ) -> Self {
        GatLayerParams {
            in_dim,
            out_dim,
            heads,
            activation,
            combine,
            tensors: LayerTensors::zeros(in_dim, out_dim, heads),
        }
    }

    /// Width of the layer output after head combination.
    pub fn output_dim(&self) -> usize {
        match self.combine {
            HeadCombine::Concatenate => self.heads * self.out_dim,
            HeadCombine::Average => self.out_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Shape(format!(
                "layer dimensions must be positive (in {}, out {}, heads {})",
                self.in_dim, self.out_dim, self.heads
            )));
        }
        let t = &self.tensors;
        let per_head = self.heads * self.out_dim;
        let expected = [
            ("kernel", t.kernel.len(), per_head * self.in_dim),
            ("attention_src", t.att_src.len(), per_head),
            ("attention_dst", t.att_dst.len(), per_head),
            ("bias", t.bias.len(), per_head),
        ];
        for (name, got, want) in expected {
            if got != want {
                return Err(Error::Shape(format!("{name} has {got} values, expected {want}")));
            }
        }
        Ok(())
    }

    fn same_shape(&self, other: &LayerTensors) -> bool {
        self.tensors
            .slices()
            .iter()
            .zip(other.slices())
            .all(|(a, b)| a.len() == b.len())
    }
}

/// Architecture and dropout settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_channels: usize,
    pub hidden_heads: usize,
    pub attention_dropout: f64,
    pub layer_dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_channels: 2,
            hidden_heads: 8,
            attention_dropout: 0.225,
            layer_dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layer1: GatLayerParams,
    pub layer2: GatLayerParams,
    /// Probability of dropping a layer-1 attention entry during training.
    pub attention_dropout_rate: f64,
    /// Probability of dropping a hidden feature between the layers during
    /// training.
    pub layer_dropout_rate: f64,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        ModelParams {
            layer1: GatLayerParams::zeros(
                FEATURE_DIM,
                config.hidden_channels,
                config.hidden_heads,
                Activation::Elu,
                HeadCombine::Concatenate,
            ),
            layer2: GatLayerParams::zeros(
                config.hidden_channels * config.hidden_heads,
                1,
                1,
                Activation::Sigmoid,
                HeadCombine::Average,
            ),
            attention_dropout_rate: config.attention_dropout,
            layer_dropout_rate: config.layer_dropout,
        }
    }

    /// Glorot-uniform kernels and attention vectors, zero biases.
    ///
    /// Kernel limit: `sqrt(6 / (in_dim + heads·out_dim))`.
    /// Attention limit: `sqrt(6 / (heads·out_dim + heads))`.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut params = ModelParams::zeros(config);
        let mut rng = DetRng::new(seed);
        for layer in [&mut params.layer1, &mut params.layer2] {
            let (i, o, h) = (layer.in_dim as f64, layer.out_dim as f64, layer.heads as f64);
            let kernel_limit = (6.0 / (i + h * o)).sqrt();
            let att_limit = (6.0 / (h * o + h)).sqrt();
            let t = &mut layer.tensors;
            t.kernel.iter_mut().for_each(|w| *w = rng.symmetric(kernel_limit));
            t.att_src.iter_mut().for_each(|w| *w = rng.symmetric(att_limit));
            t.att_dst.iter_mut().for_each(|w| *w = rng.symmetric(att_limit));
        }
        params
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            hidden_channels: self.layer1.out_dim,
            hidden_heads: self.layer1.heads,
            attention_dropout: self.attention_dropout_rate,
            layer_dropout: self.layer_dropout_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layer1.validate()?;
        self.layer2.validate()?;
        if self.layer1.in_dim != FEATURE_DIM {
            return Err(Error::Shape(format!(
                "layer 1 expects {} inputs, features have {FEATURE_DIM}",
                self.layer1.in_dim
            )));
        }
        if self.layer2.in_dim != self.layer1.output_dim() {
            return Err(Error::Shape(format!(
                "layer 2 expects {} inputs, layer 1 produces {}",
                self.layer2.in_dim,
                self.layer1.output_dim()
            )));
        }
        if self.layer2.output_dim() != 1 {
            return Err(Error::Shape(format!(
                "output layer must produce 1 value per node, not {}",
                self.layer2.output_dim()
            )));
        }
        for (name, rate) in [
            ("attention dropout", self.attention_dropout_rate),
            ("layer dropout", self.layer_dropout_rate),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} rate {rate} outside [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> [&GatLayerParams; 2] {
        [&self.layer1, &self.layer2]
    }

    /// All learnable tensors in a fixed order: per layer kernel,
    /// attention_src, attention_dst, bias.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(8);
        out.extend(self.layer1.tensors.slices());
        out.extend(self.layer2.tensors.slices());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::with_capacity(8);
        out.extend(self.layer1.tensors.slices_mut());
        out.extend(self.layer2.tensors.slices_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }
}

pub fn init_params(seed: u64) -> ModelParams {
    ModelParams::init(&ModelConfig::default(), seed)
}

/// Gradients shaped like the learnable tensors of [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layer1: LayerTensors,
    pub layer2: LayerTensors,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let l1 = &params.layer1;
        let l2 = &params.layer2;
        Gradients {
            layer1: LayerTensors::zeros(l1.in_dim, l1.out_dim, l1.heads),
            layer2: LayerTensors::zeros(l2.in_dim, l2.out_dim, l2.heads),
        }
    }

    /// Same order as [`ModelParams::slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(8);
        out.extend(self.layer1.slices());
        out.extend(self.layer2.slices());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::with_capacity(8);
        out.extend(self.layer1.slices_mut());
        out.extend(self.layer2.slices_mut());
        out
    }

    /// Element-wise `self += other`.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn matches(&self, params: &ModelParams) -> bool {
        params.layer1.same_shape(&self.layer1) && params.layer2.same_shape(&self.layer2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        assert_eq!(init_params(5), init_params(5));
        assert_ne!(init_params(5).layer1.tensors.kernel, init_params(6).layer1.tensors.kernel);
    }

    #[test]
    fn default_shapes() {
        let p = init_params(0);
        p.validate().unwrap();
        assert_eq!(p.layer1.output_dim(), 16);
        assert_eq!(p.layer2.in_dim, 16);
        assert_eq!(p.layer2.output_dim(), 1);
        assert_eq!(p.attention_dropout_rate, 0.225);
        assert_eq!(p.layer_dropout_rate, 0.0);
        // 8·3·2 + 3·16 for layer 1, 16 + 3 for layer 2.
        assert_eq!(p.parameter_count(), 48 + 48 + 16 + 3);
        assert!(p.layer1.tensors.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn hidden_layer_init_within_unit_bound() {
        // Limits: kernel sqrt(6/19) ≈ 0.562, attention sqrt(6/24) = 0.5.
        for seed in 0..50 {
            let p = init_params(seed);
            for s in p.layer1.tensors.slices() {
                assert!(s.iter().all(|w| w.abs() <= 1.0));
            }
            assert!(p.layer1.tensors.kernel.iter().all(|w| w.abs() < (6.0f64 / 19.0).sqrt()));
            assert!(p.layer1.tensors.att_src.iter().all(|w| w.abs() < 0.5));
        }
    }

    #[test]
    fn validation_catches_bad_shapes() {
        let mut p = init_params(1);
        p.layer2.tensors.bias.push(0.0);
        assert!(matches!(p.validate(), Err(Error::Shape(_))));
        let mut p = init_params(1);
        p.attention_dropout_rate = 1.0;
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }
}
