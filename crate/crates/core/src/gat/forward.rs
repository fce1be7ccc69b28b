use crate::error::{Error, Result};
use crate::net::{Adjacency, GraphInput, FEATURE_DIM};
use crate::rng::DetRng;

use super::{Activation, GatLayerParams, HeadCombine, ModelParams, LEAKY_SLOPE, SIGMOID_CLAMP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, masks drawn from `seed`.
    Train { seed: u64 },
    Infer,
}

/// Attention scores and weights of one layer, indexed `entry * heads + head`
/// where `entry` indexes [`Adjacency::targets`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCoefficients {
    heads: usize,
    logits: Vec<f64>,
    scores: Vec<f64>,
    weights: Vec<f64>,
}

impl AttentionCoefficients {
    pub fn heads(&self) -> usize {
        self.heads
    }

    /// Raw score `e_ij` after LeakyReLU.
    pub fn score(&self, entry: usize, head: usize) -> f64 {
        self.scores[entry * self.heads + head]
    }

    /// Normalized weight `α_ij`; zero for dropped entries.
    pub fn weight(&self, entry: usize, head: usize) -> f64 {
        self.weights[entry * self.heads + head]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn logits(&self) -> &[f64] {
        &self.logits
    }
}

/// Dropout decisions for one training forward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DropoutMasks {
    /// Keep flags for layer-1 attention entries, `entry * heads + head`.
    pub attention: Option<Vec<bool>>,
    /// Per-value scale (0 or `1 / (1 - rate)`) for the hidden features fed to
    /// layer 2.
    pub hidden: Option<Vec<f64>>,
}

impl DropoutMasks {
    pub fn sample(params: &ModelParams, adjacency: &Adjacency, seed: u64) -> Self {
        let mut rng = DetRng::new(seed);
        let heads = params.layer1.heads;
        let attention = (params.attention_dropout_rate > 0.0).then(|| {
            let rate = params.attention_dropout_rate;
            let mut keep: Vec<bool> = (0..adjacency.entry_count() * heads)
                .map(|_| rng.unit_f64() >= rate)
                .collect();
            // A node whose whole neighborhood was dropped keeps its self-loop.
            for i in 0..adjacency.node_count() {
                let range = adjacency.row_range(i);
                for h in 0..heads {
                    if range.clone().all(|e| !keep[e * heads + h]) {
                        let own = range.clone().find(|&e| adjacency.targets()[e] == i).unwrap();
                        keep[own * heads + h] = true;
                    }
                }
            }
            keep
        });
        let hidden = (params.layer_dropout_rate > 0.0).then(|| {
            let rate = params.layer_dropout_rate;
            let scale = 1.0 / (1.0 - rate);
            (0..adjacency.node_count() * params.layer2.in_dim)
                .map(|_| if rng.unit_f64() >= rate { scale } else { 0.0 })
                .collect()
        });
        DropoutMasks { attention, hidden }
    }
}

/// Everything one layer computed during the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerTrace {
    pub input: Vec<f64>,
    /// `node × heads × out_dim`
    pub projected: Vec<f64>,
    pub coeffs: AttentionCoefficients,
    pub pre_activation: Vec<f64>,
    pub output: Vec<f64>,
}

/// Intermediates of a [`model_forward`] call, consumed by the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub(crate) adjacency: Adjacency,
    pub(crate) masks: DropoutMasks,
    pub(crate) layer1: LayerTrace,
    pub(crate) layer2: LayerTrace,
}

impl ForwardCache {
    pub fn node_count(&self) -> usize {
        self.adjacency.node_count()
    }

    pub fn masks(&self) -> &DropoutMasks {
        &self.masks
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.layer2.output
    }

    pub fn layer1_coefficients(&self) -> &AttentionCoefficients {
        &self.layer1.coeffs
    }

    pub fn layer2_coefficients(&self) -> &AttentionCoefficients {
        &self.layer2.coeffs
    }
}

fn project(layer: &GatLayerParams, input: &[f64], nodes: usize) -> Vec<f64> {
    let (din, dout, heads) = (layer.in_dim, layer.out_dim, layer.heads);
    let kernel = &layer.tensors.kernel;
    let mut z = vec![0.0; nodes * heads * dout];
    for i in 0..nodes {
        let x = &input[i * din..(i + 1) * din];
        for h in 0..heads {
            let zi = &mut z[(i * heads + h) * dout..(i * heads + h + 1) * dout];
            for (k, &xk) in x.iter().enumerate() {
                let w = &kernel[(h * din + k) * dout..(h * din + k + 1) * dout];
                for c in 0..dout {
                    zi[c] += xk * w[c];
                }
            }
        }
    }
    z
}

fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn coefficients_from_projection(
    layer: &GatLayerParams,
    projected: &[f64],
    adjacency: &Adjacency,
    keep: Option<&[bool]>,
) -> AttentionCoefficients {
    let (dout, heads) = (layer.out_dim, layer.heads);
    let nodes = adjacency.node_count();
    let t = &layer.tensors;

    let mut src = vec![0.0; nodes * heads];
    let mut dst = vec![0.0; nodes * heads];
    for i in 0..nodes {
        for h in 0..heads {
            let z = &projected[(i * heads + h) * dout..(i * heads + h + 1) * dout];
            let a_src = &t.att_src[h * dout..(h + 1) * dout];
            let a_dst = &t.att_dst[h * dout..(h + 1) * dout];
            src[i * heads + h] = z.iter().zip(a_src).map(|(a, b)| a * b).sum();
            dst[i * heads + h] = z.iter().zip(a_dst).map(|(a, b)| a * b).sum();
        }
    }

    let entries = adjacency.entry_count();
    let mut logits = vec![0.0; entries * heads];
    let mut scores = vec![0.0; entries * heads];
    let mut weights = vec![0.0; entries * heads];
    let targets = adjacency.targets();
    for i in 0..nodes {
        let range = adjacency.row_range(i);
        for h in 0..heads {
            let kept = |e: usize| keep.map_or(true, |k| k[e * heads + h]);
            let mut max = f64::NEG_INFINITY;
            for e in range.clone() {
                let j = targets[e];
                let u = src[i * heads + h] + dst[j * heads + h];
                logits[e * heads + h] = u;
                scores[e * heads + h] = leaky_relu(u);
            }
            // An externally supplied mask may drop a whole row; fall back to
            // the self-loop so the softmax support is never empty.
            let any_kept = range.clone().any(kept);
            let in_support = |e: usize| if any_kept { kept(e) } else { targets[e] == i };
            for e in range.clone() {
                if in_support(e) {
                    max = max.max(scores[e * heads + h]);
                }
            }
            let mut total = 0.0;
            for e in range.clone() {
                if in_support(e) {
                    let w = (scores[e * heads + h] - max).exp();
                    weights[e * heads + h] = w;
                    total += w;
                }
            }
            for e in range.clone() {
                weights[e * heads + h] /= total;
            }
        }
    }

    AttentionCoefficients {
        heads,
        logits,
        scores,
        weights,
    }
}

/// Attention coefficients of `layer` for input rows `input` (row-major,
/// `in_dim` values per node). Entries with a `false` keep flag leave the
/// softmax support.
pub fn attention_coefficients(
    layer: &GatLayerParams,
    input: &[f64],
    adjacency: &Adjacency,
    keep: Option<&[bool]>,
) -> Result<AttentionCoefficients> {
    layer.validate()?;
    check_input(layer, input, adjacency)?;
    if let Some(k) = keep {
        if k.len() != adjacency.entry_count() * layer.heads {
            return Err(Error::Shape(format!(
                "attention mask has {} flags, expected {}",
                k.len(),
                adjacency.entry_count() * layer.heads
            )));
        }
    }
    let z = project(layer, input, adjacency.node_count());
    Ok(coefficients_from_projection(layer, &z, adjacency, keep))
}

fn check_input(layer: &GatLayerParams, input: &[f64], adjacency: &Adjacency) -> Result<()> {
    let want = adjacency.node_count() * layer.in_dim;
    if input.len() != want {
        return Err(Error::Shape(format!(
            "layer input has {} values, expected {} nodes × {}",
            input.len(),
            adjacency.node_count(),
            layer.in_dim
        )));
    }
    Ok(())
}

fn aggregate(
    layer: &GatLayerParams,
    projected: &[f64],
    adjacency: &Adjacency,
    coeffs: &AttentionCoefficients,
) -> Vec<f64> {
    let (dout, heads) = (layer.out_dim, layer.heads);
    let width = layer.output_dim();
    let nodes = adjacency.node_count();
    let targets = adjacency.targets();
    let bias = &layer.tensors.bias;
    let mut pre = vec![0.0; nodes * width];
    let mut head_out = vec![0.0; dout];
    for i in 0..nodes {
        for h in 0..heads {
            head_out.copy_from_slice(&bias[h * dout..(h + 1) * dout]);
            for e in adjacency.row_range(i) {
                let a = coeffs.weight(e, h);
                if a == 0.0 {
                    continue;
                }
                let j = targets[e];
                let zj = &projected[(j * heads + h) * dout..(j * heads + h + 1) * dout];
                for c in 0..dout {
                    head_out[c] += a * zj[c];
                }
            }
            match layer.combine {
                HeadCombine::Concatenate => {
                    pre[i * width + h * dout..i * width + (h + 1) * dout]
                        .copy_from_slice(&head_out);
                }
                HeadCombine::Average => {
                    for c in 0..dout {
                        pre[i * width + c] += head_out[c] / heads as f64;
                    }
                }
            }
        }
    }
    pre
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP)).exp())
}

fn activate(activation: Activation, pre: &[f64]) -> Vec<f64> {
    match activation {
        Activation::Elu => pre
            .iter()
            .map(|&x| if x > 0.0 { x } else { x.exp_m1() })
            .collect(),
        Activation::Sigmoid => pre.iter().map(|&x| sigmoid(x)).collect(),
    }
}

fn layer_trace(
    layer: &GatLayerParams,
    input: Vec<f64>,
    adjacency: &Adjacency,
    keep: Option<&[bool]>,
) -> LayerTrace {
    let projected = project(layer, &input, adjacency.node_count());
    let coeffs = coefficients_from_projection(layer, &projected, adjacency, keep);
    let pre_activation = aggregate(layer, &projected, adjacency, &coeffs);
    let output = activate(layer.activation, &pre_activation);
    LayerTrace {
        input,
        projected,
        coeffs,
        pre_activation,
        output,
    }
}

/// One attention layer: per-head weighted neighbor sums plus bias, heads
/// combined, then the activation.
pub fn gat_layer_forward(
    layer: &GatLayerParams,
    input: &[f64],
    adjacency: &Adjacency,
    coeffs: &AttentionCoefficients,
) -> Result<Vec<f64>> {
    layer.validate()?;
    check_input(layer, input, adjacency)?;
    if coeffs.heads != layer.heads || coeffs.weights.len() != adjacency.entry_count() * layer.heads
    {
        return Err(Error::Shape("attention coefficients do not match layer and graph".into()));
    }
    let z = project(layer, input, adjacency.node_count());
    let pre = aggregate(layer, &z, adjacency, coeffs);
    Ok(activate(layer.activation, &pre))
}

/// Steiner probability per node.
pub fn model_forward(
    params: &ModelParams,
    graph: &GraphInput,
    mode: Mode,
) -> Result<(Vec<f64>, ForwardCache)> {
    params.validate()?;
    let masks = match mode {
        Mode::Infer => DropoutMasks::default(),
        Mode::Train { seed } => DropoutMasks::sample(params, &graph.adjacency, seed),
    };
    model_forward_with_masks(params, graph, masks)
}

/// Forward pass with explicit dropout masks.
pub fn model_forward_with_masks(
    params: &ModelParams,
    graph: &GraphInput,
    masks: DropoutMasks,
) -> Result<(Vec<f64>, ForwardCache)> {
    params.validate()?;
    if params.layer1.in_dim != FEATURE_DIM {
        return Err(Error::Shape("layer 1 must take node features".into()));
    }
    let adjacency = &graph.adjacency;
    let nodes = adjacency.node_count();
    if let Some(keep) = &masks.attention {
        if keep.len() != adjacency.entry_count() * params.layer1.heads {
            return Err(Error::Shape("attention mask does not match graph".into()));
        }
    }
    if let Some(scale) = &masks.hidden {
        if scale.len() != nodes * params.layer2.in_dim {
            return Err(Error::Shape("hidden dropout mask does not match graph".into()));
        }
    }

    let layer1 = layer_trace(
        &params.layer1,
        graph.features.to_flat(),
        adjacency,
        masks.attention.as_deref(),
    );
    let mut hidden = layer1.output.clone();
    if let Some(scale) = &masks.hidden {
        hidden.iter_mut().zip(scale).for_each(|(h, s)| *h *= s);
    }
    let layer2 = layer_trace(&params.layer2, hidden, adjacency, None);
    let probabilities = layer2.output.clone();
    Ok((
        probabilities,
        ForwardCache {
            adjacency: adjacency.clone(),
            masks,
            layer1,
            layer2,
        },
    ))
}
