use crate::error::{Error, Result};
use crate::net::Adjacency;

use super::forward::{ForwardCache, LayerTrace};
use super::{
    Activation, GatLayerParams, Gradients, HeadCombine, LayerTensors, ModelParams, LEAKY_SLOPE,
    SIGMOID_CLAMP,
};

/// Gradients of a scalar loss with respect to every learnable tensor, given
/// the loss gradient with respect to each output probability.
pub fn model_backward(
    params: &ModelParams,
    cache: &ForwardCache,
    d_prob: &[f64],
) -> Result<Gradients> {
    let nodes = cache.node_count();
    if d_prob.len() != nodes {
        return Err(Error::CacheMismatch(format!(
            "{} upstream gradients for {nodes} cached nodes",
            d_prob.len()
        )));
    }
    let shapes_match = [(&params.layer1, &cache.layer1), (&params.layer2, &cache.layer2)]
        .iter()
        .all(|(layer, trace)| {
            trace.input.len() == nodes * layer.in_dim
                && trace.pre_activation.len() == nodes * layer.output_dim()
                && trace.coeffs.heads() == layer.heads
        });
    if !shapes_match {
        return Err(Error::CacheMismatch("cached layer shapes differ from parameters".into()));
    }

    let mut grads = Gradients::zeros_like(params);
    let d_hidden = layer_backward(
        &params.layer2,
        &cache.layer2,
        &cache.adjacency,
        d_prob,
        &mut grads.layer2,
        true,
    );
    let mut d_hidden = d_hidden.expect("input gradient requested");
    if let Some(scale) = &cache.masks.hidden {
        d_hidden.iter_mut().zip(scale).for_each(|(d, s)| *d *= s);
    }
    layer_backward(
        &params.layer1,
        &cache.layer1,
        &cache.adjacency,
        &d_hidden,
        &mut grads.layer1,
        false,
    );
    Ok(grads)
}

fn activation_grad(activation: Activation, pre: &[f64], out: &[f64], d_out: &[f64]) -> Vec<f64> {
    match activation {
        Activation::Elu => pre
            .iter()
            .zip(d_out)
            .map(|(&x, &d)| if x > 0.0 { d } else { d * x.exp() })
            .collect(),
        Activation::Sigmoid => pre
            .iter()
            .zip(out)
            .zip(d_out)
            .map(|((&x, &p), &d)| {
                if x.abs() >= SIGMOID_CLAMP {
                    0.0
                } else {
                    d * p * (1.0 - p)
                }
            })
            .collect(),
    }
}

/// Accumulates parameter gradients of one layer into `grads` and returns the
/// gradient with respect to the layer input when asked.
fn layer_backward(
    layer: &GatLayerParams,
    trace: &LayerTrace,
    adjacency: &Adjacency,
    d_out: &[f64],
    grads: &mut LayerTensors,
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let (din, dout, heads) = (layer.in_dim, layer.out_dim, layer.heads);
    let width = layer.output_dim();
    let nodes = adjacency.node_count();
    let targets = adjacency.targets();
    let t = &layer.tensors;
    let z = &trace.projected;
    let coeffs = &trace.coeffs;

    let d_pre = activation_grad(layer.activation, &trace.pre_activation, &trace.output, d_out);

    // Gradient reaching each head's output, `node × heads × out_dim`.
    let mut d_head = vec![0.0; nodes * heads * dout];
    for i in 0..nodes {
        for h in 0..heads {
            for c in 0..dout {
                d_head[(i * heads + h) * dout + c] = match layer.combine {
                    HeadCombine::Concatenate => d_pre[i * width + h * dout + c],
                    HeadCombine::Average => d_pre[i * width + c] / heads as f64,
                };
            }
        }
    }

    let mut d_z = vec![0.0; nodes * heads * dout];
    let mut d_src = vec![0.0; nodes * heads];
    let mut d_dst = vec![0.0; nodes * heads];
    let mut d_alpha = Vec::new();
    for i in 0..nodes {
        let range = adjacency.row_range(i);
        for h in 0..heads {
            let dh = &d_head[(i * heads + h) * dout..(i * heads + h + 1) * dout];
            for c in 0..dout {
                grads.bias[h * dout + c] += dh[c];
            }

            d_alpha.clear();
            let mut weighted = 0.0;
            for e in range.clone() {
                let j = targets[e];
                let a = coeffs.weight(e, h);
                let zj = (j * heads + h) * dout;
                let mut da = 0.0;
                for c in 0..dout {
                    da += dh[c] * z[zj + c];
                    d_z[zj + c] += a * dh[c];
                }
                d_alpha.push(da);
                weighted += a * da;
            }

            // Softmax then LeakyReLU, back to the pre-activation logit.
            for (k, e) in range.clone().enumerate() {
                let a = coeffs.weight(e, h);
                if a == 0.0 {
                    continue;
                }
                let d_score = a * (d_alpha[k] - weighted);
                let u = coeffs.logits()[e * heads + h];
                let d_logit = if u > 0.0 { d_score } else { LEAKY_SLOPE * d_score };
                d_src[i * heads + h] += d_logit;
                d_dst[targets[e] * heads + h] += d_logit;
            }
        }
    }

    for i in 0..nodes {
        for h in 0..heads {
            let (ds, dd) = (d_src[i * heads + h], d_dst[i * heads + h]);
            let base = (i * heads + h) * dout;
            for c in 0..dout {
                grads.att_src[h * dout + c] += ds * z[base + c];
                grads.att_dst[h * dout + c] += dd * z[base + c];
                d_z[base + c] += ds * t.att_src[h * dout + c] + dd * t.att_dst[h * dout + c];
            }
        }
    }

    let x = &trace.input;
    let mut d_input = want_input_grad.then(|| vec![0.0; nodes * din]);
    for i in 0..nodes {
        for h in 0..heads {
            let dzi = &d_z[(i * heads + h) * dout..(i * heads + h + 1) * dout];
            for k in 0..din {
                let xk = x[i * din + k];
                let w = (h * din + k) * dout;
                let mut back = 0.0;
                for c in 0..dout {
                    grads.kernel[w + c] += xk * dzi[c];
                    back += dzi[c] * t.kernel[w + c];
                }
                if let Some(d) = d_input.as_mut() {
                    d[i * din + k] += back;
                }
            }
        }
    }
    d_input
}
