use crate::error::{Error, Result};
use crate::gat::{Gradients, ModelParams};

/// Bias-corrected Adam moments for every learnable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Gradients,
    pub second: Gradients,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            first: Gradients::zeros_like(params),
            second: Gradients::zeros_like(params),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

pub fn adam_step(
    state: &mut AdamState,
    params: &mut ModelParams,
    grads: &Gradients,
    learning_rate: f64,
) -> Result<()> {
    if !grads.matches(params) || !state.first.matches(params) {
        return Err(Error::Shape("optimizer state or gradients do not match parameters".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((w, g), m), v) in params
        .slices_mut()
        .into_iter()
        .zip(grads.slices())
        .zip(state.first.slices_mut())
        .zip(state.second.slices_mut())
    {
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gat::init_params;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = init_params(1);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        adam_step(&mut s, &mut p, &Gradients::zeros_like(&before), 0.01).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = init_params(1);
        let before = p.clone();
        let mut g = Gradients::zeros_like(&p);
        g.layer1.kernel[0] = 1.0;
        let mut s = AdamState::new(&p);
        adam_step(&mut s, &mut p, &g, 0.01).unwrap();
        let delta = before.layer1.tensors.kernel[0] - p.layer1.tensors.kernel[0];
        assert!((delta - 0.01).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let p0 = init_params(2);
        let mut g = Gradients::zeros_like(&p0);
        g.layer2.bias[0] = -0.4;
        let run = || {
            let mut p = p0.clone();
            let mut s = AdamState::new(&p);
            adam_step(&mut s, &mut p, &g, 0.01).unwrap();
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = init_params(2);
        let mut g = Gradients::zeros_like(&p);
        g.layer2.bias.push(0.0);
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut s, &mut p, &g, 0.01).is_err());
    }
}
