use super::{Gradients, NetworkParams, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(shapes: &[&[usize]], learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            step: 0,
            first_moment: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            second_moment: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            learning_rate,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn for_params(params: &NetworkParams, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        let shapes: Vec<&[usize]> = params.trainable().iter().map(|t| t.shape.as_slice()).collect();
        Self::new(&shapes, learning_rate, beta1, beta2, 1e-8)
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update(&mut self, mut params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "{} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape != g.shape || p.shape != self.first_moment[i].shape {
                return Err(Error::Shape(format!(
                    "tensor {i}: parameter {:?}, gradient {:?}",
                    p.shape, g.shape
                )));
            }
            if g.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(i));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - self.beta1.powi(t);
        let correction2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let m = &mut self.first_moment[i].data;
            let v = &mut self.second_moment[i].data;
            for (k, (x, &g)) in p.data.iter_mut().zip(&grads[i].data).enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = m[k] / correction1;
                let v_hat = v[k] / correction2;
                *x -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut NetworkParams, grads: &Gradients, opt: &mut OptimizerState) -> Result<()> {
    opt.update(params.trainable_mut(), &grads.tensors)
}
