//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::tensor::{ConvParams, Scalar};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

/// First and second moment estimates for every parameter, plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed moments shaped like `params`.
    pub fn new(params: &[ConvParams<T>]) -> Self {
        Self::with_hyperparameters(
            params,
            T::from_f64(DEFAULT_BETA1),
            T::from_f64(DEFAULT_BETA2),
            T::from_f64(DEFAULT_EPS),
        )
    }

    pub fn with_hyperparameters(params: &[ConvParams<T>], beta1: T, beta2: T, eps: T) -> Self {
        let zeros: Vec<Vec<T>> = params.iter().map(|p| vec![T::ZERO; p.param_count()]).collect();
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update in place and advances `t`.
    pub fn step(&mut self, params: &mut [ConvParams<T>], grads: &[ConvParams<T>], lr: T) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                &[params.len(), grads.len()],
                &[self.m.len(), self.m.len()],
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.param_count() != m.len() || g.weight.shape() != p.weight.shape() || g.bias.len() != p.bias.len() {
                return Err(Error::shape("adam_step", &p.weight.shape(), &g.weight.shape()));
            }
        }

        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = T::ONE - b1.powi(t);
        let c2 = T::ONE - b2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, &gw), mw), vw) in p.values_mut().zip(g.values()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mw = b1 * *mw + (T::ONE - b1) * gw;
                *vw = b2 * *vw + (T::ONE - b2) * gw * gw;
                let m_hat = *mw / c1;
                let v_hat = *vw / c2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
