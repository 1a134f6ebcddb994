//! Adam with bias correction over a list of parameter blocks.

use alloc::vec::Vec;

use crate::math::sqrt;
use crate::train::Gradients;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments for blocks of the given lengths.
    pub fn new(layout: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: layout.iter().map(|&n| alloc::vec![0.0; n]).collect(),
            v: layout.iter().map(|&n| alloc::vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// One update: `θ -= lr · m̂ / (sqrt(v̂) + ε)`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &Gradients, lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.num_blocks() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: alloc::format!("{} parameter blocks", self.m.len()),
                found: alloc::format!("{} params, {} grads", params.len(), grads.num_blocks()),
            });
        }
        for (b, p) in params.iter().enumerate() {
            let g = grads.block(b);
            if p.len() != self.m[b].len() || g.len() != self.m[b].len() {
                return Err(Error::ShapeMismatch {
                    expected: alloc::format!("block {b} of length {}", self.m[b].len()),
                    found: alloc::format!("params {}, grads {}", p.len(), g.len()),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, t as f64);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (b, p) in params.iter_mut().enumerate() {
            let g = grads.block(b);
            let m = &mut self.m[b];
            let v = &mut self.v[b];
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}
