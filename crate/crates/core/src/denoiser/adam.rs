use super::{Denoiser, DenoiserShape, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Denoiser<F>,
    pub v: Denoiser<F>,
    pub step: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(shape: DenoiserShape) -> Self {
        Self {
            m: Denoiser::zeros(shape),
            v: Denoiser::zeros(shape),
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update(&mut self, cfg: &AdamConfig, params: &mut Denoiser<F>, grads: &Denoiser<F>) -> Result<()> {
        if params.shape != grads.shape || params.shape != self.m.shape {
            return Err(Error::InvalidParameter("optimizer state does not match model shape".into()));
        }
        self.step += 1;
        let b1 = F::lit(cfg.beta1);
        let b2 = F::lit(cfg.beta2);
        let bc1 = F::lit(1.0 - cfg.beta1.powf(self.step as f64));
        let bc2 = F::lit(1.0 - cfg.beta2.powf(self.step as f64));
        let lr = F::lit(cfg.lr);
        let eps = F::lit(cfg.eps);
        let one = F::one();
        let gs = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        let ps = params.tensors_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::Activation;

    fn shape() -> DenoiserShape {
        DenoiserShape {
            rank: 4,
            hidden: 5,
            time_dim: 4,
            film_width: 3,
            activation: Activation::Tanh,
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Denoiser::<f64>::new(shape(), 1).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(shape());
        st.update(&AdamConfig::default(), &mut p, &Denoiser::zeros(shape())).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut p = Denoiser::<f64>::zeros(shape());
        let mut g = Denoiser::<f64>::zeros(shape());
        for t in g.tensors_mut() {
            for (i, x) in t.iter_mut().enumerate() {
                *x = if i % 2 == 0 { 3.0 } else { -0.01 };
            }
        }
        let mut st = AdamState::new(shape());
        st.update(&cfg, &mut p, &g).unwrap();
        for (pt, gt) in p.tensors().iter().zip(g.tensors()) {
            for (x, gx) in pt.iter().zip(gt) {
                let expected = -cfg.lr * gx.signum();
                assert!((x - expected).abs() < 1e-9 * cfg.lr.max(1.0) + 1e-6 * cfg.lr);
            }
        }
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut p = Denoiser::<f32>::new(shape(), 7).unwrap();
            let g = Denoiser::<f32>::new(shape(), 8).unwrap();
            let mut st = AdamState::new(shape());
            for _ in 0..5 {
                st.update(&AdamConfig::default(), &mut p, &g).unwrap();
            }
            (p, st)
        };
        assert_eq!(run(), run());
    }
}
