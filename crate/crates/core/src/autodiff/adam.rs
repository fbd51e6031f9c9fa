use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam with one pair of moment buffers per parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    names: Vec<String>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        let zeros = |t: &Tensor| Tensor::zeros(t.channels(), t.height(), t.width());
        AdamState {
            config,
            step: 0,
            first: params.iter().map(zeros).collect(),
            second: params.iter().map(zeros).collect(),
            names: (0..params.len()).map(|i| format!("parameter #{i}")).collect(),
        }
    }

    /// Names used in error messages.
    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.first.len());
        self.names = names;
        self
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.first[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor {
        &self.second[i]
    }

    /// Applies one update in place. Nothing is modified when any gradient
    /// is non-finite.
    pub fn update(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::InvalidShape(format!(
                "{} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if !p.same_shape(g) || !p.same_shape(&self.first[i]) {
                return Err(Error::InvalidShape(format!(
                    "{}: parameter {:?}, gradient {:?}",
                    self.names[i],
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NumericFailure(format!(
                    "non-finite gradient for {}",
                    self.names[i]
                )));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Tensor::vector(vec![1.0, -2.0])];
        let mut st = AdamState::new(AdamConfig::default(), &p);
        st.update(&mut p, &[Tensor::vector(vec![0.0, 0.0])]).unwrap();
        assert_eq!(p[0].data(), &[1.0, -2.0]);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![Tensor::scalar(0.0)];
        let mut st = AdamState::new(AdamConfig::default(), &p);
        st.update(&mut p, &[Tensor::scalar(1.0)]).unwrap();
        let expected = -0.01 / (1.0 + 1e-8);
        assert!((p[0].data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn converges_on_quadratic() {
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut p = vec![Tensor::scalar(0.0)];
        let mut st = AdamState::new(cfg, &p);
        for _ in 0..2000 {
            let w = p[0].data()[0];
            st.update(&mut p, &[Tensor::scalar(2.0 * (w - 3.0))]).unwrap();
        }
        assert!((p[0].data()[0] - 3.0).abs() < 1e-3);
        assert_eq!(st.step(), 2000);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut p = vec![Tensor::scalar(0.0), Tensor::scalar(1.0)];
        let mut st = AdamState::new(AdamConfig::default(), &p).with_names(vec!["head".into(), "gamma".into()]);
        let err = st
            .update(&mut p, &[Tensor::scalar(0.0), Tensor::scalar(f64::NAN)])
            .unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        assert_eq!(st.step(), 0);
        assert_eq!(p[1].data()[0], 1.0);
    }

    #[test]
    fn moments_match_parameter_shapes() {
        let p = vec![Tensor::zeros(3, 1, 4), Tensor::vector(vec![0.0; 5])];
        let st = AdamState::new(AdamConfig::default(), &p);
        assert!(st.first_moment(0).same_shape(&p[0]));
        assert!(st.second_moment(1).same_shape(&p[1]));
    }
}
