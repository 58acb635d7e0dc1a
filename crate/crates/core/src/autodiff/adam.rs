use super::{AutodiffError, Gradients, ParamStore};

/// Bias-corrected Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    /// Applies one update to every parameter in `params`. Parameters without an
    /// entry in `grads` see a zero gradient (their moments still decay).
    pub fn step(&self, params: &mut ParamStore, grads: &Gradients) -> Result<(), AutodiffError> {
        for (name, g) in grads.iter() {
            let p = params
                .param(name)
                .ok_or_else(|| AutodiffError::MissingParam(name.to_string()))?;
            if p.value.shape() != g.shape() {
                return Err(AutodiffError::Dimension {
                    layer: name.to_string(),
                    expected: format!("{:?}", p.value.shape()),
                    actual: format!("{:?}", g.shape()),
                });
            }
            if !g.is_finite() {
                return Err(AutodiffError::NonFinite(name.to_string()));
            }
        }
        params.step += 1;
        let t = params.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, p) in params.params_mut() {
            let g = grads.get(name);
            let n = p.value.len();
            for i in 0..n {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                let m = &mut p.first_moment.data_mut()[i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                let m_hat = *m / bc1;
                let v = &mut p.second_moment.data_mut()[i];
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                let v_hat = *v / bc2;
                p.value.data_mut()[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
