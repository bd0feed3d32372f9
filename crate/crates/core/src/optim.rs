//! Adam with decoupled weight decay, shared by both training loops.

/// Keras-style AdamW: `θ ← θ − lr·wd·θ`, then the bias-corrected Adam step.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update over a fixed, ordered list of parameter tensors.
    pub fn update<'a, P, G>(&mut self, params: P, grads: G)
    where
        P: IntoIterator<Item = &'a mut [f64]>,
        G: IntoIterator<Item = &'a [f64]>,
    {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "parameter/gradient length mismatch");
            if self.moments.len() <= k {
                self.moments.push((vec![0.0; p.len()], vec![0.0; p.len()]));
            }
            let (m, v) = &mut self.moments[k];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                if self.weight_decay != 0.0 {
                    p[i] -= self.learning_rate * self.weight_decay * p[i];
                }
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}
