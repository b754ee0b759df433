//! Adam with inverse-time step-size decay.

/// Bias-corrected Adam (β1 = 0.9, β2 = 0.999, eps = 1e-8). The step
/// size shrinks as lr0 / (1 + decay·step_index).
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step_index: u64,
    lr0: f64,
    decay: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    pub fn new(param_count: usize, lr0: f64, decay: f64) -> Adam {
        Adam {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step_index: 0,
            lr0,
            decay,
        }
    }

    pub fn learning_rate(&self, step_index: u64) -> f64 {
        self.lr0 / (1.0 + self.decay * step_index as f64)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step_index
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer/parameter length mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient/parameter length mismatch");
        let lr = self.learning_rate(self.step_index);
        self.step_index += 1;
        let t = self.step_index as f64;
        let m_corr = 1.0 - BETA1.powf(t);
        let v_corr = 1.0 - BETA2.powf(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[i] / m_corr;
            let v_hat = self.v[i] / v_corr;
            params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_schedule_matches_the_stated_rates() {
        let opt = Adam::new(1, 1e-4, 0.001);
        assert_eq!(opt.learning_rate(0), 1e-4);
        assert!((opt.learning_rate(1000) - 5e-5).abs() < 1e-18);
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut opt = Adam::new(3, 1e-2, 0.0);
        let mut params = vec![1.0, -2.0, 0.5];
        opt.step(&mut params, &[0.0, 0.0, 0.0]);
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn first_step_moves_by_about_the_learning_rate() {
        // With bias correction, |Δ| ≈ lr for any nonzero gradient.
        let mut opt = Adam::new(1, 1e-2, 0.0);
        let mut params = vec![0.0];
        opt.step(&mut params, &[42.0]);
        assert!((params[0] + 1e-2).abs() < 1e-6);
    }

    #[test]
    fn descends_a_quadratic() {
        let mut opt = Adam::new(1, 0.1, 0.0);
        let mut params = vec![3.0];
        for _ in 0..500 {
            let g = 2.0 * params[0];
            opt.step(&mut params, &[g]);
        }
        assert!(params[0].abs() < 1e-2, "got {}", params[0]);
    }
}
