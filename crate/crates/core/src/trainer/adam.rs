//! Adam ascent steps with bias correction.

pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, epsilon: f64, dim: usize) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// One ascent step over `params[range]` using `grad[range]`.
    pub fn step_block(
        &mut self,
        params: &mut [f64],
        grad: &[f64],
        range: std::ops::Range<usize>,
    ) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in range {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] += self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step_block(params, grad, 0..params.len());
    }
}
