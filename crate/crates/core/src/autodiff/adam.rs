use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update of every parameter with its gradient, in order.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::Shape("parameter list changed between steps".into()));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient shape {:?} for parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one, lr) = (T::one(), self.learning_rate);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                if lr == 0.0 {
                    continue;
                }
                let mhat = mv.f64() / bc1;
                let vhat = vv.f64() / bc2;
                *pv -= T::of(lr * mhat / (vhat.sqrt() + self.eps));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = Tensor::<f64>::full([1, 1, 1, 3], 0.7);
        let g = Tensor::zeros([1, 1, 1, 3]);
        let mut adam = AdamState::new(1e-2);
        adam.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p.data(), &[0.7; 3]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        let mut p = Tensor::<f64>::scalar(0.0);
        let g = Tensor::scalar(3.5);
        let mut adam = AdamState::new(1e-3);
        for _ in 0..100 {
            let before = p.item();
            adam.step(&mut [&mut p], &[&g]).unwrap();
            let delta = p.item() - before;
            assert!(delta < 0.0);
            assert!((delta.abs() - 1e-3).abs() < 1e-6);
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut w = Tensor::<f64>::from_vec([1, 1, 1, 2], vec![0.6, 0.8]).unwrap();
        let mut adam = AdamState::new(1e-2);
        for _ in 0..500 {
            let g = Tensor::from_vec([1, 1, 1, 2], w.data().iter().map(|v| 2.0 * v).collect()).unwrap();
            adam.step(&mut [&mut w], &[&g]).unwrap();
        }
        let norm = w.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "norm {norm}");
    }
}
