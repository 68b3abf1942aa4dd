use crate::autodiff::{AdamState, BnMode, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::network::{param_vars, update_running_stats, NetGraph, NetParams};

/// Owns the parameters being optimized and their Adam state.
pub(crate) struct Trainer {
    pub params: NetParams,
    adam: AdamState<f32>,
    bn_mode: BnMode,
}

impl Trainer {
    pub fn new(params: NetParams, learning_rate: f64, bn_mode: BnMode) -> Self {
        Self {
            params,
            adam: AdamState::new(learning_rate),
            bn_mode,
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.adam.learning_rate = lr;
    }

    /// Builds a loss with `build`, backpropagates and takes one Adam step.
    /// Returns the loss value before the update.
    pub fn step<F>(&mut self, build: F) -> Result<f64>
    where
        F: FnOnce(&mut Graph<f32>, &[Var], &NetParams, BnMode) -> Result<(Var, NetGraph)>,
    {
        let mut g = Graph::new();
        let vars = param_vars(&mut g, &self.params);
        let (loss, net) = build(&mut g, &vars, &self.params, self.bn_mode)?;
        let value = g.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("loss became {value}")));
        }
        let mut grads = g.backward(loss)?;
        let grads: Vec<Tensor<f32>> = vars
            .iter()
            .map(|&v| grads.take(v).unwrap_or_else(|| Tensor::zeros(g.shape(v))))
            .collect();
        let grad_refs: Vec<&Tensor<f32>> = grads.iter().collect();
        let mut params: Vec<&mut Tensor<f32>> = self.params.tensors_mut().iter_mut().collect();
        self.adam.step(&mut params, &grad_refs)?;
        if self.bn_mode == BnMode::Train {
            update_running_stats(&mut self.params, &g, &net);
        }
        Ok(value)
    }
}
