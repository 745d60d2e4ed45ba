use ndarray::{Array1, Array2, Zip};

use super::{Gradients, MlpNetwork};
use crate::{Error, Result};

/// Whether a step climbs or descends the objective whose gradient is supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `w ← w + α·g/√(v+ε)` (critic).
    Ascend,
    /// `w ← w − α·g/√(v+ε)` (generator, classifier).
    Descend,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Ascend => 1.0,
            Direction::Descend => -1.0,
        }
    }
}

/// RMSProp state: running mean of squared gradients per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    sq_weights: Vec<Array2<f64>>,
    sq_biases: Vec<Array1<f64>>,
}

impl OptimizerState {
    pub const DEFAULT_DECAY: f64 = 0.9;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    /// Fresh state with decay 0.9 and ε = 1e-8.
    pub fn new(net: &MlpNetwork, learning_rate: f64) -> Result<Self> {
        Self::with_params(net, learning_rate, Self::DEFAULT_DECAY, Self::DEFAULT_EPSILON)
    }

    pub fn with_params(
        net: &MlpNetwork,
        learning_rate: f64,
        decay: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::Config(format!("decay must lie in (0,1), got {decay}")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        let zeros = Gradients::zeros_like(net);
        Ok(Self {
            learning_rate,
            decay,
            epsilon,
            sq_weights: zeros.weights,
            sq_biases: zeros.biases,
        })
    }

    pub fn weight_accumulator(&self, layer: usize) -> &Array2<f64> {
        &self.sq_weights[layer]
    }

    pub fn bias_accumulator(&self, layer: usize) -> &Array1<f64> {
        &self.sq_biases[layer]
    }

    fn matches(&self, net: &MlpNetwork) -> bool {
        self.sq_weights.len() == net.num_layers()
            && self
                .sq_weights
                .iter()
                .enumerate()
                .all(|(i, a)| a.dim() == net.weights(i).dim())
            && self
                .sq_biases
                .iter()
                .enumerate()
                .all(|(i, a)| a.dim() == net.biases(i).dim())
    }
}

/// One RMSProp update.
///
/// `v ← decay·v + (1−decay)·g²`, then every parameter moves by `±α·g/√(v+ε)`.
/// A non-finite gradient aborts the step before anything is modified.
pub fn rmsprop_step(
    net: &mut MlpNetwork,
    grads: &Gradients,
    state: &mut OptimizerState,
    direction: Direction,
) -> Result<()> {
    if !state.matches(net) {
        return Err(Error::Contract(
            "optimizer state does not match network shape".into(),
        ));
    }
    let shapes_ok = grads.weights.len() == net.num_layers()
        && grads.biases.len() == net.num_layers()
        && (0..net.num_layers()).all(|i| {
            grads.weights[i].dim() == net.weights(i).dim()
                && grads.biases[i].dim() == net.biases(i).dim()
        });
    if !shapes_ok {
        return Err(Error::Contract("gradients do not match network shape".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient, step aborted".into()));
    }

    let step = direction.sign() * state.learning_rate;
    let decay = state.decay;
    let eps = state.epsilon;
    let (weights, biases) = net.params_mut();
    for ((w, g), v) in weights.iter_mut().zip(&grads.weights).zip(&mut state.sq_weights) {
        Zip::from(w).and(g).and(v).for_each(|w, &g, v| {
            *v = decay * *v + (1.0 - decay) * g * g;
            *w += step * g / (*v + eps).sqrt();
        });
    }
    for ((b, g), v) in biases.iter_mut().zip(&grads.biases).zip(&mut state.sq_biases) {
        Zip::from(b).and(g).and(v).for_each(|b, &g, v| {
            *v = decay * *v + (1.0 - decay) * g * g;
            *b += step * g / (*v + eps).sqrt();
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{chain_specs, init_network, Activation, LayerSpec};
    use ndarray::array;

    fn scalar_net(w: f64) -> MlpNetwork {
        MlpNetwork::from_parameters(
            vec![LayerSpec::new(1, 1, Activation::Linear)],
            vec![array![[w]]],
            vec![array![0.0]],
        )
        .unwrap()
    }

    fn scalar_grad(g: f64) -> Gradients {
        Gradients {
            weights: vec![array![[g]]],
            biases: vec![array![0.0]],
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_accumulator() {
        let mut net = scalar_net(0.3);
        let mut state = OptimizerState::new(&net, 1e-3).unwrap();
        rmsprop_step(&mut net, &scalar_grad(2.0), &mut state, Direction::Descend).unwrap();
        let after_first = state.weight_accumulator(0)[[0, 0]];
        let w = net.weights(0)[[0, 0]];
        rmsprop_step(&mut net, &scalar_grad(0.0), &mut state, Direction::Descend).unwrap();
        assert_eq!(net.weights(0)[[0, 0]], w);
        assert!((state.weight_accumulator(0)[[0, 0]] - 0.9 * after_first).abs() < 1e-15);
    }

    #[test]
    fn single_step_closed_form() {
        let alpha = 1e-3;
        for &g in &[1e-4, 0.37, -2.5, 40.0] {
            let mut net = scalar_net(0.0);
            let mut state = OptimizerState::new(&net, alpha).unwrap();
            rmsprop_step(&mut net, &scalar_grad(g), &mut state, Direction::Ascend).unwrap();
            let expected = alpha * g.abs() / ((1.0 - 0.9) * g * g + 1e-8).sqrt();
            let got = net.weights(0)[[0, 0]].abs();
            assert!((got - expected).abs() <= 1e-14 * expected.max(1.0), "{got} vs {expected}");
        }
    }

    #[test]
    fn ascend_and_descend_are_negations() {
        let specs = chain_specs(&[3, 4, 1], Activation::Relu, Activation::Linear);
        let net = init_network(&specs, 3).unwrap();
        let mut g = Gradients::zeros_like(&net);
        for (i, w) in g.weights.iter_mut().enumerate() {
            w.mapv_inplace(|_| 0.1 * (i as f64 + 1.0));
        }
        let mut up = net.clone();
        let mut down = net.clone();
        let mut s_up = OptimizerState::new(&net, 1e-2).unwrap();
        let mut s_down = s_up.clone();
        rmsprop_step(&mut up, &g, &mut s_up, Direction::Ascend).unwrap();
        rmsprop_step(&mut down, &g, &mut s_down, Direction::Descend).unwrap();
        for ((a, b), c) in up.params().zip(down.params()).zip(net.params()) {
            assert!(((a - c) + (b - c)).abs() < 1e-15, "{a} {b} {c}");
        }
        assert_eq!(s_up, s_down);
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let mut net = scalar_net(0.5);
        let mut state = OptimizerState::new(&net, 1e-3).unwrap();
        let before = (net.clone(), state.clone());
        let err = rmsprop_step(&mut net, &scalar_grad(f64::NAN), &mut state, Direction::Descend);
        assert!(matches!(err, Err(Error::Numeric(_))));
        assert_eq!((net, state), before);
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        let net = scalar_net(0.0);
        assert!(OptimizerState::new(&net, 0.0).is_err());
        assert!(OptimizerState::with_params(&net, 1e-3, 1.0, 1e-8).is_err());
        assert!(OptimizerState::with_params(&net, 1e-3, 0.9, 0.0).is_err());
    }

    #[test]
    fn accumulators_stay_nonnegative() {
        let mut net = scalar_net(0.0);
        let mut state = OptimizerState::new(&net, 1e-3).unwrap();
        for g in [-3.0, 2.0, -0.5, 0.0, 7.0] {
            rmsprop_step(&mut net, &scalar_grad(g), &mut state, Direction::Descend).unwrap();
            assert!(state.weight_accumulator(0)[[0, 0]] >= 0.0);
        }
    }
}
