//! WGAN objectives and entropy terms with their gradients.

use ndarray::{Array2, ArrayView2};

use crate::nn::{sigmoid, softplus, Gradients, MlpNetwork};
use crate::{Error, Result};

/// A scalar objective together with its gradient w.r.t. one network's parameters.
#[derive(Debug, Clone)]
pub struct ObjectiveGrad {
    pub value: f64,
    pub grads: Gradients,
}

/// Binary entropy (nats) of `sigmoid(s)` and its derivative `dH/ds = −s·p(1−p)`.
pub fn binary_entropy_logit(s: f64) -> (f64, f64) {
    let p = sigmoid(s);
    let h = p * softplus(-s) + (1.0 - p) * softplus(s);
    (h, -s * p * (1.0 - p))
}

fn check_width(net: &MlpNetwork, batch: &ArrayView2<'_, f64>, what: &str) -> Result<()> {
    if batch.ncols() != net.input_width() {
        return Err(Error::Contract(format!(
            "{what} batch has width {}, network expects {}",
            batch.ncols(),
            net.input_width()
        )));
    }
    if batch.nrows() == 0 {
        return Err(Error::Contract(format!("{what} batch is empty")));
    }
    Ok(())
}

fn check_critic(critic: &MlpNetwork) -> Result<()> {
    if critic.output_width() != 1 {
        return Err(Error::Contract(format!(
            "critic must have one output, has {}",
            critic.output_width()
        )));
    }
    Ok(())
}

/// `mean D(clean) − mean D(fake)` and its gradient w.r.t. the critic parameters.
pub fn critic_objective(
    critic: &MlpNetwork,
    clean: ArrayView2<'_, f64>,
    fake: ArrayView2<'_, f64>,
) -> Result<ObjectiveGrad> {
    critic_gradients(critic, clean, fake, None).map(|(obj, _)| obj)
}

/// `mean_clean H(σ(D)) − mean_fake H(σ(D))` and its gradient w.r.t. the critic.
pub fn critic_entropy_term(
    critic: &MlpNetwork,
    clean: ArrayView2<'_, f64>,
    generated: ArrayView2<'_, f64>,
) -> Result<ObjectiveGrad> {
    check_critic(critic)?;
    check_width(critic, &clean, "clean")?;
    check_width(critic, &generated, "generated")?;
    let mut value = 0.0;
    let mut grads = Gradients::zeros_like(critic);
    for (batch, sign) in [(clean, 1.0), (generated, -1.0)] {
        let m = batch.nrows() as f64;
        let acts = critic.forward(batch)?;
        let s = acts.output();
        value += sign * s.iter().map(|&v| binary_entropy_logit(v).0).sum::<f64>() / m;
        let d = s.mapv(|v| sign * binary_entropy_logit(v).1 / m);
        grads.add_scaled(&critic.backward(&acts, &d)?, 1.0)?;
    }
    Ok(ObjectiveGrad { value, grads })
}

/// Gradient used for one critic step.
///
/// Returns the WGAN objective with the gradient of
/// `objective − entropy_weight·L_D` when `entropy_weight` is given, plus the
/// entropy term value. Each batch is forwarded once and the two output seeds
/// are summed before a single backward pass.
pub(crate) fn critic_gradients(
    critic: &MlpNetwork,
    clean: ArrayView2<'_, f64>,
    fake: ArrayView2<'_, f64>,
    entropy_weight: Option<f64>,
) -> Result<(ObjectiveGrad, f64)> {
    check_critic(critic)?;
    check_width(critic, &clean, "clean")?;
    check_width(critic, &fake, "fake")?;
    let mut value = 0.0;
    let mut entropy = 0.0;
    let mut grads = Gradients::zeros_like(critic);
    for (batch, sign) in [(clean, 1.0), (fake, -1.0)] {
        let m = batch.nrows() as f64;
        let acts = critic.forward(batch)?;
        let s = acts.output();
        value += sign * s.sum() / m;
        entropy += sign * s.iter().map(|&v| binary_entropy_logit(v).0).sum::<f64>() / m;
        let d = match entropy_weight {
            None => Array2::from_elem(s.raw_dim(), sign / m),
            Some(w) => s.mapv(|v| sign / m - w * sign * binary_entropy_logit(v).1 / m),
        };
        grads.add_scaled(&critic.backward(&acts, &d)?, 1.0)?;
    }
    Ok((ObjectiveGrad { value, grads }, entropy))
}

/// `−mean D(G(noisy))` and its gradient w.r.t. the generator parameters.
///
/// The critic is only read; its gradient is discarded.
pub fn generator_objective(
    critic: &MlpNetwork,
    generator: &MlpNetwork,
    noisy: ArrayView2<'_, f64>,
) -> Result<ObjectiveGrad> {
    generator_gradients(critic, generator, noisy, None).map(|(obj, _)| obj)
}

/// `mean H(σ(last column))` over a generated batch, with the gradient
/// w.r.t. the batch itself (nonzero only in the last column).
pub fn generator_entropy_term(generated: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
    if generated.nrows() == 0 || generated.ncols() == 0 {
        return Err(Error::Contract("generated batch is empty".into()));
    }
    let m = generated.nrows() as f64;
    let last = generated.ncols() - 1;
    let mut grad = Array2::zeros(generated.raw_dim());
    let mut value = 0.0;
    for (i, &s) in generated.column(last).iter().enumerate() {
        let (h, dh) = binary_entropy_logit(s);
        value += h;
        grad[[i, last]] = dh / m;
    }
    Ok((value / m, grad))
}

/// Gradient used for one generator step: `−mean D(G(d̃))` plus, when
/// `entropy_weight` is given, `entropy_weight·L_G`. Returns the WGAN part as
/// the objective value and the entropy term value.
pub(crate) fn generator_gradients(
    critic: &MlpNetwork,
    generator: &MlpNetwork,
    noisy: ArrayView2<'_, f64>,
    entropy_weight: Option<f64>,
) -> Result<(ObjectiveGrad, f64)> {
    check_critic(critic)?;
    check_width(generator, &noisy, "noisy")?;
    if generator.output_width() != critic.input_width() {
        return Err(Error::Contract(format!(
            "generator output width {} does not match critic input width {}",
            generator.output_width(),
            critic.input_width()
        )));
    }
    let m = noisy.nrows() as f64;
    let g_acts = generator.forward(noisy)?;
    let fake = g_acts.output();
    let d_acts = critic.forward(fake.view())?;
    let value = -d_acts.output().sum() / m;
    let seed = Array2::from_elem((noisy.nrows(), 1), -1.0 / m);
    let (_, mut d_fake) = critic.backward_with_input_grad(&d_acts, &seed)?;
    let (entropy, d_entr) = generator_entropy_term(fake.view())?;
    if let Some(w) = entropy_weight {
        d_fake.scaled_add(w, &d_entr);
    }
    let grads = generator.backward(&g_acts, &d_fake)?;
    Ok((ObjectiveGrad { value, grads }, entropy))
}
