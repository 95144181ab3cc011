use super::{bce_loss, NnError, ParamSet, TextCnn};
use crate::embed::EmbeddingTensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Loss of one example under `params`.
pub fn loss_at(
    net: &TextCnn,
    params: &ParamSet,
    emb: &EmbeddingTensor,
    aux: &[f64],
    labels: &[bool],
) -> Result<f64, NnError> {
    bce_loss(net.forward(params, emb, aux)?.probs(), labels)
}

/// Largest relative disagreement between analytic gradients and central
/// differences `(loss(θ+h) - loss(θ-h)) / 2h` over every scalar parameter.
pub fn grad_check(
    net: &TextCnn,
    params: &ParamSet,
    emb: &EmbeddingTensor,
    aux: &[f64],
    labels: &[bool],
    h: f64,
) -> Result<f64, NnError> {
    if !(h > 0.0) {
        return Err(NnError::Usage("finite-difference step must be > 0".into()));
    }
    let analytic = {
        let cache = net.forward(params, emb, aux)?;
        net.backward(params, &cache, labels)?
    };
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for ti in 0..params.tensors().len() {
        for k in 0..params.tensors()[ti].len() {
            let theta = params.tensors()[ti].data[k];
            probe.tensors_mut()[ti].data[k] = theta + h;
            let up = loss_at(net, &probe, emb, aux, labels)?;
            probe.tensors_mut()[ti].data[k] = theta - h;
            let down = loss_at(net, &probe, emb, aux, labels)?;
            probe.tensors_mut()[ti].data[k] = theta;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.tensors[ti].data[k];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
