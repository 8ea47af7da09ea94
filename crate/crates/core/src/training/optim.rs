use super::TrainError;
use crate::autodiff::{ParamStore, Tensor};

/// Classical momentum: `v ← μ·v + g`, `w ← w − lr·v`. Nothing is updated
/// if any gradient is non-finite.
pub fn sgd_momentum_step(
    params: &mut ParamStore,
    grads: &[Tensor],
    velocity: &mut [Tensor],
    lr: f64,
    momentum: f64,
) -> Result<(), TrainError> {
    assert_eq!(grads.len(), params.len(), "one gradient per parameter");
    assert_eq!(velocity.len(), params.len(), "one velocity per parameter");
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        let id = params.ids().nth(i).expect("index in range");
        return Err(TrainError::NonFinite(params.name(id).to_string()));
    }
    for ((w, g), v) in params.tensors_mut().iter_mut().zip(grads).zip(velocity.iter_mut()) {
        for ((w, &g), v) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *v = momentum * *v + g;
            *w -= lr * *v;
        }
    }
    Ok(())
}

/// `shadow ← decay·shadow + (1 − decay)·params`.
pub fn ema_update(shadow: &mut ParamStore, params: &ParamStore, decay: f64) {
    for (s, p) in shadow.tensors_mut().iter_mut().zip(params.tensors()) {
        for (s, &p) in s.data_mut().iter_mut().zip(p.data()) {
            *s = decay * *s + (1.0 - decay) * p;
        }
    }
}
