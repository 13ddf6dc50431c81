//! Adam with bias correction; moments live in the parameter store.

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::ParamStore;

/// One update from the accumulated gradient buffers, which are then zeroed.
/// Nothing is modified if any gradient is non-finite.
pub fn adam_step(store: &mut ParamStore, cfg: &TrainConfig) -> Result<()> {
    if let Some((name, _)) = store.iter().find(|(_, p)| !p.grad.is_finite()) {
        return Err(Error::NonFiniteGradient(name.clone()));
    }
    store.step += 1;
    let t = store.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (_, p) in store.iter_mut() {
        for i in 0..p.value.data.len() {
            let g = p.grad.data[i];
            let m = cfg.beta1 * p.adam_m.data[i] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * p.adam_v.data[i] + (1.0 - cfg.beta2) * g * g;
            p.adam_m.data[i] = m;
            p.adam_v.data[i] = v;
            p.value.data[i] -= cfg.lr * (m / c1) / ((v / c2).sqrt() + cfg.adam_eps);
        }
    }
    store.zero_grad();
    Ok(())
}
