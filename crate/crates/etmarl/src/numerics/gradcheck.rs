//! Central-difference verification of taped gradients.

use super::params::ParamStore;
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Compare backprop gradients of `build` against central finite differences.
///
/// `build` constructs the scalar loss on a fresh tape from the current
/// parameter values. Returns the max over all parameter entries of
/// |analytic − central| / max(1, |central|).
pub fn finite_diff_check<F>(build: F, params: &mut ParamStore, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> NodeId,
{
    assert!(step > 0.0, "finite difference step must be positive");

    let eval = |params: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = build(&mut tape, params);
        let v = tape.value(loss).item();
        if !v.is_finite() {
            return Err(Error::Numeric("loss evaluated non-finite during finite-diff check".into()));
        }
        Ok(v)
    };

    params.zero_grads();
    {
        let mut tape = Tape::new();
        let loss = build(&mut tape, params);
        tape.backward(loss, params)?;
    }
    let analytic: Vec<Vec<f64>> =
        params.ids().map(|id| params.grad(id).data().to_vec()).collect();

    let mut max_rel = 0.0f64;
    for id in params.ids().collect::<Vec<_>>() {
        for k in 0..params.value(id).numel() {
            let orig = params.value(id).data()[k];
            params.value_mut(id).data_mut()[k] = orig + step;
            let plus = eval(params)?;
            params.value_mut(id).data_mut()[k] = orig - step;
            let minus = eval(params)?;
            params.value_mut(id).data_mut()[k] = orig;

            let central = (plus - minus) / (2.0 * step);
            let rel = (analytic[id.0][k] - central).abs() / central.abs().max(1.0);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
