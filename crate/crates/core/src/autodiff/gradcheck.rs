//! Central finite-difference gradient checking.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, GraphResult, NodeId};
use super::ParamStore;

/// Finite-difference step used by [`gradient_check`]. Smaller steps let
/// roundoff in the loss dominate the truncation error.
pub const FD_STEP: f64 = 1e-4;

/// Denominator floor for the relative error. Gradients far below it cannot
/// be resolved by central differences of an O(1) loss and are compared by
/// absolute error instead.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(REL_FLOOR, |analytic| + |numeric|)`.
    pub max_rel_error: f64,
    /// Parameter name and flat element index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    /// Number of scalar parameters compared.
    pub checked: usize,
}

fn evaluate<F>(store: &ParamStore, seed: u64, build: &F) -> GraphResult<f64>
where
    F: Fn(&mut Graph<'_>) -> GraphResult<NodeId>,
{
    let mut g = Graph::training(store, ChaCha8Rng::seed_from_u64(seed));
    let loss = build(&mut g)?;
    Ok(g.value(loss).item())
}

/// Compares reverse-mode gradients of the scalar built by `build` with
/// central differences over every parameter in `store`.
///
/// The graph runs in training mode with an RNG seeded from `seed` on every
/// evaluation, so dropout masks are identical between the analytic pass and
/// each perturbed pass. `store` is restored before returning.
pub fn gradient_check<F>(store: &mut ParamStore, seed: u64, build: F) -> GraphResult<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> GraphResult<NodeId>,
{
    let analytic = {
        let mut g = Graph::training(store, ChaCha8Rng::seed_from_u64(seed));
        let loss = build(&mut g)?;
        g.backward(loss)?.into_param_grads(store)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for i in 0..store.get(id).len() {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + FD_STEP;
            let plus = evaluate(store, seed, &build);
            store.get_mut(id).data_mut()[i] = orig - FD_STEP;
            let minus = evaluate(store, seed, &build);
            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * FD_STEP);
            let a = analytic[id.index()].data()[i];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.name(id).to_string(), i));
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
