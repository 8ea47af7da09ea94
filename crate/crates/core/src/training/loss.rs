//! The joint objective `L = L_RC + λ·L_IR`.
//!
//! `L_IR` is binary cross-entropy averaged over all `N` examples of a batch;
//! `L_RC` is the negative log-likelihood of the gold start and end averaged
//! over the `N_pos` positives. Negatives never enter `L_RC`.

use super::TrainError;
use crate::autodiff::{Graph, GraphResult, NodeId};
use crate::model::ForwardState;

/// Log arguments are clamped here so a saturated probability gives a large
/// finite loss instead of infinity.
pub const LOG_FLOOR: f64 = 1e-12;

fn safe_ln(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

/// Model outputs for one example of a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleOutput {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub pr: f64,
}

/// The labels of one example.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Target {
    pub relevant: bool,
    pub span: Option<(usize, usize)>,
}

/// Per-example loss coefficients derived from the batch composition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Multiplies each example's cross-entropy: `λ/N`.
    pub ir: f64,
    /// Multiplies each positive's span NLL: `1/N_pos`.
    pub rc: f64,
}

impl LossWeights {
    pub fn for_batch(n: usize, n_pos: usize, lambda: f64) -> Result<Self, TrainError> {
        if n_pos == 0 {
            return Err(TrainError::NoPositives);
        }
        Ok(LossWeights { ir: lambda / n as f64, rc: 1.0 / n_pos as f64 })
    }
}

/// Cross-entropy of a relevance prediction. Only the term for the true
/// label is evaluated so that `pʳ = r` gives exactly zero.
pub fn bce(pr: f64, relevant: bool) -> f64 {
    if relevant {
        -safe_ln(pr)
    } else {
        -safe_ln(1.0 - pr)
    }
}

/// `−(ln p1[y1] + ln p2[y2])`.
pub fn span_nll(p1: &[f64], p2: &[f64], span: (usize, usize)) -> f64 {
    -(safe_ln(p1[span.0]) + safe_ln(p2[span.1]))
}

/// The joint loss of a batch from its outputs.
pub fn joint_loss(outputs: &[ExampleOutput], targets: &[Target], lambda: f64) -> Result<f64, TrainError> {
    assert_eq!(outputs.len(), targets.len(), "one output per example");
    let n_pos = targets.iter().filter(|t| t.relevant).count();
    let w = LossWeights::for_batch(targets.len(), n_pos, lambda)?;
    let mut ir = 0.0;
    let mut rc = 0.0;
    for (o, t) in outputs.iter().zip(targets) {
        ir += bce(o.pr, t.relevant);
        if t.relevant {
            let span = t.span.ok_or(TrainError::MissingSpan)?;
            rc += span_nll(&o.p1, &o.p2, span);
        }
    }
    Ok(w.rc * rc + w.ir * ir)
}

/// The scalar graph node for one example's share of the batch loss. Heads
/// absent from `state` contribute nothing.
pub fn example_loss(
    g: &mut Graph<'_>,
    state: &ForwardState,
    target: &Target,
    weights: &LossWeights,
) -> GraphResult<Option<NodeId>> {
    let mut terms = Vec::new();
    if let Some(ir) = state.ir.filter(|_| weights.ir != 0.0) {
        let p = if target.relevant { ir.pr } else { g.one_minus(ir.pr) };
        let l = g.ln(p, LOG_FLOOR);
        terms.push(g.scale(l, -weights.ir));
    }
    if let (Some(rc), true, Some((y1, y2))) = (state.rc, weights.rc != 0.0, target.span) {
        if target.relevant {
            let a = g.column(rc.p1, y1)?;
            let b = g.column(rc.p2, y2)?;
            let la = g.ln(a, LOG_FLOOR);
            let lb = g.ln(b, LOG_FLOOR);
            let s = g.add(la, lb)?;
            terms.push(g.scale(s, -weights.rc));
        }
    }
    let mut total = match terms.first() {
        Some(&t) => t,
        None => return Ok(None),
    };
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    Ok(Some(total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out(p1: &[f64], p2: &[f64], pr: f64) -> ExampleOutput {
        ExampleOutput { p1: p1.to_vec(), p2: p2.to_vec(), pr }
    }

    const POS: Target = Target { relevant: true, span: Some((0, 1)) };
    const NEG: Target = Target { relevant: false, span: None };

    #[test]
    fn perfect_predictions_cost_nothing() {
        let l = joint_loss(&[out(&[1.0, 0.0], &[0.0, 1.0], 1.0), out(&[0.5, 0.5], &[0.5, 0.5], 0.0)], &[POS, NEG], 1.0);
        assert_eq!(l.unwrap(), 0.0);
    }

    #[test]
    fn coin_flip_relevance() {
        let l = joint_loss(&[out(&[1.0, 0.0], &[0.0, 1.0], 0.5), out(&[0.3, 0.7], &[0.9, 0.1], 0.5)], &[POS, NEG], 1.0);
        assert!((l.unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn single_positive_span_cost() {
        let l = joint_loss(&[out(&[0.5, 0.5], &[0.75, 0.25], 1.0)], &[POS], 1.0).unwrap();
        assert!((l - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn no_positives_is_an_error() {
        assert!(matches!(joint_loss(&[out(&[1.0], &[1.0], 0.2)], &[NEG], 1.0), Err(TrainError::NoPositives)));
    }
}
