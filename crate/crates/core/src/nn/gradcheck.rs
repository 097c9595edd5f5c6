//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::nn::params::{Gradients, ParamId, ParamSet};
use crate::rng::Rng;

pub const STEP: f64 = 1e-5;

/// Which scalar parameters to perturb.
#[derive(Clone, Copy, Debug)]
pub enum GradCheck {
    All,
    /// `count` entries drawn uniformly over all scalar parameters.
    Sample { count: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

/// Compares `loss_and_grad`'s analytic gradient with central differences.
///
/// Relative error per entry is `|a − n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(params: &ParamSet<f64>, which: GradCheck, loss_and_grad: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet<f64>) -> Result<(f64, Gradients<f64>)>,
{
    let (loss, analytic) = loss_and_grad(params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss at the unperturbed point".into()));
    }
    let entries = select(params, which);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for (id, k) in entries {
        let orig = probe.data(id)[k];
        probe.get_mut(id).data_mut()[k] = orig + STEP;
        let plus = loss_and_grad(&probe)?.0;
        probe.get_mut(id).data_mut()[k] = orig - STEP;
        let minus = loss_and_grad(&probe)?.0;
        probe.get_mut(id).data_mut()[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("perturbed loss at {}[{k}]", params.name(id))));
        }
        let numeric = (plus - minus) / (2.0 * STEP);
        let a = analytic.get(id)[k];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((params.name(id).to_string(), k));
        }
    }
    Ok(report)
}

fn select(params: &ParamSet<f64>, which: GradCheck) -> Vec<(ParamId, usize)> {
    let all = || {
        params
            .iter()
            .flat_map(|(id, _, t)| (0..t.len()).map(move |k| (id, k)))
    };
    match which {
        GradCheck::All => all().collect(),
        GradCheck::Sample { count, seed } => {
            let total = params.numel();
            let offsets: Vec<usize> = params.iter().map(|(_, _, t)| t.len()).collect();
            let mut rng = Rng::new(seed);
            (0..count.min(total))
                .map(|_| {
                    let mut flat = rng.below(total);
                    let mut id = 0;
                    while flat >= offsets[id] {
                        flat -= offsets[id];
                        id += 1;
                    }
                    (ParamId(id), flat)
                })
                .collect()
        }
    }
}
