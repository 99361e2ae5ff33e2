use serde::{Deserialize, Serialize};

use super::Parameter;

/// Worst element of one parameter in a gradient check.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub elements: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub stencil: Stencil,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.max_rel_error))
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < self.tolerance)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(|e| e.max_rel_error >= self.tolerance)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Finite-difference formula used by the checker.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    /// `(f(x + e) - f(x - e)) / 2e`, truncation error `O(e^2)`.
    #[default]
    Central2,
    /// `(-f(x + 2e) + 8 f(x + e) - 8 f(x - e) + f(x - 2e)) / 12e`,
    /// truncation error `O(e^4)`.
    Central4,
}

/// Compares the gradients stored in `params[..].grad` against central
/// differences `(f(x + eps) - f(x - eps)) / 2 eps` of `loss_fn`, element by
/// element. Parameter values are restored exactly afterwards.
pub fn finite_diff_gradcheck<F>(loss_fn: F, params: &mut [Parameter], epsilon: f64, tolerance: f64) -> GradCheckReport
where
    F: FnMut(&[Parameter]) -> f64,
{
    finite_diff_gradcheck_with(loss_fn, params, epsilon, tolerance, Stencil::Central2)
}

/// [`finite_diff_gradcheck`] with a selectable stencil.
pub fn finite_diff_gradcheck_with<F>(
    mut loss_fn: F,
    params: &mut [Parameter],
    epsilon: f64,
    tolerance: f64,
    stencil: Stencil,
) -> GradCheckReport
where
    F: FnMut(&[Parameter]) -> f64,
{
    assert!(epsilon > 0.0, "epsilon must be positive");
    let mut entries = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let n = params[pi].value.len();
        let mut entry = GradCheckEntry {
            name: params[pi].name.clone(),
            elements: n,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..n {
            let orig = params[pi].value.data()[k];
            let mut at = |offset: f64| {
                params[pi].value.data_mut()[k] = orig + offset;
                loss_fn(params)
            };
            let numeric = match stencil {
                Stencil::Central2 => (at(epsilon) - at(-epsilon)) / (2.0 * epsilon),
                Stencil::Central4 => {
                    let (p1, m1, p2, m2) = (at(epsilon), at(-epsilon), at(2.0 * epsilon), at(-2.0 * epsilon));
                    (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * epsilon)
                }
            };
            params[pi].value.data_mut()[k] = orig;
            let analytic = params[pi].grad.data()[k];
            let err = relative_error(analytic, numeric);
            if err > entry.max_rel_error || k == 0 {
                entry.max_rel_error = err;
                entry.worst_index = k;
                entry.analytic = analytic;
                entry.numeric = numeric;
            }
        }
        entries.push(entry);
    }
    GradCheckReport {
        epsilon,
        tolerance,
        stencil,
        entries,
    }
}
