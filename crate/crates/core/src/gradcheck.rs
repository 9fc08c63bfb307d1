//! Central finite-difference checks of `batch_objective` gradients.

use crate::bilingual::{batch_objective, BilingualModel, Instance, ObjectiveConfig};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// Group name and index of the worst entry.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares every analytic gradient entry against `(f(p+h) - f(p-h)) / 2h`.
pub fn check_gradients(
    model: &BilingualModel,
    instances: &[Instance],
    cfg: &ObjectiveConfig,
    step: f64,
    floor: f64,
) -> Result<GradCheck> {
    let mut grads = model.params.zeros_like();
    batch_objective(model, instances, cfg, Some(&mut grads), 1)?;
    let analytic: Vec<(String, Vec<f64>)> = grads.groups().into_iter().map(|(n, g)| (n, g.to_vec())).collect();

    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = model.clone();
    for (g, (name, values)) in analytic.iter().enumerate() {
        for (i, &a) in values.iter().enumerate() {
            let orig = probe.params.groups_mut()[g].1[i];
            probe.params.groups_mut()[g].1[i] = orig + step;
            let up = batch_objective(&probe, instances, cfg, None, 1)?.objective;
            probe.params.groups_mut()[g].1[i] = orig - step;
            let down = batch_objective(&probe, instances, cfg, None, 1)?.objective;
            probe.params.groups_mut()[g].1[i] = orig;

            let n = (up - down) / (2.0 * step);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            if rel > out.max_rel_error || out.checked == 0 {
                out.max_rel_error = rel;
                out.worst = (name.clone(), i);
                out.analytic = a;
                out.numeric = n;
            }
            out.checked += 1;
        }
    }
    Ok(out)
}
