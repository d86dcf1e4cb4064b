//! Scenario transforms: scale a baseline feeder to a target loading level
//! and line-length regime.
//!
//! Loading is expressed as a fraction of the transformer rating and is
//! distributed over the existing loads proportionally to their baseline
//! apparent powers, at a common lagging power factor. Length scaling
//! stretches every branch by the same factor, moving the feeder between
//! short urban and long rural layouts.

use super::grid::GridModel;
use super::ModelError;

/// Returns a copy of the grid with loads set to `loading_fraction` of the
/// transformer rating at `power_factor` lagging, and every branch length
/// multiplied by `length_scale`.
pub fn apply_scenario(
    grid: &GridModel,
    loading_fraction: f64,
    length_scale: f64,
    power_factor: f64,
) -> Result<GridModel, ModelError> {
    if !(loading_fraction > 0.0) || !loading_fraction.is_finite() {
        return Err(ModelError::Scenario(format!(
            "loading fraction must be positive, got {loading_fraction}"
        )));
    }
    if !(length_scale > 0.0) || !length_scale.is_finite() {
        return Err(ModelError::Scenario(format!(
            "length scale must be positive, got {length_scale}"
        )));
    }
    if !(power_factor > 0.0 && power_factor <= 1.0) {
        return Err(ModelError::Scenario(format!(
            "power factor must be in (0, 1], got {power_factor}"
        )));
    }
    let s_rated = grid
        .power_base_va()
        .ok_or_else(|| ModelError::Scenario("scenario scaling needs a transformer rating".into()))?;

    let baseline: Vec<f64> = grid
        .loads
        .iter()
        .map(|l| l.p_w.hypot(l.q_var))
        .collect();
    let total: f64 = baseline.iter().sum();
    if !(total > 0.0) {
        return Err(ModelError::Scenario(
            "feeder has no consumer load to scale".into(),
        ));
    }

    let s_target = loading_fraction * s_rated;
    let q_factor = (1.0 - power_factor * power_factor).sqrt();
    let mut out = grid.clone();
    for (load, s_base) in out.loads.iter_mut().zip(&baseline) {
        let s = s_target * s_base / total;
        load.p_w = s * power_factor;
        load.q_var = s * q_factor;
    }
    for branch in &mut out.branches {
        branch.length_km *= length_scale;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::load_feeder;
    use approx::assert_relative_eq;

    #[test]
    fn scales_loads_to_target_and_keeps_shares() {
        let g = load_feeder("builtin:suburban-lv").unwrap();
        let s = apply_scenario(&g, 0.75, 1.0, 0.95).unwrap();

        let rating = g.transformer.as_ref().unwrap().model.s_rated_va;
        let total: f64 = s.loads.iter().map(|l| l.p_w.hypot(l.q_var)).sum();
        assert_relative_eq!(total, 0.75 * rating, max_relative = 1e-12);

        let base_total: f64 = g.loads.iter().map(|l| l.p_w.hypot(l.q_var)).sum();
        for (a, b) in g.loads.iter().zip(&s.loads) {
            let share_before = a.p_w.hypot(a.q_var) / base_total;
            let share_after = b.p_w.hypot(b.q_var) / total;
            assert_relative_eq!(share_before, share_after, max_relative = 1e-12);
            // Lagging at the requested factor.
            assert_relative_eq!(b.p_w / b.p_w.hypot(b.q_var), 0.95, max_relative = 1e-12);
            assert!(b.q_var > 0.0);
        }
    }

    #[test]
    fn scales_every_branch_length() {
        let g = load_feeder("builtin:suburban-lv").unwrap();
        let s = apply_scenario(&g, 0.5, 2.5, 0.95).unwrap();
        for (a, b) in g.branches.iter().zip(&s.branches) {
            assert_relative_eq!(b.length_km, 2.5 * a.length_km, max_relative = 1e-12);
        }
        // Loads are untouched by pure length scaling only when the target
        // matches; here both changed, so just confirm validity.
        s.validate().unwrap();
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = load_feeder("builtin:suburban-lv").unwrap();
        assert!(apply_scenario(&g, 0.0, 1.0, 0.95).is_err());
        assert!(apply_scenario(&g, 0.5, -1.0, 0.95).is_err());
        assert!(apply_scenario(&g, 0.5, 1.0, 1.2).is_err());
        assert!(apply_scenario(&g, 0.5, 1.0, 0.0).is_err());

        let mut no_loads = g.clone();
        no_loads.loads.clear();
        assert!(apply_scenario(&no_loads, 0.5, 1.0, 0.95).is_err());

        let two_node = load_feeder("builtin:two-node").unwrap();
        // No transformer: no rating to scale against.
        assert!(apply_scenario(&two_node, 0.5, 1.0, 0.95).is_err());
    }
}
