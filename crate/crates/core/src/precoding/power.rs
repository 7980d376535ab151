use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerRule {
    #[default]
    Equal,
    Waterfill,
}

pub fn equal_powers(k: usize, total_power: f64) -> Vec<f64> {
    vec![total_power / k as f64; k]
}

/// Water-filling over parallel channels with power gains `gains`:
/// `p_k = max(0, μ - σ²/g_k)` with the water level `μ` found by bisection so
/// that the powers sum to `total_power`.
///
/// Non-positive gains never receive power.
pub fn waterfill(gains: &[f64], total_power: f64, noise_var: f64) -> Result<Vec<f64>> {
    if gains.iter().any(|g| g.is_nan()) {
        return Err(Error::InvalidConfig("gains must not be NaN".into()));
    }
    if !gains.iter().any(|&g| g > 0.0) {
        return Err(Error::InvalidConfig("water-filling needs at least one positive gain".into()));
    }
    let floors: Vec<f64> = gains
        .iter()
        .map(|&g| if g > 0.0 { noise_var / g } else { f64::INFINITY })
        .collect();
    let fill = |mu: f64| -> f64 { floors.iter().map(|&f| (mu - f).max(0.0)).sum() };

    let min_floor = floors.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (min_floor, min_floor + total_power);
    while hi - lo > 1e-10 * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if fill(mid) > total_power {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut p: Vec<f64> = floors.iter().map(|&f| (hi - f).max(0.0)).collect();
    // remove the bisection residual so the budget is met exactly
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter_mut().for_each(|x| *x *= total_power / s);
    }
    Ok(p)
}
