use super::{info_index, ApproxModelSet, ConfidenceParams};
use crate::error::{invalid, Result};

/// Models that must be ruled out before identification of `target` can
/// stop, and the resulting worst-case query count. Norms are sup-norms over
/// state-action pairs.
pub fn theta_eps_and_bound(
    approx: &ApproxModelSet,
    target: usize,
    epsilon: f64,
    delta: f64,
    budget: u64,
) -> Result<(Vec<usize>, f64)> {
    if target >= approx.len() {
        return invalid("target index out of range");
    }
    let g = approx.gamma();
    let kappa = (1.0 - g) * epsilon / 4.0 - approx.delta().max() * (1.0 + g) / 2.0;
    if kappa <= 0.0 && epsilon > 0.0 {
        return invalid("transfer gate fails for these inputs");
    }
    let sa = approx.num_pairs();
    let hard: Vec<usize> = (0..approx.len())
        .filter(|&j| {
            (0..sa).any(|x| approx.reward_gap(target, j, x) > kappa || approx.transition_gap(target, j, x) > kappa / g)
        })
        .collect();
    if hard.is_empty() {
        return Ok((hard, 0.0));
    }
    let best = (0..sa)
        .map(|x| hard.iter().map(|&j| info_index(target, j, x, approx)).fold(f64::INFINITY, f64::min))
        .fold(0.0f64, f64::max);
    let log = ConfidenceParams::for_set(approx, budget, delta).log_term();
    let bound = 128.0 * sa.min(approx.len()) as f64 * log / best;
    Ok((hard, bound))
}
