use nalgebra::DMatrix;

use super::{PreElimination, SlackForm};

/// `δk + ρ_T·k·sqrt(log(9kdm²/δ′)/h)`, or `δk + ρ_T·k` in constant form.
#[allow(clippy::too_many_arguments)]
pub fn pre_elimination_slack(
    params: &PreElimination,
    k: usize,
    delta: f64,
    delta_prime: f64,
    dim: usize,
    horizon: usize,
    h: usize,
) -> f64 {
    let kf = k as f64;
    let conf = match params.slack {
        SlackForm::Theorem => {
            let m = horizon as f64;
            ((9.0 * kf * dim as f64 * m * m / delta_prime).ln() / h.max(1) as f64).sqrt()
        }
        SlackForm::Constant => 1.0,
    };
    delta * kf + params.rho_t * kf * conf
}

/// Models kept for the next task: those whose predicted probability
/// `Σ_{θ'∈survived} T̂(θ,θ')` plus `slack` exceeds `eta`, together with
/// the `keep_top` most probable ones. Never empty; sorted.
pub fn pre_eliminate(t_hat: &DMatrix<f64>, survived: &[usize], slack: f64, eta: f64, keep_top: usize) -> Vec<usize> {
    let k = t_hat.nrows();
    if eta <= 0.0 {
        return (0..k).collect();
    }
    let predicted: Vec<f64> = (0..k).map(|i| survived.iter().map(|&j| t_hat[(i, j)]).sum()).collect();
    let mut keep: Vec<bool> = predicted.iter().map(|&p| p + slack > eta).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| predicted[b].total_cmp(&predicted[a]).then(a.cmp(&b)));
    for &i in order.iter().take(keep_top.max(1)) {
        keep[i] = true;
    }
    (0..k).filter(|&i| keep[i]).collect()
}
