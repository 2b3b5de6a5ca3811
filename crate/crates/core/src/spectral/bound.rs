use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ptum::DeltaBounds;

/// Constants of the estimation error bound, one per uncertainty channel
/// plus the burn-in constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoConstants {
    pub burn_in: f64,
    pub reward: f64,
    pub transition: f64,
    pub sigma_reward: f64,
    pub sigma_transition: f64,
}

impl RhoConstants {
    pub fn uniform(rho: f64) -> Self {
        RhoConstants { burn_in: rho, reward: rho, transition: rho, sigma_reward: rho, sigma_transition: rho }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        RhoConstants {
            burn_in: self.burn_in * factor,
            reward: self.reward * factor,
            transition: self.transition * factor,
            sigma_reward: self.sigma_reward * factor,
            sigma_transition: self.sigma_transition * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBound {
    pub bounds: DeltaBounds,
    /// `h > ρ·log(2h²SA(S+U)/δ′)`.
    pub burn_in_ok: bool,
}

/// `ρₓ·sqrt(log(π²h²SA(S+U)/δ′)/h)` for each channel after `h` tasks.
pub fn model_error_bound(
    h: usize,
    rho: &RhoConstants,
    delta_prime: f64,
    num_states: usize,
    num_actions: usize,
    support: usize,
) -> Result<ErrorBound> {
    if h == 0 || !(delta_prime > 0.0 && delta_prime < 1.0) {
        return invalid("need h ≥ 1 and δ′ in (0,1)");
    }
    let rhos = [rho.burn_in, rho.reward, rho.transition, rho.sigma_reward, rho.sigma_transition];
    if rhos.iter().any(|x| !(*x >= 0.0)) {
        return invalid("constants must be non-negative");
    }
    let hf = h as f64;
    let d = (num_states * num_actions * (num_states + support)) as f64;
    let rate = ((std::f64::consts::PI.powi(2) * hf * hf * d / delta_prime).ln() / hf).sqrt();
    Ok(ErrorBound {
        bounds: DeltaBounds {
            reward: rho.reward * rate,
            transition: rho.transition * rate,
            sigma_reward: rho.sigma_reward * rate,
            sigma_transition: rho.sigma_transition * rate,
        },
        burn_in_ok: hf > rho.burn_in * (2.0 * hf * hf * d / delta_prime).ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_constants() {
        let b = model_error_bound(10, &RhoConstants::uniform(0.0), 0.1, 2, 2, 2).unwrap();
        assert_eq!(b.bounds, DeltaBounds::default());
        assert!(b.burn_in_ok);
    }

    #[test]
    fn by_hand() {
        let b = model_error_bound(100, &RhoConstants::uniform(0.135), 0.1, 25, 4, 12).unwrap();
        let d: f64 = 3700.0;
        let expected = 0.135 * ((std::f64::consts::PI.powi(2) * 1e4 * d / 0.1).ln() / 100.0).sqrt();
        assert!((b.bounds.reward - expected).abs() < 1e-12);
        assert!(b.burn_in_ok);
        assert!(!model_error_bound(1, &RhoConstants::uniform(1.0), 0.1, 25, 4, 12).unwrap().burn_in_ok);
        assert!(model_error_bound(0, &RhoConstants::uniform(1.0), 0.1, 1, 1, 1).is_err());
    }

    #[test]
    fn rate_in_h() {
        let rho = RhoConstants::uniform(1.0);
        for h in [100, 500, 5000] {
            let a = model_error_bound(h, &rho, 0.05, 5, 4, 3).unwrap().bounds.transition;
            let b = model_error_bound(4 * h, &rho, 0.05, 5, 4, 3).unwrap().bounds.transition;
            assert!(b / a < 0.6);
        }
        let mut prev = f64::INFINITY;
        for h in 3..300 {
            let x = model_error_bound(h, &rho, 0.05, 5, 4, 3).unwrap().bounds.reward;
            assert!(x <= prev);
            prev = x;
        }
    }
}
