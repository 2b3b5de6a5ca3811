use super::ApproxModelSet;

/// `min{(gap/σ)², cap}` with the conventions for zero spread.
fn component(gap: f64, sigma: f64, cap: f64) -> f64 {
    if gap <= 0.0 {
        return 0.0;
    }
    let ratio = if sigma > 0.0 { (gap / sigma).powi(2) } else { f64::INFINITY };
    ratio.min(cap)
}

/// How informative samples at pair `sa` are for telling model `i` from `j`.
/// Model `i` supplies the spreads and the reference value.
pub fn info_index(i: usize, j: usize, sa: usize, approx: &ApproxModelSet) -> f64 {
    let d8 = 8.0 * approx.delta().max();
    let gr = (approx.reward_gap(i, j, sa) - d8).max(0.0);
    let gp = (approx.transition_gap(i, j, sa) - d8).max(0.0);
    let psi_r = component(gr, approx.reward_std(i, sa), gr);
    let psi_p = component(gp, approx.next_std(i, i, sa), (1.0 - approx.gamma()) * gp);
    psi_r.max(psi_p)
}

/// Pair maximizing the largest index over ordered pairs of `active`;
/// ties go to the lowest `s·A + a`. Returns `(s, a, index)`.
pub fn select_query(active: &[usize], approx: &ApproxModelSet) -> (usize, usize, f64) {
    let mut best = (0, 0.0);
    for sa in 0..approx.num_pairs() {
        let mut top = 0.0f64;
        for &i in active {
            for &j in active {
                if i != j {
                    top = top.max(info_index(i, j, sa, approx));
                }
            }
        }
        if top > best.1 {
            best = (sa, top);
        }
    }
    let a_n = approx.num_actions();
    (best.0 / a_n, best.0 % a_n, best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TabularMdp;
    use crate::ptum::DeltaBounds;

    fn reward_models(r: &[[usize; 2]], delta: f64) -> ApproxModelSet {
        // Two states, one action each way, point-mass rewards from the support.
        let support = vec![0.0, 0.05, 0.5, 1.0];
        let models = r
            .iter()
            .map(|idx| {
                let mut q = vec![0.0; 8];
                q[idx[0]] = 1.0;
                q[4 + idx[1]] = 1.0;
                TabularMdp::new(2, 1, 0.9, support.clone(), vec![1.0, 0.0, 0.0, 1.0], q).unwrap()
            })
            .collect();
        ApproxModelSet::new(models, DeltaBounds::uniform(delta)).unwrap()
    }

    #[test]
    fn identical_models_carry_no_information() {
        let set = reward_models(&[[1, 2], [1, 2]], 0.0);
        for sa in 0..2 {
            assert_eq!(info_index(0, 1, sa, &set), 0.0);
            assert_eq!(info_index(0, 0, sa, &set), 0.0);
        }
        assert_eq!(select_query(&[0], &set), (0, 0, 0.0));
    }

    #[test]
    fn unit_gap_with_unit_spread() {
        // Reward 1 w.p. 1/2 versus reward 0: gap 0.5, spread 0.5.
        let support = vec![0.0, 1.0];
        let a = TabularMdp::new(1, 1, 0.9, support.clone(), vec![1.0], vec![0.5, 0.5]).unwrap();
        let b = TabularMdp::new(1, 1, 0.9, support, vec![1.0], vec![1.0, 0.0]).unwrap();
        let set = ApproxModelSet::new(vec![a, b], DeltaBounds::default()).unwrap();
        // min{(0.5/0.5)², 0.5} = 0.5.
        assert!((info_index(0, 1, 0, &set) - 0.5).abs() < 1e-15);
        // Zero spread on the second model: min{∞, 0.5}.
        assert!((info_index(1, 0, 0, &set) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clipped_gap_is_uninformative() {
        let set = reward_models(&[[0, 0], [1, 0]], 0.01);
        assert_eq!(info_index(0, 1, 0, &set), 0.0);
    }

    #[test]
    fn single_differing_pair_is_chosen() {
        let set = reward_models(&[[1, 2], [1, 3]], 0.0);
        let (s, a, psi) = select_query(&[0, 1], &set);
        assert_eq!((s, a), (1, 0));
        assert!(psi > 0.0);
    }

    #[test]
    fn index_shrinks_with_uncertainty() {
        let base = reward_models(&[[0, 1], [3, 2]], 0.0);
        let mut last = f64::INFINITY;
        for d in [0.0, 0.001, 0.01, 0.05, 0.2] {
            let set = base.clone().with_delta(DeltaBounds::uniform(d)).unwrap();
            let psi = info_index(0, 1, 0, &set);
            assert!(psi <= last);
            last = psi;
        }
    }
}
