use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{cell_index, DOWN, LEFT, NUM_ACTIONS, RIGHT, UP};
use crate::error::{invalid, Result};
use crate::mdp::{policy_evaluation, value_iteration, TabularMdp};

/// A derived task built by perturbing the item values of `base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NearDuplicate {
    pub task: usize,
    pub base: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectworldSpec {
    pub side: usize,
    /// Sorted reward values of all items; doubles as the reward support.
    pub item_values: Vec<f64>,
    /// Values used when placing items in freshly generated tasks.
    pub base_values: Vec<f64>,
    pub empty_prob: f64,
    pub reward_failure_prob: f64,
    pub transition_failure_prob: f64,
    #[serde(default)]
    pub near_duplicates: Vec<NearDuplicate>,
    /// Probability that a derived item moves one value up rather than down.
    pub upgrade_prob: f64,
    /// Derived tasks are redrawn until the base's optimal policy and theirs
    /// are this close to optimal in each other's task.
    #[serde(default)]
    pub duplicate_epsilon: Option<f64>,
    pub gamma: f64,
}

impl Default for ObjectworldSpec {
    fn default() -> Self {
        ObjectworldSpec {
            side: 5,
            item_values: vec![0.0, 0.02, 0.04, 0.2, 0.22, 0.24, 0.5, 0.52, 0.54, 0.96, 0.98, 1.0],
            base_values: vec![0.0, 0.2, 0.5, 0.96],
            empty_prob: 0.5,
            reward_failure_prob: 0.012,
            transition_failure_prob: 0.1,
            near_duplicates: [(1, 0), (7, 0), (4, 5), (6, 5)]
                .iter()
                .map(|&(task, base)| NearDuplicate { task, base })
                .collect(),
            upgrade_prob: 0.9,
            duplicate_epsilon: Some(0.5),
            gamma: 0.9,
        }
    }
}

impl ObjectworldSpec {
    fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.side == 0 {
            return invalid("objectworld side must be positive");
        }
        if self.item_values.is_empty()
            || self.item_values.windows(2).any(|w| w[0] >= w[1])
            || self.item_values.iter().any(|v| !(0.0..=1.0).contains(v))
        {
            return invalid("item values must be strictly increasing within [0,1]");
        }
        if self.item_values[0] != 0.0 {
            return invalid("item values must include 0");
        }
        if self.base_values.is_empty() || self.base_values.iter().any(|v| !self.item_values.contains(v)) {
            return invalid("base values must be a non-empty subset of the item values");
        }
        if !prob(self.empty_prob) || !prob(self.reward_failure_prob) || !prob(self.upgrade_prob) {
            return invalid("objectworld probabilities must lie in [0,1]");
        }
        if !(0.0..1.0).contains(&self.transition_failure_prob) {
            return invalid("transition failure probability must lie in [0,1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    /// Index into `item_values`.
    pub value_index: usize,
    /// The action that picks the item up.
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectLayout {
    pub cells: Vec<Option<Item>>,
}

/// Items are picked by taking the cell's pick action, which also moves the
/// agent; the item respawns immediately.
pub fn build_objectworld(spec: &ObjectworldSpec, layout: &ObjectLayout) -> Result<TabularMdp> {
    spec.validate()?;
    let side = spec.side;
    let n = side * side;
    if layout.cells.len() != n {
        return invalid("layout size differs from the grid");
    }
    let u = spec.item_values.len();
    let f = spec.transition_failure_prob;
    let mut p = vec![0.0; n * NUM_ACTIONS * n];
    let mut q = vec![0.0; n * NUM_ACTIONS * u];
    let step = |x: usize, y: usize, a: usize| match a {
        UP if y > 0 => (x, y - 1),
        DOWN if y + 1 < side => (x, y + 1),
        RIGHT if x + 1 < side => (x + 1, y),
        LEFT if x > 0 => (x - 1, y),
        _ => (x, y),
    };
    for y in 0..side {
        for x in 0..side {
            let s = cell_index(side, x, y);
            for a in 0..NUM_ACTIONS {
                let i = s * NUM_ACTIONS + a;
                for b in 0..NUM_ACTIONS {
                    let w = if b == a { 1.0 - f + f / NUM_ACTIONS as f64 } else { f / NUM_ACTIONS as f64 };
                    let (nx, ny) = step(x, y, b);
                    p[i * n + cell_index(side, nx, ny)] += w;
                }
                match layout.cells[s] {
                    Some(item) if item.action == a && item.value_index > 0 => {
                        if item.value_index >= u {
                            return invalid("item value index out of range");
                        }
                        q[i * u + item.value_index] = 1.0 - spec.reward_failure_prob;
                        q[i * u] += spec.reward_failure_prob;
                    }
                    _ => q[i * u] = 1.0,
                }
            }
        }
    }
    TabularMdp::new(n, NUM_ACTIONS, spec.gamma, spec.item_values.clone(), p, q)
}

/// Each cell is empty with probability `empty_prob`, otherwise holds a base
/// item drawn with weight `1/(value + 0.05)`.
pub fn random_layout<R: Rng>(spec: &ObjectworldSpec, rng: &mut R) -> Result<ObjectLayout> {
    spec.validate()?;
    let weights: Vec<f64> = spec.base_values.iter().map(|v| 1.0 / (v + 0.05)).collect();
    let pick = WeightedIndex::new(&weights).expect("positive weights");
    let cells = (0..spec.side * spec.side)
        .map(|_| {
            if rng.random::<f64>() < spec.empty_prob {
                return None;
            }
            let value = spec.base_values[pick.sample(rng)];
            let value_index = spec.item_values.iter().position(|v| *v == value).unwrap();
            Some(Item { value_index, action: rng.random_range(0..NUM_ACTIONS) })
        })
        .collect();
    Ok(ObjectLayout { cells })
}

/// Copy of `base` with every item moved to the adjacent value: up with
/// probability `upgrade_prob`, down otherwise (clamped at the ends).
pub fn near_duplicate<R: Rng>(spec: &ObjectworldSpec, base: &ObjectLayout, rng: &mut R) -> ObjectLayout {
    let top = spec.item_values.len() - 1;
    let cells = base
        .cells
        .iter()
        .map(|c| {
            c.map(|item| {
                let value_index = if rng.random::<f64>() < spec.upgrade_prob {
                    (item.value_index + 1).min(top)
                } else {
                    item.value_index.saturating_sub(1)
                };
                Item { value_index, ..item }
            })
        })
        .collect();
    ObjectLayout { cells }
}

fn mutually_near_optimal(a: &TabularMdp, b: &TabularMdp, eps: f64) -> bool {
    let (va, pa) = value_iteration(a, 1e-8);
    let (vb, pb) = value_iteration(b, 1e-8);
    let ok = |m: &TabularMdp, v: &[f64], pi| policy_evaluation(m, pi, 1e-8).iter().zip(v).all(|(x, y)| *x >= y - eps);
    ok(b, &vb, &pa) && ok(a, &va, &pb)
}

const DUPLICATE_ATTEMPTS: usize = 200;

/// `k` objectworld tasks. Tasks listed in `near_duplicates` (with both
/// indices below `k`) are derived from their base; the rest are random.
pub fn build_objectworld_family<R: Rng>(
    spec: &ObjectworldSpec,
    k: usize,
    rng: &mut R,
) -> Result<(Vec<ObjectLayout>, Vec<TabularMdp>)> {
    spec.validate()?;
    if k < 2 {
        return invalid("objectworld family needs at least two tasks");
    }
    let derived: Vec<NearDuplicate> =
        spec.near_duplicates.iter().copied().filter(|d| d.task < k && d.base < k).collect();
    for d in &derived {
        if derived.iter().any(|e| e.task == d.base) || d.task == d.base {
            return invalid("a derived task cannot serve as a base");
        }
        if derived.iter().filter(|e| e.task == d.task).count() > 1 {
            return invalid("task derived twice");
        }
    }
    let mut layouts: Vec<Option<ObjectLayout>> = vec![None; k];
    for (i, slot) in layouts.iter_mut().enumerate() {
        if !derived.iter().any(|d| d.task == i) {
            *slot = Some(random_layout(spec, rng)?);
        }
    }
    let mut mdps: Vec<Option<TabularMdp>> = layouts.iter().map(|l| l.as_ref().map(|l| build_objectworld(spec, l)).transpose()).collect::<Result<_>>()?;
    for d in &derived {
        let base = layouts[d.base].clone().unwrap();
        let base_mdp = mdps[d.base].clone().unwrap();
        let mut accepted = None;
        for attempt in 0..DUPLICATE_ATTEMPTS {
            let layout = near_duplicate(spec, &base, rng);
            let mdp = build_objectworld(spec, &layout)?;
            let close = match spec.duplicate_epsilon {
                Some(eps) => mutually_near_optimal(&base_mdp, &mdp, eps),
                None => true,
            };
            if close || attempt + 1 == DUPLICATE_ATTEMPTS {
                if !close {
                    log::warn!("task {} is not near-optimal with task {}", d.task, d.base);
                }
                accepted = Some((layout, mdp));
                break;
            }
        }
        let (layout, mdp) = accepted.unwrap();
        layouts[d.task] = Some(layout);
        mdps[d.task] = Some(mdp);
    }
    Ok((layouts.into_iter().map(Option::unwrap).collect(), mdps.into_iter().map(Option::unwrap).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn all_zero_items_give_zero_values() {
        let spec = ObjectworldSpec { item_values: vec![0.0], base_values: vec![0.0], near_duplicates: vec![], ..Default::default() };
        let mut rng = stream(1, Stream::Environment);
        let (_, mdps) = build_objectworld_family(&spec, 3, &mut rng).unwrap();
        for m in &mdps {
            assert!(value_iteration(m, 1e-8).0.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn pick_and_return_cycle() {
        let spec = ObjectworldSpec {
            side: 2,
            transition_failure_prob: 0.0,
            reward_failure_prob: 0.0,
            item_values: vec![0.0, 1.0],
            base_values: vec![1.0],
            ..Default::default()
        };
        let layout = ObjectLayout { cells: vec![Some(Item { value_index: 1, action: RIGHT }), None, None, None] };
        let m = build_objectworld(&spec, &layout).unwrap();
        let (v, _) = value_iteration(&m, 1e-10);
        let g = spec.gamma;
        // Pick (moving right), step back, repeat.
        assert!((v[0] - 1.0 / (1.0 - g * g)).abs() < 1e-9);
        assert!((v[1] - g / (1.0 - g * g)).abs() < 1e-9);
    }

    #[test]
    fn reward_failure_mass() {
        let spec = ObjectworldSpec::default();
        let mut cells = vec![None; 25];
        cells[7] = Some(Item { value_index: 9, action: UP });
        let m = build_objectworld(&spec, &ObjectLayout { cells }).unwrap();
        assert!((m.reward(7, UP) - 0.96 * (1.0 - 0.012)).abs() < 1e-12);
        assert_eq!(m.reward(7, DOWN), 0.0);
    }

    #[test]
    fn default_family_shape() {
        let spec = ObjectworldSpec::default();
        let mut rng = stream(3, Stream::Environment);
        let (layouts, mdps) = build_objectworld_family(&spec, 8, &mut rng).unwrap();
        assert_eq!(mdps.len(), 8);
        for m in &mdps {
            assert_eq!((m.num_states(), m.num_actions(), m.support_size()), (25, 4, 12));
        }
        let base_idx: Vec<usize> = spec.base_values.iter().map(|v| spec.item_values.iter().position(|x| x == v).unwrap()).collect();
        for t in [0, 2, 3, 5] {
            assert!(layouts[t].cells.iter().flatten().all(|i| base_idx.contains(&i.value_index)));
        }
        for (t, b) in [(1, 0), (7, 0), (4, 5), (6, 5)] {
            assert!(layouts[t].cells.iter().zip(&layouts[b].cells).all(|(x, y)| x.is_some() == y.is_some()));
            assert!(mutually_near_optimal(&mdps[t], &mdps[b], 0.5));
        }
        assert!(build_objectworld_family(&spec, 1, &mut rng).is_err());
    }

    #[test]
    fn placement_prefers_cheap_items() {
        let spec = ObjectworldSpec { side: 40, ..Default::default() };
        let mut rng = stream(4, Stream::Environment);
        let layout = random_layout(&spec, &mut rng).unwrap();
        let count = |idx: usize| layout.cells.iter().flatten().filter(|i| i.value_index == idx).count();
        assert!(count(0) > count(3) && count(3) > count(6) && count(6) > count(9));
        let empty = layout.cells.iter().filter(|c| c.is_none()).count() as f64 / 1600.0;
        assert!((empty - 0.5).abs() < 0.05);
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = ObjectworldSpec { reward_failure_prob: 1.5, ..Default::default() };
        assert!(build_objectworld(&bad, &ObjectLayout { cells: vec![None; 25] }).is_err());
        let unsorted = ObjectworldSpec { item_values: vec![0.0, 0.5, 0.2], ..Default::default() };
        assert!(random_layout(&unsorted, &mut stream(0, Stream::Environment)).is_err());
    }
}
