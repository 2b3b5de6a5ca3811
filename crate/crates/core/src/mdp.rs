//! Finite discounted MDPs with finite-support rewards, exact planning, and the
//! per-pair statistics used by identification.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    reward_support: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    r: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MdpDocument {
    gamma: f64,
    reward_support: Vec<f64>,
    p: Vec<Vec<Vec<f64>>>,
    q: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let s = doc.p.len();
        if s == 0 || doc.q.len() != s {
            return Err(Error::ShapeMismatch("p and q need the same non-zero state count".into()));
        }
        let a = doc.p[0].len();
        let flat = |t: &Vec<Vec<Vec<f64>>>, inner: usize, what: &str| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(s * a * inner);
            for row in t {
                if row.len() != a {
                    return Err(Error::ShapeMismatch(format!("{what}: ragged action dimension")));
                }
                for dist in row {
                    if dist.len() != inner {
                        return Err(Error::ShapeMismatch(format!("{what}: ragged inner dimension")));
                    }
                    out.extend_from_slice(dist);
                }
            }
            Ok(out)
        };
        let p = flat(&doc.p, s, "p")?;
        let q = flat(&doc.q, doc.reward_support.len(), "q")?;
        TabularMdp::new(s, a, doc.gamma, doc.reward_support, p, q)
    }
}

impl From<TabularMdp> for MdpDocument {
    fn from(m: TabularMdp) -> Self {
        let (s, a, u) = (m.num_states, m.num_actions, m.reward_support.len());
        let nest = |t: &[f64], inner: usize| -> Vec<Vec<Vec<f64>>> {
            (0..s)
                .map(|i| (0..a).map(|j| t[(i * a + j) * inner..(i * a + j + 1) * inner].to_vec()).collect())
                .collect()
        };
        MdpDocument { gamma: m.gamma, p: nest(&m.p, s), q: nest(&m.q, u), reward_support: m.reward_support }
    }
}

impl TabularMdp {
    /// Builds an MDP from flat row-major `p[s][a][s']` and `q[s][a][u]` tables.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        reward_support: Vec<f64>,
        p: Vec<f64>,
        q: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || reward_support.is_empty() {
            return invalid("states, actions and reward support must be non-empty");
        }
        if !(0.0..1.0).contains(&gamma) {
            return invalid(format!("discount {gamma} outside [0,1)"));
        }
        if reward_support.iter().any(|u| !(0.0..=1.0).contains(u)) {
            return invalid("reward support values must lie in [0,1]");
        }
        let (sa, u) = (num_states * num_actions, reward_support.len());
        if p.len() != sa * num_states || q.len() != sa * u {
            return Err(Error::ShapeMismatch(format!(
                "expected {} transition and {} reward entries, got {} and {}",
                sa * num_states,
                sa * u,
                p.len(),
                q.len()
            )));
        }
        check_rows(&p, num_states, "transition")?;
        check_rows(&q, u, "reward")?;
        let r = q.chunks(u).map(|row| dot(row, &reward_support)).collect();
        Ok(TabularMdp { num_states, num_actions, gamma, reward_support, p, q, r })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn support_size(&self) -> usize {
        self.reward_support.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward_support(&self) -> &[f64] {
        &self.reward_support
    }

    pub fn p(&self, s: usize, a: usize) -> &[f64] {
        let i = s * self.num_actions + a;
        &self.p[i * self.num_states..(i + 1) * self.num_states]
    }

    pub fn q(&self, s: usize, a: usize) -> &[f64] {
        let u = self.reward_support.len();
        let i = s * self.num_actions + a;
        &self.q[i * u..(i + 1) * u]
    }

    /// Mean reward of the pair.
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.r[s * self.num_actions + a]
    }

    /// Mean rewards indexed by `s * A + a`.
    pub fn rewards(&self) -> &[f64] {
        &self.r
    }

    pub fn transitions_flat(&self) -> &[f64] {
        &self.p
    }

    pub fn rewards_flat(&self) -> &[f64] {
        &self.q
    }

    pub fn same_shape(&self, other: &TabularMdp) -> bool {
        self.num_states == other.num_states
            && self.num_actions == other.num_actions
            && self.reward_support == other.reward_support
            && self.gamma == other.gamma
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn check_rows(t: &[f64], width: usize, what: &str) -> Result<()> {
    for (i, row) in t.chunks(width).enumerate() {
        if row.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return invalid(format!("{what} row {i} has a negative or non-finite entry"));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return invalid(format!("{what} row {i} sums to {sum}"));
        }
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standard deviation of `v` under distribution `p`.
pub(crate) fn dist_std(p: &[f64], v: &[f64]) -> f64 {
    let mean = dot(p, v);
    let var: f64 = p.iter().zip(v).map(|(w, x)| w * (x - mean) * (x - mean)).sum();
    var.max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    pub actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Policy { actions }
    }

    pub fn uniform_action(num_states: usize, a: usize) -> Self {
        Policy { actions: vec![a; num_states] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueFunction(pub Vec<f64>);

impl Deref for ValueFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Solves `(I - γ P_π) x = g` with two rounds of iterative refinement.
fn solve_discounted(mdp: &TabularMdp, policy: &Policy, g: &[f64]) -> Vec<f64> {
    let n = mdp.num_states;
    let mut m = DMatrix::<f64>::identity(n, n);
    for s in 0..n {
        for (s2, w) in mdp.p(s, policy.actions[s]).iter().enumerate() {
            m[(s, s2)] -= mdp.gamma * w;
        }
    }
    let b = DVector::from_column_slice(g);
    let lu = m.clone().lu();
    let mut x = lu.solve(&b).expect("I - γP is nonsingular for γ < 1");
    for _ in 0..2 {
        let r = &b - &m * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
    }
    x.as_slice().to_vec()
}

fn check_policy(mdp: &TabularMdp, pi: &Policy) {
    assert_eq!(pi.actions.len(), mdp.num_states, "policy length differs from state count");
    assert!(pi.actions.iter().all(|&a| a < mdp.num_actions), "policy action out of range");
}

fn q_value(mdp: &TabularMdp, v: &[f64], s: usize, a: usize) -> f64 {
    mdp.reward(s, a) + mdp.gamma * dot(mdp.p(s, a), v)
}

fn greedy(mdp: &TabularMdp, v: &[f64], tie: f64) -> Policy {
    let actions = (0..mdp.num_states)
        .map(|s| {
            let q: Vec<f64> = (0..mdp.num_actions).map(|a| q_value(mdp, v, s, a)).collect();
            let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            q.iter().position(|&x| x >= best - tie).unwrap()
        })
        .collect();
    Policy { actions }
}

/// Sup-norm Bellman optimality residual `‖TV − V‖∞`.
pub fn bellman_residual(mdp: &TabularMdp, v: &[f64]) -> f64 {
    (0..mdp.num_states)
        .map(|s| {
            let best = (0..mdp.num_actions).map(|a| q_value(mdp, v, s, a)).fold(f64::NEG_INFINITY, f64::max);
            (best - v[s]).abs()
        })
        .fold(0.0, f64::max)
}

/// Optimal value function and greedy policy.
///
/// Uses policy iteration with exact evaluation, which reaches the
/// residual target in a handful of linear solves even for γ close to 1.
/// Ties are broken towards the lowest action index.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> (ValueFunction, Policy) {
    assert!(tol > 0.0, "tolerance must be positive");
    let g = mdp.gamma;
    let tie = tol * (1.0 - g) / 4.0;
    let mut pi = greedy(mdp, &vec![0.0; mdp.num_states], tie);
    let max_rounds = 100 + 10 * mdp.num_pairs();
    let mut v = Vec::new();
    let mut converged = false;
    for _ in 0..max_rounds {
        let r_pi: Vec<f64> = (0..mdp.num_states).map(|s| mdp.reward(s, pi.actions[s])).collect();
        v = solve_discounted(mdp, &pi, &r_pi);
        let mut changed = false;
        for s in 0..mdp.num_states {
            let q: Vec<f64> = (0..mdp.num_actions).map(|a| q_value(mdp, &v, s, a)).collect();
            let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if best > q[pi.actions[s]] + tie {
                pi.actions[s] = q.iter().position(|&x| x >= best - tie).unwrap();
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    if !converged {
        let target = if g > 0.0 { tol * (1.0 - g) / (2.0 * g) } else { f64::INFINITY };
        loop {
            let next: Vec<f64> = (0..mdp.num_states)
                .map(|s| (0..mdp.num_actions).map(|a| q_value(mdp, &v, s, a)).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if diff <= target {
                break;
            }
        }
    }
    let pi = greedy(mdp, &v, tie);
    (ValueFunction(v), pi)
}

/// Value of a deterministic policy, by direct linear solve.
pub fn policy_evaluation(mdp: &TabularMdp, pi: &Policy, tol: f64) -> ValueFunction {
    assert!(tol > 0.0, "tolerance must be positive");
    check_policy(mdp, pi);
    let r_pi: Vec<f64> = (0..mdp.num_states).map(|s| mdp.reward(s, pi.actions[s])).collect();
    ValueFunction(solve_discounted(mdp, pi, &r_pi))
}

pub fn reward_mean_and_std(mdp: &TabularMdp, s: usize, a: usize) -> (f64, f64) {
    (mdp.reward(s, a), dist_std(mdp.q(s, a), &mdp.reward_support))
}

pub fn transition_value_std(mdp: &TabularMdp, s: usize, a: usize, v: &[f64]) -> f64 {
    assert_eq!(v.len(), mdp.num_states);
    dist_std(mdp.p(s, a), v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// `|r_θ(s,a) − r_θ'(s,a)|`, indexed `[s][a]`.
    pub reward_gap: Vec<Vec<f64>>,
    /// `|(p_θ(s,a) − p_θ'(s,a))ᵀ v_ref|`, indexed `[s][a]`.
    pub transition_gap: Vec<Vec<f64>>,
    /// Larger of the two sup-norms; the minimum of this over the
    /// competitors of a target is what [`min_gap`] reports.
    pub min_gap: f64,
}

fn check_pair(a: &TabularMdp, b: &TabularMdp) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch("models differ in states, actions, reward support or discount".into()))
    }
}

fn transition_gap_at(a: &TabularMdp, b: &TabularMdp, v: &[f64], s: usize, x: usize) -> f64 {
    a.p(s, x).iter().zip(b.p(s, x)).zip(v).map(|((p1, p2), w)| (p1 - p2) * w).sum::<f64>().abs()
}

pub fn model_gaps(theta: &TabularMdp, theta2: &TabularMdp, v_ref: &[f64]) -> Result<GapReport> {
    check_pair(theta, theta2)?;
    if v_ref.len() != theta.num_states {
        return Err(Error::ShapeMismatch("reference value has wrong length".into()));
    }
    let (s_n, a_n) = (theta.num_states, theta.num_actions);
    let reward_gap: Vec<Vec<f64>> =
        (0..s_n).map(|s| (0..a_n).map(|a| (theta.reward(s, a) - theta2.reward(s, a)).abs()).collect()).collect();
    let transition_gap: Vec<Vec<f64>> =
        (0..s_n).map(|s| (0..a_n).map(|a| transition_gap_at(theta, theta2, v_ref, s, a)).collect()).collect();
    let sup = |t: &Vec<Vec<f64>>| t.iter().flatten().cloned().fold(0.0, f64::max);
    let min_gap = sup(&reward_gap).max(sup(&transition_gap));
    Ok(GapReport { reward_gap, transition_gap, min_gap })
}

/// Occupancy-weighted gap bound on `|V^π_θ(s) − V^π_θ'(s)|`.
pub fn simulation_gap_bound(theta: &TabularMdp, theta2: &TabularMdp, pi: &Policy, start_state: usize) -> Result<f64> {
    check_pair(theta, theta2)?;
    check_policy(theta, pi);
    if start_state >= theta.num_states {
        return invalid("start state out of range");
    }
    let v = policy_evaluation(theta, pi, 1e-9);
    let g: Vec<f64> = (0..theta.num_states)
        .map(|s| {
            let a = pi.actions[s];
            (theta.reward(s, a) - theta2.reward(s, a)).abs() + theta.gamma * transition_gap_at(theta, theta2, &v, s, a)
        })
        .collect();
    Ok(solve_discounted(theta2, pi, &g)[start_state])
}

/// Gap between `target` and its closest competitor, measured with the
/// target's optimal value.
pub fn min_gap(models: &[TabularMdp], values: &[ValueFunction], target: usize) -> Result<f64> {
    if models.len() < 2 {
        return invalid("gap needs at least two models");
    }
    if values.len() != models.len() || target >= models.len() {
        return Err(Error::ShapeMismatch("one value function per model required".into()));
    }
    let mut best = f64::INFINITY;
    for (i, m) in models.iter().enumerate() {
        if i == target {
            continue;
        }
        let g = model_gaps(m, &models[target], &values[target])?.min_gap;
        if g == 0.0 {
            log::warn!("models {i} and {target} are indistinguishable");
        }
        best = best.min(g);
    }
    Ok(best)
}

/// [`min_gap`] with every model taken as the target in turn.
pub fn min_gaps(models: &[TabularMdp], values: &[ValueFunction]) -> Result<Vec<f64>> {
    (0..models.len()).map(|t| min_gap(models, values, t)).collect()
}

/// Random MDP with Dirichlet(1) rows and the given reward support.
pub fn random_mdp<R: Rng>(
    num_states: usize,
    num_actions: usize,
    reward_support: &[f64],
    gamma: f64,
    rng: &mut R,
) -> Result<TabularMdp> {
    let mut simplex = |n: usize| -> Vec<f64> {
        let w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    };
    let sa = num_states * num_actions;
    let p = (0..sa).flat_map(|_| simplex(num_states)).collect();
    let q = (0..sa).flat_map(|_| simplex(reward_support.len())).collect();
    TabularMdp::new(num_states, num_actions, gamma, reward_support.to_vec(), p, q)
}
