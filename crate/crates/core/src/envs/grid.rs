use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mdp::TabularMdp;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const RIGHT: usize = 2;
pub const LEFT: usize = 3;
pub const NUM_ACTIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub column: usize,
    pub door_row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalCell {
    pub x: usize,
    pub y: usize,
    pub reward: f64,
}

/// What happens once a goal cell is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalMode {
    /// The goal is absorbing and pays its reward on every step.
    #[default]
    Absorbing,
    /// The goal pays once, then moves to a shared zero-reward sink state.
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub wall: Option<Wall>,
    #[serde(default)]
    pub goals: Vec<GoalCell>,
    pub action_failure_prob: f64,
    #[serde(default)]
    pub goal_mode: GoalMode,
    pub gamma: f64,
}

/// State index of cell `(x, y)`; row 0 is the top row.
pub fn cell_index(width: usize, x: usize, y: usize) -> usize {
    y * width + x
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return invalid("grid dimensions must be positive");
        }
        if !(0.0..1.0).contains(&self.action_failure_prob) {
            return invalid("action failure probability must lie in [0,1)");
        }
        if let Some(w) = &self.wall {
            if w.column >= self.width {
                return invalid("wall column outside the grid");
            }
            if w.door_row >= self.height {
                return invalid(format!("door row {} outside wall of height {}", w.door_row, self.height));
            }
        }
        for g in &self.goals {
            if g.x >= self.width || g.y >= self.height {
                return invalid("goal outside the grid");
            }
            if !(0.0..=1.0).contains(&g.reward) {
                return invalid(format!("goal reward {} outside [0,1]", g.reward));
            }
            if self.is_wall(g.x, g.y) {
                return invalid("goal placed inside the wall");
            }
        }
        Ok(())
    }

    fn is_wall(&self, x: usize, y: usize) -> bool {
        matches!(&self.wall, Some(w) if w.column == x && w.door_row != y)
    }

    fn has_sink(&self) -> bool {
        self.goal_mode == GoalMode::Terminal && !self.goals.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.width * self.height + usize::from(self.has_sink())
    }

    fn step(&self, x: usize, y: usize, action: usize) -> (usize, usize) {
        let (nx, ny) = match action {
            UP if y > 0 => (x, y - 1),
            DOWN if y + 1 < self.height => (x, y + 1),
            RIGHT if x + 1 < self.width => (x + 1, y),
            LEFT if x > 0 => (x - 1, y),
            _ => (x, y),
        };
        if self.is_wall(nx, ny) {
            (x, y)
        } else {
            (nx, ny)
        }
    }

    fn goal_at(&self, x: usize, y: usize) -> Option<&GoalCell> {
        self.goals.iter().find(|g| g.x == x && g.y == y)
    }
}

fn support_index(support: &[f64], value: f64) -> Result<usize> {
    match support.iter().position(|u| *u == value) {
        Some(i) => Ok(i),
        None => invalid(format!("reward {value} missing from the reward support")),
    }
}

/// Builds a grid MDP whose reward distributions live on `support`.
pub fn build_grid_with_support(spec: &GridSpec, support: &[f64]) -> Result<TabularMdp> {
    spec.validate()?;
    let cells = spec.width * spec.height;
    let n = spec.num_states();
    let (u, f) = (support.len(), spec.action_failure_prob);
    let zero = support_index(support, 0.0)?;
    let mut p = vec![0.0; n * NUM_ACTIONS * n];
    let mut q = vec![0.0; n * NUM_ACTIONS * u];
    for y in 0..spec.height {
        for x in 0..spec.width {
            let s = cell_index(spec.width, x, y);
            let goal = spec.goal_at(x, y);
            for a in 0..NUM_ACTIONS {
                let row = &mut p[(s * NUM_ACTIONS + a) * n..(s * NUM_ACTIONS + a + 1) * n];
                let reward = match goal {
                    Some(g) => {
                        let dest = if spec.has_sink() { cells } else { s };
                        row[dest] = 1.0;
                        g.reward
                    }
                    None => {
                        for b in 0..NUM_ACTIONS {
                            let w = if b == a { 1.0 - f + f / NUM_ACTIONS as f64 } else { f / NUM_ACTIONS as f64 };
                            let (nx, ny) = spec.step(x, y, b);
                            row[cell_index(spec.width, nx, ny)] += w;
                        }
                        0.0
                    }
                };
                q[(s * NUM_ACTIONS + a) * u + support_index(support, reward)?] = 1.0;
            }
        }
    }
    if spec.has_sink() {
        for a in 0..NUM_ACTIONS {
            p[(cells * NUM_ACTIONS + a) * n + cells] = 1.0;
            q[(cells * NUM_ACTIONS + a) * u + zero] = 1.0;
        }
    }
    TabularMdp::new(n, NUM_ACTIONS, spec.gamma, support.to_vec(), p, q)
}

fn support_of<'a>(specs: impl IntoIterator<Item = &'a GridSpec>) -> Vec<f64> {
    let mut v = vec![0.0];
    for spec in specs {
        v.extend(spec.goals.iter().map(|g| g.reward));
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Grid with optional dividing wall. The reward support is `{0}` plus the
/// goal rewards.
pub fn build_two_rooms(spec: &GridSpec) -> Result<TabularMdp> {
    build_grid_with_support(spec, &support_of([spec]))
}

/// One MDP per row of `per_task_goal_rewards`, sharing the goal positions of
/// `spec` and a common reward support.
pub fn build_multi_goal_grid(spec: &GridSpec, per_task_goal_rewards: &[Vec<f64>]) -> Result<Vec<TabularMdp>> {
    let specs: Vec<GridSpec> = per_task_goal_rewards
        .iter()
        .map(|rewards| {
            if rewards.len() != spec.goals.len() {
                return invalid("one reward per goal required");
            }
            let mut s = spec.clone();
            for (g, r) in s.goals.iter_mut().zip(rewards) {
                g.reward = *r;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let support = support_of(&specs);
    specs.iter().map(|s| build_grid_with_support(s, &support)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoRoomsLayout {
    /// Door and goal both move between tasks.
    GoalsAndDoors,
    /// Goal fixed in the top-right corner; only the door moves.
    DoorsOnly,
}

fn coprime_step(n: usize) -> usize {
    let gcd = |mut a: usize, mut b: usize| {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    };
    (n / 2 + 1..n).find(|&c| gcd(c, n) == 1).unwrap_or(1)
}

/// Two rooms split by a wall in the middle column, one task per door row.
pub fn two_rooms_family(
    width: usize,
    height: usize,
    num_tasks: usize,
    layout: TwoRoomsLayout,
    failure_prob: f64,
    gamma: f64,
) -> Result<(Vec<GridSpec>, Vec<TabularMdp>)> {
    if width < 3 || num_tasks == 0 || num_tasks > height {
        return invalid("two-rooms family needs width >= 3 and 1..=height tasks");
    }
    let column = width / 2;
    let right = width - column - 1;
    let step = coprime_step(height);
    let specs: Vec<GridSpec> = (0..num_tasks)
        .map(|i| {
            let (door_row, goal) = match layout {
                TwoRoomsLayout::GoalsAndDoors => {
                    (i, GoalCell { x: width - 1 - i % right.min(4), y: (step * i) % height, reward: 1.0 })
                }
                TwoRoomsLayout::DoorsOnly => (i * height / num_tasks, GoalCell { x: width - 1, y: 0, reward: 1.0 }),
            };
            GridSpec {
                width,
                height,
                wall: Some(Wall { column, door_row }),
                goals: vec![goal],
                action_failure_prob: failure_prob,
                goal_mode: GoalMode::Absorbing,
                gamma,
            }
        })
        .collect();
    let support = support_of(&specs);
    let mdps = specs.iter().map(|s| build_grid_with_support(s, &support)).collect::<Result<_>>()?;
    Ok((specs, mdps))
}

#[derive(Debug, Clone)]
pub struct MultiGoalFamily {
    pub spec: GridSpec,
    pub rewards: Vec<Vec<f64>>,
    pub mdps: Vec<TabularMdp>,
}

/// Seven goals near the corners of an open grid. Task `j`'s best goal is
/// goal `j`, worth `true_best` for task 0 and `other_best` otherwise.
pub fn multi_goal_family(
    width: usize,
    height: usize,
    true_best: f64,
    other_best: f64,
    failure_prob: f64,
    gamma: f64,
    goal_mode: GoalMode,
) -> Result<MultiGoalFamily> {
    if width < 3 || height < 3 {
        return invalid("multi-goal grid needs at least 3x3 cells");
    }
    let (w, h) = (width - 1, height - 1);
    let cells = [(w, 0), (0, 0), (w, h), (w - 1, 0), (w, 1), (1, 0), (w, h - 1)];
    let goals = cells.iter().map(|&(x, y)| GoalCell { x, y, reward: 0.0 }).collect();
    let spec = GridSpec { width, height, wall: None, goals, action_failure_prob: failure_prob, goal_mode, gamma };
    let n = cells.len();
    let rewards: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            (0..n)
                .map(|g| match (g == j, j) {
                    (true, 0) => true_best,
                    (true, _) => other_best,
                    (false, _) => 0.2 + 0.1 * ((g + 2 * j) % 5) as f64,
                })
                .collect()
        })
        .collect();
    let mdps = build_multi_goal_grid(&spec, &rewards)?;
    Ok(MultiGoalFamily { spec, rewards, mdps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{model_gaps, value_iteration};

    fn open(width: usize, height: usize, f: f64) -> GridSpec {
        GridSpec { width, height, wall: None, goals: vec![], action_failure_prob: f, goal_mode: GoalMode::Absorbing, gamma: 0.9 }
    }

    #[test]
    fn failure_mixture_on_two_cells() {
        let m = build_two_rooms(&open(2, 1, 0.1)).unwrap();
        // Right succeeds w.p. 0.9, or the failure redraw picks right again w.p. 0.1/4.
        assert!((m.p(0, RIGHT)[1] - (1.0 - 0.1 + 0.1 / 4.0)).abs() < 1e-15);
        assert!((m.p(0, RIGHT)[0] - 0.075).abs() < 1e-15);
    }

    #[test]
    fn deterministic_without_failures() {
        let (_, mdps) = two_rooms_family(12, 12, 12, TwoRoomsLayout::GoalsAndDoors, 0.0, 0.99).unwrap();
        for m in &mdps {
            for s in 0..m.num_states() {
                for a in 0..NUM_ACTIONS {
                    assert_eq!(m.p(s, a).iter().filter(|x| **x == 1.0).count(), 1);
                }
            }
        }
    }

    #[test]
    fn success_mass_is_exact() {
        let f = 0.1;
        let (specs, mdps) = two_rooms_family(12, 12, 12, TwoRoomsLayout::GoalsAndDoors, f, 0.99).unwrap();
        for (spec, m) in specs.iter().zip(&mdps) {
            for y in 0..12 {
                for x in 0..12 {
                    if spec.is_wall(x, y) || spec.goal_at(x, y).is_some() {
                        continue;
                    }
                    for a in 0..NUM_ACTIONS {
                        let (nx, ny) = spec.step(x, y, a);
                        if (nx, ny) != (x, y) {
                            let p = m.p(cell_index(12, x, y), a)[cell_index(12, nx, ny)];
                            assert!((p - (1.0 - f + f / 4.0)).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn wall_blocks_except_door() {
        let spec = GridSpec { wall: Some(Wall { column: 2, door_row: 1 }), ..open(5, 3, 0.0) };
        let m = build_two_rooms(&spec).unwrap();
        assert_eq!(m.p(cell_index(5, 1, 0), RIGHT)[cell_index(5, 1, 0)], 1.0);
        assert_eq!(m.p(cell_index(5, 1, 1), RIGHT)[cell_index(5, 2, 1)], 1.0);
        let bad = GridSpec { wall: Some(Wall { column: 2, door_row: 3 }), ..open(5, 3, 0.0) };
        assert!(build_two_rooms(&bad).is_err());
    }

    #[test]
    fn twelve_by_twelve_two_rooms() {
        let (specs, mdps) = two_rooms_family(12, 12, 12, TwoRoomsLayout::GoalsAndDoors, 0.1, 0.99).unwrap();
        assert_eq!(mdps.len(), 12);
        let mut goals: Vec<_> = specs.iter().map(|s| (s.goals[0].x, s.goals[0].y)).collect();
        goals.sort();
        goals.dedup();
        assert_eq!(goals.len(), 12);
        for (spec, m) in specs.iter().zip(&mdps) {
            assert_eq!(m.num_states(), 144);
            let g = &spec.goals[0];
            assert!(g.x > spec.wall.as_ref().unwrap().column);
            let (v, _) = value_iteration(m, 1e-8);
            assert!((v[cell_index(12, g.x, g.y)] - 100.0).abs() < 1e-6);
        }
    }

    #[test]
    fn terminal_goals_use_a_sink() {
        let spec = GridSpec {
            goals: vec![GoalCell { x: 1, y: 0, reward: 0.5 }],
            goal_mode: GoalMode::Terminal,
            ..open(2, 1, 0.0)
        };
        let m = build_two_rooms(&spec).unwrap();
        assert_eq!(m.num_states(), 3);
        let (v, _) = value_iteration(&m, 1e-8);
        assert!((v[1] - 0.5).abs() < 1e-12);
        assert!((v[0] - 0.45).abs() < 1e-12);
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn multi_goal_families() {
        let fam = multi_goal_family(12, 12, 0.8, 0.81, 0.1, 0.9999, GoalMode::Absorbing).unwrap();
        assert_eq!(fam.mdps.len(), 7);
        for (j, r) in fam.rewards.iter().enumerate() {
            let best = r.iter().cloned().fold(0.0, f64::max);
            assert_eq!(best, if j == 0 { 0.8 } else { 0.81 });
            assert_eq!(r[j], best);
        }

        let equal = build_multi_goal_grid(&fam.spec, &vec![vec![0.3; 7]; 3]).unwrap();
        let v = vec![1.0; equal[0].num_states()];
        assert_eq!(model_gaps(&equal[0], &equal[2], &v).unwrap().min_gap, 0.0);

        let one = GridSpec { goals: vec![GoalCell { x: 0, y: 0, reward: 0.0 }], ..open(3, 3, 0.1) };
        let pair = build_multi_goal_grid(&one, &[vec![0.3], vec![0.7]]).unwrap();
        let g = model_gaps(&pair[0], &pair[1], &v[..9]).unwrap();
        assert!((g.reward_gap[0][0] - 0.4).abs() < 1e-12);
        assert!(build_multi_goal_grid(&one, &[vec![1.3]]).is_err());
    }
}
