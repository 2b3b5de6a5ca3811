//! Benchmark task families, the Markov chain over tasks, and the
//! generative-model oracle.

mod chain;
mod generative;
mod grid;
mod objectworld;

pub use chain::TaskChain;
pub use generative::{GenerativeModel, Sample};
pub use grid::{
    build_grid_with_support, build_multi_goal_grid, build_two_rooms, cell_index, multi_goal_family, two_rooms_family,
    GoalCell, GoalMode, GridSpec, MultiGoalFamily, TwoRoomsLayout, Wall, DOWN, LEFT, NUM_ACTIONS, RIGHT, UP,
};
pub use objectworld::{
    build_objectworld, build_objectworld_family, near_duplicate, random_layout, Item, NearDuplicate, ObjectLayout,
    ObjectworldSpec,
};
