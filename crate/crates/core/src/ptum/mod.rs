//! Identification of a near-optimal policy for an unknown task, given a set
//! of approximate candidate models and a generative model of the task.

mod approx;
mod bound;
mod confidence;
mod empirical;
mod index;
mod run;

pub use approx::{ApproxModelSet, DeltaBounds, PLANNING_TOL};
pub use bound::theta_eps_and_bound;
pub use confidence::{confidence_radii, prune_confidence_set, radii_from_stats, ConfidenceParams, Radii};
pub use empirical::EmpiricalModel;
pub use index::{info_index, select_query};
pub use run::{
    check_stop, default_fallback_per_pair, run_ptum, transfer_gate, uniform_pac_fallback, Elimination, PtumMode,
    PtumParams, PtumResult, TraceStep,
};
