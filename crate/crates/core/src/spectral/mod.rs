//! Method-of-moments estimation of a hidden Markov model whose hidden states
//! are tasks and whose observations are per-task empirical models.

mod assign;
mod bound;
mod layout;
mod linalg;
mod moments;
mod recover;
mod store;
mod synthetic;
mod tensor;

pub use assign::hungarian;
pub use bound::{model_error_bound, ErrorBound, RhoConstants};
pub use layout::{
    models_matrix, project_simplex, project_simplex_euclidean, unpack, unpack_models, vectorize_mdp,
    vectorize_observation, BlockLayout, SimplexRepair,
};
pub use linalg::{pinv, RANK_TOL};
pub use moments::{estimate_moments, estimate_moments_weighted, whiten, MomentSet, Whitening};
pub use recover::{
    align_columns, learn_from_moments, learn_hmm, max_column_error, omega_from_lambda, recover_parameters,
    HmmEstimate, SpectralParams,
};
pub use store::ObservationStore;
pub use synthetic::SyntheticHmm;
pub use tensor::{rtp_decompose, RtpParams, Tensor3};
