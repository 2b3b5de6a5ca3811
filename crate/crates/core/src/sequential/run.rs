use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{pre_eliminate, pre_elimination_slack, SequentialConfig};
use crate::envs::{GenerativeModel, TaskChain};
use crate::error::{invalid, Error, Result};
use crate::mdp::{policy_evaluation, value_iteration, Policy, TabularMdp, ValueFunction};
use crate::ptum::{run_ptum, uniform_pac_fallback, ApproxModelSet, DeltaBounds, EmpiricalModel, PtumMode, PtumParams, PLANNING_TOL};
use crate::rng::{derive_seed, stream, Stream};
use crate::spectral::{
    align_columns, learn_hmm, max_column_error, model_error_bound, models_matrix, unpack_models, vectorize_observation,
    BlockLayout, HmmEstimate, ObservationStore,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskMode {
    Startup,
    TransferStopped,
    FallbackGate,
    FallbackBudget,
}

impl TaskMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskMode::Startup => "startup",
            TaskMode::TransferStopped => "transfer-stopped",
            TaskMode::FallbackGate => "fallback-gate",
            TaskMode::FallbackBudget => "fallback-budget",
        }
    }
}

impl From<PtumMode> for TaskMode {
    fn from(m: PtumMode) -> Self {
        match m {
            PtumMode::TransferStopped => TaskMode::TransferStopped,
            PtumMode::FallbackGate => TaskMode::FallbackGate,
            PtumMode::FallbackBudget => TaskMode::FallbackBudget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub h: usize,
    /// Hidden task, for evaluation only.
    pub true_task: usize,
    pub mode: TaskMode,
    /// Identification and fallback queries.
    pub queries: u64,
    pub post_queries: u64,
    pub eps_optimal: bool,
    pub active_set_size: usize,
    /// Label of the estimated model matched to the hidden task, if any.
    pub true_label: Option<usize>,
    pub true_in_active: bool,
    pub delta_h: f64,
    pub o_col_err_max: f64,
    pub t_err_max: f64,
    /// Re-estimation failed after this task and the previous models were kept.
    pub degraded: bool,
    pub oracle_queries: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceTrace {
    pub tasks: Vec<TaskRecord>,
}

impl SequenceTrace {
    pub fn transfer_tasks(&self) -> impl Iterator<Item = &TaskRecord> {
        self.tasks.iter().filter(|r| r.mode != TaskMode::Startup)
    }

    pub fn mean_transfer_queries(&self) -> f64 {
        let (n, s) = self.transfer_tasks().fold((0usize, 0u64), |(n, s), r| (n + 1, s + r.queries));
        if n == 0 {
            f64::NAN
        } else {
            s as f64 / n as f64
        }
    }

    pub fn eps_optimal_fraction(&self) -> f64 {
        self.tasks.iter().filter(|r| r.eps_optimal).count() as f64 / self.tasks.len().max(1) as f64
    }
}

/// Tops every pair up to `per_pair` samples; returns the queries added.
pub fn collect_post_samples(g: &mut GenerativeModel, emp: &mut EmpiricalModel, per_pair: u64) -> Result<u64> {
    if per_pair == 0 {
        return invalid("post-sampling needs at least one sample per pair");
    }
    let before = g.queries();
    for s in 0..g.num_states() {
        for a in 0..g.num_actions() {
            while emp.count(s, a) < per_pair {
                let x = g.query(s, a)?;
                emp.record(s, a, &x);
            }
        }
    }
    Ok(g.queries() - before)
}

fn is_eps_optimal(mdp: &TabularMdp, v_star: &ValueFunction, pi: &Policy, eps: f64) -> bool {
    let v = policy_evaluation(mdp, pi, PLANNING_TOL);
    let slack = 4.0 * PLANNING_TOL * v_star.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    v.iter().zip(v_star.iter()).all(|(a, b)| *a >= b - eps - slack)
}

struct Learned {
    estimate: HmmEstimate,
    models: ApproxModelSet,
}

/// Runs the per-task loop: identification from the current estimates,
/// post-sampling, spectral re-estimation, error bound refresh and
/// pre-elimination of the next candidate set.
pub fn run_sequential(cfg: &SequentialConfig, family: &[TabularMdp], chain: &TaskChain, seed: u64) -> Result<SequenceTrace> {
    cfg.validate()?;
    let k = family.len();
    if k == 0 || chain.num_tasks() != k {
        return invalid("the chain must have one state per task");
    }
    if family.iter().any(|m| !m.same_shape(&family[0])) {
        return Err(Error::ShapeMismatch("tasks differ in shape".into()));
    }
    let base = &family[0];
    let (s_n, a_n, support, gamma) = (base.num_states(), base.num_actions(), base.reward_support().to_vec(), base.gamma());
    let layout = BlockLayout::mdp(s_n, a_n, support.len())?;
    let optimal: Vec<ValueFunction> = family.iter().map(|m| value_iteration(m, PLANNING_TOL).0).collect();
    let truth_o = models_matrix(family);
    let truth_t = DMatrix::from_fn(k, k, |i, j| chain.entry(i, j));
    let oracle_set = if cfg.oracle_normalization { Some(ApproxModelSet::new(family.to_vec(), DeltaBounds::default())?) } else { None };

    let mut chain_rng = stream(seed, Stream::TaskChain);
    let mut store = ObservationStore::new(layout.dim());
    let mut learned: Option<Learned> = None;
    let mut candidates: Vec<usize> = (0..k).collect();
    let mut trace = SequenceTrace::default();
    let mut current = chain.sample_initial(&mut chain_rng);

    for h in 0..cfg.num_tasks {
        if h > 0 {
            current = chain.sample_next(current, &mut chain_rng);
        }
        let task_seed = derive_seed(seed, h as u64);
        let mut g = GenerativeModel::new(family[current].clone(), stream(task_seed, Stream::Queries));

        // Diagnostics of the estimate used for this task.
        let (mut o_err, mut t_err, mut true_label) = (f64::NAN, f64::NAN, None);
        if let Some(l) = &learned {
            let perm = align_columns(&l.estimate.o, &truth_o)?;
            o_err = max_column_error(&l.estimate.o, &truth_o)?;
            t_err = (0..k)
                .flat_map(|i| (0..k).map(move |j| (i, j)))
                .map(|(i, j)| (l.estimate.t[(perm[i], perm[j])] - truth_t[(i, j)]).abs())
                .fold(0.0, f64::max);
            true_label = Some(perm[current]);
        }
        let true_in_active = true_label.is_none_or(|l| candidates.contains(&l));

        let startup = h < cfg.startup_tasks;
        let delta_used = learned.as_ref().map_or(f64::INFINITY, |l| l.models.delta().max());
        let (mode, policy, mut emp, survivors, queries) = if startup {
            let (pi, emp) = uniform_pac_fallback(&mut g, cfg.startup_per_pair)?;
            (TaskMode::Startup, pi, emp, None, g.queries())
        } else if learned.is_none() {
            let (pi, emp) = uniform_pac_fallback(&mut g, cfg.fallback_count())?;
            (TaskMode::FallbackGate, pi, emp, None, g.queries())
        } else {
            let set = learned.as_ref().unwrap().models.restrict_to_labels(&candidates)?;
            let mut params = PtumParams::new(cfg.epsilon, cfg.delta, cfg.budget);
            params.fallback_per_pair = Some(cfg.fallback_count());
            let r = run_ptum(&set, &mut g, &params)?;
            let survivors = (r.mode == PtumMode::TransferStopped).then(|| r.survivors.clone());
            let emp = r.empirical.expect("identification keeps its samples");
            (r.mode.into(), r.policy, emp, survivors, g.queries())
        };
        let oracle_queries = match (&oracle_set, startup) {
            (Some(set), false) => {
                let mut og = GenerativeModel::new(family[current].clone(), stream(task_seed, Stream::Oracle));
                let mut params = PtumParams::new(cfg.epsilon, cfg.delta, cfg.budget);
                params.fallback_per_pair = Some(cfg.fallback_count());
                Some(run_ptum(set, &mut og, &params)?.total_queries())
            }
            _ => None,
        };
        let post_queries = collect_post_samples(&mut g, &mut emp, cfg.post_per_pair)?;
        store.push(&vectorize_observation(&emp)?)?;

        let seen = h + 1;
        let mut degraded = false;
        let refit = seen >= 3 && (seen >= cfg.startup_tasks || cfg.refit_during_startup);
        if refit {
            let mut rng = stream(derive_seed(seed, h as u64), Stream::Tensor);
            match learn_hmm(&store, k, &layout, &cfg.spectral, &mut rng) {
                Ok(mut est) => {
                    if let Some(prev) = &learned {
                        let perm = align_columns(&est.o, &prev.estimate.o)?;
                        est.permute(&perm);
                    }
                    let transfer_t = if seen >= cfg.startup_tasks { seen - cfg.startup_tasks } else { 0 };
                    let bound = model_error_bound(seen, &cfg.rho_at(transfer_t), cfg.delta_prime, s_n, a_n, support.len())?;
                    let bounds = if bound.burn_in_ok { bound.bounds } else { DeltaBounds::uniform(f64::INFINITY) };
                    let models = unpack_models(&est.o, s_n, a_n, &support, gamma)?;
                    let models = ApproxModelSet::new(models, bounds)?;
                    learned = Some(Learned { estimate: est, models });
                }
                Err(Error::DegenerateMoments(_) | Error::RankDeficient { .. } | Error::DecompositionFailed(_)) => {
                    log::warn!("re-estimation after task {h} failed; keeping previous models");
                    degraded = true;
                }
                Err(e) => return Err(e),
            }
        }

        trace.tasks.push(TaskRecord {
            h,
            true_task: current,
            mode,
            queries,
            post_queries,
            eps_optimal: is_eps_optimal(&family[current], &optimal[current], &policy, cfg.epsilon),
            active_set_size: candidates.len(),
            true_label,
            true_in_active,
            delta_h: delta_used,
            o_col_err_max: o_err,
            t_err_max: t_err,
            degraded,
            oracle_queries,
        });

        candidates = match (&cfg.pre_elimination, &learned) {
            (Some(p), Some(l)) if seen >= cfg.startup_tasks => {
                let survived = survivors.unwrap_or_else(|| (0..k).collect());
                let slack = pre_elimination_slack(p, k, cfg.delta, cfg.delta_prime, layout.dim(), cfg.num_tasks, seen);
                pre_eliminate(&l.estimate.t, &survived, slack, p.eta, p.keep_top)
            }
            _ => (0..k).collect(),
        };
    }
    Ok(trace)
}
