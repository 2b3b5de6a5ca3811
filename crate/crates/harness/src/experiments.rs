use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use seqtransfer::envs::{
    build_objectworld_family, cell_index, multi_goal_family, two_rooms_family, GenerativeModel, TaskChain,
};
use seqtransfer::mdp::{
    min_gap, policy_evaluation, random_mdp, simulation_gap_bound, value_iteration, Policy, TabularMdp, ValueFunction,
};
use seqtransfer::ptum::{
    run_ptum, theta_eps_and_bound, ApproxModelSet, DeltaBounds, PtumParams, PtumResult, PLANNING_TOL,
};
use seqtransfer::rng::{derive_seed, stream, Stream};
use seqtransfer::sequential::{run_sequential, SequenceTrace, SequentialConfig};
use seqtransfer::spectral::{
    align_columns, learn_hmm, max_column_error, rtp_decompose, ObservationStore, RtpParams, SyntheticHmm, Tensor3,
};
use seqtransfer::Error;

use crate::config::{Environment, ExperimentConfig, PtumSection};
use crate::HarnessError;

/// Task family of an MDP scenario.
#[derive(Debug, Clone)]
pub struct Family {
    pub mdps: Vec<TabularMdp>,
    pub chain: Option<TaskChain>,
    /// States holding a goal, where one exists.
    pub goal_states: Vec<usize>,
    pub hidden: Option<usize>,
}

pub fn build_family(env: &Environment) -> Result<Family, HarnessError> {
    let cfg_err = |e: Error| HarnessError::Config(e.to_string());
    match env {
        Environment::TwoRooms { width, height, num_tasks, layout, failure_prob, gamma, hidden } => {
            let (specs, mdps) =
                two_rooms_family(*width, *height, *num_tasks, *layout, *failure_prob, *gamma).map_err(cfg_err)?;
            let mut goal_states: Vec<usize> =
                specs.iter().flat_map(|s| s.goals.iter().map(|g| cell_index(*width, g.x, g.y))).collect();
            goal_states.sort_unstable();
            goal_states.dedup();
            Ok(Family { mdps, chain: None, goal_states, hidden: *hidden })
        }
        Environment::MultiGoal { width, height, true_best, other_best, failure_prob, gamma, goal_mode, hidden } => {
            let fam = multi_goal_family(*width, *height, *true_best, *other_best, *failure_prob, *gamma, *goal_mode)
                .map_err(cfg_err)?;
            let goal_states = fam.spec.goals.iter().map(|g| cell_index(*width, g.x, g.y)).collect();
            Ok(Family { mdps: fam.mdps, chain: None, goal_states, hidden: *hidden })
        }
        Environment::Objectworld { spec, num_tasks, chain, family_seed, hidden } => {
            let mut rng = stream(*family_seed, Stream::Environment);
            let (_, mdps) = build_objectworld_family(spec, *num_tasks, &mut rng).map_err(cfg_err)?;
            let chain = TaskChain::sparse_successor(*num_tasks, chain.next, chain.skip, chain.stay).map_err(cfg_err)?;
            Ok(Family { mdps, chain: Some(chain), goal_states: Vec::new(), hidden: *hidden })
        }
        Environment::SyntheticHmm { .. } => {
            Err(HarnessError::Config("the synthetic-hmm scenario has no MDP family".into()))
        }
    }
}

pub fn run_seed(base: u64, run: usize) -> u64 {
    derive_seed(base, run as u64)
}

/// Largest shortfall `max_s V*(s) − V^π(s)`.
pub fn value_shortfall(mdp: &TabularMdp, v_star: &ValueFunction, pi: &Policy) -> f64 {
    let v = policy_evaluation(mdp, pi, PLANNING_TOL);
    v.0.iter().zip(v_star.0.iter()).map(|(a, b)| b - a).fold(f64::NEG_INFINITY, f64::max)
}

/// Slack absorbing planning error in optimality checks.
pub fn planning_slack(v_star: &ValueFunction) -> f64 {
    4.0 * PLANNING_TOL * v_star.0.iter().fold(1.0f64, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PtumRunRecord {
    pub run: usize,
    pub seed: u64,
    pub hidden: usize,
    pub epsilon: f64,
    pub mode: &'static str,
    pub tau: u64,
    pub total_queries: u64,
    pub chosen: Option<usize>,
    pub eps_optimal: bool,
    pub shortfall: f64,
    pub true_survived: bool,
    pub survivors: usize,
    /// Share of queries on goal states whose reward differs among the
    /// models active when the query was made.
    pub informative_fraction: Option<f64>,
    #[serde(skip)]
    pub elapsed_s: f64,
}

fn informative_fraction(result: &PtumResult, approx: &ApproxModelSet, goal_states: &[usize]) -> Option<f64> {
    let log = result.query_log.as_ref()?;
    if log.is_empty() || goal_states.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    for &(t, s, a) in log {
        let active: Vec<usize> = (0..approx.len())
            .filter(|&i| !result.eliminations.iter().any(|e| e.t < t && e.label == approx.label(i)))
            .collect();
        let differs = active.windows(2).any(|w| approx.model(w[0]).q(s, a) != approx.model(w[1]).q(s, a));
        if differs && goal_states.contains(&s) {
            hits += 1;
        }
    }
    Some(hits as f64 / log.len() as f64)
}

fn ptum_params(p: &PtumSection, epsilon: f64) -> PtumParams {
    let mut params = PtumParams::new(epsilon, p.delta, p.budget);
    params.fallback_per_pair = p.fallback_per_pair;
    params.fallback_cap = p.fallback_cap;
    params.record_queries = p.record_queries;
    params
}

/// Identification sweep over `num_runs` seeds at accuracy `epsilon`.
pub fn ptum_sweep(cfg: &ExperimentConfig, family: &Family, epsilon: f64) -> Result<Vec<PtumRunRecord>, HarnessError> {
    let p = cfg.ptum_section()?;
    let k = family.mdps.len();
    let approx = ApproxModelSet::new(family.mdps.clone(), DeltaBounds::uniform(p.model_error))?;
    let optimal: Vec<ValueFunction> = family.mdps.iter().map(|m| value_iteration(m, PLANNING_TOL).0).collect();
    let params = ptum_params(p, epsilon);
    (0..cfg.num_runs)
        .into_par_iter()
        .map(|run| {
            let start = Instant::now();
            let seed = run_seed(cfg.base_seed, run);
            let hidden = family.hidden.unwrap_or(run % k);
            let mut g = GenerativeModel::new(family.mdps[hidden].clone(), stream(seed, Stream::Queries));
            let r = run_ptum(&approx, &mut g, &params)?;
            let shortfall = value_shortfall(&family.mdps[hidden], &optimal[hidden], &r.policy);
            Ok(PtumRunRecord {
                run,
                seed,
                hidden,
                epsilon,
                mode: r.mode.as_str(),
                tau: r.tau,
                total_queries: r.total_queries(),
                chosen: r.chosen,
                eps_optimal: shortfall <= epsilon + planning_slack(&optimal[hidden]),
                shortfall,
                true_survived: r.survived(hidden),
                survivors: r.survivors.len(),
                informative_fraction: informative_fraction(&r, &approx, &family.goal_states),
                elapsed_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Queries of uniform sampling at the accuracy of the `ptum` section,
/// capped by its budget as the fallback would be.
pub fn uniform_queries(p: &PtumSection, family: &Family) -> u64 {
    let m = &family.mdps[0];
    let sa = m.num_pairs();
    ptum_params(p, p.epsilon).fallback_count(sa, m.gamma(), None) * sa as u64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnoseRecord {
    pub target: usize,
    pub theta_eps_size: usize,
    /// Members of Θ_ε joined by `;`.
    pub theta_eps: String,
    pub bound: f64,
    pub gap: f64,
}

pub fn diagnose(cfg: &ExperimentConfig, family: &Family) -> Result<Vec<DiagnoseRecord>, HarnessError> {
    let p = cfg.ptum_section()?;
    let approx = ApproxModelSet::new(family.mdps.clone(), DeltaBounds::uniform(p.model_error))?;
    let values: Vec<ValueFunction> = family.mdps.iter().map(|m| value_iteration(m, PLANNING_TOL).0).collect();
    let targets: Vec<usize> = match family.hidden {
        Some(h) => vec![h],
        None => (0..family.mdps.len()).collect(),
    };
    targets
        .into_iter()
        .map(|target| {
            let (theta_eps, bound) = theta_eps_and_bound(&approx, target, p.epsilon, p.delta, p.budget)?;
            let gap = if family.mdps.len() > 1 { min_gap(&family.mdps, &values, target)? } else { f64::INFINITY };
            Ok(DiagnoseRecord {
                target,
                theta_eps_size: theta_eps.len(),
                theta_eps: theta_eps.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";"),
                bound,
                gap,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HmmRunRecord {
    pub triples: usize,
    pub run: usize,
    pub seed: u64,
    pub failed: bool,
    pub o_col_err_max: f64,
    pub t_err_max: f64,
}

pub fn hmm_sweep(cfg: &ExperimentConfig) -> Result<Vec<HmmRunRecord>, HarnessError> {
    let Environment::SyntheticHmm { k, blocks, draws_per_block, triples, model_seed, spectral } = &cfg.environment else {
        return Err(HarnessError::Config("learn-hmm needs the synthetic-hmm scenario".into()));
    };
    let hmm = SyntheticHmm::random(*k, blocks, *draws_per_block, &mut stream(*model_seed, Stream::Synthetic))
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let jobs: Vec<(usize, usize)> = triples.iter().flat_map(|&m| (0..cfg.num_runs).map(move |r| (m, r))).collect();
    jobs.into_par_iter()
        .map(|(m, run)| {
            let seed = run_seed(cfg.base_seed, run);
            let (_, obs) = hmm.sample(3 * m, &mut stream(derive_seed(seed, m as u64), Stream::Synthetic));
            let store = ObservationStore::from_observations(hmm.layout.dim(), &obs)?;
            let mut rng = stream(derive_seed(seed, m as u64), Stream::Tensor);
            let record = match learn_hmm(&store, *k, &hmm.layout, spectral, &mut rng) {
                Ok(est) => {
                    let perm = align_columns(&est.o, &hmm.o)?;
                    let t_err = (0..*k)
                        .flat_map(|i| (0..*k).map(move |j| (i, j)))
                        .map(|(i, j)| (est.t[(perm[i], perm[j])] - hmm.t[(i, j)]).abs())
                        .fold(0.0, f64::max);
                    HmmRunRecord {
                        triples: m,
                        run,
                        seed,
                        failed: false,
                        o_col_err_max: max_column_error(&est.o, &hmm.o)?,
                        t_err_max: t_err,
                    }
                }
                Err(Error::DegenerateMoments(_) | Error::RankDeficient { .. } | Error::DecompositionFailed(_)) => {
                    HmmRunRecord { triples: m, run, seed, failed: true, o_col_err_max: f64::NAN, t_err_max: f64::NAN }
                }
                Err(e) => return Err(e.into()),
            };
            Ok(record)
        })
        .collect()
}

/// One CSV row per task of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRow {
    pub run: usize,
    pub h: usize,
    pub true_task: usize,
    pub mode: &'static str,
    pub queries: u64,
    pub eps_optimal: bool,
    pub active_set_size: usize,
    pub delta_h: f64,
    pub o_col_err_max: f64,
    pub t_err_max: f64,
    pub post_queries: u64,
    pub true_in_active: bool,
    pub degraded: bool,
    pub oracle_queries: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub run: usize,
    pub seed: u64,
    pub trace: SequenceTrace,
    pub elapsed_s: f64,
}

impl SequenceRun {
    pub fn rows(&self) -> impl Iterator<Item = TaskRow> + '_ {
        self.trace.tasks.iter().map(|t| TaskRow {
            run: self.run,
            h: t.h,
            true_task: t.true_task,
            mode: t.mode.as_str(),
            queries: t.queries,
            eps_optimal: t.eps_optimal,
            active_set_size: t.active_set_size,
            delta_h: t.delta_h,
            o_col_err_max: t.o_col_err_max,
            t_err_max: t.t_err_max,
            post_queries: t.post_queries,
            true_in_active: t.true_in_active,
            degraded: t.degraded,
            oracle_queries: t.oracle_queries,
        })
    }

    /// Whether the hidden task was a candidate for every transfer task.
    pub fn always_covered(&self) -> bool {
        self.trace.transfer_tasks().all(|t| t.true_in_active)
    }

    /// Mean transfer-phase queries over those of identification with the
    /// exact models, when recorded.
    pub fn normalized_complexity(&self) -> Option<f64> {
        let (mut q, mut o) = (0u64, 0u64);
        for t in self.trace.transfer_tasks() {
            q += t.queries;
            o += t.oracle_queries?;
        }
        (o > 0).then(|| q as f64 / o as f64)
    }
}

pub fn sequential_config(cfg: &ExperimentConfig, static_transfer: bool) -> Result<SequentialConfig, HarnessError> {
    let mut s = cfg.sequential_section()?.clone();
    if static_transfer {
        s.pre_elimination = None;
    }
    Ok(s)
}

pub fn sequential_sweep(
    cfg: &ExperimentConfig,
    family: &Family,
    static_transfer: bool,
) -> Result<Vec<SequenceRun>, HarnessError> {
    let s = sequential_config(cfg, static_transfer)?;
    let chain = family
        .chain
        .as_ref()
        .ok_or_else(|| HarnessError::Config("run-sequential needs a scenario with a task chain".into()))?;
    (0..cfg.num_runs)
        .into_par_iter()
        .map(|run| {
            let start = Instant::now();
            let seed = run_seed(cfg.base_seed, run);
            let trace = run_sequential(&s, &family.mdps, chain, seed)?;
            Ok(SequenceRun { run, seed, trace, elapsed_s: start.elapsed().as_secs_f64() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RtpRecord {
    pub instance: usize,
    pub k: usize,
    pub found: usize,
    pub max_eigenvalue_err: f64,
    pub min_abs_cosine: f64,
}

/// Decomposes random orthogonally decomposable tensors of rank 2 to 4 and
/// scores each true pair against its best-matching recovered pair.
pub fn rtp_sweep(instances: usize, base_seed: u64) -> Result<Vec<RtpRecord>, HarnessError> {
    (0..instances)
        .into_par_iter()
        .map(|instance| {
            let seed = run_seed(base_seed, instance);
            let mut rng = stream(seed, Stream::Synthetic);
            let k = rng.random_range(2..=4);
            let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            let q = a.qr().q();
            let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
            let mut t = Tensor3::zeros(k);
            for (j, w) in weights.iter().enumerate() {
                let v: Vec<f64> = q.column(j).iter().copied().collect();
                t.add_outer(*w, &v, &v, &v);
            }
            let pairs = rtp_decompose(&t, k, &RtpParams::default(), &mut stream(seed, Stream::Tensor))?;
            let (mut max_err, mut min_cos) = (0.0f64, 1.0f64);
            for (j, w) in weights.iter().enumerate() {
                let (lambda, cos) = pairs
                    .iter()
                    .map(|(l, v)| (*l, q.column(j).dot(v).abs()))
                    .max_by(|x, y| x.1.total_cmp(&y.1))
                    .unwrap_or((f64::NAN, 0.0));
                max_err = max_err.max((lambda - w).abs());
                min_cos = min_cos.min(cos);
            }
            Ok(RtpRecord { instance, k, found: pairs.len(), max_eigenvalue_err: max_err, min_abs_cosine: min_cos })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRecord {
    pub pair: usize,
    pub state: usize,
    pub value_gap: f64,
    pub bound: f64,
}

/// Random 4-state MDP pairs and policies: observed value gap against the
/// simulation-lemma bound in every state.
pub fn simulation_sweep(pairs: usize, base_seed: u64) -> Result<Vec<SimulationRecord>, HarnessError> {
    let support = [0.0, 0.5, 1.0];
    let per_pair: Vec<Vec<SimulationRecord>> = (0..pairs)
        .into_par_iter()
        .map(|pair| {
            let mut rng = stream(run_seed(base_seed, pair), Stream::Synthetic);
            let gamma = rng.random_range(0.5..0.95);
            let a = random_mdp(4, 2, &support, gamma, &mut rng)?;
            let b = random_mdp(4, 2, &support, gamma, &mut rng)?;
            let pi = Policy::new((0..4).map(|_| rng.random_range(0..2)).collect());
            let va = policy_evaluation(&a, &pi, 1e-12);
            let vb = policy_evaluation(&b, &pi, 1e-12);
            (0..4)
                .map(|s| {
                    Ok(SimulationRecord {
                        pair,
                        state: s,
                        value_gap: (va.0[s] - vb.0[s]).abs(),
                        bound: simulation_gap_bound(&a, &b, &pi, s)?,
                    })
                })
                .collect::<Result<Vec<_>, HarnessError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(per_pair.into_iter().flatten().collect())
}
