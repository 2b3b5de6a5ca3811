//! The per-task transfer loop over a Markov chain of tasks.

mod config;
mod preelim;
mod run;

pub use config::{PreElimination, RhoDecay, SequentialConfig, SlackForm};
pub use preelim::{pre_eliminate, pre_elimination_slack};
pub use run::{collect_post_samples, run_sequential, SequenceTrace, TaskMode, TaskRecord};

#[cfg(test)]
mod tests {
    use super::config::test_config;
    use super::*;
    use crate::envs::{build_objectworld_family, GenerativeModel, ObjectworldSpec, TaskChain};
    use crate::mdp::TabularMdp;
    use crate::ptum::EmpiricalModel;
    use crate::rng::{stream, Stream};
    use crate::spectral::SpectralParams;

    fn small_family(k: usize, seed: u64) -> Vec<TabularMdp> {
        let spec = ObjectworldSpec { side: 3, ..ObjectworldSpec::default() };
        build_objectworld_family(&spec, k, &mut stream(seed, Stream::Environment)).unwrap().1
    }

    #[test]
    fn post_sampling_counts() {
        let fam = small_family(2, 1);
        let mut g = GenerativeModel::new(fam[0].clone(), stream(1, Stream::Queries));
        let mut emp = EmpiricalModel::new(9, 4, fam[0].reward_support());
        assert_eq!(collect_post_samples(&mut g, &mut emp, 1).unwrap(), 36);
        assert_eq!(collect_post_samples(&mut g, &mut emp, 1).unwrap(), 0);
        assert_eq!(collect_post_samples(&mut g, &mut emp, 3).unwrap(), 72);
        assert!(collect_post_samples(&mut g, &mut emp, 0).is_err());
    }

    #[test]
    fn singleton_family_stops_immediately() {
        let fam = small_family(2, 2);
        let mut cfg = test_config();
        cfg.num_tasks = 12;
        cfg.startup_tasks = 6;
        cfg.rho = crate::spectral::RhoConstants::uniform(0.0);
        let trace = run_sequential(&cfg, &fam[..1], &TaskChain::identity(1).unwrap(), 3).unwrap();
        for r in trace.transfer_tasks() {
            assert_eq!(r.mode, TaskMode::TransferStopped);
            assert_eq!(r.queries, 0);
            assert!(r.eps_optimal);
        }
        assert_eq!(trace.transfer_tasks().count(), 6);
    }

    fn chain_run(pre: bool, seed: u64) -> (Vec<TabularMdp>, SequenceTrace) {
        let fam = small_family(4, 5);
        let chain = TaskChain::sparse_successor(4, 0.97, 0.015, 0.015).unwrap();
        let mut cfg = test_config();
        cfg.num_tasks = 60;
        cfg.startup_tasks = 45;
        cfg.spectral = SpectralParams { rtp: crate::spectral::RtpParams { restarts: 20, ..Default::default() }, ..Default::default() };
        cfg.oracle_normalization = true;
        if pre {
            cfg.pre_elimination = Some(PreElimination { eta: 0.087, rho_t: 0.001, keep_top: 1, slack: SlackForm::Theorem });
        }
        let trace = run_sequential(&cfg, &fam, &chain, seed).unwrap();
        (fam, trace)
    }

    #[test]
    fn sequential_loop_on_small_chain() {
        let (_, trace) = chain_run(true, 7);
        assert_eq!(trace.tasks.len(), 60);
        assert!(trace.tasks[..45].iter().all(|r| r.mode == TaskMode::Startup && r.queries == 36 * 50));
        let transfer: Vec<_> = trace.transfer_tasks().collect();
        assert!(transfer.iter().all(|r| r.o_col_err_max < 0.2 && r.oracle_queries.is_some()));
        assert!(transfer.iter().any(|r| r.mode == TaskMode::TransferStopped));
        assert!(transfer.iter().all(|r| r.true_in_active));
        assert!(transfer.iter().any(|r| r.active_set_size < 4));
        assert!(trace.eps_optimal_fraction() > 0.9);
        for w in transfer.windows(2) {
            assert!(w[1].delta_h <= w[0].delta_h);
        }
    }

    #[test]
    fn static_variant_is_deterministic_and_paired() {
        let (_, a) = chain_run(false, 9);
        let (_, b) = chain_run(false, 9);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert!(a.tasks.iter().all(|r| r.active_set_size == 4));
        let (_, c) = chain_run(true, 9);
        let tasks = |t: &SequenceTrace| t.tasks.iter().map(|r| r.true_task).collect::<Vec<_>>();
        assert_eq!(tasks(&a), tasks(&c));
    }

    #[test]
    fn mismatched_chain_is_rejected() {
        let fam = small_family(2, 3);
        assert!(run_sequential(&test_config(), &fam, &TaskChain::identity(3).unwrap(), 1).is_err());
    }
}
