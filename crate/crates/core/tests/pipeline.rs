use proptest::prelude::*;
use seqtransfer::envs::{two_rooms_family, GenerativeModel, TaskChain, TwoRoomsLayout};
use seqtransfer::mdp::{policy_evaluation, random_mdp, simulation_gap_bound, value_iteration, Policy};
use seqtransfer::ptum::{run_ptum, ApproxModelSet, DeltaBounds, PtumMode, PtumParams, PLANNING_TOL};
use seqtransfer::rng::{derive_seed, stream, stream_id, Stream};
use seqtransfer::sequential::{run_sequential, SequentialConfig};
use seqtransfer::spectral::{
    align_columns, learn_hmm, max_column_error, models_matrix, unpack_models, vectorize_mdp, BlockLayout,
    ObservationStore, RhoConstants, SpectralParams,
};

#[test]
fn identification_on_a_small_two_rooms_family() {
    let (_, mdps) = two_rooms_family(8, 8, 6, TwoRoomsLayout::GoalsAndDoors, 0.1, 0.95).unwrap();
    let approx = ApproxModelSet::new(mdps.clone(), DeltaBounds::default()).unwrap();
    let params = PtumParams::new(0.2, 0.05, 50_000);
    for hidden in 0..mdps.len() {
        let mut g = GenerativeModel::new(mdps[hidden].clone(), stream(derive_seed(1, hidden as u64), Stream::Queries));
        let r = run_ptum(&approx, &mut g, &params).unwrap();
        assert_eq!(r.mode, PtumMode::TransferStopped);
        assert!(r.survived(hidden));
        let v_star = value_iteration(&mdps[hidden], PLANNING_TOL).0;
        let v = policy_evaluation(&mdps[hidden], &r.policy, PLANNING_TOL);
        assert!(v.0.iter().zip(&v_star.0).all(|(a, b)| *a >= b - 0.2 - 1e-6));
        assert_eq!(g.queries(), r.total_queries());
    }
}

#[test]
fn spectral_estimation_recovers_exact_task_models() {
    let mut rng = stream(5, Stream::Environment);
    let support = [0.0, 1.0];
    let family: Vec<_> = (0..3).map(|_| random_mdp(3, 2, &support, 0.9, &mut rng).unwrap()).collect();
    let chain = TaskChain::sparse_successor(3, 0.8, 0.1, 0.1).unwrap();
    let layout = BlockLayout::mdp(3, 2, support.len()).unwrap();
    let mut store = ObservationStore::new(layout.dim());
    let mut chain_rng = stream(5, Stream::TaskChain);
    let mut task = chain.sample_initial(&mut chain_rng);
    for _ in 0..6000 {
        store.push(&vectorize_mdp(&family[task])).unwrap();
        task = chain.sample_next(task, &mut chain_rng);
    }
    let est = learn_hmm(&store, 3, &layout, &SpectralParams::default(), &mut stream(5, Stream::Tensor)).unwrap();
    let truth = models_matrix(&family);
    assert!(max_column_error(&est.o, &truth).unwrap() < 0.05);
    let perm = align_columns(&est.o, &truth).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((est.t[(perm[i], perm[j])] - chain.entry(i, j)).abs() < 0.05);
        }
    }
    let models = unpack_models(&est.o, 3, 2, &support, 0.9).unwrap();
    assert_eq!(models.len(), 3);
    for m in &models {
        for s in 0..3 {
            for a in 0..2 {
                assert!((m.p(s, a).iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(m.q(s, a).iter().all(|&x| x >= 0.0));
            }
        }
    }
}

#[test]
fn sequence_is_reproducible_and_complete() {
    let (_, mdps) = two_rooms_family(5, 4, 3, TwoRoomsLayout::DoorsOnly, 0.1, 0.9).unwrap();
    let chain = TaskChain::sparse_successor(3, 0.9, 0.05, 0.05).unwrap();
    let cfg = SequentialConfig {
        num_tasks: 15,
        epsilon: 0.5,
        delta: 0.05,
        delta_prime: 0.1,
        budget: 5000,
        rho: RhoConstants::uniform(0.01),
        rho_decay: None,
        startup_tasks: 10,
        startup_per_pair: 10,
        post_per_pair: 5,
        fallback_per_pair: None,
        pre_elimination: None,
        spectral: SpectralParams::default(),
        refit_during_startup: false,
        oracle_normalization: true,
        strict_preconditions: false,
    };
    let a = run_sequential(&cfg, &mdps, &chain, 3).unwrap();
    let b = run_sequential(&cfg, &mdps, &chain, 3).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    assert_eq!(a.tasks.len(), 15);
    assert_eq!(a.transfer_tasks().count(), 5);
    assert!(a.transfer_tasks().all(|t| t.oracle_queries.is_some()));
    assert!(a.tasks.iter().take(10).all(|t| t.queries == 20 * 4 * 10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulation_bound_holds(seed in any::<u64>()) {
        let mut rng = stream_id(seed, 0);
        let a = random_mdp(4, 2, &[0.0, 0.5, 1.0], 0.8, &mut rng).unwrap();
        let b = random_mdp(4, 2, &[0.0, 0.5, 1.0], 0.8, &mut rng).unwrap();
        let pi = Policy::new(vec![(seed % 2) as usize, 1, 0, ((seed >> 1) % 2) as usize]);
        let va = policy_evaluation(&a, &pi, 1e-12);
        let vb = policy_evaluation(&b, &pi, 1e-12);
        for s in 0..4 {
            prop_assert!((va.0[s] - vb.0[s]).abs() <= simulation_gap_bound(&a, &b, &pi, s).unwrap() + 1e-6);
        }
    }
}
