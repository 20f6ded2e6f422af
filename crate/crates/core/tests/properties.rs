use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sbcm::estimators::{estimate_epsilon_from_distances, EpsilonOptions};
use sbcm::likelihood::{score_epsilon, DistanceSequence};
use sbcm::model::{sigmoid, ModelParams, OpinionState, OutcomeTrace};
use sbcm::rasch::{analytic_bias, analytic_variance, fisher_information, KappaSequence};
use sbcm::simulator::{replay, simulate, step, InitialState, SimulationConfig, StateStorage};

fn config(n: usize, t: usize, eps: f64, mu: f64, rho: f64, seed: u64) -> SimulationConfig {
    SimulationConfig {
        num_agents: n,
        num_steps: t,
        params: ModelParams::new(eps, mu, rho).unwrap(),
        initial_state: InitialState::Uniform,
        seed,
    }
}

fn root(d: &[f64], o: &[bool], rho: f64) -> Option<f64> {
    let d = DistanceSequence::new(d.to_vec()).unwrap();
    let o = OutcomeTrace::new(o.to_vec());
    let r = estimate_epsilon_from_distances(&d, &o, rho, &EpsilonOptions::default()).unwrap();
    r.root
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 200,
        rng_seed: RngSeed::Fixed(0x5bc3),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn sigmoid_is_monotone(a in -5.0f64..5.0, b in -5.0f64..5.0, rho in 0.1f64..1e4) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(sigmoid(lo, rho).unwrap() <= sigmoid(hi, rho).unwrap());
    }

    #[test]
    fn step_conserves_mean_and_contracts(
        xs in prop::collection::vec(-1.0f64..=1.0, 2..20),
        mu in 0.0f64..=0.5,
        eps in 0.0f64..=2.0,
        seed in any::<u64>(),
        pick in any::<(usize, usize)>(),
    ) {
        let n = xs.len();
        let i = pick.0 % n;
        let j = (i + 1 + pick.1 % (n - 1)) % n;
        let (i, j) = (i.min(j), i.max(j));
        let mut state = OpinionState::new(xs.clone()).unwrap();
        let params = ModelParams::new(eps, mu, 30.0).unwrap();
        let before = (xs[i] - xs[j]).abs();
        let success = step(&mut state, (i, j), &params, &mut ChaCha8Rng::seed_from_u64(seed));
        let after = (state.opinions[i] - state.opinions[j]).abs();
        prop_assert!((xs[i] + xs[j] - state.opinions[i] - state.opinions[j]).abs() < 1e-15);
        prop_assert!(after <= before + 1e-15);
        if success {
            prop_assert!((after - (1.0 - 2.0 * mu) * before).abs() < 1e-14);
        } else {
            prop_assert_eq!(&state.opinions, &xs);
        }
        prop_assert!(state.opinions.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn replay_reproduces_simulation(
        n in 2usize..30,
        t in 1usize..300,
        eps in 0.0f64..=2.0,
        mu in 0.0f64..=0.5,
        rho in 1.0f64..200.0,
        seed in any::<u64>(),
    ) {
        let trace = simulate(&config(n, t, eps, mu, rho, seed)).unwrap();
        let again = replay(&trace.x0, &trace.schedule, &trace.outcomes, mu, StateStorage::Dense).unwrap();
        prop_assert_eq!(again, trace.trajectory);
    }

    #[test]
    fn epsilon_root_ignores_order(
        pairs in prop::collection::vec((0.0f64..=2.0, any::<bool>()), 2..60),
        rho in 1.0f64..100.0,
        shift in any::<usize>(),
    ) {
        let m = pairs.iter().filter(|p| p.1).count();
        prop_assume!(m > 0 && m < pairs.len());
        let (d, o): (Vec<f64>, Vec<bool>) = pairs.iter().copied().unzip();
        let mut rotated = pairs.clone();
        rotated.rotate_left(shift % pairs.len());
        rotated.reverse();
        let (d2, o2): (Vec<f64>, Vec<bool>) = rotated.into_iter().unzip();
        let b = root(&d2, &o2, rho).unwrap();
        let s = score_epsilon(b, &DistanceSequence::new(d).unwrap(), &OutcomeTrace::new(o), rho);
        prop_assert!(s.abs() <= 1e-8, "score {}", s);
    }

    #[test]
    fn epsilon_root_depends_on_outcomes_only_through_m(
        d in prop::collection::vec(0.0f64..=2.0, 3..60),
        m_frac in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let t = d.len();
        let m = ((t as f64 * m_frac) as usize).clamp(1, t - 1);
        let first: Vec<bool> = (0..t).map(|i| i < m).collect();
        let mut second = first.clone();
        use rand::seq::SliceRandom;
        second.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = root(&d, &second, 40.0).unwrap();
        // The root for one arrangement solves the score equation of the other.
        let dist = DistanceSequence::new(d.clone()).unwrap();
        let s = score_epsilon(b, &dist, &OutcomeTrace::new(first), 40.0);
        prop_assert!(s.abs() <= 1e-8, "score {}", s);
    }

    #[test]
    fn bias_is_antisymmetric_under_complement(
        kappas in prop::collection::vec(1e-6f64..(1.0 - 1e-6), 1..200),
        rho in 0.5f64..1e3,
    ) {
        let seq = KappaSequence::from_kappas(&kappas).unwrap();
        let a = analytic_bias(&seq, rho).unwrap();
        let b = analytic_bias(&seq.complement(), rho).unwrap();
        prop_assert!((a + b).abs() <= 1e-12 * a.abs().max(1e-300));
    }

    #[test]
    fn variance_is_inverse_information(
        kappas in prop::collection::vec(1e-6f64..(1.0 - 1e-6), 1..200),
        rho in 0.5f64..1e3,
    ) {
        let seq = KappaSequence::from_kappas(&kappas).unwrap();
        let product = analytic_variance(&seq, rho).unwrap() * fisher_information(&seq, rho).unwrap();
        prop_assert!((product - 1.0).abs() < 1e-14);
    }
}
