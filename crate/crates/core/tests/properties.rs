use ldprlhf::instances::{
    concentrability, hard_instance, random_instance, random_policy, HardInstanceSpec,
};
use ldprlhf::model::{expected_kl, gibbs_policy, objective_j, suboptimality};
use ldprlhf::offline::{d_divergence_table, private_log_likelihoods, private_mle};
use ldprlhf::online::{pokl_run, OnlineParams};
use ldprlhf::privacy::{
    debiased_mean, private_label_prob, private_label_prob_from_gap, Label, PrivacyParams, RrChannel,
};
use ldprlhf::rng::Stream;
use ldprlhf::sample::{PairCounts, PrivateSample};
use ldprlhf::table::{Grid, PolicyTable};
use proptest::prelude::*;
use rand::Rng;

fn sigma(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn samples(states: usize, actions: usize, n: usize, seed: u64) -> Vec<PrivateSample> {
    let mut rng = Stream::new(seed).rng();
    (0..n)
        .map(|_| PrivateSample {
            s: rng.gen_range(0..states),
            a1: rng.gen_range(0..actions),
            a2: rng.gen_range(0..actions),
            z: Label::from_bool(rng.gen()),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rr_ratio_is_exactly_e_eps(eps in 0.01f64..6.0) {
        let ch = RrChannel::from_params(&PrivacyParams::new(eps).unwrap());
        let mut worst = 0.0f64;
        for z in [Label::Plus, Label::Minus] {
            for y in [Label::Plus, Label::Minus] {
                worst = worst.max(ch.prob(z, y) / ch.prob(z, -y));
            }
        }
        prop_assert!((worst - eps.exp()).abs() <= 1e-12 * eps.exp());
        prop_assert!((ch.worst_case_ratio() - eps.exp()).abs() <= 1e-12 * eps.exp());
    }

    #[test]
    fn private_label_prob_mixes_the_two_sides(
        eps in 0.01f64..6.0, r1 in 0.0f64..2.0, r2 in 0.0f64..2.0, plus in any::<bool>()
    ) {
        let alpha = PrivacyParams::new(eps).unwrap().alpha();
        let r = ldprlhf::table::RewardTable::from_rows(&[vec![r1, r2]], 2.0).unwrap();
        let z = Label::from_bool(plus);
        let p_same = if plus { sigma(r1 - r2) } else { sigma(r2 - r1) };
        let want = alpha * p_same + (1.0 - alpha) * (1.0 - p_same);
        let got = private_label_prob(&r, z, 0, 0, 1, alpha).unwrap();
        prop_assert!((got - want).abs() <= 1e-15);
        let mean = private_label_prob_from_gap(Label::Plus, r1 - r2, alpha)
            - private_label_prob_from_gap(Label::Minus, r1 - r2, alpha);
        prop_assert!((debiased_mean(alpha, r1 - r2) - mean).abs() <= 1e-15);
    }

    #[test]
    fn gibbs_is_optimal_and_gap_is_kl(
        seed in any::<u64>(), states in 1usize..5, actions in 2usize..5, beta in 0.2f64..4.0
    ) {
        let inst = random_instance(states, actions, 1, 2.0, beta, &Stream::new(seed)).unwrap();
        let mut rng = Stream::new(seed).split(1).rng();
        let j_star = objective_j(inst.pi_star(), &inst).unwrap();
        for _ in 0..20 {
            let pi = random_policy(&mut rng, states, actions).unwrap();
            prop_assert!(objective_j(&pi, &inst).unwrap() <= j_star + 1e-12);
            let gap = suboptimality(&pi, &inst).unwrap();
            let kl = expected_kl(&pi, inst.pi_star(), inst.d0()) / beta;
            prop_assert!((gap - kl).abs() < 1e-9);
        }
    }

    #[test]
    fn state_bias_leaves_gibbs_unchanged(
        seed in any::<u64>(), states in 1usize..6, actions in 2usize..6, beta in 0.1f64..5.0
    ) {
        let bound = 2.0;
        let mut rng = Stream::new(seed).rng();
        let r = Grid::from_fn(states, actions, |_, _| rng.gen_range(0.0..bound));
        let b: Vec<f64> = (0..states).map(|_| rng.gen_range(-bound..bound)).collect();
        let shifted = Grid::from_fn(states, actions, |s, a| r.get(s, a) - b[s]);
        let pi_ref = random_policy(&mut rng, states, actions).unwrap();
        let p = gibbs_policy(&r, &pi_ref, beta).unwrap();
        let q = gibbs_policy(&shifted, &pi_ref, beta).unwrap();
        for (x, y) in p.values().iter().zip(q.values()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn mle_dominates_every_member(seed in any::<u64>(), n in 0usize..300, eps in 0.1f64..3.0) {
        let inst = random_instance(2, 3, 6, 1.0, 1.0, &Stream::new(seed)).unwrap();
        let alpha = PrivacyParams::new(eps).unwrap().alpha();
        let data = samples(2, 3, n, seed ^ 1);
        let (idx, _) = private_mle(inst.fclass(), &data, alpha).unwrap();
        let counts = PairCounts::from_samples(2, 3, &data).unwrap();
        let ll = private_log_likelihoods(inst.fclass(), &counts, alpha);
        // re-evaluate sample by sample
        for (k, r) in inst.fclass().members().iter().enumerate() {
            let direct: f64 = data
                .iter()
                .map(|x| private_label_prob(r, x.z, x.s, x.a1, x.a2, alpha).unwrap().ln())
                .sum();
            prop_assert!((direct - ll[k]).abs() <= 1e-9 * (1.0 + direct.abs()));
            prop_assert!(ll[idx] >= ll[k]);
        }
    }

    #[test]
    fn divergence_is_nonnegative(seed in any::<u64>()) {
        let inst = random_instance(3, 3, 4, 1.0, 1.0, &Stream::new(seed)).unwrap();
        let d = d_divergence_table(inst.fclass(), inst.pi_ref(), inst.d0());
        prop_assert!(d.values().iter().all(|&v| v >= 0.0));
        let single = random_instance(3, 3, 1, 1.0, 1.0, &Stream::new(seed)).unwrap();
        let d = d_divergence_table(single.fclass(), single.pi_ref(), single.d0());
        prop_assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gap_distance_is_a_squared_metric(seed in any::<u64>(), n in 0usize..200) {
        let inst = random_instance(2, 3, 3, 1.0, 1.0, &Stream::new(seed)).unwrap();
        let data = samples(2, 3, n, seed);
        let counts = PairCounts::from_samples(2, 3, &data).unwrap();
        prop_assert_eq!(counts.total(), n as u64);
        let (f, g) = (inst.fclass().get(0).grid(), inst.fclass().get(1).grid());
        let d = counts.squared_gap_distance(f, g);
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, counts.squared_gap_distance(g, f));
        prop_assert_eq!(counts.squared_gap_distance(f, f), 0.0);
    }

    #[test]
    fn hard_instance_orientation(
        signs in proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 1..7),
        c in 2.0f64..8.0, beta in 0.5f64..2.0, frac in 0.05f64..0.95,
    ) {
        let bound = 2.0;
        let mut spec = HardInstanceSpec::new(signs.len(), c, frac * bound / 2.0, beta, bound);
        spec.shift_into_range = true;
        spec.signs = signs.clone();
        // after the shift the larger reward is b + a, which must stay within B
        prop_assume!(spec.bias() + spec.gap <= bound);
        let inst = hard_instance(&spec).unwrap();
        prop_assert!(concentrability(inst.pi_star(), inst.pi_ref()) <= c * (1.0 + 1e-12));
        spec.signs = signs.iter().map(|v| -v).collect();
        let flipped = hard_instance(&spec).unwrap();
        for (s, &v) in signs.iter().enumerate() {
            let p = inst.pi_star().get(s, 0);
            let q = flipped.pi_star().get(s, 0);
            // action -1 is favored exactly when v_s = +1
            prop_assert_eq!(p > 0.5, v == 1);
            prop_assert_eq!(q > 0.5, v == -1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn online_trace_contracts(seed in any::<u64>(), eps in 0.5f64..3.0, scale in 0.05f64..1.0) {
        let inst = hard_instance(&HardInstanceSpec::new(3, 2.5, 0.3, 1.0, 2.0)).unwrap();
        let pp = PrivacyParams::new(eps).unwrap();
        let params = OnlineParams { horizon: 150, gamma_scale: scale, ..OnlineParams::default() };
        let trace = pokl_run(&inst, &pp, &params, &Stream::new(seed)).unwrap();
        let again = pokl_run(&inst, &pp, &params, &Stream::new(seed)).unwrap();
        prop_assert_eq!(&trace, &again);
        prop_assert!(trace.steps.windows(2).all(|w| w[1].fset_size <= w[0].fset_size));
        prop_assert!(trace.steps.iter().all(|s| (0.0..=1.0).contains(&s.bonus_max)
            && s.bonus_mean >= 0.0 && s.regret_pi2 >= -1e-12 && s.fset_size >= 1));
        let cum = trace.cumulative_regret();
        prop_assert!(cum.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn policies_stay_stochastic(seed in any::<u64>(), states in 1usize..5, actions in 1usize..6) {
        let pi = random_policy(&mut Stream::new(seed).rng(), states, actions).unwrap();
        let again = PolicyTable::from_rows(&pi.to_rows()).unwrap();
        prop_assert_eq!(&pi, &again);
        prop_assert!(pi.is_strictly_positive());
    }
}
