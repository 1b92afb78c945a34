//! Closed-form checks written out by hand for small instances.

use approx::{assert_abs_diff_eq, assert_relative_eq};
use ldprlhf::instance::Instance;
use ldprlhf::instances::{
    concentrability, hard_instance, offline_dataset_gen_raw, theory_gap, HardInstanceSpec,
    ACTION_MINUS,
};
use ldprlhf::model::{gibbs_policy, objective_j, suboptimality};
use ldprlhf::offline::{d_divergence_sq, ppkl_run_with_multiplier, private_mle, OfflineParams};
use ldprlhf::online::{
    confidence_set, gamma_t, pokl_run, private_least_squares, uncertainty, write_trace_csv,
    OnlineParams, TRACE_COLUMNS,
};
use ldprlhf::privacy::{Label, PrivacyParams};
use ldprlhf::rng::Stream;
use ldprlhf::sample::{load_dataset, save_dataset, DatasetHeader, PrivateSample};
use ldprlhf::table::{FunctionClass, PolicyTable, RewardTable, StateDistribution};

fn sigma(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn one_state(r: [f64; 2], class: Vec<[f64; 2]>, p_ref: f64, beta: f64) -> Instance {
    let t = |v: [f64; 2]| RewardTable::from_rows(&[v.to_vec()], 2.0).unwrap();
    Instance::new(
        StateDistribution::uniform(1),
        PolicyTable::from_rows(&[vec![p_ref, 1.0 - p_ref]]).unwrap(),
        t(r),
        FunctionClass::new(class.into_iter().map(t).collect()).unwrap(),
        beta,
    )
    .unwrap()
}

#[test]
fn two_action_objective() {
    // J(pi) = sum_a pi(a) r(a) - KL(pi || pi_ref) / beta
    let inst = one_state([1.0, 0.0], vec![[1.0, 0.0]], 0.5, 2.0);
    let pi = PolicyTable::from_rows(&[vec![0.8, 0.2]]).unwrap();
    let kl = 0.8 * (0.8f64 / 0.5).ln() + 0.2 * (0.2f64 / 0.5).ln();
    assert_abs_diff_eq!(
        objective_j(&pi, &inst).unwrap(),
        0.8 - kl / 2.0,
        epsilon = 1e-15
    );

    // pi*(0) = e^2 / (e^2 + 1) and J(pi*) = log E_ref[e^{beta r}] / beta
    let p = 2f64.exp() / (2f64.exp() + 1.0);
    assert_abs_diff_eq!(inst.pi_star().get(0, 0), p, epsilon = 1e-15);
    let j_star = (0.5 * 2f64.exp() + 0.5).ln() / 2.0;
    assert_abs_diff_eq!(inst.optimal_value(), j_star, epsilon = 1e-15);
    assert_abs_diff_eq!(
        suboptimality(&pi, &inst).unwrap(),
        j_star - (0.8 - kl / 2.0),
        epsilon = 1e-15
    );
}

#[test]
fn hard_instance_matches_closed_form() {
    for (c, beta, shift) in [(2.5, 1.0, false), (4.0, 1.0, true), (3.0, 2.0, true)] {
        let gap = theory_gap(4, c, 1.0, 4096);
        let mut spec = HardInstanceSpec::new(4, c, gap, beta, 2.0);
        spec.shift_into_range = shift;
        let inst = hard_instance(&spec).unwrap();
        assert_eq!(inst.fclass().len(), 16);
        let b = (c - 1.0).ln() / beta;
        for s in 0..4 {
            let v = f64::from(spec.signs[s]);
            let e = (beta * (b + v * gap)).exp();
            let want = e / (e + c - 1.0);
            assert_abs_diff_eq!(inst.pi_star().get(s, ACTION_MINUS), want, epsilon = 1e-12);
            assert_abs_diff_eq!(
                spec.optimal_minus_prob(spec.signs[s]),
                want,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(inst.pi_ref().get(s, ACTION_MINUS), 1.0 / c, epsilon = 1e-15);
            // gap between the two actions is b + v a, independent of the shift
            assert_abs_diff_eq!(inst.r_star().gap(s, 0, 1), b + v * gap, epsilon = 1e-12);
        }
        assert!(concentrability(inst.pi_star(), inst.pi_ref()) <= c);
    }
}

#[test]
fn flipping_a_sign_moves_the_optimal_policy() {
    let gap = 0.3;
    let spec = HardInstanceSpec::new(4, 2.5, gap, 1.0, 2.0);
    let base = hard_instance(&spec).unwrap();
    let mut flipped = spec.clone();
    flipped.signs[2] = -flipped.signs[2];
    let other = hard_instance(&flipped).unwrap();
    for s in 0..4 {
        let (p, q) = (base.pi_star().get(s, 0), other.pi_star().get(s, 0));
        if s == 2 {
            assert!((p - q).abs() > 0.05);
        } else {
            assert_eq!(p, q);
        }
    }
    // Playing the other instance's optimum costs a strictly positive amount.
    assert!(suboptimality(other.pi_star(), &base).unwrap() > 1e-4);
}

#[test]
fn two_action_divergence() {
    // With pi = (p, 1-p) and one pair, D^2 at action 0 is (1-p)/p.
    let inst = one_state([1.0, 0.0], vec![[1.0, 0.0], [0.2, 0.9]], 0.25, 1.0);
    let d0 = d_divergence_sq(inst.fclass(), 0, 0, inst.pi_ref(), inst.d0()).unwrap();
    let d1 = d_divergence_sq(inst.fclass(), 0, 1, inst.pi_ref(), inst.d0()).unwrap();
    assert_relative_eq!(d0, 3.0, max_relative = 1e-12);
    assert_relative_eq!(d1, 1.0 / 3.0, max_relative = 1e-12);
}

#[test]
fn population_likelihood_prefers_truth() {
    // Expected log-likelihood per comparison, by hand, for three candidates.
    let alpha = PrivacyParams::new(1.0).unwrap().alpha();
    let truth = 0.8;
    let p = alpha * sigma(truth) + (1.0 - alpha) * sigma(-truth);
    let ll = |g: f64| {
        let q = alpha * sigma(g) + (1.0 - alpha) * sigma(-g);
        p * q.ln() + (1.0 - p) * (1.0 - q).ln()
    };
    assert!(ll(truth) > ll(0.3) && ll(truth) > ll(1.6));

    let inst = one_state(
        [1.3, 0.5],
        vec![[1.0, 0.7], [1.3, 0.5], [1.6, 0.0]],
        0.5,
        1.0,
    );
    let pp = PrivacyParams::new(1.0).unwrap();
    let data: Vec<PrivateSample> =
        ldprlhf::instances::offline_dataset_gen(&inst, 200_000, &pp, &Stream::new(5));
    assert_eq!(private_mle(inst.fclass(), &data, alpha).unwrap().0, 1);
    assert_eq!(
        private_least_squares(inst.fclass(), &data, alpha)
            .unwrap()
            .0,
        1
    );
}

#[test]
fn uncertainty_by_hand() {
    let inst = one_state([1.0, 0.0], vec![[1.0, 0.0], [0.0, 1.0]], 0.5, 1.0);
    let data = vec![
        PrivateSample {
            s: 0,
            a1: 0,
            a2: 1,
            z: Label::Plus,
        },
        PrivateSample {
            s: 0,
            a1: 1,
            a2: 0,
            z: Label::Minus,
        },
        PrivateSample {
            s: 0,
            a1: 0,
            a2: 0,
            z: Label::Plus,
        },
    ];
    // Member gaps differ by 2 on each ordered distinct pair, 0 on ties.
    let dist = 4.0 + 4.0;
    let lambda = 0.5;
    let pi = PolicyTable::from_rows(&[vec![0.75, 0.25]]).unwrap();
    // diff = (1, -1), mean under pi = 0.5
    let u0 = uncertainty(&[0, 1], inst.fclass(), lambda, 0, 0, &data, &pi).unwrap();
    let u1 = uncertainty(&[0, 1], inst.fclass(), lambda, 0, 1, &data, &pi).unwrap();
    assert_abs_diff_eq!(u0, 0.5 / (lambda + dist).sqrt(), epsilon = 1e-15);
    assert_abs_diff_eq!(u1, 1.5 / (lambda + dist).sqrt(), epsilon = 1e-15);
    assert_eq!(
        uncertainty(&[0], inst.fclass(), lambda, 0, 1, &data, &pi).unwrap(),
        0.0
    );

    // Member 1 sits at squared distance 8 from member 0.
    let r_bar = inst.fclass().get(0).grid().clone();
    assert_eq!(
        confidence_set(inst.fclass(), &r_bar, &data, 1.0, 3.0).unwrap(),
        vec![0, 1]
    );
    assert_eq!(
        confidence_set(inst.fclass(), &r_bar, &data, 1.0, 2.9).unwrap(),
        vec![0]
    );
}

#[test]
fn gamma_grows_with_horizon_and_shrinks_with_epsilon() {
    let a = |eps: f64| PrivacyParams::new(eps).unwrap().alpha();
    let g = |t, eps| gamma_t(2.0, t, 16, 0.1, a(eps), 1.0).unwrap();
    assert!(g(100, 1.0) < g(1000, 1.0));
    assert!(g(1000, 2.0) < g(1000, 1.0));
    let want = 4.0 * ((-2f64).exp() + 2.0 + 2f64.exp()) * (1000.0f64 * 16.0 / 0.1).ln().sqrt()
        / (2.0 * a(1.0) - 1.0);
    assert_relative_eq!(g(1000, 1.0), want, max_relative = 1e-14);
}

#[test]
fn dataset_labels_follow_the_channel() {
    let inst = one_state([1.5, 0.5], vec![[1.5, 0.5]], 0.5, 1.0);
    let pp = PrivacyParams::new(0.5).unwrap();
    let alpha = pp.alpha();
    let data = offline_dataset_gen_raw(&inst, 400_000, &pp, &Stream::new(9));
    let (mut n, mut plus_y, mut plus_z) = (0.0, 0.0, 0.0);
    for (raw, private) in &data {
        if raw.a1 == 0 && raw.a2 == 1 {
            n += 1.0;
            plus_y += f64::from(raw.y == Label::Plus);
            plus_z += f64::from(private.z == Label::Plus);
        }
    }
    let py = sigma(1.0);
    let pz = alpha * py + (1.0 - alpha) * (1.0 - py);
    let se = |p: f64| (p * (1.0 - p) / n).sqrt();
    assert!((plus_y / n - py).abs() < 4.0 * se(py));
    assert!((plus_z / n - pz).abs() < 4.0 * se(pz));
    assert!((n / data.len() as f64 - 0.25).abs() < 0.01);
}

#[test]
fn offline_output_is_gibbs_of_the_penalized_estimate() {
    let inst = hard_instance(&HardInstanceSpec::new(3, 2.5, 0.2, 1.0, 2.0)).unwrap();
    let pp = PrivacyParams::new(1.0).unwrap();
    let data = ldprlhf::instances::offline_dataset_gen(&inst, 2000, &pp, &Stream::new(1));
    let res = ppkl_run_with_multiplier(&inst, &data, &pp, &OfflineParams::default(), 1.0).unwrap();
    let want = gibbs_policy(&res.r_hat, inst.pi_ref(), 1.0).unwrap();
    assert_eq!(res.pi_hat, want);
    for ((r, g), h) in res
        .r_bar
        .values()
        .iter()
        .zip(res.gamma.values())
        .zip(res.r_hat.values())
    {
        assert!(*g >= 0.0);
        assert_eq!(*h, r - g);
    }
    let plain =
        ppkl_run_with_multiplier(&inst, &data, &pp, &OfflineParams::default(), 0.0).unwrap();
    assert_eq!(
        plain.pi_hat,
        gibbs_policy(&plain.r_bar, inst.pi_ref(), 1.0).unwrap()
    );
}

#[test]
fn single_round_regret_is_that_of_the_reference() {
    let inst = hard_instance(&HardInstanceSpec::new(4, 2.5, 0.3, 1.0, 2.0)).unwrap();
    let pp = PrivacyParams::new(1.0).unwrap();
    let params = OnlineParams {
        horizon: 1,
        ..OnlineParams::default()
    };
    let trace = pokl_run(&inst, &pp, &params, &Stream::new(3)).unwrap();
    let want = inst.optimal_value() - objective_j(inst.pi_ref(), &inst).unwrap();
    assert_eq!(trace.steps.len(), 1);
    assert_eq!(trace.steps[0].regret_pi2, want);
    assert_eq!(trace.cumulative_regret(), vec![want]);

    let csv = write_trace_csv(&trace);
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, TRACE_COLUMNS.join(","));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = hard_instance(&HardInstanceSpec::new(3, 2.5, 0.2, 1.0, 2.0)).unwrap();
    let path = dir.path().join("instance.json");
    inst.save(&path).unwrap();
    assert_eq!(Instance::load(&path).unwrap().to_json(), inst.to_json());

    let pp = PrivacyParams::new(0.5).unwrap();
    let data = ldprlhf::instances::offline_dataset_gen(&inst, 100, &pp, &Stream::new(2));
    let header = DatasetHeader {
        n: 100,
        epsilon: 0.5,
        seed: 2,
    };
    let path = dir.path().join("data.csv");
    save_dataset(&path, &header, &data).unwrap();
    let (h, d) = load_dataset(&path).unwrap();
    assert_eq!((h.n, h.epsilon, h.seed), (100, 0.5, 2));
    assert_eq!(d, data);
}
