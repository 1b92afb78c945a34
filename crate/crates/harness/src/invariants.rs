//! The invariant suite: every machine-checkable property of the library,
//! reported with the measured value and its tolerance.

use std::fmt::Write as _;

use ldprlhf::instance::Instance;
use ldprlhf::instances::{
    concentrability, hard_instance, offline_dataset_gen, random_instance, random_policy,
    theory_gap, HardInstanceSpec,
};
use ldprlhf::model::{
    bt_preference_prob, expected_kl, gibbs_policy, objective_j, sample_preference, sigmoid,
    suboptimality,
};
use ldprlhf::offline::private_mle;
use ldprlhf::online::{fmt_f64, pokl_run, pokl_run_with_mechanism, write_trace_csv, OnlineParams};
use ldprlhf::privacy::{
    debiased_mean, private_label_prob, privatize_label, Label, PrivacyParams, RrChannel,
};
use ldprlhf::rng::Stream;
use ldprlhf::sample::{csv_finish, csv_writer, PairCounts};
use ldprlhf::table::{Grid, RewardTable};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{
    BonusModeName, Gap, GapName, HardConfig, InstanceConfig, Mode, Seeds, SweepConfig, SweepSection,
};
use crate::error::{ConfigError, Result};
use crate::fit::fit_loglog;
use crate::output::{render_outputs, Footer};
use crate::sweep::{onpolicy_sq_error, run_offline_sweep, run_online_sweep, OnlineRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    /// Human-readable acceptance rule, e.g. `<= 1e-12`.
    pub tolerance: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvariantReport {
    pub checks: Vec<CheckResult>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_csv(&self, footer: &Footer) -> String {
        let mut w = csv_writer();
        w.write_record(["check", "status", "measured", "tolerance", "detail"])
            .expect("writing to memory");
        for c in &self.checks {
            w.write_record([
                c.name,
                if c.passed { "pass" } else { "fail" },
                &fmt_f64(c.measured),
                &c.tolerance,
                &c.detail,
            ])
            .expect("writing to memory");
        }
        let mut out = csv_finish(w);
        out.push_str(&footer.line());
        out
    }
}

fn check(
    name: &'static str,
    passed: bool,
    measured: f64,
    tolerance: impl Into<String>,
    detail: impl Into<String>,
) -> CheckResult {
    CheckResult {
        name,
        passed,
        measured,
        tolerance: tolerance.into(),
        detail: detail.into(),
    }
}

/// Label randomizer used by the channel checks: RR, or a forced flip
/// probability when the config overrides it.
#[derive(Debug, Clone, Copy)]
struct Randomizer {
    pp: PrivacyParams,
    flip_override: Option<f64>,
}

impl Randomizer {
    fn channel(&self) -> RrChannel {
        match self.flip_override {
            Some(f) => RrChannel::with_flip_prob(f),
            None => RrChannel::from_params(&self.pp),
        }
    }

    fn apply<R: Rng + ?Sized>(&self, rng: &mut R, y: Label) -> Label {
        match self.flip_override {
            Some(f) => {
                if rng.gen::<f64>() < f {
                    -y
                } else {
                    y
                }
            }
            None => privatize_label(rng, y, &self.pp),
        }
    }
}

/// The hard instance used by the offline statistical checks.
fn hard(gap: f64, shift: bool) -> Result<Instance> {
    let mut spec = HardInstanceSpec::new(4, 4.0, gap, 1.0, 2.0);
    spec.shift_into_range = shift;
    Ok(hard_instance(&spec)?)
}

fn two_action_reward(gap: f64) -> RewardTable {
    let half = 0.5 * gap.abs() + 1.0;
    RewardTable::from_rows(&[vec![half + 0.5 * gap, half - 0.5 * gap]], 2.0 * half)
        .expect("valid two-action table")
}

/// Runs every check. Statistical checks draw from streams rooted at the
/// first configured seed, so a fixed config gives a fixed report.
pub fn run_invariant_suite(cfg: &SweepConfig) -> Result<InvariantReport> {
    let base = cfg.seeds()?.first().copied().unwrap_or(0);
    let root = Stream::new(base);
    let mut eps_grid = vec![0.1, 0.5, 1.0, 2.0];
    for &e in &cfg.privacy.epsilons {
        if e.is_finite() && e > 0.0 && !eps_grid.contains(&e) {
            eps_grid.push(e);
        }
    }
    let flip = cfg.privacy.rr_flip_override;

    let mut checks = Vec::new();
    checks.push(ldp_ratio(&eps_grid, flip)?);
    checks.push(channel_mean(&root.split(1), flip)?);
    checks.push(private_label_prob_consistency(&root.split(2))?);
    checks.extend(policy_checks(&root.split(3))?);
    checks.push(mle_likelihood_dominance(&root.split(4))?);
    checks.extend(offline_statistical(base)?);
    checks.extend(online_checks(base)?);
    checks.extend(hard_instance_checks()?);
    checks.push(dataset_label_marginals(&root.split(5))?);
    checks.push(slope_fitter_exact());
    checks.push(config_validation_messages());
    checks.push(determinism(base)?);
    Ok(InvariantReport { checks })
}

fn ldp_ratio(eps_grid: &[f64], flip: Option<f64>) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut reported = f64::NAN;
    let mut detail = String::new();
    for &e in eps_grid {
        let r = Randomizer {
            pp: PrivacyParams::new(e)?,
            flip_override: flip,
        };
        let ratio = r.channel().worst_case_ratio();
        let err = (ratio - e.exp()).abs();
        if !(err <= worst) {
            worst = err;
            reported = ratio;
        }
        let _ = write!(detail, "eps={e}: ratio={ratio} vs e^eps={}; ", e.exp());
    }
    Ok(check(
        "ldp_ratio",
        worst < 1e-12,
        reported,
        "|ratio - e^eps| < 1e-12",
        detail.trim_end().to_string(),
    ))
}

fn channel_mean(stream: &Stream, flip: Option<f64>) -> Result<CheckResult> {
    const DRAWS: usize = 1_000_000;
    let pairs: [(f64, f64); 10] = [
        (-2.0, 0.5),
        (-1.0, 1.0),
        (-0.5, 2.0),
        (-0.1, 0.1),
        (0.0, 1.0),
        (0.1, 3.0),
        (0.5, 0.5),
        (1.0, 1.0),
        (1.5, 2.0),
        (3.0, 0.25),
    ];
    let zs: Vec<(f64, f64, f64)> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(gap, eps))| -> Result<(f64, f64, f64)> {
            let pp = PrivacyParams::new(eps)?;
            let randomizer = Randomizer {
                pp,
                flip_override: flip,
            };
            let r = two_action_reward(gap);
            let mut rng = stream.split(k as u64).rng();
            let mut sum = 0.0;
            for _ in 0..DRAWS {
                let y = sample_preference(&mut rng, &r, 0, 0, 1)?;
                sum += randomizer.apply(&mut rng, y).sign();
            }
            let mean = sum / DRAWS as f64;
            let expect = debiased_mean(pp.alpha(), gap);
            let se = ((1.0 - expect * expect) / DRAWS as f64).sqrt();
            Ok((gap, eps, (mean - expect) / se))
        })
        .collect::<Result<_>>()?;
    let worst = zs.iter().map(|z| z.2.abs()).fold(0.0, f64::max);
    let detail = zs
        .iter()
        .map(|(g, e, z)| format!("gap={g} eps={e} z={z:.3}"))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(check(
        "channel_mean",
        worst <= 3.0,
        worst,
        "max |z| <= 3 at 1e6 draws",
        detail,
    ))
}

fn private_label_prob_consistency(stream: &Stream) -> Result<CheckResult> {
    let mut rng = stream.rng();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let inst = random_instance(3, 4, 1, 2.0, 1.0, &Stream::new(rng.gen()))?;
        let r = inst.r_star();
        let alpha = rng.gen_range(0.5000001..=1.0);
        for s in 0..3 {
            for a1 in 0..4 {
                for a2 in 0..4 {
                    let p_plus = bt_preference_prob(r, s, a1, a2)?;
                    for z in [Label::Minus, Label::Plus] {
                        let p_same = if z == Label::Plus {
                            p_plus
                        } else {
                            1.0 - p_plus
                        };
                        let want = alpha * p_same + (1.0 - alpha) * (1.0 - p_same);
                        let got = private_label_prob(r, z, s, a1, a2, alpha)?;
                        worst = worst.max((got - want).abs());
                    }
                }
            }
        }
    }
    Ok(check(
        "private_label_prob_consistency",
        worst <= 1e-15,
        worst,
        "<= 1e-15",
        "private likelihood vs alpha * P(y = z) + (1 - alpha) * P(y = -z), 200 random tables",
    ))
}

fn policy_checks(stream: &Stream) -> Result<Vec<CheckResult>> {
    let mut rng = stream.rng();

    let inst = random_instance(3, 4, 1, 1.0, 2.0, &Stream::new(rng.gen()))?;
    let j_star = inst.optimal_value();
    let mut gibbs_worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let pi = random_policy(&mut rng, 3, 4)?;
        gibbs_worst = gibbs_worst.max(objective_j(&pi, &inst)? - j_star);
    }

    let mut kl_worst = 0.0f64;
    for _ in 0..5 {
        let beta = rng.gen_range(0.2..5.0);
        let inst = random_instance(4, 3, 1, 1.0, beta, &Stream::new(rng.gen()))?;
        for _ in 0..100 {
            let pi = random_policy(&mut rng, 4, 3)?;
            let gap =
                suboptimality(&pi, &inst)? - expected_kl(&pi, inst.pi_star(), inst.d0()) / beta;
            kl_worst = kl_worst.max(gap.abs());
        }
    }

    let mut bias_worst = 0.0f64;
    for _ in 0..100 {
        let bound = 2.0;
        let inst = random_instance(
            4,
            5,
            1,
            bound,
            rng.gen_range(0.2..5.0),
            &Stream::new(rng.gen()),
        )?;
        let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-bound..=bound)).collect();
        let shifted = Grid::from_fn(4, 5, |s, a| inst.r_star().get(s, a) - b[s]);
        let p = gibbs_policy(inst.r_star(), inst.pi_ref(), inst.beta())?;
        let q = gibbs_policy(&shifted, inst.pi_ref(), inst.beta())?;
        for (x, y) in p.values().iter().zip(q.values()) {
            bias_worst = bias_worst.max((x - y).abs());
        }
    }

    Ok(vec![
        check(
            "gibbs_optimality",
            gibbs_worst <= 1e-12,
            gibbs_worst,
            "max J(pi) - J(pi*) <= 1e-12",
            "1000 random policies",
        ),
        check(
            "subopt_kl_identity",
            kl_worst < 1e-9,
            kl_worst,
            "< 1e-9",
            "100 random policies on each of 5 random instances",
        ),
        check(
            "bias_invariance",
            bias_worst <= 1e-12,
            bias_worst,
            "<= 1e-12",
            "100 random (r, b) pairs, b(s) in [-B, B]",
        ),
    ])
}

fn mle_likelihood_dominance(stream: &Stream) -> Result<CheckResult> {
    let inst = random_instance(3, 3, 12, 1.0, 1.0, &stream.split(0))?;
    let pp = PrivacyParams::new(0.5)?;
    let data = offline_dataset_gen(&inst, 3000, &pp, &stream.split(1));
    let (idx, _) = private_mle(inst.fclass(), &data, pp.alpha())?;
    // Re-evaluate sample by sample instead of through the sufficient statistics.
    let ll: Vec<f64> = inst
        .fclass()
        .members()
        .iter()
        .map(|r| {
            data.iter()
                .map(|x| {
                    let gap = r.get(x.s, x.a1) - r.get(x.s, x.a2);
                    let zp = x.z.sign() * gap;
                    (pp.alpha() * sigmoid(zp) + (1.0 - pp.alpha()) * sigmoid(-zp)).ln()
                })
                .sum()
        })
        .collect();
    let margin = ll
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != idx)
        .map(|(_, l)| l - ll[idx])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(check(
        "mle_likelihood_dominance",
        margin <= 1e-9 * ll[idx].abs(),
        margin,
        "max other - chosen <= 1e-9 relative",
        format!("chosen member {idx} of {}", ll.len()),
    ))
}

fn hard_cfg(gap: Gap) -> InstanceConfig {
    InstanceConfig::Hard(HardConfig {
        states: 4,
        c: 4.0,
        beta: 1.0,
        bound: 2.0,
        gap,
        shift_into_range: true,
        signs: None,
        class_seed: 0,
    })
}

fn offline_statistical(base: u64) -> Result<Vec<CheckResult>> {
    let run = |n: usize, eps: f64, seeds: u64| -> Result<_> {
        let mut cfg = SweepConfig {
            mode: Some(Mode::Offline),
            instance: hard_cfg(Gap::Named(GapName::Theory)),
            sweep: SweepSection {
                seeds: Seeds::Range(format!("{base}..{}", base + seeds)),
                threads: None,
            },
            ..SweepConfig::default()
        };
        cfg.privacy.epsilons = vec![eps];
        cfg.offline.n_values = vec![n];
        cfg.offline.bonus_mode = BonusModeName::Calibrated;
        run_offline_sweep(&cfg)
    };

    let cov = run(4096, 1.0, 200)?;
    let fail = cov.summary.offline[0].pessimism_failure_rate;

    // On-policy error needs only the MLE; run it directly over the n grid.
    let ns = [256usize, 1024, 4096, 16384];
    let pp = PrivacyParams::new(1.0)?;
    let mut errs = Vec::new();
    for &n in &ns {
        let inst = hard(theory_gap(4, 4.0, 1.0, n), true)?;
        let total: f64 = (0..50u64)
            .into_par_iter()
            .map(|k| -> Result<f64> {
                let data = offline_dataset_gen(&inst, n, &pp, &Stream::new(base + k));
                let (_, r_bar) = private_mle(inst.fclass(), &data, pp.alpha())?;
                Ok(onpolicy_sq_error(&inst, &r_bar))
            })
            .collect::<Result<Vec<_>>>()?
            .iter()
            .sum();
        errs.push(total / 50.0);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let slope = fit_loglog(&xs, &errs).map_or(f64::NAN, |f| f.slope);

    let lo = run(4096, 0.5, 50)?.summary.cells[0].mean;
    let hi = run(4096, 2.0, 50)?.summary.cells[0].mean;

    Ok(vec![
        check(
            "pessimism_coverage",
            fail <= 0.15,
            fail,
            "failure fraction <= 0.15",
            "calibrated bonus, n=4096, eps=1, delta=0.1, 200 replays",
        ),
        check(
            "onpolicy_error_scaling",
            (-1.3..=-0.7).contains(&slope),
            slope,
            "slope in [-1.3, -0.7]",
            format!("mean centered squared error {errs:?} at n={ns:?}, 50 seeds"),
        ),
        check(
            "subopt_monotone_in_epsilon",
            hi <= lo,
            hi - lo,
            "mean(eps=2) - mean(eps=0.5) <= 0",
            format!("n=4096, 50 seeds: eps=0.5 -> {lo:e}, eps=2 -> {hi:e}"),
        ),
    ])
}

fn online_runs(
    base: u64,
    seeds: u64,
    horizon: usize,
    scale: f64,
    gap: f64,
) -> Result<Vec<OnlineRecord>> {
    let mut cfg = SweepConfig {
        mode: Some(Mode::Online),
        instance: hard_cfg(Gap::Fixed(gap)),
        sweep: SweepSection {
            seeds: Seeds::Range(format!("{base}..{}", base + seeds)),
            threads: None,
        },
        ..SweepConfig::default()
    };
    cfg.online.horizons = vec![horizon];
    cfg.online.gamma_scale = scale;
    cfg.online.write_traces = false;
    Ok(run_online_sweep(&cfg)?.online_records)
}

fn online_checks(base: u64) -> Result<Vec<CheckResult>> {
    // Gap 0.5 keeps every member difference within the bonus cap of 1; the
    // optimism event cannot hold once a wrong member is off by more than that.
    let short = online_runs(base, 200, 500, 1.0, 0.5)?;
    let long = online_runs(base, 20, 2000, 1.0, 0.9)?;
    let tight = online_runs(base, 20, 2000, 0.05, 0.9)?;
    let all: Vec<&OnlineRecord> = short.iter().chain(&long).chain(&tight).collect();

    let frac = |rs: &[OnlineRecord], f: fn(&OnlineRecord) -> bool| {
        rs.iter().filter(|r| f(r)).count() as f64 / rs.len() as f64
    };
    let insample = frac(&short, |r| r.insample_held);
    let optimism = frac(&short, |r| r.optimism_held);
    let bonus_ok = all.iter().all(|r| r.bonus_in_range);
    let shrink_ok = all.iter().all(|r| r.fset_nonincreasing);

    let decile = |rs: &[OnlineRecord], last: bool| {
        let t = rs[0].horizon;
        let d = t.div_ceil(10);
        let range = if last { t - d..t } else { 0..d };
        rs.iter()
            .map(|r| r.round_regret[range.clone()].iter().sum::<f64>() / d as f64)
            .sum::<f64>()
            / rs.len() as f64
    };
    let (first, last) = (decile(&long, false), decile(&long, true));
    let cu = |i: usize| tight.iter().map(|r| r.cum_min1_u2[i]).sum::<f64>() / tight.len() as f64;
    let (cu_half, cu_full) = (cu(999), cu(1999));

    let min_regret = all
        .iter()
        .flat_map(|r| r.round_regret.iter().copied())
        .fold(f64::INFINITY, f64::min);

    let identity = alpha_one_identity(base)?;

    Ok(vec![
        check(
            "insample_error_bound",
            insample >= 0.85,
            insample,
            "holds in >= 0.85 of replays",
            "gamma_scale=1, delta=0.1, T=500, eps=1, gap 0.5, 200 replays",
        ),
        check(
            "optimism_coverage",
            optimism >= 0.85,
            optimism,
            "holds in >= 0.85 of replays",
            "every round, gamma_scale=1, T=500, eps=1, gap 0.5, 200 replays",
        ),
        check(
            "confidence_set_shrinkage",
            shrink_ok,
            if shrink_ok { 0.0 } else { 1.0 },
            "|F_t| nonincreasing on every trace",
            format!("{} traces", all.len()),
        ),
        check(
            "bonus_range",
            bonus_ok,
            if bonus_ok { 0.0 } else { 1.0 },
            "b_t in [0, 1] every round",
            format!("{} traces", all.len()),
        ),
        check(
            "regret_nonnegative",
            min_regret >= -1e-10,
            min_regret,
            ">= -1e-10",
            "per-round regret of pi^2 over every trace",
        ),
        check(
            "regret_sublinearity",
            last <= first / 5.0,
            last / first,
            "last-decile / first-decile <= 0.2",
            format!(
                "T=2000, eps=1, gamma_scale=1, gap 0.9, 20 seeds: first={first:e}, last={last:e}"
            ),
        ),
        check(
            "cumulative_uncertainty",
            cu_full <= 0.75 * 2.0 * cu_half,
            cu_full / (2.0 * cu_half),
            "value(2000) / (2 value(1000)) <= 0.75",
            format!("gamma_scale=0.05, 20 seeds: {cu_half:e} -> {cu_full:e}"),
        ),
        identity,
    ])
}

fn alpha_one_identity(base: u64) -> Result<CheckResult> {
    let inst = hard(0.9, true)?;
    let pp = PrivacyParams::non_private();
    let params = OnlineParams {
        horizon: 200,
        ..OnlineParams::default()
    };
    let stream = Stream::new(base);
    let a = write_trace_csv(&pokl_run(&inst, &pp, &params, &stream)?);
    let b = write_trace_csv(&pokl_run_with_mechanism(
        &inst,
        &pp,
        &params,
        &stream,
        |_, y| y,
    )?);
    Ok(check(
        "alpha_one_matches_identity",
        a == b,
        if a == b { 0.0 } else { 1.0 },
        "byte-identical traces",
        "eps=inf run vs label mechanism replaced by identity, T=200",
    ))
}

fn hard_instance_checks() -> Result<Vec<CheckResult>> {
    let mut closed_form = 0.0f64;
    let mut conc_worst = f64::NEG_INFINITY;
    let mut flips_ok = true;
    let mut scanned = 0usize;
    for states in 1..=6usize {
        let shapes = [
            (4.0, 1.0, 2.0, 0.3, true),
            (4.0, 2.0, 2.0, 0.3, false),
            (3.0, 2.0, 1.5, 0.2, false),
            (2.5, 0.5, 8.0, 1.0, false),
        ];
        for (c, beta, bound, gap, shift) in shapes {
            let base = HardInstanceSpec {
                shift_into_range: shift,
                ..HardInstanceSpec::new(states, c, gap, beta, bound)
            };
            for mask in 0..1usize << states {
                let signs: Vec<i8> = (0..states)
                    .map(|i| if (mask >> i) & 1 == 1 { 1 } else { -1 })
                    .collect();
                let neg: Vec<i8> = signs.iter().map(|v| -v).collect();
                let spec = HardInstanceSpec {
                    signs: signs.clone(),
                    ..base.clone()
                };
                let inst = hard_instance(&spec)?;
                let flipped = hard_instance(&HardInstanceSpec {
                    signs: neg,
                    ..base.clone()
                })?;
                for (s, &v) in signs.iter().enumerate() {
                    let want = spec.optimal_minus_prob(v);
                    closed_form = closed_form.max((inst.pi_star().get(s, 0) - want).abs());
                    let fav = |i: &Instance| i.pi_star().get(s, 0) > i.pi_star().get(s, 1);
                    flips_ok &= fav(&inst) != fav(&flipped);
                }
                conc_worst = conc_worst.max(concentrability(inst.pi_star(), inst.pi_ref()) - c);
                scanned += 1;
            }
        }
    }
    Ok(vec![
        check(
            "hard_instance_closed_form",
            closed_form <= 1e-12,
            closed_form,
            "<= 1e-12",
            format!("{scanned} sign vectors, S <= 6"),
        ),
        check(
            "hard_instance_concentrability",
            conc_worst <= 1e-12,
            conc_worst,
            "max C(pi*_v) - C <= 0",
            format!("full scan of {scanned} sign vectors, S <= 6"),
        ),
        check(
            "hard_instance_flip",
            flips_ok,
            if flips_ok { 0.0 } else { 1.0 },
            "favored action inverts in every state",
            "v -> -v over the same scan",
        ),
    ])
}

fn dataset_label_marginals(stream: &Stream) -> Result<CheckResult> {
    let inst = hard(0.4, true)?;
    let pp = PrivacyParams::new(1.0)?;
    let n = 1_000_000;
    let data = offline_dataset_gen(&inst, n, &pp, stream);
    let counts = PairCounts::from_samples(inst.states(), inst.actions(), &data)?;
    let mut worst = 0.0f64;
    let mut cells = 0;
    for (s, a1, a2, total) in counts.pair_cells() {
        let p = private_label_prob(inst.r_star(), Label::Plus, s, a1, a2, pp.alpha())?;
        let freq = counts.count(s, a1, a2, Label::Plus) as f64 / total as f64;
        let se = (p * (1.0 - p) / total as f64).sqrt();
        worst = worst.max((freq - p).abs() / se);
        cells += 1;
    }
    Ok(check(
        "dataset_label_marginals",
        worst <= 3.0,
        worst,
        "max |z| <= 3",
        format!("{cells} (s, a1, a2) cells, 1e6 records, eps=1"),
    ))
}

fn slope_fitter_exact() -> CheckResult {
    let xs = [256.0, 1024.0, 4096.0, 16384.0];
    let mut worst = 0.0f64;
    for (c, p) in [(7.0, -1.0), (0.3, 0.5), (2.0, -2.0)] {
        let ys: Vec<f64> = xs.iter().map(|x: &f64| c * x.powf(p)).collect();
        let fit = fit_loglog(&xs, &ys).map_or(f64::INFINITY, |f| (f.slope - p).abs());
        worst = worst.max(fit);
    }
    check(
        "slope_fitter_exact",
        worst <= 1e-9,
        worst,
        "<= 1e-9",
        "exact power laws with p in {-1, 0.5, -2}",
    )
}

fn config_validation_messages() -> CheckResult {
    let mut online = SweepConfig {
        mode: Some(Mode::Online),
        instance: hard_cfg(Gap::Fixed(0.5)),
        ..SweepConfig::default()
    };
    online.online.horizons = vec![100];
    let mut big_lambda = online.clone();
    big_lambda.online.lambda = Some(1e12);
    let mut bad_delta = online.clone();
    bad_delta.online.delta = 1.5;
    let mut bad_eps = online.clone();
    bad_eps.privacy.epsilons = vec![0.0];

    let msg = |c: &SweepConfig| -> Option<String> {
        match c.validate() {
            Err(e) => Some(e.to_string()),
            Ok(()) => None,
        }
    };
    let got: Vec<Option<String>> = [&big_lambda, &bad_delta, &bad_eps]
        .iter()
        .map(|c| msg(c))
        .collect();
    let kinds_ok = matches!(
        big_lambda.validate(),
        Err(ConfigError::LambdaTooLarge { .. })
    ) && matches!(bad_delta.validate(), Err(ConfigError::Delta { .. }))
        && matches!(bad_eps.validate(), Err(ConfigError::Epsilon(_)));
    let distinct =
        got.iter().all(Option::is_some) && got[0] != got[1] && got[1] != got[2] && got[0] != got[2];
    let ok = kinds_ok && distinct && online.validate().is_ok();
    check(
        "config_validation_messages",
        ok,
        if ok { 0.0 } else { 1.0 },
        "three distinct rejections",
        got.into_iter()
            .map(|m| m.unwrap_or_else(|| "accepted".into()))
            .collect::<Vec<_>>()
            .join(" | "),
    )
}

fn determinism(base: u64) -> Result<CheckResult> {
    let mut off = SweepConfig {
        mode: Some(Mode::Offline),
        sweep: SweepSection {
            seeds: Seeds::Range(format!("{base}..{}", base + 3)),
            threads: None,
        },
        ..SweepConfig::default()
    };
    off.privacy.epsilons = vec![0.5, 1.0];
    off.offline.n_values = vec![64, 256];
    let mut on = off.clone();
    on.mode = Some(Mode::Online);
    on.instance = hard_cfg(Gap::Fixed(0.5));
    on.online.horizons = vec![40];
    on.online.checkpoints = vec![10, 40];

    let render = |cfg: &SweepConfig| -> Result<Vec<(String, String)>> {
        let outcome = match cfg.mode()? {
            Mode::Offline => run_offline_sweep(cfg)?,
            _ => run_online_sweep(cfg)?,
        };
        let footer = Footer {
            config_hash: cfg.hash(),
            seeds: cfg.sweep.seeds.describe(),
        };
        Ok(render_outputs(&outcome, &footer))
    };
    let mut same = true;
    for cfg in [&off, &on] {
        same &= render(cfg)? == render(cfg)?;
    }
    Ok(check(
        "determinism",
        same,
        if same { 0.0 } else { 1.0 },
        "byte-identical outputs",
        "offline and online sweeps rendered twice",
    ))
}
