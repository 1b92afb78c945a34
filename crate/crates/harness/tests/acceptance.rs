//! Acceptance run: one line per criterion, nonzero exit if any fails.
//!
//! Oracles here are written out from the model definitions rather than
//! calling back into the library, so a library bug cannot confirm itself.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ldprlhf::instance::Instance;
use ldprlhf::instances::{offline_dataset_gen, random_instance, random_policy};
use ldprlhf::model::{expected_kl, gibbs_policy, sample_preference, suboptimality};
use ldprlhf::offline::private_mle;
use ldprlhf::online::private_least_squares;
use ldprlhf::privacy::{privatize_label, rr_alpha, Label, PrivacyParams, RrChannel};
use ldprlhf::rng::Stream;
use ldprlhf::table::{FunctionClass, Grid, PolicyTable, RewardTable};
use ldprlhf_harness::sweep::{run_offline_sweep, run_online_sweep};
use ldprlhf_harness::{Mode, SweepConfig};
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str, mode: Mode) -> SweepConfig {
    let mut cfg = SweepConfig::load(&configs().join(name)).expect("shipped config loads");
    cfg.mode = Some(mode);
    cfg.validate().expect("shipped config is valid");
    cfg
}

fn sigma(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `P(z = +1)` for reward gap `gap` after keeping the label with prob `alpha`.
fn p_plus(gap: f64, alpha: f64) -> f64 {
    alpha * sigma(gap) + (1.0 - alpha) * (1.0 - sigma(gap))
}

fn gibbs_oracle(r: &Grid, pi_ref: &PolicyTable, beta: f64) -> Vec<Vec<f64>> {
    (0..r.states())
        .map(|s| {
            let w: Vec<f64> = (0..r.actions())
                .map(|a| pi_ref.get(s, a) * (beta * r.get(s, a)).exp())
                .collect();
            let z: f64 = w.iter().sum();
            w.iter().map(|x| x / z).collect()
        })
        .collect()
}

fn objective_oracle(pi: &[Vec<f64>], inst: &Instance) -> f64 {
    let beta = inst.beta();
    inst.d0()
        .probs()
        .iter()
        .enumerate()
        .map(|(s, w)| {
            w * pi[s]
                .iter()
                .enumerate()
                .map(|(a, p)| {
                    p * (inst.r_star().get(s, a) - (p / inst.pi_ref().get(s, a)).ln() / beta)
                })
                .sum::<f64>()
        })
        .sum()
}

fn kl_oracle(pi: &[Vec<f64>], other: &[Vec<f64>], d0: &[f64]) -> f64 {
    d0.iter()
        .enumerate()
        .map(|(s, w)| {
            w * pi[s]
                .iter()
                .zip(&other[s])
                .map(|(p, q)| p * (p / q).ln())
                .sum::<f64>()
        })
        .sum()
}

fn ldp_exactness() -> Outcome {
    let mut worst = 0.0f64;
    for eps in [0.1, 0.5, 1.0, 2.0] {
        let pp = PrivacyParams::new(eps).unwrap();
        let ch = RrChannel::from_params(&pp);
        let mut ratio = 0.0f64;
        for z in [Label::Plus, Label::Minus] {
            ratio = ratio.max(ch.prob(z, Label::Plus) / ch.prob(z, Label::Minus));
            ratio = ratio.max(ch.prob(z, Label::Minus) / ch.prob(z, Label::Plus));
        }
        let reported = ch.worst_case_ratio();
        worst = worst
            .max((ratio - eps.exp()).abs())
            .max((reported - eps.exp()).abs());
    }
    outcome(worst <= 1e-12, format!("max |ratio - e^eps| = {worst:.3e}"))
}

fn subopt_kl_identity() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..5u64 {
        let beta = [0.5, 1.0, 2.0, 0.25, 4.0][k as usize];
        let inst = random_instance(5, 4, 3, 2.0, beta, &Stream::new(100 + k)).unwrap();
        let star = gibbs_oracle(inst.r_star(), inst.pi_ref(), beta);
        let j_star = objective_oracle(&star, &inst);
        let mut rng = Stream::new(200 + k).rng();
        for _ in 0..100 {
            let pi = random_policy(&mut rng, 5, 4).unwrap();
            let rows = pi.to_rows();
            let oracle_gap = j_star - objective_oracle(&rows, &inst);
            let oracle_kl = kl_oracle(&rows, &star, inst.d0().probs()) / beta;
            let lib_gap = suboptimality(&pi, &inst).unwrap();
            let lib_kl = expected_kl(&pi, inst.pi_star(), inst.d0()) / beta;
            worst = worst
                .max((lib_gap - lib_kl).abs())
                .max((oracle_gap - oracle_kl).abs())
                .max((lib_gap - oracle_gap).abs());
        }
    }
    outcome(
        worst < 1e-9,
        format!("max deviation {worst:.3e} over 500 policies"),
    )
}

fn bias_invariance() -> Outcome {
    let mut rng = Stream::new(3).rng();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (s, a) = (rng.gen_range(1..6), rng.gen_range(2..6));
        let beta = rng.gen_range(0.1..5.0);
        let r = Grid::from_fn(s, a, |_, _| rng.gen_range(-3.0..3.0));
        let b: Vec<f64> = (0..s).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let shifted = Grid::from_fn(s, a, |i, j| r.get(i, j) - b[i]);
        let pi_ref = random_policy(&mut rng, s, a).unwrap();
        let p = gibbs_policy(&r, &pi_ref, beta).unwrap();
        let q = gibbs_policy(&shifted, &pi_ref, beta).unwrap();
        for (x, y) in p.values().iter().zip(q.values()) {
            worst = worst.max((x - y).abs());
        }
    }
    outcome(
        worst <= 1e-12,
        format!("max entrywise difference {worst:.3e}"),
    )
}

fn debiasing_identity() -> Outcome {
    const DRAWS: usize = 1_000_000;
    let pairs: [(f64, f64); 10] = [
        (-2.0, 0.1),
        (-1.0, 0.5),
        (-0.3, 1.0),
        (0.0, 2.0),
        (0.1, 0.1),
        (0.5, 0.5),
        (1.0, 1.0),
        (1.5, 2.0),
        (2.0, 1.0),
        (3.0, 0.5),
    ];
    let mut worst_z = 0.0f64;
    for (i, &(gap, eps)) in pairs.iter().enumerate() {
        let pp = PrivacyParams::new(eps).unwrap();
        let alpha = eps.exp() / (1.0 + eps.exp());
        let r = RewardTable::from_rows(&[vec![gap.max(0.0), (-gap).max(0.0)]], 3.0).unwrap();
        let stream = Stream::new(40).split(i as u64);
        let (mut rng, mut rr) = (stream.split(0).rng(), stream.split(1).rng());
        let sum: f64 = (0..DRAWS)
            .map(|_| {
                let y = sample_preference(&mut rng, &r, 0, 0, 1).unwrap();
                privatize_label(&mut rr, y, &pp).sign()
            })
            .sum();
        let mean = sum / DRAWS as f64;
        let target = 2.0 * p_plus(gap, alpha) - 1.0;
        let se = ((1.0 - target * target) / DRAWS as f64).sqrt();
        worst_z = worst_z.max((mean - target).abs() / se);
    }
    outcome(
        worst_z <= 3.0,
        format!("max |mean - target| = {worst_z:.2} standard errors"),
    )
}

fn offline_scaling() -> Outcome {
    let cfg = load("offline_scaling.toml", Mode::Offline);
    let out = run_offline_sweep(&cfg).unwrap();
    let s = &out.summary;
    let slope = s.slope("subopt", 1.0).map_or(f64::NAN, |f| f.slope);
    let hi = s.cell(4096, 2.0).map_or(f64::NAN, |c| c.mean);
    let lo = s.cell(4096, 0.5).map_or(f64::NAN, |c| c.mean);
    let class = cfg.instance.build(1.0, 4096).unwrap().fclass().len();
    let replays_ok = s.cells.iter().all(|c| c.replays == 20);
    outcome(
        (-1.3..=-0.7).contains(&slope) && hi <= lo && class == 16 && replays_ok,
        format!("slope(eps=1) = {slope:.4}; SubOpt(n=4096): eps=2 {hi:.3e} vs eps=0.5 {lo:.3e}"),
    )
}

fn pessimism_coverage() -> Outcome {
    let cfg = load("pessimism_coverage.toml", Mode::Offline);
    let out = run_offline_sweep(&cfg).unwrap();
    let m = &out.summary.offline[0];
    outcome(
        m.replays == 200 && m.pessimism_failure_rate <= 0.15,
        format!(
            "failure fraction {:.3} over {} replays (multiplier {:.4})",
            m.pessimism_failure_rate, m.replays, m.bonus_multiplier
        ),
    )
}

fn insample_bound() -> Outcome {
    let cfg = load("online_insample.toml", Mode::Online);
    let out = run_online_sweep(&cfg).unwrap();
    let m = &out.summary.online[0];
    outcome(
        m.replays == 200 && m.horizon == 500 && m.insample_bound_rate >= 0.85,
        format!(
            "event held in {:.3} of {} replays",
            m.insample_bound_rate, m.replays
        ),
    )
}

fn log_regret() -> Outcome {
    let cfg = load("online_regret.toml", Mode::Online);
    let out = run_online_sweep(&cfg).unwrap();
    let s = &out.summary;
    let m = &s.online[0];
    let ratio = m.last_decile_mean / m.first_decile_mean;
    let at = |t| {
        s.checkpoint(2000, 1.0, t)
            .map_or(f64::NAN, |c| c.mean_regret_over_log_t)
    };
    let (r500, r2000) = (at(500), at(2000));
    let class = cfg.instance.build(1.0, 2000).unwrap().fclass().len();
    outcome(
        m.replays == 20 && class == 16 && ratio <= 0.2 && r2000 <= 1.5 * r500,
        format!("decile ratio {ratio:.4}; Reg/log T: {r2000:.3} at 2000 vs {r500:.3} at 500"),
    )
}

/// Closed-form population objectives under `d0 x pi_ref x pi_ref`.
fn population_oracles(inst: &Instance, class: &FunctionClass, alpha: f64) -> (usize, usize) {
    let signal = 2.0 * alpha - 1.0;
    let (s_n, a_n) = inst.r_star().shape();
    let mut loglik = vec![0.0; class.len()];
    let mut sq = vec![0.0; class.len()];
    for s in 0..s_n {
        for a1 in 0..a_n {
            for a2 in 0..a_n {
                let w = inst.d0().probs()[s] * inst.pi_ref().get(s, a1) * inst.pi_ref().get(s, a2);
                let star_gap = inst.r_star().get(s, a1) - inst.r_star().get(s, a2);
                let p = p_plus(star_gap, alpha);
                let m = 2.0 * p - 1.0;
                for (k, r) in class.members().iter().enumerate() {
                    let gap = r.get(s, a1) - r.get(s, a2);
                    let q = p_plus(gap, alpha);
                    loglik[k] += w * (p * q.ln() + (1.0 - p) * (1.0 - q).ln());
                    let pred = signal * (2.0 * sigma(gap) - 1.0);
                    // E[(pred - z)^2] = (pred - m)^2 + 1 - m^2
                    sq[k] += w * ((pred - m).powi(2) + 1.0 - m * m);
                }
            }
        }
    }
    let best = |v: &[f64], sign: f64| {
        (0..v.len())
            .max_by(|&i, &j| (sign * v[i]).total_cmp(&(sign * v[j])))
            .unwrap()
    };
    (best(&loglik, 1.0), best(&sq, -1.0))
}

fn oracle_equivalence() -> Outcome {
    let (eps, n) = (2.0, 50_000);
    let pp = PrivacyParams::new(eps).unwrap();
    let alpha = rr_alpha(eps).unwrap();
    let (mut mle_hits, mut ls_hits, mut oracle_agree) = (0, 0, 0);
    for seed in 0..20u64 {
        let base = random_instance(3, 3, 1, 1.0, 1.0, &Stream::new(seed)).unwrap();
        let mut rng = Stream::new(seed).split(7).rng();
        let star_pos = (seed % 8) as usize;
        let members: Vec<RewardTable> = (0..8)
            .map(|k| {
                if k == star_pos {
                    return base.r_star().clone();
                }
                let g = Grid::from_fn(3, 3, |s, a| {
                    (base.r_star().get(s, a) + rng.gen_range(-0.15..0.15)).clamp(0.0, 1.0)
                });
                RewardTable::new(g, 1.0).unwrap()
            })
            .collect();
        let class = FunctionClass::new(members).unwrap();
        let inst = Instance::new(
            base.d0().clone(),
            base.pi_ref().clone(),
            base.r_star().clone(),
            class.clone(),
            1.0,
        )
        .unwrap();
        let (pop_mle, pop_ls) = population_oracles(&inst, &class, alpha);
        if pop_mle == pop_ls {
            oracle_agree += 1;
        }
        let data = offline_dataset_gen(&inst, n, &pp, &Stream::new(1000 + seed));
        if private_mle(&class, &data, alpha).unwrap().0 == pop_mle {
            mle_hits += 1;
        }
        if private_least_squares(&class, &data, alpha).unwrap().0 == pop_ls {
            ls_hits += 1;
        }
    }
    outcome(
        mle_hits >= 18 && ls_hits >= 18,
        format!(
            "MLE {mle_hits}/20, least squares {ls_hits}/20 (population oracles agree in {oracle_agree}/20)"
        ),
    )
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = std::fs::read(&p).unwrap();
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        "[privacy]\nepsilons = [0.5, 1.0]\n\
         [offline]\nn_values = [256, 1024]\nbonus_mode = \"calibrated\"\ncalibration_replays = 50\n\
         [online]\nhorizons = [200]\ncheckpoints = [50, 200]\n",
    )
    .unwrap();
    let mut identical = true;
    let mut files = 0;
    for mode in ["offline-sweep", "online-sweep"] {
        let mut snaps = Vec::new();
        for (run, threads) in [(0, "1"), (1, "2")] {
            let out = tmp.path().join(format!("{mode}-{run}"));
            let code = ldprlhf_harness::cli::run_from([
                "ldprlhf",
                mode,
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seeds",
                "0..4",
                "--threads",
                threads,
            ]);
            assert_eq!(code, 0, "{mode} exited with {code}");
            snaps.push(snapshot(&out));
        }
        files += snaps[0].len();
        identical &= !snaps[0].is_empty() && snaps[0] == snaps[1];
    }
    outcome(
        identical,
        format!("{files} files compared across two invocations per sweep"),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let secs = Duration::from_secs;
    let criteria: [Criterion; 10] = [
        ("LDP exactness", secs(1), ldp_exactness),
        ("suboptimality-KL identity", secs(5), subopt_kl_identity),
        ("bias invariance", secs(1), bias_invariance),
        ("debiasing identity", secs(30), debiasing_identity),
        ("offline scaling law", secs(600), offline_scaling),
        ("pessimism coverage", secs(600), pessimism_coverage),
        ("online in-sample bound", secs(900), insample_bound),
        ("logarithmic regret", secs(1200), log_regret),
        ("oracle equivalence", secs(300), oracle_equivalence),
        ("determinism", secs(120), determinism),
    ];
    let mut failures = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let ok = o.passed && took < *budget;
        if !ok {
            failures += 1;
        }
        println!(
            "criterion {:>2} [{}] {name}: {} ({:.2}s, budget {}s)",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
