//! Online private optimistic KL-regularized preference learning.
//!
//! Each round draws a context, one action from the exploitation policy and
//! one from the exploration policy, privatizes the comparison label, refits
//! the reward by private least squares, and rebuilds both policies. The
//! exploration policy tilts the exploitation policy by a bonus derived from
//! the pairwise uncertainty over the confidence set.

use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::model::{gibbs_policy, objective_j, sample_preference, sigmoid};
use crate::offline::argmax_first;
use crate::privacy::{check_alpha, privatize_label, Label, PrivacyParams};
use crate::rng::{Stream, StreamRng};
use crate::sample::{csv_finish, csv_writer, state_sampler, PairCounts, PrivateSample};
use crate::table::{FunctionClass, Grid, PolicyTable, RewardTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineParams {
    pub horizon: usize,
    pub delta: f64,
    /// Regularizer; `None` means `Gamma_T^2 / 4`.
    pub lambda: Option<f64>,
    /// Multiplier on the explicit `Gamma_T` constant.
    pub gamma_scale: f64,
    /// Take the uncertainty sup over the confidence set (true) or the whole class.
    pub bonus_over_confidence_set: bool,
    /// Draw both actions from the exploitation policy (ablation).
    pub symmetric_sampling: bool,
    /// Keep every round's policy pair in the trace.
    pub record_policies: bool,
}

impl Default for OnlineParams {
    fn default() -> Self {
        Self {
            horizon: 1000,
            delta: 0.1,
            lambda: None,
            gamma_scale: 1.0,
            bonus_over_confidence_set: true,
            symmetric_sampling: false,
            record_policies: false,
        }
    }
}

/// `kappa(B) = 4 (e^-B + 2 + e^B)`.
pub fn gamma_constant(bound: f64) -> f64 {
    4.0 * ((-bound).exp() + 2.0 + bound.exp())
}

/// `Gamma_T = scale * kappa(B) * sqrt(log(T N_F / delta)) / (2 alpha - 1)`.
///
/// With `scale = 1`, `Gamma_T^2 / 2` equals the in-sample error bound
/// `8 (e^-B + 2 + e^B)^2 log(T N_F / delta) / (2 alpha - 1)^2`.
pub fn gamma_t(
    bound: f64,
    horizon: usize,
    class_size: usize,
    delta: f64,
    alpha: f64,
    gamma_scale: f64,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if class_size == 0 {
        return Err(Error::EmptyClass);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    check_alpha(alpha)?;
    if !(gamma_scale > 0.0 && gamma_scale.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma_scale must be positive, got {gamma_scale}"
        )));
    }
    let log_term = (horizon as f64 * class_size as f64 / delta).ln();
    Ok(gamma_scale * gamma_constant(bound) * log_term.sqrt() / (2.0 * alpha - 1.0))
}

/// `Gamma_T` and `lambda` resolved for one instance and privacy level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineScale {
    pub gamma_t: f64,
    pub lambda: f64,
}

impl OnlineParams {
    /// Computes `Gamma_T`, defaults `lambda`, and enforces `lambda <= Gamma_T^2 / 2`.
    pub fn resolve(
        &self,
        bound: f64,
        class_size: usize,
        pp: &PrivacyParams,
    ) -> Result<OnlineScale> {
        let g = gamma_t(
            bound,
            self.horizon,
            class_size,
            self.delta,
            pp.alpha(),
            self.gamma_scale,
        )?;
        let lambda = self.lambda.unwrap_or(0.25 * g * g);
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidLambda(lambda));
        }
        let limit = 0.5 * g * g;
        if lambda > limit {
            return Err(Error::LambdaTooLarge { lambda, limit });
        }
        Ok(OnlineScale { gamma_t: g, lambda })
    }
}

fn least_squares_losses(fclass: &FunctionClass, counts: &PairCounts, alpha: f64) -> Vec<f64> {
    let signal = 2.0 * alpha - 1.0;
    fclass
        .members()
        .iter()
        .map(|r| {
            counts
                .cells()
                .map(|c| {
                    let pred = (2.0 * sigmoid(r.gap(c.s, c.a1, c.a2)) - 1.0) * signal;
                    let res = pred - c.z.sign();
                    c.count as f64 * res * res
                })
                .sum()
        })
        .collect()
}

fn argmin_first(values: &[f64]) -> usize {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    argmax_first(&neg)
}

/// Private least squares over the class; ties and empty data give the lowest index.
pub fn private_least_squares(
    fclass: &FunctionClass,
    data: &[PrivateSample],
    alpha: f64,
) -> Result<(usize, RewardTable)> {
    check_alpha(alpha)?;
    let (s, a) = fclass.shape();
    let counts = PairCounts::from_samples(s, a, data)?;
    let idx = argmin_first(&least_squares_losses(fclass, &counts, alpha));
    Ok((idx, fclass.get(idx).clone()))
}

fn confidence_set_counts(
    fclass: &FunctionClass,
    r_bar: &Grid,
    counts: &PairCounts,
    lambda: f64,
    gamma_t: f64,
) -> Vec<usize> {
    let limit = gamma_t * gamma_t;
    fclass
        .members()
        .iter()
        .enumerate()
        .filter(|(_, r)| counts.squared_gap_distance(r, r_bar) + lambda <= limit)
        .map(|(i, _)| i)
        .collect()
}

/// Members whose gap predictions stay within `Gamma_T^2 - lambda` of `r_bar`
/// in summed squared distance over the data.
pub fn confidence_set(
    fclass: &FunctionClass,
    r_bar: &Grid,
    data: &[PrivateSample],
    lambda: f64,
    gamma_t: f64,
) -> Result<Vec<usize>> {
    let (s, a) = fclass.shape();
    let counts = PairCounts::from_samples(s, a, data)?;
    Ok(confidence_set_counts(
        fclass, r_bar, &counts, lambda, gamma_t,
    ))
}

/// Uncertainty table over all `(s, a)` for the given members.
fn uncertainty_table(
    members: &[usize],
    fclass: &FunctionClass,
    lambda: f64,
    counts: &PairCounts,
    pi: &PolicyTable,
) -> Grid {
    let (states, actions) = fclass.shape();
    let mut out = Grid::zeros(states, actions);
    for (k, &i) in members.iter().enumerate() {
        for &j in &members[k + 1..] {
            let (ri, rj) = (fclass.get(i), fclass.get(j));
            let norm = (lambda + counts.squared_gap_distance(ri, rj)).sqrt();
            for s in 0..states {
                let diff: Vec<f64> = (0..actions).map(|a| ri.get(s, a) - rj.get(s, a)).collect();
                let mean: f64 = diff.iter().zip(pi.row(s)).map(|(d, p)| d * p).sum();
                for (a, d) in diff.iter().enumerate() {
                    let u = (d - mean).abs() / norm;
                    if u > out.get(s, a) {
                        out.set(s, a, u);
                    }
                }
            }
        }
    }
    out
}

/// `U(lambda, s, a; D; pi)`: the largest centered pairwise difference at
/// `(s, a)` relative to the pair's regularized distance on the data.
pub fn uncertainty(
    members: &[usize],
    fclass: &FunctionClass,
    lambda: f64,
    s: usize,
    a: usize,
    data: &[PrivateSample],
    pi: &PolicyTable,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    if let Some(&bad) = members.iter().find(|&&i| i >= fclass.len()) {
        return Err(Error::IndexOutOfRange {
            what: "class member",
            index: bad,
            limit: fclass.len(),
        });
    }
    pi.check_index(s, a)?;
    let (states, actions) = fclass.shape();
    let counts = PairCounts::from_samples(states, actions, data)?;
    Ok(uncertainty_table(members, fclass, lambda, &counts, pi).get(s, a))
}

/// `min(1, Gamma_T * U)`.
#[inline]
pub fn exploration_bonus(gamma_t: f64, u: f64) -> f64 {
    (gamma_t * u).min(1.0)
}

/// One round of the online loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    pub s: usize,
    pub a1: usize,
    pub a2: usize,
    pub z: Label,
    pub rbar_index: usize,
    pub fset_size: usize,
    /// `J(pi*) - J(pi^2_t)` for the exploration policy played this round.
    pub regret_pi2: f64,
    /// `J(pi*) - J(pi^1_t)`.
    pub regret_pi1: f64,
    /// Uncertainty at `(s_t, a^2_t)` after this round's update.
    pub u_played: f64,
    pub cum_min1_u2: f64,
    pub bonus_max: f64,
    pub bonus_mean: f64,
    /// `sum_{i<=t} (gap_i(r*) - gap_i(r_bar_t))^2`.
    pub insample_sq: f64,
    /// Whether `r_bar_t + b_t + c_t - r* >= 0` everywhere, with
    /// `c_t(s) = E_{pi^1_{t+1}}[r* - r_bar_t]`.
    pub optimism_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub seed: u64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub params: OnlineParams,
    pub scale: OnlineScale,
    pub steps: Vec<TraceStep>,
    /// `(pi^1_t, pi^2_t)` per round when `record_policies` is set.
    pub policies: Vec<(PolicyTable, PolicyTable)>,
    pub final_pi1: PolicyTable,
    pub final_pi2: PolicyTable,
}

impl RunTrace {
    /// Cumulative regret of the exploration policy after each round.
    pub fn cumulative_regret(&self) -> Vec<f64> {
        self.steps
            .iter()
            .scan(0.0, |acc, st| {
                *acc += st.regret_pi2;
                Some(*acc)
            })
            .collect()
    }

    /// Whether the in-sample error stayed within `Gamma_T^2 / 2` every round.
    pub fn insample_bound_held(&self) -> bool {
        let limit = 0.5 * self.scale.gamma_t * self.scale.gamma_t;
        self.steps.iter().all(|s| s.insample_sq <= limit)
    }
}

pub const TRACE_COLUMNS: [&str; 11] = [
    "t",
    "s",
    "a1",
    "a2",
    "z",
    "rbar_index",
    "fset_size",
    "regret_pi2",
    "regret_pi1",
    "u_played",
    "cum_min1_u2",
];

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// CSV trace: `# key=value` parameter lines, a column header, one row per round.
pub fn write_trace_csv(trace: &RunTrace) -> String {
    let p = &trace.params;
    let mut out = String::new();
    let meta = [
        ("seed", trace.seed.to_string()),
        ("epsilon", trace.epsilon.to_string()),
        ("alpha", fmt_f64(trace.alpha)),
        ("beta", fmt_f64(trace.beta)),
        ("horizon", p.horizon.to_string()),
        ("delta", p.delta.to_string()),
        ("gamma_scale", p.gamma_scale.to_string()),
        ("gamma_t", fmt_f64(trace.scale.gamma_t)),
        ("lambda", fmt_f64(trace.scale.lambda)),
        (
            "bonus_over_confidence_set",
            p.bonus_over_confidence_set.to_string(),
        ),
        ("symmetric_sampling", p.symmetric_sampling.to_string()),
    ];
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
    let mut w = csv_writer();
    w.write_record(TRACE_COLUMNS).expect("writing to memory");
    for st in &trace.steps {
        w.write_record([
            st.t.to_string(),
            st.s.to_string(),
            st.a1.to_string(),
            st.a2.to_string(),
            i8::from(st.z).to_string(),
            st.rbar_index.to_string(),
            st.fset_size.to_string(),
            fmt_f64(st.regret_pi2),
            fmt_f64(st.regret_pi1),
            fmt_f64(st.u_played),
            fmt_f64(st.cum_min1_u2),
        ])
        .expect("writing to memory");
    }
    out.push_str(&csv_finish(w));
    out
}

/// Runs the online algorithm with randomized response at level `pp`.
///
/// Contexts, actions and raw labels come from `stream.split(0)`; the label
/// randomizer draws from `stream.split(1)`.
pub fn pokl_run(
    inst: &Instance,
    pp: &PrivacyParams,
    params: &OnlineParams,
    stream: &Stream,
) -> Result<RunTrace> {
    pokl_run_with_mechanism(inst, pp, params, stream, |rng, y| {
        privatize_label(rng, y, pp)
    })
}

/// [`pokl_run`] with a caller-supplied label mechanism. The estimator still
/// uses `pp.alpha()`.
pub fn pokl_run_with_mechanism<M>(
    inst: &Instance,
    pp: &PrivacyParams,
    params: &OnlineParams,
    stream: &Stream,
    mut mechanism: M,
) -> Result<RunTrace>
where
    M: FnMut(&mut StreamRng, Label) -> Label,
{
    let fclass = inst.fclass();
    let scale = params.resolve(inst.bound(), fclass.len(), pp)?;
    let (states, actions) = inst.fclass().shape();
    let alpha = pp.alpha();
    let beta = inst.beta();
    let all_members: Vec<usize> = (0..fclass.len()).collect();

    let mut env = stream.split(0).rng();
    let mut rr = stream.split(1).rng();
    let contexts = state_sampler(inst.d0());

    let mut pi1 = inst.pi_ref().clone();
    let mut pi2 = inst.pi_ref().clone();
    let mut counts = PairCounts::new(states, actions);
    let mut steps = Vec::with_capacity(params.horizon);
    let mut policies = Vec::new();
    let mut cum_u = 0.0;

    for t in 1..=params.horizon {
        let regret_pi1 = inst.optimal_value() - objective_j(&pi1, inst)?;
        let regret_pi2 = inst.optimal_value() - objective_j(&pi2, inst)?;
        if params.record_policies {
            policies.push((pi1.clone(), pi2.clone()));
        }

        let s = contexts.sample(&mut env);
        let a1 = draw_action(&mut env, &pi1, s);
        let explore = if params.symmetric_sampling {
            &pi1
        } else {
            &pi2
        };
        let a2 = draw_action(&mut env, explore, s);
        let y = sample_preference(&mut env, inst.r_star(), s, a1, a2)?;
        let z = mechanism(&mut rr, y);
        counts.add(&PrivateSample { s, a1, a2, z })?;

        let rbar_index = argmin_first(&least_squares_losses(fclass, &counts, alpha));
        let r_bar = fclass.get(rbar_index);
        let next_pi1 = gibbs_policy(r_bar, inst.pi_ref(), beta)?;

        let fset = confidence_set_counts(fclass, r_bar, &counts, scale.lambda, scale.gamma_t);
        let members = if params.bonus_over_confidence_set {
            &fset
        } else {
            &all_members
        };
        let u = uncertainty_table(members, fclass, scale.lambda, &counts, &next_pi1);
        let bonus = Grid::from_fn(states, actions, |s, a| {
            exploration_bonus(scale.gamma_t, u.get(s, a))
        });
        let next_pi2 = gibbs_policy(&bonus, &next_pi1, beta)?;

        let u_played = u.get(s, a2);
        cum_u += u_played.powi(2).min(1.0);

        let bonus_max = bonus.values().iter().copied().fold(0.0, f64::max);
        let bonus_mean = bonus.values().iter().sum::<f64>() / bonus.values().len() as f64;
        let insample_sq = counts.squared_gap_distance(inst.r_star(), r_bar);
        let optimism_holds = optimism_event(inst.r_star(), r_bar, &bonus, &next_pi1);

        steps.push(TraceStep {
            t,
            s,
            a1,
            a2,
            z,
            rbar_index,
            fset_size: fset.len(),
            regret_pi2,
            regret_pi1,
            u_played,
            cum_min1_u2: cum_u,
            bonus_max,
            bonus_mean,
            insample_sq,
            optimism_holds,
        });
        pi1 = next_pi1;
        pi2 = next_pi2;
    }

    Ok(RunTrace {
        seed: stream.seed(),
        epsilon: pp.epsilon(),
        alpha,
        beta,
        params: params.clone(),
        scale,
        steps,
        policies,
        final_pi1: pi1,
        final_pi2: pi2,
    })
}

fn draw_action<R: Rng + ?Sized>(rng: &mut R, pi: &PolicyTable, s: usize) -> usize {
    WeightedIndex::new(pi.row(s))
        .expect("policy rows are stochastic")
        .sample(rng)
}

/// `r_bar + bonus + c - r* >= 0` everywhere with `c(s) = E_{pi1}[r* - r_bar]`.
pub fn optimism_event(r_star: &Grid, r_bar: &Grid, bonus: &Grid, pi1: &PolicyTable) -> bool {
    let (states, actions) = r_star.shape();
    (0..states).all(|s| {
        let c: f64 = (0..actions)
            .map(|a| pi1.get(s, a) * (r_star.get(s, a) - r_bar.get(s, a)))
            .sum();
        (0..actions).all(|a| r_bar.get(s, a) + bonus.get(s, a) + c - r_star.get(s, a) >= -1e-12)
    })
}
