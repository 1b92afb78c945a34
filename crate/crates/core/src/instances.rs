//! Instance generators, offline datasets and coverage diagnostics.
//!
//! The binary hard family uses the action encoding `-1 -> 0`, `+1 -> 1`:
//! state `s` has rewards `B/2 + v_s a` on action 0 and `B/2 - b` on action 1,
//! reference probabilities `1/C` and `1 - 1/C`, and `b = ln(C - 1) / beta`,
//! so that the optimal policy's density ratio to the reference is at most `C`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Dirichlet, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::model::{check_beta, sample_preference};
use crate::offline::d_divergence_table;
use crate::privacy::{privatize_label, PrivacyParams};
use crate::rng::Stream;
use crate::sample::{state_sampler, PrivateSample, RawSample, RowSampler};
use crate::table::{FunctionClass, Grid, PolicyTable, RewardTable, StateDistribution};

/// Index of the action labelled `-1`.
pub const ACTION_MINUS: usize = 0;
/// Index of the action labelled `+1`.
pub const ACTION_PLUS: usize = 1;

/// Which sign vectors make up the hard instance's function class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardClassSpec {
    /// Use the whole hypercube when `S` is at most this.
    pub full_up_to: usize,
    /// Random sign vectors added to `{v, -v}` for larger `S`.
    pub extra_members: usize,
    pub seed: u64,
}

impl Default for HardClassSpec {
    fn default() -> Self {
        Self {
            full_up_to: 6,
            extra_members: 14,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceSpec {
    pub states: usize,
    /// Reference skew `C`; the optimal policy's concentrability is at most `C`.
    pub c: f64,
    /// Reward gap `a` separating `v_s = +1` from `v_s = -1`.
    pub gap: f64,
    pub beta: f64,
    pub bound: f64,
    /// True sign vector `v`, entries `-1` or `+1`.
    pub signs: Vec<i8>,
    pub class: HardClassSpec,
    /// Add a per-state constant so rewards fit in `[0, B]` when
    /// `b >= B/2`. Every gap, policy and suboptimality is unchanged by it.
    pub shift_into_range: bool,
}

impl HardInstanceSpec {
    /// Instance parameters with alternating signs `+1, -1, ...` and the default class.
    pub fn new(states: usize, c: f64, gap: f64, beta: f64, bound: f64) -> Self {
        Self {
            states,
            c,
            gap,
            beta,
            bound,
            signs: (0..states)
                .map(|s| if s % 2 == 0 { 1 } else { -1 })
                .collect(),
            class: HardClassSpec::default(),
            shift_into_range: false,
        }
    }

    /// `b = ln(C - 1) / beta`.
    pub fn bias(&self) -> f64 {
        (self.c - 1.0).ln() / self.beta
    }

    /// Per-state offset added to every reward.
    pub fn offset(&self) -> f64 {
        if self.shift_into_range {
            (self.bias() - self.bound / 2.0).max(0.0)
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if self.states < 1 {
            return Err(Error::Dimension("hard instance needs S >= 1".into()));
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::InvalidParameter(format!("bound {}", self.bound)));
        }
        if !(self.c >= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "reference skew C must be >= 2, got {}",
                self.c
            )));
        }
        if self.signs.len() != self.states || self.signs.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::InvalidParameter(
                "signs must be S entries in {-1, +1}".into(),
            ));
        }
        let half = self.bound / 2.0;
        let b = self.bias();
        let b_ok = b > 0.0 && (b < half || self.shift_into_range);
        if !b_ok {
            return Err(Error::HardInstanceBias {
                b,
                half_bound: half,
            });
        }
        if !(self.gap > 0.0 && self.gap < half) {
            return Err(Error::InvalidParameter(format!(
                "gap a = {} outside (0, {half})",
                self.gap
            )));
        }
        Ok(())
    }

    /// The reward table `r_v` for sign vector `v`.
    pub fn reward_for(&self, signs: &[i8]) -> Result<RewardTable> {
        let half = self.bound / 2.0;
        let (b, o) = (self.bias(), self.offset());
        let grid = Grid::from_fn(self.states, 2, |s, a| {
            if a == ACTION_MINUS {
                half + f64::from(signs[s]) * self.gap + o
            } else {
                half - b + o
            }
        });
        RewardTable::new(grid, self.bound)
    }

    /// Closed-form `pi*_v(-1 | s) = e^{beta(b + v_s a)} / (e^{beta(b + v_s a)} + C - 1)`.
    pub fn optimal_minus_prob(&self, v_s: i8) -> f64 {
        let e = (self.beta * (self.bias() + f64::from(v_s) * self.gap)).exp();
        e / (e + self.c - 1.0)
    }
}

/// `a = sqrt(S C) / ((e^eps - 1) sqrt(n))`, the gap that balances the
/// lower-bound argument at sample size `n`.
pub fn theory_gap(states: usize, c: f64, epsilon: f64, n: usize) -> f64 {
    (states as f64 * c).sqrt() / (epsilon.exp_m1() * (n as f64).sqrt())
}

fn class_sign_vectors(spec: &HardInstanceSpec) -> Vec<Vec<i8>> {
    let s = spec.states;
    if s <= spec.class.full_up_to {
        return (0..1usize << s)
            .map(|k| {
                (0..s)
                    .map(|i| if (k >> i) & 1 == 1 { 1 } else { -1 })
                    .collect()
            })
            .collect();
    }
    let v = spec.signs.clone();
    let neg: Vec<i8> = v.iter().map(|x| -x).collect();
    let mut out = vec![v, neg];
    let mut rng = Stream::new(spec.class.seed).rng();
    // Distinct draws only; the hypercube is astronomically larger than the
    // requested count whenever this branch runs.
    while out.len() < 2 + spec.class.extra_members {
        let cand: Vec<i8> = (0..s).map(|_| if rng.gen() { 1 } else { -1 }).collect();
        if !out.contains(&cand) {
            out.push(cand);
        }
    }
    out
}

/// Builds the binary lower-bound instance indexed by `spec.signs`.
pub fn hard_instance(spec: &HardInstanceSpec) -> Result<Instance> {
    spec.validate()?;
    let members = class_sign_vectors(spec)
        .iter()
        .map(|v| spec.reward_for(v))
        .collect::<Result<Vec<_>>>()?;
    let inv_c = 1.0 / spec.c;
    let pi_ref = PolicyTable::from_rows(&vec![vec![inv_c, 1.0 - inv_c]; spec.states])?;
    Instance::new(
        StateDistribution::uniform(spec.states),
        pi_ref,
        spec.reward_for(&spec.signs)?,
        FunctionClass::new(members)?,
        spec.beta,
    )
}

/// `sup_{s,a} pi(a|s) / pi_ref(a|s)`; `+inf` when `pi` leaves the reference support.
pub fn concentrability(pi: &PolicyTable, pi_ref: &PolicyTable) -> f64 {
    assert_eq!(pi.shape(), pi_ref.shape(), "policy shapes differ");
    pi.values()
        .iter()
        .zip(pi_ref.values())
        .map(|(&p, &q)| {
            if q > 0.0 {
                p / q
            } else if p > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// `E_{s~d0, a~pi*} D^2_F((s,a); pi_ref)`.
pub fn single_policy_d(inst: &Instance) -> f64 {
    let table = d_divergence_table(inst.fclass(), inst.pi_ref(), inst.d0());
    weighted_by_optimal(inst, &table)
}

pub(crate) fn weighted_by_optimal(inst: &Instance, table: &Grid) -> f64 {
    let mut total = 0.0;
    for (s, &w) in inst.d0().probs().iter().enumerate() {
        for a in 0..inst.actions() {
            let p = w * inst.pi_star().get(s, a);
            if p > 0.0 {
                total += p * table.get(s, a);
            }
        }
    }
    total
}

/// Records generated per independent random stream.
pub const SHARD_SIZE: usize = 8192;

/// `n` comparisons with both actions from `pi_ref`, returning the raw label
/// alongside its privatized version.
///
/// Shard `k` draws contexts, actions and raw labels from `stream.split(k).split(0)`
/// and randomized response from `stream.split(k).split(1)`.
pub fn offline_dataset_gen_raw(
    inst: &Instance,
    n: usize,
    pp: &PrivacyParams,
    stream: &Stream,
) -> Vec<(RawSample, PrivateSample)> {
    let states = state_sampler(inst.d0());
    let actions = RowSampler::new(inst.pi_ref());
    let shards = n.div_ceil(SHARD_SIZE);
    let parts: Vec<Vec<(RawSample, PrivateSample)>> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let len = SHARD_SIZE.min(n - k * SHARD_SIZE);
            let shard = stream.split(k as u64);
            let mut rng = shard.split(0).rng();
            let mut rr = shard.split(1).rng();
            (0..len)
                .map(|_| {
                    let s = states.sample(&mut rng);
                    let a1 = actions.sample(&mut rng, s);
                    let a2 = actions.sample(&mut rng, s);
                    let y = sample_preference(&mut rng, inst.r_star(), s, a1, a2)
                        .expect("sampled indices are in range");
                    let z = privatize_label(&mut rr, y, pp);
                    (RawSample { s, a1, a2, y }, PrivateSample { s, a1, a2, z })
                })
                .collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// `n` privatized comparisons drawn from `d0 × pi_ref × pi_ref`.
pub fn offline_dataset_gen(
    inst: &Instance,
    n: usize,
    pp: &PrivacyParams,
    stream: &Stream,
) -> Vec<PrivateSample> {
    offline_dataset_gen_raw(inst, n, pp, stream)
        .into_iter()
        .map(|(_, z)| z)
        .collect()
}

/// Policy with independent Dirichlet(1) rows, resampled until every entry
/// exceeds `1e-12` so KL terms stay finite.
pub fn random_policy<R: Rng + ?Sized>(
    rng: &mut R,
    states: usize,
    actions: usize,
) -> Result<PolicyTable> {
    if states < 1 || actions < 1 {
        return Err(Error::Dimension(format!(
            "policy needs S >= 1 and A >= 1, got ({states}, {actions})"
        )));
    }
    if actions == 1 {
        return Ok(PolicyTable::uniform(states, 1));
    }
    let dirichlet = Dirichlet::new_with_size(1.0, actions).expect("valid Dirichlet");
    let mut rows = Vec::with_capacity(states);
    while rows.len() < states {
        let row: Vec<f64> = dirichlet.sample(rng);
        if row.iter().all(|&p| p > 1e-12) {
            rows.push(row);
        }
    }
    PolicyTable::from_rows(&rows)
}

/// Random tabular instance with uniform `d0`, Dirichlet(1) reference rows,
/// uniform rewards, and a class holding `r*` at a random position.
pub fn random_instance(
    states: usize,
    actions: usize,
    class_size: usize,
    bound: f64,
    beta: f64,
    stream: &Stream,
) -> Result<Instance> {
    if states < 1 || actions < 2 {
        return Err(Error::Dimension(format!(
            "random instance needs S >= 1 and A >= 2, got ({states}, {actions})"
        )));
    }
    if class_size < 1 {
        return Err(Error::EmptyClass);
    }
    check_beta(beta)?;
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::InvalidParameter(format!("bound {bound}")));
    }
    let mut rng = stream.rng();
    let pi_ref = random_policy(&mut rng, states, actions)?;
    let table = |rng: &mut crate::rng::StreamRng| {
        RewardTable::new(
            Grid::from_fn(states, actions, |_, _| rng.gen_range(0.0..=bound)),
            bound,
        )
    };
    let r_star = table(&mut rng)?;
    let mut members = vec![r_star.clone()];
    for _ in 1..class_size {
        members.push(table(&mut rng)?);
    }
    members.shuffle(&mut rng);
    Instance::new(
        StateDistribution::uniform(states),
        pi_ref,
        r_star,
        FunctionClass::new(members)?,
        beta,
    )
}
