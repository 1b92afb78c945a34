//! Offline private pessimistic KL-regularized preference learning.
//!
//! Pipeline: maximum likelihood over the finite class using the
//! randomized-response likelihood, a pessimism bonus built from the class's
//! D-divergence under the reference policy, and the Gibbs policy of the
//! penalized reward.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::instances::{offline_dataset_gen, weighted_by_optimal};
use crate::model::gibbs_policy;
use crate::privacy::{check_alpha, private_label_prob_from_gap, PrivacyParams};
use crate::rng::Stream;
use crate::sample::{PairCounts, PrivateSample};
use crate::table::{FunctionClass, Grid, PolicyTable, RewardTable, StateDistribution};

/// Variance below this is treated as zero in the D-divergence.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    /// Simulated datasets used to pick the bonus multiplier.
    pub replays: usize,
    pub seed: u64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            replays: 200,
            seed: 0x5EED_CA11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BonusMode {
    /// The bonus formula with the configured constant.
    Theory,
    /// The bonus formula rescaled by the smallest grid multiplier whose
    /// pessimism event holds in at least `1 - delta` of simulated replays.
    Calibrated(CalibrationParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineParams {
    pub delta: f64,
    pub c_bonus: f64,
    /// Net resolution; always 0 for the finite classes supported here.
    pub tau: f64,
    pub bonus_mode: BonusMode,
    /// Bonus used where the D-divergence is infinite. Defaults to `2B`.
    pub bonus_cap: Option<f64>,
}

impl Default for OfflineParams {
    fn default() -> Self {
        Self {
            delta: 0.1,
            c_bonus: 16.0,
            tau: 0.0,
            bonus_mode: BonusMode::Theory,
            bonus_cap: None,
        }
    }
}

impl OfflineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidDelta(self.delta));
        }
        if !(self.c_bonus > 0.0 && self.c_bonus.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "c_bonus must be positive, got {}",
                self.c_bonus
            )));
        }
        if self.tau != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tau must be 0 for a finite class, got {}",
                self.tau
            )));
        }
        if let BonusMode::Calibrated(cal) = &self.bonus_mode {
            if cal.replays == 0 {
                return Err(Error::InvalidParameter(
                    "calibration needs replays >= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Private log-likelihood of every class member, in class order.
pub fn private_log_likelihoods(
    fclass: &FunctionClass,
    counts: &PairCounts,
    alpha: f64,
) -> Vec<f64> {
    fclass
        .members()
        .par_iter()
        .map(|r| {
            counts
                .cells()
                .map(|c| {
                    c.count as f64
                        * private_label_prob_from_gap(c.z, r.gap(c.s, c.a1, c.a2), alpha).ln()
                })
                .sum()
        })
        .collect()
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Private MLE over a finite class.
pub fn private_mle(
    fclass: &FunctionClass,
    data: &[PrivateSample],
    alpha: f64,
) -> Result<(usize, RewardTable)> {
    check_alpha(alpha)?;
    let (s, a) = fclass.shape();
    let counts = PairCounts::from_samples(s, a, data)?;
    let idx = argmax_first(&private_log_likelihoods(fclass, &counts, alpha));
    Ok((idx, fclass.get(idx).clone()))
}

/// Centered-difference statistics for one pair `(g, h)` under `pi`.
struct PairSpread {
    diff: Grid,
    means: Vec<f64>,
    variance: f64,
}

fn pair_spread(g: &Grid, h: &Grid, pi: &PolicyTable, d0: &StateDistribution) -> PairSpread {
    let diff = g
        .zip_map(h, |x, y| x - y)
        .expect("class members share a shape");
    let means: Vec<f64> = (0..diff.states())
        .map(|s| diff.row_mean(s, pi.row(s)))
        .collect();
    let variance = d0
        .probs()
        .iter()
        .enumerate()
        .map(|(s, w)| {
            let m = means[s];
            w * diff
                .row(s)
                .iter()
                .zip(pi.row(s))
                .map(|(x, p)| p * (x - m) * (x - m))
                .sum::<f64>()
        })
        .sum();
    PairSpread {
        diff,
        means,
        variance,
    }
}

fn pair_ratio(spread: &PairSpread, s: usize, a: usize) -> f64 {
    let centered = spread.diff.get(s, a) - spread.means[s];
    let num = centered * centered;
    if spread.variance < VARIANCE_FLOOR {
        if num < VARIANCE_FLOOR {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / spread.variance
    }
}

fn check_divergence_shapes(fclass: &FunctionClass, pi: &PolicyTable, d0: &StateDistribution) {
    assert_eq!(fclass.shape(), pi.shape(), "class and policy shapes differ");
    assert_eq!(d0.len(), pi.states(), "d0 and policy state counts differ");
}

/// `D^2_F((s, a); pi)` with the bias fixed to the per-state mean difference
/// under `pi`. Pairs with no spread contribute 0 if also centered at `(s, a)`,
/// `+inf` otherwise.
pub fn d_divergence_sq(
    fclass: &FunctionClass,
    s: usize,
    a: usize,
    pi: &PolicyTable,
    d0: &StateDistribution,
) -> Result<f64> {
    check_divergence_shapes(fclass, pi, d0);
    pi.check_index(s, a)?;
    let m = fclass.members();
    let mut best = 0.0f64;
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            best = best.max(pair_ratio(&pair_spread(&m[i], &m[j], pi, d0), s, a));
        }
    }
    Ok(best)
}

/// [`d_divergence_sq`] for every `(s, a)` at once.
pub fn d_divergence_table(
    fclass: &FunctionClass,
    pi: &PolicyTable,
    d0: &StateDistribution,
) -> Grid {
    check_divergence_shapes(fclass, pi, d0);
    let m = fclass.members();
    let (states, actions) = pi.shape();
    let pairs: Vec<(usize, usize)> = (0..m.len())
        .flat_map(|i| (i + 1..m.len()).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let spread = pair_spread(&m[i], &m[j], pi, d0);
            Grid::from_fn(states, actions, |s, a| pair_ratio(&spread, s, a))
        })
        .reduce(
            || Grid::zeros(states, actions),
            |x, y| x.zip_map(&y, f64::max).expect("same shape"),
        )
}

/// Inputs of the pessimism bonus other than the D-divergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonusInputs {
    pub alpha: f64,
    pub n: usize,
    /// Covering number `N_F(tau)`; the class size for finite classes.
    pub class_size: usize,
    pub delta: f64,
    pub c_bonus: f64,
    pub tau: f64,
    pub bound: f64,
    /// Returned when `d_sq` is infinite.
    pub cap: f64,
}

/// `sqrt(D^2 * c e^B / (2 alpha - 1)^2 * (log(N_F / delta) / n + tau))`.
pub fn pessimism_bonus(d_sq: f64, inp: &BonusInputs) -> Result<f64> {
    if inp.n == 0 {
        return Err(Error::ZeroSamples);
    }
    check_alpha(inp.alpha)?;
    if !(inp.delta > 0.0 && inp.delta < 1.0) {
        return Err(Error::InvalidDelta(inp.delta));
    }
    if d_sq.is_infinite() {
        return Ok(inp.cap);
    }
    let signal = 2.0 * inp.alpha - 1.0;
    let scale = inp.c_bonus * inp.bound.exp() / (signal * signal);
    let rate = (inp.class_size as f64 / inp.delta).ln() / inp.n as f64 + inp.tau;
    Ok((d_sq * scale * rate).sqrt())
}

/// `r_bar - b - r*` with `b(s) = E_{a~pi_ref}[r_bar(s,a) - r*(s,a)]`.
pub fn centered_error(r_bar: &Grid, r_star: &Grid, pi_ref: &PolicyTable) -> Grid {
    let diff = r_bar.zip_map(r_star, |x, y| x - y).expect("same shape");
    Grid::from_fn(diff.states(), diff.actions(), |s, a| {
        diff.get(s, a) - diff.row_mean(s, pi_ref.row(s))
    })
}

/// Whether `r_bar(s,a) - b(s) - r*(s,a) <= gamma(s,a)` everywhere, with the
/// mean-centering bias under `pi_ref`.
pub fn pessimism_event_holds(r_bar: &Grid, gamma: &Grid, inst: &Instance) -> bool {
    let err = centered_error(r_bar, inst.r_star(), inst.pi_ref());
    err.values()
        .iter()
        .zip(gamma.values())
        .all(|(e, g)| *e <= *g + 1e-12)
}

/// Candidate bonus multipliers for calibrated mode: 0 and `2^(k/4)` for
/// `k = -48..=24`, ascending.
pub fn calibration_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((-48..=24).map(|k| 2f64.powf(k as f64 / 4.0)))
        .collect()
}

/// Bonus table `Gamma_n(s, a)` at multiplier 1.
pub fn theory_bonus_table(
    inst: &Instance,
    d_sq: &Grid,
    n: usize,
    pp: &PrivacyParams,
    params: &OfflineParams,
) -> Result<Grid> {
    let inputs = BonusInputs {
        alpha: pp.alpha(),
        n,
        class_size: inst.fclass().len(),
        delta: params.delta,
        c_bonus: params.c_bonus,
        tau: params.tau,
        bound: inst.bound(),
        cap: params.bonus_cap.unwrap_or(2.0 * inst.bound()),
    };
    let mut out = Grid::zeros(d_sq.states(), d_sq.actions());
    for s in 0..d_sq.states() {
        for a in 0..d_sq.actions() {
            out.set(s, a, pessimism_bonus(d_sq.get(s, a), &inputs)?);
        }
    }
    Ok(out)
}

/// Smallest grid multiplier `m` such that the pessimism event with bonus
/// `m * Gamma_n` holds in at least `1 - delta` of simulated datasets of size `n`.
///
/// Replay `k` uses `Stream::new(seed).split(k)`.
pub fn calibrate_bonus_multiplier(
    inst: &Instance,
    n: usize,
    pp: &PrivacyParams,
    params: &OfflineParams,
) -> Result<f64> {
    params.validate()?;
    let cal = match &params.bonus_mode {
        BonusMode::Calibrated(c) => c.clone(),
        BonusMode::Theory => return Ok(1.0),
    };
    let d_sq = d_divergence_table(inst.fclass(), inst.pi_ref(), inst.d0());
    let gamma = theory_bonus_table(inst, &d_sq, n, pp, params)?;
    let (states, actions) = inst.fclass().shape();
    let root = Stream::new(cal.seed);
    let errors: Vec<Grid> = (0..cal.replays)
        .map(|k| {
            let data = offline_dataset_gen(inst, n, pp, &root.split(k as u64));
            let counts = PairCounts::from_samples(states, actions, &data)?;
            let idx = argmax_first(&private_log_likelihoods(inst.fclass(), &counts, pp.alpha()));
            Ok(centered_error(
                inst.fclass().get(idx),
                inst.r_star(),
                inst.pi_ref(),
            ))
        })
        .collect::<Result<_>>()?;
    let target = (1.0 - params.delta) * cal.replays as f64;
    let grid = calibration_grid();
    for &m in &grid {
        let held = errors
            .iter()
            .filter(|err| {
                err.values()
                    .iter()
                    .zip(gamma.values())
                    .all(|(e, g)| *e <= m * g + 1e-12)
            })
            .count();
        if held as f64 >= target - 1e-9 {
            return Ok(m);
        }
    }
    Err(Error::CalibrationFailed {
        max_multiplier: *grid.last().expect("nonempty grid"),
        target: 1.0 - params.delta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineDiagnostics {
    pub log_likelihoods: Vec<f64>,
    /// `D^2_F((s,a); pi_ref)`.
    pub d_sq: Grid,
    /// `E_{d0 × pi*} D^2`.
    pub d_pi_star_sq: f64,
    /// Factor applied to the bonus formula (1 in theory mode).
    pub bonus_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineResult {
    pub rbar_index: usize,
    pub r_bar: RewardTable,
    pub gamma: Grid,
    /// `r_bar - gamma`, unclipped.
    pub r_hat: Grid,
    pub pi_hat: PolicyTable,
    pub diagnostics: OfflineDiagnostics,
}

fn json_number(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else if x > 0.0 {
        serde_json::json!("inf")
    } else {
        serde_json::json!("-inf")
    }
}

fn json_rows(g: &Grid) -> serde_json::Value {
    serde_json::Value::Array(
        g.to_rows()
            .iter()
            .map(|r| serde_json::Value::Array(r.iter().map(|&x| json_number(x)).collect()))
            .collect(),
    )
}

impl OfflineResult {
    /// Structured text export; matrices are row-major, infinite values are
    /// written as the string `"inf"`.
    pub fn to_export_json(&self) -> String {
        let d = &self.diagnostics;
        let v = serde_json::json!({
            "rbar_index": self.rbar_index,
            "r_bar": json_rows(&self.r_bar),
            "gamma": json_rows(&self.gamma),
            "r_hat": json_rows(&self.r_hat),
            "pi_hat": json_rows(&self.pi_hat),
            "diagnostics": {
                "log_likelihoods": d.log_likelihoods.iter().map(|&x| json_number(x)).collect::<Vec<_>>(),
                "d_sq": json_rows(&d.d_sq),
                "d_pi_star_sq": json_number(d.d_pi_star_sq),
                "bonus_multiplier": d.bonus_multiplier,
            }
        });
        serde_json::to_string_pretty(&v).expect("json value serializes")
    }
}

/// Runs the offline algorithm with a fixed bonus multiplier.
pub fn ppkl_run_with_multiplier(
    inst: &Instance,
    data: &[PrivateSample],
    pp: &PrivacyParams,
    params: &OfflineParams,
    multiplier: f64,
) -> Result<OfflineResult> {
    params.validate()?;
    let (states, actions) = inst.fclass().shape();
    let counts = PairCounts::from_samples(states, actions, data)?;
    let log_likelihoods = private_log_likelihoods(inst.fclass(), &counts, pp.alpha());
    let rbar_index = argmax_first(&log_likelihoods);
    let r_bar = inst.fclass().get(rbar_index).clone();

    let d_sq = d_divergence_table(inst.fclass(), inst.pi_ref(), inst.d0());
    let mut gamma = theory_bonus_table(inst, &d_sq, data.len(), pp, params)?;
    if multiplier != 1.0 {
        gamma = Grid::from_fn(states, actions, |s, a| multiplier * gamma.get(s, a));
    }
    let r_hat = r_bar.zip_map(&gamma, |r, g| r - g)?;
    let pi_hat = gibbs_policy(&r_hat, inst.pi_ref(), inst.beta())?;
    let d_pi_star_sq = weighted_by_optimal(inst, &d_sq);
    Ok(OfflineResult {
        rbar_index,
        r_bar,
        gamma,
        r_hat,
        pi_hat,
        diagnostics: OfflineDiagnostics {
            log_likelihoods,
            d_sq,
            d_pi_star_sq,
            bonus_multiplier: multiplier,
        },
    })
}

/// MLE, pessimism and Gibbs policy on a privatized offline dataset.
pub fn ppkl_run(
    inst: &Instance,
    data: &[PrivateSample],
    pp: &PrivacyParams,
    params: &OfflineParams,
) -> Result<OfflineResult> {
    let multiplier = calibrate_bonus_multiplier(inst, data.len().max(1), pp, params)?;
    ppkl_run_with_multiplier(inst, data, pp, params, multiplier)
}
