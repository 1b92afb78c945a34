//! Bradley–Terry preferences, Gibbs policies and the KL-regularized objective.

use rand::Rng;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::privacy::Label;
use crate::table::{Grid, PolicyTable, RewardTable, StateDistribution};

const SIGMOID_CLAMP: f64 = 700.0;

/// Logistic function, evaluated on the side that cannot overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `P[y = +1 | s, a1, a2] = sigma(r(s,a1) - r(s,a2))`.
pub fn bt_preference_prob(r: &RewardTable, s: usize, a1: usize, a2: usize) -> Result<f64> {
    r.check_index(s, a1)?;
    r.check_index(s, a2)?;
    Ok(sigmoid(r.gap(s, a1, a2)))
}

/// Draws a raw preference label from the Bradley–Terry model.
pub fn sample_preference<R: Rng + ?Sized>(
    rng: &mut R,
    r: &RewardTable,
    s: usize,
    a1: usize,
    a2: usize,
) -> Result<Label> {
    let p = bt_preference_prob(r, s, a1, a2)?;
    Ok(Label::from_bool(rng.gen::<f64>() < p))
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBeta(beta))
    }
}

/// `pi(a|s) ∝ base(a|s) exp(beta * score(s,a))`, normalized per row.
///
/// `score` may be any real table (pessimistic or optimistic rewards leave
/// `[0, B]`). Rows are evaluated in log space after subtracting the row max.
pub fn gibbs_policy(score: &Grid, base: &PolicyTable, beta: f64) -> Result<PolicyTable> {
    check_beta(beta)?;
    if score.shape() != base.shape() {
        return Err(Error::Dimension(format!(
            "score {:?} vs base policy {:?}",
            score.shape(),
            base.shape()
        )));
    }
    if let Some((state, action)) = base.first_zero() {
        return Err(Error::ZeroReference { state, action });
    }
    let (states, actions) = score.shape();
    let mut out = Grid::zeros(states, actions);
    let mut logits = vec![0.0; actions];
    for s in 0..states {
        for (a, l) in logits.iter_mut().enumerate() {
            *l = base.get(s, a).ln() + beta * score.get(s, a);
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            total += *l;
        }
        for (a, w) in logits.iter().enumerate() {
            out.set(s, a, w / total);
        }
    }
    Ok(PolicyTable::from_normalized(out))
}

/// `KL(p || q)` for one row with `0 log 0 = 0`; `+inf` if `p > 0 = q`.
pub fn kl_row(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            if pi <= 0.0 {
                0.0
            } else if qi <= 0.0 {
                f64::INFINITY
            } else {
                pi * (pi / qi).ln()
            }
        })
        .sum()
}

/// `E_{s~d0} KL(pi(.|s) || other(.|s))`.
pub fn expected_kl(pi: &PolicyTable, other: &PolicyTable, d0: &StateDistribution) -> f64 {
    d0.probs()
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(s, w)| w * kl_row(pi.row(s), other.row(s)))
        .sum()
}

/// KL-regularized objective for an arbitrary reward table.
pub fn regularized_objective(
    pi: &PolicyTable,
    reward: &Grid,
    pi_ref: &PolicyTable,
    d0: &StateDistribution,
    beta: f64,
) -> Result<f64> {
    check_beta(beta)?;
    if pi.shape() != reward.shape() || pi.shape() != pi_ref.shape() || d0.len() != pi.states() {
        return Err(Error::Dimension(
            "objective operands disagree in shape".into(),
        ));
    }
    let mut total = 0.0;
    for (s, &w) in d0.probs().iter().enumerate() {
        let mut row = 0.0;
        for a in 0..pi.actions() {
            let p = pi.get(s, a);
            if p <= 0.0 {
                continue;
            }
            let q = pi_ref.get(s, a);
            if q <= 0.0 {
                return Err(Error::InfiniteKl {
                    state: s,
                    action: a,
                });
            }
            row += p * (reward.get(s, a) - (p / q).ln() / beta);
        }
        total += w * row;
    }
    Ok(total)
}

/// `J(pi)` on an instance.
pub fn objective_j(pi: &PolicyTable, inst: &Instance) -> Result<f64> {
    regularized_objective(pi, inst.r_star(), inst.pi_ref(), inst.d0(), inst.beta())
}

/// `J(pi*) - J(pi)`.
pub fn suboptimality(pi: &PolicyTable, inst: &Instance) -> Result<f64> {
    Ok(inst.optimal_value() - objective_j(pi, inst)?)
}
