//! Randomized response on binary preference labels.

use std::ops::Neg;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::sigmoid;
use crate::table::RewardTable;

/// Preference label in `{-1, +1}`; `Plus` means the first action won.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i64")]
pub enum Label {
    Minus,
    Plus,
}

impl Label {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Minus => -1.0,
            Label::Plus => 1.0,
        }
    }

    pub fn from_bool(plus: bool) -> Self {
        if plus {
            Label::Plus
        } else {
            Label::Minus
        }
    }
}

impl Neg for Label {
    type Output = Label;
    fn neg(self) -> Label {
        match self {
            Label::Minus => Label::Plus,
            Label::Plus => Label::Minus,
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Minus => -1,
            Label::Plus => 1,
        }
    }
}

impl TryFrom<i64> for Label {
    type Error = Error;
    fn try_from(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(Label::Minus),
            1 => Ok(Label::Plus),
            other => Err(Error::InvalidLabel(other)),
        }
    }
}

/// Keep probability `e^eps / (e^eps + 1)`; exactly 1 for infinite epsilon.
pub fn rr_alpha(epsilon: f64) -> Result<f64> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    if epsilon.is_infinite() {
        return Ok(1.0);
    }
    Ok(1.0 / (1.0 + (-epsilon).exp()))
}

/// Privacy level of the label randomizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    epsilon: f64,
    alpha: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        Ok(Self {
            epsilon,
            alpha: rr_alpha(epsilon)?,
        })
    }

    /// `epsilon = +inf`, labels pass through unchanged.
    pub fn non_private() -> Self {
        Self {
            epsilon: f64::INFINITY,
            alpha: 1.0,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_non_private(&self) -> bool {
        self.epsilon.is_infinite()
    }

    /// `2 alpha - 1`, the signal retained by randomized response.
    pub fn signal(&self) -> f64 {
        2.0 * self.alpha - 1.0
    }

    /// Probability of flipping the label, `1 / (e^eps + 1)`.
    pub fn flip_prob(&self) -> f64 {
        if self.is_non_private() {
            0.0
        } else {
            1.0 / (1.0 + self.epsilon.exp())
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.5 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// Randomized response: keep `y` with probability alpha, flip otherwise.
///
/// No randomness is consumed when alpha is 1.
pub fn privatize_label<R: Rng + ?Sized>(rng: &mut R, y: Label, pp: &PrivacyParams) -> Label {
    if pp.is_non_private() {
        return y;
    }
    if rng.gen::<f64>() < pp.flip_prob() {
        -y
    } else {
        y
    }
}

/// The binary channel `P(z | y)` of a randomizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrChannel {
    keep: f64,
    flip: f64,
}

impl RrChannel {
    pub fn from_params(pp: &PrivacyParams) -> Self {
        Self {
            keep: pp.alpha(),
            flip: pp.flip_prob(),
        }
    }

    /// Channel with an arbitrary flip probability.
    pub fn with_flip_prob(flip: f64) -> Self {
        Self {
            keep: 1.0 - flip,
            flip,
        }
    }

    pub fn prob(&self, z: Label, y: Label) -> f64 {
        if z == y {
            self.keep
        } else {
            self.flip
        }
    }

    /// `max_{z, y, y'} P(z | y) / P(z | y')`, which equals `e^eps` for RR.
    pub fn worst_case_ratio(&self) -> f64 {
        let labels = [Label::Minus, Label::Plus];
        let mut worst = 0.0f64;
        for z in labels {
            for y in labels {
                for y2 in labels {
                    worst = worst.max(self.prob(z, y) / self.prob(z, y2));
                }
            }
        }
        worst
    }
}

/// `P(z | gap)` after randomized response, with `gap = r(s,a1) - r(s,a2)`.
#[inline]
pub fn private_label_prob_from_gap(z: Label, gap: f64, alpha: f64) -> f64 {
    let x = z.sign() * gap;
    alpha * sigmoid(x) + (1.0 - alpha) * sigmoid(-x)
}

/// Likelihood of the private label `z` under reward `r`.
pub fn private_label_prob(
    r: &RewardTable,
    z: Label,
    s: usize,
    a1: usize,
    a2: usize,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    r.check_index(s, a1)?;
    r.check_index(s, a2)?;
    Ok(private_label_prob_from_gap(z, r.gap(s, a1, a2), alpha))
}

/// `E[z | gap] = (2 alpha - 1)(2 sigma(gap) - 1)`.
#[inline]
pub fn debiased_mean(alpha: f64, delta_r: f64) -> f64 {
    (2.0 * alpha - 1.0) * (2.0 * sigmoid(delta_r) - 1.0)
}
