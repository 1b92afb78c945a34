//! State × action tables and the distributions built on them.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row sums of stochastic tables.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Dense row-major matrix indexed by (state, action).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    states: usize,
    actions: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn zeros(states: usize, actions: usize) -> Self {
        Self::filled(states, actions, 0.0)
    }

    pub fn filled(states: usize, actions: usize, value: f64) -> Self {
        Self {
            states,
            actions,
            values: vec![value; states * actions],
        }
    }

    pub fn from_fn(states: usize, actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(states * actions);
        for s in 0..states {
            for a in 0..actions {
                values.push(f(s, a));
            }
        }
        Self {
            states,
            actions,
            values,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let states = rows.len();
        if states == 0 {
            return Err(Error::Dimension("table needs at least one row".into()));
        }
        let actions = rows[0].len();
        if rows.iter().any(|r| r.len() != actions) {
            return Err(Error::Dimension("ragged table rows".into()));
        }
        Ok(Self {
            states,
            actions,
            values: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks(self.actions)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.states, self.actions)
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn check_index(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.states {
            return Err(Error::IndexOutOfRange {
                what: "state",
                index: s,
                limit: self.states,
            });
        }
        if a >= self.actions {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                limit: self.actions,
            });
        }
        Ok(())
    }

    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Grid {
            states: self.states,
            actions: self.actions,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&x, &y)| f(x, y))
                .collect(),
        })
    }

    /// Expectation of row `s` under the probability row `probs`.
    pub fn row_mean(&self, s: usize, probs: &[f64]) -> f64 {
        self.row(s).iter().zip(probs).map(|(v, p)| v * p).sum()
    }
}

/// Reward values in `[0, bound]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    grid: Grid,
    bound: f64,
}

impl RewardTable {
    pub fn new(grid: Grid, bound: f64) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "reward bound must be positive, got {bound}"
            )));
        }
        if grid.states() < 1 || grid.actions() < 2 {
            return Err(Error::Dimension(format!(
                "reward table needs S >= 1 and A >= 2, got {:?}",
                grid.shape()
            )));
        }
        for s in 0..grid.states() {
            for a in 0..grid.actions() {
                let v = grid.get(s, a);
                if !(0.0..=bound).contains(&v) {
                    return Err(Error::RewardOutOfRange {
                        state: s,
                        action: a,
                        value: v,
                        bound,
                    });
                }
            }
        }
        Ok(Self { grid, bound })
    }

    pub fn from_rows(rows: &[Vec<f64>], bound: f64) -> Result<Self> {
        Self::new(Grid::from_rows(rows)?, bound)
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Reward gap `r(s, a1) - r(s, a2)`.
    #[inline]
    pub fn gap(&self, s: usize, a1: usize, a2: usize) -> f64 {
        self.grid.get(s, a1) - self.grid.get(s, a2)
    }
}

impl Deref for RewardTable {
    type Target = Grid;
    fn deref(&self) -> &Grid {
        &self.grid
    }
}

fn check_simplex(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidDistribution(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what} sums to {total}"
        )));
    }
    Ok(())
}

/// Row-stochastic conditional distribution over actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    grid: Grid,
}

impl PolicyTable {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.states() < 1 || grid.actions() < 1 {
            return Err(Error::Dimension("empty policy".into()));
        }
        for s in 0..grid.states() {
            check_simplex(grid.row(s), &format!("policy row {s}"))?;
        }
        Ok(Self { grid })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Grid::from_rows(rows)?)
    }

    pub fn uniform(states: usize, actions: usize) -> Self {
        Self {
            grid: Grid::filled(states, actions, 1.0 / actions as f64),
        }
    }

    /// Used by constructors that normalize rows themselves.
    pub(crate) fn from_normalized(grid: Grid) -> Self {
        debug_assert!((0..grid.states()).all(|s| check_simplex(grid.row(s), "row").is_ok()));
        Self { grid }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.grid.values().iter().all(|&p| p > 0.0)
    }

    /// First zero entry, if any.
    pub fn first_zero(&self) -> Option<(usize, usize)> {
        let idx = self.grid.values().iter().position(|&p| p <= 0.0)?;
        Some((idx / self.grid.actions(), idx % self.grid.actions()))
    }
}

impl Deref for PolicyTable {
    type Target = Grid;
    fn deref(&self) -> &Grid {
        &self.grid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    probs: Vec<f64>,
}

impl StateDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Dimension("empty state distribution".into()));
        }
        check_simplex(&probs, "state distribution")?;
        Ok(Self { probs })
    }

    pub fn uniform(states: usize) -> Self {
        Self {
            probs: vec![1.0 / states as f64; states],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Finite candidate reward class. Members share shape and bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionClass {
    members: Vec<RewardTable>,
}

impl FunctionClass {
    pub fn new(members: Vec<RewardTable>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyClass)?;
        let (shape, bound) = (first.shape(), first.bound());
        for (i, m) in members.iter().enumerate() {
            if m.shape() != shape || m.bound() != bound {
                return Err(Error::Dimension(format!(
                    "class member {i} has shape {:?} / bound {}, expected {:?} / {}",
                    m.shape(),
                    m.bound(),
                    shape,
                    bound
                )));
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[RewardTable] {
        &self.members
    }

    pub fn get(&self, i: usize) -> &RewardTable {
        &self.members[i]
    }

    /// Cardinality `N_F`.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.members[0].shape()
    }

    /// Index of the first member equal to `table` entry for entry.
    pub fn position(&self, table: &RewardTable) -> Option<usize> {
        self.members.iter().position(|m| m == table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_range_is_enforced() {
        assert!(RewardTable::from_rows(&[vec![0.0, 1.0]], 1.0).is_ok());
        let err = RewardTable::from_rows(&[vec![0.0, 1.5]], 1.0).unwrap_err();
        assert!(matches!(err, Error::RewardOutOfRange { action: 1, .. }));
        assert!(RewardTable::from_rows(&[vec![0.5]], 1.0).is_err());
    }

    #[test]
    fn policy_rows_must_be_stochastic() {
        assert!(PolicyTable::from_rows(&[vec![0.25, 0.75], vec![1.0, 0.0]]).is_ok());
        assert!(PolicyTable::from_rows(&[vec![0.25, 0.7]]).is_err());
        assert!(PolicyTable::from_rows(&[vec![-0.1, 1.1]]).is_err());
        let p = PolicyTable::from_rows(&[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        assert_eq!(p.first_zero(), Some((1, 1)));
        assert!(!p.is_strictly_positive());
    }

    #[test]
    fn class_requires_matching_members() {
        assert_eq!(FunctionClass::new(vec![]).unwrap_err(), Error::EmptyClass);
        let a = RewardTable::from_rows(&[vec![0.0, 1.0]], 1.0).unwrap();
        let b = RewardTable::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]], 1.0).unwrap();
        assert!(FunctionClass::new(vec![a.clone(), b]).is_err());
        let c = FunctionClass::new(vec![a.clone(), a.clone()]).unwrap();
        assert_eq!(c.position(&a), Some(0));
    }
}
