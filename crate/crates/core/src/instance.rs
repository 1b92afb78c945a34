//! Problem instances and their text serialization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_beta, gibbs_policy, objective_j};
use crate::table::{FunctionClass, PolicyTable, RewardTable, StateDistribution};

/// A tabular KL-regularized preference-learning problem.
///
/// The optimal Gibbs policy and its objective value are computed once at
/// construction; an `Instance` is immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    d0: StateDistribution,
    pi_ref: PolicyTable,
    r_star: RewardTable,
    fclass: FunctionClass,
    beta: f64,
    pi_star: PolicyTable,
    optimal_value: f64,
}

impl Instance {
    pub fn new(
        d0: StateDistribution,
        pi_ref: PolicyTable,
        r_star: RewardTable,
        fclass: FunctionClass,
        beta: f64,
    ) -> Result<Self> {
        check_beta(beta)?;
        let shape = r_star.shape();
        if pi_ref.shape() != shape || fclass.shape() != shape || d0.len() != shape.0 {
            return Err(Error::Dimension(format!(
                "d0 has {} states, pi_ref {:?}, r_star {:?}, class {:?}",
                d0.len(),
                pi_ref.shape(),
                shape,
                fclass.shape()
            )));
        }
        if fclass.get(0).bound() != r_star.bound() {
            return Err(Error::Dimension(format!(
                "class bound {} differs from reward bound {}",
                fclass.get(0).bound(),
                r_star.bound()
            )));
        }
        if let Some((state, action)) = pi_ref.first_zero() {
            return Err(Error::ZeroReference { state, action });
        }
        let pi_star = gibbs_policy(&r_star, &pi_ref, beta)?;
        let mut inst = Self {
            d0,
            pi_ref,
            r_star,
            fclass,
            beta,
            pi_star,
            optimal_value: 0.0,
        };
        inst.optimal_value = objective_j(&inst.pi_star, &inst)?;
        Ok(inst)
    }

    pub fn states(&self) -> usize {
        self.r_star.states()
    }

    pub fn actions(&self) -> usize {
        self.r_star.actions()
    }

    pub fn d0(&self) -> &StateDistribution {
        &self.d0
    }

    pub fn pi_ref(&self) -> &PolicyTable {
        &self.pi_ref
    }

    pub fn r_star(&self) -> &RewardTable {
        &self.r_star
    }

    pub fn fclass(&self) -> &FunctionClass {
        &self.fclass
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Reward bound `B`.
    pub fn bound(&self) -> f64 {
        self.r_star.bound()
    }

    /// The Gibbs policy of the true reward.
    pub fn pi_star(&self) -> &PolicyTable {
        &self.pi_star
    }

    /// `J(pi*)`.
    pub fn optimal_value(&self) -> f64 {
        self.optimal_value
    }

    /// Index of the true reward inside the class, if realizable.
    pub fn realizing_index(&self) -> Option<usize> {
        self.fclass.position(&self.r_star)
    }

    pub fn to_doc(&self) -> InstanceDoc {
        InstanceDoc {
            s_count: self.states(),
            a_count: self.actions(),
            bound: self.bound(),
            beta: self.beta,
            d0: self.d0.probs().to_vec(),
            pi_ref: self.pi_ref.to_rows(),
            r_star: self.r_star.to_rows(),
            fclass: self.fclass.members().iter().map(|m| m.to_rows()).collect(),
        }
    }

    pub fn from_doc(doc: &InstanceDoc) -> Result<Self> {
        let check = |rows: &[Vec<f64>], what: &str| -> Result<()> {
            if rows.len() != doc.s_count || rows.iter().any(|r| r.len() != doc.a_count) {
                return Err(Error::Dimension(format!(
                    "{what} does not match s_count = {}, a_count = {}",
                    doc.s_count, doc.a_count
                )));
            }
            Ok(())
        };
        check(&doc.pi_ref, "pi_ref")?;
        check(&doc.r_star, "r_star")?;
        for m in &doc.fclass {
            check(m, "fclass member")?;
        }
        let members = doc
            .fclass
            .iter()
            .map(|m| RewardTable::from_rows(m, doc.bound))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            StateDistribution::new(doc.d0.clone())?,
            PolicyTable::from_rows(&doc.pi_ref)?,
            RewardTable::from_rows(&doc.r_star, doc.bound)?,
            FunctionClass::new(members)?,
            doc.beta,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("instance document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk layout of an [`Instance`]; matrices are row-major nested arrays.
///
/// Floats are written in shortest round-trip form and parsed with correct
/// rounding, so `read(write(x)) == x` bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub s_count: usize,
    pub a_count: usize,
    #[serde(rename = "B")]
    pub bound: f64,
    pub beta: f64,
    pub d0: Vec<f64>,
    pub pi_ref: Vec<Vec<f64>>,
    pub r_star: Vec<Vec<f64>>,
    pub fclass: Vec<Vec<Vec<f64>>>,
}
