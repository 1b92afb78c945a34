//! Sweep configuration: a TOML document with `[instance]`, `[privacy]`,
//! `[offline]`, `[online]` and `[sweep]` sections.

use std::fmt;
use std::path::{Path, PathBuf};

use ldprlhf::instance::Instance;
use ldprlhf::instances::{
    hard_instance, random_instance, theory_gap, HardClassSpec, HardInstanceSpec,
};
use ldprlhf::offline::{BonusMode, CalibrationParams, OfflineParams};
use ldprlhf::online::OnlineParams;
use ldprlhf::privacy::PrivacyParams;
use ldprlhf::rng::Stream;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Offline,
    Online,
    Invariants,
    GenInstance,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Offline => "offline",
            Mode::Online => "online",
            Mode::Invariants => "invariants",
            Mode::GenInstance => "gen-instance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapName {
    Theory,
}

/// Hard-instance gap: a number, or `"theory"` for `sqrt(S C) / ((e^eps - 1) sqrt(n))`
/// evaluated at each cell's `epsilon` and `n` (the horizon for online sweeps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gap {
    Fixed(f64),
    Named(GapName),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardConfig {
    pub states: usize,
    pub c: f64,
    pub beta: f64,
    pub bound: f64,
    pub gap: Gap,
    #[serde(default)]
    pub shift_into_range: bool,
    /// Sign vector; alternating `+1, -1, ...` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signs: Option<Vec<i8>>,
    #[serde(default)]
    pub class_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomConfig {
    pub states: usize,
    pub actions: usize,
    pub class_size: usize,
    pub bound: f64,
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstanceConfig {
    Hard(HardConfig),
    Random(RandomConfig),
    File(FileConfig),
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig::Hard(HardConfig {
            states: 4,
            c: 4.0,
            beta: 1.0,
            bound: 2.0,
            gap: Gap::Named(GapName::Theory),
            shift_into_range: true,
            signs: None,
            class_seed: 0,
        })
    }
}

impl InstanceConfig {
    /// Builds the instance for one cell. `n` is the sample size (or horizon)
    /// used by a theory-matched gap.
    pub fn build(&self, epsilon: f64, n: usize) -> Result<Instance, ConfigError> {
        let inst = match self {
            InstanceConfig::Hard(h) => {
                let gap = match h.gap {
                    Gap::Fixed(a) => a,
                    Gap::Named(GapName::Theory) => {
                        if !epsilon.is_finite() {
                            return Err(ConfigError::Invalid(
                                "a theory-matched gap needs a finite epsilon".into(),
                            ));
                        }
                        theory_gap(h.states, h.c, epsilon, n)
                    }
                };
                let mut spec = HardInstanceSpec::new(h.states, h.c, gap, h.beta, h.bound);
                if let Some(signs) = &h.signs {
                    spec.signs = signs.clone();
                }
                spec.shift_into_range = h.shift_into_range;
                spec.class = HardClassSpec {
                    seed: h.class_seed,
                    ..HardClassSpec::default()
                };
                hard_instance(&spec)
            }
            InstanceConfig::Random(r) => random_instance(
                r.states,
                r.actions,
                r.class_size,
                r.bound,
                r.beta,
                &Stream::new(r.seed),
            ),
            InstanceConfig::File(f) => Instance::load(&f.path),
        };
        inst.map_err(ConfigError::Instance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrivacyConfig {
    pub epsilons: Vec<f64>,
    /// Replaces the randomized-response flip probability in the invariant
    /// suite's channel checks. Only meant for sabotage tests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rr_flip_override: Option<f64>,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            epsilons: vec![1.0],
            rr_flip_override: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BonusModeName {
    Theory,
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfflineConfig {
    pub n_values: Vec<usize>,
    pub delta: f64,
    pub c_bonus: f64,
    pub bonus_mode: BonusModeName,
    pub calibration_replays: usize,
    pub calibration_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bonus_cap: Option<f64>,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        let p = OfflineParams::default();
        let cal = CalibrationParams::default();
        Self {
            n_values: Vec::new(),
            delta: p.delta,
            c_bonus: p.c_bonus,
            bonus_mode: BonusModeName::Theory,
            calibration_replays: cal.replays,
            calibration_seed: cal.seed,
            bonus_cap: None,
        }
    }
}

impl OfflineConfig {
    pub fn params(&self) -> OfflineParams {
        OfflineParams {
            delta: self.delta,
            c_bonus: self.c_bonus,
            tau: 0.0,
            bonus_mode: match self.bonus_mode {
                BonusModeName::Theory => BonusMode::Theory,
                BonusModeName::Calibrated => BonusMode::Calibrated(CalibrationParams {
                    replays: self.calibration_replays,
                    seed: self.calibration_seed,
                }),
            },
            bonus_cap: self.bonus_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OnlineConfig {
    pub horizons: Vec<usize>,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub gamma_scale: f64,
    pub bonus_over_confidence_set: bool,
    pub symmetric_sampling: bool,
    /// Rounds at which `Reg(t) / log t` is reported; each must be >= 2.
    pub checkpoints: Vec<usize>,
    pub write_traces: bool,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        let p = OnlineParams::default();
        Self {
            horizons: Vec::new(),
            delta: p.delta,
            lambda: None,
            gamma_scale: p.gamma_scale,
            bonus_over_confidence_set: p.bonus_over_confidence_set,
            symmetric_sampling: p.symmetric_sampling,
            checkpoints: Vec::new(),
            write_traces: true,
        }
    }
}

impl OnlineConfig {
    pub fn params(&self, horizon: usize) -> OnlineParams {
        OnlineParams {
            horizon,
            delta: self.delta,
            lambda: self.lambda,
            gamma_scale: self.gamma_scale,
            bonus_over_confidence_set: self.bonus_over_confidence_set,
            symmetric_sampling: self.symmetric_sampling,
            record_policies: false,
        }
    }
}

/// Seeds as a half-open range `"a..b"` or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Range(String),
    List(Vec<u64>),
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Range("0..20".into())
    }
}

pub fn parse_seed_range(text: &str) -> Result<(u64, u64), ConfigError> {
    let bad = || ConfigError::SeedRange(text.to_string());
    let (a, b) = text.split_once("..").ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if a >= b {
        return Err(bad());
    }
    Ok((a, b))
}

impl Seeds {
    pub fn expand(&self) -> Result<Vec<u64>, ConfigError> {
        match self {
            Seeds::Range(text) => {
                let (a, b) = parse_seed_range(text)?;
                Ok((a..b).collect())
            }
            Seeds::List(list) => {
                if list.is_empty() {
                    return Err(ConfigError::EmptyGrid("sweep.seeds"));
                }
                let mut sorted = list.clone();
                sorted.sort_unstable();
                if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                    return Err(ConfigError::DuplicateSeed(w[0]));
                }
                Ok(list.clone())
            }
        }
    }

    /// Compact description for file footers.
    pub fn describe(&self) -> String {
        match self {
            Seeds::Range(text) => text.replace(' ', ""),
            Seeds::List(list) => list
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub seeds: Seeds,
    /// Worker threads; does not affect any output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub instance: InstanceConfig,
    #[serde(default)]
    pub privacy: PrivacyConfig,
    #[serde(default)]
    pub offline: OfflineConfig,
    #[serde(default)]
    pub online: OnlineConfig,
    #[serde(default)]
    pub sweep: SweepSection,
    /// Output directory; set from the command line.
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            mode: None,
            instance: InstanceConfig::default(),
            privacy: PrivacyConfig::default(),
            offline: OfflineConfig::default(),
            online: OnlineConfig::default(),
            sweep: SweepSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn mode(&self) -> Result<Mode, ConfigError> {
        self.mode.ok_or(ConfigError::MissingMode)
    }

    pub fn seeds(&self) -> Result<Vec<u64>, ConfigError> {
        self.sweep.seeds.expand()
    }

    /// SHA-256 of the canonical TOML form, excluding the thread count and
    /// output directory (neither affects results).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.sweep.threads = None;
        let text = toml::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Checks the sections used by the selected mode; builds every instance
    /// the sweep will need so that construction errors surface up front.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mode = self.mode()?;
        self.seeds()?;
        if self.sweep.threads == Some(0) {
            return Err(ConfigError::Invalid("sweep.threads must be >= 1".into()));
        }
        let eps = &self.privacy.epsilons;
        if mode != Mode::Invariants && eps.is_empty() {
            return Err(ConfigError::EmptyGrid("privacy.epsilons"));
        }
        for &e in eps {
            if !(e > 0.0) {
                return Err(ConfigError::Epsilon(e));
            }
        }
        if let Some(flip) = self.privacy.rr_flip_override {
            if !(0.0..=0.5).contains(&flip) {
                return Err(ConfigError::Invalid(format!(
                    "privacy.rr_flip_override must lie in [0, 0.5], got {flip}"
                )));
            }
        }
        match mode {
            Mode::Offline => self.validate_offline(),
            Mode::Online => self.validate_online(),
            Mode::GenInstance => {
                let n = self.offline.n_values.first().copied().unwrap_or(1);
                self.instance.build(eps[0], n.max(1)).map(|_| ())
            }
            Mode::Invariants => Ok(()),
        }
    }

    fn validate_offline(&self) -> Result<(), ConfigError> {
        let o = &self.offline;
        if o.n_values.is_empty() {
            return Err(ConfigError::EmptyGrid("offline.n_values"));
        }
        if o.n_values.contains(&0) {
            return Err(ConfigError::Invalid("offline.n_values must be >= 1".into()));
        }
        if !(o.delta > 0.0 && o.delta < 1.0) {
            return Err(ConfigError::Delta {
                section: "offline",
                value: o.delta,
            });
        }
        o.params().validate().map_err(ConfigError::Params)?;
        for &e in &self.privacy.epsilons {
            for &n in &o.n_values {
                self.instance.build(e, n)?;
            }
        }
        Ok(())
    }

    fn validate_online(&self) -> Result<(), ConfigError> {
        let o = &self.online;
        if o.horizons.is_empty() {
            return Err(ConfigError::EmptyGrid("online.horizons"));
        }
        if o.horizons.contains(&0) {
            return Err(ConfigError::Invalid("online.horizons must be >= 1".into()));
        }
        if !(o.delta > 0.0 && o.delta < 1.0) {
            return Err(ConfigError::Delta {
                section: "online",
                value: o.delta,
            });
        }
        if !(o.gamma_scale > 0.0 && o.gamma_scale.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "online.gamma_scale must be positive, got {}",
                o.gamma_scale
            )));
        }
        if let Some(l) = o.lambda {
            if !(l > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "online.lambda must be positive, got {l}"
                )));
            }
        }
        if o.checkpoints.iter().any(|&t| t < 2) {
            return Err(ConfigError::Invalid(
                "online.checkpoints must be >= 2 (log 1 = 0)".into(),
            ));
        }
        for &e in &self.privacy.epsilons {
            let pp = PrivacyParams::new(e).map_err(ConfigError::Params)?;
            for &t in &o.horizons {
                let inst = self.instance.build(e, t)?;
                match o.params(t).resolve(inst.bound(), inst.fclass().len(), &pp) {
                    Ok(_) => {}
                    Err(ldprlhf::Error::LambdaTooLarge { lambda, limit }) => {
                        return Err(ConfigError::LambdaTooLarge {
                            lambda,
                            limit,
                            horizon: t,
                            epsilon: e,
                        })
                    }
                    Err(err) => return Err(ConfigError::Params(err)),
                }
            }
        }
        Ok(())
    }
}
