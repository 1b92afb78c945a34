//! Offline and online sweeps over `(cell, seed)` grids.
//!
//! Jobs run in parallel, but results are collected in `(cell, seed)` order,
//! so summaries do not depend on the thread count.

use ldprlhf::instance::Instance;
use ldprlhf::instances::offline_dataset_gen;
use ldprlhf::model::suboptimality;
use ldprlhf::offline::{
    calibrate_bonus_multiplier, centered_error, pessimism_event_holds, ppkl_run_with_multiplier,
};
use ldprlhf::online::{pokl_run, write_trace_csv, RunTrace};
use ldprlhf::privacy::PrivacyParams;
use ldprlhf::rng::Stream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, SweepConfig};
use crate::error::{ConfigError, Result};
use crate::fit::{fit_loglog, Moments, SlopeFit};

/// One offline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineRecord {
    pub n: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub rbar_index: usize,
    pub bonus_multiplier: f64,
    pub subopt: f64,
    /// `E_{d0 x pi_ref}[(r_bar - r* - b(s))^2]` with `b(s) = E_{pi_ref}[r_bar - r*]`.
    pub onpolicy_sq_error: f64,
    pub pessimism_holds: bool,
}

/// One online run, reduced to what the summaries need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRecord {
    pub horizon: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// `J(pi*) - J(pi^2_t)` for `t = 1..=T`.
    pub round_regret: Vec<f64>,
    /// `sum_{i<=t} min(1, U_i^2)`.
    pub cum_min1_u2: Vec<f64>,
    pub final_rbar_index: usize,
    pub insample_held: bool,
    pub optimism_held: bool,
    pub bonus_in_range: bool,
    pub fset_nonincreasing: bool,
}

impl OnlineRecord {
    pub fn from_trace(trace: &RunTrace) -> Self {
        let steps = &trace.steps;
        Self {
            horizon: trace.params.horizon,
            epsilon: trace.epsilon,
            seed: trace.seed,
            round_regret: steps.iter().map(|s| s.regret_pi2).collect(),
            cum_min1_u2: steps.iter().map(|s| s.cum_min1_u2).collect(),
            final_rbar_index: steps.last().map_or(0, |s| s.rbar_index),
            insample_held: trace.insample_bound_held(),
            optimism_held: steps.iter().all(|s| s.optimism_holds),
            bonus_in_range: steps
                .iter()
                .all(|s| s.bonus_max <= 1.0 && s.bonus_mean >= 0.0),
            fset_nonincreasing: steps.windows(2).all(|w| w[1].fset_size <= w[0].fset_size),
        }
    }

    pub fn cumulative_regret(&self) -> Vec<f64> {
        self.round_regret
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }
}

/// Statistics of one `(n, eps)` or `(T, eps)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    /// `"n"` for offline cells, `"T"` for online cells.
    pub x_name: String,
    pub x: usize,
    pub epsilon: f64,
    pub replays: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub metric: String,
    pub epsilon: f64,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineCellMetrics {
    pub n: usize,
    pub epsilon: f64,
    pub replays: usize,
    pub pessimism_failure_rate: f64,
    pub mean_onpolicy_sq_error: f64,
    pub bonus_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineCellMetrics {
    pub horizon: usize,
    pub epsilon: f64,
    pub replays: usize,
    /// Mean per-round regret over the first `ceil(T/10)` rounds, averaged over seeds.
    pub first_decile_mean: f64,
    pub last_decile_mean: f64,
    pub mean_cum_min1_u2: f64,
    /// Same at round `floor(T/2)`.
    pub mean_cum_min1_u2_half: f64,
    pub insample_bound_rate: f64,
    pub optimism_rate: f64,
    pub bonus_in_range_rate: f64,
    pub fset_nonincreasing_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub horizon: usize,
    pub epsilon: f64,
    pub t: usize,
    pub mean_regret: f64,
    pub mean_regret_over_log_t: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepSummary {
    pub cells: Vec<CellSummary>,
    pub slopes: Vec<SlopeRow>,
    pub offline: Vec<OfflineCellMetrics>,
    pub online: Vec<OnlineCellMetrics>,
    pub checkpoints: Vec<CheckpointRow>,
}

impl SweepSummary {
    pub fn cell(&self, x: usize, epsilon: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.x == x && c.epsilon == epsilon)
    }

    pub fn slope(&self, metric: &str, epsilon: f64) -> Option<&SlopeFit> {
        self.slopes
            .iter()
            .find(|s| s.metric == metric && s.epsilon == epsilon)
            .map(|s| &s.fit)
    }

    pub fn checkpoint(&self, horizon: usize, epsilon: f64, t: usize) -> Option<&CheckpointRow> {
        self.checkpoints
            .iter()
            .find(|c| c.horizon == horizon && c.epsilon == epsilon && c.t == t)
    }
}

/// A per-run trace file: name relative to the output directory, and contents.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub summary: SweepSummary,
    pub offline_records: Vec<OfflineRecord>,
    pub online_records: Vec<OnlineRecord>,
    pub traces: Vec<TraceFile>,
}

/// Runs `f` on a pool with the configured thread count, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

fn require_mode(cfg: &SweepConfig, mode: Mode) -> Result<()> {
    let got = cfg.mode()?;
    if got != mode {
        return Err(
            ConfigError::Invalid(format!("expected mode {mode}, config selects {got}")).into(),
        );
    }
    cfg.validate()?;
    Ok(())
}

struct OfflineCell {
    n: usize,
    epsilon: f64,
    inst: Instance,
    pp: PrivacyParams,
    multiplier: f64,
}

/// `E_{d0 x pi_ref}[(r_bar - r* - b(s))^2]`.
pub fn onpolicy_sq_error(inst: &Instance, r_bar: &ldprlhf::table::Grid) -> f64 {
    let err = centered_error(r_bar, inst.r_star(), inst.pi_ref());
    let d0 = inst.d0().probs();
    (0..inst.states())
        .map(|s| {
            d0[s]
                * (0..inst.actions())
                    .map(|a| inst.pi_ref().get(s, a) * err.get(s, a).powi(2))
                    .sum::<f64>()
        })
        .sum()
}

pub fn run_offline_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    require_mode(cfg, Mode::Offline)?;
    let seeds = cfg.seeds()?;
    let params = cfg.offline.params();
    with_threads(cfg.sweep.threads, || {
        let grid: Vec<(f64, usize)> = cfg
            .privacy
            .epsilons
            .iter()
            .flat_map(|&e| cfg.offline.n_values.iter().map(move |&n| (e, n)))
            .collect();
        let cells: Vec<OfflineCell> = grid
            .par_iter()
            .map(|&(epsilon, n)| -> Result<OfflineCell> {
                let inst = cfg.instance.build(epsilon, n)?;
                let pp = PrivacyParams::new(epsilon)?;
                let multiplier = calibrate_bonus_multiplier(&inst, n, &pp, &params)?;
                Ok(OfflineCell {
                    n,
                    epsilon,
                    inst,
                    pp,
                    multiplier,
                })
            })
            .collect::<Result<_>>()?;
        let jobs: Vec<(&OfflineCell, u64)> = cells
            .iter()
            .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
            .collect();
        let records: Vec<OfflineRecord> = jobs
            .par_iter()
            .map(|&(cell, seed)| -> Result<OfflineRecord> {
                let inst = &cell.inst;
                let data = offline_dataset_gen(inst, cell.n, &cell.pp, &Stream::new(seed));
                let res =
                    ppkl_run_with_multiplier(inst, &data, &cell.pp, &params, cell.multiplier)?;
                Ok(OfflineRecord {
                    n: cell.n,
                    epsilon: cell.epsilon,
                    seed,
                    rbar_index: res.rbar_index,
                    bonus_multiplier: cell.multiplier,
                    subopt: suboptimality(&res.pi_hat, inst)?,
                    onpolicy_sq_error: onpolicy_sq_error(inst, &res.r_bar),
                    pessimism_holds: pessimism_event_holds(&res.r_bar, &res.gamma, inst),
                })
            })
            .collect::<Result<_>>()?;
        Ok(SweepOutcome {
            summary: summarize_offline(&records),
            offline_records: records,
            ..SweepOutcome::default()
        })
    })
}

/// Groups records by key in first-appearance order.
fn group_by<R, K: PartialEq + Copy>(records: &[R], key: impl Fn(&R) -> K) -> Vec<(K, Vec<&R>)> {
    let mut groups: Vec<(K, Vec<&R>)> = Vec::new();
    for r in records {
        let k = key(r);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, members)) => members.push(r),
            None => groups.push((k, vec![r])),
        }
    }
    groups
}

fn cell_summary(x_name: &str, x: usize, epsilon: f64, values: &[f64]) -> CellSummary {
    let m = Moments::of(values);
    CellSummary {
        x_name: x_name.into(),
        x,
        epsilon,
        replays: m.count,
        mean: m.mean,
        median: m.median,
        std: m.std,
    }
}

/// Fits one slope per epsilon over cells that share it.
fn slopes_by_epsilon(metric: &str, points: &[(f64, usize, f64)]) -> Vec<SlopeRow> {
    group_by(points, |p| p.0)
        .into_iter()
        .filter_map(|(epsilon, pts)| {
            let xs: Vec<f64> = pts.iter().map(|p| p.1 as f64).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.2).collect();
            fit_loglog(&xs, &ys).map(|fit| SlopeRow {
                metric: metric.into(),
                epsilon,
                fit,
            })
        })
        .collect()
}

pub fn summarize_offline(records: &[OfflineRecord]) -> SweepSummary {
    let groups = group_by(records, |r| (r.epsilon, r.n));
    let mut summary = SweepSummary::default();
    let mut subopt_pts = Vec::new();
    let mut err_pts = Vec::new();
    for ((epsilon, n), rs) in groups {
        let subopts: Vec<f64> = rs.iter().map(|r| r.subopt).collect();
        let cell = cell_summary("n", n, epsilon, &subopts);
        subopt_pts.push((epsilon, n, cell.mean));
        summary.cells.push(cell);
        let k = rs.len() as f64;
        let mean_err = rs.iter().map(|r| r.onpolicy_sq_error).sum::<f64>() / k;
        err_pts.push((epsilon, n, mean_err));
        summary.offline.push(OfflineCellMetrics {
            n,
            epsilon,
            replays: rs.len(),
            pessimism_failure_rate: rs.iter().filter(|r| !r.pessimism_holds).count() as f64 / k,
            mean_onpolicy_sq_error: mean_err,
            bonus_multiplier: rs[0].bonus_multiplier,
        });
    }
    summary.slopes = slopes_by_epsilon("subopt", &subopt_pts);
    summary
        .slopes
        .extend(slopes_by_epsilon("onpolicy_sq_error", &err_pts));
    summary
}

pub fn run_online_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    require_mode(cfg, Mode::Online)?;
    let seeds = cfg.seeds()?;
    with_threads(cfg.sweep.threads, || {
        let mut cells = Vec::new();
        for &epsilon in &cfg.privacy.epsilons {
            for &t in &cfg.online.horizons {
                let inst = cfg.instance.build(epsilon, t)?;
                cells.push((t, epsilon, inst, PrivacyParams::new(epsilon)?));
            }
        }
        let jobs: Vec<_> = cells
            .iter()
            .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
            .collect();
        let write = cfg.online.write_traces;
        let results: Vec<(OnlineRecord, Option<TraceFile>)> = jobs
            .par_iter()
            .map(|&((t, epsilon, inst, pp), seed)| -> Result<_> {
                let trace = pokl_run(inst, pp, &cfg.online.params(*t), &Stream::new(seed))?;
                let file = write.then(|| TraceFile {
                    name: format!("traces/trace_T{t}_eps{epsilon}_seed{seed}.csv"),
                    text: write_trace_csv(&trace),
                });
                Ok((OnlineRecord::from_trace(&trace), file))
            })
            .collect::<Result<_>>()?;
        let (records, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        Ok(SweepOutcome {
            summary: summarize_online(&records, &cfg.online.checkpoints),
            online_records: records,
            traces: traces.into_iter().flatten().collect(),
            ..SweepOutcome::default()
        })
    })
}

fn decile_len(horizon: usize) -> usize {
    horizon.div_ceil(10).max(1)
}

/// Aggregates online runs. Checkpoints beyond a cell's horizon are skipped;
/// with no checkpoints the horizon itself is used (when `T >= 2`).
pub fn summarize_online(records: &[OnlineRecord], checkpoints: &[usize]) -> SweepSummary {
    let groups = group_by(records, |r| (r.epsilon, r.horizon));
    let mut summary = SweepSummary::default();
    let mut pts = Vec::new();
    for ((epsilon, horizon), rs) in groups {
        let k = rs.len() as f64;
        let curves: Vec<Vec<f64>> = rs.iter().map(|r| r.cumulative_regret()).collect();
        let finals: Vec<f64> = curves
            .iter()
            .map(|c| c.last().copied().unwrap_or(0.0))
            .collect();
        let cell = cell_summary("T", horizon, epsilon, &finals);
        pts.push((epsilon, horizon, cell.mean));
        summary.cells.push(cell);

        let d = decile_len(horizon);
        let avg = |f: &dyn Fn(&OnlineRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / k;
        let rate =
            |f: &dyn Fn(&OnlineRecord) -> bool| rs.iter().filter(|r| f(r)).count() as f64 / k;
        let half = (horizon / 2).max(1);
        summary.online.push(OnlineCellMetrics {
            horizon,
            epsilon,
            replays: rs.len(),
            first_decile_mean: avg(&|r| r.round_regret[..d].iter().sum::<f64>() / d as f64),
            last_decile_mean: avg(&|r| {
                r.round_regret[horizon - d..].iter().sum::<f64>() / d as f64
            }),
            mean_cum_min1_u2: avg(&|r| r.cum_min1_u2[horizon - 1]),
            mean_cum_min1_u2_half: avg(&|r| r.cum_min1_u2[half - 1]),
            insample_bound_rate: rate(&|r| r.insample_held),
            optimism_rate: rate(&|r| r.optimism_held),
            bonus_in_range_rate: rate(&|r| r.bonus_in_range),
            fset_nonincreasing_rate: rate(&|r| r.fset_nonincreasing),
        });

        let default_cp = [horizon];
        let cps: &[usize] = if checkpoints.is_empty() {
            &default_cp
        } else {
            checkpoints
        };
        for &t in cps.iter().filter(|&&t| t >= 2 && t <= horizon) {
            let mean_regret = curves.iter().map(|c| c[t - 1]).sum::<f64>() / k;
            summary.checkpoints.push(CheckpointRow {
                horizon,
                epsilon,
                t,
                mean_regret,
                mean_regret_over_log_t: mean_regret / (t as f64).ln(),
            });
        }
    }
    summary.slopes = slopes_by_epsilon("regret", &pts);
    summary
}

/// Mean cumulative-regret curve and its standard error, per round.
pub fn mean_regret_curve(records: &[&OnlineRecord]) -> Vec<(f64, f64)> {
    let curves: Vec<Vec<f64>> = records.iter().map(|r| r.cumulative_regret()).collect();
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let vals: Vec<f64> = curves.iter().map(|c| c[i]).collect();
            let m = Moments::of(&vals);
            (m.mean, m.std_error())
        })
        .collect()
}
