//! CSV emission. Every file carries a fixed header and ends with a
//! `# config_sha256=<hex> seeds=<range>` footer. Floats use 17 significant
//! digits so values round-trip exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ldprlhf::online::fmt_f64;
use ldprlhf::sample::{csv_finish, csv_writer};

use crate::error::{ConfigError, Result};
use crate::sweep::{mean_regret_curve, CellSummary, SweepOutcome};

pub const SUMMARY_COLUMNS: &str = "x_name,x,epsilon,replays,mean,median,std";
pub const SLOPE_COLUMNS: &str = "metric,epsilon,points,slope,slope_se,intercept";

/// Provenance written at the end of every file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Footer {
    pub config_hash: String,
    pub seeds: String,
}

impl Footer {
    pub fn line(&self) -> String {
        format!(
            "# config_sha256={} seeds={}\n",
            self.config_hash, self.seeds
        )
    }
}

struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    fn new(header: &str) -> Self {
        let mut writer = csv_writer();
        writer
            .write_record(header.split(','))
            .expect("writing to memory");
        Self { writer }
    }

    fn row(&mut self, fields: &[String]) {
        self.writer.write_record(fields).expect("writing to memory");
    }

    fn finish(self, footer: &Footer) -> String {
        let mut text = csv_finish(self.writer);
        text.push_str(&footer.line());
        text
    }
}

fn f(x: f64) -> String {
    fmt_f64(x)
}

/// Renders every output file as `(relative path, contents)`.
pub fn render_outputs(outcome: &SweepOutcome, footer: &Footer) -> Vec<(String, String)> {
    let s = &outcome.summary;
    let mut files = Vec::new();

    let mut summary = Csv::new(SUMMARY_COLUMNS);
    for c in &s.cells {
        summary.row(&[
            c.x_name.clone(),
            c.x.to_string(),
            f(c.epsilon),
            c.replays.to_string(),
            f(c.mean),
            f(c.median),
            f(c.std),
        ]);
    }
    files.push(("summary.csv".to_string(), summary.finish(footer)));

    let mut slopes = Csv::new(SLOPE_COLUMNS);
    for r in &s.slopes {
        slopes.row(&[
            r.metric.clone(),
            f(r.epsilon),
            r.fit.points.to_string(),
            f(r.fit.slope),
            f(r.fit.slope_se),
            f(r.fit.intercept),
        ]);
    }
    files.push(("slopes.csv".to_string(), slopes.finish(footer)));

    if !outcome.offline_records.is_empty() {
        let mut runs = Csv::new(
            "n,epsilon,seed,rbar_index,bonus_multiplier,subopt,onpolicy_sq_error,pessimism_holds",
        );
        for r in &outcome.offline_records {
            runs.row(&[
                r.n.to_string(),
                f(r.epsilon),
                r.seed.to_string(),
                r.rbar_index.to_string(),
                f(r.bonus_multiplier),
                f(r.subopt),
                f(r.onpolicy_sq_error),
                r.pessimism_holds.to_string(),
            ]);
        }
        files.push(("runs_offline.csv".to_string(), runs.finish(footer)));

        let mut metrics = Csv::new(
            "n,epsilon,replays,pessimism_failure_rate,mean_onpolicy_sq_error,bonus_multiplier",
        );
        for m in &s.offline {
            metrics.row(&[
                m.n.to_string(),
                f(m.epsilon),
                m.replays.to_string(),
                f(m.pessimism_failure_rate),
                f(m.mean_onpolicy_sq_error),
                f(m.bonus_multiplier),
            ]);
        }
        files.push(("offline_metrics.csv".to_string(), metrics.finish(footer)));

        let mut plot = Csv::new("epsilon,x,y,y_err");
        for c in &s.cells {
            plot.row(&[
                f(c.epsilon),
                c.x.to_string(),
                f(c.mean),
                f(c.std / (c.replays as f64).sqrt()),
            ]);
        }
        files.push(("plot_subopt_vs_n.csv".to_string(), plot.finish(footer)));
    }

    if !outcome.online_records.is_empty() {
        let mut runs = Csv::new(
            "horizon,epsilon,seed,regret,final_rbar_index,insample_held,optimism_held,cum_min1_u2",
        );
        for r in &outcome.online_records {
            runs.row(&[
                r.horizon.to_string(),
                f(r.epsilon),
                r.seed.to_string(),
                f(r.round_regret.iter().sum()),
                r.final_rbar_index.to_string(),
                r.insample_held.to_string(),
                r.optimism_held.to_string(),
                f(r.cum_min1_u2.last().copied().unwrap_or(0.0)),
            ]);
        }
        files.push(("runs_online.csv".to_string(), runs.finish(footer)));

        let mut metrics = Csv::new(
            "horizon,epsilon,replays,first_decile_mean,last_decile_mean,mean_cum_min1_u2,\
             mean_cum_min1_u2_half,insample_bound_rate,optimism_rate,bonus_in_range_rate,\
             fset_nonincreasing_rate",
        );
        for m in &s.online {
            metrics.row(&[
                m.horizon.to_string(),
                f(m.epsilon),
                m.replays.to_string(),
                f(m.first_decile_mean),
                f(m.last_decile_mean),
                f(m.mean_cum_min1_u2),
                f(m.mean_cum_min1_u2_half),
                f(m.insample_bound_rate),
                f(m.optimism_rate),
                f(m.bonus_in_range_rate),
                f(m.fset_nonincreasing_rate),
            ]);
        }
        files.push(("online_metrics.csv".to_string(), metrics.finish(footer)));

        let mut cps = Csv::new("horizon,epsilon,t,mean_regret,mean_regret_over_log_t");
        for c in &s.checkpoints {
            cps.row(&[
                c.horizon.to_string(),
                f(c.epsilon),
                c.t.to_string(),
                f(c.mean_regret),
                f(c.mean_regret_over_log_t),
            ]);
        }
        files.push(("checkpoints.csv".to_string(), cps.finish(footer)));

        let mut plot = Csv::new("horizon,epsilon,x,y,y_err");
        for cell in &s.online {
            let members: Vec<_> = outcome
                .online_records
                .iter()
                .filter(|r| r.horizon == cell.horizon && r.epsilon == cell.epsilon)
                .collect();
            for (i, (mean, se)) in mean_regret_curve(&members).into_iter().enumerate() {
                plot.row(&[
                    cell.horizon.to_string(),
                    f(cell.epsilon),
                    (i + 1).to_string(),
                    f(mean),
                    f(se),
                ]);
            }
        }
        files.push(("plot_regret_vs_t.csv".to_string(), plot.finish(footer)));
    }

    for t in &outcome.traces {
        let mut text = t.text.clone();
        text.push_str(&footer.line());
        files.push((t.name.clone(), text));
    }
    files
}

/// Writes every output file under `dir` and returns their paths in write order.
pub fn emit_outputs(outcome: &SweepOutcome, dir: &Path, footer: &Footer) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, text) in render_outputs(outcome, footer) {
        let path = dir.join(&name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

/// Parses `summary.csv` back into cells; footer and comment lines are skipped.
pub fn parse_summary_csv(text: &str) -> Result<Vec<CellSummary>, ConfigError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| ConfigError::Invalid(format!("summary header: {e}")))?;
    if header.iter().collect::<Vec<_>>().join(",") != SUMMARY_COLUMNS {
        return Err(ConfigError::Invalid(format!(
            "unexpected summary header {header:?}"
        )));
    }
    reader
        .deserialize::<CellSummary>()
        .map(|row| row.map_err(|e| ConfigError::Invalid(format!("malformed summary row: {e}"))))
        .collect()
}

/// One-line description of a summary, for logs.
pub fn describe(outcome: &SweepOutcome) -> String {
    let mut out = String::new();
    for c in &outcome.summary.cells {
        let _ = writeln!(
            out,
            "{}={} eps={} replays={} mean={:.6e}",
            c.x_name, c.x, c.epsilon, c.replays, c.mean
        );
    }
    for s in &outcome.summary.slopes {
        let _ = writeln!(
            out,
            "slope[{} eps={}] = {:.4} (se {:.4})",
            s.metric, s.epsilon, s.fit.slope, s.fit.slope_se
        );
    }
    out
}
