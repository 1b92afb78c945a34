//! Preference records, their sufficient statistics and the dataset file format.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privacy::Label;
use crate::table::{Grid, StateDistribution};

/// A comparison with its true (unprivatized) label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSample {
    pub s: usize,
    pub a1: usize,
    pub a2: usize,
    pub y: Label,
}

/// A comparison whose label went through randomized response. Estimators
/// only ever see this form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateSample {
    pub s: usize,
    pub a1: usize,
    pub a2: usize,
    pub z: Label,
}

/// Counts of `(s, a1, a2, z)` tuples.
///
/// Every estimator here depends on the data only through these counts, so
/// sums over samples become sums over at most `2 S A^2` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCounts {
    states: usize,
    actions: usize,
    counts: Vec<u64>,
    total: u64,
}

/// One nonempty cell of [`PairCounts`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub s: usize,
    pub a1: usize,
    pub a2: usize,
    pub z: Label,
    pub count: u64,
}

impl PairCounts {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            counts: vec![0; states * actions * actions * 2],
            total: 0,
        }
    }

    pub fn from_samples(states: usize, actions: usize, data: &[PrivateSample]) -> Result<Self> {
        let mut counts = Self::new(states, actions);
        for x in data {
            counts.add(x)?;
        }
        Ok(counts)
    }

    #[inline]
    fn slot(&self, s: usize, a1: usize, a2: usize, z: Label) -> usize {
        ((s * self.actions + a1) * self.actions + a2) * 2 + usize::from(z == Label::Plus)
    }

    pub fn add(&mut self, x: &PrivateSample) -> Result<()> {
        if x.s >= self.states {
            return Err(Error::IndexOutOfRange {
                what: "state",
                index: x.s,
                limit: self.states,
            });
        }
        for a in [x.a1, x.a2] {
            if a >= self.actions {
                return Err(Error::IndexOutOfRange {
                    what: "action",
                    index: a,
                    limit: self.actions,
                });
            }
        }
        let slot = self.slot(x.s, x.a1, x.a2, x.z);
        self.counts[slot] += 1;
        self.total += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, s: usize, a1: usize, a2: usize, z: Label) -> u64 {
        self.counts[self.slot(s, a1, a2, z)]
    }

    /// Nonempty cells in `(s, a1, a2, z)` lexicographic order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let a = self.actions;
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(move |(i, &count)| Cell {
                s: i / (2 * a * a),
                a1: (i / (2 * a)) % a,
                a2: (i / 2) % a,
                z: if i % 2 == 1 {
                    Label::Plus
                } else {
                    Label::Minus
                },
                count,
            })
    }

    /// Counts of `(s, a1, a2)` with the label marginalized, as
    /// `(s, a1, a2, count)`; only pairs with `a1 != a2` carry information
    /// about reward gaps but all are returned.
    pub fn pair_cells(&self) -> impl Iterator<Item = (usize, usize, usize, u64)> + '_ {
        let a = self.actions;
        self.counts
            .chunks(2)
            .enumerate()
            .filter(|(_, c)| c[0] + c[1] > 0)
            .map(move |(i, c)| (i / (a * a), (i / a) % a, i % a, c[0] + c[1]))
    }

    /// `sum_i (gap_f(i) - gap_g(i))^2` over the recorded comparisons.
    pub fn squared_gap_distance(&self, f: &Grid, g: &Grid) -> f64 {
        self.pair_cells()
            .map(|(s, a1, a2, n)| {
                let d = (f.get(s, a1) - f.get(s, a2)) - (g.get(s, a1) - g.get(s, a2));
                n as f64 * d * d
            })
            .sum()
    }
}

/// Per-row categorical samplers for a stochastic table.
#[derive(Debug, Clone)]
pub struct RowSampler {
    rows: Vec<WeightedIndex<f64>>,
}

impl RowSampler {
    pub fn new(table: &Grid) -> Self {
        Self {
            rows: (0..table.states())
                .map(|s| WeightedIndex::new(table.row(s)).expect("stochastic row"))
                .collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, s: usize) -> usize {
        self.rows[s].sample(rng)
    }
}

pub fn state_sampler(d0: &StateDistribution) -> WeightedIndex<f64> {
    WeightedIndex::new(d0.probs()).expect("state distribution")
}

/// Header metadata of a dataset file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub n: usize,
    pub epsilon: f64,
    pub seed: u64,
}

/// Writes one `s,a1,a2,z` record per line after a `# n=.. epsilon=.. seed=..`
/// header. Action indices follow the instance encoding. Later lines starting
/// with `#` are comments.
pub fn write_dataset(header: &DatasetHeader, data: &[PrivateSample]) -> String {
    let mut out = format!(
        "# n={} epsilon={} seed={} columns=s,a1,a2,z\n",
        data.len(),
        header.epsilon,
        header.seed
    );
    let mut w = csv_writer();
    for x in data {
        w.serialize((x.s, x.a1, x.a2, i8::from(x.z)))
            .expect("writing to memory");
    }
    out.push_str(&csv_finish(w));
    out
}

/// In-memory CSV writer with `\n` line endings.
pub fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

pub fn csv_finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("flushing to memory");
    String::from_utf8(bytes).expect("CSV fields are UTF-8")
}

pub fn read_dataset(text: &str) -> Result<(DatasetHeader, Vec<PrivateSample>)> {
    let first = text.lines().next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let perr = |line: usize, message: String| Error::Parse { line, message };
    let body = first
        .strip_prefix('#')
        .ok_or_else(|| perr(1, "header must start with '#'".into()))?;
    let (mut n, mut epsilon, mut seed) = (None, None, None);
    for field in body.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| perr(1, format!("bad header field {field:?}")))?;
        match k {
            "n" => n = Some(v.parse::<usize>().map_err(|e| perr(1, e.to_string()))?),
            "epsilon" => epsilon = Some(v.parse::<f64>().map_err(|e| perr(1, e.to_string()))?),
            "seed" => seed = Some(v.parse::<u64>().map_err(|e| perr(1, e.to_string()))?),
            _ => {}
        }
    }
    let header = DatasetHeader {
        n: n.ok_or_else(|| perr(1, "header lacks n".into()))?,
        epsilon: epsilon.ok_or_else(|| perr(1, "header lacks epsilon".into()))?,
        seed: seed.ok_or_else(|| perr(1, "header lacks seed".into()))?,
    };
    let mut data = Vec::with_capacity(header.n);
    // The reader skips blank and comment lines; map record k back to its line.
    let record_lines: Vec<usize> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, _)| i + 1)
        .collect();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    for (k, record) in reader.records().enumerate() {
        let line = record_lines.get(k).copied().unwrap_or(0);
        let (s, a1, a2, z): (usize, usize, usize, i64) = record
            .and_then(|r| r.deserialize(None))
            .map_err(|e| match e.kind() {
            // the csv position is unreliable after skipped lines
            csv::ErrorKind::Deserialize { err, .. } => perr(line, err.to_string()),
            _ => perr(line, e.to_string()),
        })?;
        let z = Label::try_from(z).map_err(|e| perr(line, e.to_string()))?;
        data.push(PrivateSample { s, a1, a2, z });
    }
    if data.len() != header.n {
        return Err(perr(
            1,
            format!("header says n={}, found {} records", header.n, data.len()),
        ));
    }
    Ok((header, data))
}

pub fn save_dataset(
    path: impl AsRef<Path>,
    header: &DatasetHeader,
    data: &[PrivateSample],
) -> Result<()> {
    std::fs::write(path, write_dataset(header, data))?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<(DatasetHeader, Vec<PrivateSample>)> {
    read_dataset(&std::fs::read_to_string(path)?)
}
