//! Synthetic trace families and CSV replay.
//!
//! CSV traces use the long format: a `t,node,value` header followed by one
//! observation per row, times starting at 1 and nodes numbered `1..=n`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Value;
use crate::error::{Error, Result};
use crate::trace::Trace;

pub const DEFAULT_MAX_VALUE: Value = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    RandomWalk,
    Uniform,
    AdversarialCrossing,
    Constant,
}

impl Family {
    pub const ALL: [Family; 4] =
        [Family::RandomWalk, Family::Uniform, Family::AdversarialCrossing, Family::Constant];

    pub fn name(self) -> &'static str {
        match self {
            Family::RandomWalk => "random-walk",
            Family::Uniform => "uniform",
            Family::AdversarialCrossing => "adversarial-crossing",
            Family::Constant => "constant",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown family `{s}`"))
    }
}

/// Family-specific knobs. Unused fields are ignored by other families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Values lie in `[0, max_value]`.
    pub max_value: Value,
    /// Random walk: largest per-step move, in walk levels.
    pub step: u64,
    /// Adversarial crossing: distance of the two crossing nodes from the
    /// band centre.
    pub amplitude: u64,
    /// Adversarial crossing: steps between swaps.
    pub period: u64,
    /// Keep the values of every snapshot pairwise distinct.
    pub distinct: bool,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            max_value: DEFAULT_MAX_VALUE,
            step: 64,
            amplitude: DEFAULT_MAX_VALUE / 8,
            period: 1,
            distinct: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    pub n: usize,
    pub k: usize,
    pub t: u64,
    pub seed: u64,
    pub params: GeneratorParams,
}

impl GeneratorSpec {
    pub fn new(family: Family, n: usize, k: usize, t: u64, seed: u64) -> Self {
        GeneratorSpec { family, n, k, t, seed, params: GeneratorParams::default() }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDimensions(msg));
        if self.n < 2 {
            return bad(format!("n = {} (need n >= 2)", self.n));
        }
        if self.k == 0 || self.k >= self.n {
            return bad(format!("k = {} (need 1 <= k < n = {})", self.k, self.n));
        }
        if self.t == 0 {
            return bad("T = 0 (need T >= 1)".into());
        }
        if self.params.distinct && self.params.max_value < self.n as u64 - 1 {
            return bad(format!("max value {} too small for {} distinct values", self.params.max_value, self.n));
        }
        if self.family == Family::AdversarialCrossing {
            if self.params.period == 0 {
                return bad("crossing period must be at least 1".into());
            }
            if crossing_layout(self).is_none() {
                return bad(format!(
                    "max value {} and amplitude {} leave no room for {} nodes",
                    self.params.max_value, self.params.amplitude, self.n
                ));
            }
        }
        Ok(())
    }
}

/// Deterministic trace for `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<Trace> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rows = match spec.family {
        Family::Constant => {
            let row = uniform_row(spec, &mut rng);
            vec![row; spec.t as usize]
        }
        Family::Uniform => (0..spec.t).map(|_| uniform_row(spec, &mut rng)).collect(),
        Family::RandomWalk => random_walk(spec, &mut rng),
        Family::AdversarialCrossing => adversarial_crossing(spec, &mut rng),
    };
    Trace::new(spec.n, rows)
}

fn uniform_row(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Vec<Value> {
    let range = spec.params.max_value as usize + 1;
    if spec.params.distinct {
        index::sample(rng, range, spec.n).into_iter().map(|v| v as Value).collect()
    } else {
        (0..spec.n).map(|_| rng.gen_range(0..=spec.params.max_value)).collect()
    }
}

/// Each node walks on its own level grid. With `distinct`, node `i` at level
/// `w` reports `w * n + (i - 1)`, so no two nodes ever collide.
fn random_walk(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<Value>> {
    let n = spec.n as u64;
    let top_level = if spec.params.distinct {
        (spec.params.max_value - (n - 1)) / n
    } else {
        spec.params.max_value
    };
    let step = spec.params.step.min(top_level) as i64;
    let mut levels: Vec<u64> = (0..spec.n).map(|_| rng.gen_range(0..=top_level)).collect();
    let emit = |levels: &[u64]| -> Vec<Value> {
        levels
            .iter()
            .enumerate()
            .map(|(i, &w)| if spec.params.distinct { w * n + i as u64 } else { w })
            .collect()
    };

    let mut rows = Vec::with_capacity(spec.t as usize);
    rows.push(emit(&levels));
    for _ in 1..spec.t {
        for w in levels.iter_mut() {
            let moved = *w as i64 + rng.gen_range(-step..=step);
            *w = moved.clamp(0, top_level as i64) as u64;
        }
        rows.push(emit(&levels));
    }
    rows
}

struct CrossingLayout {
    centre: u64,
    amplitude: u64,
    jitter: u64,
}

/// Insiders sit above `centre + amplitude`, outsiders below
/// `centre - amplitude`, each spread by up to `jitter` levels of width `n`.
fn crossing_layout(spec: &GeneratorSpec) -> Option<CrossingLayout> {
    let n = spec.n as u64;
    let centre = spec.params.max_value / 2;
    let amplitude = spec.params.amplitude.min(centre);
    let jitter = amplitude / (4 * n);
    let span = n.checked_mul(jitter + 2)?;
    if centre < amplitude + span || centre + amplitude + span > spec.params.max_value {
        return None;
    }
    Some(CrossingLayout { centre, amplitude, jitter })
}

/// One insider (the swapper) and one outsider (the challenger) trade places
/// across the top-k boundary every `period` steps. Everyone else jitters
/// inside their own band. The seed decides which nodes play which role.
fn adversarial_crossing(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<Value>> {
    let layout = crossing_layout(spec).expect("validated");
    let n = spec.n as u64;
    let mut roles: Vec<usize> = (0..spec.n).collect();
    roles.shuffle(rng);
    let insiders = &roles[..spec.k - 1];
    let swapper = roles[spec.k - 1];
    let challenger = roles[spec.k];
    let outsiders = &roles[spec.k + 1..];

    let high = layout.centre + layout.amplitude;
    let low = layout.centre - layout.amplitude;
    (0..spec.t)
        .map(|t| {
            let mut row = vec![0; spec.n];
            let crossed = (t / spec.params.period) % 2 == 1;
            row[swapper] = if crossed { low } else { high };
            row[challenger] = if crossed { high } else { low };
            for (j, &node) in insiders.iter().enumerate() {
                let jit = rng.gen_range(0..=layout.jitter);
                row[node] = high + n * (1 + jit) + j as u64;
            }
            for (j, &node) in outsiders.iter().enumerate() {
                let jit = rng.gen_range(0..=layout.jitter);
                row[node] = low - n * (1 + jit) - j as u64;
            }
            row
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    t: u64,
    node: u64,
    value: u64,
}

/// Parses a long-format trace.
pub fn read_csv<R: Read>(reader: R, origin: &Path) -> Result<Trace> {
    let err = |line: u64, msg: String| Error::Csv { path: origin.to_path_buf(), line, msg };
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["t", "node", "value"] {
        return Err(err(1, format!("expected header `t,node,value`, found `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }

    let mut cells: BTreeMap<u64, BTreeMap<u64, Value>> = BTreeMap::new();
    for record in csv.records() {
        let record = record.map_err(|e| err(e.position().map_or(0, |p| p.line()), format!("malformed row: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let row: CsvRow = record
            .deserialize(Some(&header))
            .map_err(|e| err(line, format!("malformed row: {e}")))?;
        if row.t == 0 {
            return Err(err(line, "time steps start at 1".into()));
        }
        if row.node == 0 || row.node > u64::from(u32::MAX) {
            return Err(err(line, format!("node id {} out of range", row.node)));
        }
        if cells.entry(row.t).or_default().insert(row.node, row.value).is_some() {
            return Err(err(line, format!("duplicate observation for t = {}, node = {}", row.t, row.node)));
        }
    }

    let Some((&last_t, _)) = cells.last_key_value() else {
        return Err(err(1, "trace has no observations".into()));
    };
    let n = cells.values().flat_map(|row| row.keys()).max().copied().unwrap_or(0) as usize;
    let mut rows = Vec::with_capacity(cells.len());
    for (expected, (&t, row)) in (1..=last_t).zip(&cells) {
        if t != expected {
            return Err(err(0, format!("time steps not contiguous: {} is followed by {t}", expected - 1)));
        }
        if row.len() != n {
            let missing = (1..=n as u64).find(|id| !row.contains_key(id)).unwrap_or(0);
            return Err(err(0, format!("node {missing} has no value at t = {t}")));
        }
        rows.push(row.values().copied().collect());
    }
    Trace::new(n, rows)
}

pub fn load_csv(path: &Path) -> Result<Trace> {
    read_csv(File::open(path)?, path)
}

pub fn write_csv<W: Write>(trace: &Trace, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.into());
    for snap in trace.snapshots() {
        for (i, &value) in snap.values.iter().enumerate() {
            csv.serialize(CsvRow { t: snap.t, node: i as u64 + 1, value }).map_err(io)?;
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn save_csv(trace: &Trace, path: &Path) -> Result<()> {
    write_csv(trace, File::create(path)?)
}
