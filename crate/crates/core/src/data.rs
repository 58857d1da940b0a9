//! Datasets, CSV ingestion, standardization, seeded randomness and the
//! stratified splits used by the experiment protocol.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stable identity of a point within its source dataset (the CSV row index).
pub type PointId = usize;

/// Binary class label. The solver maps `Zero` to -1 and `One` to +1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ClassLabel {
    Zero,
    One,
}

impl ClassLabel {
    pub const BOTH: [ClassLabel; 2] = [ClassLabel::Zero, ClassLabel::One];

    pub fn sign(self) -> f64 {
        match self {
            ClassLabel::Zero => -1.0,
            ClassLabel::One => 1.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> ClassLabel {
        match self {
            ClassLabel::Zero => ClassLabel::One,
            ClassLabel::One => ClassLabel::Zero,
        }
    }
}

impl From<ClassLabel> for u8 {
    fn from(label: ClassLabel) -> u8 {
        label as u8
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = String;

    fn try_from(value: u8) -> std::result::Result<Self, Self::Error> {
        match value {
            0 => Ok(ClassLabel::Zero),
            1 => Ok(ClassLabel::One),
            v => Err(format!("class label must be 0 or 1, got {v}")),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub id: PointId,
    pub x: Vec<f64>,
    pub y: ClassLabel,
}

/// A set of labeled points sharing one feature count.
///
/// Pools handed to the active learner still carry their labels; the learner
/// only reads them through a [`crate::active::LabelOracle`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n_features: usize,
    points: Vec<LabeledPoint>,
}

impl Dataset {
    pub fn new(n_features: usize, points: Vec<LabeledPoint>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if p.x.len() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    actual: p.x.len(),
                });
            }
            if let Some(bad) = p.x.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "point {} has non-finite feature {bad}",
                    p.id
                )));
            }
            if !seen.insert(p.id) {
                return Err(Error::InvalidParameter(format!("duplicate point id {}", p.id)));
            }
        }
        Ok(Dataset { n_features, points })
    }

    pub fn empty(n_features: usize) -> Self {
        Dataset {
            n_features,
            points: Vec::new(),
        }
    }

    /// Builds a dataset from rows, assigning ids `0..N` in order.
    pub fn from_rows(rows: Vec<(Vec<f64>, ClassLabel)>) -> Result<Self> {
        let n_features = rows.first().map_or(0, |(x, _)| x.len());
        let points = rows
            .into_iter()
            .enumerate()
            .map(|(id, (x, y))| LabeledPoint { id, x, y })
            .collect();
        Dataset::new(n_features, points)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledPoint> {
        self.points.iter()
    }

    pub fn ids(&self) -> Vec<PointId> {
        self.points.iter().map(|p| p.id).collect()
    }

    pub fn get(&self, id: PointId) -> Option<&LabeledPoint> {
        self.points.iter().find(|p| p.id == id)
    }

    pub fn contains(&self, id: PointId) -> bool {
        self.get(id).is_some()
    }

    /// Point counts indexed by [`ClassLabel::index`].
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for p in &self.points {
            counts[p.y.index()] += 1;
        }
        counts
    }

    pub fn push(&mut self, point: LabeledPoint) -> Result<()> {
        if point.x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: point.x.len(),
            });
        }
        if self.contains(point.id) {
            return Err(Error::InvalidParameter(format!("duplicate point id {}", point.id)));
        }
        self.points.push(point);
        Ok(())
    }

    /// Removes and returns the point with `id`, preserving the order of the rest.
    pub fn remove(&mut self, id: PointId) -> Option<LabeledPoint> {
        let pos = self.points.iter().position(|p| p.id == id)?;
        Some(self.points.remove(pos))
    }

    /// Points whose id is in `ids`, in this dataset's order.
    pub fn select(&self, ids: &HashSet<PointId>) -> Dataset {
        self.filter(|p| ids.contains(&p.id))
    }

    /// Points whose id is not in `ids`, in this dataset's order.
    pub fn exclude(&self, ids: &HashSet<PointId>) -> Dataset {
        self.filter(|p| !ids.contains(&p.id))
    }

    pub fn filter(&self, keep: impl Fn(&LabeledPoint) -> bool) -> Dataset {
        Dataset {
            n_features: self.n_features,
            points: self.points.iter().filter(|p| keep(p)).cloned().collect(),
        }
    }

    /// First `n` points in order.
    pub fn prefix(&self, n: usize) -> Dataset {
        Dataset {
            n_features: self.n_features,
            points: self.points[..n.min(self.points.len())].to_vec(),
        }
    }

    /// Concatenation; ids must be disjoint.
    pub fn union(&self, other: &Dataset) -> Result<Dataset> {
        let mut out = self.clone();
        for p in other.iter() {
            out.push(p.clone())?;
        }
        Ok(out)
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a LabeledPoint;
    type IntoIter = std::slice::Iter<'a, LabeledPoint>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// Reads a CSV whose header ends in a `label` column; every other column is a
/// numeric feature. Ids are assigned from row order starting at 0.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Dataset> {
    let (names, rows) = read_table(reader)?;
    let last = names.last().map(String::as_str);
    if last != Some("label") {
        return Err(Error::Ingest {
            row: 1,
            column: last.unwrap_or("").to_string(),
            message: "final header column must be named `label`".into(),
        });
    }
    let n_features = names.len() - 1;
    let mut points = Vec::with_capacity(rows.len());
    for (id, (line, cells)) in rows.into_iter().enumerate() {
        let raw = cells[n_features].trim();
        let y = match raw {
            "0" => ClassLabel::Zero,
            "1" => ClassLabel::One,
            other => {
                return Err(Error::Ingest {
                    row: line,
                    column: "label".into(),
                    message: format!("label must be 0 or 1, got `{other}`"),
                })
            }
        };
        let x = parse_features(&names[..n_features], &cells[..n_features], line)?;
        points.push(LabeledPoint { id, x, y });
    }
    Dataset::new(n_features, points)
}

/// Feature rows of a CSV that may or may not carry a `label` column; a trailing
/// `label` column is dropped unread.
pub fn read_unlabeled_csv<R: std::io::Read>(reader: R) -> Result<(usize, Vec<Vec<f64>>)> {
    let (names, rows) = read_table(reader)?;
    let n_features = if names.last().map(String::as_str) == Some("label") {
        names.len() - 1
    } else {
        names.len()
    };
    if n_features == 0 {
        return Err(Error::Ingest {
            row: 1,
            column: String::new(),
            message: "no feature columns".into(),
        });
    }
    let mut out = Vec::with_capacity(rows.len());
    for (line, cells) in rows {
        out.push(parse_features(&names[..n_features], &cells[..n_features], line)?);
    }
    Ok((n_features, out))
}

type Table = (Vec<String>, Vec<(usize, Vec<String>)>);

fn read_table<R: std::io::Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| csv_error(1, e))?,
        None => {
            return Err(Error::Ingest {
                row: 1,
                column: String::new(),
                message: "missing header row".into(),
            })
        }
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if names.iter().all(|n| n.is_empty()) {
        return Err(Error::Ingest {
            row: 1,
            column: String::new(),
            message: "missing header row".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(line, e))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != names.len() {
            return Err(Error::Ingest {
                row: line,
                column: String::new(),
                message: format!("expected {} columns, found {}", names.len(), rec.len()),
            });
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok((names, rows))
}

fn parse_features(names: &[String], cells: &[String], line: usize) -> Result<Vec<f64>> {
    names
        .iter()
        .zip(cells)
        .map(|(name, cell)| match cell.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Ingest {
                row: line,
                column: name.clone(),
                message: format!("non-numeric feature value `{cell}`"),
            }),
        })
        .collect()
}

fn csv_error(row: usize, err: csv::Error) -> Error {
    Error::Ingest {
        row,
        column: String::new(),
        message: err.to_string(),
    }
}

/// Per-feature z-score transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation, replaced by 1 for constant features.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Result<Self> {
        Self::fit_rows(data.iter().map(|p| p.x.as_slice()), data.n_features())
    }

    pub fn fit_rows<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, n_features: usize) -> Result<Self> {
        let n = rows.clone().count();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut mean = vec![0.0; n_features];
        for x in rows.clone() {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; n_features];
        for x in rows {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                // tolerate round-off on constant columns
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_features() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: data.n_features(),
            });
        }
        let points = data
            .iter()
            .map(|p| LabeledPoint {
                id: p.id,
                x: self.transform(&p.x),
                y: p.y,
            })
            .collect();
        Ok(Dataset {
            n_features: data.n_features(),
            points,
        })
    }
}

/// Seeded ChaCha8 stream; identical seeds give identical draws everywhere.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

fn draw_per_class(data: &Dataset, per_class: usize, rng: &mut SeededRng) -> Result<HashSet<PointId>> {
    let mut chosen = HashSet::with_capacity(2 * per_class);
    for class in ClassLabel::BOTH {
        let mut ids: Vec<PointId> = data.iter().filter(|p| p.y == class).map(|p| p.id).collect();
        if ids.len() < per_class {
            return Err(Error::InsufficientClass {
                class,
                needed: per_class,
                available: ids.len(),
            });
        }
        let (picked, _) = ids.partial_shuffle(rng, per_class);
        chosen.extend(picked.iter().copied());
    }
    Ok(chosen)
}

/// Draws `per_class` points of each class without replacement; returns
/// `(drawn, rest)`, both in the input order.
fn stratified_split(data: &Dataset, per_class: usize, rng: &mut SeededRng) -> Result<(Dataset, Dataset)> {
    let chosen = draw_per_class(data, per_class, rng)?;
    Ok((data.select(&chosen), data.exclude(&chosen)))
}

/// Balanced held-out test set: `per_class` points of each class.
pub fn stratified_test_split(data: &Dataset, per_class: usize, rng: &mut SeededRng) -> Result<(Dataset, Dataset)> {
    stratified_split(data, per_class, rng)
}

/// Initial labeled sample with `per_class` points of each class; the rest is the pool.
pub fn stratified_initial_sample(
    data: &Dataset,
    per_class: usize,
    rng: &mut SeededRng,
) -> Result<(Dataset, Dataset)> {
    stratified_split(data, per_class, rng)
}
