//! Datasets, synthetic generators, CSV I/O and node-local partitioning.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Theta;

/// Seeded generator used everywhere a reproducible stream is needed.
pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-row labels: regression targets or integer cluster/class ids.
#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    Real(Vec<f64>),
    Class(Vec<usize>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Real(v) => v.len(),
            Labels::Class(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, indices: &[usize]) -> Labels {
        match self {
            Labels::Real(v) => Labels::Real(indices.iter().map(|&i| v[i]).collect()),
            Labels::Class(v) => Labels::Class(indices.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// An `N × n` feature matrix with optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    points: Vec<f64>,
    dim: usize,
    labels: Option<Labels>,
}

impl Dataset {
    /// Builds a dataset from row-major points.
    pub fn new(points: Vec<f64>, dim: usize, labels: Option<Labels>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dataset dimension must be at least 1"));
        }
        if !points.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of width {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        if let Some(labels) = &labels {
            Error::check_dim(n, labels.len())?;
            if let Labels::Real(y) = labels {
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("labels must be finite"));
                }
            }
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("points must be finite"));
        }
        Ok(Self {
            points,
            dim,
            labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Labels>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(rows.concat(), dim, labels)
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    /// Labels as reals; class ids are converted.
    pub fn targets(&self) -> Option<Cow<'_, [f64]>> {
        match self.labels.as_ref()? {
            Labels::Real(v) => Some(Cow::Borrowed(v)),
            Labels::Class(v) => Some(Cow::Owned(v.iter().map(|&c| c as f64).collect())),
        }
    }

    /// Labels as class ids. Real labels qualify only when every value is a
    /// nonnegative integer.
    pub fn classes(&self) -> Option<Cow<'_, [usize]>> {
        match self.labels.as_ref()? {
            Labels::Class(v) => Some(Cow::Borrowed(v)),
            Labels::Real(v) => v
                .iter()
                .map(|&y| (y >= 0.0 && y.fract() == 0.0).then_some(y as usize))
                .collect::<Option<Vec<_>>>()
                .map(Cow::Owned),
        }
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut points = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            points.extend_from_slice(self.row(i));
        }
        Dataset {
            points,
            dim: self.dim,
            labels: self.labels.as_ref().map(|l| l.select(indices)),
        }
    }

    pub fn without_labels(&self) -> Dataset {
        Dataset {
            points: self.points.clone(),
            dim: self.dim,
            labels: None,
        }
    }
}

/// Draws `y = a·x + b + ε` with `x ~ U[-1, 1]^dim` and `ε ~ N(0, noise_sigma²)`.
pub fn generate_regression(
    n_points: usize,
    dim: usize,
    true_params: &Theta,
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_points == 0 || dim == 0 {
        return Err(Error::invalid("n_points and dim must be at least 1"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "noise_sigma must be nonnegative, got {noise_sigma}"
        )));
    }
    Error::check_dim(dim, true_params.dim())?;
    let mut rng = seeded_rng(seed);
    let mut points = Vec::with_capacity(n_points * dim);
    let mut y = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let start = points.len();
        for _ in 0..dim {
            points.push(rng.random_range(-1.0..=1.0));
        }
        let clean = true_params.predict(&points[start..]);
        let eps = if noise_sigma > 0.0 {
            noise_sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        } else {
            0.0
        };
        y.push(clean + eps);
    }
    Dataset::new(points, dim, Some(Labels::Real(y)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterShape {
    Gaussian,
    UniformBox,
}

/// Draws `per_cluster` points around each center; labels carry the center index.
///
/// Gaussian clusters use `spread` as the per-coordinate standard deviation;
/// uniform boxes use it as the ℓ∞ half-width.
pub fn generate_clusters(
    centers: &[Vec<f64>],
    spread: f64,
    per_cluster: usize,
    shape: ClusterShape,
    seed: u64,
) -> Result<Dataset> {
    let dim = centers
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::invalid("at least one center is required"))?;
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(Error::invalid("centers must share a nonzero dimension"));
    }
    if !(spread > 0.0) {
        return Err(Error::invalid(format!("spread must be positive, got {spread}")));
    }
    let mut rng = seeded_rng(seed);
    let normal = Normal::new(0.0, spread).map_err(|e| Error::invalid(e.to_string()))?;
    let mut points = Vec::with_capacity(centers.len() * per_cluster * dim);
    let mut labels = Vec::with_capacity(centers.len() * per_cluster);
    for (id, center) in centers.iter().enumerate() {
        for _ in 0..per_cluster {
            for &c in center {
                let offset = match shape {
                    ClusterShape::Gaussian => normal.sample(&mut rng),
                    ClusterShape::UniformBox => rng.random_range(-spread..spread),
                };
                points.push(c + offset);
            }
            labels.push(id);
        }
    }
    Dataset::new(points, dim, Some(Labels::Class(labels)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    ShuffledIid,
    Contiguous,
    ByLabelHeterogeneous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

/// `K` disjoint shards covering a source dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    shards: Vec<Dataset>,
    provenance: Vec<Vec<usize>>,
}

impl Partition {
    /// Builds a partition from explicit row groups of `source`.
    pub fn from_groups(source: &Dataset, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; source.len()];
        for &i in groups.iter().flatten() {
            if i >= source.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("row {i} is out of range or repeated")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("groups do not cover every source row"));
        }
        let shards = groups.iter().map(|g| source.select(g)).collect();
        Ok(Self {
            shards,
            provenance: groups,
        })
    }

    pub fn k(&self) -> usize {
        self.shards.len()
    }

    pub fn shards(&self) -> &[Dataset] {
        &self.shards
    }

    pub fn shard(&self, k: usize) -> &Dataset {
        &self.shards[k]
    }

    /// Source row index of each local row, per shard.
    pub fn provenance(&self) -> &[Vec<usize>] {
        &self.provenance
    }

    pub fn total_len(&self) -> usize {
        self.shards.iter().map(Dataset::len).sum()
    }

    /// Reassembles the source dataset in its original row order.
    pub fn pooled(&self) -> Dataset {
        let n = self.total_len();
        let dim = self.shards[0].dim();
        let mut order = vec![(0, 0); n];
        for (s, rows) in self.provenance.iter().enumerate() {
            for (local, &src) in rows.iter().enumerate() {
                order[src] = (s, local);
            }
        }
        let mut points = Vec::with_capacity(n * dim);
        for &(s, local) in &order {
            points.extend_from_slice(self.shards[s].row(local));
        }
        let labels = self.shards[0].labels().map(|first| match first {
            Labels::Real(_) => Labels::Real(
                order
                    .iter()
                    .map(|&(s, l)| self.shards[s].targets().unwrap()[l])
                    .collect(),
            ),
            Labels::Class(_) => Labels::Class(
                order
                    .iter()
                    .map(|&(s, l)| self.shards[s].classes().unwrap()[l])
                    .collect(),
            ),
        });
        Dataset {
            points,
            dim,
            labels,
        }
    }
}

/// Splits `dataset` into `spec.k` shards.
///
/// Shuffled and contiguous splits give shard sizes that differ by at most one;
/// the heterogeneous split deals whole label groups to shards round-robin.
pub fn partition(dataset: &Dataset, spec: &SplitSpec) -> Result<Partition> {
    let n = dataset.len();
    if spec.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if spec.k > n {
        return Err(Error::invalid(format!(
            "cannot split {n} rows into {} shards",
            spec.k
        )));
    }
    let groups = match spec.mode {
        SplitMode::Contiguous => balanced_chunks(&(0..n).collect::<Vec<_>>(), spec.k),
        SplitMode::ShuffledIid => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seeded_rng(spec.seed));
            let mut groups = balanced_chunks(&order, spec.k);
            for g in &mut groups {
                g.sort_unstable();
            }
            groups
        }
        SplitMode::ByLabelHeterogeneous => {
            let targets = dataset
                .targets()
                .ok_or_else(|| Error::invalid("heterogeneous split needs labels"))?;
            // Group by exact label value, ordered by value.
            let mut by_label: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for (i, &y) in targets.iter().enumerate() {
                by_label.entry(ordered_bits(y)).or_default().push(i);
            }
            if by_label.len() < spec.k {
                return Err(Error::invalid(format!(
                    "{} label groups cannot fill {} shards",
                    by_label.len(),
                    spec.k
                )));
            }
            let mut groups = vec![Vec::new(); spec.k];
            for (g, rows) in by_label.into_values().enumerate() {
                groups[g % spec.k].extend(rows);
            }
            for g in &mut groups {
                g.sort_unstable();
            }
            groups
        }
    };
    Partition::from_groups(dataset, groups)
}

fn balanced_chunks(order: &[usize], k: usize) -> Vec<Vec<usize>> {
    let base = order.len() / k;
    let extra = order.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for s in 0..k {
        let size = base + usize::from(s < extra);
        out.push(order[start..start + size].to_vec());
        start += size;
    }
    out
}

// Total order on finite floats, usable as a map key.
fn ordered_bits(y: f64) -> u64 {
    let bits = y.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

/// Writes `f0,…,f{n-1}[,y]` followed by one row per point.
///
/// Values are written in shortest round-trip decimal form, so a reload
/// reproduces every value exactly.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io_at(path, e))?);
    let mut header: Vec<String> = (0..dataset.dim()).map(|d| format!("f{d}")).collect();
    let targets = dataset.targets();
    if targets.is_some() {
        header.push("y".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for (i, row) in dataset.rows().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(y) = &targets {
            fields.push(y[i].to_string());
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    read_csv(file)
}

/// Parses the dataset CSV format from any reader.
pub fn read_csv(reader: impl std::io::Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
        Some(rec) => rec.map_err(csv_error)?,
    };
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let has_y = names.last() == Some(&"y");
    let dim = names.len() - usize::from(has_y);
    let header_ok = dim > 0
        && names[..dim]
            .iter()
            .enumerate()
            .all(|(d, name)| *name == format!("f{d}"));
    if !header_ok {
        return Err(Error::Parse {
            line: 1,
            message: format!("missing or malformed header `{}`", names.join(",")),
        });
    }

    let mut points = Vec::new();
    let mut y = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != names.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", names.len(), rec.len()),
            });
        }
        for (col, cell) in rec.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric cell `{cell}` in column {col}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value in column {col}"),
                });
            }
            if has_y && col == dim {
                y.push(value);
            } else {
                points.push(value);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(points, dim, has_y.then_some(Labels::Real(y)))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
