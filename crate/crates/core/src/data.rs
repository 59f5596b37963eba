//! Datasets, CSV ingestion and partitioning of design points into sub-model groups.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::Points;

/// Design points (rows of `x`) with their responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub ids: Option<Vec<String>>,
    /// Empirical mean subtracted from the responses at load time, if any.
    pub center: Option<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let ds = Self {
            x,
            y,
            ids: None,
            center: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.nrows() == 0 {
            return Err(Error::EmptyFile);
        }
        if self.x.ncols() == 0 {
            return Err(Error::InvalidData("no input columns".into()));
        }
        if self.x.nrows() != self.y.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset responses",
                expected: self.x.nrows(),
                found: self.y.len(),
            });
        }
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn points(&self) -> Points {
        Points::from_matrix(&self.x)
    }

    /// Subtracts the empirical response mean; predictions are un-centered with [`Dataset::uncenter`].
    pub fn centered(mut self) -> Self {
        let offset = self.center.unwrap_or(0.0) + self.y.mean();
        self.y.add_scalar_mut(-self.y.mean());
        self.center = Some(offset);
        self
    }

    pub fn uncenter(&self, value: f64) -> f64 {
        value + self.center.unwrap_or(0.0)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let x = self.x.select_rows(indices);
        let y = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.y[i]));
        let ids = self
            .ids
            .as_ref()
            .map(|ids| indices.iter().map(|&i| ids[i].clone()).collect());
        Self {
            x,
            y,
            ids,
            center: self.center,
        }
    }

    /// SHA-256 over the little-endian bytes of the design and the responses.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        for i in 0..self.len() {
            for v in self.x.row(i).iter() {
                h.update(v.to_le_bytes());
            }
            h.update(self.y[i].to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Random split into `(train, test)` with `n_test` test rows.
    pub fn train_test_split(&self, n_test: usize, seed: u64) -> Result<(Self, Self)> {
        if n_test >= self.len() {
            return Err(Error::InvalidData(format!(
                "cannot hold out {n_test} of {} rows",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (test, train) = idx.split_at(n_test);
        let (mut train, mut test) = (train.to_vec(), test.to_vec());
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.subset(&train), self.subset(&test)))
    }
}

/// Which CSV columns are inputs, response and identifier.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    /// Input column names; `None` means every column except response and id.
    pub inputs: Option<Vec<String>>,
    /// Response column; `None` means the last column.
    pub response: Option<String>,
    pub id: Option<String>,
    pub center: bool,
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

/// Reads a headered CSV. Lines starting with `#` are ignored.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let t = read_table(reader, schema, true)?;
    let ds = Dataset {
        x: t.x,
        y: t.y.expect("response requested"),
        ids: t.ids,
        center: None,
    };
    Ok(if schema.center { ds.centered() } else { ds })
}

/// Input columns of a headered CSV, with their names.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTable {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub ids: Option<Vec<String>>,
}

/// Reads query points: the schema's input columns, or every column except
/// the id and a column named like the schema's response.
pub fn read_inputs_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<InputTable> {
    let t = read_table(reader, schema, false)?;
    Ok(InputTable {
        names: t.names,
        x: t.x,
        ids: t.ids,
    })
}

pub fn load_inputs_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<InputTable> {
    read_inputs_csv(std::fs::File::open(path.as_ref())?, schema)
}

/// Names of the input columns `read_csv` would select.
pub fn input_names<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<Vec<String>> {
    Ok(read_table(reader, schema, true)?.names)
}

struct Table {
    names: Vec<String>,
    x: DMatrix<f64>,
    y: Option<DVector<f64>>,
    ids: Option<Vec<String>>,
}

fn read_table<R: std::io::Read>(reader: R, schema: &CsvSchema, with_response: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyFile);
    }
    let find = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            column: 0,
            message: format!("no column named `{name}`"),
        })
    };
    let id_col = schema.id.as_deref().map(find).transpose()?;
    let response_col = if with_response {
        Some(match &schema.response {
            Some(name) => find(name)?,
            None => headers.len() - 1,
        })
    } else {
        schema.response.as_deref().and_then(|r| headers.iter().position(|h| h == r))
    };
    let input_cols: Vec<usize> = match &schema.inputs {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&c| Some(c) != response_col && Some(c) != id_col)
            .collect(),
    };
    if input_cols.is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 0,
            message: "no input columns".into(),
        });
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut rows = 0;
    let mut ids = id_col.map(|_| Vec::new());
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse = |c: usize| -> Result<f64> {
            let field = record.get(c).ok_or_else(|| Error::Parse {
                line,
                column: c + 1,
                message: "missing field".into(),
            })?;
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    line,
                    column: c + 1,
                    message: format!("`{field}` is not a finite number"),
                }),
            }
        };
        for &c in &input_cols {
            xs.push(parse(c)?);
        }
        if with_response {
            ys.push(parse(response_col.expect("response column"))?);
        }
        if let (Some(ids), Some(c)) = (ids.as_mut(), id_col) {
            ids.push(record.get(c).unwrap_or_default().to_owned());
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyFile);
    }
    Ok(Table {
        names: input_cols.iter().map(|&c| headers[c].clone()).collect(),
        x: DMatrix::from_row_slice(rows, input_cols.len(), &xs),
        y: with_response.then(|| DVector::from_vec(ys)),
        ids,
    })
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::UnequalLengths { pos, .. } => Error::Parse {
            line: pos.map(|p| p.line() as usize).unwrap_or(fallback_line),
            column: 0,
            message: "unequal number of fields".into(),
        },
        other => Error::Parse {
            line: fallback_line,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Assignment of each design point to one of `groups` sub-models (0-based labels).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    groups: usize,
}

impl Partition {
    pub fn from_labels(labels: Vec<usize>, groups: usize) -> Result<Self> {
        if groups == 0 || groups > labels.len() {
            return Err(Error::InvalidGroupCount {
                groups,
                points: labels.len(),
            });
        }
        let mut sizes = vec![0usize; groups];
        for &l in &labels {
            if l >= groups {
                return Err(Error::InvalidData(format!("label {l} out of range 0..{groups}")));
            }
            sizes[l] += 1;
        }
        if let Some(g) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidData(format!("group {g} is empty")));
        }
        Ok(Self { labels, groups })
    }

    /// Builds a partition from explicit member lists (each point exactly once).
    pub fn from_groups(n: usize, members: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (g, m) in members.iter().enumerate() {
            for &i in m {
                if i >= n || labels[i] != usize::MAX {
                    return Err(Error::InvalidData(format!(
                        "point {i} missing or assigned twice"
                    )));
                }
                labels[i] = g;
            }
        }
        if labels.contains(&usize::MAX) {
            return Err(Error::InvalidData("some point belongs to no group".into()));
        }
        Self::from_labels(labels, members.len())
    }

    pub fn single(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            groups: 1,
        }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
            groups: n,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn group_count(&self) -> usize {
        self.groups
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member indices of every group, each list in increasing order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.groups];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.groups];
        for &l in &self.labels {
            out[l] += 1;
        }
        out
    }
}

fn check_groups(n: usize, p: usize) -> Result<()> {
    if p == 0 || p > n {
        return Err(Error::InvalidGroupCount { groups: p, points: n });
    }
    Ok(())
}

/// Balanced random groups: sizes differ by at most one.
pub fn partition_random(n: usize, p: usize, seed: u64) -> Result<Partition> {
    check_groups(n, p)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (rank, &i) in idx.iter().enumerate() {
        labels[i] = rank % p;
    }
    Partition::from_labels(labels, p)
}

/// Contiguous blocks after sorting points by their first coordinate.
pub fn partition_consecutive(x: &DMatrix<f64>, p: usize) -> Result<Partition> {
    let n = x.nrows();
    check_groups(n, p)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[(a, 0)].total_cmp(&x[(b, 0)]).then(a.cmp(&b)));
    let mut labels = vec![0; n];
    for g in 0..p {
        for &i in &order[g * n / p..(g + 1) * n / p] {
            labels[i] = g;
        }
    }
    Partition::from_labels(labels, p)
}

/// Tuning of [`partition_kmeans`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

/// Result of a k-means run, including the objective after each Lloyd iteration.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub partition: Partition,
    pub centroids: Vec<Vec<f64>>,
    pub objective_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding.
pub fn partition_kmeans(x: &DMatrix<f64>, p: usize, seed: u64) -> Result<Partition> {
    Ok(kmeans(x, p, seed, KMeansOptions::default())?.partition)
}

pub fn kmeans(x: &DMatrix<f64>, p: usize, seed: u64, opts: KMeansOptions) -> Result<KMeansFit> {
    let n = x.nrows();
    check_groups(n, p)?;
    let pts = Points::from_matrix(x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(p);
    centroids.push(pts.row(rng.random_range(0..n)).to_vec());
    let mut d2: Vec<f64> = pts.rows().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < p {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = pts.row(next).to_vec();
        for (i, r) in pts.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &c));
        }
        centroids.push(c);
    }

    let assign = |centroids: &[Vec<f64>]| -> Vec<usize> {
        pts.rows()
            .map(|r| {
                let mut best = (f64::INFINITY, 0);
                for (g, c) in centroids.iter().enumerate() {
                    let d = sq_dist(r, c);
                    if d < best.0 {
                        best = (d, g);
                    }
                }
                best.1
            })
            .collect()
    };
    let objective = |labels: &[usize], centroids: &[Vec<f64>]| -> f64 {
        pts.rows()
            .zip(labels)
            .map(|(r, &g)| sq_dist(r, &centroids[g]))
            .sum()
    };

    let mut labels = assign(&centroids);
    repair_empty(&pts, &mut labels, &centroids, p);
    let mut trace = vec![objective(&labels, &centroids)];
    for _ in 0..opts.max_iter {
        let new_centroids = centroid_means(&pts, &labels, p);
        let moved = centroids
            .iter()
            .zip(&new_centroids)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = new_centroids;
        let new_labels = assign(&centroids);
        labels = new_labels;
        repair_empty(&pts, &mut labels, &centroids, p);
        trace.push(objective(&labels, &centroids));
        if moved < opts.tol {
            break;
        }
    }
    Ok(KMeansFit {
        partition: Partition::from_labels(labels, p)?,
        centroids,
        objective_trace: trace,
    })
}

fn centroid_means(pts: &Points, labels: &[usize], p: usize) -> Vec<Vec<f64>> {
    let d = pts.dim();
    let mut sums = vec![vec![0.0; d]; p];
    let mut counts = vec![0usize; p];
    for (r, &g) in pts.rows().zip(labels) {
        counts[g] += 1;
        for (s, v) in sums[g].iter_mut().zip(r) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

/// Moves the point of the largest cluster farthest from its centroid into each empty cluster.
fn repair_empty(pts: &Points, labels: &mut [usize], centroids: &[Vec<f64>], p: usize) {
    loop {
        let mut sizes = vec![0usize; p];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let largest = (0..p).max_by_key(|&g| (sizes[g], std::cmp::Reverse(g))).unwrap();
        let far = (0..labels.len())
            .filter(|&i| labels[i] == largest)
            .max_by(|&a, &b| {
                sq_dist(pts.row(a), &centroids[largest])
                    .total_cmp(&sq_dist(pts.row(b), &centroids[largest]))
            })
            .unwrap();
        labels[far] = empty;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn two_row_csv() {
        let ds = read_csv("x,y\n0.1,1.0\n0.2,2.0".as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, 1));
        assert_eq!(ds.y.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn nan_response_is_a_parse_error() {
        let err = read_csv("x,y\n0.1,nan\n".as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, column: 2, .. }), "{err:?}");
    }

    #[test]
    fn empty_file() {
        assert!(matches!(
            read_csv("x,y\n".as_bytes(), &CsvSchema::default()),
            Err(Error::EmptyFile)
        ));
        assert!(matches!(
            read_csv("".as_bytes(), &CsvSchema::default()),
            Err(Error::EmptyFile)
        ));
    }

    #[test]
    fn seven_columns_last_is_response() {
        let mut text = String::from("a,b,c,d,e,f,resp\n");
        for i in 0..10_000 {
            let v = i as f64 / 10_000.0;
            text.push_str(&format!("{v},{v},{v},{v},{v},{v},{}\n", 2.0 * v));
        }
        let ds = read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!((ds.len(), ds.dim()), (10_000, 6));
        assert_eq!(ds.y[5000], 1.0);
    }

    #[test]
    fn named_columns_and_centering() {
        let schema = CsvSchema {
            inputs: Some(vec!["b".into()]),
            response: Some("a".into()),
            id: Some("name".into()),
            center: true,
        };
        let ds = read_csv("name,a,b\np,1,10\nq,3,20\n".as_bytes(), &schema).unwrap();
        assert_eq!(ds.x.as_slice(), &[10.0, 20.0]);
        assert_eq!(ds.y.as_slice(), &[-1.0, 1.0]);
        assert_eq!(ds.center, Some(2.0));
        assert_eq!(ds.uncenter(0.5), 2.5);
        assert_eq!(ds.ids.as_ref().unwrap(), &["p", "q"]);
    }

    #[test]
    fn consecutive_pairs() {
        // shuffled input order; groups follow the sorted order
        let xs: Vec<f64> = (0..30).map(|i| ((i * 17) % 30) as f64 / 30.0).collect();
        let part = partition_consecutive(&column(&xs), 15).unwrap();
        for members in part.members() {
            assert_eq!(members.len(), 2);
            let mut v: Vec<f64> = members.iter().map(|&i| xs[i]).collect();
            v.sort_by(f64::total_cmp);
            let lo = (v[0] * 30.0).round() as usize;
            assert_eq!(lo % 2, 0);
            assert_eq!((v[1] * 30.0).round() as usize, lo + 1);
        }
        let singletons = partition_consecutive(&column(&[0.5, 0.1, 0.3, 0.2, 0.9]), 5).unwrap();
        assert!(singletons.sizes().iter().all(|&s| s == 1));
    }

    #[test]
    fn random_is_balanced_and_seeded() {
        let a = partition_random(4, 2, 11).unwrap();
        assert_eq!(a.sizes(), vec![2, 2]);
        assert_eq!(a, partition_random(4, 2, 11).unwrap());
        assert_eq!(partition_random(5, 2, 3).unwrap().sizes().iter().sum::<usize>(), 5);
    }

    #[test]
    fn invalid_group_counts() {
        assert!(matches!(partition_random(3, 4, 0), Err(Error::InvalidGroupCount { .. })));
        assert!(matches!(partition_random(3, 0, 0), Err(Error::InvalidGroupCount { .. })));
        assert!(partition_consecutive(&column(&[0.0]), 2).is_err());
        assert!(partition_kmeans(&column(&[0.0, 1.0]), 3, 0).is_err());
    }

    #[test]
    fn kmeans_trivial_counts() {
        let x = column(&[0.3, 0.1, 0.9, 0.5]);
        let all = partition_kmeans(&x, 1, 5).unwrap();
        assert!(all.labels().iter().all(|&l| l == 0));
        let each = partition_kmeans(&x, 4, 5).unwrap();
        assert_eq!(each.sizes(), vec![1; 4]);
    }

    /// Exhaustive best 2-partition of a small 1-d set by within-cluster sum of squares.
    fn best_two_partition(v: &[f64]) -> Vec<bool> {
        let n = v.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let side: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let mut cost = 0.0;
            for s in [true, false] {
                let members: Vec<f64> = (0..n).filter(|&i| side[i] == s).map(|i| v[i]).collect();
                let m = members.iter().sum::<f64>() / members.len() as f64;
                cost += members.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
            }
            if cost < best.0 {
                best = (cost, side);
            }
        }
        best.1
    }

    #[test]
    fn kmeans_separates_two_blobs() {
        let v = [0.0, 0.01, 0.02, 1.0, 1.01];
        let oracle = best_two_partition(&v);
        for seed in 0..10 {
            let part = partition_kmeans(&column(&v), 2, seed).unwrap();
            let l = part.labels();
            for i in 0..v.len() {
                for j in 0..v.len() {
                    assert_eq!(l[i] == l[j], oracle[i] == oracle[j]);
                }
            }
        }
    }

    #[test]
    fn kmeans_is_deterministic() {
        let x = DMatrix::from_fn(40, 2, |i, j| ((i * 31 + j * 7) % 23) as f64 / 23.0);
        assert_eq!(partition_kmeans(&x, 5, 9).unwrap(), partition_kmeans(&x, 5, 9).unwrap());
    }

    #[test]
    fn split_is_disjoint() {
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let ds = Dataset::new(x, DVector::from_fn(10, |i, _| i as f64)).unwrap();
        let (train, test) = ds.train_test_split(3, 1).unwrap();
        assert_eq!((train.len(), test.len()), (7, 3));
        let mut all: Vec<f64> = train.y.iter().chain(test.y.iter()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(|i| i as f64).collect::<Vec<_>>());
        assert_ne!(ds.fingerprint(), train.fingerprint());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn partitions_cover_every_point(
            pts in proptest::collection::vec(0.0f64..1.0, 2..80),
            p_frac in 0.01f64..1.0,
            seed in 0u64..1000,
        ) {
            let n = pts.len();
            let p = ((n as f64 * p_frac).ceil() as usize).clamp(1, n);
            let x = column(&pts);
            for part in [
                partition_random(n, p, seed).unwrap(),
                partition_consecutive(&x, p).unwrap(),
                partition_kmeans(&x, p, seed).unwrap(),
            ] {
                prop_assert_eq!(part.len(), n);
                prop_assert_eq!(part.sizes().iter().sum::<usize>(), n);
                prop_assert!(part.sizes().iter().all(|&s| s > 0));
                let mut seen: Vec<usize> = part.members().concat();
                seen.sort_unstable();
                prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            }
        }

        #[test]
        fn lloyd_objective_never_increases(
            pts in proptest::collection::vec(-1.0f64..1.0, 20..120),
            p in 1usize..6,
            seed in 0u64..100,
        ) {
            let n = pts.len() / 2;
            let x = DMatrix::from_row_slice(n, 2, &pts[..2 * n]);
            let fit = kmeans(&x, p.min(n), seed, KMeansOptions::default()).unwrap();
            for w in fit.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
            }
        }
    }
}
