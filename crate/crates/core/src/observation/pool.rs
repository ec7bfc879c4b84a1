use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentBatch, BatchSource};
use crate::error::{check_len, Error, Result};
use crate::features::FeatureMap;
use crate::rng::{label, SimRng, StreamKey};
use crate::Scalar;

/// Column statistics used to z-score a pool, kept so outputs can be mapped back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub feature_names: Vec<String>,
    pub input_means: Vec<f64>,
    pub input_stds: Vec<f64>,
    pub target_name: String,
    pub target_mean: f64,
    pub target_std: f64,
}

/// A regression dataset held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPool<T: Scalar> {
    /// Row-major `N × d`.
    inputs: Vec<T>,
    input_dim: usize,
    outputs: DVector<T>,
    standardization: Option<Standardization>,
}

impl<T: Scalar> DataPool<T> {
    /// Wraps already-prepared samples without rescaling.
    pub fn from_samples(inputs: Vec<Vec<T>>, outputs: Vec<T>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyPool);
        }
        check_len("pool outputs", inputs.len(), outputs.len())?;
        let d = inputs[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("pool inputs must have at least one column".into()));
        }
        let mut flat = Vec::with_capacity(inputs.len() * d);
        for row in &inputs {
            check_len("pool input row", d, row.len())?;
            flat.extend_from_slice(row);
        }
        if flat.iter().chain(outputs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("pool contains non-finite values".into()));
        }
        Ok(DataPool {
            inputs: flat,
            input_dim: d,
            outputs: DVector::from_vec(outputs),
            standardization: None,
        })
    }

    /// Z-scores every feature column and the target (population standard deviation).
    pub fn standardized(
        feature_names: Vec<String>,
        rows: &[Vec<f64>],
        target_name: String,
        targets: &[f64],
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::NoUsableRows);
        }
        check_len("targets", rows.len(), targets.len())?;
        let d = feature_names.len();
        let n = rows.len();
        let mut means = Vec::with_capacity(d);
        let mut stds = Vec::with_capacity(d);
        for (k, name) in feature_names.iter().enumerate() {
            let (mean, std) = column_stats(rows.iter().map(|r| r[k]), n);
            if is_degenerate(mean, std) {
                return Err(Error::ZeroVariance(name.clone()));
            }
            means.push(mean);
            stds.push(std);
        }
        let (target_mean, target_std) = column_stats(targets.iter().copied(), n);
        if is_degenerate(target_mean, target_std) {
            return Err(Error::ZeroVariance(target_name));
        }
        let mut flat = Vec::with_capacity(n * d);
        for row in rows {
            check_len("pool input row", d, row.len())?;
            for k in 0..d {
                flat.push(T::lit((row[k] - means[k]) / stds[k]));
            }
        }
        let outputs =
            DVector::from_iterator(n, targets.iter().map(|&y| T::lit((y - target_mean) / target_std)));
        Ok(DataPool {
            inputs: flat,
            input_dim: d,
            outputs,
            standardization: Some(Standardization {
                feature_names,
                input_means: means,
                input_stds: stds,
                target_name,
                target_mean,
                target_std,
            }),
        })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input(&self, j: usize) -> &[T] {
        &self.inputs[j * self.input_dim..(j + 1) * self.input_dim]
    }

    pub fn output(&self, j: usize) -> T {
        self.outputs[j]
    }

    pub fn outputs(&self) -> &DVector<T> {
        &self.outputs
    }

    pub fn inputs_matrix(&self) -> DMatrix<T> {
        DMatrix::from_row_slice(self.len(), self.input_dim, &self.inputs)
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Stacks `φ(x_j)ᵀ` for every row: the `N × M` design matrix.
    pub fn design_matrix(&self, fm: &FeatureMap<T>) -> Result<DMatrix<T>> {
        check_len("feature map input dimension", self.input_dim, fm.input_dim())?;
        let m = fm.feature_count();
        let mut phi = DMatrix::zeros(self.len(), m);
        let mut row = vec![T::zero(); m];
        for j in 0..self.len() {
            fm.eval_into(self.input(j), &mut row)?;
            for (l, &v) in row.iter().enumerate() {
                phi[(j, l)] = v;
            }
        }
        Ok(phi)
    }
}

fn column_stats(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

fn is_degenerate(mean: f64, std: f64) -> bool {
    !(std > 1e-12 * mean.abs().max(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsample {
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub target: String,
    /// `None` selects every numeric column other than the target.
    pub features: Option<Vec<String>>,
    pub subsample: Option<Subsample>,
    pub delimiter: u8,
}

impl CsvOptions {
    pub fn new(target: impl Into<String>) -> Self {
        CsvOptions {
            target: target.into(),
            features: None,
            subsample: None,
            delimiter: b',',
        }
    }
}

fn parse_cell(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loads and standardizes a CSV regression dataset.
///
/// Rows with a missing or non-numeric value in any selected column are dropped.
/// In automatic mode a column counts as numeric when every non-empty cell
/// parses as a finite number, so text columns such as timestamps drop out.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<DataPool<T>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let target_idx = find(&opts.target)?;
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;

    let feature_idx: Vec<usize> = match &opts.features {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&k| k != target_idx)
            .filter(|&k| {
                let mut any = false;
                for rec in &records {
                    match rec.get(k).map(str::trim) {
                        None | Some("") => {}
                        Some(cell) => {
                            if parse_cell(cell).is_none() {
                                return false;
                            }
                            any = true;
                        }
                    }
                }
                any
            })
            .collect(),
    };
    if feature_idx.is_empty() {
        return Err(Error::InvalidParameter("no feature columns selected".into()));
    }

    let mut rows = Vec::new();
    let mut targets = Vec::new();
    'rec: for rec in &records {
        let Some(y) = rec.get(target_idx).and_then(parse_cell) else {
            continue;
        };
        let mut row = Vec::with_capacity(feature_idx.len());
        for &k in &feature_idx {
            match rec.get(k).and_then(parse_cell) {
                Some(v) => row.push(v),
                None => continue 'rec,
            }
        }
        rows.push(row);
        targets.push(y);
    }
    if rows.is_empty() {
        return Err(Error::NoUsableRows);
    }

    if let Some(sub) = opts.subsample {
        if sub.count == 0 || sub.count > rows.len() {
            return Err(Error::InvalidParameter(format!(
                "subsample of {} requested from {} usable rows",
                sub.count,
                rows.len()
            )));
        }
        let mut rng = StreamKey::new(sub.seed).child(label::SUBSAMPLE).rng();
        let mut picked = rand::seq::index::sample(&mut rng, rows.len(), sub.count).into_vec();
        picked.sort_unstable();
        rows = picked.iter().map(|&j| rows[j].clone()).collect();
        targets = picked.iter().map(|&j| targets[j]).collect();
    }

    let names = feature_idx.iter().map(|&k| header[k].clone()).collect();
    DataPool::standardized(names, &rows, header[target_idx].clone(), &targets)
}

/// How agents sample from a shared pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSampling {
    /// Every agent draws uniformly with replacement from the whole pool.
    #[default]
    Shared,
    /// Agent `i` of `n` only sees rows `j` with `j mod n == i`.
    Partitioned,
}

/// A pool with every row's features evaluated once up front.
#[derive(Debug, Clone)]
pub struct FeaturizedPool<T: Scalar> {
    /// Row-major `N × M`.
    features: Vec<T>,
    outputs: Vec<T>,
    feature_count: usize,
    sampling: PoolSampling,
    agents: usize,
}

impl<T: Scalar> FeaturizedPool<T> {
    pub fn new(
        pool: &DataPool<T>,
        fm: &FeatureMap<T>,
        sampling: PoolSampling,
        agents: usize,
    ) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        if agents == 0 {
            return Err(Error::InvalidParameter("agent count must be positive".into()));
        }
        if sampling == PoolSampling::Partitioned && pool.len() < agents {
            return Err(Error::InvalidParameter(format!(
                "cannot partition {} rows among {agents} agents",
                pool.len()
            )));
        }
        let phi = pool.design_matrix(fm)?;
        let m = fm.feature_count();
        let mut features = Vec::with_capacity(pool.len() * m);
        for j in 0..pool.len() {
            features.extend(phi.row(j).iter().copied());
        }
        Ok(FeaturizedPool {
            features,
            outputs: pool.outputs().iter().copied().collect(),
            feature_count: m,
            sampling,
            agents,
        })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn sampling(&self) -> PoolSampling {
        self.sampling
    }

    fn shard_len(&self, agent: usize) -> usize {
        match self.sampling {
            PoolSampling::Shared => self.len(),
            PoolSampling::Partitioned => {
                let a = agent % self.agents;
                (self.len() - a).div_ceil(self.agents)
            }
        }
    }

    fn shard_row(&self, agent: usize, k: usize) -> usize {
        match self.sampling {
            PoolSampling::Shared => k,
            PoolSampling::Partitioned => agent % self.agents + k * self.agents,
        }
    }

    fn features_of(&self, j: usize) -> &[T] {
        &self.features[j * self.feature_count..(j + 1) * self.feature_count]
    }
}

impl<T: Scalar> BatchSource<T> for FeaturizedPool<T> {
    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn draw_row(&self, agent: usize, rng: &mut SimRng, row: &mut [T]) -> T {
        let k = rng.random_range(0..self.shard_len(agent));
        let j = self.shard_row(agent, k);
        row.copy_from_slice(self.features_of(j));
        self.outputs[j]
    }

    /// Under with-replacement sampling the expectation is the shard average.
    fn exact_gram(&self, agent: usize) -> Option<DMatrix<T>> {
        let m = self.feature_count;
        let len = self.shard_len(agent);
        let mut g = DMatrix::<T>::zeros(m, m);
        for k in 0..len {
            let f = self.features_of(self.shard_row(agent, k));
            for p in 0..m {
                for q in p..m {
                    g[(p, q)] += f[p] * f[q];
                }
            }
        }
        let scale = T::one() / T::from_count(len);
        for p in 0..m {
            for q in p..m {
                let v = g[(p, q)] * scale;
                g[(p, q)] = v;
                g[(q, p)] = v;
            }
        }
        Some(g)
    }
}

/// Pool view that evaluates features on demand; draws match [`FeaturizedPool`]
/// with [`PoolSampling::Shared`] exactly.
struct LazyPool<'a, T: Scalar> {
    pool: &'a DataPool<T>,
    fm: &'a FeatureMap<T>,
}

impl<T: Scalar> BatchSource<T> for LazyPool<'_, T> {
    fn feature_count(&self) -> usize {
        self.fm.feature_count()
    }

    fn draw_row(&self, _agent: usize, rng: &mut SimRng, row: &mut [T]) -> T {
        let j = rng.random_range(0..self.pool.len());
        self.fm
            .eval_into(self.pool.input(j), row)
            .expect("dimensions checked by draw_batch_pool");
        self.pool.output(j)
    }
}

/// Draws `c` rows uniformly with replacement for `(agent, t)`; no noise is added.
pub fn draw_batch_pool<T: Scalar>(
    pool: &DataPool<T>,
    fm: &FeatureMap<T>,
    agent: usize,
    t: u64,
    c: usize,
    key: StreamKey,
) -> Result<AgentBatch<T>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    check_len("feature map input dimension", pool.input_dim(), fm.input_dim())?;
    LazyPool { pool, fm }.draw_batch(agent, t, c, key)
}
