//! Per-agent measurement batches `(H_{i,t}, y_{i,t})`.
//!
//! Two data sources implement [`BatchSource`]: a [`SyntheticModel`] with a
//! known ground truth and Gaussian observation noise, and a [`FeaturizedPool`]
//! that resamples rows of an ingested regression dataset.

mod pool;
mod synthetic;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, sym_eigenvalues_desc};
use crate::rng::{label, SimRng, StreamKey};
use crate::Scalar;

pub use pool::{
    draw_batch_pool, load_csv, CsvOptions, DataPool, FeaturizedPool, PoolSampling,
    Standardization, Subsample,
};
pub use synthetic::{draw_batch_synthetic, InputSampler, SyntheticModel};

/// Default number of draws for Monte-Carlo estimates of `G_i`.
pub const DEFAULT_GRAM_SAMPLES: usize = 100_000;

/// Eigenvalue threshold used when reporting the rank of `G_i`.
pub const GRAM_RANK_TOL: f64 = 1e-8;

/// One agent's measurements at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBatch<T: Scalar> {
    pub agent: usize,
    pub t: u64,
    /// `c × M`, each entry a feature evaluation.
    pub h: DMatrix<T>,
    pub y: DVector<T>,
    /// Injected observation noise, when the source has an explicit noise model.
    pub noise: Option<DVector<T>>,
}

impl<T: Scalar> AgentBatch<T> {
    pub fn batch_size(&self) -> usize {
        self.h.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.h.ncols()
    }

    /// `Hᵀ(y - Hθ)`.
    pub fn innovation(&self, theta: &DVector<T>) -> DVector<T> {
        self.h.tr_mul(&(&self.y - &self.h * theta))
    }
}

/// A data source agents draw measurements from.
pub trait BatchSource<T: Scalar>: Sync {
    fn feature_count(&self) -> usize;

    /// Draws one sample for `agent`, writing `φ(x)` into `row` and returning
    /// the noiseless target.
    fn draw_row(&self, agent: usize, rng: &mut SimRng, row: &mut [T]) -> T;

    /// Standard deviation of additive observation noise, or `None` when the
    /// source has no explicit noise model (dataset noise is intrinsic).
    fn noise_std(&self) -> Option<T> {
        None
    }

    /// `c⁻¹E[HᵀH]` computed without sampling error, when available.
    fn exact_gram(&self, _agent: usize) -> Option<DMatrix<T>> {
        None
    }

    /// Draws `c` samples for `(agent, t)`. The result depends only on
    /// `(key, agent, t, c)`.
    fn draw_batch(&self, agent: usize, t: u64, c: usize, key: StreamKey) -> Result<AgentBatch<T>> {
        if c == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        let m = self.feature_count();
        let mut data_rng = key.child(label::DATA).rng_at(agent, t);
        let mut row = vec![T::zero(); m];
        let mut h = DMatrix::zeros(c, m);
        let mut y = DVector::zeros(c);
        for j in 0..c {
            y[j] = self.draw_row(agent, &mut data_rng, &mut row);
            for (l, &v) in row.iter().enumerate() {
                h[(j, l)] = v;
            }
        }
        let noise = self.noise_std().map(|std| {
            let mut noise_rng = key.child(label::NOISE).rng_at(agent, t);
            DVector::from_fn(c, |_, _| {
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                std * T::lit(z)
            })
        });
        if let Some(v) = &noise {
            y += v;
        }
        Ok(AgentBatch {
            agent,
            t,
            h,
            y,
            noise,
        })
    }
}

/// Monte-Carlo estimate of `G_i = E[φ(x)φ(x)ᵀ]` for `agent`.
pub fn estimate_gram<T: Scalar, S: BatchSource<T> + ?Sized>(
    source: &S,
    agent: usize,
    samples: usize,
    key: StreamKey,
) -> Result<DMatrix<T>> {
    if samples == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let m = source.feature_count();
    let mut rng = key.child(label::GRAM).rng_at(agent, 0);
    let mut row = vec![T::zero(); m];
    let mut acc = DMatrix::<T>::zeros(m, m);
    for _ in 0..samples {
        source.draw_row(agent, &mut rng, &mut row);
        for p in 0..m {
            for q in p..m {
                acc[(p, q)] += row[p] * row[q];
            }
        }
    }
    let scale = T::one() / T::from_count(samples);
    for p in 0..m {
        for q in p..m {
            let v = acc[(p, q)] * scale;
            acc[(p, q)] = v;
            acc[(q, p)] = v;
        }
    }
    Ok(acc)
}

/// Per-agent observability summary of a `G_i` matrix.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GramReport {
    pub agent: usize,
    pub rank: usize,
    pub dimension: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub trace: f64,
    /// `rank < M`, i.e. the agent cannot identify θ on its own.
    pub locally_unobservable: bool,
}

pub fn gram_report<T: Scalar>(agent: usize, g: &DMatrix<T>) -> GramReport {
    let ev = sym_eigenvalues_desc(g);
    let rank = numerical_rank(g, T::lit(GRAM_RANK_TOL));
    GramReport {
        agent,
        rank,
        dimension: g.nrows(),
        min_eigenvalue: ev.last().map_or(0.0, |v| v.as_f64()),
        max_eigenvalue: ev.first().map_or(0.0, |v| v.as_f64()),
        trace: g.trace().as_f64(),
        locally_unobservable: rank < g.nrows(),
    }
}
