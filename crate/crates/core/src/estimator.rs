//! The synchronous consensus+innovation update and its error process.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::features::FeatureMap;
use crate::linalg::{block_diag, kron_identity};
use crate::network::MixingMatrix;
use crate::observation::{AgentBatch, BatchSource, DataPool};
use crate::rng::StreamKey;
use crate::Scalar;

/// `‖e_t‖²` beyond this multiple of `max(‖e_0‖², 1)` counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// Stacked estimates of all agents at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState<T: Scalar> {
    pub t: u64,
    /// `n × M`; row `i` is agent `i`'s estimate.
    pub estimates: DMatrix<T>,
    /// Innovation gain.
    pub alpha: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init<T: Scalar> {
    Zeros,
    Given(DMatrix<T>),
}

pub fn init_state<T: Scalar>(n: usize, m: usize, init: Init<T>, alpha: T) -> Result<NetworkState<T>> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter(format!(
            "state dimensions must be positive, got {n}x{m}"
        )));
    }
    let estimates = match init {
        Init::Zeros => DMatrix::zeros(n, m),
        Init::Given(mat) => {
            check_len("initial estimate rows", n, mat.nrows())?;
            check_len("initial estimate columns", m, mat.ncols())?;
            mat
        }
    };
    Ok(NetworkState {
        t: 0,
        estimates,
        alpha,
    })
}

impl<T: Scalar> NetworkState<T> {
    pub fn agents(&self) -> usize {
        self.estimates.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.estimates.ncols()
    }

    pub fn estimate(&self, agent: usize) -> DVector<T> {
        self.estimates.row(agent).transpose()
    }
}

fn check_batches<T: Scalar>(n: usize, m: usize, batches: &[AgentBatch<T>]) -> Result<()> {
    check_len("batch count", n, batches.len())?;
    let mut seen = vec![false; n];
    let c = batches.first().map_or(0, |b| b.batch_size());
    for b in batches {
        if b.agent >= n || std::mem::replace(&mut seen[b.agent], true) {
            return Err(Error::InvalidParameter(format!(
                "batch agent index {} is out of range or repeated",
                b.agent
            )));
        }
        check_len("batch feature count", m, b.feature_count())?;
        check_len("batch size", c, b.batch_size())?;
        check_len("measurement vector", b.batch_size(), b.y.len())?;
    }
    Ok(())
}

/// One synchronous update. Every agent reads only the time-`t` snapshot, so
/// the order of `batches` does not matter; each batch is placed by its
/// `agent` field.
pub fn step<T: Scalar>(
    state: &NetworkState<T>,
    mixing: &MixingMatrix<T>,
    batches: &[AgentBatch<T>],
) -> Result<NetworkState<T>> {
    let n = state.agents();
    let m = state.feature_count();
    check_len("mixing matrix size", n, mixing.n())?;
    check_batches(n, m, batches)?;

    let mut next = mixing.weights() * &state.estimates;
    for b in batches {
        let theta = state.estimate(b.agent);
        let innov = b.innovation(&theta);
        for l in 0..m {
            next[(b.agent, l)] += state.alpha * innov[l];
        }
    }
    let t = state.t + 1;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { t });
    }
    Ok(NetworkState {
        t,
        estimates: next,
        alpha: state.alpha,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalError<T: Scalar> {
    /// `e_t = [e_{1,t}ᵀ, …, e_{n,t}ᵀ]ᵀ`, agent-major.
    pub stacked: DVector<T>,
    pub norm_sq: T,
}

pub fn global_error<T: Scalar>(state: &NetworkState<T>, reference: &DVector<T>) -> Result<GlobalError<T>> {
    let (n, m) = state.estimates.shape();
    check_len("reference vector", m, reference.len())?;
    let stacked = DVector::from_fn(n * m, |k, _| state.estimates[(k / m, k % m)] - reference[k % m]);
    let norm_sq = stacked.norm_squared();
    Ok(GlobalError { stacked, norm_sq })
}

/// Least-squares weights on the whole pool, `argmin ‖Φθ - y‖² + ridge‖θ‖²`.
///
/// With `ridge = 0` the minimum-norm solution is returned via the SVD, so a
/// rank-deficient design is handled.
pub fn centralized_baseline<T: Scalar>(pool: &DataPool<T>, fm: &FeatureMap<T>, ridge: T) -> Result<DVector<T>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if !(ridge >= T::zero()) || !ridge.is_finite() {
        return Err(Error::InvalidParameter("ridge must be finite and >= 0".into()));
    }
    let phi = pool.design_matrix(fm)?;
    let y = pool.outputs();
    if ridge > T::zero() {
        let m = phi.ncols();
        let gram = phi.tr_mul(&phi) + DMatrix::identity(m, m) * ridge;
        let rhs = phi.tr_mul(y);
        if let Some(chol) = gram.clone().cholesky() {
            return Ok(chol.solve(&rhs));
        }
        return gram
            .svd(true, true)
            .solve(&rhs, T::default_epsilon())
            .map_err(|e| Error::InvalidParameter(e.to_string()));
    }
    let svd = phi.svd(true, true);
    let max_sv = svd.singular_values.max();
    let dim = T::from_count(pool.len().max(fm.feature_count()));
    let eps = max_sv * dim * T::default_epsilon();
    svd.solve(y, eps).map_err(|e| Error::InvalidParameter(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    SyntheticTruth,
    CentralizedBaseline,
}

/// The θ* errors are measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference<T: Scalar> {
    pub kind: ReferenceKind,
    pub theta: DVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord<T: Scalar> {
    pub t: u64,
    pub global_error_sq: T,
    /// Stacked `e_t`, kept only on thinned iterations.
    pub error: Option<DVector<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTrace<T: Scalar> {
    pub reference: Reference<T>,
    /// One record per iteration, `t = 0..=T`.
    pub records: Vec<ErrorRecord<T>>,
}

impl<T: Scalar> ErrorTrace<T> {
    pub fn squared_errors(&self) -> impl Iterator<Item = T> + '_ {
        self.records.iter().map(|r| r.global_error_sq)
    }

    /// `t,global_error_sq` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,global_error_sq")?;
        for r in &self.records {
            writeln!(w, "{},{}", r.t, r.global_error_sq.as_f64())?;
        }
        Ok(())
    }

    /// One row per thinned iteration: `t,e_0,…,e_{nM-1}`.
    pub fn write_error_vectors_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let Some(dim) = self.records.iter().find_map(|r| r.error.as_ref().map(|e| e.len())) else {
            writeln!(w, "t")?;
            return Ok(());
        };
        write!(w, "t")?;
        for k in 0..dim {
            write!(w, ",e{k}")?;
        }
        writeln!(w)?;
        for r in &self.records {
            if let Some(e) = &r.error {
                write!(w, "{}", r.t)?;
                for v in e.iter() {
                    write!(w, ",{}", v.as_f64())?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Everything one Monte-Carlo trajectory needs.
pub struct Trajectory<'a, T: Scalar, S: BatchSource<T> + ?Sized> {
    pub mixing: &'a MixingMatrix<T>,
    pub source: &'a S,
    /// Innovation gain; may differ from the α inside `mixing`.
    pub alpha: T,
    pub batch_size: usize,
    pub iterations: u64,
    /// Keep stacked error vectors every `thin` iterations; 0 keeps none.
    pub thin: u64,
    pub reference: &'a Reference<T>,
    /// Initial estimates; zeros when `None`.
    pub init: Option<&'a DMatrix<T>>,
}

impl<T: Scalar, S: BatchSource<T> + ?Sized> Trajectory<'_, T, S> {
    pub fn draw_batches(&self, t: u64, key: StreamKey) -> Result<Vec<AgentBatch<T>>> {
        (0..self.mixing.n())
            .map(|i| self.source.draw_batch(i, t, self.batch_size, key))
            .collect()
    }
}

/// Runs `iterations` updates, recording `‖e_t‖²` at every step.
pub fn run_trajectory<T: Scalar, S: BatchSource<T> + ?Sized>(
    traj: &Trajectory<'_, T, S>,
    run_key: StreamKey,
) -> Result<ErrorTrace<T>> {
    let n = traj.mixing.n();
    let m = traj.source.feature_count();
    check_len("reference vector", m, traj.reference.theta.len())?;
    let init = match traj.init {
        Some(mat) => Init::Given(mat.clone()),
        None => Init::Zeros,
    };
    let mut state = init_state(n, m, init, traj.alpha)?;
    let keep = |t: u64| traj.thin > 0 && t % traj.thin == 0;

    let e0 = global_error(&state, &traj.reference.theta)?;
    let limit = T::lit(DIVERGENCE_FACTOR) * e0.norm_sq.max(T::one());
    let mut records = Vec::with_capacity(traj.iterations as usize + 1);
    records.push(ErrorRecord {
        t: 0,
        global_error_sq: e0.norm_sq,
        error: keep(0).then_some(e0.stacked),
    });
    for _ in 0..traj.iterations {
        let batches = traj.draw_batches(state.t, run_key)?;
        state = step(&state, traj.mixing, &batches)?;
        let err = global_error(&state, &traj.reference.theta)?;
        if !(err.norm_sq <= limit) {
            return Err(Error::Diverged { t: state.t });
        }
        records.push(ErrorRecord {
            t: state.t,
            global_error_sq: err.norm_sq,
            error: keep(state.t).then_some(err.stacked),
        });
    }
    Ok(ErrorTrace {
        reference: traj.reference.clone(),
        records,
    })
}

/// Realized one-step error map `e_{t+1} = Q'_t e_t + α E_t` for the given batches.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecursion<T: Scalar> {
    /// `P ⊗ I_M - α·diag[H_iᵀH_i]`; equals `I - αB_t` when `P = I - αL`.
    pub q_prime: DMatrix<T>,
    /// Stacked `H_iᵀ v_i`.
    pub noise_drive: DVector<T>,
}

impl<T: Scalar> ErrorRecursion<T> {
    pub fn apply(&self, e: &DVector<T>, alpha: T) -> DVector<T> {
        &self.q_prime * e + &self.noise_drive * alpha
    }
}

/// Builds the realized recursion from logged batches, which must carry their noise.
pub fn error_recursion<T: Scalar>(
    mixing: &MixingMatrix<T>,
    alpha: T,
    batches: &[AgentBatch<T>],
) -> Result<ErrorRecursion<T>> {
    let n = mixing.n();
    let m = batches.first().map_or(0, |b| b.feature_count());
    check_batches(n, m, batches)?;
    let mut ordered: Vec<&AgentBatch<T>> = batches.iter().collect();
    ordered.sort_by_key(|b| b.agent);
    let hth: Vec<DMatrix<T>> = ordered.iter().map(|b| b.h.tr_mul(&b.h)).collect();
    let q_prime = kron_identity(mixing.weights(), m) - block_diag(&hth) * alpha;
    let mut noise_drive = DVector::zeros(n * m);
    for b in ordered {
        let v = b.noise.as_ref().ok_or_else(|| {
            Error::InvalidParameter("batch carries no noise record".into())
        })?;
        let drive = b.h.tr_mul(v);
        noise_drive.rows_mut(b.agent * m, m).copy_from(&drive);
    }
    Ok(ErrorRecursion { q_prime, noise_drive })
}
