use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, GramMethod, Mode};
use crate::analysis::{build_system, estimate_sigma_v_sq, feasibility, predict_first_moment, SpectralReport, SystemMatrices};
use crate::error::{Error, Result};
use crate::estimator::{centralized_baseline, run_trajectory, Reference, ReferenceKind, Trajectory};
use crate::features::FeatureMap;
use crate::network::{MixingMatrix, Topology};
use crate::observation::{
    estimate_gram, gram_report, load_csv, BatchSource, FeaturizedPool, GramReport, PoolSampling, SyntheticModel,
};
use crate::rng::{label, SimRng, StreamKey};
use crate::Scalar;

/// The measurement source an experiment draws from.
#[derive(Debug, Clone)]
pub enum Source<T: Scalar> {
    Synthetic(SyntheticModel<T>),
    Pool(FeaturizedPool<T>),
}

impl<T: Scalar> BatchSource<T> for Source<T> {
    fn feature_count(&self) -> usize {
        match self {
            Source::Synthetic(s) => s.feature_count(),
            Source::Pool(p) => p.feature_count(),
        }
    }

    fn draw_row(&self, agent: usize, rng: &mut SimRng, row: &mut [T]) -> T {
        match self {
            Source::Synthetic(s) => s.draw_row(agent, rng, row),
            Source::Pool(p) => p.draw_row(agent, rng, row),
        }
    }

    fn noise_std(&self) -> Option<T> {
        match self {
            Source::Synthetic(s) => s.noise_std(),
            Source::Pool(p) => p.noise_std(),
        }
    }

    fn exact_gram(&self, agent: usize) -> Option<DMatrix<T>> {
        match self {
            Source::Synthetic(s) => BatchSource::exact_gram(s, agent),
            Source::Pool(p) => BatchSource::exact_gram(p, agent),
        }
    }
}

/// Everything derived from a config before any Monte-Carlo run.
#[derive(Debug, Clone)]
pub struct Prepared<T: Scalar + Serialize> {
    pub config: ExperimentConfig,
    pub topology: Topology,
    pub mixing: MixingMatrix<T>,
    pub feature_map: FeatureMap<T>,
    pub source: Source<T>,
    pub reference: Reference<T>,
    pub system: SystemMatrices<T>,
    pub spectral: SpectralReport<T>,
    /// Rows in the pool after ingestion (pool mode).
    pub pool_rows: Option<usize>,
    /// Why the first-moment prediction is not attached, if it is not.
    pub lti_unavailable: Option<String>,
}

pub fn prepare<T: Scalar + Serialize>(config: &ExperimentConfig) -> Result<Prepared<T>> {
    config.validate()?;
    let run = &config.run;
    let topology = config.network.build()?;
    let n = topology.n();
    let mixing = MixingMatrix::new(&topology, T::lit(run.consensus_alpha()))?;
    let m = config.model.features;
    let feature_seed = config.model.feature_seed.unwrap_or(run.master_seed);
    let master = StreamKey::new(run.master_seed);

    let mut pool_rows = None;
    let mut lti_unavailable = None;
    let (feature_map, source, reference, sigma_v_sq) = match config.mode {
        Mode::Synthetic => {
            let syn = config.synthetic.as_ref().expect("validated");
            let d = config.model.input_dim.expect("validated");
            let fm = FeatureMap::sample(d, m, feature_seed)?;
            let theta = match &syn.theta {
                Some(v) => DVector::from_iterator(m, v.iter().map(|&x| T::lit(x))),
                None => {
                    let mut rng = master.child(label::THETA).rng();
                    DVector::from_fn(m, |_, _| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        T::lit(z)
                    })
                }
            };
            let noise = T::lit(syn.noise_std);
            let model = SyntheticModel::new(theta.clone(), fm.clone(), noise, syn.input)?;
            let reference = Reference {
                kind: ReferenceKind::SyntheticTruth,
                theta,
            };
            (fm, Source::Synthetic(model), reference, noise * noise)
        }
        Mode::Pool => {
            let data = config.data.as_ref().expect("validated");
            let pool = load_csv::<T>(&data.path, &data.csv_options(run.master_seed)?)?;
            if let Some(d) = config.model.input_dim {
                if d != pool.input_dim() {
                    return Err(Error::Config(format!(
                        "model.input_dim = {d} but the data has {} feature columns",
                        pool.input_dim()
                    )));
                }
            }
            pool_rows = Some(pool.len());
            let fm = FeatureMap::sample(pool.input_dim(), m, feature_seed)?;
            let theta = centralized_baseline(&pool, &fm, T::lit(data.ridge))?;
            let sigma_v_sq = estimate_sigma_v_sq(&pool, &fm, &theta)?;
            let sampling = data.sampling();
            if sampling != PoolSampling::Shared {
                lti_unavailable = Some("partitioned sampling: the baseline is not a fixed point of every agent".into());
            } else if data.ridge != 0.0 {
                lti_unavailable = Some("ridge > 0: the baseline is not a fixed point of the mean dynamics".into());
            }
            let featurized = FeaturizedPool::new(&pool, &fm, sampling, n)?;
            let reference = Reference {
                kind: ReferenceKind::CentralizedBaseline,
                theta,
            };
            (fm, Source::Pool(featurized), reference, sigma_v_sq)
        }
    };
    if run.consensus_alpha() != run.alpha {
        lti_unavailable = Some("consensus step size differs from the innovation step size".into());
    }

    let g_blocks: Vec<DMatrix<T>> = match config.analysis.gram {
        GramMethod::Exact => (0..n)
            .map(|i| source.exact_gram(i).expect("both sources have an exact G"))
            .collect(),
        GramMethod::MonteCarlo => (0..n)
            .map(|i| estimate_gram(&source, i, config.analysis.gram_samples, master))
            .collect::<Result<_>>()?,
    };
    let system = build_system(&topology, g_blocks, run.batch_size, T::lit(run.alpha))?;
    let spectral = feasibility(&system, sigma_v_sq)?;

    Ok(Prepared {
        config: config.clone(),
        topology,
        mixing,
        feature_map,
        source,
        reference,
        system,
        spectral,
        pool_rows,
        lti_unavailable,
    })
}

impl<T: Scalar + Serialize> Prepared<T> {
    pub fn agents(&self) -> usize {
        self.topology.n()
    }

    pub fn trajectory(&self) -> Trajectory<'_, T, Source<T>> {
        let run = &self.config.run;
        Trajectory {
            mixing: &self.mixing,
            source: &self.source,
            alpha: T::lit(run.alpha),
            batch_size: run.batch_size,
            iterations: run.iterations,
            thin: run.thin,
            reference: &self.reference,
            init: None,
        }
    }

    /// `e_0 = -1 ⊗ θ*` for zero-initialized estimates.
    pub fn initial_error(&self) -> DVector<T> {
        let m = self.reference.theta.len();
        DVector::from_fn(self.agents() * m, |k, _| -self.reference.theta[k % m])
    }

    /// Predicted `E[e_t]` at `t = 0, thin, 2·thin, …, ≤ T`.
    pub fn lti_prediction(&self) -> Result<Vec<DVector<T>>> {
        let run = &self.config.run;
        let pred = predict_first_moment(&self.system, &self.initial_error(), run.iterations, run.thin)?;
        Ok(pred.into_iter().map(|p| p.mean_error).collect())
    }
}

/// A Monte-Carlo run that did not finish.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub run: usize,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<u64>,
    pub message: String,
}

/// Tail statistics of `‖e_t‖²/n` over the last 10% of iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailStats<T: Scalar + Serialize> {
    /// First iteration included.
    pub start: u64,
    /// Run-average of the per-run tail means.
    pub mean: T,
    /// Standard error of `mean` across runs.
    pub stderr: T,
}

/// Figure series and comparison material aggregated over completed runs.
#[derive(Debug, Clone)]
pub struct AggregateResult<T: Scalar + Serialize> {
    pub agents: usize,
    pub feature_count: usize,
    /// Runs that completed and entered the averages.
    pub runs: usize,
    pub iterations: u64,
    /// Recorded iterations, multiples of the thinning interval.
    pub t: Vec<u64>,
    /// `‖(1/R) Σ_r e_t^(r)‖² / n`.
    pub fig1: Vec<T>,
    /// Delta-method standard error of `fig1`, `2‖ē_t‖·SE(ē_t)/n`.
    pub fig1_stderr: Vec<T>,
    /// `(1/R) Σ_r ‖e_t^(r)‖² / n`.
    pub fig2: Vec<T>,
    pub fig2_stderr: Vec<T>,
    /// Run-averaged stacked error `ē_t`.
    pub mean_error: Vec<DVector<T>>,
    /// Componentwise standard error of `ē_t`.
    pub mean_error_stderr: Vec<DVector<T>>,
    pub tail: TailStats<T>,
    pub spectral: SpectralReport<T>,
    /// Predicted `E[e_t]` aligned with `t`.
    pub lti_prediction: Option<Vec<DVector<T>>>,
    pub reference: Reference<T>,
}

impl<T: Scalar + Serialize> AggregateResult<T> {
    /// `‖SE(ē_t)‖`, the norm of the componentwise standard errors.
    pub fn mean_error_stderr_norm(&self, k: usize) -> T {
        self.mean_error_stderr[k].norm()
    }

    /// `‖p_t‖²/n` for the attached prediction.
    pub fn lti_series(&self) -> Option<Vec<T>> {
        let n = T::from_count(self.agents);
        self.lti_prediction
            .as_ref()
            .map(|p| p.iter().map(|v| v.norm_squared() / n).collect())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome<T: Scalar + Serialize> {
    pub runs_requested: usize,
    /// `None` when every run failed.
    pub result: Option<AggregateResult<T>>,
    pub failures: Vec<RunFailure>,
}

struct RunSummary<T: Scalar> {
    norms: Vec<T>,
    vectors: Vec<DVector<T>>,
    tail_mean: T,
}

fn tail_start(iterations: u64) -> u64 {
    iterations - iterations / 10
}

fn summarize_run<T: Scalar + Serialize>(prepared: &Prepared<T>, run: usize) -> Result<RunSummary<T>> {
    let cfg = &prepared.config.run;
    let key = StreamKey::for_run(cfg.master_seed, run);
    let trace = run_trajectory(&prepared.trajectory(), key)?;
    let start = tail_start(cfg.iterations);
    let mut tail_sum = T::zero();
    let mut tail_len = 0usize;
    let mut norms = Vec::new();
    let mut vectors = Vec::new();
    for rec in trace.records {
        if rec.t >= start {
            tail_sum += rec.global_error_sq;
            tail_len += 1;
        }
        if let Some(e) = rec.error {
            norms.push(rec.global_error_sq);
            vectors.push(e);
        }
    }
    Ok(RunSummary {
        norms,
        vectors,
        tail_mean: tail_sum / T::from_count(tail_len),
    })
}

/// Runs every Monte-Carlo trajectory of a prepared experiment.
///
/// Runs execute in parallel; results are combined in run order so the output
/// does not depend on scheduling.
pub fn run_prepared<T: Scalar + Serialize>(prepared: &Prepared<T>) -> Result<ExperimentOutcome<T>> {
    let cfg = &prepared.config.run;
    let summaries: Vec<Result<RunSummary<T>>> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| summarize_run(prepared, r))
        .collect();

    let mut ok = Vec::with_capacity(summaries.len());
    let mut failures = Vec::new();
    for (run, s) in summaries.into_iter().enumerate() {
        match s {
            Ok(s) => ok.push(s),
            Err(e) => failures.push(RunFailure {
                run,
                kind: e.kind().to_string(),
                t: match e {
                    Error::Diverged { t } => Some(t),
                    _ => None,
                },
                message: e.to_string(),
            }),
        }
    }
    // anything other than divergence is a setup problem, not a statistical outcome
    if let Some(f) = failures.iter().find(|f| f.kind != "diverged") {
        return Err(Error::InvalidParameter(format!("run {} failed: {}", f.run, f.message)));
    }
    let result = if ok.is_empty() {
        None
    } else {
        Some(aggregate(prepared, &ok)?)
    };
    Ok(ExperimentOutcome {
        runs_requested: cfg.runs,
        result,
        failures,
    })
}

pub fn run_experiment<T: Scalar + Serialize>(config: &ExperimentConfig) -> Result<ExperimentOutcome<T>> {
    run_prepared(&prepare::<T>(config)?)
}

fn aggregate<T: Scalar + Serialize>(prepared: &Prepared<T>, runs: &[RunSummary<T>]) -> Result<AggregateResult<T>> {
    let cfg = &prepared.config.run;
    let n = prepared.agents();
    let nf = T::from_count(n);
    let r = runs.len();
    let rf = T::from_count(r);
    // sample variances use R - 1; a single run has no spread estimate
    let dof = if r > 1 { T::from_count(r - 1) } else { T::one() };
    let spread = if r > 1 { T::one() } else { T::zero() };

    let t: Vec<u64> = (0..=cfg.iterations).step_by(cfg.thin as usize).collect();
    let dim = prepared.system.dim();
    let mut fig1 = Vec::with_capacity(t.len());
    let mut fig1_stderr = Vec::with_capacity(t.len());
    let mut fig2 = Vec::with_capacity(t.len());
    let mut fig2_stderr = Vec::with_capacity(t.len());
    let mut mean_error = Vec::with_capacity(t.len());
    let mut mean_error_stderr = Vec::with_capacity(t.len());

    for k in 0..t.len() {
        let mut mean = DVector::<T>::zeros(dim);
        let mut norm_mean = T::zero();
        for s in runs {
            mean += &s.vectors[k];
            norm_mean += s.norms[k];
        }
        mean /= rf;
        norm_mean /= rf;

        let mut var = DVector::<T>::zeros(dim);
        let mut norm_var = T::zero();
        for s in runs {
            let d = &s.vectors[k] - &mean;
            var += d.component_mul(&d);
            let dn = s.norms[k] - norm_mean;
            norm_var += dn * dn;
        }
        let se = var.map(|v| (v / dof / rf).sqrt() * spread);
        let norm_se = (norm_var / dof / rf).sqrt() * spread;

        let mean_sq = mean.norm_squared();
        fig1.push(mean_sq / nf);
        fig1_stderr.push(T::lit(2.0) * mean_sq.sqrt() * se.norm() / nf);
        fig2.push(norm_mean / nf);
        fig2_stderr.push(norm_se / nf);
        mean_error.push(mean);
        mean_error_stderr.push(se);
    }

    let tail_mean = runs.iter().fold(T::zero(), |a, s| a + s.tail_mean) / rf;
    let tail_var = runs
        .iter()
        .map(|s| (s.tail_mean - tail_mean) * (s.tail_mean - tail_mean))
        .fold(T::zero(), |a, v| a + v);
    let tail = TailStats {
        start: tail_start(cfg.iterations),
        mean: tail_mean / nf,
        stderr: (tail_var / dof / rf).sqrt() * spread / nf,
    };

    let lti_prediction = match prepared.lti_unavailable {
        None => Some(prepared.lti_prediction()?),
        Some(_) => None,
    };

    Ok(AggregateResult {
        agents: n,
        feature_count: prepared.feature_map.feature_count(),
        runs: r,
        iterations: cfg.iterations,
        t,
        fig1,
        fig1_stderr,
        fig2,
        fig2_stderr,
        mean_error,
        mean_error_stderr,
        tail,
        spectral: prepared.spectral.clone(),
        lti_prediction,
        reference: prepared.reference.clone(),
    })
}

/// Assumption checks run by `validate`.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub agents: usize,
    pub connected: bool,
    pub components: usize,
    pub max_degree: usize,
    pub consensus_alpha: f64,
    pub stochasticity_defect: f64,
    pub doubly_stochastic: bool,
    pub gram: Vec<GramReport>,
    /// Rank of `Σ G_i`; full rank means the parameter is globally identifiable.
    pub global_rank: usize,
    pub globally_identifiable: bool,
    pub feature_abs_max: f64,
    pub feature_bound_holds: bool,
    pub passed: bool,
}

/// Rows per agent sampled for the feature bound check.
const BOUND_CHECK_ROWS: usize = 1000;

pub fn check_assumptions<T: Scalar + Serialize>(prepared: &Prepared<T>) -> Result<AssumptionReport> {
    let n = prepared.agents();
    let m = prepared.feature_map.feature_count();
    let defect = prepared.mixing.stochasticity_defect().as_f64();
    let gram: Vec<GramReport> = prepared
        .system
        .g_blocks
        .iter()
        .enumerate()
        .map(|(i, g)| gram_report(i, g))
        .collect();
    let sum = prepared
        .system
        .g_blocks
        .iter()
        .fold(DMatrix::<T>::zeros(m, m), |a, g| a + g);
    let global = gram_report(n, &sum);

    let key = StreamKey::new(prepared.config.run.master_seed).child(label::GRAM);
    let mut abs_max = 0.0f64;
    for i in 0..n {
        let b = prepared.source.draw_batch(i, 0, BOUND_CHECK_ROWS, key)?;
        abs_max = b.h.iter().fold(abs_max, |a, v| a.max(v.as_f64().abs()));
    }
    let bound = std::f64::consts::SQRT_2 * (1.0 + 1e-12);
    let connected = prepared.topology.is_connected();
    let doubly_stochastic = defect < 1e-12;
    let feature_bound_holds = abs_max <= bound;
    Ok(AssumptionReport {
        agents: n,
        connected,
        components: prepared.topology.components(),
        max_degree: prepared.topology.max_degree(),
        consensus_alpha: prepared.mixing.alpha().as_f64(),
        stochasticity_defect: defect,
        doubly_stochastic,
        global_rank: global.rank,
        globally_identifiable: global.rank == m,
        gram,
        feature_abs_max: abs_max,
        feature_bound_holds,
        passed: connected && doubly_stochastic && feature_bound_holds && global.rank == m,
    })
}
