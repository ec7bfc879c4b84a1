use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AgentBatch, BatchSource};
use crate::error::{check_len, Error, Result};
use crate::features::FeatureMap;
use crate::rng::{SimRng, StreamKey};
use crate::Scalar;

/// Distribution of synthetic inputs; every coordinate is drawn i.i.d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSampler {
    #[default]
    StandardNormal,
    Gaussian {
        mean: f64,
        std: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
}

impl InputSampler {
    fn validate(&self) -> Result<()> {
        match *self {
            InputSampler::StandardNormal => Ok(()),
            InputSampler::Gaussian { mean, std } if mean.is_finite() && std.is_finite() && std >= 0.0 => Ok(()),
            InputSampler::Uniform { low, high } if low.is_finite() && high.is_finite() && low < high => Ok(()),
            other => Err(Error::InvalidParameter(format!("bad input sampler {other:?}"))),
        }
    }

    fn sample_coord(&self, rng: &mut SimRng) -> f64 {
        match *self {
            InputSampler::StandardNormal => StandardNormal.sample(rng),
            InputSampler::Gaussian { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
            InputSampler::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }

    /// Characteristic function `E[exp(i wᵀx)]` as `(re, im)`.
    fn characteristic(&self, w: &[f64]) -> (f64, f64) {
        match *self {
            InputSampler::StandardNormal => {
                let sq: f64 = w.iter().map(|v| v * v).sum();
                ((-0.5 * sq).exp(), 0.0)
            }
            InputSampler::Gaussian { mean, std } => {
                let sq: f64 = w.iter().map(|v| v * v).sum();
                let sum: f64 = w.iter().sum();
                let mag = (-0.5 * std * std * sq).exp();
                let phase = mean * sum;
                (mag * phase.cos(), mag * phase.sin())
            }
            InputSampler::Uniform { low, high } => {
                let mid = 0.5 * (low + high);
                let half = 0.5 * (high - low);
                let mut mag = 1.0;
                let mut phase = 0.0;
                for &wk in w {
                    let a = wk * half;
                    mag *= if a == 0.0 { 1.0 } else { a.sin() / a };
                    phase += wk * mid;
                }
                (mag * phase.cos(), mag * phase.sin())
            }
        }
    }

    /// `E[cos(wᵀx + shift)]`.
    fn expected_cos(&self, w: &[f64], shift: f64) -> f64 {
        let (re, im) = self.characteristic(w);
        shift.cos() * re - shift.sin() * im
    }
}

/// Ground-truth model `y = φ(x)ᵀθ + v`, `v ~ N(0, σ_v²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModel<T: Scalar> {
    pub theta_true: DVector<T>,
    pub feature_map: FeatureMap<T>,
    pub noise_std: T,
    pub input: InputSampler,
}

impl<T: Scalar> SyntheticModel<T> {
    pub fn new(
        theta_true: DVector<T>,
        feature_map: FeatureMap<T>,
        noise_std: T,
        input: InputSampler,
    ) -> Result<Self> {
        check_len("theta_true", feature_map.feature_count(), theta_true.len())?;
        if !(noise_std >= T::zero()) || !noise_std.is_finite() {
            return Err(Error::InvalidParameter("noise std must be finite and >= 0".into()));
        }
        input.validate()?;
        Ok(SyntheticModel {
            theta_true,
            feature_map,
            noise_std,
            input,
        })
    }

    /// `G = E[φ(x)φ(x)ᵀ]` in closed form.
    ///
    /// With `a_p = ν_pᵀx + b_p`, `2cos(a_p)cos(a_q) = cos(a_p - a_q) + cos(a_p + a_q)`
    /// and each term is the real part of the input's characteristic function.
    pub fn exact_gram(&self) -> DMatrix<T> {
        let fm = &self.feature_map;
        let m = fm.feature_count();
        let d = fm.input_dim();
        let nu: Vec<Vec<f64>> = (0..m)
            .map(|l| (0..d).map(|k| fm.frequencies()[(l, k)].as_f64()).collect())
            .collect();
        let b: Vec<f64> = fm.offsets().iter().map(|v| v.as_f64()).collect();
        let mut g = DMatrix::zeros(m, m);
        let mut diff = vec![0.0; d];
        let mut sum = vec![0.0; d];
        for p in 0..m {
            for q in p..m {
                for k in 0..d {
                    diff[k] = nu[p][k] - nu[q][k];
                    sum[k] = nu[p][k] + nu[q][k];
                }
                let v = self.input.expected_cos(&diff, b[p] - b[q])
                    + self.input.expected_cos(&sum, b[p] + b[q]);
                g[(p, q)] = T::lit(v);
                g[(q, p)] = T::lit(v);
            }
        }
        g
    }
}

impl<T: Scalar> BatchSource<T> for SyntheticModel<T> {
    fn feature_count(&self) -> usize {
        self.feature_map.feature_count()
    }

    fn draw_row(&self, _agent: usize, rng: &mut SimRng, row: &mut [T]) -> T {
        let d = self.feature_map.input_dim();
        let x: Vec<T> = (0..d).map(|_| T::lit(self.input.sample_coord(rng))).collect();
        self.feature_map
            .eval_into(&x, row)
            .expect("buffer sized by feature_count");
        row.iter()
            .zip(self.theta_true.iter())
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    fn noise_std(&self) -> Option<T> {
        Some(self.noise_std)
    }

    fn exact_gram(&self, _agent: usize) -> Option<DMatrix<T>> {
        Some(SyntheticModel::exact_gram(self))
    }
}

/// Draws `c` synthetic measurements for `(agent, t)`.
pub fn draw_batch_synthetic<T: Scalar>(
    model: &SyntheticModel<T>,
    agent: usize,
    t: u64,
    c: usize,
    key: StreamKey,
) -> Result<AgentBatch<T>> {
    model.draw_batch(agent, t, c, key)
}
