//! Random cosine features.
//!
//! A [`FeatureMap`] holds `M` frequency vectors `ν_l ~ N(0, I_d)` and offsets
//! `b_l ~ U[0, 2π)`. Feature `l` of an input `x` is `√2·cos(ν_lᵀx + b_l)`, and
//! the average of products of features approximates the unit-width Gaussian
//! kernel `exp(-‖x - x'‖² / 2)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::rng::{label, StreamKey};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T: Scalar> {
    /// `M × d`, row `l` is `ν_l`.
    frequencies: DMatrix<T>,
    offsets: DVector<T>,
    seed: u64,
}

impl<T: Scalar> FeatureMap<T> {
    /// Draws `count` features for `input_dim`-dimensional inputs.
    ///
    /// Sampling happens in `f64` and is then converted, so maps of different
    /// scalar types built from one seed agree up to rounding.
    pub fn sample(input_dim: usize, count: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidParameter("input dimension must be positive".into()));
        }
        if count == 0 {
            return Err(Error::InvalidParameter("feature count must be positive".into()));
        }
        let mut rng = StreamKey::new(seed).child(label::FEATURES).rng();
        let mut frequencies = DMatrix::zeros(count, input_dim);
        let mut offsets = DVector::zeros(count);
        let two_pi = T::two_pi();
        for l in 0..count {
            for k in 0..input_dim {
                let z: f64 = rng.sample(StandardNormal);
                frequencies[(l, k)] = T::lit(z);
            }
            let u: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            let b = T::lit(u);
            // rounding can land exactly on 2π; that offset is 0 modulo the period
            offsets[l] = if b >= two_pi { T::zero() } else { b };
        }
        Ok(FeatureMap {
            frequencies,
            offsets,
            seed,
        })
    }

    /// Builds a map from explicit parameters. Offsets must lie in `[0, 2π)`.
    pub fn from_parts(frequencies: DMatrix<T>, offsets: DVector<T>, seed: u64) -> Result<Self> {
        if frequencies.nrows() == 0 || frequencies.ncols() == 0 {
            return Err(Error::InvalidParameter("frequency matrix must be non-empty".into()));
        }
        check_len("offsets", frequencies.nrows(), offsets.len())?;
        if frequencies.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("frequencies must be finite".into()));
        }
        if let Some(b) = offsets
            .iter()
            .find(|&&b| !(b >= T::zero() && b < T::two_pi()))
        {
            return Err(Error::InvalidParameter(format!(
                "offset {} outside [0, 2π)",
                b.as_f64()
            )));
        }
        Ok(FeatureMap {
            frequencies,
            offsets,
            seed,
        })
    }

    pub fn feature_count(&self) -> usize {
        self.frequencies.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn frequencies(&self) -> &DMatrix<T> {
        &self.frequencies
    }

    pub fn offsets(&self) -> &DVector<T> {
        &self.offsets
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Evaluates all `M` features at `x`.
    pub fn eval(&self, x: &[T]) -> Result<DVector<T>> {
        let mut out = DVector::zeros(self.feature_count());
        self.eval_into(x, out.as_mut_slice())?;
        Ok(out)
    }

    /// Writes the features of `x` into `out` without allocating.
    pub fn eval_into(&self, x: &[T], out: &mut [T]) -> Result<()> {
        check_len("input vector", self.input_dim(), x.len())?;
        check_len("feature buffer", self.feature_count(), out.len())?;
        let sqrt2 = T::lit(std::f64::consts::SQRT_2);
        for (l, slot) in out.iter_mut().enumerate() {
            let mut arg = self.offsets[l];
            for (k, &xk) in x.iter().enumerate() {
                arg += self.frequencies[(l, k)] * xk;
            }
            *slot = sqrt2 * arg.cos();
        }
        Ok(())
    }

    /// Monte-Carlo kernel estimate `(1/M) Σ_l φ_l(x) φ_l(x2)`.
    pub fn approx_kernel(&self, x: &[T], x2: &[T]) -> Result<T> {
        let a = self.eval(x)?;
        let b = self.eval(x2)?;
        Ok(a.dot(&b) / T::from_count(self.feature_count()))
    }
}

/// Unit-width Gaussian kernel `exp(-‖x - x2‖² / 2)`.
pub fn gaussian_kernel<T: Scalar>(x: &[T], x2: &[T]) -> Result<T> {
    check_len("kernel input", x.len(), x2.len())?;
    let sq: T = x
        .iter()
        .zip(x2)
        .map(|(&a, &b)| (a - b) * (a - b))
        .fold(T::zero(), |acc, v| acc + v);
    Ok((-sq * T::lit(0.5)).exp())
}
