//! Mean-error LTI model, step-size feasibility, and the second-moment bound.
//!
//! With `B = L ⊗ I_M + c·diag[G_1, …, G_n]` and `Q = I - αB`, the expected
//! global error evolves as `E[e_t] = Q E[e_{t-1}]`. The first moment
//! contracts when `α < 2/λ₁(B)`. The second moment obeys
//! `E‖e_{t+1}‖² ≤ Φ_a E‖e_t‖² + Φ_b` with
//!
//! ```text
//! Φ_a = 1 - 2αλ_min(B) + α²(λ₁(L) + 2Mc)²
//! Φ_b = 2α²cMnσ_v²
//! ```
//!
//! so for `α < 2λ_min(B)/(λ₁(L) + 2Mc)²` it converges to `Φ_b/(1 - Φ_a)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::features::FeatureMap;
use crate::linalg::{block_diag, kron_identity, sym_eigenvalues_desc, symmetrize};
use crate::network::Topology;
use crate::observation::{AgentBatch, DataPool};
use crate::Scalar;

/// `B`, `Q` and the ingredients they were assembled from.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices<T: Scalar> {
    pub b: DMatrix<T>,
    pub q: DMatrix<T>,
    pub laplacian: DMatrix<T>,
    pub g_blocks: Vec<DMatrix<T>>,
    pub c: usize,
    pub alpha: T,
}

pub fn build_system<T: Scalar>(
    topology: &Topology,
    g_blocks: Vec<DMatrix<T>>,
    c: usize,
    alpha: T,
) -> Result<SystemMatrices<T>> {
    let n = topology.n();
    check_len("G block count", n, g_blocks.len())?;
    let m = g_blocks[0].nrows();
    if m == 0 {
        return Err(Error::InvalidParameter("G blocks must be non-empty".into()));
    }
    for g in &g_blocks {
        if !g.is_square() {
            return Err(Error::InvalidParameter(format!(
                "G block is {}x{}, expected square",
                g.nrows(),
                g.ncols()
            )));
        }
        check_len("G block size", m, g.nrows())?;
    }
    if c == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let laplacian = topology.laplacian::<T>();
    let b = kron_identity(&laplacian, m) + block_diag(&g_blocks) * T::from_count(c);
    let b = symmetrize(&b);
    let q = DMatrix::identity(n * m, n * m) - &b * alpha;
    Ok(SystemMatrices {
        b,
        q,
        laplacian,
        g_blocks,
        c,
        alpha,
    })
}

impl<T: Scalar> SystemMatrices<T> {
    pub fn agents(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.g_blocks[0].nrows()
    }

    pub fn dim(&self) -> usize {
        self.agents() * self.feature_count()
    }

    /// `B e` computed from `L` and the `G_i` blocks without forming `B`.
    pub fn apply_b(&self, e: &DVector<T>) -> DVector<T> {
        let n = self.agents();
        let m = self.feature_count();
        let c = T::from_count(self.c);
        let mut out = DVector::zeros(n * m);
        for i in 0..n {
            let ei = e.rows(i * m, m);
            let mut oi = &self.g_blocks[i] * ei * c;
            for j in 0..n {
                let lij = self.laplacian[(i, j)];
                if lij != T::zero() {
                    oi += e.rows(j * m, m) * lij;
                }
            }
            out.rows_mut(i * m, m).copy_from(&oi);
        }
        out
    }

    /// `Q e = e - αBe`.
    pub fn apply_q(&self, e: &DVector<T>) -> DVector<T> {
        e - self.apply_b(e) * self.alpha
    }
}

/// Spectral quantities of `B`, `Q` and `L`, the two step-size thresholds,
/// and the second-moment recursion coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport<T: Scalar + Serialize> {
    pub n: usize,
    pub m: usize,
    pub c: usize,
    pub alpha: T,
    pub lambda_max_b: T,
    pub lambda_min_b: T,
    pub lambda_max_l: T,
    /// `1 - αλ_min(B)`.
    pub lambda_max_q: T,
    /// `1 - αλ₁(B)`.
    pub lambda_min_q: T,
    pub rho_q: T,
    /// `2/λ₁(B)`.
    pub alpha_first_moment_max: T,
    /// `2λ_min(B)/(λ₁(L) + 2Mc)²`.
    pub alpha_second_moment_max: T,
    pub first_moment_feasible: bool,
    pub second_moment_feasible: bool,
    pub b_positive_definite: bool,
    pub sigma_v_sq: T,
    pub phi_a: T,
    pub phi_b: T,
    /// Limit of `E‖e_t‖²`; present only when the second-moment condition holds.
    pub second_moment_bound: Option<T>,
    pub notes: Vec<String>,
}

pub fn feasibility<T: Scalar + Serialize>(sys: &SystemMatrices<T>, sigma_v_sq: T) -> Result<SpectralReport<T>> {
    if !(sigma_v_sq >= T::zero()) || !sigma_v_sq.is_finite() {
        return Err(Error::InvalidParameter("noise variance must be finite and >= 0".into()));
    }
    let n = sys.agents();
    let m = sys.feature_count();
    let c = sys.c;
    let alpha = sys.alpha;
    let two = T::lit(2.0);

    let eig_b = sym_eigenvalues_desc(&sys.b);
    let lambda_max_b = eig_b[0];
    let lambda_min_b = eig_b[eig_b.len() - 1];
    let lambda_max_l = sym_eigenvalues_desc(&sys.laplacian)[0];
    let lambda_max_q = T::one() - alpha * lambda_min_b;
    let lambda_min_q = T::one() - alpha * lambda_max_b;
    let rho_q = lambda_max_q.abs().max(lambda_min_q.abs());

    let curvature = lambda_max_l + two * T::from_count(m * c);
    let curvature_sq = curvature * curvature;
    let alpha_first_moment_max = two / lambda_max_b;
    let alpha_second_moment_max = two * lambda_min_b / curvature_sq;
    let phi_a = T::one() - two * alpha * lambda_min_b + alpha * alpha * curvature_sq;
    let phi_b = two * alpha * alpha * T::from_count(c * m * n) * sigma_v_sq;
    let denom = two * lambda_min_b - alpha * curvature_sq;

    let pd_tol = T::lit(1e-10) * lambda_max_b.abs().max(T::one());
    let b_positive_definite = lambda_min_b > pd_tol;
    let first_moment_feasible = alpha > T::zero() && alpha < alpha_first_moment_max;
    let second_moment_feasible =
        alpha > T::zero() && alpha < alpha_second_moment_max && denom > T::zero();
    let second_moment_bound = second_moment_feasible.then(|| {
        two * alpha * T::from_count(c * m * n) * sigma_v_sq / denom
    });

    let mut notes = Vec::new();
    if !b_positive_definite {
        notes.push(format!(
            "B is not positive definite (λ_min = {:e}); the parameter is not globally identifiable",
            lambda_min_b.as_f64()
        ));
    }
    if !first_moment_feasible {
        notes.push(format!(
            "α = {} is not below 2/λ₁(B) = {}; the mean error need not converge",
            alpha.as_f64(),
            alpha_first_moment_max.as_f64()
        ));
    }
    if !second_moment_feasible {
        notes.push(format!(
            "α = {} is not below the second-moment threshold {}; the variance bound is not applicable",
            alpha.as_f64(),
            alpha_second_moment_max.as_f64()
        ));
    }

    Ok(SpectralReport {
        n,
        m,
        c,
        alpha,
        lambda_max_b,
        lambda_min_b,
        lambda_max_l,
        lambda_max_q,
        lambda_min_q,
        rho_q,
        alpha_first_moment_max,
        alpha_second_moment_max,
        first_moment_feasible,
        second_moment_feasible,
        b_positive_definite,
        sigma_v_sq,
        phi_a,
        phi_b,
        second_moment_bound,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanErrorPrediction<T: Scalar> {
    pub t: u64,
    pub mean_error: DVector<T>,
}

/// Iterates `E[e_{t+1}] = Q E[e_t]` matrix-free, recording `t = 0, stride, 2·stride, …`.
pub fn predict_first_moment<T: Scalar>(
    sys: &SystemMatrices<T>,
    e0: &DVector<T>,
    horizon: u64,
    stride: u64,
) -> Result<Vec<MeanErrorPrediction<T>>> {
    check_len("initial error", sys.dim(), e0.len())?;
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    let mut out = Vec::with_capacity((horizon / stride) as usize + 1);
    let mut e = e0.clone();
    for t in 0..=horizon {
        if t % stride == 0 {
            out.push(MeanErrorPrediction {
                t,
                mean_error: e.clone(),
            });
        }
        if t < horizon {
            e = sys.apply_q(&e);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondMomentBound<T: Scalar> {
    /// Upper bound on `E‖e_t‖²` for `t = 0..=T`.
    pub values: Vec<T>,
    /// `Φ_a < 1`.
    pub converges: bool,
    /// `Φ_b/(1 - Φ_a)` when `converges`.
    pub limit: Option<T>,
}

/// Iterates `s_{t+1} = Φ_a s_t + Φ_b` from `s0`.
pub fn second_moment_recursion<T: Scalar + Serialize>(
    report: &SpectralReport<T>,
    s0: T,
    horizon: u64,
) -> Result<SecondMomentBound<T>> {
    if !(s0 >= T::zero()) {
        return Err(Error::InvalidParameter("initial second moment must be >= 0".into()));
    }
    Ok(iterate_second_moment(report.phi_a, report.phi_b, s0, horizon))
}

/// The recursion on raw coefficients.
pub fn iterate_second_moment<T: Scalar>(phi_a: T, phi_b: T, s0: T, horizon: u64) -> SecondMomentBound<T> {
    let mut values = Vec::with_capacity(horizon as usize + 1);
    let mut s = s0;
    values.push(s);
    for _ in 0..horizon {
        s = phi_a * s + phi_b;
        values.push(s);
    }
    let converges = phi_a < T::one() && phi_a > -T::one();
    SecondMomentBound {
        values,
        converges,
        limit: converges.then(|| phi_b / (T::one() - phi_a)),
    }
}

/// Plug-in noise variance `(1/N) Σ (y_j - φ(x_j)ᵀθ*)²` for pool-mode bounds.
pub fn estimate_sigma_v_sq<T: Scalar>(pool: &DataPool<T>, fm: &FeatureMap<T>, theta_star: &DVector<T>) -> Result<T> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    check_len("baseline vector", fm.feature_count(), theta_star.len())?;
    let phi = pool.design_matrix(fm)?;
    let resid = pool.outputs() - phi * theta_star;
    Ok(resid.norm_squared() / T::from_count(pool.len()))
}

/// Realized `B_t = L ⊗ I_M + diag[H_iᵀH_i]` for one round of batches.
pub fn realized_b<T: Scalar>(topology: &Topology, batches: &[AgentBatch<T>]) -> Result<DMatrix<T>> {
    let n = topology.n();
    check_len("batch count", n, batches.len())?;
    let m = batches[0].feature_count();
    let mut blocks = vec![DMatrix::zeros(m, m); n];
    for b in batches {
        if b.agent >= n {
            return Err(Error::InvalidParameter(format!("agent {} out of range", b.agent)));
        }
        check_len("batch feature count", m, b.feature_count())?;
        blocks[b.agent] = b.h.tr_mul(&b.h);
    }
    Ok(kron_identity(&topology.laplacian::<T>(), m) + block_diag(&blocks))
}
