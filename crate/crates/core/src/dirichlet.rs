//! Dirichlet distribution over the probability simplex: moments, sampling,
//! the expected-log identity E[log p_k] = psi(alpha_k) - psi(S), and the
//! generalized KL divergence to a Dirichlet prior.
//!
//! All log-gamma arithmetic stays in log space; no Beta-function
//! intermediaries, so large concentration totals do not overflow.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::special::{digamma, lgamma, trigamma};

/// Concentration components are capped so the special-function accuracy
/// guarantees (documented for x <= 1e6) stay in force.
pub const MAX_CONCENTRATION: f64 = 1e6;

/// Concentration vector alpha of a Dirichlet distribution.
///
/// Components satisfy 1 <= alpha_k <= 1e6 and K >= 2. In the evidential
/// setting alpha = evidence + prior, so alpha_k >= lambda_k >= 1 always
/// holds for vectors produced by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::Invariant(format!(
                "Dirichlet needs K >= 2 components, got {}",
                alpha.len()
            )));
        }
        for (k, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || a < 1.0 {
                return Err(Error::Invariant(format!(
                    "alpha[{k}] = {a} violates alpha_k >= 1"
                )));
            }
            if a > MAX_CONCENTRATION {
                return Err(Error::Invariant(format!(
                    "alpha[{k}] = {a} exceeds the cap {MAX_CONCENTRATION}"
                )));
            }
        }
        Ok(Self { alpha })
    }

    /// Flat Dir(1, ..., 1) with K components.
    pub fn flat(k: usize) -> Result<Self> {
        Self::new(vec![1.0; k])
    }

    pub fn components(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Total concentration S = sum of alpha_k.
    pub fn total(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Expected class probabilities p_hat_k = alpha_k / S.
    pub fn mean(&self) -> Vec<f64> {
        let s = self.total();
        self.alpha.iter().map(|a| a / s).collect()
    }

    /// Epistemic uncertainty u = ||lambda||_1 / S.
    ///
    /// Equals 1 exactly when total evidence is zero (alpha = lambda) and
    /// decays toward 0 as evidence accumulates. Errors when S < ||lambda||_1,
    /// which cannot happen for alpha = e + lambda with e >= 0.
    pub fn uncertainty(&self, prior: &PriorParams) -> Result<f64> {
        self.check_dims(prior)?;
        let s = self.total();
        let l1 = prior.l1_norm();
        if s < l1 - 1e-9 {
            return Err(Error::Invariant(format!(
                "total concentration S = {s} below prior mass ||lambda||_1 = {l1}"
            )));
        }
        Ok(l1 / s)
    }

    /// E[log p_k] = psi(alpha_k) - psi(S), componentwise.
    pub fn expected_log(&self) -> Vec<f64> {
        let psi_s = digamma(self.total()).expect("S > 0 by invariant");
        self.alpha
            .iter()
            .map(|&a| digamma(a).expect("alpha > 0 by invariant") - psi_s)
            .collect()
    }

    /// Draw n points on the simplex, deterministically for a given seed.
    ///
    /// Each draw normalizes K independent Gamma(alpha_k, 1) variates.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<Vec<f64>> {
        let mut rng = SplitMix64::new(seed);
        (0..n).map(|_| self.sample_with(&mut rng)).collect()
    }

    /// One simplex draw from an existing generator; lets Monte Carlo loops
    /// stream samples without materializing them all.
    pub fn sample_with(&self, rng: &mut SplitMix64) -> Vec<f64> {
        let mut g: Vec<f64> = self.alpha.iter().map(|&a| rng.gamma(a)).collect();
        let total: f64 = g.iter().sum();
        for v in &mut g {
            *v /= total;
        }
        g
    }

    /// Exact KL divergence D_KL(Dir(alpha) || Dir(lambda)).
    ///
    /// log Γ(S) − Σ log Γ(α_k) + Σ (α_k − λ_k)(ψ(α_k) − ψ(S))
    ///          − log Γ(||λ||₁) + Σ log Γ(λ_k)
    pub fn kl_divergence(&self, prior: &PriorParams) -> Result<f64> {
        self.check_dims(prior)?;
        let l1 = prior.l1_norm();
        let prior_const: f64 = -lgamma(l1)?
            + prior
                .components()
                .iter()
                .map(|&l| lgamma(l).expect("lambda >= 1"))
                .sum::<f64>();
        Ok(self.effective_kl(prior)? + prior_const)
    }

    /// Effective KL objective: the exact KL with the alpha-independent prior
    /// constants dropped. Shares gradients with `kl_divergence`.
    pub fn effective_kl(&self, prior: &PriorParams) -> Result<f64> {
        self.check_dims(prior)?;
        let s = self.total();
        let psi_s = digamma(s)?;
        let mut value = lgamma(s)?;
        for (&a, &l) in self.alpha.iter().zip(prior.components()) {
            value -= lgamma(a)?;
            value += (a - l) * (digamma(a)? - psi_s);
        }
        Ok(value)
    }

    /// Analytic gradient of the effective KL with respect to alpha:
    /// (α_i − λ_i) ψ′(α_i) − (S − ||λ||₁) ψ′(S).
    pub fn effective_kl_grad(&self, prior: &PriorParams) -> Result<Vec<f64>> {
        self.check_dims(prior)?;
        let s = self.total();
        let shared = (s - prior.l1_norm()) * trigamma(s)?;
        self.alpha
            .iter()
            .zip(prior.components())
            .map(|(&a, &l)| Ok((a - l) * trigamma(a)? - shared))
            .collect()
    }

    fn check_dims(&self, prior: &PriorParams) -> Result<()> {
        if self.alpha.len() != prior.len() {
            return Err(Error::DimensionMismatch(format!(
                "alpha has {} components, prior has {}",
                self.alpha.len(),
                prior.len()
            )));
        }
        Ok(())
    }
}

/// Prior concentration vector lambda with lambda_k >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorParams {
    lambda: Vec<f64>,
}

impl PriorParams {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::Invariant("prior must be nonempty".into()));
        }
        for (k, &l) in lambda.iter().enumerate() {
            if !(1.0..=MAX_CONCENTRATION).contains(&l) {
                return Err(Error::Invariant(format!(
                    "lambda[{k}] = {l} violates 1 <= lambda_k <= {MAX_CONCENTRATION}"
                )));
            }
        }
        Ok(Self { lambda })
    }

    /// Uniform prior lambda = 1_K.
    pub fn uniform(k: usize) -> Self {
        Self { lambda: vec![1.0; k] }
    }

    pub fn components(&self) -> &[f64] {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        self.lambda.iter().sum()
    }

    pub fn min_component(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
