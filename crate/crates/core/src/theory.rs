//! Closed-form bound constants and numerical certification.
//!
//! Three ingredients of the generalization analysis are computable and
//! therefore testable:
//!
//! * the Lipschitz constant of the variational loss gradient,
//! * the evidence capacity implied by a minimum-uncertainty constraint,
//! * the full generalization-gap expression and its monotonicities.
//!
//! `certify_gradient_bound` stress-tests the implemented gradients against
//! the closed-form Lipschitz constant over random points of the valid
//! domain; a violation means either the formula or the gradient code is
//! wrong.

use crate::dirichlet::{DirichletParams, PriorParams};
use crate::error::{Error, Result};
use crate::loss::{vi_loss_grad, LabelVector, LossConfig};
use crate::rng::SplitMix64;

/// Upper bound on ||grad_alpha loss||_inf over the domain alpha >= lambda:
///
/// 2 + 1/(K+1)^2 + 2/(K(K+1)) + beta * (2 + 1/min_j lambda_j + 1/||lambda||_1)
pub fn lipschitz_constant(k: usize, beta: f64, prior: &PriorParams) -> f64 {
    assert_eq!(k, prior.len(), "class count must match prior length");
    let kf = k as f64;
    let mse_part = 2.0 + 1.0 / ((kf + 1.0) * (kf + 1.0)) + 2.0 / (kf * (kf + 1.0));
    mse_part + beta * (2.0 + 1.0 / prior.min_component() + 1.0 / prior.l1_norm())
}

/// Evidence capacity M = ||lambda||_1 (1/mu_min - 1): the total-evidence
/// ceiling implied by requiring uncertainty >= mu_min.
pub fn evidence_capacity(prior: &PriorParams, mu_min: f64) -> Result<f64> {
    if mu_min.is_nan() || mu_min <= 0.0 || mu_min > 1.0 {
        return Err(Error::Domain(format!(
            "mu_min must lie in (0, 1], got {mu_min} (mu_min = 0 leaves evidence unbounded)"
        )));
    }
    Ok(prior.l1_norm() * (1.0 / mu_min - 1.0))
}

/// Inputs of the generalization-gap expression.
#[derive(Debug, Clone)]
pub struct BoundInputs {
    pub k_classes: usize,
    pub beta: f64,
    pub prior: PriorParams,
    pub mu_min: f64,
    pub radius: f64,
    pub spectral_norms: Vec<f64>,
    pub activation_lipschitz: Vec<f64>,
    pub n_samples: usize,
    pub loss_bound: f64,
    pub confidence: f64,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        if self.mu_min.is_nan() || self.mu_min <= 0.0 || self.mu_min > 1.0 {
            return Err(Error::Domain(format!("mu_min {} outside (0, 1]", self.mu_min)));
        }
        if self.confidence.is_nan() || self.confidence <= 0.0 || self.confidence >= 1.0 {
            return Err(Error::Domain(format!("delta {} outside (0, 1)", self.confidence)));
        }
        if self.n_samples == 0 {
            return Err(Error::Domain("n_samples must be positive".into()));
        }
        if self.k_classes != self.prior.len() {
            return Err(Error::DimensionMismatch("k_classes vs prior length".into()));
        }
        Ok(())
    }
}

/// Closed-form generalization gap (absolute constant of the complexity
/// term fixed to 1, so only comparisons and monotone trends are meaningful):
///
/// (C ||lambda||_1 + beta)(1/mu_min - 1) R sqrt(K) prod(L_sigma) prod(||W||) / sqrt(n)
///   + 3 B sqrt(log(2/delta) / (2n))
///
/// with C = 2 + 1/(K+1)^2 + 2/(K(K+1)) + 2 beta + beta / min_j lambda_j.
pub fn generalization_gap(b: &BoundInputs) -> Result<f64> {
    b.validate()?;
    let kf = b.k_classes as f64;
    let c = 2.0
        + 1.0 / ((kf + 1.0) * (kf + 1.0))
        + 2.0 / (kf * (kf + 1.0))
        + 2.0 * b.beta
        + b.beta / b.prior.min_component();
    let capacity_factor = 1.0 / b.mu_min - 1.0;
    let products: f64 = b.spectral_norms.iter().product::<f64>()
        * b.activation_lipschitz.iter().product::<f64>();
    let n = b.n_samples as f64;
    let complexity =
        (c * b.prior.l1_norm() + b.beta) * capacity_factor * b.radius * kf.sqrt() * products
            / n.sqrt();
    let concentration = 3.0 * b.loss_bound * ((2.0 / b.confidence).ln() / (2.0 * n)).sqrt();
    Ok(complexity + concentration)
}

/// Result of one certification run.
#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub empirical_sup: f64,
    pub bound: f64,
    pub pass: bool,
    pub trials: usize,
}

impl Certification {
    pub fn margin(&self) -> f64 {
        self.bound - self.empirical_sup
    }
}

/// Empirically certify the gradient bound: sample `trials` points
/// (alpha log-uniform in [lambda_i, 1e3] per component, one-hot labels),
/// evaluate ||grad vi_loss||_inf at full annealing, and compare the sup
/// against [`lipschitz_constant`].
pub fn certify_gradient_bound(
    k: usize,
    beta: f64,
    prior: &PriorParams,
    trials: usize,
    seed: u64,
) -> Result<Certification> {
    certify_gradient_bound_perturbed(k, beta, prior, trials, seed, 0.0)
}

/// Certification with an additive gradient perturbation; the nonzero case
/// exists as a negative control (a corrupted gradient must be caught).
pub fn certify_gradient_bound_perturbed(
    k: usize,
    beta: f64,
    prior: &PriorParams,
    trials: usize,
    seed: u64,
    perturbation: f64,
) -> Result<Certification> {
    if trials == 0 {
        return Err(Error::Domain("trials must be >= 1".into()));
    }
    if k != prior.len() {
        return Err(Error::DimensionMismatch(format!(
            "k = {k} but prior has {} components",
            prior.len()
        )));
    }
    let cfg = LossConfig::new(beta, prior.clone(), 1)?;
    let bound = lipschitz_constant(k, beta, prior);
    let mut rng = SplitMix64::new(seed);
    let mut sup = 0.0f64;
    let mut alpha = vec![0.0; k];
    for _ in 0..trials {
        for (a, &l) in alpha.iter_mut().zip(prior.components()) {
            // Log-uniform over [lambda_i, 1e3]: stays inside the domain
            // alpha = e + lambda, e >= 0, where the bound is proven.
            *a = l * (1e3 / l).powf(rng.uniform());
        }
        let d = DirichletParams::new(alpha.clone())?;
        let y = LabelVector::one_hot(rng.below(k), k)?;
        let grad = vi_loss_grad(&d, &y, &cfg, 1.0)?;
        for g in grad {
            sup = sup.max((g + perturbation).abs());
        }
    }
    Ok(Certification { empirical_sup: sup, bound, pass: sup <= bound, trials })
}
