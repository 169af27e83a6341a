//! Training objectives over Dirichlet parameters.
//!
//! * `expected_mse` — closed-form expectation of ||y - p||^2 under
//!   Dir(alpha), split into predictive bias and variance.
//! * `vi_loss` — expected MSE plus the (annealed, beta-weighted) effective
//!   KL to the prior. The KL term penalizes evidence of *every* class,
//!   including the correct one.
//! * `edl_baseline_loss` — the classic objective that masks the
//!   positive-class evidence before the KL penalty, kept for comparison
//!   runs.
//!
//! All gradients here are analytic and finite-difference checked.

use crate::dirichlet::{DirichletParams, PriorParams};
use crate::error::{Error, Result};

/// One-hot class label over K classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    class: usize,
    k: usize,
}

impl LabelVector {
    pub fn one_hot(class: usize, k: usize) -> Result<Self> {
        if class >= k {
            return Err(Error::Invariant(format!(
                "class index {class} out of range for {k} classes"
            )));
        }
        Ok(Self { class, k })
    }

    /// Validate an explicit 0/1 vector: exactly one component must be 1.
    pub fn from_dense(y: &[f64]) -> Result<Self> {
        let mut hot = None;
        for (i, &v) in y.iter().enumerate() {
            if v == 1.0 {
                if hot.is_some() {
                    return Err(Error::Invariant("label has more than one hot component".into()));
                }
                hot = Some(i);
            } else if v != 0.0 {
                return Err(Error::Invariant(format!(
                    "label component {i} = {v} is neither 0 nor 1"
                )));
            }
        }
        match hot {
            Some(class) => Ok(Self { class, k: y.len() }),
            None => Err(Error::Invariant("label has no hot component".into())),
        }
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    #[inline]
    pub fn value(&self, j: usize) -> f64 {
        if j == self.class {
            1.0
        } else {
            0.0
        }
    }
}

/// Hyper-parameters of the variational objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub beta: f64,
    pub prior: PriorParams,
    pub warmup_epochs: usize,
}

impl LossConfig {
    pub fn new(beta: f64, prior: PriorParams, warmup_epochs: usize) -> Result<Self> {
        if beta.is_nan() || beta < 0.0 {
            return Err(Error::Invariant(format!("beta must be >= 0, got {beta}")));
        }
        if warmup_epochs < 1 {
            return Err(Error::Invariant("warmup_epochs must be >= 1".into()));
        }
        Ok(Self { beta, prior, warmup_epochs })
    }
}

/// Expected MSE split into its bias and variance parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedMse {
    pub total: f64,
    pub bias: f64,
    pub variance: f64,
}

/// Closed form of E_{p ~ Dir(alpha)}[ ||y - p||^2 ]:
/// bias = sum (y_k - p_hat_k)^2, variance = sum p_hat_k (1 - p_hat_k) / (S + 1).
pub fn expected_mse(d: &DirichletParams, y: &LabelVector) -> Result<ExpectedMse> {
    check_label(d, y)?;
    let s = d.total();
    let mut bias = 0.0;
    let mut variance = 0.0;
    for (j, &a) in d.components().iter().enumerate() {
        let p = a / s;
        let r = y.value(j) - p;
        bias += r * r;
        variance += p * (1.0 - p) / (s + 1.0);
    }
    Ok(ExpectedMse { total: bias + variance, bias, variance })
}

/// Analytic gradient of `expected_mse().total` with respect to alpha.
pub fn expected_mse_grad(d: &DirichletParams, y: &LabelVector) -> Result<Vec<f64>> {
    check_label(d, y)?;
    let s = d.total();
    let p: Vec<f64> = d.components().iter().map(|a| a / s).collect();
    let sum_p2: f64 = p.iter().map(|v| v * v).sum();
    // sum_j (y_j - p_j) p_j
    let cross: f64 = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| (y.value(j) - pj) * pj)
        .sum();
    let sp1 = s + 1.0;
    let grad = p
        .iter()
        .enumerate()
        .map(|(i, &pi)| {
            // d(bias)/d(alpha_i): dp_j/da_i = (delta_ij - p_j)/S
            let g1 = -(2.0 / s) * ((y.value(i) - pi) - cross);
            // d(variance)/d(alpha_i) with variance = (1 - sum p^2)/(S+1)
            let g2 = -(1.0 - sum_p2) / (sp1 * sp1) - 2.0 * (pi - sum_p2) / (s * sp1);
            g1 + g2
        })
        .collect();
    Ok(grad)
}

/// Variational loss: expected MSE + anneal * beta * effective KL.
pub fn vi_loss(
    d: &DirichletParams,
    y: &LabelVector,
    cfg: &LossConfig,
    anneal: f64,
) -> Result<f64> {
    let mse = expected_mse(d, y)?;
    if anneal == 0.0 || cfg.beta == 0.0 {
        return Ok(mse.total);
    }
    Ok(mse.total + anneal * cfg.beta * d.effective_kl(&cfg.prior)?)
}

/// Gradient of [`vi_loss`] with respect to alpha.
pub fn vi_loss_grad(
    d: &DirichletParams,
    y: &LabelVector,
    cfg: &LossConfig,
    anneal: f64,
) -> Result<Vec<f64>> {
    let mut grad = expected_mse_grad(d, y)?;
    if anneal != 0.0 && cfg.beta != 0.0 {
        let w = anneal * cfg.beta;
        for (g, kg) in grad.iter_mut().zip(d.effective_kl_grad(&cfg.prior)?) {
            *g += w * kg;
        }
    }
    Ok(grad)
}

/// Masked concentration of the baseline objective:
/// alpha_tilde = y + (1 - y) ⊙ alpha.
fn masked_alpha(d: &DirichletParams, y: &LabelVector) -> Result<DirichletParams> {
    DirichletParams::new(
        d.components()
            .iter()
            .enumerate()
            .map(|(j, &a)| if j == y.class() { 1.0 } else { a })
            .collect(),
    )
}

/// Classic evidential loss: expected MSE plus an annealed KL that masks the
/// positive class before comparing against the flat prior Dir(1).
///
/// Kept as a baseline; its KL leaves positive-class evidence unconstrained.
pub fn edl_baseline_loss(d: &DirichletParams, y: &LabelVector, anneal_t: f64) -> Result<f64> {
    let mse = expected_mse(d, y)?;
    let masked = masked_alpha(d, y)?;
    let flat = PriorParams::uniform(d.len());
    Ok(mse.total + anneal_t * masked.kl_divergence(&flat)?)
}

/// Gradient of [`edl_baseline_loss`] with respect to alpha. The mask zeroes
/// the KL gradient of the positive class.
pub fn edl_baseline_grad(
    d: &DirichletParams,
    y: &LabelVector,
    anneal_t: f64,
) -> Result<Vec<f64>> {
    let mut grad = expected_mse_grad(d, y)?;
    if anneal_t != 0.0 {
        let masked = masked_alpha(d, y)?;
        let flat = PriorParams::uniform(d.len());
        let kl_grad = masked.effective_kl_grad(&flat)?;
        for (j, g) in grad.iter_mut().enumerate() {
            if j != y.class() {
                *g += anneal_t * kl_grad[j];
            }
        }
    }
    Ok(grad)
}

fn check_label(d: &DirichletParams, y: &LabelVector) -> Result<()> {
    if d.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "alpha has {} components, label has {}",
            d.len(),
            y.len()
        )));
    }
    Ok(())
}
