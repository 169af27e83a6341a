//! Cosine prototype evidence layer.
//!
//! Maps a feature vector to per-class evidence through cosine similarity
//! with learnable class prototypes:
//!
//! ```text
//! e_k = softplus(gamma * (cos(x, r_k) - m))
//! ```
//!
//! Because the cosine is bounded, evidence is structurally capped at
//! softplus(gamma * (1 - m)) no matter how large the feature magnitude
//! grows, and the layer is exactly invariant to positive rescaling of the
//! feature.

use crate::dirichlet::{DirichletParams, PriorParams};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::special::{sigmoid, softplus};

/// Norm floor for the cosine denominators.
const NORM_FLOOR: f64 = 1e-12;

/// Margin is kept strictly inside (-1, 1) so the evidence ceiling
/// softplus(gamma * (1 - m)) stays finite and positive.
pub const MARGIN_LIMIT: f64 = 0.99;

/// Per-class evidence produced by the head; components in
/// (0, softplus(gamma * (1 - m))].
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceVector {
    e: Vec<f64>,
}

impl EvidenceVector {
    pub fn components(&self) -> &[f64] {
        &self.e
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.e.iter().sum()
    }

    /// Posterior concentration alpha = e + lambda.
    pub fn to_dirichlet(&self, prior: &PriorParams) -> Result<DirichletParams> {
        if self.e.len() != prior.len() {
            return Err(Error::DimensionMismatch(format!(
                "evidence has {} components, prior has {}",
                self.e.len(),
                prior.len()
            )));
        }
        DirichletParams::new(
            self.e
                .iter()
                .zip(prior.components())
                .map(|(&e, &l)| e + l)
                .collect(),
        )
    }
}

/// Cosine similarity clamped to [-1, 1], with norm denominators floored.
///
/// A zero feature vector yields 0 (orthogonal convention) rather than an
/// error; the head's forward pass flags that case in its tape.
pub fn cosine(feature: &[f64], prototype: &[f64]) -> Result<f64> {
    if feature.len() != prototype.len() {
        return Err(Error::DimensionMismatch(format!(
            "feature dim {} vs prototype dim {}",
            feature.len(),
            prototype.len()
        )));
    }
    let nf = norm(feature);
    if nf < NORM_FLOOR {
        return Ok(0.0);
    }
    let np = norm(prototype).max(NORM_FLOOR);
    let dot: f64 = feature.iter().zip(prototype).map(|(a, b)| a * b).sum();
    Ok((dot / (nf * np)).clamp(-1.0, 1.0))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Intermediate state recorded by [`EvidenceHead::forward`]; sufficient for
/// an exact backward pass.
#[derive(Debug, Clone)]
pub struct HeadTape {
    pub evidence: EvidenceVector,
    feature: Vec<f64>,
    cosines: Vec<f64>,
    /// Set when the feature norm fell below the floor and the orthogonal
    /// convention kicked in.
    pub degenerate_feature: bool,
}

/// Gradients of a scalar loss through the head, already chain-ruled with
/// the upstream d(loss)/d(evidence).
#[derive(Debug, Clone)]
pub struct HeadGradients {
    pub feature: Vec<f64>,
    pub prototypes: Vec<Vec<f64>>,
    pub scale: f64,
    pub margin: f64,
}

/// Learnable class prototypes with scale gamma and margin m.
///
/// gamma is stored as log(gamma) so positivity needs no projection; the
/// margin is clamped to [-0.99, 0.99] by the optimizer after each step.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceHead {
    prototypes: Vec<Vec<f64>>,
    log_scale: f64,
    margin: f64,
}

impl EvidenceHead {
    /// Build a head with explicit parameters. Each prototype must be
    /// nonzero, gamma positive, and |m| <= 0.99.
    pub fn new(prototypes: Vec<Vec<f64>>, scale: f64, margin: f64) -> Result<Self> {
        if prototypes.len() < 2 {
            return Err(Error::Invariant("head needs K >= 2 prototypes".into()));
        }
        let d = prototypes[0].len();
        for (k, r) in prototypes.iter().enumerate() {
            if r.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "prototype {k} has dim {}, expected {d}",
                    r.len()
                )));
            }
            if norm(r) <= 0.0 {
                return Err(Error::Invariant(format!("prototype {k} has zero norm")));
            }
        }
        if scale.is_nan() || scale <= 0.0 {
            return Err(Error::Invariant(format!("scale must be positive, got {scale}")));
        }
        if !(-MARGIN_LIMIT..=MARGIN_LIMIT).contains(&margin) {
            return Err(Error::Invariant(format!(
                "margin {margin} outside [-{MARGIN_LIMIT}, {MARGIN_LIMIT}]"
            )));
        }
        Ok(Self {
            prototypes,
            log_scale: scale.ln(),
            margin,
        })
    }

    /// Rebuild from a stored log-scale without an exp/ln round trip, so
    /// checkpoint loads are bit-exact.
    pub(crate) fn from_log_scale(
        prototypes: Vec<Vec<f64>>,
        log_scale: f64,
        margin: f64,
    ) -> Result<Self> {
        let mut head = Self::new(prototypes, 1.0, margin)?;
        head.log_scale = log_scale;
        Ok(head)
    }

    /// Random initialization: prototypes uniform in [-1/sqrt(d), 1/sqrt(d)],
    /// gamma = 5, m = 0.
    pub fn init(k: usize, d: usize, rng: &mut SplitMix64) -> Result<Self> {
        let bound = 1.0 / (d as f64).sqrt();
        let prototypes = (0..k)
            .map(|_| (0..d).map(|_| rng.uniform_in(-bound, bound)).collect())
            .collect();
        Self::new(prototypes, 5.0, 0.0)
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.prototypes[0].len()
    }

    pub fn prototypes(&self) -> &[Vec<f64>] {
        &self.prototypes
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Structural evidence ceiling, softplus(gamma * (1 - m)).
    pub fn evidence_ceiling(&self) -> f64 {
        softplus(self.scale() * (1.0 - self.margin))
    }

    /// Evidence for a feature vector.
    pub fn evidence(&self, feature: &[f64]) -> Result<EvidenceVector> {
        Ok(self.forward(feature)?.evidence)
    }

    /// Forward pass retaining the tape needed by [`Self::backward`].
    pub fn forward(&self, feature: &[f64]) -> Result<HeadTape> {
        if feature.len() != self.feature_dim() {
            return Err(Error::DimensionMismatch(format!(
                "feature dim {} vs head dim {}",
                feature.len(),
                self.feature_dim()
            )));
        }
        let gamma = self.scale();
        let degenerate = norm(feature) < NORM_FLOOR;
        let cosines: Vec<f64> = self
            .prototypes
            .iter()
            .map(|r| cosine(feature, r))
            .collect::<Result<_>>()?;
        let e = cosines
            .iter()
            .map(|&c| softplus(gamma * (c - self.margin)))
            .collect();
        Ok(HeadTape {
            evidence: EvidenceVector { e },
            feature: feature.to_vec(),
            cosines,
            degenerate_feature: degenerate,
        })
    }

    /// Exact analytic gradients of the evidence with respect to the feature
    /// and all head parameters, contracted with `grad_evidence`.
    ///
    /// `scale` is the gradient with respect to gamma itself (not its log).
    pub fn backward(&self, tape: &HeadTape, grad_evidence: &[f64]) -> Result<HeadGradients> {
        let k = self.num_classes();
        let d = self.feature_dim();
        if grad_evidence.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "grad_evidence has {} components, head has {k} classes",
                grad_evidence.len()
            )));
        }
        let gamma = self.scale();
        let x = &tape.feature;
        let nx = norm(x).max(NORM_FLOOR);

        let mut grad_feature = vec![0.0; d];
        let mut grad_protos = vec![vec![0.0; d]; k];
        let mut grad_scale = 0.0;
        let mut grad_margin = 0.0;

        for (idx, r) in self.prototypes.iter().enumerate() {
            let c = tape.cosines[idx];
            let z = gamma * (c - self.margin);
            let s = sigmoid(z) * grad_evidence[idx];
            grad_scale += s * (c - self.margin);
            grad_margin -= s * gamma;
            let dc = s * gamma;
            let nr = norm(r).max(NORM_FLOOR);
            if tape.degenerate_feature {
                // Cosine pinned at 0 by convention; no well-defined
                // direction to differentiate along.
                continue;
            }
            for j in 0..d {
                grad_feature[j] += dc * (r[j] / (nx * nr) - c * x[j] / (nx * nx));
                grad_protos[idx][j] = dc * (x[j] / (nx * nr) - c * r[j] / (nr * nr));
            }
        }
        Ok(HeadGradients {
            feature: grad_feature,
            prototypes: grad_protos,
            scale: grad_scale,
            margin: grad_margin,
        })
    }

    /// Raw mutable access for the optimizer. Callers must re-clamp the
    /// margin afterwards; see [`Self::clamp_margin`].
    pub(crate) fn params_mut(&mut self) -> (&mut Vec<Vec<f64>>, &mut f64, &mut f64) {
        (&mut self.prototypes, &mut self.log_scale, &mut self.margin)
    }

    pub(crate) fn clamp_margin(&mut self) {
        self.margin = self.margin.clamp(-MARGIN_LIMIT, MARGIN_LIMIT);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_head() -> EvidenceHead {
        EvidenceHead::new(
            vec![vec![1.0, 0.0, 0.5], vec![0.0, 1.0, -0.3], vec![-1.0, 0.2, 0.0]],
            10.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn cosine_basic_geometry() {
        let r = vec![0.4, -1.2, 3.0];
        assert!((cosine(&r, &r).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        assert!((cosine(&neg, &r).unwrap() + 1.0).abs() < 1e-12);
        assert!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap().abs() < 1e-15);
        // Zero feature: orthogonal convention.
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn evidence_at_prototype_hits_ceiling() {
        let head = test_head();
        for (k, r) in head.prototypes().to_vec().iter().enumerate() {
            let scaled: Vec<f64> = r.iter().map(|v| v * 3.7).collect();
            let e = head.evidence(&scaled).unwrap();
            assert!(
                (e.components()[k] - head.evidence_ceiling()).abs() < 1e-9,
                "class {k}"
            );
        }
    }

    #[test]
    fn evidence_orthogonal_feature() {
        // gamma=10, m=0, feature orthogonal to every prototype: e_k = log 2.
        let head =
            EvidenceHead::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], 10.0, 0.0).unwrap();
        let e = head.evidence(&[0.0, 0.0, 2.0]).unwrap();
        for &v in e.components() {
            assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn evidence_antipodal_with_margin() {
        // gamma=10, m=0.5, cos=-1: e = softplus(-15).
        let head =
            EvidenceHead::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 10.0, 0.5).unwrap();
        let e = head.evidence(&[-1.0, 0.0]).unwrap();
        let want = softplus(-15.0);
        assert!((e.components()[0] - want).abs() < 1e-18);
        assert!((want - 3.059e-7).abs() < 1e-9);
    }

    #[test]
    fn scale_invariance() {
        let head = test_head();
        let mut rng = SplitMix64::new(31);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let base = head.evidence(&x).unwrap();
            for &c in &[1e-3, 0.37, 1.0, 42.0, 1e3] {
                let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
                let e = head.evidence(&scaled).unwrap();
                for (a, b) in e.components().iter().zip(base.components()) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn evidence_bounded_and_positive() {
        let head = test_head();
        let ceiling = head.evidence_ceiling();
        let mut rng = SplitMix64::new(32);
        for _ in 0..100_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.normal() * 10.0).collect();
            for &e in head.evidence(&x).unwrap().components() {
                assert!(e > 0.0);
                assert!(e <= ceiling + 1e-9);
            }
        }
    }

    #[test]
    fn evidence_monotone_in_cosine() {
        // Sweep the angle to a single prototype; evidence must strictly rise
        // with the cosine.
        let head = EvidenceHead::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 5.0, 0.2).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=180 {
            let theta = std::f64::consts::PI * (1.0 - i as f64 / 180.0);
            let x = vec![theta.cos(), theta.sin()];
            let e0 = head.evidence(&x).unwrap().components()[0];
            assert!(e0 > prev, "not strictly increasing at step {i}");
            prev = e0;
        }
    }

    #[test]
    fn to_dirichlet_adds_prior() {
        let e = EvidenceVector { e: vec![4.0, 0.0, 0.0] };
        let d = e.to_dirichlet(&PriorParams::uniform(3)).unwrap();
        assert_eq!(d.components(), &[5.0, 1.0, 1.0]);
        let mismatched = PriorParams::uniform(4);
        assert!(e.to_dirichlet(&mismatched).is_err());
    }

    #[test]
    fn backward_zero_upstream_gives_zero() {
        let head = test_head();
        let tape = head.forward(&[0.3, -0.7, 1.1]).unwrap();
        let g = head.backward(&tape, &[0.0, 0.0, 0.0]).unwrap();
        assert!(g.feature.iter().all(|&v| v == 0.0));
        assert!(g.prototypes.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(g.scale, 0.0);
        assert_eq!(g.margin, 0.0);
    }

    // Finite-difference oracle: flatten (feature, prototypes, gamma, margin)
    // into one parameter vector, differentiate the contraction <grad_e, e>
    // numerically, and compare the whole gradient vector at once.
    fn fd_check(head: &EvidenceHead, x: &[f64], grad_e: &[f64]) {
        use crate::gradcheck::{central_diff, max_rel_error};
        let d = head.feature_dim();
        let k = head.num_classes();
        let tape = head.forward(x).unwrap();
        let g = head.backward(&tape, grad_e).unwrap();
        let mut analytic = g.feature.clone();
        analytic.extend(g.prototypes.iter().flatten());
        analytic.push(g.scale);
        analytic.push(g.margin);

        let mut theta: Vec<f64> = x.to_vec();
        theta.extend(head.prototypes().iter().flatten());
        theta.push(head.scale());
        theta.push(head.margin());
        let eval = |t: &[f64]| -> f64 {
            let feature = &t[..d];
            let protos: Vec<Vec<f64>> =
                (0..k).map(|i| t[d + i * d..d + (i + 1) * d].to_vec()).collect();
            let hd = EvidenceHead::new(protos, t[d + k * d], t[d + k * d + 1]).unwrap();
            hd.evidence(feature)
                .unwrap()
                .components()
                .iter()
                .zip(grad_e)
                .map(|(e, w)| e * w)
                .sum()
        };
        let fd = central_diff(eval, &theta, 1e-5);
        let rel = max_rel_error(&analytic, &fd);
        assert!(rel < 1e-5, "rel {rel:e}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SplitMix64::new(33);
        for _ in 0..100 {
            let k = 2 + rng.below(3);
            let d = 2 + rng.below(4);
            let protos: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..d).map(|_| rng.normal()).collect())
                .collect();
            let head = EvidenceHead::new(protos, 0.5 + rng.uniform() * 8.0, rng.uniform() - 0.5)
                .unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.normal() + 0.3).collect();
            let grad_e: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
            fd_check(&head, &x, &grad_e);
        }
    }

    #[test]
    fn scale_gradient_invariant_to_feature_magnitude() {
        let head = test_head();
        let x = vec![0.4, -1.0, 0.9];
        let grad_e = vec![1.0, -0.5, 0.25];
        let g1 = head
            .backward(&head.forward(&x).unwrap(), &grad_e)
            .unwrap();
        for &c in &[1e-2, 7.0, 1e3] {
            let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
            let g2 = head.backward(&head.forward(&xs).unwrap(), &grad_e).unwrap();
            assert!((g1.scale - g2.scale).abs() < 1e-10);
            assert!((g1.margin - g2.margin).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_feature_is_flagged_not_fatal() {
        let head = test_head();
        let tape = head.forward(&[0.0, 0.0, 0.0]).unwrap();
        assert!(tape.degenerate_feature);
        // cos = 0 everywhere, so e_k = softplus(0) = log 2.
        for &e in tape.evidence.components() {
            assert!((e - std::f64::consts::LN_2).abs() < 1e-12);
        }
        let g = head.backward(&tape, &[1.0, 1.0, 1.0]).unwrap();
        assert!(g.feature.iter().all(|&v| v == 0.0));
    }
}
