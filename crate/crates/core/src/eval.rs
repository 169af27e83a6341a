//! Prediction and detection metrics.
//!
//! The detection score is the epistemic uncertainty u = ||lambda||_1 / S
//! (higher means more out-of-distribution). AUROC follows the
//! Mann-Whitney convention with ties counted as one half; FPR95 picks the
//! largest observed OOD-score threshold still reaching 95% true-positive
//! rate, with no interpolation, so both are brute-force verifiable.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::train::TrainState;
use std::fmt::Write as _;

/// Single-sample prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probabilities: Vec<f64>,
    pub uncertainty: f64,
    /// Raw per-class evidence, before the prior is added.
    pub evidence: Vec<f64>,
}

/// Predicted class (argmax of p-hat, ties to the lowest index), expected
/// probabilities, and epistemic uncertainty.
pub fn predict(state: &TrainState, x: &[f64]) -> Result<Prediction> {
    let (feature, _) = state.net.forward(x)?;
    let evidence = state.head.evidence(&feature)?;
    let alpha = evidence.to_dirichlet(&state.prior)?;
    let probabilities = alpha.mean();
    let uncertainty = alpha.uncertainty(&state.prior)?;
    let mut label = 0;
    for (j, &p) in probabilities.iter().enumerate() {
        if p > probabilities[label] {
            label = j;
        }
    }
    Ok(Prediction {
        label,
        probabilities,
        uncertainty,
        evidence: evidence.components().to_vec(),
    })
}

/// Uncertainty scores for every row of a dataset.
pub fn uncertainty_scores(state: &TrainState, data: &Dataset) -> Result<Vec<f64>> {
    data.features.iter().map(|x| Ok(predict(state, x)?.uncertainty)).collect()
}

fn check_scores(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyInput(format!("{name} score set is empty")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Invariant(format!("{name} scores contain non-finite values")));
    }
    Ok(())
}

/// Mann-Whitney AUROC: P(ood > id) + 0.5 P(ood = id).
///
/// Computed by rank summation with average ranks for ties; numerically
/// identical to exhaustive pair counting.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores("id", id_scores)?;
    check_scores("ood", ood_scores)?;
    let n = id_scores.len();
    let m = ood_scores.len();
    // (score, is_ood)
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let mut rank_sum_ood = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // 1-based average rank of the tie run [i, j).
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_ood += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_ood - (m * (m + 1)) as f64 / 2.0;
    Ok(u / (n as f64 * m as f64))
}

/// False-positive rate at 95% true-positive rate.
///
/// The threshold is the largest observed OOD score tau with
/// #{ood >= tau} / m >= 0.95; the result is #{id >= tau} / n.
pub fn fpr_at_95_tpr(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores("id", id_scores)?;
    check_scores("ood", ood_scores)?;
    let m = ood_scores.len();
    let mut sorted_ood = ood_scores.to_vec();
    // Descending: taking the c-th largest as threshold captures >= c scores.
    sorted_ood.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    // Smallest count whose TPR clears 0.95, with the same predicate a
    // threshold sweep would use.
    let need = (1..=m)
        .find(|&c| c as f64 / m as f64 >= 0.95)
        .unwrap_or(m);
    let tau = sorted_ood[need - 1];
    let fp = id_scores.iter().filter(|&&s| s >= tau).count();
    Ok(fp as f64 / id_scores.len() as f64)
}

/// Detection metrics of one ID-vs-OOD comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub id_accuracy: f64,
    pub auroc: f64,
    pub fpr95: f64,
    pub mean_unc_id: f64,
    pub mean_unc_ood: f64,
    pub unc_diff: f64,
    pub id_name: String,
    pub ood_name: String,
}

/// Score both datasets, classify the ID set, and fill the report.
pub fn evaluate(state: &TrainState, id_data: &Dataset, ood_data: &Dataset) -> Result<EvalReport> {
    let labels = id_data
        .labels
        .as_ref()
        .ok_or_else(|| Error::Invariant("ID dataset must carry labels".into()))?;
    let mut correct = 0usize;
    let mut id_scores = Vec::with_capacity(id_data.len());
    for (x, &y) in id_data.features.iter().zip(labels) {
        let p = predict(state, x)?;
        if p.label == y {
            correct += 1;
        }
        id_scores.push(p.uncertainty);
    }
    let ood_scores = uncertainty_scores(state, ood_data)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_unc_id = mean(&id_scores);
    let mean_unc_ood = mean(&ood_scores);
    Ok(EvalReport {
        id_accuracy: correct as f64 / id_data.len() as f64,
        auroc: auroc(&id_scores, &ood_scores)?,
        fpr95: fpr_at_95_tpr(&id_scores, &ood_scores)?,
        mean_unc_id,
        mean_unc_ood,
        unc_diff: mean_unc_ood - mean_unc_id,
        id_name: id_data.metadata.name.clone(),
        ood_name: ood_data.metadata.name.clone(),
    })
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        format!(
            "id_accuracy,auroc,fpr95,mean_unc_id,mean_unc_ood,unc_diff\n{},{},{},{},{},{}\n",
            self.id_accuracy, self.auroc, self.fpr95, self.mean_unc_id, self.mean_unc_ood,
            self.unc_diff
        )
    }

    /// Aligned text table: ID ACC | AUROC per OOD set | FPR95 per OOD set.
    pub fn to_table(&self) -> String {
        render_table(&self.id_name, self.id_accuracy, &[(self.ood_name.clone(), self.auroc, self.fpr95)])
    }
}

/// Project a prediction onto the 2-simplex spanned by its top-3 evidence
/// classes: returns the class indices (evidence-descending, ties to the
/// lower index) and their renormalized expected probabilities.
pub fn simplex_projection(
    evidence: &[f64],
    probabilities: &[f64],
) -> Result<([usize; 3], [f64; 3])> {
    let k = evidence.len();
    if k < 3 || probabilities.len() != k {
        return Err(Error::Invariant(format!(
            "simplex projection needs K >= 3 matching vectors, got {k} and {}",
            probabilities.len()
        )));
    }
    let mut order: Vec<usize> = (0..k).collect();
    // Stable sort keeps ascending index order within evidence ties.
    order.sort_by(|&a, &b| evidence[b].partial_cmp(&evidence[a]).expect("finite evidence"));
    let top = [order[0], order[1], order[2]];
    let mass: f64 = top.iter().map(|&j| probabilities[j]).sum();
    let bary = [
        probabilities[top[0]] / mass,
        probabilities[top[1]] / mass,
        probabilities[top[2]] / mass,
    ];
    Ok((top, bary))
}

/// Render the detection table for one ID set against any number of OOD sets.
pub fn render_table(id_name: &str, id_accuracy: f64, ood_rows: &[(String, f64, f64)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ID set: {id_name}");
    let _ = writeln!(
        out,
        "{:<20} {:>10} {:>10} {:>10}",
        "OOD set", "ID ACC", "AUROC", "FPR95"
    );
    for (name, auroc, fpr) in ood_rows {
        let _ = writeln!(
            out,
            "{:<20} {:>10.4} {:>10.4} {:>10.4}",
            name, id_accuracy, auroc, fpr
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    // Exhaustive pair-counting oracle for AUROC.
    pub(crate) fn auroc_brute_force(id: &[f64], ood: &[f64]) -> f64 {
        let mut score = 0.0;
        for &o in ood {
            for &i in id {
                if o > i {
                    score += 1.0;
                } else if o == i {
                    score += 0.5;
                }
            }
        }
        score / (id.len() * ood.len()) as f64
    }

    // Threshold-sweep oracle for FPR95.
    pub(crate) fn fpr95_brute_force(id: &[f64], ood: &[f64]) -> f64 {
        let m = ood.len() as f64;
        let mut best_tau = f64::NEG_INFINITY;
        for &tau in ood {
            let tpr = ood.iter().filter(|&&s| s >= tau).count() as f64 / m;
            if tpr >= 0.95 && tau > best_tau {
                best_tau = tau;
            }
        }
        id.iter().filter(|&&s| s >= best_tau).count() as f64 / id.len() as f64
    }

    #[test]
    fn auroc_trivial_cases() {
        assert_eq!(auroc(&[0.1, 0.2], &[0.8, 0.9]).unwrap(), 1.0);
        let same = [0.3, 0.5, 0.7];
        assert_eq!(auroc(&same, &same).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.6], &[0.4, 0.9]).unwrap(), 0.75);
        assert!(auroc(&[], &[0.5]).is_err());
        assert!(auroc(&[0.5], &[]).is_err());
    }

    #[test]
    fn auroc_equals_pair_counting() {
        let mut rng = SplitMix64::new(91);
        for _ in 0..500 {
            let n = 1 + rng.below(200);
            let m = 1 + rng.below(200);
            // Quantize some scores so ties actually occur.
            let id: Vec<f64> = (0..n).map(|_| (rng.uniform() * 20.0).round() / 20.0).collect();
            let ood: Vec<f64> = (0..m)
                .map(|_| ((rng.uniform() + 0.2) * 20.0).round() / 20.0)
                .collect();
            let fast = auroc(&id, &ood).unwrap();
            let brute = auroc_brute_force(&id, &ood);
            assert_eq!(fast, brute, "n={n} m={m}");
        }
    }

    #[test]
    fn auroc_complement_symmetry() {
        let mut rng = SplitMix64::new(92);
        for _ in 0..200 {
            let id: Vec<f64> = (0..50).map(|_| rng.uniform()).collect();
            let ood: Vec<f64> = (0..70).map(|_| rng.uniform()).collect();
            let a = auroc(&id, &ood).unwrap();
            let b = auroc(&ood, &id).unwrap();
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fpr95_trivial_cases() {
        // Perfect separation.
        assert_eq!(fpr_at_95_tpr(&[0.1, 0.2, 0.3], &[0.8, 0.9, 0.95]).unwrap(), 0.0);
        // Identical score sets: FPR within one rank step of 0.95.
        let same: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
        let fpr = fpr_at_95_tpr(&same, &same).unwrap();
        assert!((fpr - 0.95).abs() <= 1.0 / 20.0 + 1e-12, "fpr {fpr}");
        assert!(fpr_at_95_tpr(&[], &[0.5]).is_err());
    }

    #[test]
    fn fpr95_equals_threshold_sweep() {
        let mut rng = SplitMix64::new(93);
        for _ in 0..500 {
            let n = 1 + rng.below(200);
            let m = 1 + rng.below(200);
            let id: Vec<f64> = (0..n).map(|_| (rng.uniform() * 25.0).round() / 25.0).collect();
            let ood: Vec<f64> = (0..m)
                .map(|_| ((rng.uniform() + 0.1) * 25.0).round() / 25.0)
                .collect();
            let fast = fpr_at_95_tpr(&id, &ood).unwrap();
            let brute = fpr95_brute_force(&id, &ood);
            assert_eq!(fast, brute, "n={n} m={m}");
        }
    }

    #[test]
    fn fpr95_nonincreasing_when_ood_shifts_up() {
        let mut rng = SplitMix64::new(94);
        for _ in 0..100 {
            let id: Vec<f64> = (0..80).map(|_| rng.uniform()).collect();
            let ood: Vec<f64> = (0..60).map(|_| rng.uniform()).collect();
            let base = fpr_at_95_tpr(&id, &ood).unwrap();
            let shifted: Vec<f64> = ood.iter().map(|s| s + 0.25).collect();
            let after = fpr_at_95_tpr(&id, &shifted).unwrap();
            assert!(after <= base + 1e-12);
        }
    }

    #[test]
    fn predict_argmax_and_ties() {
        use crate::dirichlet::{DirichletParams, PriorParams};
        // Argmax of p-hat equals argmax of alpha at fixed prior; ties break low.
        let d = DirichletParams::new(vec![5.0, 1.0, 1.0]).unwrap();
        let u = d.uncertainty(&PriorParams::uniform(3)).unwrap();
        assert!((u - 3.0 / 7.0).abs() < 1e-15);
        let m = d.mean();
        let argmax = m
            .iter()
            .enumerate()
            .fold(0, |best, (j, &p)| if p > m[best] { j } else { best });
        assert_eq!(argmax, 0);
        let tie = DirichletParams::new(vec![2.0, 2.0]).unwrap().mean();
        let t = tie
            .iter()
            .enumerate()
            .fold(0, |best, (j, &p)| if p > tie[best] { j } else { best });
        assert_eq!(t, 0);
    }

    #[test]
    fn argmax_of_probabilities_matches_argmax_of_alpha() {
        use crate::dirichlet::DirichletParams;
        let mut rng = SplitMix64::new(95);
        for _ in 0..1000 {
            let k = 2 + rng.below(8);
            let a: Vec<f64> = (0..k).map(|_| 1.0 + rng.uniform() * 30.0).collect();
            let d = DirichletParams::new(a.clone()).unwrap();
            let p = d.mean();
            let am_alpha = (0..k).fold(0, |b, j| if a[j] > a[b] { j } else { b });
            let am_p = (0..k).fold(0, |b, j| if p[j] > p[b] { j } else { b });
            assert_eq!(am_alpha, am_p);
        }
    }

    #[test]
    fn predict_orthogonal_feature_uncertainty() {
        use crate::head::EvidenceHead;
        use crate::nn::{Layer, Matrix, Mlp};
        use crate::train::{Optimizer, OptimizerKind, TrainState};
        // Identity backbone, prototypes along e1..e3, input along e4:
        // every cosine is 0, so e_k = softplus(0) = log 2 and
        // u = K / (K (1 + log 2)) = 1 / (1 + log 2).
        let d = 4;
        let mut eye = Matrix::zeros(d, d);
        for i in 0..d {
            eye.set(i, i, 1.0);
        }
        let net = Mlp::from_layers(vec![Layer {
            weight: eye,
            bias: vec![0.0; d],
            activation: crate::nn::Activation::Identity,
        }])
        .unwrap();
        let mut protos = vec![vec![0.0; d]; 3];
        for (k, p) in protos.iter_mut().enumerate() {
            p[k] = 1.0;
        }
        let head = EvidenceHead::new(protos, 5.0, 0.0).unwrap();
        let prior = crate::dirichlet::PriorParams::uniform(3);
        let state = TrainState {
            net,
            head,
            prior,
            optimizer: Optimizer {
                kind: OptimizerKind::Sgd,
                learning_rate: 0.0,
                adam: None,
            },
            epoch: 0,
            log: Vec::new(),
        };
        let p = predict(&state, &[0.0, 0.0, 0.0, 2.5]).unwrap();
        let want = 1.0 / (1.0 + std::f64::consts::LN_2);
        assert!((p.uncertainty - want).abs() < 1e-12, "{} vs {want}", p.uncertainty);
        assert!((want - 0.5906).abs() < 1e-4);
        assert_eq!(p.label, 0, "uniform probabilities tie-break to class 0");
    }

    #[test]
    fn simplex_projection_renormalizes_top3() {
        // alpha = (5,1,1): evidence (4,0,0), p-hat (5/7, 1/7, 1/7);
        // renormalized top-3 barycentric coordinates are unchanged.
        let (top, bary) = simplex_projection(&[4.0, 0.0, 0.0], &[5.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0])
            .unwrap();
        assert_eq!(top, [0, 1, 2]);
        assert!((bary[0] - 5.0 / 7.0).abs() < 1e-15);
        assert!((bary[1] - 1.0 / 7.0).abs() < 1e-15);

        // Uniform alpha: (1/3, 1/3, 1/3).
        let (top, bary) =
            simplex_projection(&[0.5, 0.5, 0.5, 0.5], &[0.25, 0.25, 0.25, 0.25]).unwrap();
        assert_eq!(top, [0, 1, 2], "ties pick the lowest indices");
        for b in bary {
            assert!((b - 1.0 / 3.0).abs() < 1e-15);
        }

        // K = 5 with a distinct top-3.
        let e = [0.1, 3.0, 0.2, 2.0, 1.0];
        let p = [0.05, 0.45, 0.1, 0.25, 0.15];
        let (top, bary) = simplex_projection(&e, &p).unwrap();
        assert_eq!(top, [1, 3, 4]);
        let mass = 0.45 + 0.25 + 0.15;
        assert!((bary[0] - 0.45 / mass).abs() < 1e-15);
        assert!((bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        assert!(simplex_projection(&[1.0, 2.0], &[0.4, 0.6]).is_err());
    }

    #[test]
    fn report_rendering() {
        let report = EvalReport {
            id_accuracy: 0.99,
            auroc: 0.97,
            fpr95: 0.05,
            mean_unc_id: 0.3,
            mean_unc_ood: 0.8,
            unc_diff: 0.5,
            id_name: "blobs".into(),
            ood_name: "ood_blob".into(),
        };
        let csv = report.to_csv();
        assert!(csv.starts_with("id_accuracy,auroc,fpr95"));
        assert!(csv.lines().count() == 2);
        let table = report.to_table();
        assert!(table.contains("ID ACC"));
        assert!(table.contains("ood_blob"));
    }
}
