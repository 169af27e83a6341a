//! Synthetic datasets and CSV ingestion.
//!
//! Desk-scale stand-ins for the image benchmarks: labeled Gaussian blobs
//! as in-distribution data, a displaced unlabeled blob as the OOD set, and
//! additive Gaussian noise for corruption sweeps. All generators are
//! deterministic per seed.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use std::fmt::Write as _;
use std::path::Path;

/// Feature matrix with optional labels and provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metadata {
    pub name: String,
    pub seed: Option<u64>,
    /// Generator parameters, echoed into reports.
    pub params: String,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Option<Vec<usize>>, metadata: Metadata) -> Result<Self> {
        if let Some(first) = features.first() {
            let d = first.len();
            if features.iter().any(|row| row.len() != d) {
                return Err(Error::Invariant("feature rows have mixed dimensions".into()));
            }
        }
        if let Some(l) = &labels {
            if l.len() != features.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {} rows",
                    l.len(),
                    features.len()
                )));
            }
        }
        Ok(Self { features, labels, metadata })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, |r| r.len())
    }

    /// Number of classes implied by the labels (max label + 1).
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max().map(|&m| m + 1))
    }

    /// Empirical feature radius R = max_i ||x_i||_2.
    pub fn feature_radius(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyInput("feature_radius of empty dataset".into()));
        }
        Ok(self
            .features
            .iter()
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max))
    }
}

/// Labeled Gaussian blobs. Class means sit on a circle of radius
/// `separation` in the first two coordinates; samples add isotropic
/// Gaussian noise of standard deviation `spread`.
pub fn gaussian_blobs(
    k: usize,
    n_per_class: usize,
    d: usize,
    separation: f64,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::Invariant("need k >= 2 classes".into()));
    }
    if d < 2 {
        return Err(Error::Invariant("need d >= 2 dimensions".into()));
    }
    let means = blob_means(k, d, separation);
    let mut rng = SplitMix64::new(seed);
    let mut features = Vec::with_capacity(k * n_per_class);
    let mut labels = Vec::with_capacity(k * n_per_class);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            let row: Vec<f64> = mean.iter().map(|&m| m + spread * rng.normal()).collect();
            features.push(row);
            labels.push(class);
        }
    }
    Dataset::new(
        features,
        Some(labels),
        Metadata {
            name: "blobs".into(),
            seed: Some(seed),
            params: format!("k={k},n={n_per_class},d={d},sep={separation},spread={spread},seed={seed}"),
        },
    )
}

/// Class-mean layout used by [`gaussian_blobs`], exposed for tests.
pub fn blob_means(k: usize, d: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
            let mut m = vec![0.0; d];
            m[0] = separation * theta.cos();
            m[1] = separation * theta.sin();
            m
        })
        .collect()
}

/// Unlabeled cluster at distance `offset` from the origin (the centroid of
/// [`gaussian_blobs`]), along a seed-derived random direction.
pub fn ood_blob(d: usize, n: usize, offset: f64, spread: f64, seed: u64) -> Result<Dataset> {
    if offset.is_nan() || offset <= 0.0 {
        return Err(Error::Invariant(format!("offset must be positive, got {offset}")));
    }
    if d < 1 {
        return Err(Error::Invariant("need d >= 1".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let mut dir: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut dir {
        *v /= norm.max(1e-300);
    }
    let features = (0..n)
        .map(|_| dir.iter().map(|&c| offset * c + spread * rng.normal()).collect())
        .collect();
    Dataset::new(
        features,
        None,
        Metadata {
            name: "ood_blob".into(),
            seed: Some(seed),
            params: format!("d={d},n={n},offset={offset},spread={spread},seed={seed}"),
        },
    )
}

/// Element-wise additive Gaussian noise; labels carry over.
pub fn add_gaussian_noise(data: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::Invariant(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut rng = SplitMix64::new(seed);
    let features = data
        .features
        .iter()
        .map(|row| row.iter().map(|&v| v + sigma * rng.normal()).collect())
        .collect();
    Dataset::new(
        features,
        data.labels.clone(),
        Metadata {
            name: format!("{}+noise", data.metadata.name),
            seed: Some(seed),
            params: format!("{};sigma={sigma},noise_seed={seed}", data.metadata.params),
        },
    )
}

/// Write a dataset as CSV with header `f0,...,f{d-1}[,label]`.
///
/// Values are printed in shortest round-trip form, so save → load
/// reproduces them exactly.
pub fn save_csv(data: &Dataset, path: &Path) -> Result<()> {
    let d = data.dim();
    let mut out = String::new();
    for j in 0..d {
        if j > 0 {
            out.push(',');
        }
        let _ = write!(out, "f{j}");
    }
    if data.labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for (i, row) in data.features.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        if let Some(labels) = &data.labels {
            let _ = write!(out, ",{}", labels[i]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load a dataset saved by [`save_csv`]. The label column is optional;
/// malformed rows report their 1-based line number.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let content = std::fs::read_to_string(path)?;
    let mut lines = content.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, message: "empty file".into() })?;
    let cols: Vec<&str> = header.split(',').collect();
    let has_label = cols.last() == Some(&"label");
    let d = if has_label { cols.len() - 1 } else { cols.len() };
    for (j, name) in cols.iter().take(d).enumerate() {
        if *name != format!("f{j}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected column 'f{j}', found '{name}'"),
            });
        }
    }
    let mut features = Vec::new();
    let mut labels = if has_label { Some(Vec::new()) } else { None };
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        let mut row = Vec::with_capacity(d);
        for f in &fields[..d] {
            row.push(f.parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad feature value '{f}': {e}"),
            })?);
        }
        features.push(row);
        if let Some(l) = labels.as_mut() {
            l.push(fields[d].parse::<usize>().map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad label '{}': {e}", fields[d]),
            })?);
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(features, labels, Metadata { name, seed: None, params: String::new() })
}
