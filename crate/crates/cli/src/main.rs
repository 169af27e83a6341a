//! Command-line surface: train, evaluate, OOD/noise detection sweeps,
//! bound verification, dataset generation, and simplex plot data.
//!
//! Exit codes: 0 success, 2 usage/config errors, 3 numerical failure
//! during training, 4 certification failure.

mod synthetic;

use clap::{Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use viedl_core::data::{add_gaussian_noise, load_csv, save_csv, Dataset};
use viedl_core::dirichlet::PriorParams;
use viedl_core::error::Error;
use viedl_core::eval::{
    auroc, evaluate, fpr_at_95_tpr, predict, simplex_projection, uncertainty_scores,
};
use viedl_core::theory::certify_gradient_bound_perturbed;
use viedl_core::train::{epoch_log_csv, fit, FileConfig};

#[derive(Parser)]
#[command(name = "viedl", version, about = "Evidential classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on labeled data and write a checkpoint.
    Train {
        /// Flat key=value config file.
        #[arg(long)]
        config: PathBuf,
        /// Labeled CSV training data (f0,...,label).
        #[arg(long, conflicts_with = "synthetic")]
        data: Option<PathBuf>,
        /// Synthetic data spec, e.g. blobs:k=3,n=500,d=2,sep=6,spread=1,seed=7
        #[arg(long)]
        synthetic: Option<String>,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch CSV log path (default: <out>.log.csv).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate in-distribution accuracy and mean uncertainty.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// OOD detection report: ID accuracy, AUROC, FPR95, uncertainty gap.
    Ood {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled in-distribution CSV.
        #[arg(long)]
        id: PathBuf,
        /// OOD CSV (labels optional, ignored).
        #[arg(long)]
        ood: PathBuf,
        /// Report base path: CSV written here, aligned table to <out>.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Clean-vs-noisy detection sweep over a sigma grid.
    Noise {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled or unlabeled CSV to perturb.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated noise levels, e.g. 0.05,0.10,0.20
        #[arg(long)]
        sigmas: String,
        #[arg(long)]
        out: PathBuf,
        /// Noise RNG seed.
        #[arg(long, default_value_t = 99)]
        seed: u64,
    },
    /// Certify the loss-gradient bound over a (K, beta) grid.
    Verify {
        /// "default" or a CSV grid file with lines k,beta[,lambda].
        #[arg(long, default_value = "default")]
        grid: String,
        /// Random points per grid cell.
        #[arg(long, default_value_t = 200_000)]
        trials: usize,
        #[arg(long, default_value_t = 0xAC04)]
        seed: u64,
        /// Test hook: additive gradient corruption (must trigger exit 4).
        #[arg(long, default_value_t = 0.0, hide = true)]
        corrupt_gradient: f64,
    },
    /// Generate a synthetic dataset CSV.
    GenData {
        /// blobs:k=3,n=500,d=2,sep=6,spread=1,seed=7 or
        /// ood:d=2,n=500,offset=20,spread=1,seed=12
        #[arg(long)]
        synthetic: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit per-sample top-3 evidence barycentric coordinates.
    PlotSimplex {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CERTIFICATION: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonFiniteLoss { .. } => ExitCode::from(EXIT_NUMERICAL),
                _ => ExitCode::from(EXIT_USAGE),
            }
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Train { config, data, synthetic, out, log } => {
            cmd_train(&config, data.as_deref(), synthetic.as_deref(), &out, log.as_deref())
        }
        Command::Eval { checkpoint, data, out } => cmd_eval(&checkpoint, &data, &out),
        Command::Ood { checkpoint, id, ood, out } => cmd_ood(&checkpoint, &id, &ood, &out),
        Command::Noise { checkpoint, data, sigmas, out, seed } => {
            cmd_noise(&checkpoint, &data, &sigmas, &out, seed)
        }
        Command::Verify { grid, trials, seed, corrupt_gradient } => {
            cmd_verify(&grid, trials, seed, corrupt_gradient)
        }
        Command::GenData { synthetic, out } => {
            let ds = synthetic::parse(&synthetic)?;
            save_csv(&ds, &out)?;
            println!("wrote {} rows to {}", ds.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::PlotSimplex { checkpoint, data, out } => {
            cmd_plot_simplex(&checkpoint, &data, &out)
        }
    }
}

fn load_labeled(path: &Path) -> Result<Dataset, Error> {
    let ds = load_csv(path)?;
    if ds.labels.is_none() {
        return Err(Error::Config(format!(
            "{} has no label column; labeled data required",
            path.display()
        )));
    }
    Ok(ds)
}

fn cmd_train(
    config: &Path,
    data: Option<&Path>,
    synthetic: Option<&str>,
    out: &Path,
    log: Option<&Path>,
) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))?;
    let file_cfg = FileConfig::parse(&text)?;
    let dataset = match (data, synthetic) {
        (Some(path), None) => load_labeled(path)?,
        (None, Some(spec)) => synthetic::parse(spec)?,
        _ => {
            return Err(Error::Config(
                "exactly one of --data and --synthetic is required".into(),
            ))
        }
    };
    let k = dataset
        .num_classes()
        .ok_or_else(|| Error::Config("training data must carry labels".into()))?;
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 classes, found {k}")));
    }
    let cfg = file_cfg.into_train_config(k)?;
    let state = fit(&dataset, &cfg)?;
    viedl_core::checkpoint::save(&state, out)?;
    let log_path = match log {
        Some(p) => p.to_path_buf(),
        None => {
            let mut s = out.as_os_str().to_owned();
            s.push(".log.csv");
            PathBuf::from(s)
        }
    };
    std::fs::write(&log_path, epoch_log_csv(&state.log))?;
    let last = state.log.last().expect("at least one epoch");
    println!(
        "trained {} epochs on {} samples (final loss {:.6}); checkpoint {}, log {}",
        state.epoch,
        dataset.len(),
        last.loss,
        out.display(),
        log_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(checkpoint: &Path, data: &Path, out: &Path) -> Result<ExitCode, Error> {
    let state = viedl_core::checkpoint::load(checkpoint)?;
    let ds = load_labeled(data)?;
    let labels = ds.labels.as_ref().expect("checked above");
    let mut correct = 0usize;
    let mut unc_sum = 0.0;
    for (x, &y) in ds.features.iter().zip(labels) {
        let p = predict(&state, x)?;
        if p.label == y {
            correct += 1;
        }
        unc_sum += p.uncertainty;
    }
    let accuracy = correct as f64 / ds.len() as f64;
    let mean_unc = unc_sum / ds.len() as f64;
    std::fs::write(
        out,
        format!("id_accuracy,mean_uncertainty\n{accuracy},{mean_unc}\n"),
    )?;
    println!("id_accuracy {accuracy:.4}  mean_uncertainty {mean_unc:.4}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_ood(checkpoint: &Path, id: &Path, ood: &Path, out: &Path) -> Result<ExitCode, Error> {
    let state = viedl_core::checkpoint::load(checkpoint)?;
    let id_data = load_labeled(id)?;
    let ood_data = load_csv(ood)?;
    if ood_data.dim() != id_data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "ID data has dim {}, OOD data has dim {}",
            id_data.dim(),
            ood_data.dim()
        )));
    }
    let report = evaluate(&state, &id_data, &ood_data)?;
    std::fs::write(out, report.to_csv())?;
    let table = report.to_table();
    let table_path = out.with_extension("txt");
    std::fs::write(&table_path, &table)?;
    print!("{table}");
    println!("report: {} and {}", out.display(), table_path.display());
    Ok(ExitCode::SUCCESS)
}

fn parse_sigmas(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|part| {
            let v: f64 = part
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("bad sigma '{part}': {e}")))?;
            if v.is_nan() || v < 0.0 {
                return Err(Error::Config(format!("sigma must be >= 0, got {v}")));
            }
            Ok(v)
        })
        .collect()
}

fn cmd_noise(
    checkpoint: &Path,
    data: &Path,
    sigmas: &str,
    out: &Path,
    seed: u64,
) -> Result<ExitCode, Error> {
    let sigmas = parse_sigmas(sigmas)?;
    if sigmas.is_empty() {
        return Err(Error::Config("empty sigma list".into()));
    }
    let state = viedl_core::checkpoint::load(checkpoint)?;
    let ds = load_csv(data)?;
    let clean = uncertainty_scores(&state, &ds)?;
    let mut csv = String::from("sigma,auroc,fpr95\n");
    let mut table = String::from("sigma      AUROC      FPR95\n");
    for (i, &sigma) in sigmas.iter().enumerate() {
        let noisy_data = add_gaussian_noise(&ds, sigma, seed ^ i as u64)?;
        let noisy = uncertainty_scores(&state, &noisy_data)?;
        let a = auroc(&clean, &noisy)?;
        let f = fpr_at_95_tpr(&clean, &noisy)?;
        let _ = writeln!(csv, "{sigma},{a},{f}");
        let _ = writeln!(table, "{sigma:<10} {a:<10.4} {f:<10.4}");
    }
    std::fs::write(out, csv)?;
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn parse_grid(grid: &str) -> Result<Vec<(usize, f64, PriorParams)>, Error> {
    if grid == "default" {
        let mut cells = Vec::new();
        for &k in &[2usize, 5, 10, 100] {
            for &beta in &[0.0, 0.1, 0.5, 1.0] {
                cells.push((k, beta, PriorParams::uniform(k)));
            }
        }
        return Ok(cells);
    }
    let text = std::fs::read_to_string(grid)
        .map_err(|e| Error::Config(format!("cannot read grid file {grid}: {e}")))?;
    let mut cells = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 2 {
            return Err(Error::Parse {
                line: idx + 1,
                message: "expected k,beta[,lambda]".into(),
            });
        }
        let k: usize = parts[0].trim().parse().map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("bad k: {e}"),
        })?;
        let beta: f64 = parts[1].trim().parse().map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("bad beta: {e}"),
        })?;
        let prior = match parts.get(2).map(|s| s.trim()) {
            None | Some("uniform") | Some("") => PriorParams::uniform(k),
            Some(spec) => {
                let lambda: Vec<f64> = spec
                    .split(';')
                    .map(|v| {
                        v.trim().parse::<f64>().map_err(|e| Error::Parse {
                            line: idx + 1,
                            message: format!("bad lambda entry '{v}': {e}"),
                        })
                    })
                    .collect::<Result<_, _>>()?;
                PriorParams::new(lambda)?
            }
        };
        cells.push((k, beta, prior));
    }
    if cells.is_empty() {
        return Err(Error::Config("grid file has no cells".into()));
    }
    Ok(cells)
}

fn cmd_verify(grid: &str, trials: usize, seed: u64, corruption: f64) -> Result<ExitCode, Error> {
    let cells = parse_grid(grid)?;
    println!(
        "{:<6} {:<6} {:<12} {:>14} {:>14} {:>12}  result",
        "K", "beta", "lambda", "empirical sup", "bound", "margin"
    );
    let mut failures = Vec::new();
    for (k, beta, prior) in cells {
        let cert = certify_gradient_bound_perturbed(k, beta, &prior, trials, seed, corruption)?;
        let lam = if prior.components().iter().all(|&l| l == 1.0) {
            "1_K".to_string()
        } else {
            format!("min {:.2}", prior.min_component())
        };
        println!(
            "{k:<6} {beta:<6} {lam:<12} {:>14.6} {:>14.6} {:>12.6}  {}",
            cert.empirical_sup,
            cert.bound,
            cert.margin(),
            if cert.pass { "ok" } else { "VIOLATION" }
        );
        if !cert.pass {
            failures.push(format!("K={k} beta={beta} lambda={lam}"));
        }
    }
    if failures.is_empty() {
        println!("all gradient bounds certified ({trials} points per cell)");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("certification FAILED for: {}", failures.join(", "));
        Ok(ExitCode::from(EXIT_CERTIFICATION))
    }
}

fn cmd_plot_simplex(checkpoint: &Path, data: &Path, out: &Path) -> Result<ExitCode, Error> {
    let state = viedl_core::checkpoint::load(checkpoint)?;
    let k = state.head.num_classes();
    if k < 3 {
        return Err(Error::Config(format!(
            "simplex projection needs K >= 3 classes, model has {k}"
        )));
    }
    let ds = load_csv(data)?;
    let mut csv = String::from("sample,class_a,class_b,class_c,bary_a,bary_b,bary_c,total_evidence\n");
    for (i, x) in ds.features.iter().enumerate() {
        let p = predict(&state, x)?;
        let (top, bary) = simplex_projection(&p.evidence, &p.probabilities)?;
        let total_evidence: f64 = p.evidence.iter().sum();
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{},{},{total_evidence}",
            top[0], top[1], top[2], bary[0], bary[1], bary[2],
        );
    }
    std::fs::write(out, csv)?;
    println!("wrote simplex data for {} samples to {}", ds.len(), out.display());
    Ok(ExitCode::SUCCESS)
}
