use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::Serialize;
use serde_json::{json, Value};
use vae_lab::diagnostics::{
    classify_variables, kl_rho_curve, kl_rho_minimum, latent_stats, linear_grid,
    noise_injection_experiment, stationarity_check, NoiseSchedule, Thresholds,
    DEFAULT_NOISE_STEP, DEFAULT_SIGMA_THRESHOLD, DEFAULT_VAR_THRESHOLD,
};
use vae_lab::model::{prior_latents, zero_coordinates};
use vae_lab::rng::{Rng, Stream};
use vae_lab::serialize::{load_model, save_model};
use vae_lab::train::{Trainer, DEFAULT_BATCH_SIZE, DEFAULT_MNIST_EPOCHS, DEFAULT_TILES_EPOCHS};
use vae_lab::{Architecture, Dataset, PenaltyMode, TrainConfig, TrainLog, VaeModel};

use crate::error::{CliError, CliResult};
use crate::format::sig;
use crate::manifest::{manifest_path, sibling, DatasetFingerprint, RunManifest};
use crate::pgm::ImageGrid;
use crate::source::{DataArgs, DatasetKind, SourceArgs};

#[derive(Debug, Clone, Args, Serialize)]
pub struct ThresholdArgs {
    /// Variance of μ below which a variable may be inactive.
    #[arg(long, default_value_t = DEFAULT_VAR_THRESHOLD)]
    pub var_threshold: f64,
    /// Mean σ² above which a variable may be inactive.
    #[arg(long, default_value_t = DEFAULT_SIGMA_THRESHOLD)]
    pub sigma_threshold: f64,
}

impl ThresholdArgs {
    fn get(&self) -> Thresholds {
        Thresholds {
            var_threshold: self.var_threshold,
            sigma_threshold: self.sigma_threshold,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Layer widths from input to latent, e.g. 784,256,32,24,16.
    #[arg(long, default_value = "784,256,32,24,16")]
    pub arch: String,
    /// Defaults to 10 for MNIST and 30 for tiles.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch: usize,
    /// Weight of the latent penalty.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Encode deterministically (z = μ).
    #[arg(long)]
    pub no_sampling: bool,
    /// Replace the KL term by ½Σμ².
    #[arg(long, requires = "no_sampling")]
    pub quadratic_penalty: bool,
    /// Model file to write; the log and manifest go next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// CSV report to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Number of samples.
    #[arg(long, default_value_t = 25)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a twin grid with the inactive variables zeroed; needs
    /// --dataset to classify them.
    #[arg(long, requires = "dataset")]
    pub zero_inactive: bool,
    /// Extra latent indices to zero in the twin grid.
    #[arg(long, value_delimiter = ',')]
    pub zero_vars: Vec<usize>,
    /// Dataset used to classify inactive variables.
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// PGM grid to write; the masked twin gets a `.masked.pgm` suffix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeKlArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub rho2: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub sigma2_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2_max: f64,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NoiseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Index of the (active) latent variable to degrade.
    #[arg(long)]
    pub var: usize,
    /// Amplitude increment per epoch.
    #[arg(long, default_value_t = DEFAULT_NOISE_STEP)]
    pub step: f64,
    #[arg(long, default_value_t = 8.0)]
    pub max_amplitude: f64,
    #[arg(long, default_value_t = 10)]
    pub hold_epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub recovery_epochs: usize,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// CSV log to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also save the model as it stands after the experiment.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

fn open_model(path: &Path) -> CliResult<VaeModel> {
    if !path.is_file() {
        return Err(CliError::Data(format!("model file {} not found", path.display())));
    }
    Ok(load_model(path)?)
}

fn check_input(model: &VaeModel, data: &Dataset) -> CliResult<()> {
    if model.input_dim() != data.pixels() {
        return Err(CliError::usage(format!(
            "model expects {} inputs but {} has {} pixels per image",
            model.input_dim(),
            data.name(),
            data.pixels()
        )));
    }
    Ok(())
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}_{i}"))
}

fn finish(
    command: &str,
    args: &impl Serialize,
    seed: Option<u64>,
    data: Option<&Dataset>,
    artifacts: Vec<PathBuf>,
    start: Instant,
    summary: Value,
) -> CliResult<()> {
    let manifest = RunManifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: serde_json::to_value(args)?,
        seed,
        dataset: data.map(DatasetFingerprint::of),
        duration_seconds: start.elapsed().as_secs_f64(),
        summary,
        artifacts: artifacts.clone(),
    };
    manifest.write(&manifest_path(&artifacts[0]))
}

pub fn train_log_rows(log: &TrainLog, latent: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = ["epoch", "batch", "loss", "reconstruction", "kl"]
        .map(String::from)
        .to_vec();
    header.extend(indexed("mu_variance", latent));
    header.extend(indexed("mean_local_variance", latent));
    let rows = log
        .records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.epoch.to_string(),
                r.batch.to_string(),
                sig(r.loss),
                sig(r.reconstruction),
                sig(r.kl),
            ];
            row.extend(r.mu_variance.iter().map(|&v| sig(v)));
            row.extend(r.mean_variance.iter().map(|&v| sig(v)));
            row
        })
        .collect();
    (header, rows)
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let start = Instant::now();
    let arch: Architecture = a.arch.parse().map_err(CliError::from)?;
    let data = a.data.load()?;
    if arch.input_dim != data.pixels() {
        return Err(CliError::usage(format!(
            "--arch starts at {} but the dataset has {} pixels per image",
            arch.input_dim,
            data.pixels()
        )));
    }
    let config = TrainConfig {
        epochs: a.epochs.unwrap_or(match a.data.dataset {
            DatasetKind::Mnist => DEFAULT_MNIST_EPOCHS,
            DatasetKind::Tiles => DEFAULT_TILES_EPOCHS,
        }),
        batch_size: a.batch,
        lambda: a.lambda,
        sampling_enabled: !a.no_sampling,
        penalty_mode: if a.quadratic_penalty {
            PenaltyMode::QuadraticMu
        } else {
            PenaltyMode::Kl
        },
        seed: a.seed,
        learning_rate: a.lr,
    };
    let mut model = VaeModel::new(&arch, &mut Rng::stream(a.seed, Stream::Init));
    let mut trainer = Trainer::new(&model, config.clone())?;
    let mut log = TrainLog::default();
    for e in 0..config.epochs {
        trainer.epoch(&mut model, &data, &[], None, &mut log)?;
        eprintln!(
            "epoch {e}: reconstruction {:.4}",
            log.epoch_reconstruction(e).unwrap_or(f64::NAN)
        );
    }
    save_model(&model, &a.out)?;
    let log_path = sibling(&a.out, "log.csv");
    let (header, rows) = train_log_rows(&log, model.latent_dim());
    write_csv(&log_path, &header, &rows)?;
    let summary = json!({
        "epochs": config.epochs,
        "batches": log.len(),
        "final_reconstruction": config.epochs.checked_sub(1).and_then(|e| log.epoch_reconstruction(e)),
        "model_sha256": crate::manifest::sha256_file(&a.out)?,
    });
    finish("train", a, Some(a.seed), Some(&data), vec![a.out.clone(), log_path], start, summary)
}

pub fn stats(a: &StatsArgs) -> CliResult<()> {
    let start = Instant::now();
    let model = open_model(&a.model)?;
    let data = a.data.load()?;
    check_input(&model, &data)?;
    let stats = latent_stats(&model, &data)?;
    let report = classify_variables(&stats, a.thresholds.get());
    let header = ["index", "global_mu_variance", "mean_local_variance", "stationarity_sum", "status"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = report
        .variables
        .iter()
        .map(|v| {
            vec![
                v.index.to_string(),
                sig(v.global_mu_variance),
                sig(v.mean_local_variance),
                sig(v.stationarity_sum),
                v.status.as_str().to_string(),
            ]
        })
        .collect();
    write_csv(&a.out, &header, &rows)?;
    let st = stationarity_check(&stats);
    eprintln!(
        "{} of {} variables inactive; stationarity mean {:.4}, variance {:.5}",
        report.inactive_count(),
        model.latent_dim(),
        st.mean,
        st.variance
    );
    let summary = json!({
        "inactive": report.inactive(),
        "stationarity_mean": st.mean,
        "stationarity_variance": st.variance,
    });
    finish("stats", a, None, Some(&data), vec![a.out.clone()], start, summary)
}

fn relative_mse(reference: &[f64], other: &[f64]) -> f64 {
    let num: f64 = reference.iter().zip(other).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = reference.iter().map(|a| a * a).sum();
    if den == 0.0 {
        if num == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        num / den
    }
}

fn write_grid(images: &vae_lab::Tensor, path: &Path) -> CliResult<()> {
    let grid = ImageGrid::from_rows(images)?;
    let mut buf = Vec::new();
    grid.write_pgm(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn generate(a: &GenerateArgs) -> CliResult<()> {
    let start = Instant::now();
    if a.n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    let model = open_model(&a.model)?;
    let data = match a.dataset {
        Some(kind) if a.zero_inactive => Some(a.source.load(kind)?),
        _ => None,
    };
    let mut mask = a.zero_vars.clone();
    if let Some(d) = &data {
        check_input(&model, d)?;
        let report = classify_variables(&latent_stats(&model, d)?, a.thresholds.get());
        mask.extend(report.inactive());
    }
    mask.sort_unstable();
    mask.dedup();
    let z = prior_latents(a.n, model.latent_dim(), &mut Rng::stream(a.seed, Stream::Prior));
    let images = model.decode(&z)?;
    write_grid(&images, &a.out)?;
    let mut artifacts = vec![a.out.clone()];
    let mut summary = json!({ "rows": crate::pgm::grid_shape(a.n).0, "cols": crate::pgm::grid_shape(a.n).1 });
    if !mask.is_empty() || a.zero_inactive {
        let masked = model.decode(&zero_coordinates(&z, &mask)?)?;
        let twin = sibling(&a.out, "masked.pgm");
        write_grid(&masked, &twin)?;
        artifacts.push(twin);
        summary["zeroed"] = json!(mask);
        summary["relative_mse"] = json!(relative_mse(images.data(), masked.data()));
    }
    finish("generate", a, Some(a.seed), data.as_ref(), artifacts, start, summary)
}

pub fn analyze_kl(a: &AnalyzeKlArgs) -> CliResult<()> {
    let start = Instant::now();
    if !(a.sigma2_min > 0.0) || !(a.sigma2_max > a.sigma2_min) || !a.sigma2_max.is_finite() {
        return Err(CliError::usage(format!(
            "need 0 < --sigma2-min < --sigma2-max, got {} and {}",
            a.sigma2_min, a.sigma2_max
        )));
    }
    if a.points < 2 {
        return Err(CliError::usage("--points must be at least 2"));
    }
    let grid = linear_grid(a.sigma2_min, a.sigma2_max, a.points)?;
    let curves = a
        .rho2
        .iter()
        .map(|&r| kl_rho_curve(r, &grid))
        .collect::<Result<Vec<_>, _>>()?;
    let mut header = vec!["sigma2".to_string()];
    header.extend(a.rho2.iter().map(|r| format!("kl_rho2_{}", sig(*r))));
    let mut rows: Vec<Vec<String>> = grid
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut row = vec![sig(s)];
            row.extend(curves.iter().map(|c| sig(c.kl_values[i])));
            row
        })
        .collect();
    let mut minima = vec!["analytic_min".to_string()];
    for &r in &a.rho2 {
        minima.push(sig(kl_rho_minimum(r)?));
    }
    rows.push(minima);
    write_csv(&a.out, &header, &rows)?;
    let summary = json!({
        "analytic_min": curves.iter().map(|c| c.sigma2_min).collect::<Vec<_>>(),
        "grid_argmin": curves.iter().map(|c| c.grid_argmin()).collect::<Vec<_>>(),
    });
    finish("analyze-kl", a, None, None, vec![a.out.clone()], start, summary)
}

pub fn experiment_noise(a: &NoiseArgs) -> CliResult<()> {
    let start = Instant::now();
    let mut model = open_model(&a.model)?;
    let data = a.data.load()?;
    check_input(&model, &data)?;
    let schedule = NoiseSchedule {
        step: a.step,
        max_amplitude: a.max_amplitude,
        hold_epochs: a.hold_epochs,
        recovery_epochs: a.recovery_epochs,
    };
    let config = TrainConfig {
        epochs: 0,
        batch_size: a.batch,
        lambda: a.lambda,
        seed: a.seed,
        learning_rate: a.lr,
        ..TrainConfig::default()
    };
    let log = noise_injection_experiment(
        &mut model,
        &data,
        a.var,
        &schedule,
        &config,
        a.thresholds.get(),
    )?;
    let header = [
        "step",
        "amplitude",
        "kl_contribution",
        "reconstruction_gain",
        "global_mu_variance",
        "mean_local_variance",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = log
        .records
        .iter()
        .map(|r| {
            vec![
                r.step.to_string(),
                sig(r.amplitude),
                sig(r.kl_contribution),
                sig(r.reconstruction_gain),
                sig(r.global_mu_variance),
                sig(r.mean_local_variance),
            ]
        })
        .collect();
    write_csv(&a.out, &header, &rows)?;
    let mut artifacts = vec![a.out.clone()];
    if let Some(p) = &a.save_model {
        save_model(&model, p)?;
        artifacts.push(p.clone());
    }
    let phases: Vec<&str> = log.records.iter().map(|r| r.phase.as_str()).collect();
    let summary = json!({
        "probed": log.probed,
        "frozen": log.frozen,
        "trigger_step": log.trigger_step,
        "phases": phases,
    });
    finish("experiment-noise", a, Some(a.seed), Some(&data), artifacts, start, summary)
}

pub fn encode(a: &EncodeArgs) -> CliResult<()> {
    let start = Instant::now();
    let model = open_model(&a.model)?;
    let data = a.data.load()?;
    check_input(&model, &data)?;
    let latent = model.latent_dim();
    let enc = model.encode(data.images())?;
    let var = enc.variance();
    let mut header = vec!["label".to_string()];
    header.extend(indexed("mu", latent));
    header.extend(indexed("sigma2", latent));
    let rows: Vec<Vec<String>> = (0..data.len())
        .map(|i| {
            let mut row = vec![data.labels().map_or(String::new(), |l| l[i].to_string())];
            row.extend(enc.mu.row(i).iter().map(|&v| sig(v)));
            row.extend(var.row(i).iter().map(|&v| sig(v)));
            row
        })
        .collect();
    write_csv(&a.out, &header, &rows)?;
    finish("encode", a, None, Some(&data), vec![a.out.clone()], start, json!({ "rows": rows.len() }))
}
