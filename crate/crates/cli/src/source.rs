//! Resolving `--dataset` flags to an in-memory [`Dataset`].

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use vae_lab::data::{gen_tiles, load_mnist_idx, TileSpec};
use vae_lab::rng::{Rng, Stream};
use vae_lab::Dataset;

use crate::error::{CliError, CliResult};

pub const MNIST_DIR_ENV: &str = "VAE_LAB_MNIST_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Tiles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Dataset to load.
    #[arg(long, value_enum)]
    pub dataset: DatasetKind,
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
}

/// Where and how much of a dataset to load; `--dataset` is declared by the
/// caller so that it can be optional.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SourceArgs {
    /// Directory holding the MNIST IDX files (optionally gzipped).
    #[arg(long, env = MNIST_DIR_ENV, default_value = "data/mnist")]
    pub data_dir: PathBuf,
    /// MNIST split.
    #[arg(long, value_enum, default_value = "train")]
    pub split: Split,
    /// Number of generated tile images.
    #[arg(long, default_value_t = 60_000)]
    pub tiles_count: usize,
    /// Seed for tile generation, independent of the training seed.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Keep only the first N examples.
    #[arg(long)]
    pub limit: Option<usize>,
}

impl DataArgs {
    pub fn load(&self) -> CliResult<Dataset> {
        self.source.load(self.dataset)
    }
}

impl SourceArgs {
    pub fn load(&self, kind: DatasetKind) -> CliResult<Dataset> {
        let data = match kind {
            DatasetKind::Mnist => load_mnist(&self.data_dir, self.split)?,
            DatasetKind::Tiles => gen_tiles(
                self.tiles_count,
                &TileSpec::default(),
                &mut Rng::stream(self.data_seed, Stream::Data),
            )?,
        };
        Ok(match self.limit {
            Some(0) => return Err(CliError::usage("--limit must be at least 1")),
            Some(n) if n < data.len() => data.take(n),
            _ => data,
        })
    }
}

fn find(dir: &Path, stem: &str) -> Option<PathBuf> {
    [stem.to_string(), format!("{stem}.gz")]
        .into_iter()
        .map(|f| dir.join(f))
        .find(|p| p.is_file())
}

pub fn load_mnist(dir: &Path, split: Split) -> CliResult<Dataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let images = find(dir, &format!("{prefix}-images-idx3-ubyte")).ok_or_else(|| {
        CliError::Data(format!(
            "no {prefix}-images-idx3-ubyte[.gz] in {} (set --data-dir or {MNIST_DIR_ENV})",
            dir.display()
        ))
    })?;
    let labels = find(dir, &format!("{prefix}-labels-idx1-ubyte"));
    Ok(load_mnist_idx(&images, labels.as_deref())?)
}
