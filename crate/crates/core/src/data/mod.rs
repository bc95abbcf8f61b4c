//! Training data: MNIST IDX files, generated tile images, minibatching.

mod mnist;
mod tiles;

pub use mnist::{load_mnist_idx, parse_idx_images, parse_idx_labels, write_idx, IMAGE_MAGIC, LABEL_MAGIC};
pub use tiles::{gen_tiles, TileSpec};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Images as rows of an `n × pixels` matrix, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Option<Vec<u32>>,
    name: String,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Option<Vec<u32>>, name: impl Into<String>) -> Result<Self> {
        if images.shape().len() != 2 || images.rows() == 0 {
            return Err(Error::Config(format!(
                "dataset needs a nonempty n × pixels matrix, got shape {:?}",
                images.shape()
            )));
        }
        if let Some(bad) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("pixel value {bad} outside [0, 1]")));
        }
        if let Some(l) = &labels {
            if l.len() != images.rows() {
                return Err(Error::Config(format!(
                    "{} labels for {} images",
                    l.len(),
                    images.rows()
                )));
            }
        }
        Ok(Dataset {
            images,
            labels,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixels(&self) -> usize {
        self.images.cols()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn batch(&self, indices: &[usize]) -> Tensor {
        self.images.select_rows(indices)
    }

    /// The first `n` examples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len()).max(1);
        let idx: Vec<usize> = (0..n).collect();
        Dataset {
            images: self.images.select_rows(&idx),
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
            name: self.name.clone(),
        }
    }
}

/// One epoch of shuffled minibatch index lists; the last batch may be short.
pub fn minibatches(n: usize, batch_size: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
