use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Layout of the "counting tiles" images: white square tiles on black.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileSpec {
    pub image_side: usize,
    pub tile_side: usize,
    pub min_tiles: usize,
    pub max_tiles: usize,
    pub allow_overlap: bool,
}

impl Default for TileSpec {
    fn default() -> Self {
        TileSpec {
            image_side: 28,
            tile_side: 4,
            min_tiles: 1,
            max_tiles: 3,
            allow_overlap: false,
        }
    }
}

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

impl TileSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tile_side == 0 || self.tile_side > self.image_side {
            return Err(Error::Config(format!(
                "tile side {} must be in 1..={}",
                self.tile_side, self.image_side
            )));
        }
        if self.min_tiles == 0 || self.min_tiles > self.max_tiles {
            return Err(Error::Config(format!(
                "tile counts need 1 <= min ({}) <= max ({})",
                self.min_tiles, self.max_tiles
            )));
        }
        // Tiles with a one-pixel gap always fit when packed on this grid.
        let cells = ((self.image_side + 1) / (self.tile_side + 1)).pow(2);
        if !self.allow_overlap && self.max_tiles > cells {
            return Err(Error::Config(format!(
                "{} disjoint tiles cannot fit in a {}px image",
                self.max_tiles, self.image_side
            )));
        }
        Ok(())
    }

    /// True when two tiles overlap or touch (no one-pixel gap between them),
    /// which would merge them into a single lit blob.
    fn collide(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        let reach = self.tile_side + 1;
        a.0 < b.0 + reach && b.0 < a.0 + reach && a.1 < b.1 + reach && b.1 < a.1 + reach
    }
}

/// Generates `n` images with a uniform number of tiles in
/// `min_tiles..=max_tiles`, each placed with its top-left corner uniform over
/// the valid positions and rejected when it overlaps or touches an earlier
/// tile. Labels are the tile counts.
pub fn gen_tiles(n: usize, spec: &TileSpec, rng: &mut Rng) -> Result<Dataset> {
    spec.validate()?;
    let side = spec.image_side;
    let positions = side - spec.tile_side + 1;
    let mut data = vec![0.0; n * side * side];
    let mut labels = Vec::with_capacity(n);
    let mut placed: Vec<(usize, usize)> = Vec::with_capacity(spec.max_tiles);
    for (i, image) in data.chunks_exact_mut(side * side).enumerate() {
        let k = spec.min_tiles + rng.below(spec.max_tiles - spec.min_tiles + 1);
        placed.clear();
        let mut attempts = 0;
        while placed.len() < k {
            attempts += 1;
            if attempts > MAX_PLACEMENT_ATTEMPTS {
                return Err(Error::Generation(format!(
                    "could not place {k} tiles in image {i}"
                )));
            }
            let corner = (rng.below(positions), rng.below(positions));
            if !spec.allow_overlap && placed.iter().any(|&p| spec.collide(p, corner)) {
                continue;
            }
            placed.push(corner);
        }
        for &(r0, c0) in &placed {
            for r in r0..r0 + spec.tile_side {
                for c in c0..c0 + spec.tile_side {
                    image[r * side + c] = 1.0;
                }
            }
        }
        labels.push(k as u32);
    }
    Dataset::new(
        Tensor::matrix(n, side * side, data)?,
        Some(labels),
        format!("tiles-{n}"),
    )
}
