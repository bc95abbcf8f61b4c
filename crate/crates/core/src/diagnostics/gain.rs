use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{per_row_sse, zero_coordinates, VaeModel};
use crate::parallel::{map_chunks, EVAL_CHUNK};

/// Mean increase of per-image SSE when coordinate `var_index` of `μ(X)` is
/// zeroed before decoding. Evaluated at `z = μ(X)`, without sampling.
pub fn reconstruction_gain(model: &VaeModel, data: &Dataset, var_index: usize) -> Result<f64> {
    reconstruction_gain_with(model, data, var_index, &[])
}

/// As [`reconstruction_gain`], with the `pinned` coordinates held at zero in
/// both reconstructions.
pub fn reconstruction_gain_with(
    model: &VaeModel,
    data: &Dataset,
    var_index: usize,
    pinned: &[usize],
) -> Result<f64> {
    if var_index >= model.latent_dim() {
        return Err(Error::Range {
            what: "latent",
            index: var_index,
            limit: model.latent_dim(),
        });
    }
    let images = data.images();
    let partials = map_chunks(data.len(), EVAL_CHUNK, |r| -> Result<f64> {
        let idx: Vec<usize> = r.collect();
        let x = images.select_rows(&idx);
        let mu = zero_coordinates(&model.encode(&x)?.mu, pinned)?;
        let full = model.decode(&mu)?;
        let ablated = model.decode(&zero_coordinates(&mu, &[var_index])?)?;
        let with = per_row_sse(&x, &full);
        let without = per_row_sse(&x, &ablated);
        Ok(without.iter().zip(&with).map(|(a, b)| a - b).sum())
    });
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    Ok(total / data.len() as f64)
}

/// Mean per-image SSE of `decode(μ(X))`.
pub fn mean_reconstruction_error(model: &VaeModel, data: &Dataset) -> Result<f64> {
    let images = data.images();
    let partials = map_chunks(data.len(), EVAL_CHUNK, |r| -> Result<f64> {
        let idx: Vec<usize> = r.collect();
        let x = images.select_rows(&idx);
        let recon = model.decode(&model.encode(&x)?.mu)?;
        Ok(per_row_sse(&x, &recon).iter().sum())
    });
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    Ok(total / data.len() as f64)
}
