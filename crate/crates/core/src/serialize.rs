//! Model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "VAES"                      magic, 4 bytes
//! u32 version                 currently 1
//! u32 input_dim, u32 latent_dim
//! u32 encoder_layers, u32 decoder_layers
//! per layer, declaration order (encoder body, μ head, log σ² head, decoder):
//!     u32 in, u32 out, u8 activation code
//! per layer, same order: out·in f64 weights (row-major), then out f64 bias
//! ```
//!
//! Nothing may follow the last parameter block.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::VaeModel;
use crate::nn::{Activation, DenseLayer};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"VAES";
pub const VERSION: u32 = 1;

pub fn encode_model(model: &VaeModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * model.parameter_count());
    out.extend_from_slice(MAGIC);
    let header = [
        VERSION,
        model.input_dim() as u32,
        model.latent_dim() as u32,
        model.encoder_body().len() as u32,
        model.decoder().len() as u32,
    ];
    for v in header {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let layers = model.layers();
    for l in &layers {
        out.extend_from_slice(&(l.input_size() as u32).to_le_bytes());
        out.extend_from_slice(&(l.output_size() as u32).to_le_bytes());
        out.push(l.activation().code());
    }
    for l in &layers {
        for v in l.weights().data().iter().chain(l.bias().data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.offset.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.offset..end];
                self.offset = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.offset as u64,
                format!("truncated file while reading {what}"),
            )),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n * 8, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<VaeModel> {
    let mut cur = Cursor { bytes, offset: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"VAES\""));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let input_dim = cur.u32("input_dim")? as usize;
    let latent_dim = cur.u32("latent_dim")? as usize;
    let n_enc = cur.u32("encoder layer count")? as usize;
    let n_dec = cur.u32("decoder layer count")? as usize;
    let total = n_enc + 2 + n_dec;
    // Each header entry takes 9 bytes; reject absurd counts before allocating.
    if total * 9 > bytes.len() {
        return Err(Error::format(
            cur.offset as u64,
            format!("layer count {total} exceeds file size"),
        ));
    }
    let mut shapes = Vec::with_capacity(total);
    for i in 0..total {
        let at = cur.offset as u64;
        let input = cur.u32("layer input size")? as usize;
        let output = cur.u32("layer output size")? as usize;
        let code = cur.take(1, "activation code")?[0];
        let act = Activation::from_code(code)
            .ok_or_else(|| Error::format(at + 8, format!("unknown activation code {code}")))?;
        if input == 0 || output == 0 {
            return Err(Error::format(at, format!("layer {i} has a zero dimension")));
        }
        shapes.push((input, output, act));
    }
    let mut layers = Vec::with_capacity(total);
    for (input, output, act) in shapes {
        let at = cur.offset;
        let w = cur.f64s(input * output, "weights")?;
        let b = cur.f64s(output, "bias")?;
        let layer = DenseLayer::new(Tensor::matrix(output, input, w)?, Tensor::from_vec(b), act)
            .map_err(|e| Error::format(at as u64, e.to_string()))?;
        layers.push(layer);
    }
    if cur.offset != bytes.len() {
        return Err(Error::format(
            cur.offset as u64,
            format!("{} trailing bytes", bytes.len() - cur.offset),
        ));
    }
    let decoder = layers.split_off(n_enc + 2);
    let logvar_head = layers.pop().expect("two heads");
    let mu_head = layers.pop().expect("two heads");
    let model = VaeModel::from_layers(layers, mu_head, logvar_head, decoder)
        .map_err(|e| Error::format(24, e.to_string()))?;
    if model.input_dim() != input_dim || model.latent_dim() != latent_dim {
        return Err(Error::format(
            8,
            format!(
                "header dims {input_dim}/{latent_dim} disagree with layers {}/{}",
                model.input_dim(),
                model.latent_dim()
            ),
        ));
    }
    Ok(model)
}

pub fn save_model(model: &VaeModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<VaeModel> {
    decode_model(&fs::read(path)?)
}
