//! Ensemble checkpoints.
//!
//! Each member is stored in its own flat binary file, all integers and
//! floats little-endian:
//!
//! ```text
//! u64            L, the number of weight layers
//! u64 x (L + 1)  layer widths d_0 (input) .. d_L (= 1)
//! for each layer l in 1..=L:
//!     f64 x (d_{l-1} * d_l)  weights, row-major (input index major)
//!     f64 x d_l              bias
//! ```
//!
//! A JSON manifest `ensemble.json` next to the member files records the
//! architecture, the normalizers and the member file names.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Dense, EnsembleModel, Mlp, MlpArchitecture, Standardizer};
use crate::error::{FomoError, Result};
use crate::io::write_string_atomic;

const MANIFEST: &str = "ensemble.json";

pub fn write_member<W: Write>(mut w: W, net: &Mlp<f64>) -> Result<()> {
    w.write_all(&(net.layers.len() as u64).to_le_bytes())?;
    w.write_all(&(net.input_dim() as u64).to_le_bytes())?;
    for l in &net.layers {
        w.write_all(&(l.fan_out() as u64).to_le_bytes())?;
    }
    for l in &net.layers {
        for v in l.weights.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in l.bias.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub fn read_member<R: Read>(mut r: R) -> Result<Mlp<f64>> {
    let layers = read_u64(&mut r)? as usize;
    if layers == 0 || layers > 1024 {
        return Err(FomoError::InvalidInput(format!("implausible layer count {layers}")));
    }
    let dims = (0..=layers).map(|_| read_u64(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(layers);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = Array2::from_shape_vec((fan_in, fan_out), read_f64s(&mut r, fan_in * fan_out)?)
            .map_err(|e| FomoError::InvalidInput(e.to_string()))?;
        let bias = Array1::from(read_f64s(&mut r, fan_out)?);
        out.push(Dense { weights, bias });
    }
    Ok(Mlp { layers: out })
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    architecture: MlpArchitecture,
    input_normalizer: Standardizer<f64>,
    output_normalizer: Standardizer<f64>,
    members: Vec<String>,
}

pub fn save_checkpoint(model: &EnsembleModel<f64>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for (i, net) in model.members.iter().enumerate() {
        let name = format!("member-{i}.bin");
        let mut w = BufWriter::new(File::create(dir.join(&name))?);
        write_member(&mut w, net)?;
        w.flush()?;
        names.push(name);
    }
    let manifest = Manifest {
        architecture: model.architecture.clone(),
        input_normalizer: model.input_normalizer.clone(),
        output_normalizer: model.output_normalizer.clone(),
        members: names,
    };
    write_string_atomic(dir.join(MANIFEST), &serde_json::to_string_pretty(&manifest)?)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<EnsembleModel<f64>> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(dir.join(MANIFEST))?))?;
    if manifest.members.is_empty() {
        return Err(FomoError::Untrained);
    }
    let members = manifest
        .members
        .iter()
        .map(|name| read_member(BufReader::new(File::open(dir.join(name))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel {
        members,
        architecture: manifest.architecture,
        input_normalizer: manifest.input_normalizer,
        output_normalizer: manifest.output_normalizer,
    })
}
