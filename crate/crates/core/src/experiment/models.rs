//! Saving and loading fitted surrogates.

use std::path::Path;

use crate::ensemble::{load_checkpoint, save_checkpoint};
use crate::error::{FomoError, Result};
use crate::gp::GpDump;
use crate::io::write_string_atomic;
use crate::surrogate::Surrogate;
use crate::{EnsembleModel, GpModel};

pub const GP_DUMP_FILE: &str = "gp.json";

pub trait SaveModel {
    fn save(&self, dir: &Path) -> Result<()>;
}

impl SaveModel for GpModel {
    fn save(&self, dir: &Path) -> Result<()> {
        write_string_atomic(dir.join(GP_DUMP_FILE), &serde_json::to_string_pretty(&self.dump())?)
    }
}

impl SaveModel for EnsembleModel {
    fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(self, dir)
    }
}

/// Load a GP dump or an ensemble checkpoint from `dir`.
pub fn load_model(dir: &Path) -> Result<Box<dyn Surrogate>> {
    let gp = dir.join(GP_DUMP_FILE);
    if gp.is_file() {
        let dump: GpDump = serde_json::from_str(&std::fs::read_to_string(gp)?)?;
        return Ok(Box::new(GpModel::from_dump(&dump)?));
    }
    if !dir.is_dir() {
        return Err(FomoError::InvalidInput(format!("no model at {}", dir.display())));
    }
    Ok(Box::new(load_checkpoint(dir)?))
}
