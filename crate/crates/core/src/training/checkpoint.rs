//! Checkpoint directories.
//!
//! ```text
//! config.txt          key = value model configuration
//! index.txt           one "name<TAB>relative file" line per parameter
//! params/NNNN.tgf     parameter values in the TGF1 container
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{read_feature_file, write_feature_file};
use crate::encoding::ModelConfig;
use crate::error::{Error, Result};
use crate::model::TwinNet;
use crate::numerics::ParamStore;

pub fn save_checkpoint(dir: impl AsRef<Path>, config: &ModelConfig, store: &ParamStore) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("params")).map_err(|e| Error::io(dir, e))?;
    config.save(dir.join("config.txt"))?;
    let mut index = String::new();
    for (id, p) in store.iter() {
        let rel = format!("params/{:04}.tgf", id.index());
        write_feature_file(dir.join(&rel), &p.value)?;
        writeln!(index, "{}\t{rel}", p.name).expect("writing to a String");
    }
    let path = dir.join("index.txt");
    std::fs::write(&path, index).map_err(|e| Error::io(&path, e))
}

/// Rebuilds the network from the stored configuration and fills in every
/// parameter by name.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(TwinNet, ParamStore)> {
    let dir = dir.as_ref();
    let config = ModelConfig::load(dir.join("config.txt"))?;
    let (net, mut store) = TwinNet::new(&config)?;
    let index_path = dir.join("index.txt");
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let mut seen = 0;
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Validation {
            entry: format!("{}:{}", index_path.display(), no + 1),
            reason,
        };
        let (name, rel) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected name<TAB>file".into()))?;
        let id = store
            .find(name)
            .ok_or_else(|| bad(format!("parameter {name} is not part of the configured model")))?;
        let value = read_feature_file(dir.join(rel))?;
        if value.shape() != store.value(id).shape() {
            return Err(Error::dim("checkpoint", &store.value(id).shape(), &value.shape()));
        }
        store.set_value(id, value)?;
        seen += 1;
    }
    if seen != store.len() {
        return Err(Error::Validation {
            entry: index_path.display().to_string(),
            reason: format!("{seen} parameters stored, model has {}", store.len()),
        });
    }
    Ok((net, store))
}
