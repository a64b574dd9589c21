//! Run manifests: content hashes of the config, the templates, and
//! every artifact a run produced, so reruns can be compared
//! byte-for-byte.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub stages_run: Vec<String>,
    /// Artifact path (relative to the out dir) -> SHA-256.
    pub artifacts: BTreeMap<String, String>,
    /// Template name -> SHA-256 of the body used.
    pub templates: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("serialize manifest: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data_at(path, format!("cannot read manifest: {e}")))?;
        serde_json::from_str(&text).map_err(|e| Error::data_at(path, format!("parse: {e}")))
    }
}

/// Streaming SHA-256 of a file.
pub fn hash_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| Error::data_at(path, format!("cannot hash: {e}")))?;
    let mut hasher = Sha256::new();
    let mut buffer = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buffer)?;
        if n == 0 {
            break;
        }
        hasher.update(&buffer[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Hash every regular file under `root` (recursively), keyed by its
/// path relative to `root` with `/` separators. `skip` names are
/// excluded at any depth.
pub fn hash_tree(root: &Path, skip: &[&str]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    hash_tree_into(root, root, skip, &mut out)?;
    Ok(out)
}

fn hash_tree_into(
    root: &Path,
    dir: &Path,
    skip: &[&str],
    out: &mut BTreeMap<String, String>,
) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if skip.contains(&name.as_ref()) {
            continue;
        }
        let path = entry.path();
        if path.is_dir() {
            hash_tree_into(root, &path, skip, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("walk stays under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            out.insert(rel, hash_file(&path)?);
        }
    }
    Ok(())
}
