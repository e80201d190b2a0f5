use std::collections::BTreeMap;
use std::path::Path;

use super::PipelineError;

/// Output files keyed by path relative to the output directory.
pub type Artifacts = BTreeMap<String, String>;

/// `#` comment lines that open every delimited-text and plain-text artifact.
pub fn header_lines(config_sha256: &str, seed: u64) -> String {
    format!("# config_sha256={config_sha256}\n# seed={seed}\n")
}

/// Writes every artifact under `dir`, creating subdirectories as needed.
pub fn write_artifacts(dir: &Path, artifacts: &Artifacts) -> Result<(), PipelineError> {
    let io = |e: std::io::Error| PipelineError::new("write", format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    for (name, content) in artifacts {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        std::fs::write(&path, content).map_err(|e| PipelineError::new("write", format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
