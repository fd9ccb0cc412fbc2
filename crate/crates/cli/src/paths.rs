use std::path::{Path, PathBuf};

/// Environment variable naming the root for relative dataset and run directories.
pub const OUTPUT_ROOT_ENV: &str = "MSLG_OUTPUT_ROOT";

/// Relative dataset/run directories live under `$MSLG_OUTPUT_ROOT` when it is set.
pub fn resolve(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() && !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}
