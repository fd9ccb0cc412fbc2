use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mslg::labels::SoftLabelStore;

use crate::error::CliError;

/// Writes a label snapshot as CSV (`sample_id,yhat_0..,argmax`); `-` is stdout.
pub fn export_labels(snapshot: &Path, out: &Path) -> Result<(), CliError> {
    let store = SoftLabelStore::load_snapshot(snapshot)?;
    if out == Path::new("-") {
        let stdout = std::io::stdout();
        let mut w = stdout.lock();
        return store.write_csv(&mut w).map_err(|e| CliError::io(out, e));
    }
    let mut w = BufWriter::new(File::create(out).map_err(|e| CliError::io(out, e))?);
    store
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(out, e))
}
