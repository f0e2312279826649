//! File formats and declarative configuration.
//!
//! Stream files are CSV with the header `t,modality,v1..vD,anchor_i,anchor_j,seq`.
//! Timestamps are seconds relative to stream start; every float is written
//! in its shortest round-trip decimal form, so write → read → write is
//! byte-stable.

mod config;
mod stream;
mod tables;

pub use config::{preset_names, preset_source, AppConfig, EvaluationConfig, TruthConfig};
pub use stream::{read_stream, read_stream_file, stream_header, write_stream, write_stream_file};
pub use tables::{
    read_estimates, read_truth, read_truth_file, write_control_points, write_estimates, write_json, write_outliers,
    write_steps, write_table, write_truth, EstimateRow,
};

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};

/// Opens `path` for writing, refusing to replace an existing file unless `force`.
pub fn create_output(path: &Path, force: bool) -> Result<BufWriter<File>> {
    if path.exists() && !force {
        return Err(Error::WouldOverwrite(path.display().to_string()));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Shortest decimal that parses back to `x`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_to_overwrite_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "x").unwrap();
        assert!(matches!(create_output(&path, false), Err(Error::WouldOverwrite(_))));
        assert!(create_output(&path, true).is_ok());
        assert!(create_output(&dir.path().join("sub/b.csv"), false).is_ok());
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2e-7, -1234.5678e10, 0.0, 6.02214076e23] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
