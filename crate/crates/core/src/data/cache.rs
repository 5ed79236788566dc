use std::path::Path;

use serde_json::json;

use super::TimeSeriesDataset;
use crate::error::{MatError, Result};
use crate::model::{read_archive, write_archive, Archive};

const KIND: &str = "dataset";

/// Writes a parsed dataset to the binary archive format.
pub fn save_cache(path: &Path, ds: &TimeSeriesDataset) -> Result<()> {
    write_archive(
        path,
        &Archive {
            kind: KIND.into(),
            meta: json!({ "channels": ds.channels, "timestamps": ds.timestamps }),
            tensors: vec![("values".into(), ds.values.clone())],
        },
    )
}

pub fn load_cache(path: &Path) -> Result<TimeSeriesDataset> {
    let archive = read_archive(path)?;
    if archive.kind != KIND {
        return Err(MatError::Checkpoint(format!("archive kind {:?} is not a dataset cache", archive.kind)));
    }
    let field = |key: &str| -> Result<Vec<String>> {
        serde_json::from_value(archive.meta[key].clone())
            .map_err(|e| MatError::Checkpoint(format!("dataset cache {key}: {e}")))
    };
    let channels = field("channels")?;
    let timestamps = field("timestamps")?;
    let values = archive
        .tensors
        .into_iter()
        .find(|(n, _)| n == "values")
        .map(|(_, t)| t)
        .ok_or_else(|| MatError::Checkpoint("dataset cache has no values".into()))?;
    let (m, n) = values.dims2()?;
    if m != channels.len() || n != timestamps.len() {
        return Err(MatError::Checkpoint(format!(
            "dataset cache holds {m}×{n} values for {} channels and {} timestamps",
            channels.len(),
            timestamps.len()
        )));
    }
    Ok(TimeSeriesDataset {
        values,
        timestamps,
        channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.json");
        let ds = synthetic::two_tone(64, 3, 0.1, 9);
        save_cache(&path, &ds).unwrap();
        assert_eq!(load_cache(&path).unwrap(), ds);
    }
}
