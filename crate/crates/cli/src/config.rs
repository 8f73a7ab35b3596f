use std::fs;
use std::path::{Path, PathBuf};

use hsc_core::{Error, Result};
use serde::Deserialize;

/// Values accepted from `--config <file>`. Keys mirror the long flag names
/// with dashes replaced by underscores; flags given on the command line win.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub horizon: Option<f64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub lambda: Option<f64>,
    pub rho: Option<Vec<f64>>,
    pub packet: Option<String>,
    pub p: Option<f64>,
    pub u0: Option<f64>,
    pub u0_grid: Option<String>,
    pub dist: Option<Vec<String>>,
    pub figure: Option<u8>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            position: e.column(),
            message: format!("{}: {e}", path.display()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys() {
        let cfg: FileConfig =
            serde_json::from_str(r#"{"seed": 7, "trials": 10, "rho": [1.1, 1.2], "packet": "exp:mean=1"}"#)
                .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.rho, Some(vec![1.1, 1.2]));
        assert!(serde_json::from_str::<FileConfig>(r#"{"sed": 7}"#).is_err());
    }
}
