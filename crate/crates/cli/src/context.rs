use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::Serialize;
use twosite::TwoSiteModel;

use crate::config;
use crate::error::CliError;
use crate::output::{sha256_hex, Outputs};

/// State shared by a command and the manifest writer.
pub struct Context {
    pub model: TwoSiteModel,
    pub out: Outputs,
    pub config_path: Option<PathBuf>,
    pub config_sha256: Option<String>,
    pub resolved: serde_json::Value,
    pub seed: u64,
}

impl Context {
    /// Loads the `--config` file, or the default when none was given and
    /// the command has one.
    pub fn config<T>(&mut self, default: Option<T>) -> Result<T, CliError>
    where
        T: DeserializeOwned + Serialize,
    {
        let value = match (&self.config_path, default) {
            (Some(path), _) => {
                let (v, text) = config::load::<T>(path)?;
                self.config_sha256 = Some(sha256_hex(text.as_bytes()));
                v
            }
            (None, Some(d)) => d,
            (None, None) => return Err(CliError::Validation("this command needs --config <file>".into())),
        };
        self.record(&value);
        Ok(value)
    }

    pub fn record<T: Serialize>(&mut self, value: &T) {
        self.resolved = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
    }
}
