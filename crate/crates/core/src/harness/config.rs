//! Run configuration: a flat JSON object of [`RunConfig`] fields, with
//! command-line values layered on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::fairness::TestConfig;
use crate::model::{validate_rho, PricingRegistry};

pub const MIN_RUN_N: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    /// Guesses the format from a `.csv` / `.json` extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(OutputFormat::Csv),
            "json" => Some(OutputFormat::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub rho1: f64,
    pub rho2: f64,
    pub n: usize,
    /// Data-generation seed. Permutation streams use `test.seed`.
    pub seed: u64,
    pub test: TestConfig,
    pub output_path: Option<PathBuf>,
    pub output_format: OutputFormat,
    /// Name of the pricing functional under audit.
    pub pricing: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rho1: 0.1,
            rho2: 0.9,
            n: 1_000_000,
            seed: 42,
            test: TestConfig::default(),
            output_path: None,
            output_format: OutputFormat::Json,
            pricing: "best_estimate".into(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        validate_rho(self.rho1, self.rho2)?;
        if self.n < MIN_RUN_N {
            return Err(Error::Config(format!(
                "n = {} is below the minimum of {MIN_RUN_N}",
                self.n
            )));
        }
        self.test.validate()?;
        PricingRegistry::default().get(&self.pricing)?;
        Ok(())
    }

    /// Parses and validates a JSON configuration.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_layers(value, Map::new())
    }

    /// Reads `path` (if any) and applies `overrides` on top; nested objects
    /// such as `test` are merged key by key. When no format is given it is
    /// taken from the output path's extension.
    pub fn layered(path: Option<&Path>, overrides: Map<String, Value>) -> Result<Self> {
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(Error::file(p))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Map::new()),
        };
        Self::from_layers(base, overrides)
    }

    fn from_layers(base: Value, overrides: Map<String, Value>) -> Result<Self> {
        let Value::Object(mut merged) = base else {
            return Err(Error::Config("configuration must be a JSON object".into()));
        };
        merge(&mut merged, overrides);
        let explicit_format = merged.contains_key("output_format");
        let mut cfg: RunConfig = serde_json::from_value(Value::Object(merged))
            .map_err(|e| Error::Config(e.to_string()))?;
        if !explicit_format {
            if let Some(f) = cfg.output_path.as_deref().and_then(OutputFormat::from_path) {
                cfg.output_format = f;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(base: &mut Map<String, Value>, over: Map<String, Value>) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Object(b)), Value::Object(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn obj(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
        assert_eq!(
            RunConfig::from_json_str("{}").unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn overrides_win_and_nested_fields_merge() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(
            &path,
            r#"{"rho1": 0.3, "n": 5000, "test": {"alpha": 0.05, "n_bins_y": 10}}"#,
        )
        .unwrap();
        let cfg = RunConfig::layered(
            Some(&path),
            obj(json!({"n": 7000, "test": {"alpha": 0.02}})),
        )
        .unwrap();
        assert_eq!(cfg.rho1, 0.3);
        assert_eq!(cfg.n, 7000);
        assert_eq!(cfg.test.alpha, 0.02);
        assert_eq!(cfg.test.n_bins_y, 10);
    }

    #[test]
    fn format_follows_extension_unless_given() {
        let cfg = RunConfig::layered(None, obj(json!({"output_path": "out/report.CSV"}))).unwrap();
        assert_eq!(cfg.output_format, OutputFormat::Csv);
        let cfg = RunConfig::layered(
            None,
            obj(json!({"output_path": "r.csv", "output_format": "json"})),
        )
        .unwrap();
        assert_eq!(cfg.output_format, OutputFormat::Json);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for bad in [
            r#"{"rho1": 0.8, "rho2": 0.8}"#,
            r#"{"n": 999}"#,
            r#"{"test": {"alpha": 0.7}}"#,
            r#"{"pricing": "oracle"}"#,
            r#"{"unknown_field": 1}"#,
            r#"[1, 2]"#,
            r#"{"n": "#,
        ] {
            let err = RunConfig::from_json_str(bad).unwrap_err();
            assert!(
                matches!(
                    err,
                    Error::Config(_) | Error::InvalidRho { .. } | Error::UnknownStrategy { .. }
                ),
                "{bad}: {err:?}"
            );
        }
        assert!(matches!(
            RunConfig::layered(Some(Path::new("/nonexistent/cfg.json")), Map::new()),
            Err(Error::File { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig {
            output_path: Some("x.json".into()),
            pricing: "subset:x1".into(),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), cfg);
    }
}
