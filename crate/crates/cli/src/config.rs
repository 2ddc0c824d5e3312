use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_CONFIG: &str = "cgw.toml";

/// Defaults read from `cgw.toml`. Command-line flags win over these.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub provider: Option<String>,
    pub threshold: Option<f64>,
    pub port: Option<u16>,
    pub embed_url: Option<String>,
    pub vectors: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads `explicit` if given (it must exist), else `./cgw.toml` if present.
    pub fn load(explicit: Option<&Path>) -> Result<Self, CliError> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let p = PathBuf::from(DEFAULT_CONFIG);
                if !p.exists() {
                    return Ok(Config::default());
                }
                p
            }
        };
        let text = crate::read_text(&path)?;
        Config::parse(&text).map_err(|message| CliError::Config { path, message })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys() {
        let c = Config::parse("provider = \"lexical\"\nthreshold = 0.9\nport = 8080\n").unwrap();
        assert_eq!(c.provider.as_deref(), Some("lexical"));
        assert_eq!(c.threshold, Some(0.9));
        assert_eq!(c.port, Some(8080));
        assert!(Config::parse("colour = \"red\"").is_err());
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }
}
