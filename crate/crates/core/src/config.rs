//! Service configuration: one TOML file plus `HANJA_*` environment overrides.
//!
//! Every data path is optional; omitted tables fall back to the bundled
//! defaults. Relative paths resolve against the configuration file's
//! directory.

use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::reference::{Gazetteer, PunctRules, RuleError};
use crate::backends::remote::DEFAULT_MAX_IN_FLIGHT;
use crate::backends::{BackendDescriptor, BackendKind, BackendSet, ReferenceBackend, RemoteBackend, WindowPlan};
use crate::glossary::{parse_cedict, CedictIndex, Glossary, GlossaryError, ReadingTable, UrlTemplate, DEFAULT_URL_TEMPLATE};
use crate::persistence::DEFAULT_SESSION_DAYS;
use crate::punctuation::{LabelRegistry, RegistryError};
use crate::translation::DEFAULT_CHUNK_CHARS;

pub const DEFAULT_MAX_INPUT_CHARS: usize = 20_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for {var}: {value}")]
    Env { var: String, value: String },
    #[error("label registry {path}: {source}")]
    Registry { path: PathBuf, source: RegistryError },
    #[error("{path}: {source}")]
    Rules { path: PathBuf, source: RuleError },
    #[error(transparent)]
    Glossary(#[from] GlossaryError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bind: String,
    pub max_input_chars: usize,
    pub database: PathBuf,
    pub session_days: i64,
    pub url_template: String,
    pub registry: Option<PathBuf>,
    pub readings: Option<PathBuf>,
    pub cedict: Option<PathBuf>,
    pub punct_rules: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub default_backend: String,
    pub chunk_chars: usize,
    pub max_in_flight: usize,
    pub window: WindowPlan,
    pub backends: Vec<BackendDescriptor>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            bind: "127.0.0.1:8080".into(),
            max_input_chars: DEFAULT_MAX_INPUT_CHARS,
            database: PathBuf::from("hanja.db"),
            session_days: DEFAULT_SESSION_DAYS,
            url_template: DEFAULT_URL_TEMPLATE.into(),
            registry: None,
            readings: None,
            cedict: None,
            punct_rules: None,
            gazetteer: None,
            default_backend: "reference".into(),
            chunk_chars: DEFAULT_CHUNK_CHARS,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            window: WindowPlan::default(),
            backends: vec![BackendDescriptor::reference("reference")],
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })
}

impl Config {
    /// Reads a config file, resolves relative paths and applies overrides
    /// from the process environment.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let mut config: Config = toml::from_str(&read(path)?)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        config.apply_env(std::env::vars())?;
        Ok(config)
    }

    /// Defaults plus environment overrides.
    pub fn from_env() -> Result<Self, ConfigError> {
        let mut config = Config::default();
        config.apply_env(std::env::vars())?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.database);
        for p in [
            &mut self.registry,
            &mut self.readings,
            &mut self.cedict,
            &mut self.punct_rules,
            &mut self.gazetteer,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (var, value) in vars {
            let Some(key) = var.strip_prefix("HANJA_") else {
                continue;
            };
            let bad = || ConfigError::Env {
                var: var.clone(),
                value: value.clone(),
            };
            match key {
                "BIND" => self.bind = value.clone(),
                "MAX_INPUT_CHARS" => self.max_input_chars = value.parse().map_err(|_| bad())?,
                "DATABASE" => self.database = value.clone().into(),
                "SESSION_DAYS" => self.session_days = value.parse().map_err(|_| bad())?,
                "URL_TEMPLATE" => self.url_template = value.clone(),
                "REGISTRY" => self.registry = Some(value.clone().into()),
                "READINGS" => self.readings = Some(value.clone().into()),
                "CEDICT" => self.cedict = Some(value.clone().into()),
                "PUNCT_RULES" => self.punct_rules = Some(value.clone().into()),
                "GAZETTEER" => self.gazetteer = Some(value.clone().into()),
                "DEFAULT_BACKEND" => self.default_backend = value.clone(),
                "CHUNK_CHARS" => self.chunk_chars = value.parse().map_err(|_| bad())?,
                "MAX_IN_FLIGHT" => self.max_in_flight = value.parse().map_err(|_| bad())?,
                _ => {}
            }
        }
        Ok(())
    }
}

/// Loaded tables and backends, shared by the gateway and the batch runner.
#[derive(Clone)]
pub struct Platform {
    pub registry: Arc<LabelRegistry>,
    pub glossary: Arc<Glossary>,
    pub backends: BackendSet,
    pub window: WindowPlan,
    pub chunk_chars: NonZeroUsize,
    pub max_input_chars: usize,
}

impl Platform {
    pub fn from_config(config: &Config) -> Result<Self, ConfigError> {
        let registry = match &config.registry {
            Some(path) => LabelRegistry::from_tsv(&read(path)?).map_err(|source| ConfigError::Registry {
                path: path.clone(),
                source,
            })?,
            None => LabelRegistry::default(),
        };
        let registry = Arc::new(registry);

        let bundled = Glossary::bundled();
        let readings = match &config.readings {
            Some(path) => {
                let (table, malformed) = ReadingTable::parse(&read(path)?);
                for m in malformed {
                    tracing::warn!(path = %path.display(), line = m.line, "skipping malformed reading");
                }
                table
            }
            None => bundled.readings,
        };
        let cedict = match &config.cedict {
            Some(path) => {
                let parse = parse_cedict(&read(path)?);
                if parse.skipped > 0 {
                    tracing::warn!(path = %path.display(), skipped = parse.skipped, "skipped malformed dictionary lines");
                }
                CedictIndex::new(&parse.entries)
            }
            None => bundled.cedict,
        };
        let glossary = Arc::new(Glossary::new(readings, cedict, UrlTemplate::new(&config.url_template)?));

        let rules = match &config.punct_rules {
            Some(path) => PunctRules::parse(&read(path)?, &registry).map_err(|source| ConfigError::Rules {
                path: path.clone(),
                source,
            })?,
            None => ReferenceBackend::default_rules(&registry).map_err(|source| ConfigError::Rules {
                path: "<bundled>".into(),
                source,
            })?,
        };
        let gazetteer = match &config.gazetteer {
            Some(path) => Gazetteer::parse(&read(path)?).map_err(|source| ConfigError::Rules {
                path: path.clone(),
                source,
            })?,
            None => ReferenceBackend::default_gazetteer(),
        };

        let mut backends = BackendSet::new(config.default_backend.clone());
        for descriptor in &config.backends {
            descriptor.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            match descriptor.kind {
                BackendKind::Reference => backends.insert(Arc::new(ReferenceBackend::new(
                    descriptor.clone(),
                    rules.clone(),
                    gazetteer.clone(),
                    glossary.clone(),
                ))),
                BackendKind::Remote => backends.insert(Arc::new(
                    RemoteBackend::new(descriptor.clone(), registry.clone(), config.max_in_flight)
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                )),
            }
        }
        if backends.get(None).is_none() {
            return Err(ConfigError::Invalid(format!(
                "default backend `{}` is not defined",
                config.default_backend
            )));
        }
        let chunk_chars = NonZeroUsize::new(config.chunk_chars)
            .ok_or_else(|| ConfigError::Invalid("chunk_chars must be positive".into()))?;
        if config.max_input_chars == 0 {
            return Err(ConfigError::Invalid("max_input_chars must be positive".into()));
        }
        Ok(Platform {
            registry,
            glossary,
            backends,
            window: config.window,
            chunk_chars,
            max_input_chars: config.max_input_chars,
        })
    }

    /// Bundled tables and the reference backend only.
    pub fn bundled() -> Self {
        Platform::from_config(&Config::default()).expect("default configuration is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build() {
        let p = Platform::bundled();
        assert_eq!(p.backends.default_name(), "reference");
        assert_eq!(p.max_input_chars, 20_000);
        assert_eq!(p.window, WindowPlan::new(384, 256).unwrap());
        assert_eq!(p.chunk_chars.get(), 384);
    }

    #[test]
    fn file_paths_resolve_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("rules.tsv"), "也\tPeriod\n").unwrap();
        let cfg_path = dir.path().join("hanja.toml");
        std::fs::write(
            &cfg_path,
            "bind = \"127.0.0.1:0\"\npunct_rules = \"rules.tsv\"\n[window]\nwindow_size = 10\nstride = 5\n",
        )
        .unwrap();
        let config = Config::load(&cfg_path).unwrap();
        assert_eq!(config.punct_rules.as_deref(), Some(dir.path().join("rules.tsv").as_path()));
        assert_eq!(config.window, WindowPlan::new(10, 5).unwrap());
        Platform::from_config(&config).unwrap();
    }

    #[test]
    fn bad_inputs_are_reported() {
        let config = Config {
            registry: Some("/nonexistent/labels.tsv".into()),
            ..Config::default()
        };
        assert!(matches!(Platform::from_config(&config), Err(ConfigError::Read { .. })));

        let config = Config {
            url_template: "https://dict/".into(),
            ..Config::default()
        };
        assert!(matches!(Platform::from_config(&config), Err(ConfigError::Glossary(_))));

        let config = Config {
            default_backend: "gpu".into(),
            ..Config::default()
        };
        assert!(matches!(Platform::from_config(&config), Err(ConfigError::Invalid(_))));

        assert!(toml::from_str::<Config>("bogus_key = 1").is_err());
        assert!(toml::from_str::<Config>("[window]\nwindow_size = 2\nstride = 3\n").is_err());
    }

    #[test]
    fn example_config_loads() {
        let example = include_str!("../../../hanja.example.toml");
        let config: Config = toml::from_str(example).unwrap();
        assert_eq!(config.bind, "127.0.0.1:8080");
        assert_eq!(config.backends, Config::default().backends);
        Platform::from_config(&config).unwrap();

        // uncomment the remote backend block at the end
        let (head, tail) = example.split_at(example.find("# [[backends]]").unwrap());
        let remote = format!("{head}{}", tail.replace("# ", ""));
        let config: Config = toml::from_str(&remote).unwrap();
        assert_eq!(config.backends.len(), 2);
        assert_eq!(config.backends[1].endpoint.as_deref(), Some("http://127.0.0.1:9000/"));
        Platform::from_config(&config).unwrap();
    }

    #[test]
    fn env_overrides() {
        let mut config = Config::default();
        config
            .apply_env([
                ("HANJA_BIND".to_string(), "0.0.0.0:9000".to_string()),
                ("HANJA_MAX_INPUT_CHARS".to_string(), "50".to_string()),
                ("PATH".to_string(), "/bin".to_string()),
            ])
            .unwrap();
        assert_eq!(config.bind, "0.0.0.0:9000");
        assert_eq!(config.max_input_chars, 50);
        assert!(config
            .apply_env([("HANJA_SESSION_DAYS".to_string(), "soon".to_string())])
            .is_err());
    }
}
