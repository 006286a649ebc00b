//! Line-oriented key=value config files with [section] headers. Unknown
//! sections or keys are rejected with their path; command-line flags
//! override file values; the resolved result is echoed into the run
//! directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum ConfigError {
    Parse { path: String, message: String },
    UnknownKey { path: String },
    BadValue { path: String, message: String },
    Io(std::io::Error),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { path, message } => write!(f, "config {path}: {message}"),
            ConfigError::UnknownKey { path } => write!(f, "config: unknown key {path}"),
            ConfigError::BadValue { path, message } => {
                write!(f, "config {path}: {message}")
            }
            ConfigError::Io(e) => write!(f, "config io: {e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Known keys per section; anything else is rejected.
const SCHEMA: &[(&str, &[&str])] = &[
    (
        "synth",
        &[
            "n", "length", "rate", "leads", "noise", "class_effect", "class_lead", "class_wave",
            "balance", "hr_low", "hr_high", "groups", "seed",
        ],
    ),
    (
        "pretrain",
        &[
            "data", "epochs", "batch_size", "lr", "weight_decay", "latent_dim", "gamma",
            "lambda", "seed", "val_fraction", "chunk_size", "preprocess",
        ],
    ),
    (
        "finetune",
        &[
            "checkpoint", "data", "labels", "leads", "epochs", "batch_size", "lr",
            "weight_decay", "fc_size", "dropout", "folds", "seed", "unfreeze_gate",
            "chunk_size", "preprocess",
        ],
    ),
    (
        "evaluate",
        &["checkpoint", "data", "labels", "by_group", "preprocess"],
    ),
    (
        "interpret",
        &[
            "checkpoint", "data", "tau", "steps", "dump", "max_records", "preprocess",
        ],
    ),
    ("export-latents", &["checkpoint", "data", "preprocess"]),
];

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<(String, String), String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<ConfigFile, ConfigError> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                if !SCHEMA.iter().any(|(s, _)| *s == section) {
                    return Err(ConfigError::UnknownKey {
                        path: section.clone(),
                    });
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Parse {
                    path: format!("{origin}:{}", lineno + 1),
                    message: format!("expected key=value, got {line:?}"),
                });
            };
            let key = key.trim().to_string();
            if section.is_empty() {
                return Err(ConfigError::Parse {
                    path: format!("{origin}:{}", lineno + 1),
                    message: "key before any [section]".into(),
                });
            }
            let known = SCHEMA
                .iter()
                .find(|(s, _)| *s == section)
                .map(|(_, keys)| keys.contains(&key.as_str()))
                .unwrap_or(false);
            if !known {
                return Err(ConfigError::UnknownKey {
                    path: format!("{section}.{key}"),
                });
            }
            values.insert((section.clone(), key), value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(|s| s.as_str())
    }
}

/// One resolved value with provenance tracking for the echo file.
pub struct Resolved {
    section: String,
    entries: Vec<(String, String)>,
}

impl Resolved {
    pub fn new(section: &str) -> Resolved {
        Resolved {
            section: section.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn record(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// The effective config, echoed verbatim into the run directory.
    pub fn to_text(&self) -> String {
        let mut out = format!("[{}]\n", self.section);
        for (k, v) in &self.entries {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

/// file value (if any) parsed, else the default; flag wins over both.
pub fn resolve<T: std::str::FromStr>(
    file: &ConfigFile,
    section: &str,
    key: &str,
    flag: Option<T>,
    default: T,
) -> Result<T, ConfigError> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(section, key) {
        None => Ok(default),
        Some(raw) => raw.parse::<T>().map_err(|_| ConfigError::BadValue {
            path: format!("{section}.{key}"),
            message: format!("cannot parse {raw:?}"),
        }),
    }
}

pub fn resolve_opt<T: std::str::FromStr>(
    file: &ConfigFile,
    section: &str,
    key: &str,
    flag: Option<T>,
) -> Result<Option<T>, ConfigError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get(section, key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| ConfigError::BadValue {
                path: format!("{section}.{key}"),
                message: format!("cannot parse {raw:?}"),
            }),
    }
}
