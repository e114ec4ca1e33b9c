//! Pipeline configuration: one TOML file per experiment with
//! environment-variable interpolation, relative paths resolved against
//! the config file location, and per-stage provider selection.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matching::MatchMethod;
use crate::persona::PreambleStyle;
use crate::provider::{
    HttpProvider, MockProvider, Provider, ProviderConfig, ProviderMode, RetryPolicy,
};
use crate::survey::ConditioningMethod;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Seeds {
    pub master: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    /// Natural backstories to generate when no anthology is supplied.
    pub count: usize,
    pub min_chars: usize,
    pub max_retry_rounds: u32,
    pub max_tokens: u32,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            count: 0,
            min_chars: 200,
            max_retry_rounds: 3,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    pub samples_per_question: u32,
    pub extraction: bool,
    pub numeric_range_parse: bool,
    pub max_tokens: u32,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            samples_per_question: 40,
            extraction: true,
            numeric_range_parse: false,
            max_tokens: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchingConfig {
    pub method: MatchMethod,
    /// Optional per-factor probability floor for edge weights.
    pub weight_floor: Option<f64>,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self {
            method: MatchMethod::Greedy,
            weight_floor: None,
        }
    }
}

/// Conditioning method as named in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Bio,
    Qa,
    AnthologyNatural,
    AnthologyDp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurveyRunConfig {
    pub method: MethodName,
    pub preamble_style: PreambleStyle,
    pub retries: u32,
    pub max_tokens: u32,
}

impl Default for SurveyRunConfig {
    fn default() -> Self {
        Self {
            method: MethodName::AnthologyNatural,
            preamble_style: PreambleStyle::QuestionAnswer,
            retries: 2,
            max_tokens: 32,
        }
    }
}

impl SurveyRunConfig {
    pub fn conditioning_method(&self) -> ConditioningMethod {
        match self.method {
            MethodName::Bio => ConditioningMethod::Bio,
            MethodName::Qa => ConditioningMethod::Qa,
            MethodName::AnthologyNatural => ConditioningMethod::AnthologyNatural {
                style: self.preamble_style,
            },
            MethodName::AnthologyDp => ConditioningMethod::AnthologyDp {
                style: self.preamble_style,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EvaluateConfig {
    /// Evaluate subgroups split by this variable, one group per
    /// observed option.
    pub subgroup_variable: Option<String>,
    /// Also run the split-half lower bound and attach it to the report.
    pub lower_bound_iterations: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    Http,
}

/// One provider entry in the config; `default` is required and stage
/// names (`generate`, `profile`, `extract`, `survey`) override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default)]
    pub mode: Option<ProviderMode>,
    #[serde(default)]
    pub max_concurrent_requests: Option<usize>,
    #[serde(default)]
    pub max_retries: Option<u32>,
    #[serde(default)]
    pub backoff_base_ms: Option<u64>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl ProviderSpec {
    fn build(&self) -> Result<Box<dyn Provider>> {
        match self.kind {
            ProviderKind::Mock => {
                let fixture = self.fixture.as_ref().ok_or_else(|| Error::InvalidConfig {
                    detail: "mock provider requires a fixture path".into(),
                })?;
                Ok(Box::new(MockProvider::from_fixture(fixture)?))
            }
            ProviderKind::Http => {
                let config = ProviderConfig {
                    base_url: self.base_url.clone().ok_or_else(|| Error::InvalidConfig {
                        detail: "http provider requires base_url".into(),
                    })?,
                    api_key_env: self.api_key_env.clone(),
                    model_id: self.model_id.clone().ok_or_else(|| Error::InvalidConfig {
                        detail: "http provider requires model_id".into(),
                    })?,
                    mode: self.mode.unwrap_or(ProviderMode::Completion),
                    max_concurrent_requests: self.max_concurrent_requests.unwrap_or(4),
                    retry: RetryPolicy {
                        max_retries: self.max_retries.unwrap_or(2),
                        backoff_base_ms: self.backoff_base_ms.unwrap_or(250),
                    },
                    cache_dir: self.cache_dir.clone(),
                };
                Ok(Box::new(HttpProvider::new(config)?))
            }
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let Some(fixture) = &self.fixture {
            *self.fixture.as_mut().unwrap() = resolve(base, fixture);
        }
        if let Some(dir) = &self.cache_dir {
            *self.cache_dir.as_mut().unwrap() = resolve(base, dir);
        }
    }
}

/// Full experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Label recorded in artifacts (e.g. the wave tag).
    pub wave: String,
    pub scheme: PathBuf,
    pub survey: PathBuf,
    pub respondents: PathBuf,
    /// Pre-generated anthology to load instead of generating.
    #[serde(default)]
    pub anthology: Option<PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub generate: GenerateConfig,
    #[serde(default)]
    pub profile: ProfileConfig,
    #[serde(default)]
    pub matching: MatchingConfig,
    #[serde(default)]
    pub survey_run: SurveyRunConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    pub providers: BTreeMap<String, ProviderSpec>,
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Expand `${VAR}` references from the environment; unset variables are
/// configuration errors.
pub fn expand_env_vars(raw: &str) -> Result<String> {
    let re = regex::Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("static regex");
    let mut out = String::with_capacity(raw.len());
    let mut last = 0;
    for caps in re.captures_iter(raw) {
        let whole = caps.get(0).expect("match");
        let name = &caps[1];
        out.push_str(&raw[last..whole.start()]);
        match std::env::var(name) {
            Ok(value) => out.push_str(&value),
            Err(_) => {
                return Err(Error::InvalidConfig {
                    detail: format!("environment variable '{name}' is not set"),
                })
            }
        }
        last = whole.end();
    }
    out.push_str(&raw[last..]);
    Ok(out)
}

impl PipelineConfig {
    /// Load a TOML config, expanding `${VAR}` references and resolving
    /// relative paths against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let expanded = expand_env_vars(&raw)?;
        let mut config: PipelineConfig =
            toml::from_str(&expanded).map_err(|e| Error::InvalidConfig {
                detail: format!("{}: {e}", path.display()),
            })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        self.scheme = resolve(base, &self.scheme);
        self.survey = resolve(base, &self.survey);
        self.respondents = resolve(base, &self.respondents);
        if let Some(anthology) = &self.anthology {
            self.anthology = Some(resolve(base, anthology));
        }
        if let Some(out_dir) = &self.out_dir {
            self.out_dir = Some(resolve(base, out_dir));
        }
        for spec in self.providers.values_mut() {
            spec.resolve_paths(base);
        }
    }

    /// Check referenced files and provider entries up front.
    pub fn validate(&self) -> Result<()> {
        for (name, path) in [
            ("scheme", &self.scheme),
            ("survey", &self.survey),
            ("respondents", &self.respondents),
        ] {
            if !path.is_file() {
                return Err(Error::InvalidConfig {
                    detail: format!("{name} file not found: {}", path.display()),
                });
            }
        }
        if let Some(anthology) = &self.anthology {
            if !anthology.is_file() {
                return Err(Error::InvalidConfig {
                    detail: format!("anthology file not found: {}", anthology.display()),
                });
            }
        }
        if let Some(floor) = self.matching.weight_floor {
            if !(floor > 0.0 && floor < 1.0) {
                return Err(Error::InvalidConfig {
                    detail: format!("matching.weight_floor must lie in (0, 1), got {floor}"),
                });
            }
        }
        if self.profile.samples_per_question < 1 {
            return Err(Error::InvalidConfig {
                detail: "profile.samples_per_question must be >= 1".into(),
            });
        }
        if !self.providers.contains_key("default") {
            return Err(Error::InvalidConfig {
                detail: "providers.default is required".into(),
            });
        }
        for (stage, spec) in &self.providers {
            if spec.kind == ProviderKind::Mock {
                let fixture = spec.fixture.as_ref().ok_or_else(|| Error::InvalidConfig {
                    detail: format!("providers.{stage}: mock requires a fixture path"),
                })?;
                if !fixture.is_file() {
                    return Err(Error::InvalidConfig {
                        detail: format!(
                            "providers.{stage}: fixture not found: {}",
                            fixture.display()
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Provider spec for a stage, falling back to `default`.
    pub fn provider_spec(&self, stage: &str) -> Result<&ProviderSpec> {
        self.providers
            .get(stage)
            .or_else(|| self.providers.get("default"))
            .ok_or_else(|| Error::InvalidConfig {
                detail: "providers.default is required".into(),
            })
    }

    /// Build the provider for a stage.
    pub fn provider_for(&self, stage: &str) -> Result<Box<dyn Provider>> {
        self.provider_spec(stage)?.build()
    }

    /// Canonical content digest of this configuration.
    ///
    /// Excludes `out_dir`: where artifacts land does not change what
    /// they contain, and equal-seed runs into different directories
    /// must stay byte-identical.
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("out_dir");
        }
        let mut hasher = Sha256::new();
        hasher.update(value.to_string().as_bytes());
        hex::encode(hasher.finalize())
    }
}
