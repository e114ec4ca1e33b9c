//! Deterministic scripted provider for tests and offline runs.
//!
//! A fixture is an ordered list of rules. Lookup tries exact-prompt
//! rules first (in file order), then regex rules in file order. A rule
//! either carries a fixed response list, consumed sequentially across
//! calls (cycling at the end), or a weighted response distribution
//! sampled with a seed derived from the request, which makes weighted
//! draws a pure function of the request and reproducible across runs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::Deserialize;

use super::{apply_stop_sequences, CompletionRequest, Provider, ProviderMode};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};

/// Seed of the categorical sampler used for a weighted rule: a blend of
/// the base seed (request seed, else fixture seed) and the request's
/// cache key. Public so tests can replay draws independently.
pub fn weighted_draw_seed(base_seed: u64, cache_key: &str) -> u64 {
    derive_seed(base_seed, cache_key)
}

#[derive(Debug, Deserialize)]
struct FixtureFile {
    #[serde(default)]
    model_id: Option<String>,
    #[serde(default)]
    mode: Option<ProviderMode>,
    #[serde(default)]
    seed: Option<u64>,
    rules: Vec<RuleFile>,
}

#[derive(Debug, Deserialize)]
struct RuleFile {
    #[serde(rename = "match")]
    matcher: MatcherFile,
    #[serde(default)]
    responses: Option<Vec<String>>,
    #[serde(default)]
    weighted: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Deserialize)]
struct MatcherFile {
    #[serde(default)]
    exact: Option<String>,
    #[serde(default)]
    regex: Option<String>,
}

enum Matcher {
    Exact(String),
    Regex(regex::Regex),
}

enum Responder {
    /// Fixed list with a call cursor; cycles past the end.
    Sequence {
        responses: Vec<String>,
        cursor: Mutex<usize>,
    },
    /// Categorical distribution over responses, keyed on the request.
    Weighted {
        responses: Vec<String>,
        index: WeightedIndex<f64>,
    },
}

struct Rule {
    matcher: Matcher,
    responder: Responder,
}

pub struct MockProvider {
    model_id: String,
    mode: ProviderMode,
    seed: u64,
    rules: Vec<Rule>,
}

impl MockProvider {
    /// Load a provider from a fixture file.
    pub fn from_fixture(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::FixtureParse {
            detail: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: FixtureFile = serde_json::from_str(json).map_err(|e| Error::FixtureParse {
            detail: e.to_string(),
        })?;
        let mut rules = Vec::with_capacity(file.rules.len());
        for (i, rule) in file.rules.into_iter().enumerate() {
            let matcher = match (rule.matcher.exact, rule.matcher.regex) {
                (Some(exact), None) => Matcher::Exact(exact),
                (None, Some(pattern)) => {
                    let re = regex::RegexBuilder::new(&pattern)
                        .dot_matches_new_line(true)
                        .build()
                        .map_err(|e| Error::FixtureParse {
                            detail: format!("rule {i}: bad regex: {e}"),
                        })?;
                    Matcher::Regex(re)
                }
                _ => {
                    return Err(Error::FixtureParse {
                        detail: format!("rule {i}: need exactly one of match.exact / match.regex"),
                    })
                }
            };
            let responder = match (rule.responses, rule.weighted) {
                (Some(responses), None) => {
                    if responses.is_empty() {
                        return Err(Error::FixtureParse {
                            detail: format!("rule {i}: empty response list"),
                        });
                    }
                    Responder::Sequence {
                        responses,
                        cursor: Mutex::new(0),
                    }
                }
                (None, Some(weighted)) => {
                    if weighted.is_empty() {
                        return Err(Error::FixtureParse {
                            detail: format!("rule {i}: empty weighted map"),
                        });
                    }
                    // BTreeMap iteration gives a stable (sorted) order.
                    let responses: Vec<String> = weighted.keys().cloned().collect();
                    let weights: Vec<f64> = weighted.values().copied().collect();
                    let index = WeightedIndex::new(&weights).map_err(|e| Error::FixtureParse {
                        detail: format!("rule {i}: bad weights: {e}"),
                    })?;
                    Responder::Weighted { responses, index }
                }
                _ => {
                    return Err(Error::FixtureParse {
                        detail: format!("rule {i}: need exactly one of responses / weighted"),
                    })
                }
            };
            rules.push(Rule { matcher, responder });
        }
        Ok(Self {
            model_id: file.model_id.unwrap_or_else(|| "mock".into()),
            mode: file.mode.unwrap_or(ProviderMode::Completion),
            seed: file.seed.unwrap_or(0),
            rules,
        })
    }

    fn find_rule(&self, text: &str) -> Option<&Rule> {
        self.rules
            .iter()
            .filter(|r| matches!(r.matcher, Matcher::Exact(_)))
            .find(|r| match &r.matcher {
                Matcher::Exact(e) => e == text,
                Matcher::Regex(_) => unreachable!(),
            })
            .or_else(|| {
                self.rules
                    .iter()
                    .filter(|r| matches!(r.matcher, Matcher::Regex(_)))
                    .find(|r| match &r.matcher {
                        Matcher::Regex(re) => re.is_match(text),
                        Matcher::Exact(_) => unreachable!(),
                    })
            })
    }
}

impl Provider for MockProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>> {
        request.params.validate()?;
        let text = request.input.as_text();
        let rule = self.find_rule(&text).ok_or_else(|| {
            let preview: String = text.chars().take(120).collect();
            Error::FixtureMiss { preview }
        })?;
        let n = request.params.n_samples as usize;
        let raw: Vec<String> = match &rule.responder {
            Responder::Sequence { responses, cursor } => {
                let mut cur = cursor.lock().expect("cursor poisoned");
                let out = (0..n)
                    .map(|k| responses[(*cur + k) % responses.len()].clone())
                    .collect();
                *cur = (*cur + n) % responses.len();
                out
            }
            Responder::Weighted { responses, index } => {
                let base = request.params.seed.unwrap_or(self.seed);
                let key = request.cache_key(&self.model_id);
                let mut rng = seeded_rng(weighted_draw_seed(base, &key));
                (0..n).map(|_| responses[index.sample(&mut rng)].clone()).collect()
            }
        };
        Ok(raw
            .into_iter()
            .map(|t| apply_stop_sequences(&t, &request.params.stop_sequences))
            .collect())
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn mode(&self) -> ProviderMode {
        self.mode
    }
}
