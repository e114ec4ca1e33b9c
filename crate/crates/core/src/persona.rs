//! Shared domain types: demographic schemes, trait values and
//! distributions, backstories, virtual personas, survey questions, and
//! response matrices.
//!
//! All types are immutable value objects after construction and safe to
//! share across threads. Storage always uses canonical option indices;
//! presentation-time reversal and shuffling live in the survey runner.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for probability vectors summing to one.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

/// Whether a variable's options form an ordered scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Ordinal,
    Nominal,
}

/// One demographic survey variable with its canonical option list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicVariable {
    /// Short stable identifier, e.g. "age".
    pub id: String,
    /// Full survey wording of the question.
    pub question_text: String,
    /// Ordered option labels; indices into this list are canonical.
    pub options: Vec<String>,
    pub kind: VariableKind,
    /// True only for variables whose value may be read off a backstory
    /// directly (age, income, education).
    pub extraction_eligible: bool,
    /// Sentence template for biography-style preambles; `{}` is replaced
    /// by the option label. Defaults to "My `<id>` is `<label>`.".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bio_template: Option<String>,
}

impl DemographicVariable {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Schema {
                detail: "variable id must be non-empty".into(),
            });
        }
        if self.options.len() < 2 {
            return Err(Error::Schema {
                detail: format!("variable '{}' needs at least 2 options", self.id),
            });
        }
        // Letter labels (A)..(Z) cap the option count.
        if self.options.len() > 26 {
            return Err(Error::Schema {
                detail: format!("variable '{}' has more than 26 options", self.id),
            });
        }
        let mut seen = BTreeSet::new();
        for opt in &self.options {
            if opt.trim().is_empty() {
                return Err(Error::Schema {
                    detail: format!("variable '{}' has an empty option label", self.id),
                });
            }
            if !seen.insert(opt.as_str()) {
                return Err(Error::Schema {
                    detail: format!("variable '{}' has duplicate option {:?}", self.id, opt),
                });
            }
        }
        Ok(())
    }

    /// Biography-style sentence for one option of this variable.
    pub fn bio_sentence(&self, label: &str) -> String {
        match &self.bio_template {
            Some(template) => template.replace("{}", label),
            None => format!("My {} is {}.", self.id.replace('_', " "), label),
        }
    }
}

/// The ordered set of demographic variables targeted by one wave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicScheme {
    pub wave_tag: String,
    pub variables: Vec<DemographicVariable>,
}

impl DemographicScheme {
    pub fn validate(&self) -> Result<()> {
        if self.variables.is_empty() {
            return Err(Error::Schema {
                detail: "scheme needs at least one variable".into(),
            });
        }
        let mut ids = BTreeSet::new();
        for var in &self.variables {
            var.validate()?;
            if !ids.insert(var.id.as_str()) {
                return Err(Error::Schema {
                    detail: format!("duplicate variable id '{}'", var.id),
                });
            }
        }
        Ok(())
    }

    /// Number of demographic variables.
    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variable(&self, id: &str) -> Result<&DemographicVariable> {
        self.variables
            .iter()
            .find(|v| v.id == id)
            .ok_or_else(|| Error::UnknownVariable { id: id.to_string() })
    }

    pub fn variable_index(&self, id: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.id == id)
            .ok_or_else(|| Error::UnknownVariable { id: id.to_string() })
    }
}

/// A concrete value of one demographic variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitValue {
    pub variable_id: String,
    pub option_index: usize,
}

impl TraitValue {
    pub fn new(variable_id: impl Into<String>, option_index: usize) -> Self {
        Self {
            variable_id: variable_id.into(),
            option_index,
        }
    }

    pub fn validate(&self, scheme: &DemographicScheme) -> Result<()> {
        let var = scheme.variable(&self.variable_id)?;
        if self.option_index >= var.options.len() {
            return Err(Error::Schema {
                detail: format!(
                    "trait index {} out of range for variable '{}' ({} options)",
                    self.option_index,
                    self.variable_id,
                    var.options.len()
                ),
            });
        }
        Ok(())
    }
}

/// Check that `traits` carries exactly one value per scheme variable.
pub fn validate_trait_tuple(traits: &[TraitValue], scheme: &DemographicScheme) -> Result<()> {
    if traits.len() != scheme.len() {
        return Err(Error::Schema {
            detail: format!(
                "trait tuple has {} entries, scheme has {} variables",
                traits.len(),
                scheme.len()
            ),
        });
    }
    let mut seen = BTreeSet::new();
    for t in traits {
        t.validate(scheme)?;
        if !seen.insert(t.variable_id.as_str()) {
            return Err(Error::Schema {
                detail: format!("duplicate trait for variable '{}'", t.variable_id),
            });
        }
    }
    Ok(())
}

/// Find the trait for a variable within a tuple.
pub fn trait_for<'a>(traits: &'a [TraitValue], variable_id: &str) -> Result<&'a TraitValue> {
    traits
        .iter()
        .find(|t| t.variable_id == variable_id)
        .ok_or_else(|| Error::UnknownVariable {
            id: variable_id.to_string(),
        })
}

/// A surveyed human with deterministic traits and recorded answers.
///
/// `answers` maps question id to a canonical option index; `None` marks
/// a refusal or otherwise missing answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanRespondent {
    pub id: String,
    pub traits: Vec<TraitValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<BTreeMap<String, Option<usize>>>,
}

impl HumanRespondent {
    pub fn validate(&self, scheme: &DemographicScheme) -> Result<()> {
        validate_trait_tuple(&self.traits, scheme)
    }
}

/// How a trait distribution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionSource {
    /// Estimated from repeated sampled answers.
    Sampled,
    /// Read directly off the backstory; always one-hot.
    Extracted,
}

/// Probability distribution over one variable's options for a persona.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitDistribution {
    pub variable_id: String,
    pub probs: Vec<f64>,
    pub source: DistributionSource,
}

impl TraitDistribution {
    /// Build a validated distribution.
    pub fn new(
        variable_id: impl Into<String>,
        probs: Vec<f64>,
        source: DistributionSource,
    ) -> Result<Self> {
        let dist = Self {
            variable_id: variable_id.into(),
            probs,
            source,
        };
        dist.validate()?;
        Ok(dist)
    }

    /// One-hot distribution for an extracted trait.
    pub fn one_hot(variable_id: impl Into<String>, option_index: usize, len: usize) -> Result<Self> {
        if option_index >= len {
            return Err(Error::InvalidDistribution {
                detail: format!("one-hot index {option_index} out of range {len}"),
            });
        }
        let mut probs = vec![0.0; len];
        probs[option_index] = 1.0;
        Self::new(variable_id, probs, DistributionSource::Extracted)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::InvalidDistribution {
                detail: "empty probability vector".into(),
            });
        }
        if self.probs.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidDistribution {
                detail: format!("negative or non-finite entry in {:?}", self.probs),
            });
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::InvalidDistribution {
                detail: format!("probabilities sum to {sum}, expected 1"),
            });
        }
        if self.source == DistributionSource::Extracted {
            let ones = self.probs.iter().filter(|p| **p == 1.0).count();
            let zeros = self.probs.iter().filter(|p| **p == 0.0).count();
            if ones != 1 || zeros != self.probs.len() - 1 {
                return Err(Error::InvalidDistribution {
                    detail: "extracted distributions must be one-hot".into(),
                });
            }
        }
        Ok(())
    }
}

/// Normalize raw per-option sample counts into a trait distribution.
///
/// Errors with [`Error::AllZeroCounts`] when every sample failed to
/// parse (no support).
pub fn normalize_distribution(variable_id: &str, counts: &[u64]) -> Result<TraitDistribution> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::AllZeroCounts {
            variable: variable_id.to_string(),
        });
    }
    let probs = counts.iter().map(|c| *c as f64 / total as f64).collect();
    TraitDistribution::new(variable_id, probs, DistributionSource::Sampled)
}

/// How a backstory was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Open-ended generation with no presupposed persona.
    Natural,
    /// Generated to be consistent with a prescribed trait tuple.
    DemographicsPrimed {
        traits: Vec<TraitValue>,
        style: PreambleStyle,
    },
}

/// Decoding settings recorded with every generated backstory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub prompt_template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A first-person life narrative used as a conditioning prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backstory {
    pub id: String,
    pub text: String,
    pub provenance: Provenance,
    pub generation_meta: GenerationMeta,
}

impl Backstory {
    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Schema {
                detail: format!("backstory '{}' has empty text", self.id),
            });
        }
        Ok(())
    }
}

/// Style of the rendered demographic preamble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreambleStyle {
    /// Multiple-choice question/answer blocks, one per variable.
    QuestionAnswer,
    /// One templated free-text sentence per variable.
    Biography,
}

/// Bookkeeping recorded while profiling a persona.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ProfileMeta {
    /// Samples drawn per demographic question.
    pub samples_per_question: u32,
    /// Seed of the profiling RNG stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Per-variable count of samples that failed to parse.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parse_failures: BTreeMap<String, u32>,
}

/// A backstory plus its estimated demographic trait distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualPersona {
    pub backstory_id: String,
    pub distributions: Vec<TraitDistribution>,
    /// Set after matching: the matched human's trait tuple.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assigned_traits: Option<Vec<TraitValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_meta: Option<ProfileMeta>,
}

impl VirtualPersona {
    pub fn validate(&self, scheme: &DemographicScheme) -> Result<()> {
        if self.distributions.len() != scheme.len() {
            return Err(Error::Schema {
                detail: format!(
                    "persona '{}' has {} distributions, scheme has {} variables",
                    self.backstory_id,
                    self.distributions.len(),
                    scheme.len()
                ),
            });
        }
        let mut seen = BTreeSet::new();
        for dist in &self.distributions {
            dist.validate()?;
            let var = scheme.variable(&dist.variable_id)?;
            if dist.probs.len() != var.options.len() {
                return Err(Error::Schema {
                    detail: format!(
                        "distribution for '{}' has {} entries, variable has {} options",
                        dist.variable_id,
                        dist.probs.len(),
                        var.options.len()
                    ),
                });
            }
            if !seen.insert(dist.variable_id.as_str()) {
                return Err(Error::Schema {
                    detail: format!("duplicate distribution for '{}'", dist.variable_id),
                });
            }
        }
        if let Some(traits) = &self.assigned_traits {
            validate_trait_tuple(traits, scheme)?;
        }
        Ok(())
    }

    pub fn distribution(&self, variable_id: &str) -> Result<&TraitDistribution> {
        self.distributions
            .iter()
            .find(|d| d.variable_id == variable_id)
            .ok_or_else(|| Error::UnknownVariable {
                id: variable_id.to_string(),
            })
    }
}

/// Likelihood that the persona holds the given trait: `P(d_l = t_l)`.
pub fn trait_likelihood(persona: &VirtualPersona, trait_value: &TraitValue) -> Result<f64> {
    let dist = persona.distribution(&trait_value.variable_id)?;
    let p = dist
        .probs
        .get(trait_value.option_index)
        .copied()
        .ok_or_else(|| Error::Schema {
            detail: format!(
                "trait index {} out of range for '{}'",
                trait_value.option_index, trait_value.variable_id
            ),
        })?;
    Ok(p)
}

/// Presentation behavior of a survey question's option list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionScale {
    /// Ordered scale; presentation may reverse the full order.
    LikertReversible,
    /// Unordered options; presentation may shuffle freely.
    NominalShufflable,
}

/// One multiple-choice survey question.
///
/// `options` is the canonical order; for Likert questions this is the
/// fixed positive-to-negative order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyQuestion {
    pub id: String,
    pub text: String,
    pub options: Vec<String>,
    pub scale: QuestionScale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preamble: Option<String>,
}

impl SurveyQuestion {
    pub fn validate(&self) -> Result<()> {
        if self.options.len() < 2 {
            return Err(Error::Schema {
                detail: format!("question '{}' needs at least 2 options", self.id),
            });
        }
        if self.options.len() > 26 {
            return Err(Error::Schema {
                detail: format!("question '{}' has more than 26 options", self.id),
            });
        }
        let mut seen = BTreeSet::new();
        for opt in &self.options {
            if !seen.insert(opt.as_str()) {
                return Err(Error::Schema {
                    detail: format!("question '{}' has duplicate option {:?}", self.id, opt),
                });
            }
        }
        Ok(())
    }
}

/// An ordered questionnaire administered in series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Survey {
    pub wave_tag: String,
    pub questions: Vec<SurveyQuestion>,
}

impl Survey {
    pub fn validate(&self) -> Result<()> {
        if self.questions.is_empty() {
            return Err(Error::Schema {
                detail: "survey has no questions".into(),
            });
        }
        let mut ids = BTreeSet::new();
        for q in &self.questions {
            q.validate()?;
            if !ids.insert(q.id.as_str()) {
                return Err(Error::Schema {
                    detail: format!("duplicate question id '{}'", q.id),
                });
            }
        }
        Ok(())
    }

    pub fn question(&self, id: &str) -> Result<&SurveyQuestion> {
        self.questions
            .iter()
            .find(|q| q.id == id)
            .ok_or_else(|| Error::Schema {
                detail: format!("unknown question id '{id}'"),
            })
    }
}

/// N respondents by Q questions of canonical option indices.
///
/// `None` cells mark missing answers; a missing answer is never an
/// in-range index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    pub respondent_ids: Vec<String>,
    pub question_ids: Vec<String>,
    pub cells: Vec<Vec<Option<usize>>>,
}

impl ResponseMatrix {
    pub fn new(
        respondent_ids: Vec<String>,
        question_ids: Vec<String>,
        cells: Vec<Vec<Option<usize>>>,
    ) -> Result<Self> {
        let matrix = Self {
            respondent_ids,
            question_ids,
            cells,
        };
        matrix.validate_shape()?;
        Ok(matrix)
    }

    pub fn n_respondents(&self) -> usize {
        self.respondent_ids.len()
    }

    pub fn n_questions(&self) -> usize {
        self.question_ids.len()
    }

    fn validate_shape(&self) -> Result<()> {
        if self.respondent_ids.is_empty() || self.question_ids.is_empty() {
            return Err(Error::Schema {
                detail: "response matrix must have at least one row and column".into(),
            });
        }
        if self.cells.len() != self.respondent_ids.len() {
            return Err(Error::ShapeMismatch {
                detail: format!(
                    "{} rows but {} respondent ids",
                    self.cells.len(),
                    self.respondent_ids.len()
                ),
            });
        }
        for row in &self.cells {
            if row.len() != self.question_ids.len() {
                return Err(Error::ShapeMismatch {
                    detail: format!(
                        "row has {} cells but {} question ids",
                        row.len(),
                        self.question_ids.len()
                    ),
                });
            }
        }
        Ok(())
    }

    /// Validate cell ranges against the survey's option lists.
    pub fn validate_against(&self, survey: &Survey) -> Result<()> {
        self.validate_shape()?;
        for (qi, qid) in self.question_ids.iter().enumerate() {
            let question = survey.question(qid)?;
            for row in &self.cells {
                if let Some(idx) = row[qi] {
                    if idx >= question.options.len() {
                        return Err(Error::Schema {
                            detail: format!(
                                "cell index {idx} out of range for question '{qid}'"
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn question_index(&self, question_id: &str) -> Result<usize> {
        self.question_ids
            .iter()
            .position(|q| q == question_id)
            .ok_or_else(|| Error::QuestionSetMismatch {
                missing: vec![question_id.to_string()],
            })
    }

    /// Column of answers for one question, in respondent order.
    pub fn column(&self, question_index: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        self.cells.iter().map(move |row| row[question_index])
    }

    /// Restrict to a subset of rows (respondent indices), keeping order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<ResponseMatrix> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut cells = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.cells.len() {
                return Err(Error::ShapeMismatch {
                    detail: format!("row index {r} out of range"),
                });
            }
            ids.push(self.respondent_ids[r].clone());
            cells.push(self.cells[r].clone());
        }
        ResponseMatrix::new(ids, self.question_ids.clone(), cells)
    }
}
