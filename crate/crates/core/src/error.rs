//! Crate-wide error type.
//!
//! Every variant carries a stable snake_case code (see [`Error::code`])
//! so the CLI can emit one-line machine-parseable failures.

use thiserror::Error;

/// Errors produced by any stage of the panel pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("every sample for variable '{variable}' failed to parse")]
    AllZeroCounts { variable: String },

    #[error("unknown demographic variable '{id}'")]
    UnknownVariable { id: String },

    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },

    #[error("rate limited by provider after exhausting backoff budget")]
    RateLimited,

    #[error("mock fixture has no rule for prompt: {preview:?}")]
    FixtureMiss { preview: String },

    #[error("mock fixture invalid: {detail}")]
    FixtureParse { detail: String },

    #[error("backstory generation exhausted its retry budget")]
    GenerationExhausted,

    #[error("persona has no assigned or provenance traits for this conditioning method")]
    MissingAssignedTraits,

    #[error("one-to-one matching infeasible: {humans} humans but only {personas} personas")]
    InfeasibleOneToOne { humans: usize, personas: usize },

    #[error("question '{question}' has no non-missing responses")]
    EmptyColumn { question: String },

    #[error("distribution length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("question '{question}' is not ordinal; Wasserstein distance undefined")]
    NotOrdinal { question: String },

    #[error("need at least {need} respondents, got {got}")]
    TooFewRespondents { got: usize, need: usize },

    #[error("matrix shape mismatch: {detail}")]
    ShapeMismatch { detail: String },

    #[error("total-score variance is zero; Cronbach's alpha undefined")]
    ZeroTotalVariance,

    #[error("need at least 2 items for Cronbach's alpha, got {got}")]
    TooFewItems { got: usize },

    #[error("subgroup '{group}' contains no respondents")]
    EmptyGroup { group: String },

    #[error("schema error: {detail}")]
    Schema { detail: String },

    #[error("unknown option label {label:?} for variable '{variable}'")]
    UnknownOptionLabel { variable: String, label: String },

    #[error("question sets do not match; missing: {}", missing.join(", "))]
    QuestionSetMismatch { missing: Vec<String> },

    #[error("invalid distribution: {detail}")]
    InvalidDistribution { detail: String },

    #[error("invalid configuration: {detail}")]
    InvalidConfig { detail: String },

    #[error("precondition violated: {detail}")]
    Precondition { detail: String },

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-parseable code for this error.
    pub fn code(&self) -> &'static str {
        match self {
            Error::AllZeroCounts { .. } => "all_zero_counts",
            Error::UnknownVariable { .. } => "unknown_variable",
            Error::Transport { .. } => "transport",
            Error::RateLimited => "rate_limited",
            Error::FixtureMiss { .. } => "fixture_miss",
            Error::FixtureParse { .. } => "fixture_parse",
            Error::GenerationExhausted => "generation_exhausted",
            Error::MissingAssignedTraits => "missing_assigned_traits",
            Error::InfeasibleOneToOne { .. } => "infeasible_one_to_one",
            Error::EmptyColumn { .. } => "empty_column",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::NotOrdinal { .. } => "not_ordinal",
            Error::TooFewRespondents { .. } => "too_few_respondents",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::ZeroTotalVariance => "zero_total_variance",
            Error::TooFewItems { .. } => "too_few_items",
            Error::EmptyGroup { .. } => "empty_group",
            Error::Schema { .. } => "schema",
            Error::UnknownOptionLabel { .. } => "unknown_option_label",
            Error::QuestionSetMismatch { .. } => "question_set_mismatch",
            Error::InvalidDistribution { .. } => "invalid_distribution",
            Error::InvalidConfig { .. } => "invalid_config",
            Error::Precondition { .. } => "precondition",
            Error::Stage { source, .. } => source.code(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
