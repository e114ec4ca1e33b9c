//! Survey administration: conditioning prefixes for the four methods,
//! presentation-time option randomization, serial questioning with a
//! growing transcript, and answer parsing back into canonical indices.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::backstory::render_demographic_preamble;
use crate::demo_survey::{parse_letter_label, parse_option_text};
use crate::error::{Error, Result};
use crate::persona::{
    Backstory, DemographicScheme, HumanRespondent, PreambleStyle, Provenance, QuestionScale,
    ResponseMatrix, Survey, SurveyQuestion, TraitValue, VirtualPersona,
};
use crate::provider::{input_for_mode, CompletionRequest, Provider, SamplingParams};
use crate::rng::{derive_seed, seeded_rng};

/// Transition line inserted before every question, including the first.
pub const BRIDGE_LINE: &str =
    "Please answer the following question keeping in mind your previous answers.";

/// How a respondent is conditioned before the survey starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMethod {
    /// Rule-based free-text biography of the respondent's traits.
    Bio,
    /// Multiple-choice demographic question-answer pairs.
    Qa,
    /// Matched natural backstory plus the assigned trait block.
    AnthologyNatural { style: PreambleStyle },
    /// Demographics-primed backstory plus its provenance trait block.
    AnthologyDp { style: PreambleStyle },
}

/// One survey respondent: a human answering directly (baselines) or a
/// conditioned persona with its backstory.
///
/// `respondent_id` names the row in the response matrix; matched
/// personas carry their human counterpart's id, since non-injective
/// matchings reuse backstories.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum CohortMember {
    Human(HumanRespondent),
    Persona {
        respondent_id: String,
        persona: VirtualPersona,
        backstory: Backstory,
    },
}

impl CohortMember {
    /// Persona member answering under its backstory id.
    pub fn persona(persona: VirtualPersona, backstory: Backstory) -> Self {
        CohortMember::Persona {
            respondent_id: persona.backstory_id.clone(),
            persona,
            backstory,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            CohortMember::Human(h) => &h.id,
            CohortMember::Persona { respondent_id, .. } => respondent_id,
        }
    }

    fn traits(&self) -> Result<&[TraitValue]> {
        match self {
            CohortMember::Human(h) => Ok(&h.traits),
            CohortMember::Persona { persona, .. } => persona
                .assigned_traits
                .as_deref()
                .ok_or(Error::MissingAssignedTraits),
        }
    }
}

/// A question as actually shown to one respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedQuestion {
    pub question_id: String,
    pub display_text: String,
    /// Options in presentation order.
    pub display_options: Vec<String>,
    /// `index_map[display_position] == canonical option index`; always
    /// a bijection.
    pub index_map: Vec<usize>,
    pub reversed: bool,
    pub shuffled: bool,
}

impl RenderedQuestion {
    /// Display position showing a given canonical option.
    pub fn display_position(&self, canonical: usize) -> Option<usize> {
        self.index_map.iter().position(|&c| c == canonical)
    }
}

fn display_letter(index: usize) -> char {
    (b'a' + index as u8) as char
}

/// Randomize one question's presentation: Likert scales fully reverse
/// with probability 1/2, nominal option lists get a uniform random
/// permutation.
pub fn render_question(question: &SurveyQuestion, rng: &mut ChaCha8Rng) -> RenderedQuestion {
    let m = question.options.len();
    let mut index_map: Vec<usize> = (0..m).collect();
    let mut reversed = false;
    let mut shuffled = false;
    match question.scale {
        QuestionScale::LikertReversible => {
            if rng.random_bool(0.5) {
                index_map.reverse();
                reversed = true;
            }
        }
        QuestionScale::NominalShufflable => {
            index_map.shuffle(rng);
            shuffled = true;
        }
    }
    let display_options = index_map
        .iter()
        .map(|&c| question.options[c].clone())
        .collect();
    let display_text = match &question.preamble {
        Some(preamble) => format!("{preamble}\n{}", question.text),
        None => question.text.clone(),
    };
    RenderedQuestion {
        question_id: question.id.clone(),
        display_text,
        display_options,
        index_map,
        reversed,
        shuffled,
    }
}

/// Prompt block for one rendered question, ending in "Answer:".
pub fn format_question_block(rendered: &RenderedQuestion) -> String {
    let options = rendered
        .display_options
        .iter()
        .enumerate()
        .map(|(i, opt)| format!("({}) {opt}", display_letter(i)))
        .collect::<Vec<_>>()
        .join("\n");
    format!(
        "Question: {}\n\n{}\n\nAnswer:",
        rendered.display_text, options
    )
}

/// Parse a model answer against the displayed options and map it back
/// to a canonical option index. Label rule first, then verbatim option
/// text; `None` means unparseable.
pub fn parse_answer(text: &str, rendered: &RenderedQuestion) -> Option<usize> {
    if let Some(pos) = parse_letter_label(text, rendered.display_options.len()) {
        return Some(rendered.index_map[pos]);
    }
    parse_option_text(text, &rendered.display_options).map(|pos| rendered.index_map[pos])
}

/// Build the conditioning prefix for one cohort member.
///
/// Baselines render the member's trait block alone; anthology methods
/// put the backstory text first, followed by the trait block rendered
/// from assigned traits (natural) or provenance traits (primed).
pub fn build_conditioning_prefix(
    method: ConditioningMethod,
    member: &CohortMember,
    scheme: &DemographicScheme,
    rng: &mut ChaCha8Rng,
) -> Result<String> {
    match method {
        ConditioningMethod::Bio => {
            render_demographic_preamble(member.traits()?, scheme, PreambleStyle::Biography, rng)
        }
        ConditioningMethod::Qa => {
            render_demographic_preamble(member.traits()?, scheme, PreambleStyle::QuestionAnswer, rng)
        }
        ConditioningMethod::AnthologyNatural { style } => match member {
            CohortMember::Human(_) => Err(Error::Precondition {
                detail: "anthology conditioning requires a persona member".into(),
            }),
            CohortMember::Persona {
                persona, backstory, ..
            } => {
                let traits = persona
                    .assigned_traits
                    .as_deref()
                    .ok_or(Error::MissingAssignedTraits)?;
                let preamble = render_demographic_preamble(traits, scheme, style, rng)?;
                Ok(format!("{}\n\n{preamble}", backstory.text.trim_end()))
            }
        },
        ConditioningMethod::AnthologyDp { style } => match member {
            CohortMember::Human(_) => Err(Error::Precondition {
                detail: "anthology conditioning requires a persona member".into(),
            }),
            CohortMember::Persona { backstory, .. } => {
                let traits = match &backstory.provenance {
                    Provenance::DemographicsPrimed { traits, .. } => traits.as_slice(),
                    Provenance::Natural => return Err(Error::MissingAssignedTraits),
                };
                let preamble = render_demographic_preamble(traits, scheme, style, rng)?;
                Ok(format!("{}\n\n{preamble}", backstory.text.trim_end()))
            }
        },
    }
}

/// Full record of one question as asked and answered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionEvent {
    pub rendered: RenderedQuestion,
    /// Raw model text of the accepted attempt, if any attempt parsed.
    pub raw_answer: Option<String>,
    pub canonical: Option<usize>,
}

/// Result of administering the survey to one respondent.
#[derive(Debug, Clone, PartialEq)]
pub struct AdministeredSurvey {
    pub answers: BTreeMap<String, Option<usize>>,
    pub events: Vec<QuestionEvent>,
}

/// Administration knobs.
#[derive(Debug, Clone)]
pub struct AdministerOptions {
    /// Re-samples allowed per question after a parse failure.
    pub retries: u32,
    pub max_tokens: u32,
}

impl Default for AdministerOptions {
    fn default() -> Self {
        Self {
            retries: 2,
            max_tokens: 32,
        }
    }
}

/// Ask all survey questions in order, one completion per attempt at
/// T = 1.0, carrying the full transcript of earlier questions and their
/// chosen display labels. Unparseable questions become missing after
/// the retry budget and are omitted from later transcripts.
pub fn administer(
    prefix: &str,
    survey: &Survey,
    provider: &dyn Provider,
    rng: &mut ChaCha8Rng,
    opts: &AdministerOptions,
) -> Result<AdministeredSurvey> {
    if survey.questions.is_empty() {
        return Err(Error::Precondition {
            detail: "survey has no questions".into(),
        });
    }
    let mut transcript: Vec<String> = Vec::new();
    let mut answers = BTreeMap::new();
    let mut events = Vec::with_capacity(survey.questions.len());
    for question in &survey.questions {
        let rendered = render_question(question, rng);
        let block = format_question_block(&rendered);

        let mut parts: Vec<&str> = Vec::with_capacity(transcript.len() + 2);
        let trimmed_prefix = prefix.trim_end();
        if !trimmed_prefix.is_empty() {
            parts.push(trimmed_prefix);
        }
        for entry in &transcript {
            parts.push(entry);
        }
        let current = format!("{BRIDGE_LINE}\n\n{block}");
        parts.push(&current);
        let prompt = parts.join("\n\n");

        let mut outcome: Option<(String, usize)> = None;
        for attempt in 0..=opts.retries {
            // Each retry nudges max_tokens so the request's cache key
            // changes; a cached transport then re-samples instead of
            // replaying the unparseable completion.
            let params = SamplingParams {
                temperature: 1.0,
                top_p: 1.0,
                max_tokens: opts.max_tokens + attempt,
                n_samples: 1,
                stop_sequences: vec!["\n\n".into()],
                seed: Some(rng.random()),
            };
            let request = CompletionRequest {
                input: input_for_mode(prompt.clone(), provider.mode()),
                params,
            };
            let reply = provider.complete(&request)?.remove(0);
            if let Some(canonical) = parse_answer(&reply, &rendered) {
                outcome = Some((reply, canonical));
                break;
            }
        }

        match outcome {
            Some((raw, canonical)) => {
                let pos = rendered
                    .display_position(canonical)
                    .expect("canonical index came from index_map");
                let label = format!(
                    "({}) {}",
                    display_letter(pos),
                    rendered.display_options[pos]
                );
                // The transcript records what the model was shown plus
                // the label it picked, so later context stays faithful.
                transcript.push(format!("{BRIDGE_LINE}\n\n{block} {label}"));
                answers.insert(question.id.clone(), Some(canonical));
                events.push(QuestionEvent {
                    rendered,
                    raw_answer: Some(raw),
                    canonical: Some(canonical),
                });
            }
            None => {
                answers.insert(question.id.clone(), None);
                events.push(QuestionEvent {
                    rendered,
                    raw_answer: None,
                    canonical: None,
                });
            }
        }
    }
    Ok(AdministeredSurvey { answers, events })
}

/// Per-respondent audit trail persisted alongside the response matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondentAudit {
    pub respondent_id: String,
    pub events: Vec<QuestionEvent>,
}

/// Outcome of administering a survey to a whole cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortOutcome {
    pub matrix: ResponseMatrix,
    pub audits: Vec<RespondentAudit>,
    /// (respondent id, error) pairs for members whose administration
    /// failed outright; their rows are all missing.
    pub failures: Vec<(String, String)>,
}

fn respond(
    member: &CohortMember,
    survey: &Survey,
    method: ConditioningMethod,
    scheme: &DemographicScheme,
    provider: &dyn Provider,
    master_seed: u64,
    opts: &AdministerOptions,
) -> Result<AdministeredSurvey> {
    let mut rng = seeded_rng(derive_seed(master_seed, &format!("respondent/{}", member.id())));
    let prefix = build_conditioning_prefix(method, member, scheme, &mut rng)?;
    administer(&prefix, survey, provider, &mut rng, opts)
}

type MemberOutcome = (String, std::result::Result<AdministeredSurvey, String>);

/// Administer the survey to every cohort member.
///
/// Each respondent gets an independent RNG stream derived from
/// `(master_seed, respondent id)`, and rows keep cohort order, so the
/// parallel and sequential paths produce identical matrices.
/// Conditioning errors that reflect a misconfigured cohort (missing
/// traits, wrong member kind) abort; provider failures are collected
/// per respondent and leave missing rows.
pub fn run_cohort(
    cohort: &[CohortMember],
    survey: &Survey,
    method: ConditioningMethod,
    scheme: &DemographicScheme,
    provider: &dyn Provider,
    master_seed: u64,
    opts: &AdministerOptions,
) -> Result<CohortOutcome> {
    #[cfg(feature = "parallel")]
    let outcomes: Result<Vec<MemberOutcome>> = cohort
        .par_iter()
        .map(|m| member_outcome(m, survey, method, scheme, provider, master_seed, opts))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let outcomes: Result<Vec<MemberOutcome>> = cohort
        .iter()
        .map(|m| member_outcome(m, survey, method, scheme, provider, master_seed, opts))
        .collect();
    assemble_cohort(cohort, survey, outcomes?)
}

/// Sequential reference path for [`run_cohort`]; always available so
/// benchmarks can compare against the parallel build.
pub fn run_cohort_seq(
    cohort: &[CohortMember],
    survey: &Survey,
    method: ConditioningMethod,
    scheme: &DemographicScheme,
    provider: &dyn Provider,
    master_seed: u64,
    opts: &AdministerOptions,
) -> Result<CohortOutcome> {
    let outcomes: Result<Vec<MemberOutcome>> = cohort
        .iter()
        .map(|m| member_outcome(m, survey, method, scheme, provider, master_seed, opts))
        .collect();
    assemble_cohort(cohort, survey, outcomes?)
}

fn member_outcome(
    member: &CohortMember,
    survey: &Survey,
    method: ConditioningMethod,
    scheme: &DemographicScheme,
    provider: &dyn Provider,
    master_seed: u64,
    opts: &AdministerOptions,
) -> Result<MemberOutcome> {
    match respond(member, survey, method, scheme, provider, master_seed, opts) {
        Ok(administered) => Ok((member.id().to_string(), Ok(administered))),
        // Cohort misconfiguration aborts the whole run.
        Err(
            e @ (Error::MissingAssignedTraits
            | Error::Precondition { .. }
            | Error::Schema { .. }
            | Error::UnknownVariable { .. }),
        ) => Err(e),
        // Provider-side failures degrade to a missing row.
        Err(e) => Ok((member.id().to_string(), Err(e.to_string()))),
    }
}

fn assemble_cohort(
    cohort: &[CohortMember],
    survey: &Survey,
    outcomes: Vec<MemberOutcome>,
) -> Result<CohortOutcome> {
    let question_ids: Vec<String> = survey.questions.iter().map(|q| q.id.clone()).collect();
    let mut cells = Vec::with_capacity(cohort.len());
    let mut audits = Vec::with_capacity(cohort.len());
    let mut failures = Vec::new();
    for (respondent_id, outcome) in outcomes {
        match outcome {
            Ok(administered) => {
                let row: Vec<Option<usize>> = question_ids
                    .iter()
                    .map(|qid| administered.answers.get(qid).copied().flatten())
                    .collect();
                cells.push(row);
                audits.push(RespondentAudit {
                    respondent_id,
                    events: administered.events,
                });
            }
            Err(detail) => {
                cells.push(vec![None; question_ids.len()]);
                audits.push(RespondentAudit {
                    respondent_id: respondent_id.clone(),
                    events: Vec::new(),
                });
                failures.push((respondent_id, detail));
            }
        }
    }
    let matrix = ResponseMatrix::new(
        cohort.iter().map(|m| m.id().to_string()).collect(),
        question_ids,
        cells,
    )?;
    Ok(CohortOutcome {
        matrix,
        audits,
        failures,
    })
}
