//! Backstory generation: open-ended natural stories, demographics-
//! primed stories, and the rule-based demographic preambles shared by
//! the baseline conditioning methods.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

pub use crate::persona::PreambleStyle;

use crate::error::{Error, Result};
use crate::persona::{
    validate_trait_tuple, Backstory, DemographicScheme, GenerationMeta, Provenance, TraitValue,
};
use crate::provider::{input_for_mode, CompletionRequest, Provider, SamplingParams};

/// The frozen open-ended generation prompt. No system message, no
/// demographic content; kept minimal so responses are unconstrained.
pub const NATURAL_PROMPT: &str = "Question: Tell me about yourself.\n\nAnswer:";

/// Instruction bridging a demographic preamble to a primed life story.
/// A reconstruction, hence configurable via [`DpOptions::instruction`].
pub const DP_INSTRUCTION: &str = "Using the information above, write a detailed first-person \
life story about yourself. Stay consistent with every answer given.";

const NATURAL_TEMPLATE_ID: &str = "natural-v1";
const DP_TEMPLATE_ID: &str = "demographics-primed-v1";

/// Settings for natural backstory generation.
#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub count: usize,
    /// Discard completions shorter than this many characters.
    pub min_chars: usize,
    /// Extra regeneration rounds after the initial batch.
    pub max_retry_rounds: u32,
    pub params: SamplingParams,
    /// Prefix for generated backstory ids.
    pub id_prefix: String,
}

impl GenerateOptions {
    pub fn new(count: usize) -> Self {
        Self {
            count,
            min_chars: 200,
            max_retry_rounds: 3,
            // Open-ended sampling at T = 1.0.
            params: SamplingParams::new(1.0, 1.0, 1024, 1),
            id_prefix: "b".into(),
        }
    }
}

/// Settings for demographics-primed generation.
#[derive(Debug, Clone)]
pub struct DpOptions {
    pub id: String,
    pub min_chars: usize,
    pub max_retry_rounds: u32,
    pub params: SamplingParams,
    pub instruction: String,
}

impl DpOptions {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            min_chars: 200,
            max_retry_rounds: 3,
            // Primed generation decodes at top_p = 1.0, T = 1.1.
            params: SamplingParams::new(1.1, 1.0, 1024, 1),
            instruction: DP_INSTRUCTION.into(),
        }
    }
}

fn keep_completion(text: &str, min_chars: usize) -> Option<String> {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed.chars().count() < min_chars {
        None
    } else {
        Some(trimmed.to_string())
    }
}

/// Generate `count` open-ended backstories with the frozen prompt.
///
/// The prompt is byte-identical across all natural generations. Empty,
/// whitespace-only, or too-short completions are discarded and
/// regenerated; each retry round requests a slightly larger batch so
/// its cache key differs from earlier rounds.
pub fn generate_natural(provider: &dyn Provider, opts: &GenerateOptions) -> Result<Vec<Backstory>> {
    if opts.count == 0 {
        return Ok(Vec::new());
    }
    let mut kept: Vec<String> = Vec::with_capacity(opts.count);
    let mut round: u32 = 0;
    while kept.len() < opts.count {
        if round > opts.max_retry_rounds {
            return Err(Error::GenerationExhausted);
        }
        let shortfall = opts.count - kept.len();
        let n = shortfall + round as usize;
        let mut params = opts.params.clone();
        params.n_samples = n as u32;
        let request = CompletionRequest {
            input: input_for_mode(NATURAL_PROMPT.to_string(), provider.mode()),
            params,
        };
        for text in provider.complete(&request)? {
            if kept.len() == opts.count {
                break;
            }
            if let Some(story) = keep_completion(&text, opts.min_chars) {
                kept.push(story);
            }
        }
        round += 1;
    }
    Ok(kept
        .into_iter()
        .enumerate()
        .map(|(i, text)| Backstory {
            id: format!("{}{:05}", opts.id_prefix, i),
            text,
            provenance: Provenance::Natural,
            generation_meta: GenerationMeta {
                model_id: provider.model_id().to_string(),
                temperature: opts.params.temperature,
                top_p: opts.params.top_p,
                prompt_template: NATURAL_TEMPLATE_ID.into(),
                seed: opts.params.seed,
            },
        })
        .collect())
}

fn option_letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

/// Render the trait block for one human or persona.
///
/// Variable order is a uniform random permutation drawn from `rng`.
/// Question-answer style emits one multiple-choice block per variable
/// with the full option list verbatim and the chosen letter as the
/// answer; biography style emits one templated sentence per variable.
pub fn render_demographic_preamble(
    traits: &[TraitValue],
    scheme: &DemographicScheme,
    style: PreambleStyle,
    rng: &mut ChaCha8Rng,
) -> Result<String> {
    validate_trait_tuple(traits, scheme)?;
    let mut order: Vec<usize> = (0..scheme.len()).collect();
    order.shuffle(rng);

    let mut parts = Vec::with_capacity(scheme.len());
    for &vi in &order {
        let variable = &scheme.variables[vi];
        let trait_value = traits
            .iter()
            .find(|t| t.variable_id == variable.id)
            .expect("validated tuple covers every variable");
        let label = &variable.options[trait_value.option_index];
        match style {
            PreambleStyle::QuestionAnswer => {
                let options = variable
                    .options
                    .iter()
                    .enumerate()
                    .map(|(i, opt)| format!("({}) {opt}", option_letter(i)))
                    .collect::<Vec<_>>()
                    .join("\n");
                parts.push(format!(
                    "Question: {}\n\n{}\n\nAnswer: ({})",
                    variable.question_text,
                    options,
                    option_letter(trait_value.option_index)
                ));
            }
            PreambleStyle::Biography => {
                parts.push(variable.bio_sentence(label));
            }
        }
    }
    Ok(match style {
        PreambleStyle::QuestionAnswer => parts.join("\n\n"),
        PreambleStyle::Biography => parts.join(" "),
    })
}

/// Generate one backstory primed on a prescribed trait tuple.
///
/// The prompt is the rendered preamble followed by a story instruction;
/// provenance records the full trait tuple and preamble style.
pub fn generate_demographics_primed(
    traits: &[TraitValue],
    scheme: &DemographicScheme,
    style: PreambleStyle,
    provider: &dyn Provider,
    opts: &DpOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Backstory> {
    let preamble = render_demographic_preamble(traits, scheme, style, rng)?;
    let prompt = format!("{preamble}\n\n{}", opts.instruction);

    let mut round: u32 = 0;
    loop {
        if round > opts.max_retry_rounds {
            return Err(Error::GenerationExhausted);
        }
        let mut params = opts.params.clone();
        params.n_samples = 1 + round;
        let request = CompletionRequest {
            input: input_for_mode(prompt.clone(), provider.mode()),
            params,
        };
        let texts = provider.complete(&request)?;
        if let Some(text) = texts
            .iter()
            .find_map(|t| keep_completion(t, opts.min_chars))
        {
            return Ok(Backstory {
                id: opts.id.clone(),
                text,
                provenance: Provenance::DemographicsPrimed {
                    traits: traits.to_vec(),
                    style,
                },
                generation_meta: GenerationMeta {
                    model_id: provider.model_id().to_string(),
                    temperature: opts.params.temperature,
                    top_p: opts.params.top_p,
                    prompt_template: DP_TEMPLATE_ID.into(),
                    seed: opts.params.seed,
                },
            });
        }
        round += 1;
    }
}
