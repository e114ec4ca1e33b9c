//! Demographic profiling of backstories: explicit-mention extraction
//! first for the eligible variables, response sampling otherwise.

use std::collections::BTreeMap;

use regex::Regex;
use std::sync::LazyLock;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::persona::{
    normalize_distribution, Backstory, DemographicScheme, DemographicVariable, ProfileMeta,
    TraitDistribution, TraitValue, VirtualPersona,
};
use crate::provider::{
    input_for_mode, ChatMessage, CompletionRequest, Provider, SamplingParams,
};
use crate::rng::derive_seed;

/// Token a well-behaved extractor returns when the story does not
/// explicitly state the requested variable.
pub const ABSTAIN_TOKEN: &str = "UNKNOWN";

/// Parse behavior knobs.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Map bare numbers ("27") into bracket options ("18-29").
    /// Off by default; the conservative rules are label and text only.
    pub numeric_ranges: bool,
}

static PAREN_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\(([A-Za-z])\)").expect("static regex"));
static BARE_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*([A-Za-z])(?:[).:,\-]|\s|$)").expect("static regex"));
static FIRST_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(\d[\d,]*)").expect("static regex"));

/// Letter-label parse shared by demographic and survey answers.
/// Returns a zero-based option position if a label rule fires and the
/// position is in range for `n_options`.
pub(crate) fn parse_letter_label(text: &str, n_options: usize) -> Option<usize> {
    for re in [&*PAREN_LABEL, &*BARE_LABEL] {
        if let Some(caps) = re.captures(text) {
            let letter = caps[1].chars().next().expect("one capture char");
            let idx = (letter.to_ascii_uppercase() as u8 - b'A') as usize;
            if idx < n_options {
                return Some(idx);
            }
        }
    }
    None
}

/// Verbatim option-text parse; the longest matching label wins, ties
/// resolve to the first option in canonical order.
pub(crate) fn parse_option_text(text: &str, options: &[String]) -> Option<usize> {
    let lowered = text.to_lowercase();
    let mut best: Option<(usize, usize)> = None; // (len, index)
    for (i, opt) in options.iter().enumerate() {
        let needle = opt.to_lowercase();
        if lowered.contains(&needle) {
            let better = match best {
                None => true,
                Some((len, _)) => needle.len() > len,
            };
            if better {
                best = Some((needle.len(), i));
            }
        }
    }
    best.map(|(_, i)| i)
}

/// Inclusive numeric interval parsed off an option label.
fn label_range(label: &str) -> Option<(f64, f64)> {
    let clean = label.replace(['$', ','], "");
    let nums: Vec<f64> = FIRST_NUMBER
        .find_iter(&clean)
        .filter_map(|m| m.as_str().replace(',', "").parse::<f64>().ok())
        .collect();
    let lower_words = ["less than", "under", "below"];
    let upper_words = ["or more", "or older", "or over", "and above", "+"];
    let lowered = clean.to_lowercase();
    match nums.len() {
        2 => Some((nums[0], nums[1])),
        1 if lower_words.iter().any(|w| lowered.contains(w)) => {
            Some((f64::NEG_INFINITY, nums[0] - 1.0))
        }
        1 if upper_words.iter().any(|w| lowered.contains(w)) => Some((nums[0], f64::INFINITY)),
        _ => None,
    }
}

fn parse_numeric_range(text: &str, options: &[String]) -> Option<usize> {
    let m = FIRST_NUMBER.find(text)?;
    let value: f64 = m.as_str().replace(',', "").parse().ok()?;
    options
        .iter()
        .position(|opt| label_range(opt).is_some_and(|(lo, hi)| value >= lo && value <= hi))
}

/// Parse one sampled answer to a demographic question into a canonical
/// option index. Rules fire in order: parenthesized letter, bare
/// leading letter plus delimiter, verbatim option text, and (only when
/// enabled) numeric-range inference. `None` signals parse failure.
pub fn parse_demographic_response(text: &str, variable: &DemographicVariable) -> Option<usize> {
    parse_demographic_response_with(text, variable, ParseOptions::default())
}

pub fn parse_demographic_response_with(
    text: &str,
    variable: &DemographicVariable,
    opts: ParseOptions,
) -> Option<usize> {
    if let Some(idx) = parse_letter_label(text, variable.options.len()) {
        return Some(idx);
    }
    if let Some(idx) = parse_option_text(text, &variable.options) {
        return Some(idx);
    }
    if opts.numeric_ranges {
        if let Some(idx) = parse_numeric_range(text, &variable.options) {
            return Some(idx);
        }
    }
    None
}

fn options_block(variable: &DemographicVariable) -> String {
    variable
        .options
        .iter()
        .enumerate()
        .map(|(i, opt)| format!("({}) {opt}", (b'A' + i as u8) as char))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Prompt asking a backstory-conditioned persona one demographic
/// question.
pub fn demographic_prompt(backstory: &Backstory, variable: &DemographicVariable) -> String {
    format!(
        "{}\n\nQuestion: {}\n\n{}\n\nAnswer:",
        backstory.text.trim(),
        variable.question_text,
        options_block(variable)
    )
}

/// Profiling knobs.
#[derive(Debug, Clone)]
pub struct ProfileOptions {
    /// Samples drawn per demographic question.
    pub samples_per_question: u32,
    /// Try explicit-mention extraction for eligible variables first.
    pub extraction: bool,
    pub parse: ParseOptions,
    /// Seed of the profiling stream; per-(backstory, variable) seeds
    /// derive from it, so batch order never matters.
    pub seed: u64,
    pub max_tokens: u32,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            samples_per_question: 40,
            extraction: true,
            parse: ParseOptions::default(),
            seed: 0,
            max_tokens: 32,
        }
    }
}

/// A sampled trait distribution plus sampling bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledDistribution {
    pub distribution: TraitDistribution,
    pub parse_failures: u32,
}

/// Estimate one variable's distribution by repeated sampling.
///
/// Draws `n` completions of the backstory-plus-question prompt at
/// T = 1.0, top_p = 1.0, parses each, and normalizes the per-option
/// counts. Option order is the fixed canonical order.
pub fn sample_trait_distribution(
    backstory: &Backstory,
    variable: &DemographicVariable,
    provider: &dyn Provider,
    n: u32,
    opts: &ProfileOptions,
) -> Result<SampledDistribution> {
    if n < 1 {
        return Err(Error::Precondition {
            detail: "sample count must be >= 1".into(),
        });
    }
    let prompt = demographic_prompt(backstory, variable);
    let params = SamplingParams {
        temperature: 1.0,
        top_p: 1.0,
        max_tokens: opts.max_tokens,
        n_samples: n,
        stop_sequences: vec!["\n\n".into()],
        seed: Some(derive_seed(
            opts.seed,
            &format!("sample/{}/{}", backstory.id, variable.id),
        )),
    };
    let request = CompletionRequest {
        input: input_for_mode(prompt, provider.mode()),
        params,
    };
    let samples = provider.complete(&request)?;

    let mut counts = vec![0u64; variable.options.len()];
    let mut failures = 0u32;
    for sample in &samples {
        match parse_demographic_response_with(sample, variable, opts.parse) {
            Some(idx) => counts[idx] += 1,
            None => failures += 1,
        }
    }
    let distribution = normalize_distribution(&variable.id, &counts)?;
    Ok(SampledDistribution {
        distribution,
        parse_failures: failures,
    })
}

/// Ask an instruction-tuned model to read one variable straight off the
/// backstory; returns `None` when the model abstains or the reply does
/// not parse. Only extraction-eligible variables may be queried, and
/// requests run at temperature 0.
pub fn extract_explicit_trait(
    backstory: &Backstory,
    variable: &DemographicVariable,
    provider: &dyn Provider,
) -> Result<Option<TraitValue>> {
    if !variable.extraction_eligible {
        return Err(Error::Precondition {
            detail: format!("variable '{}' is not extraction-eligible", variable.id),
        });
    }
    let system = "You locate demographic information that is explicitly stated in a \
first-person life story. Reply with exactly one option label such as (B). If the story \
does not explicitly state the answer, reply UNKNOWN."
        .to_string();
    let user = format!(
        "Story:\n{}\n\nQuestion: {}\n\n{}\n\nIf the story does not explicitly mention this, \
reply {ABSTAIN_TOKEN}.\n\nAnswer:",
        backstory.text.trim(),
        variable.question_text,
        options_block(variable)
    );
    let params = SamplingParams {
        temperature: 0.0,
        top_p: 1.0,
        max_tokens: 16,
        n_samples: 1,
        stop_sequences: vec!["\n\n".into()],
        seed: None,
    };
    let request = CompletionRequest::messages(
        vec![ChatMessage::system(system), ChatMessage::user(user)],
        params,
    );
    let reply = provider.complete(&request)?.remove(0);
    if reply.to_uppercase().contains(ABSTAIN_TOKEN) {
        return Ok(None);
    }
    Ok(
        parse_demographic_response_with(&reply, variable, ParseOptions::default())
            .map(|idx| TraitValue::new(variable.id.clone(), idx)),
    )
}

/// Providers used while profiling: extraction typically runs on an
/// instruction-tuned chat model, sampling on the base model.
#[derive(Clone, Copy)]
pub struct ProfileProviders<'a> {
    pub sampling: &'a dyn Provider,
    pub extraction: &'a dyn Provider,
}

impl<'a> ProfileProviders<'a> {
    /// Use one provider for both paths.
    pub fn single(provider: &'a dyn Provider) -> Self {
        Self {
            sampling: provider,
            extraction: provider,
        }
    }
}

/// Build a full persona profile for one backstory.
///
/// Eligible variables go through extraction first; a confident parse
/// becomes a one-hot extracted distribution, anything else falls back
/// to response sampling.
pub fn profile_persona(
    backstory: &Backstory,
    scheme: &DemographicScheme,
    providers: ProfileProviders<'_>,
    opts: &ProfileOptions,
) -> Result<VirtualPersona> {
    if scheme.is_empty() {
        return Err(Error::Precondition {
            detail: "scheme has no variables".into(),
        });
    }
    let mut distributions = Vec::with_capacity(scheme.len());
    let mut parse_failures = BTreeMap::new();
    for variable in &scheme.variables {
        let extracted = if opts.extraction && variable.extraction_eligible {
            extract_explicit_trait(backstory, variable, providers.extraction)?
        } else {
            None
        };
        match extracted {
            Some(trait_value) => {
                distributions.push(TraitDistribution::one_hot(
                    variable.id.clone(),
                    trait_value.option_index,
                    variable.options.len(),
                )?);
            }
            None => {
                let sampled = sample_trait_distribution(
                    backstory,
                    variable,
                    providers.sampling,
                    opts.samples_per_question,
                    opts,
                )?;
                if sampled.parse_failures > 0 {
                    parse_failures.insert(variable.id.clone(), sampled.parse_failures);
                }
                distributions.push(sampled.distribution);
            }
        }
    }
    let persona = VirtualPersona {
        backstory_id: backstory.id.clone(),
        distributions,
        assigned_traits: None,
        profile_meta: Some(ProfileMeta {
            samples_per_question: opts.samples_per_question,
            seed: Some(opts.seed),
            parse_failures,
        }),
    };
    persona.validate(scheme)?;
    Ok(persona)
}

/// Profile a whole anthology. Runs per-backstory on the rayon pool
/// when the `parallel` feature is enabled; per-backstory seeds derive
/// from the backstory id, so results match the sequential path.
pub fn profile_personas(
    backstories: &[Backstory],
    scheme: &DemographicScheme,
    providers: ProfileProviders<'_>,
    opts: &ProfileOptions,
) -> Result<Vec<VirtualPersona>> {
    #[cfg(feature = "parallel")]
    {
        backstories
            .par_iter()
            .map(|b| profile_persona(b, scheme, providers, opts))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        profile_personas_seq(backstories, scheme, providers, opts)
    }
}

/// Sequential reference path for [`profile_personas`].
pub fn profile_personas_seq(
    backstories: &[Backstory],
    scheme: &DemographicScheme,
    providers: ProfileProviders<'_>,
    opts: &ProfileOptions,
) -> Result<Vec<VirtualPersona>> {
    backstories
        .iter()
        .map(|b| profile_persona(b, scheme, providers, opts))
        .collect()
}
