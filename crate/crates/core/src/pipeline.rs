//! End-to-end orchestration with resumable stages.
//!
//! A run directory holds one artifact per stage plus a manifest of
//! per-stage content digests. A stage is reused when its digest (its
//! configuration slice, input file digests, and upstream stage digest)
//! matches the manifest and its artifact still parses; anything else
//! recomputes that stage and everything downstream. Inputs are never
//! mutated.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::backstory::{self, DpOptions, GenerateOptions};
use crate::config::{MethodName, PipelineConfig};
use crate::demo_survey::{ParseOptions, ProfileOptions, ProfileProviders};
use crate::error::{Error, Result};
use crate::io;
use crate::matching::{
    assign_traits, match_greedy, match_max_weight, match_random, weight_matrix_floored,
    MatchMethod, MatchingResult,
};
use crate::metrics::{
    evaluate, evaluate_subgroups, human_lower_bound, Grouping, LowerBoundReport, MetricsReport,
};
use crate::persona::{
    Backstory, DemographicScheme, HumanRespondent, Provenance, ResponseMatrix, Survey,
    TraitDistribution, VirtualPersona,
};
use crate::rng::{derive_seed, seeded_rng};
use crate::survey::{
    run_cohort, AdministerOptions, CohortMember, CohortOutcome, RespondentAudit,
};

pub const ANTHOLOGY_FILE: &str = "anthology.jsonl";
pub const PERSONAS_FILE: &str = "personas.jsonl";
pub const MATCHING_FILE: &str = "matching.json";
pub const RESPONSES_FILE: &str = "responses.csv";
pub const RESPONSES_AUDIT_FILE: &str = "responses_audit.json";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOWER_BOUND_FILE: &str = "lower_bound.json";

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Profile,
    Match,
    Administer,
    Evaluate,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Profile => "profile",
            Stage::Match => "match",
            Stage::Administer => "administer",
            Stage::Evaluate => "evaluate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Computed,
    Reused,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub status: StageStatus,
}

/// What a pipeline invocation did.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub stages: Vec<StageOutcome>,
    pub report: Option<MetricsReport>,
}

impl RunReport {
    pub fn status(&self, stage: Stage) -> Option<StageStatus> {
        self.stages
            .iter()
            .find(|s| s.stage == stage.name())
            .map(|s| s.status)
    }
}

/// Run metadata persisted next to the artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub config_digest: String,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub stage_digests: BTreeMap<String, String>,
}

/// matching.json payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingArtifact {
    pub config_digest: String,
    pub master_seed: u64,
    pub wave: String,
    pub result: MatchingResult,
}

/// responses_audit.json payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditArtifact {
    pub config_digest: String,
    pub master_seed: u64,
    pub audits: Vec<RespondentAudit>,
    pub failures: Vec<(String, String)>,
}

/// report.json payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportArtifact {
    pub config_digest: String,
    pub master_seed: u64,
    pub wave: String,
    pub method: MethodName,
    pub matching: Option<MatchMethod>,
    pub report: MetricsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgroups: Option<BTreeMap<String, MetricsReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<LowerBoundReport>,
}

/// lower_bound.json payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundArtifact {
    pub config_digest: String,
    pub master_seed: u64,
    pub wave: String,
    pub lower_bound: LowerBoundReport,
}

fn file_digest(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(fs::read(path)?);
    Ok(hex::encode(hasher.finalize()))
}

fn stage_digest(parts: &[(&str, String)]) -> String {
    let map: BTreeMap<&str, &str> = parts.iter().map(|(k, v)| (*k, v.as_str())).collect();
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_string(&map).expect("digest map serializes"));
    hex::encode(hasher.finalize())
}

fn to_json_string<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value).expect("serializes").to_string()
}

struct PipelineCtx<'a> {
    config: &'a PipelineConfig,
    out_dir: PathBuf,
    scheme: DemographicScheme,
    survey: Survey,
    humans: Vec<HumanRespondent>,
    scheme_digest: String,
    survey_digest: String,
    respondents_digest: String,
    old_manifest: Manifest,
    manifest: Manifest,
    stages: Vec<StageOutcome>,
}

impl<'a> PipelineCtx<'a> {
    fn new(config: &'a PipelineConfig) -> Result<Self> {
        config.validate()?;
        let out_dir = config
            .out_dir
            .clone()
            .ok_or_else(|| Error::InvalidConfig {
                detail: "out_dir is required (set it in the config or pass --out)".into(),
            })?;
        fs::create_dir_all(&out_dir)?;
        let scheme = io::load_scheme(&config.scheme)?;
        let survey = io::load_survey(&config.survey)?;
        let humans = io::ingest_respondents(&config.respondents, &scheme, &survey)?;
        let old_manifest: Manifest =
            io::read_json(&out_dir.join(MANIFEST_FILE)).unwrap_or_default();
        let manifest = Manifest {
            config_digest: config.digest(),
            master_seed: config.seeds.master,
            stage_digests: BTreeMap::new(),
        };
        Ok(Self {
            scheme_digest: file_digest(&config.scheme)?,
            survey_digest: file_digest(&config.survey)?,
            respondents_digest: file_digest(&config.respondents)?,
            config,
            out_dir,
            scheme,
            survey,
            humans,
            old_manifest,
            manifest,
            stages: Vec::new(),
        })
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn reusable(&self, stage: Stage, digest: &str, artifact: &Path) -> bool {
        self.old_manifest.stage_digests.get(stage.name()).map(String::as_str) == Some(digest)
            && artifact.is_file()
    }

    fn record(&mut self, stage: Stage, status: StageStatus, digest: Option<String>) -> Result<()> {
        self.stages.push(StageOutcome {
            stage: stage.name(),
            status,
        });
        if let Some(digest) = digest {
            self.manifest
                .stage_digests
                .insert(stage.name().to_string(), digest);
        }
        // Persist progress so interrupted runs resume cleanly.
        io::write_json(&self.out_dir.join(MANIFEST_FILE), &self.manifest)
    }

    fn seed(&self, label: &str) -> u64 {
        derive_seed(self.config.seeds.master, label)
    }

    fn comments(&self) -> Vec<(String, String)> {
        vec![
            ("config_digest".into(), self.manifest.config_digest.clone()),
            ("master_seed".into(), self.config.seeds.master.to_string()),
        ]
    }
}

fn uses_anthology(method: MethodName) -> bool {
    matches!(method, MethodName::AnthologyNatural | MethodName::AnthologyDp)
}

fn generate_stage(ctx: &mut PipelineCtx) -> Result<Vec<Backstory>> {
    let method = ctx.config.survey_run.method;
    if !uses_anthology(method) {
        ctx.record(Stage::Generate, StageStatus::Skipped, None)?;
        return Ok(Vec::new());
    }
    let spec = ctx.config.provider_spec("generate")?;
    let mut parts = vec![
        ("kind", format!("{method:?}")),
        ("generate", to_json_string(&ctx.config.generate)),
        ("provider", to_json_string(spec)),
        ("scheme", ctx.scheme_digest.clone()),
        ("seed", ctx.seed("generate").to_string()),
    ];
    if let Some(src) = &ctx.config.anthology {
        parts.push(("anthology_input", file_digest(src)?));
    }
    if method == MethodName::AnthologyDp {
        // Primed prompts embed the trait block, so the style and the
        // respondent pool shape what gets generated; natural prompts
        // depend on neither.
        parts.push(("respondents", ctx.respondents_digest.clone()));
        parts.push(("style", to_json_string(&ctx.config.survey_run.preamble_style)));
    }
    let digest = stage_digest(&parts);
    let path = ctx.artifact(ANTHOLOGY_FILE);

    if ctx.reusable(Stage::Generate, &digest, &path) {
        if let Ok(backstories) = io::read_jsonl::<Backstory>(&path) {
            ctx.record(Stage::Generate, StageStatus::Reused, Some(digest))?;
            return Ok(backstories);
        }
    }

    let backstories = compute_backstories(ctx).map_err(|e| e.in_stage("generate"))?;
    io::write_jsonl(&path, &backstories)?;
    ctx.record(Stage::Generate, StageStatus::Computed, Some(digest))?;
    Ok(backstories)
}

fn compute_backstories(ctx: &PipelineCtx) -> Result<Vec<Backstory>> {
    if let Some(src) = &ctx.config.anthology {
        let backstories: Vec<Backstory> = io::read_jsonl(src)?;
        let mut ids = std::collections::BTreeSet::new();
        for b in &backstories {
            b.validate()?;
            if !ids.insert(b.id.as_str()) {
                return Err(Error::Schema {
                    detail: format!("duplicate backstory id '{}' in {}", b.id, src.display()),
                });
            }
        }
        return Ok(backstories);
    }
    let provider = ctx.config.provider_for("generate")?;
    match ctx.config.survey_run.method {
        MethodName::AnthologyNatural => {
            if ctx.config.generate.count == 0 {
                return Err(Error::InvalidConfig {
                    detail: "generate.count must be set when no anthology is supplied".into(),
                });
            }
            let mut opts = GenerateOptions::new(ctx.config.generate.count);
            opts.min_chars = ctx.config.generate.min_chars;
            opts.max_retry_rounds = ctx.config.generate.max_retry_rounds;
            opts.params.max_tokens = ctx.config.generate.max_tokens;
            opts.params.seed = Some(ctx.seed("generate"));
            backstory::generate_natural(provider.as_ref(), &opts)
        }
        MethodName::AnthologyDp => {
            let style = ctx.config.survey_run.preamble_style;
            let make = |human: &HumanRespondent| -> Result<Backstory> {
                let mut opts = DpOptions::new(format!("dp-{}", human.id));
                opts.min_chars = ctx.config.generate.min_chars;
                opts.max_retry_rounds = ctx.config.generate.max_retry_rounds;
                opts.params.max_tokens = ctx.config.generate.max_tokens;
                opts.params.seed = Some(ctx.seed(&format!("generate/dp/{}", human.id)));
                let mut rng = seeded_rng(ctx.seed(&format!("generate/dp-order/{}", human.id)));
                backstory::generate_demographics_primed(
                    &human.traits,
                    &ctx.scheme,
                    style,
                    provider.as_ref(),
                    &opts,
                    &mut rng,
                )
            };
            #[cfg(feature = "parallel")]
            {
                ctx.humans.par_iter().map(make).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                ctx.humans.iter().map(make).collect()
            }
        }
        _ => unreachable!("generate stage only runs for anthology methods"),
    }
}

fn profile_stage(ctx: &mut PipelineCtx, backstories: &[Backstory]) -> Result<Vec<VirtualPersona>> {
    let method = ctx.config.survey_run.method;
    if method != MethodName::AnthologyNatural {
        ctx.record(Stage::Profile, StageStatus::Skipped, None)?;
        return match method {
            MethodName::AnthologyDp => dp_personas(backstories, &ctx.scheme),
            _ => Ok(Vec::new()),
        };
    }
    let upstream = ctx.manifest.stage_digests["generate"].clone();
    let digest = stage_digest(&[
        ("upstream", upstream),
        ("profile", to_json_string(&ctx.config.profile)),
        ("provider", to_json_string(ctx.config.provider_spec("profile")?)),
        ("extractor", to_json_string(ctx.config.provider_spec("extract")?)),
        ("scheme", ctx.scheme_digest.clone()),
        ("seed", ctx.seed("profile").to_string()),
    ]);
    let path = ctx.artifact(PERSONAS_FILE);

    if ctx.reusable(Stage::Profile, &digest, &path) {
        if let Ok(personas) = io::read_jsonl::<VirtualPersona>(&path) {
            ctx.record(Stage::Profile, StageStatus::Reused, Some(digest))?;
            return Ok(personas);
        }
    }

    let sampling = ctx.config.provider_for("profile")?;
    let extraction = ctx.config.provider_for("extract")?;
    let providers = ProfileProviders {
        sampling: sampling.as_ref(),
        extraction: extraction.as_ref(),
    };
    let opts = ProfileOptions {
        samples_per_question: ctx.config.profile.samples_per_question,
        extraction: ctx.config.profile.extraction,
        parse: ParseOptions {
            numeric_ranges: ctx.config.profile.numeric_range_parse,
        },
        seed: ctx.seed("profile"),
        max_tokens: ctx.config.profile.max_tokens,
    };
    let personas =
        crate::demo_survey::profile_personas(backstories, &ctx.scheme, providers, &opts)
            .map_err(|e| e.in_stage("profile"))?;
    io::write_jsonl(&path, &personas)?;
    ctx.record(Stage::Profile, StageStatus::Computed, Some(digest))?;
    Ok(personas)
}

/// Demographics-primed personas carry their generation traits as
/// one-hot distributions; no profiling pass is needed.
fn dp_personas(backstories: &[Backstory], scheme: &DemographicScheme) -> Result<Vec<VirtualPersona>> {
    backstories
        .iter()
        .map(|b| match &b.provenance {
            Provenance::DemographicsPrimed { traits, .. } => {
                let mut distributions = Vec::with_capacity(scheme.len());
                for variable in &scheme.variables {
                    let t = crate::persona::trait_for(traits, &variable.id)?;
                    distributions.push(TraitDistribution::one_hot(
                        variable.id.clone(),
                        t.option_index,
                        variable.options.len(),
                    )?);
                }
                Ok(VirtualPersona {
                    backstory_id: b.id.clone(),
                    distributions,
                    assigned_traits: Some(traits.clone()),
                    profile_meta: None,
                })
            }
            Provenance::Natural => Err(Error::Precondition {
                detail: format!(
                    "backstory '{}' is natural; demographics-primed conditioning needs primed stories",
                    b.id
                ),
            }),
        })
        .collect()
}

fn match_stage(
    ctx: &mut PipelineCtx,
    personas: &[VirtualPersona],
) -> Result<Option<MatchingResult>> {
    if ctx.config.survey_run.method != MethodName::AnthologyNatural {
        ctx.record(Stage::Match, StageStatus::Skipped, None)?;
        return Ok(None);
    }
    let upstream = ctx.manifest.stage_digests["profile"].clone();
    let digest = stage_digest(&[
        ("upstream", upstream),
        ("matching", to_json_string(&ctx.config.matching)),
        ("respondents", ctx.respondents_digest.clone()),
        ("seed", ctx.seed("match").to_string()),
    ]);
    let path = ctx.artifact(MATCHING_FILE);

    if ctx.reusable(Stage::Match, &digest, &path) {
        if let Ok(artifact) = io::read_json::<MatchingArtifact>(&path) {
            ctx.record(Stage::Match, StageStatus::Reused, Some(digest))?;
            return Ok(Some(artifact.result));
        }
    }

    let result = (|| -> Result<MatchingResult> {
        let matrix = weight_matrix_floored(
            &ctx.humans,
            personas,
            &ctx.scheme,
            ctx.config.matching.weight_floor,
        )?;
        Ok(match ctx.config.matching.method {
            MatchMethod::Greedy => match_greedy(&matrix),
            MatchMethod::MaxWeight => match_max_weight(&matrix)?,
            MatchMethod::Random => {
                match_random(&matrix, &mut seeded_rng(ctx.seed("match")))
            }
        })
    })()
    .map_err(|e| e.in_stage("match"))?;

    io::write_json(
        &path,
        &MatchingArtifact {
            config_digest: ctx.manifest.config_digest.clone(),
            master_seed: ctx.config.seeds.master,
            wave: ctx.config.wave.clone(),
            result: result.clone(),
        },
    )?;
    ctx.record(Stage::Match, StageStatus::Computed, Some(digest))?;
    Ok(Some(result))
}

fn build_cohort(
    ctx: &PipelineCtx,
    backstories: &[Backstory],
    personas: &[VirtualPersona],
    matching: Option<&MatchingResult>,
) -> Result<Vec<CohortMember>> {
    match ctx.config.survey_run.method {
        MethodName::Bio | MethodName::Qa => Ok(ctx
            .humans
            .iter()
            .cloned()
            .map(CohortMember::Human)
            .collect()),
        MethodName::AnthologyNatural => {
            let result = matching.ok_or_else(|| Error::Precondition {
                detail: "anthology_natural requires a matching result".into(),
            })?;
            let conditioned = assign_traits(result, &ctx.humans, personas)?;
            let by_id: BTreeMap<&str, &Backstory> =
                backstories.iter().map(|b| (b.id.as_str(), b)).collect();
            conditioned
                .into_iter()
                .zip(&ctx.humans)
                .map(|(persona, human)| {
                    let backstory = by_id
                        .get(persona.backstory_id.as_str())
                        .copied()
                        .cloned()
                        .ok_or_else(|| Error::Schema {
                            detail: format!("no backstory with id '{}'", persona.backstory_id),
                        })?;
                    Ok(CohortMember::Persona {
                        respondent_id: human.id.clone(),
                        persona,
                        backstory,
                    })
                })
                .collect()
        }
        MethodName::AnthologyDp => Ok(personas
            .iter()
            .cloned()
            .zip(backstories.iter().cloned())
            .map(|(persona, backstory)| CohortMember::persona(persona, backstory))
            .collect()),
    }
}

fn administer_stage(ctx: &mut PipelineCtx, cohort: &[CohortMember]) -> Result<ResponseMatrix> {
    let upstream = match ctx.config.survey_run.method {
        MethodName::AnthologyNatural => ctx.manifest.stage_digests["match"].clone(),
        MethodName::AnthologyDp => ctx.manifest.stage_digests["generate"].clone(),
        MethodName::Bio | MethodName::Qa => {
            format!("{}+{}", ctx.respondents_digest, ctx.scheme_digest)
        }
    };
    let digest = stage_digest(&[
        ("upstream", upstream),
        ("survey_run", to_json_string(&ctx.config.survey_run)),
        ("provider", to_json_string(ctx.config.provider_spec("survey")?)),
        ("survey", ctx.survey_digest.clone()),
        ("seed", ctx.seed("survey").to_string()),
    ]);
    let path = ctx.artifact(RESPONSES_FILE);

    if ctx.reusable(Stage::Administer, &digest, &path) {
        if let Ok(matrix) = io::load_response_matrix_csv(&path) {
            ctx.record(Stage::Administer, StageStatus::Reused, Some(digest))?;
            return Ok(matrix);
        }
    }

    let provider = ctx.config.provider_for("survey")?;
    let opts = AdministerOptions {
        retries: ctx.config.survey_run.retries,
        max_tokens: ctx.config.survey_run.max_tokens,
    };
    let CohortOutcome {
        matrix,
        audits,
        failures,
    } = run_cohort(
        cohort,
        &ctx.survey,
        ctx.config.survey_run.conditioning_method(),
        &ctx.scheme,
        provider.as_ref(),
        ctx.seed("survey"),
        &opts,
    )
    .map_err(|e| e.in_stage("administer"))?;
    for (id, detail) in &failures {
        log::warn!("respondent '{id}' failed: {detail}");
    }
    io::save_response_matrix_csv(&path, &matrix, &ctx.comments())?;
    io::write_json(
        &ctx.artifact(RESPONSES_AUDIT_FILE),
        &AuditArtifact {
            config_digest: ctx.manifest.config_digest.clone(),
            master_seed: ctx.config.seeds.master,
            audits,
            failures,
        },
    )?;
    ctx.record(Stage::Administer, StageStatus::Computed, Some(digest))?;
    Ok(matrix)
}

fn evaluate_stage(ctx: &mut PipelineCtx, matrix_v: &ResponseMatrix) -> Result<MetricsReport> {
    let upstream = ctx.manifest.stage_digests["administer"].clone();
    let digest = stage_digest(&[
        ("upstream", upstream),
        ("respondents", ctx.respondents_digest.clone()),
        ("survey", ctx.survey_digest.clone()),
        ("evaluate", to_json_string(&ctx.config.evaluate)),
        ("seed", ctx.seed("lower_bound").to_string()),
    ]);
    let path = ctx.artifact(REPORT_FILE);

    if ctx.reusable(Stage::Evaluate, &digest, &path) {
        if let Ok(artifact) = io::read_json::<ReportArtifact>(&path) {
            ctx.record(Stage::Evaluate, StageStatus::Reused, Some(digest))?;
            return Ok(artifact.report);
        }
    }

    let artifact = (|| -> Result<ReportArtifact> {
        let matrix_h = io::respondents_matrix(&ctx.humans, &ctx.survey)?;
        let report = evaluate(matrix_v, &matrix_h, &ctx.survey)?;
        let subgroups = match &ctx.config.evaluate.subgroup_variable {
            Some(variable_id) => Some(evaluate_subgroups(
                matrix_v,
                &matrix_h,
                &ctx.humans,
                &Grouping::ByVariable {
                    variable_id: variable_id.clone(),
                },
                &ctx.survey,
                &ctx.scheme,
            )?),
            None => None,
        };
        let lower_bound = match ctx.config.evaluate.lower_bound_iterations {
            Some(iterations) => Some(human_lower_bound(
                &matrix_h,
                &ctx.survey,
                iterations,
                ctx.seed("lower_bound"),
            )?),
            None => None,
        };
        Ok(ReportArtifact {
            config_digest: ctx.manifest.config_digest.clone(),
            master_seed: ctx.config.seeds.master,
            wave: ctx.config.wave.clone(),
            method: ctx.config.survey_run.method,
            matching: (ctx.config.survey_run.method == MethodName::AnthologyNatural)
                .then_some(ctx.config.matching.method),
            report,
            subgroups,
            lower_bound,
        })
    })()
    .map_err(|e| e.in_stage("evaluate"))?;

    io::write_json(&path, &artifact)?;
    write_report_csv(&ctx.artifact(REPORT_CSV_FILE), &artifact)?;
    ctx.record(Stage::Evaluate, StageStatus::Computed, Some(digest))?;
    Ok(artifact.report)
}

fn write_report_csv(path: &Path, artifact: &ReportArtifact) -> Result<()> {
    use std::io::Write;
    let mut file = fs::File::create(path)?;
    writeln!(
        file,
        "# config_digest={} master_seed={}",
        artifact.config_digest, artifact.master_seed
    )?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record([
        "wave",
        "method",
        "matching",
        "group",
        "avg_wd",
        "frobenius_gap",
        "cronbach_alpha_virtual",
        "cronbach_alpha_human",
        "n_effective",
    ])?;
    let matching = artifact
        .matching
        .map(|m| format!("{m:?}").to_lowercase())
        .unwrap_or_else(|| "n/a".into());
    let mut write_row = |group: &str, report: &MetricsReport| -> Result<()> {
        writer.write_record([
            artifact.wave.as_str(),
            &format!("{:?}", artifact.method).to_lowercase(),
            &matching,
            group,
            &report.avg_wd.to_string(),
            &report.frobenius_gap.to_string(),
            &report.cronbach_alpha_virtual.to_string(),
            &report
                .cronbach_alpha_human
                .map(|a| a.to_string())
                .unwrap_or_default(),
            &report.n_effective.to_string(),
        ])?;
        Ok(())
    };
    write_row("all", &artifact.report)?;
    if let Some(subgroups) = &artifact.subgroups {
        for (label, report) in subgroups {
            write_row(label, report)?;
        }
    }
    Ok(())
}

/// Run the pipeline through `last` (inclusive), reusing valid
/// artifacts.
pub fn run_pipeline_until(config: &PipelineConfig, last: Stage) -> Result<RunReport> {
    let mut ctx = PipelineCtx::new(config)?;
    let backstories = generate_stage(&mut ctx)?;
    let mut report = None;
    if last >= Stage::Profile {
        let personas = profile_stage(&mut ctx, &backstories)?;
        if last >= Stage::Match {
            let matching = match_stage(&mut ctx, &personas)?;
            if last >= Stage::Administer {
                let cohort = build_cohort(&ctx, &backstories, &personas, matching.as_ref())?;
                let matrix_v = administer_stage(&mut ctx, &cohort)?;
                if last >= Stage::Evaluate {
                    report = Some(evaluate_stage(&mut ctx, &matrix_v)?);
                }
            }
        }
    }
    Ok(RunReport {
        out_dir: ctx.out_dir,
        stages: ctx.stages,
        report,
    })
}

/// Run all five stages.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    run_pipeline_until(config, Stage::Evaluate)
}

/// Compute the split-half human lower bound from the configured
/// respondents and write `lower_bound.json`.
pub fn run_lower_bound(config: &PipelineConfig, iterations: u32) -> Result<LowerBoundArtifact> {
    config.validate()?;
    let out_dir = config.out_dir.clone().ok_or_else(|| Error::InvalidConfig {
        detail: "out_dir is required".into(),
    })?;
    fs::create_dir_all(&out_dir)?;
    let scheme = io::load_scheme(&config.scheme)?;
    let survey = io::load_survey(&config.survey)?;
    let humans = io::ingest_respondents(&config.respondents, &scheme, &survey)?;
    let matrix_h = io::respondents_matrix(&humans, &survey)?;
    let lower_bound = human_lower_bound(
        &matrix_h,
        &survey,
        iterations,
        derive_seed(config.seeds.master, "lower_bound"),
    )?;
    let artifact = LowerBoundArtifact {
        config_digest: config.digest(),
        master_seed: config.seeds.master,
        wave: config.wave.clone(),
        lower_bound,
    };
    io::write_json(&out_dir.join(LOWER_BOUND_FILE), &artifact)?;
    Ok(artifact)
}

/// Evaluate already-written responses against the configured human
/// cohort (the `evaluate` subcommand without recomputation upstream).
pub fn evaluate_existing(config: &PipelineConfig) -> Result<ReportArtifact> {
    config.validate()?;
    let out_dir = config.out_dir.clone().ok_or_else(|| Error::InvalidConfig {
        detail: "out_dir is required".into(),
    })?;
    let scheme = io::load_scheme(&config.scheme)?;
    let survey = io::load_survey(&config.survey)?;
    let humans = io::ingest_respondents(&config.respondents, &scheme, &survey)?;
    let matrix_v = io::load_response_matrix_csv(&out_dir.join(RESPONSES_FILE))?;
    let matrix_h = io::respondents_matrix(&humans, &survey)?;
    let report = evaluate(&matrix_v, &matrix_h, &survey).map_err(|e| e.in_stage("evaluate"))?;
    let subgroups = match &config.evaluate.subgroup_variable {
        Some(variable_id) => Some(
            evaluate_subgroups(
                &matrix_v,
                &matrix_h,
                &humans,
                &Grouping::ByVariable {
                    variable_id: variable_id.clone(),
                },
                &survey,
                &scheme,
            )
            .map_err(|e| e.in_stage("evaluate"))?,
        ),
        None => None,
    };
    let artifact = ReportArtifact {
        config_digest: config.digest(),
        master_seed: config.seeds.master,
        wave: config.wave.clone(),
        method: config.survey_run.method,
        matching: (config.survey_run.method == MethodName::AnthologyNatural)
            .then_some(config.matching.method),
        report,
        subgroups,
        lower_bound: None,
    };
    io::write_json(&out_dir.join(REPORT_FILE), &artifact)?;
    write_report_csv(&out_dir.join(REPORT_CSV_FILE), &artifact)?;
    Ok(artifact)
}
