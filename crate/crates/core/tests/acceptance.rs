//! Acceptance suite: one test per criterion, each printing a PASS line
//! once its assertions hold (run with `--nocapture` to see them).

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::Rng;

use common::{brute_force_max_weight, masses_to_probs, transport_oracle};
use vpanel::config::PipelineConfig;
use vpanel::demo_survey::{sample_trait_distribution, ProfileOptions};
use vpanel::matching::{
    edge_weight, match_greedy, match_max_weight, MatchMethod, WeightMatrix,
};
use vpanel::metrics::{
    cronbach_alpha, frobenius_gap, human_lower_bound, wasserstein_1d, CorrelationMatrix,
    MetricsReport,
};
use vpanel::persona::{
    Backstory, DemographicScheme, DemographicVariable, DistributionSource, GenerationMeta,
    HumanRespondent, Provenance, QuestionScale, ResponseMatrix, Survey, SurveyQuestion,
    TraitDistribution, TraitValue, VariableKind, VirtualPersona,
};
use vpanel::pipeline::{run_pipeline, Stage, StageStatus};
use vpanel::provider::MockProvider;
use vpanel::rng::seeded_rng;
use vpanel::survey::{
    render_question, run_cohort, AdministerOptions, CohortMember, ConditioningMethod,
};

fn random_matrix(rng: &mut rand_chacha::ChaCha8Rng, n: usize, m: usize) -> WeightMatrix {
    let weights: Vec<f64> = (0..n * m).map(|_| rng.random::<f64>()).collect();
    WeightMatrix::from_weights(n, m, weights).unwrap()
}

#[test]
fn criterion_01_max_weight_matches_brute_force() {
    let mut rng = seeded_rng(101);
    let start = Instant::now();
    for trial in 0..200 {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(n..=6);
        let matrix = random_matrix(&mut rng, n, m);
        let solved = match_max_weight(&matrix).unwrap();
        let oracle = brute_force_max_weight(&matrix);
        assert!(
            (solved.total_weight - oracle).abs() < 1e-9,
            "trial {trial}: solver {} vs oracle {oracle}",
            solved.total_weight
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("criterion 01 PASS: max-weight equals exhaustive optimum on 200 matrices ({elapsed:?})");
}

#[test]
fn criterion_02_greedy_dominates_max_weight() {
    let mut rng = seeded_rng(202);
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(n..=6);
        let matrix = random_matrix(&mut rng, n, m);
        let greedy = match_greedy(&matrix);
        let optimal = match_max_weight(&matrix).unwrap();
        for i in 0..n {
            assert!(
                greedy.pair_weights[i] >= optimal.pair_weights[i],
                "row {i}: greedy {} < max-weight {}",
                greedy.pair_weights[i],
                optimal.pair_weights[i]
            );
        }
        assert!(greedy.total_weight >= optimal.total_weight);
    }
    println!("criterion 02 PASS: per-row greedy dominance on 200 matrices");
}

fn random_scheme(rng: &mut rand_chacha::ChaCha8Rng, k: usize) -> DemographicScheme {
    DemographicScheme {
        wave_tag: "acc".into(),
        variables: (0..k)
            .map(|l| {
                let m = rng.random_range(2..=4);
                DemographicVariable {
                    id: format!("v{l}"),
                    question_text: format!("Variable {l}?"),
                    options: (0..m).map(|i| format!("o{i}")).collect(),
                    kind: VariableKind::Nominal,
                    extraction_eligible: false,
                    bio_template: None,
                }
            })
            .collect(),
    }
}

fn random_distribution(rng: &mut rand_chacha::ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 1e-3).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|x| x / sum).collect()
}

#[test]
fn criterion_03_edge_weight_equals_direct_product() {
    let mut rng = seeded_rng(303);
    for _ in 0..50 {
        let k = rng.random_range(1..=6);
        let scheme = random_scheme(&mut rng, k);
        let persona = VirtualPersona {
            backstory_id: "b".into(),
            distributions: scheme
                .variables
                .iter()
                .map(|v| {
                    TraitDistribution::new(
                        v.id.clone(),
                        random_distribution(&mut rng, v.options.len()),
                        DistributionSource::Sampled,
                    )
                    .unwrap()
                })
                .collect(),
            assigned_traits: None,
            profile_meta: None,
        };
        let human = HumanRespondent {
            id: "h".into(),
            traits: scheme
                .variables
                .iter()
                .map(|v| TraitValue::new(v.id.clone(), rng.random_range(0..v.options.len())))
                .collect(),
            answers: None,
        };
        // Direct product, no log-domain detour.
        let mut direct = 1.0f64;
        for (dist, t) in persona.distributions.iter().zip(&human.traits) {
            direct *= dist.probs[t.option_index];
        }
        let computed = edge_weight(&human, &persona, &scheme).unwrap();
        assert!(
            (computed - direct).abs() < 1e-12,
            "edge weight {computed} vs direct {direct}"
        );
    }

    // Any zero factor annihilates exactly.
    let scheme = random_scheme(&mut seeded_rng(1), 3);
    let mut persona = VirtualPersona {
        backstory_id: "b".into(),
        distributions: scheme
            .variables
            .iter()
            .map(|v| {
                let mut probs = vec![0.0; v.options.len()];
                probs[0] = 1.0;
                TraitDistribution::new(v.id.clone(), probs, DistributionSource::Sampled).unwrap()
            })
            .collect(),
        assigned_traits: None,
        profile_meta: None,
    };
    persona.distributions[1].probs = random_distribution(&mut seeded_rng(2), persona.distributions[1].probs.len());
    let human = HumanRespondent {
        id: "h".into(),
        traits: vec![
            TraitValue::new("v0", 1), // zero-probability factor
            TraitValue::new("v1", 0),
            TraitValue::new("v2", 0),
        ],
        answers: None,
    };
    assert_eq!(edge_weight(&human, &persona, &scheme).unwrap(), 0.0);
    println!("criterion 03 PASS: edge weights match direct products on 50 pairs, zero annihilates");
}

#[test]
fn criterion_04_wasserstein_metric_suite() {
    let mut rng = seeded_rng(404);
    for _ in 0..1000 {
        let p = random_distribution(&mut rng, 5);
        let q = random_distribution(&mut rng, 5);
        let r = random_distribution(&mut rng, 5);
        let d_pq = wasserstein_1d(&p, &q).unwrap();
        let d_qp = wasserstein_1d(&q, &p).unwrap();
        let d_pr = wasserstein_1d(&p, &r).unwrap();
        let d_qr = wasserstein_1d(&q, &r).unwrap();
        assert!(wasserstein_1d(&p, &p).unwrap() <= 1e-9);
        assert!(d_pq >= 0.0);
        assert!((d_pq - d_qp).abs() <= 1e-9, "symmetry");
        assert!(d_pr <= d_pq + d_qr + 1e-9, "triangle inequality");
        assert!(d_pq <= 4.0 + 1e-9, "bound m-1");
    }

    // Worked examples against the transport-enumeration oracle.
    let cases: [(&[u64], &[u64]); 3] = [
        (&[1, 1, 1, 1, 1], &[1, 1, 1, 1, 1]),
        (&[1, 0, 0, 0, 0], &[0, 0, 0, 0, 1]),
        (&[1, 1, 0, 0, 0], &[0, 0, 0, 1, 1]),
    ];
    let expected = [0.0, 4.0, 3.0];
    for ((masses_p, masses_q), want) in cases.iter().zip(expected) {
        let oracle = transport_oracle(masses_p, masses_q);
        let computed =
            wasserstein_1d(&masses_to_probs(masses_p), &masses_to_probs(masses_q)).unwrap();
        assert_eq!(oracle, want);
        assert_eq!(computed, want, "worked example must match exactly");
    }
    // And the oracle agrees on random rational distributions.
    for _ in 0..200 {
        let masses_p: Vec<u64> = (0..5).map(|_| rng.random_range(0..20)).collect();
        let total: u64 = masses_p.iter().sum();
        if total == 0 {
            continue;
        }
        let mut masses_q = vec![0u64; 5];
        for _ in 0..total {
            masses_q[rng.random_range(0..5)] += 1;
        }
        let oracle = transport_oracle(&masses_p, &masses_q);
        let computed =
            wasserstein_1d(&masses_to_probs(&masses_p), &masses_to_probs(&masses_q)).unwrap();
        assert!(
            (computed - oracle).abs() < 1e-9,
            "random rational case: {computed} vs {oracle}"
        );
    }
    println!("criterion 04 PASS: metric axioms on 1000 triples, worked examples exact");
}

fn matrix_from(rows: Vec<Vec<Option<usize>>>, q: usize) -> ResponseMatrix {
    ResponseMatrix::new(
        (0..rows.len()).map(|i| format!("r{i}")).collect(),
        (0..q).map(|i| format!("q{i}")).collect(),
        rows,
    )
    .unwrap()
}

#[test]
fn criterion_05_psychometrics() {
    // Perfectly correlated equal-variance items.
    let perfect = matrix_from(
        vec![
            vec![Some(1), Some(1)],
            vec![Some(2), Some(2)],
            vec![Some(3), Some(3)],
        ],
        2,
    );
    assert!((cronbach_alpha(&perfect).unwrap() - 1.0).abs() <= 1e-9);

    // Independent items at N = 10000.
    let mut rng = seeded_rng(505);
    let rows: Vec<Vec<Option<usize>>> = (0..10000)
        .map(|_| (0..4).map(|_| Some(rng.random_range(0..5))).collect())
        .collect();
    let alpha = cronbach_alpha(&matrix_from(rows, 4)).unwrap();
    assert!(alpha.abs() < 0.1, "independent alpha {alpha}");

    // alpha <= 1 + 1e-9 on 1000 random matrices.
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.random_range(3..=12);
        let q = rng.random_range(2..=6);
        let rows: Vec<Vec<Option<usize>>> = (0..n)
            .map(|_| (0..q).map(|_| Some(rng.random_range(0..5))).collect())
            .collect();
        match cronbach_alpha(&matrix_from(rows, q)) {
            Ok(alpha) => {
                assert!(alpha <= 1.0 + 1e-9, "alpha {alpha} exceeds 1");
                checked += 1;
            }
            Err(_) => continue, // degenerate draw; does not count
        }
    }

    // Frobenius gap: identity and the hand-computed 2x2 example.
    let eye = CorrelationMatrix {
        n: 2,
        values: vec![1.0, 0.0, 0.0, 1.0],
    };
    let ones = CorrelationMatrix {
        n: 2,
        values: vec![1.0, 1.0, 1.0, 1.0],
    };
    assert_eq!(frobenius_gap(&eye, &eye).unwrap(), 0.0);
    assert!((frobenius_gap(&eye, &ones).unwrap() - 2f64.sqrt()).abs() <= 1e-9);
    println!("criterion 05 PASS: alpha identities, bounds, and Frobenius hand value");
}

#[test]
fn criterion_06_lower_bound_degenerate_population() {
    let rows = vec![vec![Some(2); 8]; 200];
    let matrix = matrix_from(rows, 8);
    let survey = Survey {
        wave_tag: "acc".into(),
        questions: (0..8)
            .map(|i| SurveyQuestion {
                id: format!("q{i}"),
                text: format!("Q{i}?"),
                options: (0..5).map(|o| format!("opt{o}")).collect(),
                scale: QuestionScale::LikertReversible,
                preamble: None,
            })
            .collect(),
    };
    let start = Instant::now();
    let report = human_lower_bound(&matrix, &survey, 100, 606).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(report.avg_wd, 0.0, "degenerate WD must be exactly 0");
    assert_eq!(report.frobenius_gap, 0.0, "degenerate gap must be exactly 0");
    assert_eq!(report.cronbach_alpha, None, "alpha undefined");
    assert!(elapsed.as_secs_f64() < 2.0, "took {elapsed:?}");
    println!("criterion 06 PASS: degenerate lower bound exact zeros in {elapsed:?}");
}

#[test]
fn criterion_07_demographic_estimation_fidelity() {
    let variable = DemographicVariable {
        id: "age".into(),
        question_text: "Which age group describes you?".into(),
        options: vec!["18-29".into(), "30-49".into(), "50-64".into(), "65+".into()],
        kind: VariableKind::Ordinal,
        extraction_eligible: true,
        bio_template: None,
    };
    let backstory = Backstory {
        id: "b0".into(),
        text: "I grew up in a small town and now fix radios for a living.".into(),
        provenance: Provenance::Natural,
        generation_meta: GenerationMeta {
            model_id: "mock".into(),
            temperature: 1.0,
            top_p: 1.0,
            prompt_template: "natural-v1".into(),
            seed: None,
        },
    };
    // 40-sample protocol: 30 x (A), 10 x (B).
    let mut responses = vec!["(A)".to_string(); 30];
    responses.extend(vec!["(B)".to_string(); 10]);
    let fixture = serde_json::json!({
        "rules": [{"match": {"regex": "Which age group"}, "responses": responses}]
    });
    let mock = MockProvider::from_json(&fixture.to_string()).unwrap();
    let sampled = sample_trait_distribution(
        &backstory,
        &variable,
        &mock,
        40,
        &ProfileOptions::default(),
    )
    .unwrap();
    assert_eq!(sampled.distribution.probs, vec![0.75, 0.25, 0.0, 0.0]);

    // Extraction-first path yields one-hot extracted distributions.
    let scheme = DemographicScheme {
        wave_tag: "acc".into(),
        variables: vec![variable],
    };
    let extract_fixture = r#"{"rules": [
        {"match": {"regex": "locate demographic"}, "responses": ["(C)"]},
        {"match": {"regex": ".*"}, "responses": ["(A)"]}
    ]}"#;
    let mock = MockProvider::from_json(extract_fixture).unwrap();
    let persona = vpanel::demo_survey::profile_persona(
        &backstory,
        &scheme,
        vpanel::demo_survey::ProfileProviders::single(&mock),
        &ProfileOptions::default(),
    )
    .unwrap();
    let dist = persona.distribution("age").unwrap();
    assert_eq!(dist.source, DistributionSource::Extracted);
    assert_eq!(dist.probs, vec![0.0, 0.0, 1.0, 0.0]);
    println!("criterion 07 PASS: 40-sample ratio exact, extraction one-hot");
}

#[test]
fn criterion_08_randomization_correctness() {
    let mut rng = seeded_rng(808);
    for trial in 0..1000 {
        let m = rng.random_range(2..=8);
        let scale = if rng.random_bool(0.5) {
            QuestionScale::LikertReversible
        } else {
            QuestionScale::NominalShufflable
        };
        let question = SurveyQuestion {
            id: format!("q{trial}"),
            text: "text".into(),
            options: (0..m).map(|i| format!("opt{i}")).collect(),
            scale,
            preamble: None,
        };
        let seed: u64 = rng.random();
        let rendered = render_question(&question, &mut seeded_rng(seed));
        // index_map bijection and round-trip identity.
        let mut seen = vec![false; m];
        for pos in 0..m {
            let canonical = rendered.index_map[pos];
            assert!(!seen[canonical], "index_map not injective");
            seen[canonical] = true;
            assert_eq!(rendered.display_options[pos], question.options[canonical]);
            assert_eq!(rendered.display_position(canonical), Some(pos));
        }
    }

    // Metamorphic: canonical matrix invariant under presentation
    // randomization when the mock answers by option content.
    let scheme = DemographicScheme {
        wave_tag: "acc".into(),
        variables: vec![DemographicVariable {
            id: "age".into(),
            question_text: "Which age group describes you?".into(),
            options: vec!["18-29".into(), "30-49".into(), "50+".into()],
            kind: VariableKind::Ordinal,
            extraction_eligible: false,
            bio_template: None,
        }],
    };
    let survey = Survey {
        wave_tag: "acc".into(),
        questions: vec![
            SurveyQuestion {
                id: "qa".into(),
                text: "First topic, thumbs up or down?".into(),
                options: vec!["Approve".into(), "Unsure".into(), "Disapprove".into()],
                scale: QuestionScale::LikertReversible,
                preamble: None,
            },
            SurveyQuestion {
                id: "qb".into(),
                text: "Second topic, pick a flavor.".into(),
                options: vec!["Vanilla".into(), "Chocolate".into(), "Pistachio".into()],
                scale: QuestionScale::NominalShufflable,
                preamble: None,
            },
        ],
    };
    let fixture = r#"{"rules": [
        {"match": {"regex": "Second topic"}, "responses": ["Pistachio"]},
        {"match": {"regex": "First topic"}, "responses": ["Disapprove"]}
    ]}"#;
    let cohort: Vec<CohortMember> = (0..5)
        .map(|i| {
            CohortMember::Human(HumanRespondent {
                id: format!("h{i}"),
                traits: vec![TraitValue::new("age", i % 3)],
                answers: None,
            })
        })
        .collect();
    let run = |seed: u64| {
        let mock = MockProvider::from_json(fixture).unwrap();
        run_cohort(
            &cohort,
            &survey,
            ConditioningMethod::Qa,
            &scheme,
            &mock,
            seed,
            &AdministerOptions::default(),
        )
        .unwrap()
        .matrix
    };
    let m1 = run(1);
    let m2 = run(99);
    assert_eq!(m1, m2, "matrices must be equal under different seeds");
    assert!(m1.cells.iter().all(|row| row == &vec![Some(2), Some(2)]));
    println!("criterion 08 PASS: 1000 round-trips, metamorphic matrix equality");
}

fn demo_config(out: &Path) -> PipelineConfig {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo/config.toml");
    let mut config = PipelineConfig::load(&fixture).unwrap();
    config.out_dir = Some(out.to_path_buf());
    config
}

fn artifact_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        out.insert(
            entry.file_name().to_string_lossy().into_owned(),
            std::fs::read(entry.path()).unwrap(),
        );
    }
    out
}

#[test]
fn criterion_09_end_to_end_determinism() {
    let start = Instant::now();
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();

    let fixtures_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo");
    let inputs_before = artifact_bytes(&fixtures_dir);

    let report1 = run_pipeline(&demo_config(dir1.path())).unwrap();
    let report2 = run_pipeline(&demo_config(dir2.path())).unwrap();
    assert!(report1
        .stages
        .iter()
        .all(|s| s.status == StageStatus::Computed));

    let bytes1 = artifact_bytes(dir1.path());
    let bytes2 = artifact_bytes(dir2.path());
    assert_eq!(
        bytes1.keys().collect::<Vec<_>>(),
        bytes2.keys().collect::<Vec<_>>()
    );
    for (name, content) in &bytes1 {
        assert_eq!(content, &bytes2[name], "artifact {name} differs between runs");
    }
    for name in [
        "anthology.jsonl",
        "personas.jsonl",
        "matching.json",
        "responses.csv",
        "report.json",
    ] {
        assert!(bytes1.contains_key(name), "missing artifact {name}");
    }
    let _ = report2;

    // Switching greedy -> random changes matching.json and the report
    // but nothing upstream.
    let mut random_config = demo_config(dir1.path());
    random_config.matching.method = MatchMethod::Random;
    let rerun = run_pipeline(&random_config).unwrap();
    assert_eq!(rerun.status(Stage::Generate), Some(StageStatus::Reused));
    assert_eq!(rerun.status(Stage::Profile), Some(StageStatus::Reused));
    assert_eq!(rerun.status(Stage::Match), Some(StageStatus::Computed));
    let bytes_after = artifact_bytes(dir1.path());
    assert_eq!(bytes_after["anthology.jsonl"], bytes1["anthology.jsonl"]);
    assert_eq!(bytes_after["personas.jsonl"], bytes1["personas.jsonl"]);
    assert_ne!(bytes_after["matching.json"], bytes1["matching.json"]);
    assert_ne!(bytes_after["report.json"], bytes1["report.json"]);

    // Input files are never mutated.
    assert_eq!(artifact_bytes(&fixtures_dir), inputs_before);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("criterion 09 PASS: byte-identical runs, isolated method switch ({elapsed:?})");
}

#[derive(serde::Deserialize)]
struct EvaluateFixture {
    question_ids: Vec<String>,
    options_per_question: Vec<usize>,
    respondent_ids_v: Vec<String>,
    respondent_ids_h: Vec<String>,
    cells_v: Vec<Vec<Option<usize>>>,
    cells_h: Vec<Vec<Option<usize>>>,
    expected: ExpectedMetrics,
}

#[derive(serde::Deserialize)]
struct ExpectedMetrics {
    per_question_wd: BTreeMap<String, f64>,
    avg_wd: f64,
    frobenius_gap: f64,
    cronbach_alpha_virtual: f64,
    cronbach_alpha_human: f64,
    n_effective: usize,
}

#[test]
fn criterion_10_evaluate_matches_independent_oracle() {
    let raw = include_str!("fixtures/evaluate_fixture.json");
    let fixture: EvaluateFixture = serde_json::from_str(raw).unwrap();
    let survey = Survey {
        wave_tag: "fixture".into(),
        questions: fixture
            .question_ids
            .iter()
            .zip(&fixture.options_per_question)
            .map(|(id, &m)| SurveyQuestion {
                id: id.clone(),
                text: format!("Question {id}?"),
                options: (0..m).map(|i| format!("opt{i}")).collect(),
                scale: QuestionScale::LikertReversible,
                preamble: None,
            })
            .collect(),
    };
    let matrix_v = ResponseMatrix::new(
        fixture.respondent_ids_v,
        fixture.question_ids.clone(),
        fixture.cells_v,
    )
    .unwrap();
    let matrix_h = ResponseMatrix::new(
        fixture.respondent_ids_h,
        fixture.question_ids.clone(),
        fixture.cells_h,
    )
    .unwrap();

    let report: MetricsReport = vpanel::metrics::evaluate(&matrix_v, &matrix_h, &survey).unwrap();
    for (qid, want) in &fixture.expected.per_question_wd {
        let got = report.per_question_wd[qid];
        assert!(
            (got - want).abs() < 1e-9,
            "per-question WD {qid}: {got} vs {want}"
        );
    }
    assert!((report.avg_wd - fixture.expected.avg_wd).abs() < 1e-9);
    assert!((report.frobenius_gap - fixture.expected.frobenius_gap).abs() < 1e-9);
    assert!(
        (report.cronbach_alpha_virtual - fixture.expected.cronbach_alpha_virtual).abs() < 1e-9
    );
    assert!(
        (report.cronbach_alpha_human.unwrap() - fixture.expected.cronbach_alpha_human).abs()
            < 1e-9
    );
    assert_eq!(report.n_effective, fixture.expected.n_effective);
    println!("criterion 10 PASS: evaluate matches the oracle fixture to 1e-9");
}
