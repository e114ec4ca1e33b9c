//! File formats: JSONL corpora, JSON artifacts, response-matrix CSV,
//! and respondent ingestion from survey-export CSV.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::persona::{
    DemographicScheme, HumanRespondent, ResponseMatrix, Survey, TraitValue,
};

/// Marker for missing cells in CSV artifacts.
pub const MISSING_MARKER: &str = "NA";

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for item in items {
        serde_json::to_writer(&mut file, item)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line)?);
    }
    Ok(items)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Load and validate a demographic scheme definition.
///
/// Wave-92 schemes must carry the political-affiliation variable in
/// addition to the standard five.
pub fn load_scheme(path: &Path) -> Result<DemographicScheme> {
    let scheme: DemographicScheme = read_json(path)?;
    scheme.validate()?;
    if scheme.wave_tag.eq_ignore_ascii_case("w92")
        && !scheme
            .variables
            .iter()
            .any(|v| v.id == "party" || v.id.contains("politic"))
    {
        return Err(Error::Schema {
            detail: "W92 schemes require a political affiliation variable".into(),
        });
    }
    Ok(scheme)
}

pub fn load_survey(path: &Path) -> Result<Survey> {
    let survey: Survey = read_json(path)?;
    survey.validate()?;
    Ok(survey)
}

/// Persist a response matrix as CSV: a comment header carrying run
/// metadata, then `respondent_id` plus one column per question with
/// canonical indices or `NA`.
pub fn save_response_matrix_csv(
    path: &Path,
    matrix: &ResponseMatrix,
    comments: &[(String, String)],
) -> Result<()> {
    let mut file = fs::File::create(path)?;
    if !comments.is_empty() {
        let line = comments
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(file, "# {line}")?;
    }
    let mut writer = csv::Writer::from_writer(file);
    let mut header = vec!["respondent_id".to_string()];
    header.extend(matrix.question_ids.iter().cloned());
    writer.write_record(&header)?;
    for (id, row) in matrix.respondent_ids.iter().zip(&matrix.cells) {
        let mut record = vec![id.clone()];
        record.extend(row.iter().map(|cell| match cell {
            Some(idx) => idx.to_string(),
            None => MISSING_MARKER.to_string(),
        }));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_response_matrix_csv(path: &Path) -> Result<ResponseMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("respondent_id") {
        return Err(Error::Schema {
            detail: "response CSV must start with a respondent_id column".into(),
        });
    }
    let question_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut respondent_ids = Vec::new();
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record?;
        respondent_ids.push(record.get(0).unwrap_or_default().to_string());
        let row: Result<Vec<Option<usize>>> = (1..record.len())
            .map(|i| {
                let cell = record.get(i).unwrap_or_default().trim();
                if cell == MISSING_MARKER || cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<usize>().map(Some).map_err(|_| Error::Schema {
                        detail: format!("bad cell {cell:?} in {}", path.display()),
                    })
                }
            })
            .collect();
        cells.push(row?);
    }
    ResponseMatrix::new(respondent_ids, question_ids, cells)
}

/// Ingest a human cohort from a survey-export CSV.
///
/// Expected header: `respondent_id`, one column per scheme variable id
/// (canonical option labels), and one column per survey question id
/// (option labels). Demographic labels must resolve; answer labels that
/// do not resolve (refusals, blanks) become missing.
pub fn ingest_respondents(
    path: &Path,
    scheme: &DemographicScheme,
    survey: &Survey,
) -> Result<Vec<HumanRespondent>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);

    let id_col = col("respondent_id").ok_or_else(|| Error::Schema {
        detail: "missing respondent_id column".into(),
    })?;
    let mut variable_cols = Vec::with_capacity(scheme.len());
    for variable in &scheme.variables {
        let idx = col(&variable.id).ok_or_else(|| Error::Schema {
            detail: format!("missing demographic column '{}'", variable.id),
        })?;
        variable_cols.push((variable, idx));
    }
    let mut question_cols = Vec::with_capacity(survey.questions.len());
    let mut missing_questions = Vec::new();
    for question in &survey.questions {
        match col(&question.id) {
            Some(idx) => question_cols.push((question, idx)),
            None => missing_questions.push(question.id.clone()),
        }
    }
    if !missing_questions.is_empty() {
        return Err(Error::Schema {
            detail: format!("missing answer column(s): {}", missing_questions.join(", ")),
        });
    }

    let mut humans = Vec::new();
    for record in reader.records() {
        let record = record?;
        let id = record.get(id_col).unwrap_or_default().trim().to_string();
        if id.is_empty() {
            return Err(Error::Schema {
                detail: "empty respondent_id".into(),
            });
        }
        let mut traits = Vec::with_capacity(scheme.len());
        for (variable, idx) in &variable_cols {
            let label = record.get(*idx).unwrap_or_default().trim();
            let option_index = variable
                .options
                .iter()
                .position(|opt| opt == label)
                .ok_or_else(|| Error::UnknownOptionLabel {
                    variable: variable.id.clone(),
                    label: label.to_string(),
                })?;
            traits.push(TraitValue::new(variable.id.clone(), option_index));
        }
        let mut answers = std::collections::BTreeMap::new();
        for (question, idx) in &question_cols {
            let label = record.get(*idx).unwrap_or_default().trim();
            let answer = question.options.iter().position(|opt| opt == label);
            answers.insert(question.id.clone(), answer);
        }
        let human = HumanRespondent {
            id,
            traits,
            answers: Some(answers),
        };
        human.validate(scheme)?;
        humans.push(human);
    }
    if humans.is_empty() {
        return Err(Error::Schema {
            detail: format!("no respondents in {}", path.display()),
        });
    }
    Ok(humans)
}

/// Assemble the human response matrix from ingested answers, in cohort
/// order.
pub fn respondents_matrix(humans: &[HumanRespondent], survey: &Survey) -> Result<ResponseMatrix> {
    let question_ids: Vec<String> = survey.questions.iter().map(|q| q.id.clone()).collect();
    let cells = humans
        .iter()
        .map(|h| {
            question_ids
                .iter()
                .map(|qid| h.answers.as_ref().and_then(|a| a.get(qid).copied().flatten()))
                .collect()
        })
        .collect();
    ResponseMatrix::new(
        humans.iter().map(|h| h.id.clone()).collect(),
        question_ids,
        cells,
    )
}
