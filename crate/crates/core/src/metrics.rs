//! Evaluation criteria: representativeness (average 1-D Wasserstein
//! distance between per-question answer distributions), consistency
//! (Frobenius norm between response correlation matrices, plus
//! Cronbach's alpha), the split-half human lower bound, and subgroup
//! evaluation.
//!
//! Conventions, mirrored by the fixture oracle script:
//! Wasserstein uses unit spacing between adjacent options; answer
//! distributions exclude missing cells; correlations use
//! pairwise-complete rows with zero-variance pairs mapped to 0;
//! Cronbach's alpha uses complete-case rows and population variance.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::persona::{
    DemographicScheme, HumanRespondent, QuestionScale, ResponseMatrix, Survey, SurveyQuestion,
    PROB_SUM_TOLERANCE,
};
use crate::rng::{derive_seed, seeded_rng};

/// Q-by-Q symmetric Pearson correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub n: usize,
    /// Row-major values.
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// The three headline metrics for one cohort comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_question_wd: BTreeMap<String, f64>,
    pub avg_wd: f64,
    pub frobenius_gap: f64,
    pub cronbach_alpha_virtual: f64,
    /// `None` when the human cohort's total-score variance is zero.
    pub cronbach_alpha_human: Option<f64>,
    /// Complete-case rows of the virtual matrix after missing-data
    /// exclusion.
    pub n_effective: usize,
}

/// Split-half lower bound averaged over random iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub avg_wd: f64,
    pub frobenius_gap: f64,
    /// Mean of the two halves' alphas, averaged over iterations where
    /// both are defined; `None` when no iteration had defined alphas.
    pub cronbach_alpha: Option<f64>,
    pub iterations: u32,
}

/// Empirical answer distribution of one question, excluding missing
/// cells and renormalizing.
pub fn answer_distribution(matrix: &ResponseMatrix, question: &SurveyQuestion) -> Result<Vec<f64>> {
    let qi = matrix.question_index(&question.id)?;
    let mut counts = vec![0u64; question.options.len()];
    for cell in matrix.column(qi).flatten() {
        let slot = counts.get_mut(cell).ok_or_else(|| Error::Schema {
            detail: format!("answer index {cell} out of range for '{}'", question.id),
        })?;
        *slot += 1;
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyColumn {
            question: question.id.clone(),
        });
    }
    Ok(counts.iter().map(|c| *c as f64 / total as f64).collect())
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.iter().any(|x| *x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidDistribution {
            detail: "negative or non-finite probability".into(),
        });
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(Error::InvalidDistribution {
            detail: format!("probabilities sum to {sum}"),
        });
    }
    Ok(())
}

/// 1-D Wasserstein (earth mover's) distance between two distributions
/// over the same ordered option scale, with unit spacing:
/// `sum_i |CDF_p(i) - CDF_q(i)|`.
pub fn wasserstein_1d(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let mut cdf_p = 0.0f64;
    let mut cdf_q = 0.0f64;
    let mut distance = 0.0f64;
    for i in 0..p.len().saturating_sub(1) {
        cdf_p += p[i];
        cdf_q += q[i];
        distance += (cdf_p - cdf_q).abs();
    }
    Ok(distance)
}

/// Wasserstein distance for one survey question across two cohorts.
/// Errors with [`Error::NotOrdinal`] for nominal questions, whose
/// option indices carry no distance structure.
pub fn question_wasserstein(
    matrix_v: &ResponseMatrix,
    matrix_h: &ResponseMatrix,
    question: &SurveyQuestion,
) -> Result<f64> {
    if question.scale == QuestionScale::NominalShufflable {
        return Err(Error::NotOrdinal {
            question: question.id.clone(),
        });
    }
    let p = answer_distribution(matrix_v, question)?;
    let q = answer_distribution(matrix_h, question)?;
    wasserstein_1d(&p, &q)
}

/// Unweighted mean of per-question Wasserstein distances over all
/// survey questions. Returns the per-question map and the mean.
pub fn avg_wasserstein(
    matrix_v: &ResponseMatrix,
    matrix_h: &ResponseMatrix,
    survey: &Survey,
) -> Result<(BTreeMap<String, f64>, f64)> {
    let mut per_question = BTreeMap::new();
    for question in &survey.questions {
        per_question.insert(
            question.id.clone(),
            question_wasserstein(matrix_v, matrix_h, question)?,
        );
    }
    let mean = per_question.values().sum::<f64>() / per_question.len() as f64;
    Ok((per_question, mean))
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Pearson correlation matrix over canonical indices treated as
/// numeric, using pairwise-complete observations. Pairs with fewer
/// than two complete rows or a zero-variance column contribute 0 (with
/// a warning); the diagonal is exactly 1.
pub fn correlation_matrix(matrix: &ResponseMatrix) -> Result<CorrelationMatrix> {
    let n_rows = matrix.n_respondents();
    if n_rows < 2 {
        return Err(Error::TooFewRespondents {
            got: n_rows,
            need: 2,
        });
    }
    let q = matrix.n_questions();
    let mut values = vec![0.0f64; q * q];
    for a in 0..q {
        values[a * q + a] = 1.0;
        for b in (a + 1)..q {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for row in &matrix.cells {
                if let (Some(x), Some(y)) = (row[a], row[b]) {
                    xs.push(x as f64);
                    ys.push(y as f64);
                }
            }
            let r = if xs.len() < 2 {
                log::warn!(
                    "questions '{}' and '{}' share fewer than 2 complete rows; correlation set to 0",
                    matrix.question_ids[a],
                    matrix.question_ids[b]
                );
                0.0
            } else {
                let r = pearson(&xs, &ys);
                if r == 0.0 {
                    log::debug!(
                        "zero or undefined correlation between '{}' and '{}'",
                        matrix.question_ids[a],
                        matrix.question_ids[b]
                    );
                }
                r
            };
            values[a * q + b] = r;
            values[b * q + a] = r;
        }
    }
    Ok(CorrelationMatrix { n: q, values })
}

/// Frobenius norm of the entrywise difference of two correlation
/// matrices.
pub fn frobenius_gap(sigma_v: &CorrelationMatrix, sigma_h: &CorrelationMatrix) -> Result<f64> {
    if sigma_v.n != sigma_h.n {
        return Err(Error::ShapeMismatch {
            detail: format!("{n}x{n} vs {m}x{m}", n = sigma_v.n, m = sigma_h.n),
        });
    }
    let sum: f64 = sigma_v
        .values
        .iter()
        .zip(&sigma_h.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum.sqrt())
}

/// Cronbach's alpha over complete-case rows with population variance:
/// `alpha = Q/(Q-1) * (1 - sum var(item) / var(total))`.
///
/// Items are canonical option indices; storage is already in canonical
/// order, so no reverse-coding happens here.
pub fn cronbach_alpha(matrix: &ResponseMatrix) -> Result<f64> {
    let q = matrix.n_questions();
    if q < 2 {
        return Err(Error::TooFewItems { got: q });
    }
    let complete: Vec<Vec<f64>> = matrix
        .cells
        .iter()
        .filter(|row| row.iter().all(Option::is_some))
        .map(|row| row.iter().map(|c| c.unwrap() as f64).collect())
        .collect();
    if complete.len() < 2 {
        return Err(Error::TooFewRespondents {
            got: complete.len(),
            need: 2,
        });
    }
    let n = complete.len() as f64;
    let mut item_var_sum = 0.0f64;
    for item in 0..q {
        let mean = complete.iter().map(|r| r[item]).sum::<f64>() / n;
        let var = complete.iter().map(|r| (r[item] - mean).powi(2)).sum::<f64>() / n;
        item_var_sum += var;
    }
    let totals: Vec<f64> = complete.iter().map(|r| r.iter().sum()).collect();
    let total_mean = totals.iter().sum::<f64>() / n;
    let total_var = totals.iter().map(|t| (t - total_mean).powi(2)).sum::<f64>() / n;
    if total_var <= 0.0 {
        return Err(Error::ZeroTotalVariance);
    }
    let q = q as f64;
    Ok(q / (q - 1.0) * (1.0 - item_var_sum / total_var))
}

fn complete_case_rows(matrix: &ResponseMatrix) -> usize {
    matrix
        .cells
        .iter()
        .filter(|row| row.iter().all(Option::is_some))
        .count()
}

/// Reorder matrix columns into survey question order, erroring with the
/// full list of missing question ids.
fn align_to_survey(matrix: &ResponseMatrix, survey: &Survey) -> Result<ResponseMatrix> {
    let mut missing = Vec::new();
    let mut order = Vec::with_capacity(survey.questions.len());
    for question in &survey.questions {
        match matrix.question_ids.iter().position(|q| *q == question.id) {
            Some(idx) => order.push(idx),
            None => missing.push(question.id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::QuestionSetMismatch { missing });
    }
    let cells = matrix
        .cells
        .iter()
        .map(|row| order.iter().map(|&qi| row[qi]).collect())
        .collect();
    ResponseMatrix::new(
        matrix.respondent_ids.clone(),
        survey.questions.iter().map(|q| q.id.clone()).collect(),
        cells,
    )
}

/// Assemble the full metrics report for a virtual cohort against its
/// human counterpart.
pub fn evaluate(
    matrix_v: &ResponseMatrix,
    matrix_h: &ResponseMatrix,
    survey: &Survey,
) -> Result<MetricsReport> {
    let mv = align_to_survey(matrix_v, survey)?;
    let mh = align_to_survey(matrix_h, survey)?;
    let (per_question_wd, avg_wd) = avg_wasserstein(&mv, &mh, survey)?;
    let sigma_v = correlation_matrix(&mv)?;
    let sigma_h = correlation_matrix(&mh)?;
    let gap = frobenius_gap(&sigma_v, &sigma_h)?;
    let alpha_v = cronbach_alpha(&mv)?;
    // The human-side alpha can be legitimately undefined for small or
    // refusal-heavy (sub)cohorts; report it as absent rather than
    // failing the whole evaluation.
    let alpha_h = match cronbach_alpha(&mh) {
        Ok(a) => Some(a),
        Err(Error::ZeroTotalVariance | Error::TooFewRespondents { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        per_question_wd,
        avg_wd,
        frobenius_gap: gap,
        cronbach_alpha_virtual: alpha_v,
        cronbach_alpha_human: alpha_h,
        n_effective: complete_case_rows(&mv),
    })
}

fn lower_bound_iteration(
    matrix_h: &ResponseMatrix,
    survey: &Survey,
    seed: u64,
) -> Result<(f64, f64, Option<f64>)> {
    let n = matrix_h.n_respondents();
    let half = n / 2;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = seeded_rng(seed);
    indices.shuffle(&mut rng);
    // Odd cohorts drop one random respondent (the shuffled tail).
    let group_a = matrix_h.select_rows(&indices[..half])?;
    let group_b = matrix_h.select_rows(&indices[half..2 * half])?;
    let (_, wd) = avg_wasserstein(&group_a, &group_b, survey)?;
    let gap = frobenius_gap(&correlation_matrix(&group_a)?, &correlation_matrix(&group_b)?)?;
    let alpha = match (cronbach_alpha(&group_a), cronbach_alpha(&group_b)) {
        (Ok(a), Ok(b)) => Some((a + b) / 2.0),
        (Err(Error::ZeroTotalVariance), _) | (_, Err(Error::ZeroTotalVariance)) => None,
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    Ok((wd, gap, alpha))
}

/// Estimate the best attainable metric values by repeatedly splitting
/// the human cohort into two random equal halves and scoring the halves
/// against each other; results average over `iterations` splits.
///
/// Iterations run on the rayon pool when the `parallel` feature is
/// enabled; per-iteration seeds derive from `seed`, so results match
/// the sequential path.
pub fn human_lower_bound(
    matrix_h: &ResponseMatrix,
    survey: &Survey,
    iterations: u32,
    seed: u64,
) -> Result<LowerBoundReport> {
    check_lower_bound_input(matrix_h, iterations)?;
    #[cfg(feature = "parallel")]
    let results: Result<Vec<_>> = (0..iterations)
        .into_par_iter()
        .map(|i| lower_bound_iteration(matrix_h, survey, derive_seed(seed, &format!("split/{i}"))))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let results: Result<Vec<_>> = (0..iterations)
        .map(|i| lower_bound_iteration(matrix_h, survey, derive_seed(seed, &format!("split/{i}"))))
        .collect();
    aggregate_lower_bound(results?, iterations)
}

/// Sequential reference path for [`human_lower_bound`]; always
/// available so benchmarks can compare against the parallel build.
pub fn human_lower_bound_seq(
    matrix_h: &ResponseMatrix,
    survey: &Survey,
    iterations: u32,
    seed: u64,
) -> Result<LowerBoundReport> {
    check_lower_bound_input(matrix_h, iterations)?;
    let results: Result<Vec<_>> = (0..iterations)
        .map(|i| lower_bound_iteration(matrix_h, survey, derive_seed(seed, &format!("split/{i}"))))
        .collect();
    aggregate_lower_bound(results?, iterations)
}

fn check_lower_bound_input(matrix_h: &ResponseMatrix, iterations: u32) -> Result<()> {
    if matrix_h.n_respondents() < 4 {
        return Err(Error::TooFewRespondents {
            got: matrix_h.n_respondents(),
            need: 4,
        });
    }
    if iterations == 0 {
        return Err(Error::Precondition {
            detail: "iterations must be >= 1".into(),
        });
    }
    Ok(())
}

fn aggregate_lower_bound(
    results: Vec<(f64, f64, Option<f64>)>,
    iterations: u32,
) -> Result<LowerBoundReport> {
    let n = results.len() as f64;
    let avg_wd = results.iter().map(|r| r.0).sum::<f64>() / n;
    let gap = results.iter().map(|r| r.1).sum::<f64>() / n;
    let alphas: Vec<f64> = results.iter().filter_map(|r| r.2).collect();
    let alpha = if alphas.is_empty() {
        None
    } else {
        Some(alphas.iter().sum::<f64>() / alphas.len() as f64)
    };
    Ok(LowerBoundReport {
        avg_wd,
        frobenius_gap: gap,
        cronbach_alpha: alpha,
        iterations,
    })
}

/// How to partition the human cohort for subgroup evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One group per observed option of the variable.
    ByVariable { variable_id: String },
    /// Explicit option bands (e.g. merged age brackets). Declared
    /// bands must be non-empty.
    ByBands {
        variable_id: String,
        bands: Vec<Band>,
    },
}

/// A named union of option indices of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub label: String,
    pub options: Vec<usize>,
}

/// Evaluate the paired cohorts within each subgroup of the human
/// population. Row `i` of the virtual matrix must correspond to human
/// `i` (the matching order).
pub fn evaluate_subgroups(
    matrix_v: &ResponseMatrix,
    matrix_h: &ResponseMatrix,
    humans: &[HumanRespondent],
    grouping: &Grouping,
    survey: &Survey,
    scheme: &DemographicScheme,
) -> Result<BTreeMap<String, MetricsReport>> {
    if matrix_v.n_respondents() != humans.len() || matrix_h.n_respondents() != humans.len() {
        return Err(Error::ShapeMismatch {
            detail: format!(
                "matrices have {}/{} rows for {} humans",
                matrix_v.n_respondents(),
                matrix_h.n_respondents(),
                humans.len()
            ),
        });
    }
    let groups: Vec<(String, Vec<usize>)> = match grouping {
        Grouping::ByVariable { variable_id } => {
            let variable = scheme.variable(variable_id)?;
            let mut by_option: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, human) in humans.iter().enumerate() {
                let t = crate::persona::trait_for(&human.traits, variable_id)?;
                by_option.entry(t.option_index).or_default().push(i);
            }
            by_option
                .into_iter()
                .map(|(opt, rows)| (variable.options[opt].clone(), rows))
                .collect()
        }
        Grouping::ByBands { variable_id, bands } => {
            scheme.variable(variable_id)?;
            let mut out = Vec::with_capacity(bands.len());
            for band in bands {
                let mut rows = Vec::new();
                for (i, human) in humans.iter().enumerate() {
                    let t = crate::persona::trait_for(&human.traits, variable_id)?;
                    if band.options.contains(&t.option_index) {
                        rows.push(i);
                    }
                }
                if rows.is_empty() {
                    return Err(Error::EmptyGroup {
                        group: band.label.clone(),
                    });
                }
                out.push((band.label.clone(), rows));
            }
            out
        }
    };
    let mut reports = BTreeMap::new();
    for (label, rows) in groups {
        let sub_v = matrix_v.select_rows(&rows)?;
        let sub_h = matrix_h.select_rows(&rows)?;
        reports.insert(label, evaluate(&sub_v, &sub_h, survey)?);
    }
    Ok(reports)
}
