//! Edge weights between humans and personas, and the three cohort
//! selection strategies: greedy argmax, maximum-weight one-to-one
//! assignment, and the random baseline.

mod lsap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::persona::{
    trait_likelihood, DemographicScheme, HumanRespondent, TraitValue, VirtualPersona,
};

/// Dense human-by-persona edge weights.
///
/// `weights[i * personas + j]` is the product of the persona's
/// likelihoods of human `i`'s traits; `log_weights` holds the log-domain
/// values with `-inf` marking exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub humans: usize,
    pub personas: usize,
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl WeightMatrix {
    pub fn from_weights(humans: usize, personas: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != humans * personas || humans == 0 || personas == 0 {
            return Err(Error::ShapeMismatch {
                detail: format!(
                    "weight matrix {humans}x{personas} needs {} entries, got {}",
                    humans * personas,
                    weights.len()
                ),
            });
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Precondition {
                detail: "edge weights must lie in [0, 1]".into(),
            });
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            humans,
            personas,
            weights,
            log_weights,
        })
    }

    #[inline]
    pub fn at(&self, human: usize, persona: usize) -> f64 {
        self.weights[human * self.personas + persona]
    }

    fn row(&self, human: usize) -> &[f64] {
        &self.weights[human * self.personas..(human + 1) * self.personas]
    }
}

/// Which selection strategy produced a matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    Greedy,
    MaxWeight,
    Random,
}

/// An assignment of every human to one persona.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingResult {
    pub method: MatchMethod,
    /// `assignment[i]` is the persona index matched to human `i`.
    pub assignment: Vec<usize>,
    pub pair_weights: Vec<f64>,
    pub total_weight: f64,
}

impl MatchingResult {
    fn from_assignment(method: MatchMethod, matrix: &WeightMatrix, assignment: Vec<usize>) -> Self {
        let pair_weights: Vec<f64> = assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| matrix.at(i, j))
            .collect();
        let total_weight = pair_weights.iter().sum();
        Self {
            method,
            assignment,
            pair_weights,
            total_weight,
        }
    }
}

/// Edge weight of one (human, persona) pair: the product over scheme
/// variables of the persona's likelihood of the human's trait.
///
/// Accumulates in the log domain and exponentiates; any zero factor
/// short-circuits to exactly 0.
pub fn edge_weight(
    human: &HumanRespondent,
    persona: &VirtualPersona,
    scheme: &DemographicScheme,
) -> Result<f64> {
    edge_weight_floored(human, persona, scheme, None)
}

/// [`edge_weight`] with an optional per-factor probability floor.
/// `floor` is off by default; when set, each factor is clamped below at
/// the given value before entering the product.
pub fn edge_weight_floored(
    human: &HumanRespondent,
    persona: &VirtualPersona,
    scheme: &DemographicScheme,
    floor: Option<f64>,
) -> Result<f64> {
    let mut log_sum = 0.0f64;
    for variable in &scheme.variables {
        let trait_value = human
            .traits
            .iter()
            .find(|t| t.variable_id == variable.id)
            .ok_or_else(|| Error::UnknownVariable {
                id: variable.id.clone(),
            })?;
        let mut p = trait_likelihood(persona, trait_value)?;
        if let Some(eps) = floor {
            p = p.max(eps);
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        log_sum += p.ln();
    }
    Ok(log_sum.exp())
}

fn weight_row(
    human: &HumanRespondent,
    personas: &[VirtualPersona],
    scheme: &DemographicScheme,
    floor: Option<f64>,
) -> Result<Vec<f64>> {
    personas
        .iter()
        .map(|p| edge_weight_floored(human, p, scheme, floor))
        .collect()
}

/// Complete weight matrix over all (human, persona) pairs. Every entry
/// is present, including exact zeros.
///
/// Rows are computed on the rayon pool when the `parallel` feature is
/// enabled; the result is identical either way.
pub fn weight_matrix(
    humans: &[HumanRespondent],
    personas: &[VirtualPersona],
    scheme: &DemographicScheme,
) -> Result<WeightMatrix> {
    weight_matrix_floored(humans, personas, scheme, None)
}

pub fn weight_matrix_floored(
    humans: &[HumanRespondent],
    personas: &[VirtualPersona],
    scheme: &DemographicScheme,
    floor: Option<f64>,
) -> Result<WeightMatrix> {
    #[cfg(feature = "parallel")]
    {
        let rows: Result<Vec<Vec<f64>>> = humans
            .par_iter()
            .map(|h| weight_row(h, personas, scheme, floor))
            .collect();
        assemble_matrix(humans.len(), personas.len(), rows?)
    }
    #[cfg(not(feature = "parallel"))]
    {
        weight_matrix_floored_seq(humans, personas, scheme, floor)
    }
}

/// Sequential reference path for [`weight_matrix`]; always available so
/// benchmarks can compare against the parallel build.
pub fn weight_matrix_seq(
    humans: &[HumanRespondent],
    personas: &[VirtualPersona],
    scheme: &DemographicScheme,
) -> Result<WeightMatrix> {
    weight_matrix_floored_seq(humans, personas, scheme, None)
}

pub fn weight_matrix_floored_seq(
    humans: &[HumanRespondent],
    personas: &[VirtualPersona],
    scheme: &DemographicScheme,
    floor: Option<f64>,
) -> Result<WeightMatrix> {
    let rows: Result<Vec<Vec<f64>>> = humans
        .iter()
        .map(|h| weight_row(h, personas, scheme, floor))
        .collect();
    assemble_matrix(humans.len(), personas.len(), rows?)
}

fn assemble_matrix(humans: usize, personas: usize, rows: Vec<Vec<f64>>) -> Result<WeightMatrix> {
    let mut weights = Vec::with_capacity(humans * personas);
    for row in rows {
        weights.extend(row);
    }
    WeightMatrix::from_weights(humans, personas, weights)
}

fn warn_all_zero_rows(matrix: &WeightMatrix) {
    for i in 0..matrix.humans {
        if matrix.row(i).iter().all(|w| *w == 0.0) {
            log::warn!("human row {i} has all-zero weights; assignment is arbitrary");
        }
    }
}

/// Per-human argmax matching; personas may be reused. Ties break to the
/// lowest persona index.
pub fn match_greedy(matrix: &WeightMatrix) -> MatchingResult {
    warn_all_zero_rows(matrix);
    let assignment: Vec<usize> = (0..matrix.humans)
        .map(|i| {
            let row = matrix.row(i);
            let mut best = 0usize;
            for (j, w) in row.iter().enumerate() {
                if *w > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    MatchingResult::from_assignment(MatchMethod::Greedy, matrix, assignment)
}

/// Injective matching maximizing total weight, solved as a rectangular
/// assignment problem on negated weights. Deterministic for fixed
/// input. Requires at least as many personas as humans.
pub fn match_max_weight(matrix: &WeightMatrix) -> Result<MatchingResult> {
    if matrix.personas < matrix.humans {
        return Err(Error::InfeasibleOneToOne {
            humans: matrix.humans,
            personas: matrix.personas,
        });
    }
    warn_all_zero_rows(matrix);
    let cost: Vec<f64> = matrix.weights.iter().map(|w| -w).collect();
    let assignment = lsap::solve_lsap_min(matrix.humans, matrix.personas, &cost);
    Ok(MatchingResult::from_assignment(
        MatchMethod::MaxWeight,
        matrix,
        assignment,
    ))
}

/// Baseline: each human gets an independently uniform persona.
pub fn match_random(matrix: &WeightMatrix, rng: &mut ChaCha8Rng) -> MatchingResult {
    let assignment: Vec<usize> = (0..matrix.humans)
        .map(|_| rng.random_range(0..matrix.personas))
        .collect();
    MatchingResult::from_assignment(MatchMethod::Random, matrix, assignment)
}

/// Copy each human's trait tuple onto their matched persona.
///
/// Returns one conditioned persona per human, in human order;
/// non-injective matchings duplicate backstories.
pub fn assign_traits(
    result: &MatchingResult,
    humans: &[HumanRespondent],
    personas: &[VirtualPersona],
) -> Result<Vec<VirtualPersona>> {
    if result.assignment.len() != humans.len() {
        return Err(Error::ShapeMismatch {
            detail: format!(
                "assignment covers {} humans, cohort has {}",
                result.assignment.len(),
                humans.len()
            ),
        });
    }
    result
        .assignment
        .iter()
        .zip(humans)
        .map(|(&j, human)| {
            let persona = personas.get(j).ok_or_else(|| Error::ShapeMismatch {
                detail: format!("assignment references persona {j} of {}", personas.len()),
            })?;
            let mut conditioned = persona.clone();
            conditioned.assigned_traits = Some(human.traits.clone());
            Ok(conditioned)
        })
        .collect()
}

/// Convenience for building trait tuples in tests and fixtures.
pub fn trait_tuple(pairs: &[(&str, usize)]) -> Vec<TraitValue> {
    pairs
        .iter()
        .map(|(id, idx)| TraitValue::new(*id, *idx))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::{
        DemographicVariable, DistributionSource, TraitDistribution, VariableKind,
    };
    use crate::rng::seeded_rng;

    fn scheme(k: usize) -> DemographicScheme {
        DemographicScheme {
            wave_tag: "test".into(),
            variables: (0..k)
                .map(|l| DemographicVariable {
                    id: format!("v{l}"),
                    question_text: format!("Variable {l}?"),
                    options: vec!["a".into(), "b".into(), "c".into()],
                    kind: VariableKind::Nominal,
                    extraction_eligible: false,
                    bio_template: None,
                })
                .collect(),
        }
    }

    fn persona(probs_per_var: &[[f64; 3]]) -> VirtualPersona {
        VirtualPersona {
            backstory_id: "b".into(),
            distributions: probs_per_var
                .iter()
                .enumerate()
                .map(|(l, p)| {
                    TraitDistribution::new(format!("v{l}"), p.to_vec(), DistributionSource::Sampled)
                        .unwrap()
                })
                .collect(),
            assigned_traits: None,
            profile_meta: None,
        }
    }

    fn human(indices: &[usize]) -> HumanRespondent {
        HumanRespondent {
            id: "h".into(),
            traits: indices
                .iter()
                .enumerate()
                .map(|(l, &i)| TraitValue::new(format!("v{l}"), i))
                .collect(),
            answers: None,
        }
    }

    fn matrix(rows: &[&[f64]]) -> WeightMatrix {
        let humans = rows.len();
        let personas = rows[0].len();
        let weights = rows.iter().flat_map(|r| r.iter().copied()).collect();
        WeightMatrix::from_weights(humans, personas, weights).unwrap()
    }

    #[test]
    fn edge_weight_identity_case() {
        let s = scheme(3);
        let p = persona(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let h = human(&[0, 1, 2]);
        assert_eq!(edge_weight(&h, &p, &s).unwrap(), 1.0);
    }

    #[test]
    fn edge_weight_hand_product() {
        let s = scheme(2);
        let p = persona(&[[0.6, 0.4, 0.0], [0.5, 0.25, 0.25]]);
        let h = human(&[0, 0]);
        let w = edge_weight(&h, &p, &s).unwrap();
        assert!((w - 0.30).abs() < 1e-12);
    }

    #[test]
    fn edge_weight_zero_annihilates() {
        let s = scheme(3);
        let p = persona(&[[0.9, 0.1, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.0]]);
        let h = human(&[0, 0, 0]); // second factor is exactly 0
        assert_eq!(edge_weight(&h, &p, &s).unwrap(), 0.0);
    }

    #[test]
    fn edge_weight_floor_lifts_zero() {
        let s = scheme(1);
        let p = persona(&[[1.0, 0.0, 0.0]]);
        let h = human(&[1]);
        assert_eq!(edge_weight(&h, &p, &s).unwrap(), 0.0);
        let floored = edge_weight_floored(&h, &p, &s, Some(1e-4)).unwrap();
        assert!((floored - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn weight_matrix_complete_and_matches_seq() {
        let s = scheme(2);
        let personas = vec![
            persona(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
            persona(&[[0.5, 0.5, 0.0], [0.2, 0.8, 0.0]]),
        ];
        let humans = vec![human(&[0, 0]), human(&[1, 1])];
        let m = weight_matrix(&humans, &personas, &s).unwrap();
        let m_seq = weight_matrix_seq(&humans, &personas, &s).unwrap();
        assert_eq!(m, m_seq);
        // Hand products: h0 = (1*1, 0.5*0.2); h1 = (0*0, 0.5*0.8).
        assert!((m.at(0, 0) - 1.0).abs() < 1e-12);
        assert!((m.at(0, 1) - 0.10).abs() < 1e-12);
        assert_eq!(m.at(1, 0), 0.0);
        assert!((m.at(1, 1) - 0.40).abs() < 1e-12);
        assert_eq!(m.weights.len(), 4);
        // Zero entries stay present with -inf logs.
        assert!(m.log_weights[2].is_infinite());
    }

    #[test]
    fn greedy_hand_example() {
        let m = matrix(&[&[0.9, 0.2], &[0.7, 0.4]]);
        let r = match_greedy(&m);
        assert_eq!(r.assignment, vec![0, 0]);
        assert!((r.total_weight - 1.6).abs() < 1e-12);
    }

    #[test]
    fn greedy_tie_breaks_low_index() {
        let m = matrix(&[&[0.5, 0.5, 0.5]]);
        assert_eq!(match_greedy(&m).assignment, vec![0]);
    }

    #[test]
    fn greedy_single_row() {
        let m = matrix(&[&[0.1, 0.8, 0.3]]);
        assert_eq!(match_greedy(&m).assignment, vec![1]);
    }

    #[test]
    fn max_weight_hand_example() {
        let m = matrix(&[&[0.9, 0.2], &[0.7, 0.4]]);
        let r = match_max_weight(&m).unwrap();
        assert_eq!(r.assignment, vec![0, 1]);
        assert!((r.total_weight - 1.3).abs() < 1e-12);
    }

    #[test]
    fn max_weight_infeasible_guard() {
        let m = matrix(&[&[0.9], &[0.7]]);
        let err = match_max_weight(&m).unwrap_err();
        assert!(matches!(err, Error::InfeasibleOneToOne { .. }));
    }

    #[test]
    fn max_weight_injective() {
        let m = matrix(&[&[0.9, 0.8, 0.1], &[0.9, 0.7, 0.2]]);
        let r = match_max_weight(&m).unwrap();
        assert_ne!(r.assignment[0], r.assignment[1]);
    }

    #[test]
    fn random_matching_is_seeded() {
        let row: &[f64] = &[0.1, 0.2, 0.3];
        let m = matrix(&[row; 8]);
        let a = match_random(&m, &mut seeded_rng(5));
        let b = match_random(&m, &mut seeded_rng(5));
        let c = match_random(&m, &mut seeded_rng(6));
        assert_eq!(a.assignment, b.assignment);
        assert!(a.assignment.iter().all(|&j| j < 3));
        // pair weights read off the matrix at the sampled indices
        for (i, &j) in a.assignment.iter().enumerate() {
            assert_eq!(a.pair_weights[i], m.at(i, j));
        }
        let _ = c;
    }

    #[test]
    fn random_matching_hits_are_roughly_uniform() {
        let humans = 1000usize;
        let personas = 10usize;
        let m = WeightMatrix::from_weights(humans, personas, vec![0.5; humans * personas]).unwrap();
        let r = match_random(&m, &mut seeded_rng(42));
        let mut counts = vec![0usize; personas];
        for &j in &r.assignment {
            counts[j] += 1;
        }
        // Binomial(1000, 1/10): 4 sigma = 4 * sqrt(90) ~ 37.9
        let expected = humans as f64 / personas as f64;
        let bound = 4.0 * (humans as f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() <= bound, "count {c} outside 4 sigma");
        }
    }

    #[test]
    fn scaling_weights_preserves_assignment_structure() {
        use rand::Rng;
        let mut rng = seeded_rng(77);
        for _ in 0..20 {
            let n = rng.random_range(2..=5);
            let m = rng.random_range(n..=6);
            let weights: Vec<f64> = (0..n * m).map(|_| rng.random::<f64>()).collect();
            let base = WeightMatrix::from_weights(n, m, weights.clone()).unwrap();
            // Powers of two keep the scaling exact in floating point.
            for scale in [0.5f64, 0.25, 0.125] {
                let scaled = WeightMatrix::from_weights(
                    n,
                    m,
                    weights.iter().map(|w| w * scale).collect(),
                )
                .unwrap();
                assert_eq!(
                    match_greedy(&base).assignment,
                    match_greedy(&scaled).assignment
                );
                assert_eq!(
                    match_max_weight(&base).unwrap().assignment,
                    match_max_weight(&scaled).unwrap().assignment
                );
                assert_eq!(
                    match_random(&base, &mut seeded_rng(3)).assignment,
                    match_random(&scaled, &mut seeded_rng(3)).assignment
                );
            }
        }
    }

    #[test]
    fn random_matching_below_max_weight_in_expectation() {
        use rand::Rng;
        let mut rng = seeded_rng(88);
        let n = 6;
        let m = 6;
        let weights: Vec<f64> = (0..n * m).map(|_| rng.random::<f64>()).collect();
        let matrix = WeightMatrix::from_weights(n, m, weights).unwrap();
        let optimal = match_max_weight(&matrix).unwrap().total_weight;
        let mean_random: f64 = (0..50)
            .map(|s| match_random(&matrix, &mut seeded_rng(s)).total_weight)
            .sum::<f64>()
            / 50.0;
        assert!(
            mean_random <= optimal,
            "random mean {mean_random} above optimum {optimal}"
        );
    }

    #[test]
    fn assign_traits_duplicates_under_greedy() {
        let s = scheme(1);
        let personas = vec![
            persona(&[[1.0, 0.0, 0.0]]),
            persona(&[[0.0, 1.0, 0.0]]),
        ];
        let humans = vec![human(&[0]), human(&[1])];
        let result = MatchingResult {
            method: MatchMethod::Greedy,
            assignment: vec![0, 0],
            pair_weights: vec![1.0, 0.0],
            total_weight: 1.0,
        };
        let conditioned = assign_traits(&result, &humans, &personas).unwrap();
        assert_eq!(conditioned.len(), 2);
        assert_eq!(conditioned[0].backstory_id, conditioned[1].backstory_id);
        assert_eq!(conditioned[0].assigned_traits, Some(humans[0].traits.clone()));
        assert_eq!(conditioned[1].assigned_traits, Some(humans[1].traits.clone()));
        let _ = s;
    }

    #[test]
    fn assign_traits_permutes_under_max_weight() {
        let s = scheme(1);
        let personas = [persona(&[[1.0, 0.0, 0.0]]), persona(&[[0.0, 1.0, 0.0]])];
        let mut p0 = personas[0].clone();
        p0.backstory_id = "b0".into();
        let mut p1 = personas[1].clone();
        p1.backstory_id = "b1".into();
        let personas = vec![p0, p1];
        let humans = vec![human(&[1]), human(&[0])];
        let m = weight_matrix(&humans, &personas, &s).unwrap();
        let r = match_max_weight(&m).unwrap();
        let conditioned = assign_traits(&r, &humans, &personas).unwrap();
        assert_eq!(conditioned[0].backstory_id, "b1");
        assert_eq!(conditioned[1].backstory_id, "b0");
    }
}
