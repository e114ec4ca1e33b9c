//! Virtual survey panels: condition language models to personas via
//! generated backstories, estimate persona demographics, match the
//! persona pool to a target human population, administer multiple-
//! choice surveys to the matched cohort, and score the cohort's
//! responses against the humans'.
//!
//! The `parallel` feature (on by default) runs the data-parallel inner
//! loops (weight matrix construction, cohort administration, persona
//! profiling, split-half lower-bound iterations) on a rayon pool.
//! Without it every entry point falls back to the equivalent
//! sequential code path.
//!
//! The matching core in one picture: personas hold probability
//! distributions over each demographic variable, humans hold concrete
//! traits, edge weights are the product of per-variable likelihoods,
//! and a matcher picks one persona per human.
//!
//! ```
//! use vpanel::matching::{match_greedy, weight_matrix};
//! use vpanel::persona::{
//!     DemographicScheme, DemographicVariable, DistributionSource, HumanRespondent,
//!     TraitDistribution, TraitValue, VariableKind, VirtualPersona,
//! };
//!
//! let scheme = DemographicScheme {
//!     wave_tag: "doc".into(),
//!     variables: vec![DemographicVariable {
//!         id: "age".into(),
//!         question_text: "Which age group describes you?".into(),
//!         options: vec!["18-29".into(), "30-49".into(), "50+".into()],
//!         kind: VariableKind::Ordinal,
//!         extraction_eligible: true,
//!         bio_template: None,
//!     }],
//! };
//! let human = HumanRespondent {
//!     id: "h1".into(),
//!     traits: vec![TraitValue::new("age", 1)],
//!     answers: None,
//! };
//! let persona = VirtualPersona {
//!     backstory_id: "b1".into(),
//!     distributions: vec![TraitDistribution::new(
//!         "age",
//!         vec![0.1, 0.7, 0.2],
//!         DistributionSource::Sampled,
//!     )?],
//!     assigned_traits: None,
//!     profile_meta: None,
//! };
//!
//! let matrix = weight_matrix(&[human], &[persona], &scheme)?;
//! assert!((matrix.at(0, 0) - 0.7).abs() < 1e-12);
//! let matched = match_greedy(&matrix);
//! assert_eq!(matched.assignment, vec![0]);
//! # Ok::<(), vpanel::Error>(())
//! ```

pub mod backstory;
pub mod config;
pub mod demo_survey;
pub mod error;
pub mod io;
pub mod matching;
pub mod metrics;
pub mod persona;
pub mod pipeline;
pub mod provider;
pub mod rng;
pub mod survey;

pub use error::{Error, Result};
