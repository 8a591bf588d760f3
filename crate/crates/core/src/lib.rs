//! Fine-grained pedagogical intent annotation for tutoring dialogs.
//!
//! Pipeline: [`segmenter`] splits teacher turns into EDUs, [`annotator`] walks
//! each EDU down a decision tree built by [`taxonomy`], [`datagen`] turns the
//! annotated corpus into fine-tuning files and [`metrics`] scores annotations
//! and generated responses.

pub mod annotator;
pub mod corpus;
pub mod datagen;
pub mod llm;
pub mod metrics;
pub mod scalar;
pub mod segmenter;
pub mod taxonomy;
pub mod util;

pub use scalar::Scalar;

pub type ClassificationReportF64 = metrics::ClassificationReport<f64>;
pub type ClassificationReportF32 = metrics::ClassificationReport<f32>;
pub type KappaReportF64 = metrics::KappaReport<f64>;
pub type KappaReportF32 = metrics::KappaReport<f32>;
pub type GenerationScoresF64 = metrics::GenerationScores<f64>;
pub type GenerationScoresF32 = metrics::GenerationScores<f32>;
pub type BleuScoreF64 = metrics::BleuScore<f64>;
pub type RougeScoreF64 = metrics::RougeScore<f64>;
pub type VoteSummaryF64 = metrics::VoteSummary<f64>;
