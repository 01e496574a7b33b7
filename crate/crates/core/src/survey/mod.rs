//! Questionnaire scoring: reverse coding, scale and factor scores,
//! internal consistency and correlation.

mod scales;
mod stats;

use thiserror::Error;

pub use scales::{
    analyze, scale_alpha, score_scales, AlphaEntry, ColumnSummary, CorrelationDef,
    CorrelationEntry, ResponseMatrix, ScaleDef, ScaleSet, ScoreTable, SurveySummary,
};
pub use stats::{cronbach_alpha, mean, pearson_r, reverse_code, sample_variance, z_scores, Alpha};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurveyError {
    #[error("rating {value} outside the scale {min}..{max}")]
    Range { value: f64, min: f64, max: f64 },
    #[error("not enough data: {items} item(s), {respondents} complete respondent(s)")]
    InsufficientData { items: usize, respondents: usize },
    #[error("undefined: zero variance in {0}")]
    ZeroVariance(String),
    #[error("unknown item id '{0}'")]
    UnknownItem(String),
    #[error("unknown score column '{0}'")]
    UnknownColumn(String),
    #[error("{0}")]
    Shape(String),
    #[error("CSV: {0}")]
    Csv(String),
    #[error("scale definition: {0}")]
    Toml(String),
}
