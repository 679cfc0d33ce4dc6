//! QA and relation-determination tasks generated from a store, answer
//! parsing, mixed-prompt aggregation and scoring.

mod items;
mod relation;
mod report;
mod score;

pub use items::{make_qa_items, Direction, QaItem, Style};
pub use relation::{
    aggregate_mixed, make_relation_items, parse_yesno, Aggregation, RelationItem, RelationVariants, ScreeningReport,
    YesNo, YesNoKeywords,
};
pub use report::EvalReport;
pub use score::{score_qa, score_relation, AnswerSet, ModelAnswer, QaScoring};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("requested {requested} items but only {available} pairs are available")]
    NotEnoughPairs { requested: usize, available: usize },
    #[error("variant count must be between 1 and {available}, got {requested}")]
    VariantCount { requested: usize, available: usize },
    #[error("no answers for items: {}", .0.join(", "))]
    MissingAnswers(Vec<String>),
    #[error("answers reference unknown items: {}", .0.join(", "))]
    UnknownItems(Vec<String>),
    #[error("item {0} has no answers to aggregate")]
    NoAnswers(String),
    #[error(transparent)]
    Template(#[from] crate::template::TemplateError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl EvalError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
