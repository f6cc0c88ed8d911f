//! Shapley attribution of prompt words on language-model token probabilities,
//! plus probes for framing, anchoring, round-number, representativeness and
//! priming biases.

mod coalition;
mod distribution;
mod error;
pub mod oracle;
pub mod probes;
pub mod report;
pub mod shapley;
mod template;

pub use coalition::{CoalitionMask, MAX_MASK_WIDTH};
pub use distribution::{
    normalize, AnswerOption, Distribution, DistributionEntry, OptionSet, TargetSpec,
    NORMALIZED_SUM_TOLERANCE,
};
pub use error::{Error, Result};
pub use oracle::{Oracle, OracleConfig, OracleGame, Provenance};
pub use shapley::{exact_shapley, sampled_shapley, Attribution, FnGame, Game, Method};
pub use template::{bindings, Bindings, PromptTemplate, Segment, MAX_PLAYERS};
