//! NSGA-II genetic programming: dominance, survivor selection, variation
//! operators, the Pareto archive and the generational loop.

mod archive;
mod evolve;
mod fitness;
mod nsga2;
mod rng;
mod variation;

pub use archive::ParetoArchive;
pub use evolve::{
    continue_run, evolve, Evolution, EvolutionOutcome, EvolutionState, EvolveAborted, GPConfig,
    GenerationStats,
};
pub use fitness::{dominates, FitnessVector, Individual, LengthMismatch};
pub use nsga2::{crowding_distance, non_dominated_sort, nsga2_select, nsga2_select_indices, sort_fronts, Ranking};
pub use rng::{master_rng, MasterRng, RngState, RngStateError};
pub use variation::{
    cx_one_point, mut_uniform, tournament_select, var_or, var_or_traced, Operator, VariationParams,
};

use crate::assessment::AssessmentError;
use crate::expr::ExprError;

#[derive(Debug, thiserror::Error)]
pub enum EvolutionError {
    #[error("individual {0} has no fitness")]
    Unevaluated(usize),
    #[error("expected {expected} objectives, found {found}")]
    ObjectiveCount { expected: usize, found: usize },
    #[error("cannot select {requested} of {available} individuals")]
    SelectTooMany { requested: usize, available: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("assessment failed: {0}")]
    Assessment(#[from] AssessmentError),
}
