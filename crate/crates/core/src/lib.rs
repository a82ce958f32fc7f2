//! Multi-objective genetic programming for symbolic regression.
//!
//! Candidate expressions are evolved with NSGA-II over a primitive set,
//! optionally with least-squares fitting of their symbolic constants, and
//! assessed either in-process or by a remote experiment speaking a small
//! JSON protocol. The controlled Lorenz system serves as the bundled
//! application.
//!
//! ```
//! use symreg_core::lorenz::{lorenz_pset, objectives, SimSetup};
//! use symreg_core::{parse_prefix, print_prefix};
//!
//! let expr = parse_prefix("Sub z Mul k x", &lorenz_pset()).unwrap();
//! assert_eq!(print_prefix(&expr), "Sub z Mul k x");
//!
//! let constants = [("k".to_string(), 27.84)].into();
//! let [rx, ry, rz, length] = objectives(&expr, &constants, &SimSetup::default()).unwrap();
//! assert!(rx < 0.3 && ry < 0.1 && rz < 0.3);
//! assert_eq!(length, 5.0);
//! ```

pub mod app;
pub mod assessment;
pub mod constopt;
pub mod evolution;
pub mod expr;
pub mod lorenz;
pub mod protocol;

pub use assessment::{Assessment, AssessmentError, FitnessCache, FitnessFunction, LocalAssessment};
pub use constopt::{optimize_constants, ConstOptProblem, ConstOptResult, ConstOptSettings};
pub use evolution::{
    evolve, Evolution, EvolutionError, EvolutionOutcome, EvolutionState, FitnessVector, GPConfig,
    GenerationStats, Individual, ParetoArchive,
};
pub use expr::{parse_prefix, print_prefix, Constants, ExprError, Expression, PrimitiveSet};
pub use protocol::{Message, ProtocolError};
