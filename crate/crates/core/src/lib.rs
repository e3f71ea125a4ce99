//! Learning and applying interpretable multiple-criteria sorting models.
//!
//! The pipeline: ingest a labeled performance table ([`dataset`]), encode each
//! alternative as a piecewise-linear feature vector with optional pairwise
//! interaction blocks ([`encoding`]), fit a normalized additive value function
//! by convex quadratic programming ([`learner`], [`qpsolve`]) or a 2-additive
//! Choquet-integral model ([`choquet`]), then assign new alternatives to one
//! of the ordered classes with example-based rules ([`classify`]).
//! Cross-validation, grid search, metrics, and significance testing live in
//! [`evaluate`].

pub mod choquet;
pub mod classify;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod evaluate;
pub mod learner;
pub mod qpsolve;

pub use choquet::{ChoquetModel, EcdfScaler, MobiusWeights};
pub use classify::{Assignment, ClassScores, Method, Score, ScoredReferenceSet};
pub use dataset::{CriterionScale, Direction, FoldPlan, PerformanceTable};
pub use encoding::{EncodedAlternative, InteractionForm, WeightVector};
pub use error::Error;
pub use evaluate::{
    ConfusionMatrix, CvReport, EvalConfig, FoldOutcome, GridSpec, Metrics, ModelKind, TTestResult,
};
pub use learner::{
    InteractionStructure, Sign, SignedPair, SortingModel, StructurePolicy, TrainConfig,
};
pub use qpsolve::{KktResiduals, QpProblem, QpSolution, QpStatus, SolverOptions};
