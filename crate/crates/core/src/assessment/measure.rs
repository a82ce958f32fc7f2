use std::fmt;
use std::sync::Arc;

use crate::expr::{Constants, Expression};

/// Maps an expression with given constant values to objective values.
///
/// Implementations must be deterministic and safe to call concurrently.
pub trait FitnessFunction: Send + Sync {
    fn objective_names(&self) -> Vec<String>;

    fn evaluate(&self, expr: &Expression, constants: &Constants) -> Result<Vec<f64>, String>;

    /// Objectives used as the residual vector for constant optimization.
    /// Defaults to all of them.
    fn residual_objectives(&self) -> Vec<usize> {
        (0..self.objective_names().len()).collect()
    }
}

type MeasureFn = dyn Fn(&Expression, &Constants) -> Result<f64, String> + Send + Sync;

/// A single named objective.
#[derive(Clone)]
pub struct Measure {
    pub name: String,
    func: Arc<MeasureFn>,
    residual: bool,
}

impl Measure {
    pub fn new<F>(name: impl Into<String>, func: F) -> Self
    where
        F: Fn(&Expression, &Constants) -> Result<f64, String> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            func: Arc::new(func),
            residual: true,
        }
    }

    /// Excludes this measure from constant optimization residuals, e.g. for
    /// a size measure that does not depend on constant values.
    pub fn structural(mut self) -> Self {
        self.residual = false;
        self
    }

    pub fn call(&self, expr: &Expression, constants: &Constants) -> Result<f64, String> {
        (self.func)(expr, constants)
    }
}

impl fmt::Debug for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Measure")
            .field("name", &self.name)
            .field("residual", &self.residual)
            .finish()
    }
}

/// A tuple of measures combined into one multi-objective fitness.
#[derive(Debug, Clone)]
pub struct MeasureSet {
    measures: Vec<Measure>,
}

impl MeasureSet {
    pub fn new(measures: Vec<Measure>) -> Self {
        assert!(!measures.is_empty(), "at least one measure is required");
        Self { measures }
    }
}

impl FitnessFunction for MeasureSet {
    fn objective_names(&self) -> Vec<String> {
        self.measures.iter().map(|m| m.name.clone()).collect()
    }

    fn evaluate(&self, expr: &Expression, constants: &Constants) -> Result<Vec<f64>, String> {
        self.measures
            .iter()
            .map(|m| m.call(expr, constants).map_err(|e| format!("{}: {e}", m.name)))
            .collect()
    }

    fn residual_objectives(&self) -> Vec<usize> {
        self.measures
            .iter()
            .enumerate()
            .filter(|(_, m)| m.residual)
            .map(|(i, _)| i)
            .collect()
    }
}
