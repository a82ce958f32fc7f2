//! Least-squares fitting of the symbolic constants inside an expression.
//!
//! Levenberg–Marquardt with Marquardt diagonal scaling over a residual
//! vector, Jacobian by forward differences with step
//! `sqrt(eps) * max(1, |c|)`. The best point seen is returned, so the final
//! cost never exceeds the initial one.

use nalgebra::{DMatrix, DVector};

use crate::expr::Expression;

/// Tunables for [`optimize_constants`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstOptSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub initial_value: f64,
}

impl Default for ConstOptSettings {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            tolerance: 1e-8,
            initial_value: 1.0,
        }
    }
}

/// Maps constant values to residuals.
pub type ResidualFn<'a> = Box<dyn FnMut(&[f64]) -> Vec<f64> + 'a>;

pub struct ConstOptProblem<'a> {
    pub constant_names: Vec<String>,
    /// Maps constant values (ordered like `constant_names`) to residuals.
    /// Must return non-finite entries instead of failing.
    pub residual: ResidualFn<'a>,
    pub initial_guess: Vec<f64>,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl<'a> ConstOptProblem<'a> {
    /// Problem over the constants occurring in `expr`, in sorted name order.
    pub fn for_expression<F>(expr: &Expression, settings: &ConstOptSettings, residual: F) -> Self
    where
        F: FnMut(&[f64]) -> Vec<f64> + 'a,
    {
        let constant_names = expr.constant_names();
        let initial_guess = vec![settings.initial_value; constant_names.len()];
        Self {
            constant_names,
            residual: Box::new(residual),
            initial_guess,
            max_iterations: settings.max_iterations,
            tolerance: settings.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstOptResult {
    pub values: Vec<f64>,
    /// Euclidean norm of the residual at `values`; `+inf` when the initial
    /// residual was already non-finite.
    pub residual_norm: f64,
    /// Trial steps taken.
    pub iterations: usize,
    /// Residual function calls, Jacobian columns included.
    pub evaluations: usize,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn all_finite(r: &[f64], len: usize) -> bool {
    r.len() == len && r.iter().all(|v| v.is_finite())
}

pub fn optimize_constants(mut problem: ConstOptProblem<'_>) -> ConstOptResult {
    let n = problem.constant_names.len();
    debug_assert_eq!(problem.initial_guess.len(), n);
    let mut evaluations = 1;
    let mut c = problem.initial_guess.clone();
    let mut r = (problem.residual)(&c);
    let m = r.len();
    let mut cost = sum_sq(&r);

    if !all_finite(&r, m) || !cost.is_finite() {
        return ConstOptResult {
            values: c,
            residual_norm: f64::INFINITY,
            iterations: 0,
            evaluations,
        };
    }
    if n == 0 {
        return ConstOptResult {
            values: c,
            residual_norm: cost.sqrt(),
            iterations: 0,
            evaluations,
        };
    }

    let tol = problem.tolerance;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut jacobian = jacobian(&mut problem.residual, &c, &r, &mut evaluations);

    while iterations < problem.max_iterations {
        let Some(jac) = jacobian.as_ref() else { break };
        let residual = DVector::from_column_slice(&r);
        let jt = jac.transpose();
        let normal = &jt * jac;
        let gradient = &jt * &residual;
        if gradient.amax() <= tol * (1.0 + cost) {
            break;
        }

        let mut damped = normal.clone();
        for i in 0..n {
            damped[(i, i)] += lambda * normal[(i, i)].max(1e-12);
        }
        let step = match damped.clone().cholesky() {
            Some(ch) => ch.solve(&(-&gradient)),
            None => match damped.lu().solve(&(-&gradient)) {
                Some(s) => s,
                None => break,
            },
        };

        iterations += 1;
        let trial: Vec<f64> = c.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
        let r_trial = (problem.residual)(&trial);
        evaluations += 1;
        let cost_trial = sum_sq(&r_trial);

        if all_finite(&r_trial, m) && cost_trial < cost {
            let relative = (cost - cost_trial) / cost;
            let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            c = trial;
            r = r_trial;
            cost = cost_trial;
            lambda = (lambda / 10.0).max(1e-12);
            if relative < tol || step.norm() <= tol * (c_norm + tol) {
                break;
            }
            jacobian = self::jacobian(&mut problem.residual, &c, &r, &mut evaluations);
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    ConstOptResult {
        values: c,
        residual_norm: cost.sqrt(),
        iterations,
        evaluations,
    }
}

/// Forward-difference Jacobian; falls back to a backward difference for a
/// column whose forward probe is non-finite. `None` if both fail.
fn jacobian(
    residual: &mut ResidualFn<'_>,
    c: &[f64],
    r: &[f64],
    evaluations: &mut usize,
) -> Option<DMatrix<f64>> {
    let m = r.len();
    let mut jac = DMatrix::zeros(m, c.len());
    let mut probe = c.to_vec();
    for j in 0..c.len() {
        let h = f64::EPSILON.sqrt() * c[j].abs().max(1.0);
        let mut column = None;
        for signed in [h, -h] {
            probe[j] = c[j] + signed;
            let rp = residual(&probe);
            *evaluations += 1;
            if all_finite(&rp, m) {
                // Divide by the step actually representable in floating point.
                let actual = probe[j] - c[j];
                column = Some((rp, actual));
                break;
            }
        }
        probe[j] = c[j];
        let (rp, actual) = column?;
        for i in 0..m {
            jac[(i, j)] = (rp[i] - r[i]) / actual;
        }
    }
    Some(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{build_pset, parse_prefix};

    fn problem<'a, F>(n: usize, residual: F) -> ConstOptProblem<'a>
    where
        F: FnMut(&[f64]) -> Vec<f64> + 'a,
    {
        ConstOptProblem {
            constant_names: (0..n).map(|i| format!("c{i}")).collect(),
            residual: Box::new(residual),
            initial_guess: vec![1.0; n],
            max_iterations: 30,
            tolerance: 1e-10,
        }
    }

    #[test]
    fn linear_fit_recovers_two() {
        let pset = build_pset(&[("Mul", 2)], &["x"], &["k"]).unwrap();
        let expr = parse_prefix("Mul k x", &pset).unwrap();
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let p = ConstOptProblem::for_expression(&expr, &ConstOptSettings::default(), |c| {
            xs.iter().map(|x| c[0] * x - 2.0 * x).collect()
        });
        assert_eq!(p.constant_names, vec!["k"]);
        let out = optimize_constants(p);
        assert!((out.values[0] - 2.0).abs() < 1e-6, "{out:?}");
        assert!(out.iterations <= 30);
        assert!(out.residual_norm < 1e-5);
    }

    #[test]
    fn matches_closed_form_least_squares() {
        // Fit k in k * x_i ~ y_i with inconsistent data.
        let data = [(1.0, 2.1), (2.0, 3.9), (3.0, 6.2), (4.0, 7.8), (5.0, 10.3)];
        let closed: f64 = data.iter().map(|(x, y)| x * y).sum::<f64>()
            / data.iter().map(|(x, _)| x * x).sum::<f64>();
        let out = optimize_constants(problem(1, |c| {
            data.iter().map(|(x, y)| c[0] * x - y).collect()
        }));
        assert!(((out.values[0] - closed) / closed).abs() < 1e-6);
    }

    #[test]
    fn no_constants_single_call() {
        let mut calls = 0;
        let out = optimize_constants(problem(0, |_| {
            calls += 1;
            vec![3.0, 4.0]
        }));
        assert_eq!(calls, 1);
        assert!(out.values.is_empty());
        assert_eq!(out.residual_norm, 5.0);
        assert_eq!(out.evaluations, 1);
    }

    #[test]
    fn non_finite_start_is_flagged() {
        let out = optimize_constants(problem(1, |_| vec![f64::NAN]));
        assert_eq!(out.values, vec![1.0]);
        assert_eq!(out.residual_norm, f64::INFINITY);
    }

    #[test]
    fn rosenbrock_two_constants() {
        let out = optimize_constants(ConstOptProblem {
            max_iterations: 200,
            initial_guess: vec![-1.2, 1.0],
            ..problem(2, |c| vec![10.0 * (c[1] - c[0] * c[0]), 1.0 - c[0]])
        });
        assert!((out.values[0] - 1.0).abs() < 1e-4, "{out:?}");
        assert!((out.values[1] - 1.0).abs() < 1e-4, "{out:?}");
    }

    #[test]
    fn never_worse_than_start_and_deterministic() {
        // A residual that blows up away from the start.
        let f = |c: &[f64]| {
            let v = c[0];
            if !(0.5..=1.5).contains(&v) {
                vec![f64::INFINITY]
            } else {
                vec![(10.0 * v).sin() + 2.0]
            }
        };
        let start = f(&[1.0])[0].powi(2);
        let a = optimize_constants(problem(1, f));
        let b = optimize_constants(problem(1, f));
        assert_eq!(a, b);
        assert!(a.residual_norm.powi(2) <= start);
    }
}
