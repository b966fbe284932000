//! Gradient descent on the initial momentum with Armijo backtracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{GridGeometry, ScalarField};
use crate::objective::{CostReport, RegistrationProblem};

/// Something the optimizer can minimize over a momentum field.
pub trait Objective {
    fn geometry(&self) -> GridGeometry;

    fn evaluate(&self, z: &ScalarField) -> Result<CostReport>;

    fn evaluate_with_gradient(&self, z: &ScalarField) -> Result<(CostReport, ScalarField)>;
}

impl Objective for RegistrationProblem {
    fn geometry(&self) -> GridGeometry {
        self.source.geometry()
    }

    fn evaluate(&self, z: &ScalarField) -> Result<CostReport> {
        self.cost(z)
    }

    fn evaluate_with_gradient(&self, z: &ScalarField) -> Result<(CostReport, ScalarField)> {
        self.cost_and_grad(z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub max_iters: usize,
    /// Trial step of the first line search.
    pub init_step: f64,
    pub backtrack_factor: f64,
    /// Armijo constant.
    pub sufficient_decrease: f64,
    /// Stop when the largest gradient entry falls to this value.
    pub grad_tol: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub rel_cost_tol: f64,
    /// Each line search after the first starts at the last accepted step
    /// times this factor.
    pub step_growth: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            init_step: 1.0,
            backtrack_factor: 0.5,
            sufficient_decrease: 1e-4,
            grad_tol: 1e-6,
            rel_cost_tol: 1e-8,
            step_growth: 2.0,
            max_backtracks: 40,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let non_negative = |x: f64| x.is_finite() && x >= 0.0;
        if !positive(self.init_step)
            || !(positive(self.backtrack_factor) && self.backtrack_factor < 1.0)
            || !positive(self.sufficient_decrease)
            || !non_negative(self.grad_tol)
            || !non_negative(self.rel_cost_tol)
            || !(self.step_growth.is_finite() && self.step_growth >= 1.0)
        {
            return Err(Error::InvalidParameter(format!(
                "invalid optimizer configuration {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradTol,
    CostTol,
    MaxIters,
    LineSearchFailure,
}

/// One accepted iterate. `step_size` is the step that produced it (0 for
/// the initial point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub iteration: usize,
    pub cost: CostReport,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub z0: ScalarField,
    pub history: Vec<Iterate>,
    pub termination: Termination,
}

impl OptimizeResult {
    pub fn final_cost(&self) -> &CostReport {
        &self.history.last().expect("history holds the initial point").cost
    }
}

/// Zero momentum: the identity deformation.
pub fn default_init(problem: &impl Objective) -> ScalarField {
    ScalarField::zeros(problem.geometry())
}

/// Minimizes `objective` from `init`.
///
/// Trial steps whose shoot diverges count as infinite cost and are
/// backtracked. Errors from the initial point propagate.
pub fn optimize<O: Objective>(objective: &O, init: &ScalarField, cfg: &OptimizeConfig) -> Result<OptimizeResult> {
    optimize_with(objective, init, cfg, |_| {})
}

/// [`optimize`] with a callback invoked on every accepted iterate.
pub fn optimize_with<O, F>(
    objective: &O,
    init: &ScalarField,
    cfg: &OptimizeConfig,
    mut on_iterate: F,
) -> Result<OptimizeResult>
where
    O: Objective,
    F: FnMut(&Iterate),
{
    cfg.validate()?;
    objective.geometry().ensure_same(&init.geometry())?;

    let mut z = init.clone();
    let (mut cost, mut grad) = objective.evaluate_with_gradient(&z)?;
    let first = Iterate {
        iteration: 0,
        cost,
        step_size: 0.0,
    };
    on_iterate(&first);
    let mut history = vec![first];
    let mut step = cfg.init_step;

    for iteration in 1.. {
        if grad.max_abs() <= cfg.grad_tol {
            return Ok(finish(z, history, Termination::GradTol));
        }
        if iteration > cfg.max_iters {
            return Ok(finish(z, history, Termination::MaxIters));
        }
        let grad_sq = crate::fields::dot(&grad, &grad)?;

        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            if let Ok(trial) = z.axpy(-step, &grad) {
                if let Ok(report) = objective.evaluate(&trial) {
                    if report.total <= cost.total - cfg.sufficient_decrease * step * grad_sq {
                        accepted = Some(trial);
                        break;
                    }
                }
            }
            step *= cfg.backtrack_factor;
        }
        let Some(trial) = accepted else {
            return Ok(finish(z, history, Termination::LineSearchFailure));
        };

        let (new_cost, new_grad) = objective.evaluate_with_gradient(&trial)?;
        let decrease = cost.total - new_cost.total;
        let it = Iterate {
            iteration,
            cost: new_cost,
            step_size: step,
        };
        on_iterate(&it);
        history.push(it);
        z = trial;
        grad = new_grad;
        let previous = cost.total;
        cost = new_cost;
        if decrease < cfg.rel_cost_tol * previous.abs() {
            return Ok(finish(z, history, Termination::CostTol));
        }
        step *= cfg.step_growth;
    }
    unreachable!("the iteration loop only exits by returning")
}

fn finish(z0: ScalarField, history: Vec<Iterate>, termination: Termination) -> OptimizeResult {
    OptimizeResult {
        z0,
        history,
        termination,
    }
}
