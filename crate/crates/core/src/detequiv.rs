//! Closed (deterministic-equivalent) formulation: all scenarios in one LP.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::ProblemInstance;
use crate::layout::{CapacityPoint, Layout};
use crate::operation::{
    add_first_stage, add_operation, expansion_cost, FirstStageVars, OperationVars, RowCounts,
};
use crate::oracle::{solve_lp, LpOutcome};
use crate::solver::{self, ConvexProgram, SolveStatus};

/// Capacities and expansions below this are reported as exactly zero.
pub const ROUND_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ClosedProgram {
    pub program: ConvexProgram,
    /// The instance the program was built from (restricted and
    /// renormalized when a scenario subset was given).
    pub instance: ProblemInstance,
    pub layout: Layout,
    pub first_stage: FirstStageVars,
    /// Operational blocks, year-major: `operation[y * n_scenarios + s]`.
    pub operation: Vec<OperationVars>,
    pub counts: RowCounts,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedSolution {
    pub point: CapacityPoint,
    pub objective: f64,
    pub expansion_cost: f64,
    /// `operational_cost[y][s]`.
    pub operational_cost: Vec<Vec<f64>>,
    pub loss_of_load_total: f64,
    pub achieved_tolerance: f64,
}

/// Builds the closed program, optionally over a subset of scenario indices
/// (probabilities renormalized over the subset).
pub fn build_closed(inst: &ProblemInstance, subset: Option<&[usize]>) -> Result<ClosedProgram> {
    inst.ensure_valid()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let instance = match subset {
        Some(s) => inst.restrict_scenarios(s)?,
        None => inst.clone(),
    };
    let layout = Layout::new(&instance);
    let mut program = ConvexProgram::new();
    let mut counts = RowCounts::default();
    let first_stage = add_first_stage(&mut program, &instance, &layout, &mut counts);
    let ns = layout.n_slots();
    let mut operation = Vec::with_capacity(layout.n_years * layout.n_scenarios);
    for y in 0..layout.n_years {
        let capa = &first_stage.capacity[y * ns..(y + 1) * ns];
        for (s, sc) in instance.scenarios.iter().enumerate() {
            operation.push(add_operation(
                &mut program,
                &instance,
                &layout,
                y,
                s,
                capa,
                sc.probability,
                &mut counts,
            ));
        }
    }
    Ok(ClosedProgram {
        program,
        instance,
        layout,
        first_stage,
        operation,
        counts,
    })
}

impl ClosedProgram {
    /// Reads a [`ClosedSolution`] out of a primal vector.
    pub fn extract(&self, primal: &[f64], achieved_tolerance: f64) -> ClosedSolution {
        let inst = &self.instance;
        let expansion: Vec<f64> = self
            .first_stage
            .expansion
            .iter()
            .map(|&j| {
                if primal[j] < ROUND_THRESHOLD {
                    0.0
                } else {
                    primal[j]
                }
            })
            .collect();
        let point = CapacityPoint::from_expansion(inst, &self.layout, expansion);
        let u = expansion_cost(inst, &self.layout, &point.expansion);
        let n_s = self.layout.n_scenarios;
        let operational_cost: Vec<Vec<f64>> = (0..self.layout.n_years)
            .map(|y| {
                (0..n_s)
                    .map(|s| primal[self.operation[y * n_s + s].cost])
                    .collect()
            })
            .collect();
        let expected: f64 = operational_cost
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&inst.scenarios)
                    .map(|(v, sc)| sc.probability * v)
                    .sum::<f64>()
            })
            .sum();
        let loss_of_load_total = self
            .operation
            .iter()
            .flat_map(|o| o.loss_of_load.iter().map(|&j| primal[j].max(0.0)))
            .sum();
        ClosedSolution {
            point,
            objective: u + expected,
            expansion_cost: u,
            operational_cost,
            loss_of_load_total,
            achieved_tolerance,
        }
    }
}

/// Solves the closed problem over all scenarios.
pub fn solve_closed(inst: &ProblemInstance, rel_tolerance: f64) -> Result<ClosedSolution> {
    solve_closed_subset(inst, None, rel_tolerance)
}

pub fn solve_closed_subset(
    inst: &ProblemInstance,
    subset: Option<&[usize]>,
    rel_tolerance: f64,
) -> Result<ClosedSolution> {
    let closed = build_closed(inst, subset)?;
    let out = solver::solve(&closed.program, rel_tolerance)?;
    if !out.is_optimal() {
        return Err(Error::solver("closed problem", out.status));
    }
    Ok(closed.extract(&out.primal, out.achieved_tolerance))
}

/// Optimal closed objective from the dense simplex oracle. Test use only.
pub fn brute_force_oracle(inst: &ProblemInstance) -> Result<f64> {
    let closed = build_closed(inst, None)?;
    match solve_lp(&closed.program)? {
        LpOutcome::Optimal { objective, .. } => Ok(objective),
        LpOutcome::Infeasible => Err(Error::solver("oracle", SolveStatus::Infeasible)),
        LpOutcome::Unbounded => Err(Error::solver("oracle", SolveStatus::Unbounded)),
    }
}
