//! Operational subproblem of one (year, scenario) at fixed capacities, and
//! the Benders cuts built from it.
//!
//! Dual convention: `duals[i]` is the derivative of the subproblem value with
//! respect to the fixed capacity of slot `i` (so it is never positive). Cuts
//! are stored as `alpha >= value + sum_i gradient[i] * (capa[i] - anchor[i])`.

use crate::error::{Error, Result};
use crate::instance::ProblemInstance;
use crate::layout::Layout;
use crate::operation::{add_operation, OperationVars, RowCounts};
use crate::solver::{self, ConvexProgram, Sense, SolveStatus, MAX_TOLERANCE};

/// Duals smaller than this in magnitude are rounded to zero in cuts.
pub const DUAL_ROUND_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SubproblemProgram {
    pub program: ConvexProgram,
    pub year: usize,
    pub scenario: usize,
    /// Row index of the fixing row of each slot.
    pub fixing_rows: Vec<usize>,
    pub capacity: Vec<f64>,
    pub ops: OperationVars,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    pub year: usize,
    pub scenario: usize,
    pub value: f64,
    /// Cost of a feasible dispatch repaired from the solver's point; an
    /// upper bound on the optimum even when `value` understates it.
    pub upper_value: f64,
    pub duals: Vec<f64>,
    pub achieved_tolerance: f64,
    /// Wall time spent in the solver, seconds.
    pub solve_time: f64,
    /// Interior-point iterations, summed over retries.
    pub iterations: usize,
}

/// Builds the subproblem with capacities fixed to `capacity` (one entry per
/// layout slot of `year`).
pub fn build_subproblem(
    inst: &ProblemInstance,
    layout: &Layout,
    year: usize,
    scenario: usize,
    capacity: &[f64],
) -> Result<SubproblemProgram> {
    if capacity.len() != layout.n_slots() {
        return Err(Error::InvalidArgument(format!(
            "capacity point has {} entries, expected {}",
            capacity.len(),
            layout.n_slots()
        )));
    }
    if year >= layout.n_years || scenario >= layout.n_scenarios {
        return Err(Error::InvalidArgument(format!(
            "subproblem ({year}, {scenario}) out of range"
        )));
    }
    let mut p = ConvexProgram::new();
    // Free capacity variables: the fixing rows alone carry the sensitivity.
    let capa: Vec<usize> = capacity
        .iter()
        .map(|_| p.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0))
        .collect();
    let fixing_rows = capa
        .iter()
        .zip(capacity)
        .map(|(&j, &c)| p.add_row(vec![(j, 1.0)], Sense::Eq, c))
        .collect();
    let mut counts = RowCounts::default();
    let ops = add_operation(
        &mut p,
        inst,
        layout,
        year,
        scenario,
        &capa,
        1.0,
        &mut counts,
    );
    Ok(SubproblemProgram {
        program: p,
        year,
        scenario,
        fixing_rows,
        capacity: capacity.to_vec(),
        ops,
    })
}

/// Solves a subproblem, retrying once at ten times the tolerance after a
/// numerical failure.
pub fn solve_subproblem(
    inst: &ProblemInstance,
    sp: &SubproblemProgram,
    rel_tolerance: f64,
) -> Result<SubproblemResult> {
    let mut out = solver::solve(&sp.program, rel_tolerance)?;
    let mut spent = out.solve_time;
    let mut iterations = out.iterations as usize;
    if out.status == SolveStatus::NumericalFailure {
        let looser = (rel_tolerance * 10.0).min(MAX_TOLERANCE);
        log::warn!(
            "subproblem ({}, {}) failed at tol {rel_tolerance:e}, retrying at {looser:e}",
            sp.year,
            sp.scenario
        );
        out = solver::solve(&sp.program, looser)?;
        spent += out.solve_time;
        iterations += out.iterations as usize;
    }
    if !out.is_optimal() {
        return Err(Error::solver(
            format!("subproblem (year {}, scenario {})", sp.year, sp.scenario),
            out.status,
        ));
    }
    Ok(SubproblemResult {
        year: sp.year,
        scenario: sp.scenario,
        value: out.objective,
        upper_value: sp.ops.feasible_cost(inst, &sp.capacity, &out.primal),
        duals: sp.fixing_rows.iter().map(|&r| out.duals[r]).collect(),
        achieved_tolerance: out.achieved_tolerance,
        solve_time: spent,
        iterations,
    })
}

/// Builds and solves in one call.
pub fn evaluate(
    inst: &ProblemInstance,
    layout: &Layout,
    year: usize,
    scenario: usize,
    capacity: &[f64],
    rel_tolerance: f64,
) -> Result<SubproblemResult> {
    solve_subproblem(
        inst,
        &build_subproblem(inst, layout, year, scenario, capacity)?,
        rel_tolerance,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub iteration_created: usize,
    pub year: usize,
    pub scenario: usize,
    /// Capacities of `year` the cut was built at.
    pub anchor: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Last iteration the cut was created or binding.
    pub last_active: usize,
    pub achieved_tolerance: f64,
}

impl Cut {
    /// Lower estimate of the subproblem value at `capacity`.
    pub fn evaluate(&self, capacity: &[f64]) -> f64 {
        self.value
            + self
                .gradient
                .iter()
                .zip(capacity.iter().zip(&self.anchor))
                .map(|(g, (c, a))| g * (c - a))
                .sum::<f64>()
    }

    /// Constant term when written as `alpha - gradient . capa >= rhs`.
    pub fn rhs(&self) -> f64 {
        self.value
            - self
                .gradient
                .iter()
                .zip(&self.anchor)
                .map(|(g, a)| g * a)
                .sum::<f64>()
    }
}

pub fn make_cut(result: &SubproblemResult, anchor: &[f64], k: usize) -> Cut {
    make_cut_with(result, anchor, k, DUAL_ROUND_THRESHOLD)
}

/// As [`make_cut`] with an explicit dual rounding threshold.
pub fn make_cut_with(result: &SubproblemResult, anchor: &[f64], k: usize, threshold: f64) -> Cut {
    let gradient = result
        .duals
        .iter()
        .map(|&l| if l.abs() < threshold { 0.0 } else { l })
        .collect();
    Cut {
        iteration_created: k,
        year: result.year,
        scenario: result.scenario,
        anchor: anchor.to_vec(),
        value: result.value,
        gradient,
        last_active: k,
        achieved_tolerance: result.achieved_tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detequiv::solve_closed;
    use crate::fixtures::{analytic_1240, with_storage};
    use crate::instance::generate_synthetic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    #[test]
    fn zero_capacity_sheds_everything() {
        let inst = analytic_1240();
        let l = Layout::new(&inst);
        let r = evaluate(&inst, &l, 0, 0, &[0.0], 1e-8).unwrap();
        assert!(rel(r.value, 1000.0 * 240.0) < 1e-7, "{}", r.value);
        // Negative capacity is infeasible, so any slope at or below the
        // right derivative (shedding saved minus variable cost) is valid.
        assert!(
            r.duals[0] <= -(1000.0 - 1.0) * 24.0 * (1.0 - 1e-6),
            "{:?}",
            r.duals
        );
    }

    #[test]
    fn analytic_point() {
        let inst = analytic_1240();
        let l = Layout::new(&inst);
        let r = evaluate(&inst, &l, 0, 0, &[10.0], 1e-8).unwrap();
        assert!(rel(r.value, 240.0) < 1e-7, "{}", r.value);
        let cut = make_cut(&r, &[10.0], 3);
        assert_eq!(cut.evaluate(&[10.0]), r.value);
        assert_eq!(cut.last_active, 3);
    }

    #[test]
    fn nonbinding_capacity_has_zero_dual() {
        let inst = analytic_1240();
        let l = Layout::new(&inst);
        let r = evaluate(&inst, &l, 0, 0, &[1e6], 1e-8).unwrap();
        assert!(r.duals[0].abs() < DUAL_ROUND_THRESHOLD, "{:?}", r.duals);
        let cut = make_cut(&r, &[1e6], 0);
        assert_eq!(cut.gradient, vec![0.0]);
        assert_eq!(cut.evaluate(&[0.0]), cut.value);
    }

    #[test]
    fn loose_and_tight_agree() {
        let inst = generate_synthetic(5, 2, 3, 1, 48, 1).unwrap();
        let l = Layout::new(&inst);
        let capa = vec![30.0, 40.0, 5.0, 20.0];
        let tight = evaluate(&inst, &l, 0, 1, &capa, 1e-8).unwrap();
        let loose = evaluate(&inst, &l, 0, 1, &capa, 1e-2).unwrap();
        assert!(rel(loose.value, tight.value) <= 1e-2);
    }

    #[test]
    fn repaired_cost_bounds_the_optimum() {
        let inst = generate_synthetic(21, 2, 5, 2, 96, 1).unwrap();
        let l = Layout::new(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..6 {
            let capa: Vec<f64> = (0..l.n_slots())
                .map(|_| rng.random_range(0.0..60.0))
                .collect();
            let exact = evaluate(&inst, &l, 0, 0, &capa, 1e-9).unwrap();
            assert!(
                rel(exact.upper_value, exact.value) <= 1e-6,
                "{} vs {}",
                exact.upper_value,
                exact.value
            );
            for tol in [1e-2, 1e-4, 1e-6] {
                let r = evaluate(&inst, &l, 0, 0, &capa, tol).unwrap();
                assert!(
                    r.upper_value >= exact.value * (1.0 - 1e-9),
                    "tol {tol}: {} < {}",
                    r.upper_value,
                    exact.value
                );
            }
        }
    }

    #[test]
    fn storage_energy_dual_degenerate() {
        // Generation only at night (cf = 1 in the first half), demand flat:
        // storage shifts energy. Energy capacity is plentiful, power is scarce.
        let mut inst = with_storage(analytic_1240(), 1.0, 1.0);
        let cf = &mut inst.scenarios[0].capacity_factor.get_mut(&2030).unwrap();
        let series = cf.get_mut("gen").unwrap();
        for (t, v) in series.iter_mut().enumerate() {
            *v = if t < 12 { 1.0 } else { 0.0 };
        }
        let l = Layout::new(&inst);
        let r = evaluate(&inst, &l, 0, 0, &[100.0, 2.0, 1000.0], 1e-9).unwrap();
        assert!(r.duals[1] < -1.0, "{:?}", r.duals);
        assert!(r.duals[2].abs() < DUAL_ROUND_THRESHOLD, "{:?}", r.duals);
    }

    #[test]
    fn cuts_underestimate_elsewhere() {
        let inst = generate_synthetic(9, 1, 3, 1, 24, 1).unwrap();
        let l = Layout::new(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut point = || -> Vec<f64> {
            (0..l.n_slots())
                .map(|_| rng.random::<f64>() * 150.0)
                .collect()
        };
        let anchor = point();
        let r = evaluate(&inst, &l, 0, 0, &anchor, 1e-6).unwrap();
        let cut = make_cut(&r, &anchor, 0);
        for _ in 0..10 {
            let p = point();
            let v = evaluate(&inst, &l, 0, 0, &p, 1e-8).unwrap();
            let slack = cut.achieved_tolerance * v.value.abs().max(cut.value.abs())
                + v.achieved_tolerance * v.value.abs()
                + 1e-6;
            assert!(
                cut.evaluate(&p) <= v.value + slack,
                "{} > {}",
                cut.evaluate(&p),
                v.value
            );
        }
    }

    #[test]
    fn decomposes_closed_cost() {
        let inst = generate_synthetic(7, 2, 3, 1, 48, 2).unwrap();
        let l = Layout::new(&inst);
        let sol = solve_closed(&inst, 1e-9).unwrap();
        let mut total = 0.0;
        let mut closed = 0.0;
        for y in 0..l.n_years {
            for (s, sc) in inst.scenarios.iter().enumerate() {
                let r = evaluate(&inst, &l, y, s, sol.point.year_capacity(&l, y), 1e-9).unwrap();
                total += sc.probability * r.value;
                closed += sc.probability * sol.operational_cost[y][s];
            }
        }
        assert!(rel(total, closed) < 1e-6, "{total} vs {closed}");
    }

    #[test]
    fn wrong_length_rejected() {
        let inst = analytic_1240();
        let l = Layout::new(&inst);
        assert!(matches!(
            build_subproblem(&inst, &l, 0, 0, &[1.0, 2.0]),
            Err(Error::InvalidArgument(_))
        ));
    }
}
