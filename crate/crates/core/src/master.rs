//! Master problem: first-stage variables, one estimator per (year, scenario),
//! the multi-cut store with aging, and optional valid inequalities.

use std::collections::BTreeSet;

use crate::detequiv::ROUND_THRESHOLD;
use crate::error::{Error, Result};
use crate::instance::ProblemInstance;
use crate::layout::{CapacityPoint, Layout};
use crate::operation::{add_first_stage, expansion_cost, FirstStageVars, RowCounts};
use crate::solver::{self, ConvexProgram, Sense, SolveOutcome};
use crate::subproblem::Cut;

/// Lower bound on every estimator; subproblem costs are nonnegative.
pub const ESTIMATOR_FLOOR: f64 = 0.0;

/// Relative slack under which a cut row counts as binding.
pub const BINDING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MasterState {
    pub layout: Layout,
    pub probabilities: Vec<f64>,
    pub cuts: Vec<Cut>,
    /// Idle iterations after which a cut is dropped; `None` keeps all cuts.
    pub eta: Option<usize>,
    pub valid_inequalities: bool,
    /// Per (year, scenario): total demand and, per generation slot, the
    /// summed capacity factor and the variable cost. Empty unless valid
    /// inequalities are on.
    vi_data: Vec<(f64, Vec<(usize, f64, f64)>)>,
}

/// The master program with the indices needed to read it back and to
/// extend it with stabilization terms.
#[derive(Debug, Clone)]
pub struct MasterProgram {
    pub program: ConvexProgram,
    pub first_stage: FirstStageVars,
    /// Estimators, year-major.
    pub alpha: Vec<usize>,
    /// Row of each stored cut, in store order.
    pub cut_rows: Vec<usize>,
    pub counts: RowCounts,
    /// Valid-inequality rows (yearly balance, per-tech linking).
    pub vi_rows: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub point: CapacityPoint,
    /// U at the (rounded) expansion.
    pub expansion_cost: f64,
    /// U + sum p * alpha, excluding any stabilization term.
    pub objective: f64,
    pub alpha: Vec<f64>,
    /// Binding status of each stored cut, in store order.
    pub binding: Vec<bool>,
    pub achieved_tolerance: f64,
}

impl MasterState {
    pub fn new(inst: &ProblemInstance, eta: Option<usize>, valid_inequalities: bool) -> Self {
        let layout = Layout::new(inst);
        let mut state = MasterState {
            probabilities: inst.scenarios.iter().map(|s| s.probability).collect(),
            layout,
            cuts: Vec::new(),
            eta,
            valid_inequalities: false,
            vi_data: Vec::new(),
        };
        if valid_inequalities {
            state.add_valid_inequalities(inst);
        }
        state
    }

    pub fn n_estimators(&self) -> usize {
        self.layout.n_years * self.layout.n_scenarios
    }

    /// Enables the yearly energy balance and generation linking rows.
    ///
    /// Unserved energy is not a variable of its own: the balance row prices
    /// it at the loss-of-load cost through the estimator,
    /// `alpha >= c_lss * demand + sum (vc_i - c_lss) * gen_i`, which every
    /// dispatch satisfies because storage is lossless and cyclic.
    pub fn add_valid_inequalities(&mut self, inst: &ProblemInstance) {
        self.vi_data.clear();
        for y in inst.years.iter() {
            for sc in &inst.scenarios {
                let total: f64 = sc.demand(*y).iter().sum();
                let mut per_slot = Vec::new();
                for (ti, tech) in inst.technologies.iter().enumerate() {
                    if tech.is_storage() {
                        continue;
                    }
                    let cf: f64 = sc.capacity_factor(*y, &tech.id).iter().sum();
                    per_slot.push((
                        self.layout.power_slot(ti),
                        cf,
                        tech.variable_cost(*y, &sc.id),
                    ));
                }
                self.vi_data.push((total, per_slot));
            }
        }
        self.valid_inequalities = true;
    }

    /// Appends one cut per (year, scenario), all marked active at `k`.
    pub fn add_cuts(&mut self, cuts: Vec<Cut>, k: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &cuts {
            if c.year >= self.layout.n_years || c.scenario >= self.layout.n_scenarios {
                return Err(Error::InvalidArgument(format!(
                    "cut for ({}, {}) out of range",
                    c.year, c.scenario
                )));
            }
            if c.gradient.len() != self.layout.n_slots() {
                return Err(Error::InvalidArgument(
                    "cut gradient length mismatch".into(),
                ));
            }
            if !seen.insert((c.year, c.scenario)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate cut for ({}, {}) in one batch",
                    c.year, c.scenario
                )));
            }
        }
        self.cuts.extend(cuts.into_iter().map(|mut c| {
            c.last_active = k;
            c
        }));
        Ok(())
    }

    /// Refreshes `last_active` for binding cuts (`binding[i]` refers to the
    /// i-th stored cut) and drops cuts idle for more than `eta` iterations.
    pub fn maintain_cuts(&mut self, k: usize, binding: &[bool]) -> usize {
        for (c, &b) in self.cuts.iter_mut().zip(binding) {
            if b {
                c.last_active = k;
            }
        }
        let Some(eta) = self.eta else {
            return 0;
        };
        let before = self.cuts.len();
        self.cuts.retain(|c| k.saturating_sub(c.last_active) <= eta);
        before - self.cuts.len()
    }

    pub fn build(&self, inst: &ProblemInstance) -> MasterProgram {
        let l = &self.layout;
        let mut p = ConvexProgram::new();
        let mut counts = RowCounts::default();
        let first_stage = add_first_stage(&mut p, inst, l, &mut counts);
        let ns = self.layout.n_scenarios;
        let alpha: Vec<usize> = (0..self.n_estimators())
            .map(|i| p.add_var(ESTIMATOR_FLOOR, f64::INFINITY, self.probabilities[i % ns]))
            .collect();

        let mut vi_rows = (0, 0);
        if self.valid_inequalities {
            for (i, (total, per_slot)) in self.vi_data.iter().enumerate() {
                let y = i / ns;
                let gens: Vec<usize> = per_slot
                    .iter()
                    .map(|_| p.add_var(0.0, f64::INFINITY, 0.0))
                    .collect();
                let c_lss = inst.loss_of_load_cost;
                let mut row = vec![(alpha[i], 1.0)];
                row.extend(
                    gens.iter()
                        .zip(per_slot)
                        .map(|(&g, &(_, _, vc))| (g, c_lss - vc)),
                );
                p.add_row(row, Sense::Ge, c_lss * total);
                vi_rows.0 += 1;
                for (&g, &(slot, cf, _)) in gens.iter().zip(per_slot) {
                    let capa = first_stage.capacity[l.index(y, slot)];
                    p.add_row(vec![(g, 1.0), (capa, -cf)], Sense::Le, 0.0);
                    vi_rows.1 += 1;
                }
            }
        }

        let ns_slots = l.n_slots();
        let cut_rows = self
            .cuts
            .iter()
            .map(|c| {
                let mut row = vec![(alpha[c.year * ns + c.scenario], 1.0)];
                for (i, &g) in c.gradient.iter().enumerate() {
                    if g != 0.0 {
                        row.push((first_stage.capacity[c.year * ns_slots + i], -g));
                    }
                }
                p.add_row(row, Sense::Ge, c.rhs())
            })
            .collect();

        MasterProgram {
            program: p,
            first_stage,
            alpha,
            cut_rows,
            counts,
            vi_rows,
        }
    }

    /// Builds and solves the plain master program.
    pub fn solve(&self, inst: &ProblemInstance, rel_tolerance: f64) -> Result<MasterSolution> {
        let mp = self.build(inst);
        let out = solver::solve(&mp.program, rel_tolerance)?;
        mp.extract(
            inst,
            &self.layout,
            &self.probabilities,
            &out,
            "master problem",
        )
    }
}

impl MasterProgram {
    /// Reads a solution of this program, or of any extension of it that
    /// kept its variable and row indices.
    pub fn extract(
        &self,
        inst: &ProblemInstance,
        layout: &Layout,
        probabilities: &[f64],
        out: &SolveOutcome,
        context: &str,
    ) -> Result<MasterSolution> {
        if !out.is_optimal() {
            return Err(Error::solver(context, out.status));
        }
        let x = &out.primal;
        let expansion = self
            .first_stage
            .expansion
            .iter()
            .map(|&j| if x[j] < ROUND_THRESHOLD { 0.0 } else { x[j] })
            .collect();
        let point = CapacityPoint::from_expansion(inst, layout, expansion);
        let u = expansion_cost(inst, layout, &point.expansion);
        let ns = layout.n_scenarios;
        let alpha: Vec<f64> = self
            .alpha
            .iter()
            .map(|&j| x[j].max(ESTIMATOR_FLOOR))
            .collect();
        let expected: f64 = alpha
            .iter()
            .enumerate()
            .map(|(i, a)| probabilities[i % ns] * a)
            .sum();
        let binding = self
            .cut_rows
            .iter()
            .map(|&r| {
                let rhs = self.program.rows[r].rhs;
                self.program.row_slack(r, x) <= BINDING_TOLERANCE * (1.0 + rhs.abs())
            })
            .collect();
        Ok(MasterSolution {
            point,
            expansion_cost: u,
            objective: u + expected,
            alpha,
            binding,
            achieved_tolerance: out.achieved_tolerance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::analytic_1240;
    use crate::instance::generate_synthetic;
    use crate::subproblem::{evaluate, make_cut};

    fn cut_at(
        inst: &ProblemInstance,
        l: &Layout,
        y: usize,
        s: usize,
        capa: &[f64],
        k: usize,
    ) -> Cut {
        make_cut(&evaluate(inst, l, y, s, capa, 1e-8).unwrap(), capa, k)
    }

    #[test]
    fn fresh_master_is_trivial() {
        let inst = generate_synthetic(2, 3, 3, 1, 24, 2).unwrap();
        let m = MasterState::new(&inst, Some(20), false);
        assert_eq!(m.n_estimators(), 6);
        assert_eq!(m.build(&inst).alpha.len(), 6);
        let sol = m.solve(&inst, 1e-8).unwrap();
        assert!(sol.point.expansion.iter().all(|&e| e == 0.0));
        assert!(sol.objective.abs() < 1e-6);
    }

    #[test]
    fn valid_inequality_rows() {
        let inst = generate_synthetic(2, 3, 4, 1, 24, 2).unwrap();
        let m = MasterState::new(&inst, Some(20), true);
        let mp = m.build(&inst);
        assert_eq!(mp.vi_rows, (6, 6 * 3));
    }

    #[test]
    fn valid_inequalities_force_capacity() {
        let inst = analytic_1240();
        let m = MasterState::new(&inst, None, true);
        let sol = m.solve(&inst, 1e-8).unwrap();
        assert!(sol.point.capacity[0] >= 10.0 - 1e-6, "{:?}", sol.point);

        // demand 240 in total, capacity factor summing to 12 -> 20 MW
        let mut half = analytic_1240();
        for v in half.scenarios[0]
            .capacity_factor
            .get_mut(&2030)
            .unwrap()
            .get_mut("gen")
            .unwrap()
        {
            *v = 0.5;
        }
        let m = MasterState::new(&half, None, true);
        let sol = m.solve(&half, 1e-8).unwrap();
        assert!(sol.point.capacity[0] >= 20.0 - 1e-6, "{:?}", sol.point);
    }

    #[test]
    fn valid_inequalities_allow_load_shedding() {
        // 5 MW cap: 500 invest + 120 MWh at 1 + 120 MWh shed at 1000
        let mut inst = analytic_1240();
        inst.technologies[0].capacity_upper_bound = Some(5.0);
        let closed = crate::detequiv::solve_closed(&inst, 1e-9)
            .unwrap()
            .objective;
        assert!((closed - 120_620.0).abs() < 1e-3, "{closed}");
        let sol = MasterState::new(&inst, None, true)
            .solve(&inst, 1e-9)
            .unwrap();
        assert!(
            sol.objective <= closed * (1.0 + 1e-8),
            "{} > {closed}",
            sol.objective
        );
        assert!(sol.objective >= closed * (1.0 - 1e-6), "{}", sol.objective);
    }

    #[test]
    fn one_round_bounds_closed_optimum() {
        let inst = analytic_1240();
        let l = Layout::new(&inst);
        let mut m = MasterState::new(&inst, Some(20), false);
        m.add_cuts(vec![cut_at(&inst, &l, 0, 0, &[0.0], 1)], 1)
            .unwrap();
        let sol = m.solve(&inst, 1e-8).unwrap();
        assert!(sol.objective <= 1240.0 + 1e-4, "{}", sol.objective);
        assert_eq!(sol.binding, vec![true]);
    }

    #[test]
    fn duplicate_cut_rejected() {
        let inst = analytic_1240();
        let l = Layout::new(&inst);
        let mut m = MasterState::new(&inst, Some(20), false);
        let c = cut_at(&inst, &l, 0, 0, &[5.0], 1);
        assert!(m.add_cuts(vec![c.clone(), c], 1).is_err());
        assert!(m.cuts.is_empty());
    }

    #[test]
    fn aging_deletes_idle_cuts() {
        let inst = analytic_1240();
        let l = Layout::new(&inst);
        let mut m = MasterState::new(&inst, Some(20), false);
        m.add_cuts(vec![cut_at(&inst, &l, 0, 0, &[5.0], 1)], 1)
            .unwrap();
        for k in 2..=21 {
            assert_eq!(m.maintain_cuts(k, &[false]), 0);
        }
        assert_eq!(m.maintain_cuts(22, &[false]), 1);
        assert!(m.cuts.is_empty());
    }

    #[test]
    fn binding_cuts_survive() {
        let inst = analytic_1240();
        let l = Layout::new(&inst);
        let mut m = MasterState::new(&inst, Some(20), false);
        m.add_cuts(vec![cut_at(&inst, &l, 0, 0, &[5.0], 1)], 1)
            .unwrap();
        for k in 2..100 {
            assert_eq!(m.maintain_cuts(k, &[true]), 0);
        }
        assert_eq!(m.cuts[0].last_active, 99);
    }

    #[test]
    fn unlimited_eta_keeps_everything() {
        let inst = analytic_1240();
        let l = Layout::new(&inst);
        let mut m = MasterState::new(&inst, None, false);
        for k in 1..=5 {
            m.add_cuts(vec![cut_at(&inst, &l, 0, 0, &[k as f64], k)], k)
                .unwrap();
            m.maintain_cuts(k + 50, &[]);
        }
        assert_eq!(m.cuts.len(), 5);
    }
}
