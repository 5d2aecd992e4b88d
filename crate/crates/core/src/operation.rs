//! Operational block of one (year, scenario): dispatch, storage and
//! loss-of-load variables with their capacity, balance and cost rows.
//! Shared by the closed formulation and the subproblems.

use crate::instance::ProblemInstance;
use crate::layout::{Layout, SlotKind};
use crate::solver::{ConvexProgram, Sense};

/// Row counts per family, used for structural checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RowCounts {
    /// Generation and storage capacity rows.
    pub capacity: usize,
    /// Hourly energy balance rows.
    pub balance: usize,
    /// Circular storage level rows.
    pub storage_balance: usize,
    /// Capacity linkage (or fixing) rows.
    pub linkage: usize,
    /// Storage energy/power ratio rows.
    pub ratio: usize,
    /// Cost definition rows.
    pub cost: usize,
}

impl RowCounts {
    pub fn total(&self) -> usize {
        self.capacity + self.balance + self.storage_balance + self.linkage + self.ratio + self.cost
    }
}

#[derive(Debug, Clone)]
pub struct OperationVars {
    pub year: usize,
    pub scenario: usize,
    /// Operational cost variable `V`.
    pub cost: usize,
    pub loss_of_load: Vec<usize>,
    pub generation: Vec<GenerationVars>,
    pub storage: Vec<StorageVars>,
}

#[derive(Debug, Clone)]
pub struct GenerationVars {
    pub tech: usize,
    pub slot: usize,
    pub variable_cost: f64,
    pub output: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct StorageVars {
    pub power_slot: usize,
    pub energy_slot: usize,
    pub charge: Vec<usize>,
    pub discharge: Vec<usize>,
}

impl OperationVars {
    /// Cost of a feasible dispatch built from `x`, a possibly slightly
    /// infeasible solution of this block at capacities `capacity` (one per
    /// layout slot of the block's year). Never below the block's optimum.
    ///
    /// Storage flows are trimmed so storage alone never oversupplies a step,
    /// then rebalanced over the cycle and scaled to fit the energy capacity.
    /// Generation is clipped to its availability, surplus is curtailed from
    /// the most expensive unit, and a shortfall is met from spare capacity
    /// before any load is shed.
    pub fn feasible_cost(&self, inst: &ProblemInstance, capacity: &[f64], x: &[f64]) -> f64 {
        let nt = inst.time_steps;
        let y = inst.years[self.year];
        let sc = &inst.scenarios[self.scenario];
        let demand = sc.demand(y);

        // Demand left after the storage units processed so far; kept >= 0.
        let mut residual: Vec<f64> = demand.iter().map(|d| d.max(0.0)).collect();
        for st in &self.storage {
            let p_cap = capacity[st.power_slot].max(0.0);
            let e_cap = capacity[st.energy_slot].max(0.0);
            let mut ch: Vec<f64> = st.charge.iter().map(|&j| x[j].clamp(0.0, p_cap)).collect();
            let mut dis: Vec<f64> = st
                .discharge
                .iter()
                .map(|&j| x[j].clamp(0.0, p_cap))
                .collect();
            for t in 0..nt {
                dis[t] = dis[t].min(residual[t] + ch[t]);
            }
            let (c, d): (f64, f64) = (ch.iter().sum(), dis.iter().sum());
            if d > c {
                let f = if d > 0.0 { c / d } else { 0.0 };
                dis.iter_mut().for_each(|v| *v *= f);
            } else if c > d {
                let lo: Vec<f64> = (0..nt).map(|t| (dis[t] - residual[t]).max(0.0)).collect();
                let lo_sum: f64 = lo.iter().sum();
                let g = ((d - lo_sum) / (c - lo_sum)).clamp(0.0, 1.0);
                for t in 0..nt {
                    ch[t] = lo[t] + (ch[t] - lo[t]).max(0.0) * g;
                }
            }
            let (mut level, mut lo, mut hi) = (0.0_f64, 0.0_f64, 0.0_f64);
            for t in 0..nt {
                level += ch[t] - dis[t];
                lo = lo.min(level);
                hi = hi.max(level);
            }
            if hi - lo > e_cap {
                let f = if hi > lo { e_cap / (hi - lo) } else { 0.0 };
                ch.iter_mut().for_each(|v| *v *= f);
                dis.iter_mut().for_each(|v| *v *= f);
            }
            for t in 0..nt {
                residual[t] = (residual[t] - dis[t] + ch[t]).max(0.0);
            }
        }

        let mut order: Vec<(&GenerationVars, &[f64])> = self
            .generation
            .iter()
            .map(|g| (g, sc.capacity_factor(y, &inst.technologies[g.tech].id)))
            .collect();
        order.sort_by(|a, b| b.0.variable_cost.total_cmp(&a.0.variable_cost));
        let mut cost = 0.0;
        let mut shed = 0.0;
        let mut out = vec![0.0; order.len()];
        let mut avail = vec![0.0; order.len()];
        for t in 0..nt {
            for ((o, a), (g, cf)) in out.iter_mut().zip(avail.iter_mut()).zip(&order) {
                *a = cf[t].max(0.0) * capacity[g.slot].max(0.0);
                *o = x[g.output[t]].clamp(0.0, *a);
            }
            let mut surplus = out.iter().sum::<f64>() - residual[t];
            for o in out.iter_mut() {
                let cut = o.min(surplus.max(0.0));
                *o -= cut;
                surplus -= cut;
            }
            // A shortfall left by clipping goes to spare capacity, cheapest first.
            for (o, a) in out.iter_mut().zip(&avail).rev() {
                let add = (a - *o).max(0.0).min((-surplus).max(0.0));
                *o += add;
                surplus += add;
            }
            cost += out
                .iter()
                .zip(&order)
                .map(|(o, (g, _))| g.variable_cost * o)
                .sum::<f64>();
            shed += (-surplus).max(0.0);
        }
        cost + inst.loss_of_load_cost * shed
    }
}

/// Adds the operation of (`year`, `scen`) to `p`, linked to the capacity
/// variables `capa` (one per layout slot). The cost variable receives
/// objective weight `weight`.
pub fn add_operation(
    p: &mut ConvexProgram,
    inst: &ProblemInstance,
    layout: &Layout,
    year: usize,
    scen: usize,
    capa: &[usize],
    weight: f64,
    counts: &mut RowCounts,
) -> OperationVars {
    let nt = inst.time_steps;
    let y = inst.years[year];
    let sc = &inst.scenarios[scen];
    let inf = f64::INFINITY;

    let lss: Vec<usize> = (0..nt).map(|_| p.add_var(0.0, inf, 0.0)).collect();
    let mut generation = Vec::new();
    let mut storage = Vec::new();
    let mut balance: Vec<Vec<(usize, f64)>> = lss.iter().map(|&l| vec![(l, 1.0)]).collect();
    let mut cost_terms: Vec<(usize, f64)> = Vec::new();

    for (slot, s) in layout.slots.iter().enumerate() {
        if s.kind != SlotKind::Power {
            continue;
        }
        let tech = &inst.technologies[s.tech];
        if !tech.is_storage() {
            let cf = sc.capacity_factor(y, &tech.id);
            let var_cost = tech.variable_cost(y, &sc.id);
            let mut output = Vec::with_capacity(nt);
            for t in 0..nt {
                let g = p.add_var(0.0, inf, 0.0);
                output.push(g);
                let mut row = vec![(g, 1.0)];
                if cf[t] != 0.0 {
                    row.push((capa[slot], -cf[t]));
                }
                p.add_row(row, Sense::Le, 0.0);
                counts.capacity += 1;
                balance[t].push((g, 1.0));
                if var_cost != 0.0 {
                    cost_terms.push((g, -var_cost));
                }
            }
            generation.push(GenerationVars {
                tech: s.tech,
                slot,
                variable_cost: var_cost,
                output,
            });
        } else {
            let energy = layout
                .energy_slot(s.tech)
                .expect("storage has an energy slot");
            let charge: Vec<usize> = (0..nt).map(|_| p.add_var(0.0, inf, 0.0)).collect();
            let discharge: Vec<usize> = (0..nt).map(|_| p.add_var(0.0, inf, 0.0)).collect();
            let level: Vec<usize> = (0..nt).map(|_| p.add_var(0.0, inf, 0.0)).collect();
            for t in 0..nt {
                p.add_row(
                    vec![(discharge[t], 1.0), (capa[slot], -1.0)],
                    Sense::Le,
                    0.0,
                );
                p.add_row(vec![(charge[t], 1.0), (capa[slot], -1.0)], Sense::Le, 0.0);
                p.add_row(vec![(level[t], 1.0), (capa[energy], -1.0)], Sense::Le, 0.0);
                counts.capacity += 3;
                balance[t].push((charge[t], -1.0));
                balance[t].push((discharge[t], 1.0));
            }
            // level[t] = level[t-1] + charge[t] - discharge[t], wrapping around.
            for t in 0..nt {
                let prev = if t == 0 { nt - 1 } else { t - 1 };
                let mut row = vec![(charge[t], -1.0), (discharge[t], 1.0)];
                if prev != t {
                    row.push((level[t], 1.0));
                    row.push((level[prev], -1.0));
                }
                p.add_row(row, Sense::Eq, 0.0);
                counts.storage_balance += 1;
            }
            storage.push(StorageVars {
                power_slot: slot,
                energy_slot: energy,
                charge,
                discharge,
            });
        }
    }

    let demand = sc.demand(y);
    for (t, row) in balance.into_iter().enumerate() {
        p.add_row(row, Sense::Eq, demand[t]);
        counts.balance += 1;
    }

    let v = p.add_var(f64::NEG_INFINITY, inf, weight);
    let mut row = vec![(v, 1.0)];
    row.extend(lss.iter().map(|&l| (l, -inst.loss_of_load_cost)));
    row.extend(cost_terms);
    p.add_row(row, Sense::Eq, 0.0);
    counts.cost += 1;

    OperationVars {
        year,
        scenario: scen,
        cost: v,
        loss_of_load: lss,
        generation,
        storage,
    }
}

#[derive(Debug, Clone)]
pub struct FirstStageVars {
    /// Expansion variables, flattened (year, slot).
    pub expansion: Vec<usize>,
    /// Capacity variables, flattened (year, slot).
    pub capacity: Vec<usize>,
    /// Expansion cost variable `U`.
    pub expansion_cost: usize,
}

/// Adds expansion and capacity variables, the capacity linkage, storage
/// ratio bounds and the expansion cost definition. `U` gets objective
/// weight 1.
pub fn add_first_stage(
    p: &mut ConvexProgram,
    inst: &ProblemInstance,
    layout: &Layout,
    counts: &mut RowCounts,
) -> FirstStageVars {
    let ns = layout.n_slots();
    let mut expansion = Vec::with_capacity(layout.n_first_stage());
    let mut capacity = Vec::with_capacity(layout.n_first_stage());
    for _year in 0..layout.n_years {
        for slot in 0..ns {
            // Implied by the capacity bound; explicit so every first-stage
            // variable is boxed.
            let hi = if layout.expandable(inst, slot) {
                layout.capacity_upper_bound(inst, slot)
            } else {
                0.0
            };
            expansion.push(p.add_var(0.0, hi, 0.0));
        }
    }
    for _year in 0..layout.n_years {
        for slot in 0..ns {
            capacity.push(p.add_var(0.0, layout.capacity_upper_bound(inst, slot), 0.0));
        }
    }
    for (yi, y) in inst.years.iter().enumerate() {
        let linked = &inst.expansion_linkage[y];
        for slot in 0..ns {
            let mut row = vec![(capacity[layout.index(yi, slot)], 1.0)];
            for (ei, e) in inst.years.iter().enumerate() {
                if linked.contains(e) {
                    row.push((expansion[layout.index(ei, slot)], -1.0));
                }
            }
            p.add_row(row, Sense::Eq, layout.existing(inst, slot));
            counts.linkage += 1;
        }
        for (ti, tech) in inst.technologies.iter().enumerate() {
            let (Some(b), Some(e)) = (tech.energy_power_ratio_bounds, layout.energy_slot(ti))
            else {
                continue;
            };
            let pw = capacity[layout.index(yi, layout.power_slot(ti))];
            let en = capacity[layout.index(yi, e)];
            p.add_row(vec![(en, 1.0), (pw, -b.min)], Sense::Ge, 0.0);
            p.add_row(vec![(en, 1.0), (pw, -b.max)], Sense::Le, 0.0);
            counts.ratio += 2;
        }
    }
    let u = p.add_var(0.0, f64::INFINITY, 1.0);
    let mut row = vec![(u, 1.0)];
    for yi in 0..layout.n_years {
        for slot in 0..ns {
            let c = layout.invest_cost(inst, yi, slot);
            if c != 0.0 {
                row.push((expansion[layout.index(yi, slot)], -c));
            }
        }
    }
    p.add_row(row, Sense::Eq, 0.0);
    counts.cost += 1;
    FirstStageVars {
        expansion,
        capacity,
        expansion_cost: u,
    }
}

/// Expansion cost of a flattened (year, slot) expansion vector.
pub fn expansion_cost(inst: &ProblemInstance, layout: &Layout, expansion: &[f64]) -> f64 {
    let ns = layout.n_slots();
    (0..layout.n_years)
        .flat_map(|y| (0..ns).map(move |s| (y, s)))
        .map(|(y, s)| layout.invest_cost(inst, y, s) * expansion[layout.index(y, s)])
        .sum()
}
