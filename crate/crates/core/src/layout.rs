//! Flat indexing of the first-stage decision: one capacity "slot" per
//! generation technology, two (power, energy) per storage technology.

use serde::Serialize;

use crate::instance::{ProblemInstance, TechKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Power,
    Energy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub tech: usize,
    pub kind: SlotKind,
}

/// Capacity bounds are this multiple of the largest need a slot could serve.
const DEFAULT_BOUND_FACTOR: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct Layout {
    pub slots: Vec<Slot>,
    pub n_years: usize,
    pub n_scenarios: usize,
    power_slot: Vec<usize>,
    energy_slot: Vec<Option<usize>>,
}

impl Layout {
    pub fn new(inst: &ProblemInstance) -> Self {
        let mut slots = Vec::new();
        let mut power_slot = Vec::new();
        let mut energy_slot = Vec::new();
        for (i, t) in inst.technologies.iter().enumerate() {
            power_slot.push(slots.len());
            slots.push(Slot {
                tech: i,
                kind: SlotKind::Power,
            });
            if t.kind == TechKind::Storage {
                energy_slot.push(Some(slots.len()));
                slots.push(Slot {
                    tech: i,
                    kind: SlotKind::Energy,
                });
            } else {
                energy_slot.push(None);
            }
        }
        Layout {
            slots,
            n_years: inst.years.len(),
            n_scenarios: inst.scenarios.len(),
            power_slot,
            energy_slot,
        }
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    /// Length of a flattened (year, slot) vector.
    pub fn n_first_stage(&self) -> usize {
        self.n_years * self.slots.len()
    }

    pub fn index(&self, year: usize, slot: usize) -> usize {
        year * self.slots.len() + slot
    }

    pub fn power_slot(&self, tech: usize) -> usize {
        self.power_slot[tech]
    }

    pub fn energy_slot(&self, tech: usize) -> Option<usize> {
        self.energy_slot[tech]
    }

    /// Investment cost of expanding `slot` in model year index `year`.
    pub fn invest_cost(&self, inst: &ProblemInstance, year: usize, slot: usize) -> f64 {
        let s = self.slots[slot];
        let t = &inst.technologies[s.tech];
        let y = inst.years[year];
        match s.kind {
            SlotKind::Power => t.invest_cost.get(&y).copied().unwrap_or(0.0),
            SlotKind::Energy => t
                .energy_invest_cost
                .as_ref()
                .and_then(|m| m.get(&y))
                .copied()
                .unwrap_or(0.0),
        }
    }

    /// Exogenous capacity present in every year (fixed technologies).
    pub fn existing(&self, inst: &ProblemInstance, slot: usize) -> f64 {
        let s = self.slots[slot];
        match s.kind {
            SlotKind::Power => inst.technologies[s.tech].fixed_capacity.unwrap_or(0.0),
            SlotKind::Energy => 0.0,
        }
    }

    /// Whether the slot may be expanded at all.
    pub fn expandable(&self, inst: &ProblemInstance, slot: usize) -> bool {
        let s = self.slots[slot];
        s.kind == SlotKind::Energy || inst.technologies[s.tech].fixed_capacity.is_none()
    }

    /// Upper bound on installed capacity: the explicit bound when given,
    /// otherwise 100 x (peak demand / smallest positive capacity factor).
    pub fn capacity_upper_bound(&self, inst: &ProblemInstance, slot: usize) -> f64 {
        let s = self.slots[slot];
        let t = &inst.technologies[s.tech];
        let peak = inst.peak_demand().max(1.0);
        let power = match t.capacity_upper_bound {
            Some(ub) => ub,
            None => match t.kind {
                TechKind::Generation => {
                    let min_cf = inst
                        .scenarios
                        .iter()
                        .flat_map(|sc| sc.capacity_factor.values())
                        .filter_map(|m| m.get(&t.id))
                        .flatten()
                        .copied()
                        .filter(|v| *v > 0.0)
                        .fold(f64::INFINITY, f64::min);
                    let min_cf = if min_cf.is_finite() { min_cf } else { 1.0 };
                    DEFAULT_BOUND_FACTOR * peak / min_cf
                }
                TechKind::Storage => DEFAULT_BOUND_FACTOR * peak,
            },
        };
        let power = power.max(t.fixed_capacity.unwrap_or(0.0));
        match s.kind {
            SlotKind::Power => power,
            SlotKind::Energy => {
                let hours = match t.energy_power_ratio_bounds {
                    Some(b) => b.min.max(b.max.min(inst.time_steps as f64)),
                    None => inst.time_steps as f64,
                };
                power * hours
            }
        }
    }

    /// Human-readable label "tech" or "tech/energy".
    pub fn slot_label(&self, inst: &ProblemInstance, slot: usize) -> String {
        let s = self.slots[slot];
        let id = &inst.technologies[s.tech].id;
        match s.kind {
            SlotKind::Power => id.clone(),
            SlotKind::Energy => format!("{id}/energy"),
        }
    }
}

/// A first-stage point: installed capacities and the expansion behind them,
/// both flattened year-major over the layout's slots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityPoint {
    pub capacity: Vec<f64>,
    pub expansion: Vec<f64>,
}

impl CapacityPoint {
    pub fn zeros(layout: &Layout) -> Self {
        CapacityPoint {
            capacity: vec![0.0; layout.n_first_stage()],
            expansion: vec![0.0; layout.n_first_stage()],
        }
    }

    /// Builds the capacities implied by an expansion plan.
    pub fn from_expansion(inst: &ProblemInstance, layout: &Layout, expansion: Vec<f64>) -> Self {
        let n = layout.n_slots();
        let mut capacity = vec![0.0; layout.n_first_stage()];
        for (yi, y) in inst.years.iter().enumerate() {
            let linked = &inst.expansion_linkage[y];
            for slot in 0..n {
                let mut c = layout.existing(inst, slot);
                for (ei, e) in inst.years.iter().enumerate() {
                    if linked.contains(e) {
                        c += expansion[layout.index(ei, slot)];
                    }
                }
                capacity[layout.index(yi, slot)] = c;
            }
        }
        CapacityPoint {
            capacity,
            expansion,
        }
    }

    pub fn year_capacity(&self, layout: &Layout, year: usize) -> &[f64] {
        let n = layout.n_slots();
        &self.capacity[year * n..(year + 1) * n]
    }

    /// Sets entries below `threshold` (and negatives) to exactly zero.
    pub fn rounded(mut self, threshold: f64) -> Self {
        for v in self.capacity.iter_mut().chain(self.expansion.iter_mut()) {
            if *v < threshold {
                *v = 0.0;
            }
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_synthetic;

    #[test]
    fn storage_gets_two_slots() {
        let inst = generate_synthetic(1, 1, 3, 1, 24, 2).unwrap();
        let l = Layout::new(&inst);
        assert_eq!(l.n_slots(), 4);
        assert_eq!(l.energy_slot(2), Some(3));
        assert_eq!(l.energy_slot(0), None);
        assert_eq!(l.n_first_stage(), 8);
    }

    #[test]
    fn capacities_follow_linkage() {
        let inst = generate_synthetic(1, 1, 2, 0, 24, 2).unwrap();
        let l = Layout::new(&inst);
        let p = CapacityPoint::from_expansion(&inst, &l, vec![1.0, 2.0, 10.0, 20.0]);
        assert_eq!(p.capacity, vec![1.0, 2.0, 11.0, 22.0]);
    }

    #[test]
    fn rounding_zeroes_small_values() {
        let p = CapacityPoint {
            capacity: vec![5e-7, -1e-9, 3.0],
            expansion: vec![1e-7, 2.0, 0.0],
        }
        .rounded(1e-6);
        assert_eq!(p.capacity, vec![0.0, 0.0, 3.0]);
        assert_eq!(p.expansion, vec![0.0, 2.0, 0.0]);
    }
}
