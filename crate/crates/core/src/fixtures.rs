//! Small hand-built instances with known optima, shared by unit and
//! integration tests.

use std::collections::{BTreeMap, BTreeSet};

use crate::instance::{
    ProblemInstance, RatioBounds, Scenario, TechKind, Technology, SCHEMA_VERSION,
};

/// One year, one scenario, one generation technology with capacity factor 1,
/// flat demand, invest cost 100, variable cost 1 and loss-of-load cost 1000.
///
/// With demand 10 over 24 steps the optimum builds 10 MW and costs
/// 100 * 10 + 1 * 240 = 1240.
pub fn flat_demand(demand: f64, time_steps: usize) -> ProblemInstance {
    let y = 2030;
    ProblemInstance {
        version: SCHEMA_VERSION,
        years: vec![y],
        expansion_linkage: BTreeMap::from([(y, BTreeSet::from([y]))]),
        time_steps,
        loss_of_load_cost: 1000.0,
        technologies: vec![Technology {
            id: "gen".into(),
            kind: TechKind::Generation,
            invest_cost: BTreeMap::from([(y, 100.0)]),
            energy_invest_cost: None,
            variable_cost: BTreeMap::from([(y, BTreeMap::from([("s0".to_string(), 1.0)]))]),
            capacity_upper_bound: None,
            fixed_capacity: None,
            energy_power_ratio_bounds: None,
        }],
        scenarios: vec![Scenario {
            id: "s0".into(),
            probability: 1.0,
            demand: BTreeMap::from([(y, vec![demand; time_steps])]),
            capacity_factor: BTreeMap::from([(
                y,
                BTreeMap::from([("gen".to_string(), vec![1.0; time_steps])]),
            )]),
        }],
    }
}

/// The 1240 instance: demand 10 for 24 steps.
pub fn analytic_1240() -> ProblemInstance {
    flat_demand(10.0, 24)
}

/// Adds a storage technology with the given power/energy invest costs.
pub fn with_storage(
    mut inst: ProblemInstance,
    power_cost: f64,
    energy_cost: f64,
) -> ProblemInstance {
    let costs = |c: f64| {
        inst.years
            .iter()
            .map(|&y| (y, c))
            .collect::<BTreeMap<_, _>>()
    };
    let tech = Technology {
        id: "battery".into(),
        kind: TechKind::Storage,
        invest_cost: costs(power_cost),
        energy_invest_cost: Some(costs(energy_cost)),
        variable_cost: BTreeMap::new(),
        capacity_upper_bound: None,
        fixed_capacity: None,
        energy_power_ratio_bounds: Some(RatioBounds {
            min: 1.0,
            max: 1000.0,
        }),
    };
    inst.technologies.push(tech);
    inst
}
