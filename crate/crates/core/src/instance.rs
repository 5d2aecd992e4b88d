//! Problem data: technologies, weather-year scenarios and cost parameters.
//!
//! Instances are immutable once built. They are stored on disk as a single
//! JSON document carrying an explicit schema version; every time series is a
//! flat numeric array of length `time_steps`.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version written to and required from instance files.
pub const SCHEMA_VERSION: u64 = 1;

pub type Year = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechKind {
    Generation,
    Storage,
}

/// Admissible energy-to-power ratio of a storage technology, in hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioBounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Technology {
    pub id: String,
    pub kind: TechKind,
    /// Investment cost per MW of (power) capacity, by expansion year.
    pub invest_cost: BTreeMap<Year, f64>,
    /// Investment cost per MWh of energy capacity; storage only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_invest_cost: Option<BTreeMap<Year, f64>>,
    /// Variable cost per MWh generated, by year and scenario id; generation only.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub variable_cost: BTreeMap<Year, BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_upper_bound: Option<f64>,
    /// Exogenous (power) capacity that cannot be expanded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_capacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_power_ratio_bounds: Option<RatioBounds>,
}

impl Technology {
    pub fn is_storage(&self) -> bool {
        self.kind == TechKind::Storage
    }

    pub fn variable_cost(&self, year: Year, scenario: &str) -> f64 {
        self.variable_cost
            .get(&year)
            .and_then(|m| m.get(scenario))
            .copied()
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub probability: f64,
    /// Demand in MWh per time step, by year.
    pub demand: BTreeMap<Year, Vec<f64>>,
    /// Capacity factors by year and generation technology id.
    pub capacity_factor: BTreeMap<Year, BTreeMap<String, Vec<f64>>>,
}

impl Scenario {
    pub fn demand(&self, year: Year) -> &[f64] {
        self.demand.get(&year).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn capacity_factor(&self, year: Year, tech: &str) -> &[f64] {
        self.capacity_factor
            .get(&year)
            .and_then(|m| m.get(tech))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub version: u64,
    pub years: Vec<Year>,
    /// For each year, the expansion years whose additions are still in service.
    pub expansion_linkage: BTreeMap<Year, BTreeSet<Year>>,
    pub time_steps: usize,
    pub loss_of_load_cost: f64,
    pub technologies: Vec<Technology>,
    pub scenarios: Vec<Scenario>,
}

/// A broken instance invariant: the offending field and the rule it breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

impl ProblemInstance {
    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(violations))
        }
    }

    pub fn generation_count(&self) -> usize {
        self.technologies.iter().filter(|t| !t.is_storage()).count()
    }

    /// Index of the scenario with the highest probability; ties go to the
    /// smallest id.
    pub fn most_probable_scenario(&self) -> usize {
        let mut best = 0;
        for (s, sc) in self.scenarios.iter().enumerate().skip(1) {
            let cur = &self.scenarios[best];
            if sc.probability > cur.probability
                || (sc.probability == cur.probability && sc.id < cur.id)
            {
                best = s;
            }
        }
        best
    }

    /// Copy restricted to the given scenarios with probabilities renormalized.
    pub fn restrict_scenarios(&self, subset: &[usize]) -> Result<ProblemInstance> {
        if subset.is_empty() {
            return Err(Error::InvalidArgument("scenario subset is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for &s in subset {
            if s >= self.scenarios.len() || !seen.insert(s) {
                return Err(Error::InvalidArgument(format!(
                    "scenario index {s} out of range or repeated"
                )));
            }
        }
        let total: f64 = subset.iter().map(|&s| self.scenarios[s].probability).sum();
        let n = subset.len() as f64;
        let scenarios = subset
            .iter()
            .map(|&s| {
                let mut sc = self.scenarios[s].clone();
                sc.probability = if total > 0.0 {
                    sc.probability / total
                } else {
                    1.0 / n
                };
                sc
            })
            .collect();
        Ok(ProblemInstance {
            scenarios,
            ..self.clone()
        })
    }

    pub fn peak_demand(&self) -> f64 {
        self.scenarios
            .iter()
            .flat_map(|s| s.demand.values().flatten())
            .fold(0.0_f64, |a, &b| a.max(b))
    }

    pub fn max_variable_cost(&self) -> f64 {
        self.technologies
            .iter()
            .flat_map(|t| t.variable_cost.values().flat_map(|m| m.values()))
            .fold(0.0_f64, |a, &b| a.max(b))
    }
}

pub fn validate(inst: &ProblemInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: String, rule: &str| {
        out.push(Violation {
            field,
            rule: rule.to_string(),
        })
    };

    if inst.years.is_empty() {
        push("years".into(), "at least one year required");
    }
    if inst.years.windows(2).any(|w| w[0] >= w[1]) {
        push("years".into(), "years must be strictly increasing");
    }
    if inst.time_steps == 0 {
        push("time_steps".into(), "must be positive");
    }
    if !(inst.loss_of_load_cost.is_finite() && inst.loss_of_load_cost >= 0.0) {
        push("loss_of_load_cost".into(), "must be finite and nonnegative");
    }

    for &y in &inst.years {
        match inst.expansion_linkage.get(&y) {
            None => push(
                format!("expansion_linkage[{y}]"),
                "missing linkage for year",
            ),
            Some(set) => {
                if !set.contains(&y) {
                    push(
                        format!("expansion_linkage[{y}]"),
                        "must contain the year itself",
                    );
                }
                if set.iter().any(|e| *e > y || !inst.years.contains(e)) {
                    push(
                        format!("expansion_linkage[{y}]"),
                        "may only contain model years not later than the year",
                    );
                }
            }
        }
    }

    if inst.generation_count() == 0 {
        push(
            "technologies".into(),
            "at least one generation technology required",
        );
    }
    let mut tech_ids = BTreeSet::new();
    for (i, t) in inst.technologies.iter().enumerate() {
        let f = |name: &str| format!("technologies[{i}].{name}");
        if !tech_ids.insert(t.id.as_str()) {
            push(f("id"), "duplicate technology id");
        }
        for &y in &inst.years {
            match t.invest_cost.get(&y) {
                Some(c) if c.is_finite() && *c >= 0.0 => {}
                Some(_) => push(f("invest_cost"), "invest cost must be finite and >= 0"),
                None => push(f("invest_cost"), "missing invest cost for a model year"),
            }
        }
        match (t.kind, &t.energy_invest_cost) {
            (TechKind::Storage, None) => push(
                f("energy_invest_cost"),
                "storage requires an energy invest cost",
            ),
            (TechKind::Storage, Some(m)) => {
                for &y in &inst.years {
                    match m.get(&y) {
                        Some(c) if c.is_finite() && *c >= 0.0 => {}
                        _ => push(
                            f("energy_invest_cost"),
                            "energy invest cost must be present, finite and >= 0",
                        ),
                    }
                }
            }
            (TechKind::Generation, Some(_)) => push(
                f("energy_invest_cost"),
                "generation technologies carry exactly one invest cost",
            ),
            (TechKind::Generation, None) => {}
        }
        match t.kind {
            TechKind::Generation => {
                for &y in &inst.years {
                    for s in &inst.scenarios {
                        let c = t.variable_cost.get(&y).and_then(|m| m.get(&s.id));
                        match c {
                            Some(c) if c.is_finite() && *c >= 0.0 => {
                                if *c >= inst.loss_of_load_cost {
                                    push(
                                        "loss_of_load_cost".into(),
                                        "must strictly exceed every variable cost",
                                    );
                                }
                            }
                            Some(_) => push(f("variable_cost"), "variable cost must be >= 0"),
                            None => push(
                                f("variable_cost"),
                                "missing variable cost for a (year, scenario)",
                            ),
                        }
                    }
                }
                if t.energy_power_ratio_bounds.is_some() {
                    push(
                        f("energy_power_ratio_bounds"),
                        "ratio bounds only apply to storage",
                    );
                }
            }
            TechKind::Storage => {
                if !t.variable_cost.is_empty() {
                    push(f("variable_cost"), "storage carries no variable cost");
                }
            }
        }
        if let Some(b) = t.energy_power_ratio_bounds {
            if !(b.min > 0.0 && b.min <= b.max && b.max.is_finite()) {
                push(f("energy_power_ratio_bounds"), "requires 0 < min <= max");
            }
        }
        if let Some(ub) = t.capacity_upper_bound {
            if !(ub.is_finite() && ub >= 0.0) {
                push(f("capacity_upper_bound"), "must be finite and >= 0");
            }
        }
        if let Some(fc) = t.fixed_capacity {
            if !(fc.is_finite() && fc >= 0.0) {
                push(f("fixed_capacity"), "must be finite and >= 0");
            }
        }
    }

    if inst.scenarios.is_empty() {
        push("scenarios".into(), "at least one scenario required");
    }
    let mut scen_ids = BTreeSet::new();
    let mut prob_sum = 0.0;
    for (k, s) in inst.scenarios.iter().enumerate() {
        let f = |name: &str| format!("scenarios[{k}].{name}");
        if !scen_ids.insert(s.id.as_str()) {
            push(f("id"), "duplicate scenario id");
        }
        if !(0.0..=1.0).contains(&s.probability) {
            push(f("probability"), "probability must lie in [0, 1]");
        }
        prob_sum += s.probability;
        for &y in &inst.years {
            match s.demand.get(&y) {
                None => push(f("demand"), "missing demand series for a model year"),
                Some(d) => {
                    if d.len() != inst.time_steps {
                        push(f("demand"), "series length differs from time_steps");
                    }
                    if d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                        push(f("demand"), "demand must be >= 0");
                    }
                }
            }
            for t in inst.technologies.iter().filter(|t| !t.is_storage()) {
                match s.capacity_factor.get(&y).and_then(|m| m.get(&t.id)) {
                    None => push(
                        f("capacity_factor"),
                        "missing capacity factor for a (year, generation technology)",
                    ),
                    Some(cf) => {
                        if cf.len() != inst.time_steps {
                            push(
                                f("capacity_factor"),
                                "series length differs from time_steps",
                            );
                        }
                        if cf.iter().any(|v| !(0.0..=1.0).contains(v)) {
                            push(f("capacity_factor"), "capacity factor must lie in [0, 1]");
                        }
                    }
                }
            }
        }
    }
    if !inst.scenarios.is_empty() && (prob_sum - 1.0).abs() > 1e-9 {
        push(
            "scenarios.probability".into(),
            "probabilities must sum to 1",
        );
    }

    out.dedup();
    out
}

/// Capacity factors below this are set to zero.
const CF_CUTOFF: f64 = 0.05;

/// Seeded synthetic weather-year instance.
///
/// Generation technologies cycle through solar, wind, baseload and peaker
/// archetypes. Demand is a positive base plus a diurnal sinusoid and noise;
/// capacity factors are clipped sinusoids plus noise, drawn per scenario and
/// shared by every year. Investment costs are per day of modelled time so the
/// economics do not depend on `time_steps`.
pub fn generate_synthetic(
    seed: u64,
    n_scenarios: usize,
    n_techs: usize,
    n_storage: usize,
    time_steps: usize,
    n_years: usize,
) -> Result<ProblemInstance> {
    if n_scenarios == 0 || n_years == 0 || time_steps == 0 {
        return Err(Error::InvalidArgument(
            "scenario, year and time-step counts must be positive".into(),
        ));
    }
    if n_techs == 0 {
        return Err(Error::InvalidArgument("n_techs must be at least 1".into()));
    }
    if n_storage >= n_techs {
        return Err(Error::InvalidArgument(format!(
            "n_storage ({n_storage}) must leave at least one generation technology among {n_techs}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let days = time_steps as f64 / 24.0;

    let years: Vec<Year> = (0..n_years).map(|i| 2030 + 10 * i as Year).collect();
    let expansion_linkage = years
        .iter()
        .map(|&y| (y, years.iter().copied().filter(|&e| e <= y).collect()))
        .collect();
    let scenario_ids: Vec<String> = (0..n_scenarios).map(|s| format!("s{s:02}")).collect();

    // (name, invest per MW-day, variable cost, learning per decade)
    const ARCHETYPES: [(&str, f64, f64, f64); 4] = [
        ("solar", 3.0, 0.1, 0.85),
        ("wind", 4.0, 0.2, 0.9),
        ("baseload", 5.0, 8.0, 1.0),
        ("peaker", 2.0, 25.0, 1.0),
    ];

    let n_gen = n_techs - n_storage;
    let mut technologies = Vec::with_capacity(n_techs);
    let mut archetype_of = Vec::with_capacity(n_gen);
    for g in 0..n_gen {
        let a = g % ARCHETYPES.len();
        let (name, inv, var, learn) = ARCHETYPES[a];
        archetype_of.push(a);
        let jitter = 0.8 + 0.4 * rng.random::<f64>();
        let id = if g < ARCHETYPES.len() {
            name.to_string()
        } else {
            format!("{name}_{}", g / ARCHETYPES.len() + 1)
        };
        let invest_cost = years
            .iter()
            .enumerate()
            .map(|(k, &y)| (y, inv * jitter * days * learn.powi(k as i32)))
            .collect();
        let variable_cost = years
            .iter()
            .map(|&y| {
                let per_s = scenario_ids
                    .iter()
                    .map(|s| (s.clone(), var * (0.9 + 0.2 * rng.random::<f64>())))
                    .collect();
                (y, per_s)
            })
            .collect();
        technologies.push(Technology {
            id,
            kind: TechKind::Generation,
            invest_cost,
            energy_invest_cost: None,
            variable_cost,
            capacity_upper_bound: None,
            fixed_capacity: None,
            energy_power_ratio_bounds: None,
        });
    }
    for st in 0..n_storage {
        let jitter = 0.8 + 0.4 * rng.random::<f64>();
        let invest_cost = years
            .iter()
            .enumerate()
            .map(|(k, &y)| (y, 1.0 * jitter * days * 0.9f64.powi(k as i32)))
            .collect();
        let energy_invest_cost = years
            .iter()
            .enumerate()
            .map(|(k, &y)| (y, 0.3 * jitter * days * 0.9f64.powi(k as i32)))
            .collect();
        technologies.push(Technology {
            id: format!("storage_{}", st + 1),
            kind: TechKind::Storage,
            invest_cost,
            energy_invest_cost: Some(energy_invest_cost),
            variable_cost: BTreeMap::new(),
            capacity_upper_bound: None,
            fixed_capacity: None,
            energy_power_ratio_bounds: Some(RatioBounds {
                min: 1.0,
                max: 1000.0,
            }),
        });
    }

    let mut scenarios = Vec::with_capacity(n_scenarios);
    for id in &scenario_ids {
        let level = 1.0 + 0.08 * (rng.random::<f64>() - 0.5);
        let wind_phase = 2.0 * PI * rng.random::<f64>();
        let wind_mean = 0.3 + 0.2 * rng.random::<f64>();
        let sun = 0.6 + 0.35 * rng.random::<f64>();

        let base_demand: Vec<f64> = (0..time_steps)
            .map(|t| {
                let hour = (t % 24) as f64;
                let diurnal = 0.15 * (2.0 * PI * (hour - 14.0) / 24.0).cos();
                let v = 100.0 * level * (1.0 + diurnal) + 3.0 * noise.sample(&mut rng);
                v.max(0.0)
            })
            .collect();
        let demand = years
            .iter()
            .enumerate()
            .map(|(k, &y)| {
                let growth = 1.1f64.powi(k as i32);
                (y, base_demand.iter().map(|d| d * growth).collect())
            })
            .collect();

        let mut cf_by_tech = BTreeMap::new();
        for (g, tech) in technologies.iter().take(n_gen).enumerate() {
            let series: Vec<f64> = (0..time_steps)
                .map(|t| {
                    let hour = (t % 24) as f64;
                    let raw = match archetype_of[g] {
                        0 => {
                            let s = (2.0 * PI * (hour - 6.0) / 24.0).sin().max(0.0);
                            if s > 0.0 {
                                sun * s + 0.05 * noise.sample(&mut rng)
                            } else {
                                0.0
                            }
                        }
                        1 => {
                            wind_mean
                                + 0.25 * (2.0 * PI * t as f64 / 84.0 + wind_phase).sin()
                                + 0.08 * noise.sample(&mut rng)
                        }
                        2 => 0.92 + 0.03 * noise.sample(&mut rng),
                        _ => 1.0,
                    };
                    // Output below the cutoff counts as off, which keeps the
                    // default capacity bounds (scaled by 1/min cf) moderate.
                    if raw < CF_CUTOFF {
                        0.0
                    } else {
                        raw.min(1.0)
                    }
                })
                .collect();
            cf_by_tech.insert(tech.id.clone(), series);
        }
        let capacity_factor = years.iter().map(|&y| (y, cf_by_tech.clone())).collect();

        scenarios.push(Scenario {
            id: id.clone(),
            probability: 1.0 / n_scenarios as f64,
            demand,
            capacity_factor,
        });
    }

    let mut inst = ProblemInstance {
        version: SCHEMA_VERSION,
        years,
        expansion_linkage,
        time_steps,
        loss_of_load_cost: 0.0,
        technologies,
        scenarios,
    };
    inst.loss_of_load_cost = 1000.0 * inst.max_variable_cost();
    debug_assert!(inst.validate().is_empty(), "{:?}", inst.validate());
    Ok(inst)
}

pub fn write_instance(inst: &ProblemInstance, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(inst)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_instance(&text).map_err(|e| match e {
        Error::Json(j) => Error::Parse {
            path: path.to_path_buf(),
            message: j.to_string(),
            line: j.line(),
            column: j.column(),
        },
        other => other,
    })
}

/// Parses an instance document, checking the schema version before the body.
pub fn parse_instance(text: &str) -> Result<ProblemInstance> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("version").and_then(serde_json::Value::as_u64) {
        Some(SCHEMA_VERSION) => {}
        Some(found) => {
            return Err(Error::SchemaVersion {
                found,
                expected: SCHEMA_VERSION,
            })
        }
        None => {
            // Let serde report the missing/ill-typed key with a position.
            serde_json::from_str::<ProblemInstance>(text)?;
        }
    }
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::flat_demand as one_tech;

    #[test]
    fn well_formed_instance_has_no_violations() {
        assert!(one_tech(10.0, 24).validate().is_empty());
    }

    #[test]
    fn probability_sum_violation() {
        let mut inst = one_tech(10.0, 4);
        let mut s2 = inst.scenarios[0].clone();
        s2.id = "s1".into();
        inst.scenarios[0].probability = 0.6;
        s2.probability = 0.6;
        inst.scenarios.push(s2);
        for m in inst.technologies[0].variable_cost.values_mut() {
            m.insert("s1".into(), 1.0);
        }
        let v = inst.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].field, "scenarios.probability");
    }

    #[test]
    fn capacity_factor_range_violation() {
        let mut inst = one_tech(10.0, 4);
        inst.scenarios[0]
            .capacity_factor
            .get_mut(&2030)
            .unwrap()
            .get_mut("gen")
            .unwrap()[2] = 1.3;
        let v = inst.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].field.contains("capacity_factor"));
        assert!(v[0].rule.contains("[0, 1]"));
    }

    #[test]
    fn linkage_must_contain_year_and_only_earlier_years() {
        let mut inst = one_tech(10.0, 4);
        inst.expansion_linkage.insert(2030, BTreeSet::from([2040]));
        let v = inst.validate();
        assert_eq!(v.len(), 2, "{v:?}");
    }

    #[test]
    fn loss_of_load_cost_must_exceed_variable_costs() {
        let mut inst = one_tech(10.0, 4);
        inst.loss_of_load_cost = 1.0;
        let v = inst.validate();
        assert!(v.iter().any(|v| v.field == "loss_of_load_cost"));
    }

    #[test]
    fn ratio_bounds_must_be_ordered() {
        let mut inst = generate_synthetic(1, 1, 2, 1, 24, 1).unwrap();
        inst.technologies[1].energy_power_ratio_bounds = Some(RatioBounds { min: 5.0, max: 2.0 });
        let v = inst.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].field.ends_with("energy_power_ratio_bounds"));
    }

    #[test]
    fn synthetic_is_deterministic_and_valid() {
        let a = generate_synthetic(7, 4, 3, 1, 48, 2).unwrap();
        let b = generate_synthetic(7, 4, 3, 1, 48, 2).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert!(a.validate().is_empty());
        assert!(a.scenarios.iter().all(|s| s.probability == 0.25));
        assert_eq!(a.loss_of_load_cost, 1000.0 * a.max_variable_cost());
    }

    #[test]
    fn synthetic_rejects_bad_counts() {
        assert!(generate_synthetic(1, 2, 0, 0, 24, 1).is_err());
        assert!(generate_synthetic(1, 2, 2, 2, 24, 1).is_err());
        assert!(generate_synthetic(1, 0, 2, 1, 24, 1).is_err());
    }

    #[test]
    fn most_probable_scenario_breaks_ties_by_id() {
        let mut inst = generate_synthetic(3, 3, 2, 0, 24, 1).unwrap();
        inst.scenarios.swap(0, 2);
        assert_eq!(inst.scenarios[inst.most_probable_scenario()].id, "s00");
        inst.scenarios[1].probability = 0.5;
        inst.scenarios[0].probability = 0.25;
        inst.scenarios[2].probability = 0.25;
        assert_eq!(inst.most_probable_scenario(), 1);
    }

    #[test]
    fn restrict_renormalizes() {
        let inst = generate_synthetic(3, 4, 2, 0, 24, 1).unwrap();
        let sub = inst.restrict_scenarios(&[1, 3]).unwrap();
        assert_eq!(sub.scenarios.len(), 2);
        assert!(sub
            .scenarios
            .iter()
            .all(|s| (s.probability - 0.5).abs() < 1e-15));
        assert!(inst.restrict_scenarios(&[]).is_err());
    }

    #[test]
    fn parse_reports_missing_scenarios_key() {
        let inst = one_tech(10.0, 2);
        let mut v = serde_json::to_value(&inst).unwrap();
        v.as_object_mut().unwrap().remove("scenarios");
        let err = parse_instance(&serde_json::to_string_pretty(&v).unwrap()).unwrap_err();
        assert!(err.to_string().contains("scenarios"), "{err}");
    }

    #[test]
    fn parse_rejects_other_schema_versions() {
        let mut inst = one_tech(10.0, 2);
        inst.version = 9;
        let err = parse_instance(&serde_json::to_string(&inst).unwrap()).unwrap_err();
        assert!(matches!(err, Error::SchemaVersion { found: 9, .. }));
    }

    #[test]
    fn file_parse_error_carries_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.json");
        fs::write(&p, "{\n  \"version\": 1,\n  \"years\": [2030,\n").unwrap();
        match read_instance(&p).unwrap_err() {
            Error::Parse { line, .. } => assert!(line >= 3),
            e => panic!("unexpected {e:?}"),
        }
    }
}
