//! Proximal bundle, level bundle and quadratic trust-region stabilization of
//! the master problem, the serious/null step policy, and the heuristic
//! initial stability center.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detequiv::solve_closed_subset;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::instance::ProblemInstance;
use crate::layout::{CapacityPoint, Layout};
use crate::master::{MasterProgram, MasterSolution, MasterState};
use crate::operation::expansion_cost;
use crate::solver::{self, BallConstraint, ConvexProgram, Sense, SolveStatus};
use crate::subproblem::{evaluate, make_cut, Cut, SubproblemResult};

/// Smallest trust-region radius, so a zero (or tiny) center cannot freeze
/// the iterates.
pub const RADIUS_FLOOR: f64 = 1.0;

/// Level programs rebuilt at most this often before falling back to the
/// plain master iterate.
pub const MAX_LEVEL_REBUILDS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    None,
    Proximal,
    Level,
    #[serde(alias = "trust")]
    TrustRegion,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::None => "none",
            Method::Proximal => "proximal",
            Method::Level => "level",
            Method::TrustRegion => "trust",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Method::None),
            "proximal" => Ok(Method::Proximal),
            "level" => Ok(Method::Level),
            "trust" | "trust_region" => Ok(Method::TrustRegion),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizationParams {
    pub mu_start: f64,
    pub mu_max: f64,
    pub beta: f64,
    pub psi: f64,
}

impl Default for StabilizationParams {
    fn default() -> Self {
        StabilizationParams {
            mu_start: 0.1,
            mu_max: 5.0,
            beta: 0.25,
            psi: 0.01,
        }
    }
}

impl StabilizationParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.mu_start > 0.0 && self.mu_start.is_finite()) {
            return bad("mu_start must be positive");
        }
        if !(self.mu_max >= self.mu_start && self.mu_max.is_finite()) {
            return bad("mu_max must be at least mu_start");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie strictly between 0 and 1");
        }
        if !(self.psi > 0.0 && self.psi.is_finite()) {
            return bad("psi must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Center {
    pub expansion: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct StabilizationState {
    pub method: Method,
    pub params: StabilizationParams,
    pub center: Option<Center>,
    pub mu: f64,
    pub mu_min: f64,
    pub psi: f64,
    pub consecutive_at_cap: usize,
    /// Level used in the latest level iteration.
    pub level: Option<f64>,
    /// Rebuilds needed by the latest level iteration.
    pub level_rebuilds: usize,
}

/// Outcome of one level-method master solve.
#[derive(Debug, Clone)]
pub struct LevelSolve {
    pub solution: MasterSolution,
    pub level: f64,
    pub rebuilds: usize,
    /// True when the rebuild budget ran out and `solution` is the plain
    /// master iterate.
    pub fell_back: bool,
}

pub fn level_value(beta: f64, center_objective: f64, lower: f64) -> f64 {
    (beta * center_objective + (1.0 - beta) * lower).min(center_objective)
}

impl StabilizationState {
    pub fn new(method: Method, params: StabilizationParams) -> Self {
        StabilizationState {
            method,
            params,
            center: None,
            mu: params.mu_start,
            mu_min: params.mu_start / 16.0,
            psi: params.psi,
            consecutive_at_cap: 0,
            level: None,
            level_rebuilds: 0,
        }
    }

    /// ψ·‖center‖₁, never below [`RADIUS_FLOOR`].
    pub fn trust_radius(&self) -> f64 {
        let l1: f64 = self
            .center
            .as_ref()
            .map_or(0.0, |c| c.expansion.iter().map(|v| v.abs()).sum());
        (self.psi * l1).max(RADIUS_FLOOR)
    }

    /// The stabilized program for the current center. `level` is only used
    /// by the level method. Without a center this is the plain program.
    pub fn stabilized_program(&self, mp: &MasterProgram, level: Option<f64>) -> ConvexProgram {
        let mut p = mp.program.clone();
        let Some(center) = &self.center else {
            return p;
        };
        let vars = &mp.first_stage.expansion;
        match self.method {
            Method::None => {}
            Method::Proximal => p.add_squared_distance(vars, &center.expansion, self.mu),
            Method::Level => {
                let model: Vec<(usize, f64)> = p
                    .cost
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(j, &c)| (j, c))
                    .collect();
                let ell = level.unwrap_or(center.objective);
                p.add_row(model, Sense::Le, ell - p.cost_offset);
                p.cost.iter_mut().for_each(|c| *c = 0.0);
                p.cost_offset = 0.0;
                p.add_squared_distance(vars, &center.expansion, 1.0);
            }
            Method::TrustRegion => {
                p.ball = Some(BallConstraint {
                    vars: vars.clone(),
                    center: center.expansion.clone(),
                    radius: self.trust_radius(),
                });
            }
        }
        p
    }

    /// Solves the stabilized master. For the level method `lower` is the
    /// latest plain-master objective.
    pub fn solve(
        &mut self,
        inst: &ProblemInstance,
        master: &MasterState,
        mp: &MasterProgram,
        lower: f64,
        tol: f64,
    ) -> Result<MasterSolution> {
        if self.method == Method::Level && self.center.is_some() {
            return Ok(self.solve_level(inst, master, mp, lower, tol)?.solution);
        }
        let p = self.stabilized_program(mp, None);
        let out = solver::solve(&p, tol)?;
        let mut sol = mp.extract(
            inst,
            &master.layout,
            &master.probabilities,
            &out,
            "stabilized master",
        )?;
        if self.method == Method::TrustRegion {
            self.project_onto_ball(inst, master, &mut sol);
        }
        Ok(sol)
    }

    /// Interior-point iterates can sit marginally outside the ball.
    fn project_onto_ball(
        &self,
        inst: &ProblemInstance,
        master: &MasterState,
        sol: &mut MasterSolution,
    ) {
        let Some(center) = &self.center else { return };
        let r = self.trust_radius();
        let dist = sol
            .point
            .expansion
            .iter()
            .zip(&center.expansion)
            .map(|(x, c)| (x - c).powi(2))
            .sum::<f64>()
            .sqrt();
        if dist <= r {
            return;
        }
        let scale = r / dist;
        let expansion = sol
            .point
            .expansion
            .iter()
            .zip(&center.expansion)
            .map(|(x, c)| (c + (x - c) * scale).max(0.0))
            .collect();
        let u_old = sol.expansion_cost;
        sol.point = CapacityPoint::from_expansion(inst, &master.layout, expansion);
        sol.expansion_cost = expansion_cost(inst, &master.layout, &sol.point.expansion);
        sol.objective += sol.expansion_cost - u_old;
    }

    /// Level iteration with the infeasibility fallback: while the level
    /// program is infeasible the lower value is replaced by the level.
    pub fn solve_level(
        &mut self,
        inst: &ProblemInstance,
        master: &MasterState,
        mp: &MasterProgram,
        lower: f64,
        tol: f64,
    ) -> Result<LevelSolve> {
        let center = self
            .center
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("level method needs a center".into()))?
            .objective;
        let mut lower = lower;
        for rebuilds in 0..=MAX_LEVEL_REBUILDS {
            let ell = level_value(self.params.beta, center, lower);
            let p = self.stabilized_program(mp, Some(ell));
            let out = solver::solve(&p, tol)?;
            match out.status {
                SolveStatus::OptimalWithinTol => {
                    self.level = Some(ell);
                    self.level_rebuilds = rebuilds;
                    let solution = mp.extract(
                        inst,
                        &master.layout,
                        &master.probabilities,
                        &out,
                        "level master",
                    )?;
                    return Ok(LevelSolve {
                        solution,
                        level: ell,
                        rebuilds,
                        fell_back: false,
                    });
                }
                SolveStatus::Infeasible | SolveStatus::NumericalFailure => lower = ell,
                SolveStatus::Unbounded => {
                    return Err(Error::solver("level master", out.status));
                }
            }
        }
        log::warn!("level program still infeasible after {MAX_LEVEL_REBUILDS} rebuilds");
        self.level = Some(center);
        self.level_rebuilds = MAX_LEVEL_REBUILDS;
        let solution = master.solve(inst, tol)?;
        Ok(LevelSolve {
            solution,
            level: center,
            rebuilds: MAX_LEVEL_REBUILDS,
            fell_back: true,
        })
    }

    /// Installs a center unconditionally (initialization or first bound).
    pub fn set_center(&mut self, expansion: Vec<f64>, objective: f64) {
        self.center = Some(Center {
            expansion,
            objective,
        });
    }

    /// Serious/null step update. `new_best` carries the improved incumbent
    /// when the iteration lowered the upper bound; `u_qua` and `u_std` are
    /// the expansion costs of the stabilized and plain master iterates.
    pub fn step(&mut self, new_best: Option<(Vec<f64>, f64)>, u_qua: f64, u_std: f64) {
        match new_best {
            Some((expansion, objective)) => {
                self.set_center(expansion, objective);
                self.mu = (self.mu / 2.0).max(self.mu_min);
                self.consecutive_at_cap = 0;
            }
            None => match self.method {
                Method::Proximal => {
                    self.mu = (2.0 * self.mu).min(self.params.mu_max);
                    if self.mu >= self.params.mu_max {
                        self.consecutive_at_cap += 1;
                    } else {
                        self.consecutive_at_cap = 0;
                    }
                    if self.consecutive_at_cap >= 2 {
                        self.mu = self.params.mu_start;
                        self.consecutive_at_cap = 0;
                    }
                }
                Method::TrustRegion => {
                    if (u_qua - u_std).abs() <= 1e-6 * (1.0 + u_std.abs()) {
                        self.psi /= 2.0;
                    }
                }
                Method::None | Method::Level => {}
            },
        }
    }
}

/// Result of the heuristic initialization.
#[derive(Debug, Clone)]
pub struct Initialization {
    pub point: CapacityPoint,
    pub cuts: Vec<Cut>,
    pub results: Vec<SubproblemResult>,
    pub upper_bound: f64,
}

/// Solves the closed problem of the most probable scenario, evaluates every
/// subproblem at its capacities (at `sp_tol`) and returns the cuts of
/// iteration 0.
pub fn initialize_center(
    inst: &ProblemInstance,
    layout: &Layout,
    exec: &Executor,
    closed_tol: f64,
    sp_tol: f64,
) -> Result<Initialization> {
    let s = inst.most_probable_scenario();
    let closed = solve_closed_subset(inst, Some(&[s]), closed_tol)?;
    let point = closed.point;
    let pairs: Vec<(usize, usize)> = (0..layout.n_years)
        .flat_map(|y| (0..layout.n_scenarios).map(move |s| (y, s)))
        .collect();
    let results = exec
        .map(&pairs, |&(y, s)| {
            evaluate(inst, layout, y, s, point.year_capacity(layout, y), sp_tol)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let cuts = results
        .iter()
        .map(|r| make_cut(r, point.year_capacity(layout, r.year), 0))
        .collect();
    let upper_bound = expansion_cost(inst, layout, &point.expansion)
        + results
            .iter()
            .map(|r| inst.scenarios[r.scenario].probability * r.upper_value)
            .sum::<f64>();
    Ok(Initialization {
        point,
        cuts,
        results,
        upper_bound,
    })
}
