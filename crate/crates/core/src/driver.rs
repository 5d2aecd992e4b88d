//! The Benders loop: plain multi-cut iterations or stabilized ones, with the
//! inexact-cut tolerance schedule, bound tracking and trace recording.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::instance::ProblemInstance;
use crate::layout::{CapacityPoint, Layout};
use crate::master::{MasterSolution, MasterState};
use crate::operation::expansion_cost;
use crate::solver::{MAX_TOLERANCE, MIN_TOLERANCE};
use crate::stabilization::{initialize_center, Method, StabilizationParams, StabilizationState};
use crate::subproblem::{evaluate, make_cut, Cut, SubproblemResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    None,
    #[serde(alias = "exp")]
    Exponential,
    #[serde(alias = "lin")]
    Linear,
    #[serde(alias = "log")]
    Logarithmic,
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::None => "none",
            Schedule::Exponential => "exp",
            Schedule::Linear => "lin",
            Schedule::Logarithmic => "log",
        })
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Schedule::None),
            "exp" | "exponential" => Ok(Schedule::Exponential),
            "lin" | "linear" => Ok(Schedule::Linear),
            "log" | "logarithmic" => Ok(Schedule::Logarithmic),
            _ => Err(Error::InvalidArgument(format!("unknown schedule {s:?}"))),
        }
    }
}

/// Subproblem tolerance for the current optimality gap.
pub fn sp_tolerance(schedule: Schedule, gap: f64, epsilon: f64, tol_min: f64, tol_max: f64) -> f64 {
    let gap = if gap.is_nan() { 1.0 } else { gap };
    let u = ((gap - epsilon) / (1.0 - epsilon)).clamp(0.0, 1.0);
    match schedule {
        Schedule::None => tol_min,
        Schedule::Exponential => {
            10f64.powf(tol_min.log10() + u * (tol_max.log10() - tol_min.log10()))
        }
        Schedule::Linear => tol_min + u * (tol_max - tol_min),
        Schedule::Logarithmic => {
            tol_min + (tol_max - tol_min) * (1.0 + (std::f64::consts::E - 1.0) * u).ln()
        }
    }
}

/// Relative gap `1 - lb/ub`, guarded for bounds at or below zero.
pub fn relative_gap(lb: f64, ub: f64) -> f64 {
    if !ub.is_finite() || !lb.is_finite() {
        return f64::INFINITY;
    }
    if ub.abs() < 1e-12 {
        return if lb >= ub - 1e-12 { 0.0 } else { f64::INFINITY };
    }
    ((ub - lb) / ub.abs()).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub epsilon: f64,
    /// Idle iterations before a cut is deleted; `None` never deletes.
    pub eta: Option<usize>,
    pub schedule: Schedule,
    pub tol_max: f64,
    pub tol_min: f64,
    /// Tolerance of every master solve.
    pub master_tolerance: f64,
    pub max_iterations: usize,
    pub valid_inequalities: bool,
    /// Start from the most probable scenario's closed solution. `None`
    /// initializes exactly when a stabilization method is used.
    pub initialize: Option<bool>,
    pub mu_start: f64,
    pub mu_max: f64,
    pub beta: f64,
    pub psi: f64,
    /// Worker threads for the subproblem fan-out; 0 means one per core.
    pub workers: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = StabilizationParams::default();
        RunConfig {
            method: Method::TrustRegion,
            epsilon: 0.01,
            eta: Some(20),
            schedule: Schedule::Logarithmic,
            tol_max: 1e-2,
            tol_min: 1e-8,
            master_tolerance: 1e-8,
            max_iterations: 500,
            valid_inequalities: false,
            initialize: None,
            mu_start: p.mu_start,
            mu_max: p.mu_max,
            beta: p.beta,
            psi: p.psi,
            workers: 1,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn params(&self) -> StabilizationParams {
        StabilizationParams {
            mu_start: self.mu_start,
            mu_max: self.mu_max,
            beta: self.beta,
            psi: self.psi,
        }
    }

    pub fn initializes(&self) -> bool {
        self.initialize.unwrap_or(self.method != Method::None)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon {} must lie in (0, 1)", self.epsilon));
        }
        let range = MIN_TOLERANCE..=MAX_TOLERANCE;
        if !range.contains(&self.tol_min)
            || !range.contains(&self.tol_max)
            || self.tol_min >= self.tol_max
        {
            return bad(format!(
                "need {MIN_TOLERANCE} <= tol_min < tol_max <= {MAX_TOLERANCE}, got {} and {}",
                self.tol_min, self.tol_max
            ));
        }
        if !range.contains(&self.master_tolerance) {
            return bad(format!(
                "master tolerance {} out of range",
                self.master_tolerance
            ));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if self.initialize == Some(true) && self.method == Method::None {
            return bad("initialization requires a stabilization method".into());
        }
        self.params().validate()
    }
}

/// One iteration of the trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub t_total_s: f64,
    pub t_master_s: f64,
    pub t_sps_s: f64,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
    pub sp_tol: f64,
    pub cuts_added: usize,
    pub cuts_deleted: usize,
    pub cuts_total: usize,
    pub serious: bool,
    pub mu: Option<f64>,
    pub level: Option<f64>,
    pub psi: Option<f64>,
    /// Summed solver time of this iteration's subproblems.
    #[serde(skip)]
    pub sp_solve_time_s: f64,
    /// Largest `k - last_active` among cuts kept after maintenance.
    #[serde(skip)]
    pub max_cut_age: usize,
    #[serde(skip)]
    pub level_rebuilds: usize,
    /// Plain-master objective of this iteration (before the running max).
    #[serde(skip)]
    pub master_objective: f64,
    /// Trust-region iterates: distance to the center and the radius.
    #[serde(skip)]
    pub ball_distance: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub point: CapacityPoint,
    pub objective: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub converged: bool,
    pub iterations: usize,
    pub expansion_cost: f64,
    /// Subproblem values at the incumbent, `[year][scenario]`.
    pub sp_values: Vec<Vec<f64>>,
    pub trace: Vec<TraceRow>,
    /// Cuts still stored at the end.
    pub cuts: Vec<Cut>,
    /// Time spent initializing (zero without initialization).
    pub init_time_s: f64,
    pub total_time_s: f64,
    /// Summed solver time of every subproblem solve.
    pub sp_solve_time_s: f64,
    /// Interior-point iterations over all subproblem solves.
    pub sp_iterations: usize,
    /// Bound at the first plain-master solve that had cuts.
    pub first_cut_bound: Option<f64>,
}

struct Incumbent {
    point: CapacityPoint,
    results: Vec<SubproblemResult>,
    tolerance: f64,
}

fn pairs(layout: &Layout) -> Vec<(usize, usize)> {
    (0..layout.n_years)
        .flat_map(|y| (0..layout.n_scenarios).map(move |s| (y, s)))
        .collect()
}

fn solve_sps(
    inst: &ProblemInstance,
    layout: &Layout,
    exec: &Executor,
    point: &CapacityPoint,
    tol: f64,
) -> Result<Vec<SubproblemResult>> {
    exec.map(&pairs(layout), |&(y, s)| {
        evaluate(inst, layout, y, s, point.year_capacity(layout, y), tol)
    })
    .into_iter()
    .collect()
}

/// Cost of `point` from repaired feasible dispatches: a valid upper bound
/// whatever tolerance the subproblems were solved at.
fn upper_value(
    inst: &ProblemInstance,
    layout: &Layout,
    point: &CapacityPoint,
    results: &[SubproblemResult],
) -> f64 {
    expansion_cost(inst, layout, &point.expansion)
        + results
            .iter()
            .map(|r| inst.scenarios[r.scenario].probability * r.upper_value)
            .sum::<f64>()
}

/// Runs the decomposition with a worker pool built from `config.workers`.
pub fn run(inst: &ProblemInstance, config: &RunConfig) -> Result<RunResult> {
    let exec = Executor::new(config.workers)?;
    run_with(inst, config, &exec)
}

pub fn run_with(inst: &ProblemInstance, config: &RunConfig, exec: &Executor) -> Result<RunResult> {
    inst.ensure_valid()?;
    config.validate()?;
    let start = Instant::now();
    let mut master = MasterState::new(inst, config.eta, config.valid_inequalities);
    let layout = master.layout.clone();
    let mut stab = StabilizationState::new(config.method, config.params());
    let stabilized = config.method != Method::None;

    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut incumbent: Option<Incumbent> = None;
    let mut trace = Vec::new();
    let mut sp_solve_time = 0.0;
    let mut sp_iterations = 0;
    let mut init_time = 0.0;
    let mut first_cut_bound = None;

    if config.initializes() {
        let t0 = Instant::now();
        let tol = config.tol_min;
        let init = initialize_center(inst, &layout, exec, tol, tol)?;
        sp_solve_time += init.results.iter().map(|r| r.solve_time).sum::<f64>();
        sp_iterations += init.results.iter().map(|r| r.iterations).sum::<usize>();
        master.add_cuts(init.cuts, 0)?;
        ub = init.upper_bound;
        stab.set_center(init.point.expansion.clone(), ub);
        incumbent = Some(Incumbent {
            point: init.point,
            results: init.results,
            tolerance: tol,
        });
        init_time = t0.elapsed().as_secs_f64();
    }

    let mut last_mp_objective: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=config.max_iterations {
        iterations = k;
        let t_iter = Instant::now();
        let gap_before = relative_gap(lb, ub);
        let sp_tol = sp_tolerance(
            config.schedule,
            gap_before,
            config.epsilon,
            config.tol_min,
            config.tol_max,
        );
        let mp = master.build(inst);
        let has_cuts = !master.cuts.is_empty();
        let telemetry = (
            (config.method == Method::Proximal).then_some(stab.mu),
            config.method == Method::TrustRegion,
        );

        let mut t_master = 0.0;
        // Trust-region center and radius the iterate was confined to.
        let mut ball: Option<(Vec<f64>, f64)> = None;
        let iterate: MasterSolution;
        let plain: MasterSolution;
        let results: Vec<SubproblemResult>;
        let t_sps;

        if !stabilized || stab.center.is_none() {
            let t0 = Instant::now();
            let sol = master.solve(inst, config.master_tolerance)?;
            t_master += t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            results = solve_sps(inst, &layout, exec, &sol.point, sp_tol)?;
            t_sps = t1.elapsed().as_secs_f64();
            plain = sol.clone();
            iterate = sol;
        } else {
            let lower_known = match (config.method, last_mp_objective) {
                (Method::Level, None) => {
                    let t0 = Instant::now();
                    let sol = master.solve(inst, config.master_tolerance)?;
                    t_master += t0.elapsed().as_secs_f64();
                    Some(sol)
                }
                _ => None,
            };
            let lower = lower_known
                .as_ref()
                .map(|s| s.objective)
                .or(last_mp_objective)
                .unwrap_or(0.0);
            let t0 = Instant::now();
            let qmp = match stab.solve(inst, &master, &mp, lower, config.master_tolerance) {
                Ok(sol) => {
                    if config.method == Method::TrustRegion {
                        let c = stab
                            .center
                            .as_ref()
                            .expect("stabilized branch has a center");
                        ball = Some((c.expansion.clone(), stab.trust_radius()));
                    }
                    sol
                }
                Err(Error::Solver { context, status }) => {
                    log::warn!("{context} returned {status:?}; using the plain master iterate");
                    master.solve(inst, config.master_tolerance)?
                }
                Err(e) => return Err(e),
            };
            t_master += t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let (mp_out, sp_out) = exec.join(
                || match lower_known {
                    Some(sol) => Ok((sol, 0.0)),
                    None => {
                        let t = Instant::now();
                        master
                            .solve(inst, config.master_tolerance)
                            .map(|s| (s, t.elapsed().as_secs_f64()))
                    }
                },
                || solve_sps(inst, &layout, exec, &qmp.point, sp_tol),
            );
            t_sps = t1.elapsed().as_secs_f64();
            let (mp_sol, mp_time) = mp_out?;
            t_master += mp_time;
            results = sp_out?;
            plain = mp_sol;
            iterate = qmp;
        }

        if has_cuts && first_cut_bound.is_none() {
            first_cut_bound = Some(plain.objective);
        }
        last_mp_objective = Some(plain.objective);
        lb = lb.max(plain.objective);
        sp_solve_time += results.iter().map(|r| r.solve_time).sum::<f64>();
        sp_iterations += results.iter().map(|r| r.iterations).sum::<usize>();
        let iter_sp_time: f64 = results.iter().map(|r| r.solve_time).sum();

        // Cut bookkeeping at the iteration barrier, in (year, scenario) order.
        let cuts: Vec<Cut> = results
            .iter()
            .map(|r| make_cut(r, iterate.point.year_capacity(&layout, r.year), k))
            .collect();
        let cuts_added = cuts.len();
        master.add_cuts(cuts, k)?;
        let cuts_deleted = master.maintain_cuts(k, &iterate.binding);
        let max_cut_age = master
            .cuts
            .iter()
            .map(|c| k - c.last_active)
            .max()
            .unwrap_or(0);

        let ball_distance = ball.map(|(center, radius)| {
            let dist = iterate
                .point
                .expansion
                .iter()
                .zip(&center)
                .map(|(x, c)| (x - c).powi(2))
                .sum::<f64>()
                .sqrt();
            (dist, radius)
        });
        let candidate = upper_value(inst, &layout, &iterate.point, &results);
        let improved = candidate < ub;
        let level = (config.method == Method::Level && stab.center.is_some())
            .then(|| stab.level)
            .flatten();
        let level_rebuilds = if level.is_some() {
            stab.level_rebuilds
        } else {
            0
        };
        let psi = telemetry.1.then_some(stab.psi);
        if improved {
            ub = candidate;
            incumbent = Some(Incumbent {
                point: iterate.point.clone(),
                results,
                tolerance: sp_tol,
            });
        }
        if stabilized {
            let best = improved.then(|| (iterate.point.expansion.clone(), ub));
            stab.step(best, iterate.expansion_cost, plain.expansion_cost);
        }

        let mut gap = relative_gap(lb, ub);
        if gap <= config.epsilon {
            // Certify the incumbent with exact subproblem solves.
            let inc = incumbent
                .as_mut()
                .expect("finite upper bound has an incumbent");
            if inc.tolerance > config.tol_min {
                let exact = solve_sps(inst, &layout, exec, &inc.point, config.tol_min)?;
                sp_solve_time += exact.iter().map(|r| r.solve_time).sum::<f64>();
                sp_iterations += exact.iter().map(|r| r.iterations).sum::<usize>();
                inc.results = exact;
                inc.tolerance = config.tol_min;
            }
            // Both are valid bounds on the incumbent's cost.
            ub = ub.min(upper_value(inst, &layout, &inc.point, &inc.results));
            if let Some(c) = stab.center.as_mut() {
                c.objective = ub;
            }
            gap = relative_gap(lb, ub);
            converged = gap <= config.epsilon;
        }

        trace.push(TraceRow {
            iter: k,
            t_total_s: t_iter.elapsed().as_secs_f64(),
            t_master_s: t_master,
            t_sps_s: t_sps,
            lb,
            ub,
            gap,
            sp_tol,
            cuts_added,
            cuts_deleted,
            cuts_total: master.cuts.len(),
            serious: improved,
            mu: telemetry.0,
            level,
            psi,
            sp_solve_time_s: iter_sp_time,
            max_cut_age,
            level_rebuilds,
            master_objective: plain.objective,
            ball_distance,
        });
        log::debug!("iter {k}: lb {lb:.6} ub {ub:.6} gap {gap:.3e} tol {sp_tol:.1e}");
        if converged {
            break;
        }
    }

    let inc = incumbent.ok_or_else(|| Error::InvalidArgument("no iterations were run".into()))?;
    let mut sp_values = vec![vec![0.0; layout.n_scenarios]; layout.n_years];
    for r in &inc.results {
        sp_values[r.year][r.scenario] = r.value;
    }
    Ok(RunResult {
        expansion_cost: expansion_cost(inst, &layout, &inc.point.expansion),
        point: inc.point,
        objective: ub,
        lower_bound: lb,
        gap: relative_gap(lb, ub),
        converged,
        iterations,
        sp_values,
        trace,
        cuts: master.cuts,
        init_time_s: init_time,
        total_time_s: start.elapsed().as_secs_f64(),
        sp_solve_time_s: sp_solve_time,
        sp_iterations,
        first_cut_bound,
    })
}
