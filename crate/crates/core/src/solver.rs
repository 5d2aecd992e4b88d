//! Solver-neutral convex program representation and the interior-point
//! backend used to solve it.
//!
//! Programs are linear with optional separable convex quadratic objective
//! terms and at most one Euclidean ball constraint, which is passed to the
//! backend as a second-order-cone row. Duals are reported as sensitivities
//! of the optimal objective with respect to each row's right-hand side, so
//! `min x s.t. x >= 3` has dual `+1`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::{Error, Result};

/// Accepted range for the relative tolerance handed to [`solve`].
pub const MIN_TOLERANCE: f64 = 1e-10;
pub const MAX_TOLERANCE: f64 = 1e-1;

/// Loosest primal/dual residual tolerance. Residuals are otherwise held at
/// 1% of the gap tolerance so early-terminated iterates stay feasible.
const FEASIBILITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `sum_j (x[vars[j]] - center[j])^2 <= radius^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallConstraint {
    pub vars: Vec<usize>,
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvexProgram {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cost: Vec<f64>,
    pub cost_offset: f64,
    /// Separable quadratic objective terms `weight * x[var]^2`.
    pub quadratic: Vec<(usize, f64)>,
    pub rows: Vec<LinearRow>,
    pub ball: Option<BallConstraint>,
}

impl ConvexProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.push(cost);
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(LinearRow { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic.iter().all(|&(_, w)| w == 0.0) && self.ball.is_none()
    }

    /// Adds `weight * sum_j (x[vars[j]] - center[j])^2` to the objective.
    pub fn add_squared_distance(&mut self, vars: &[usize], center: &[f64], weight: f64) {
        assert_eq!(vars.len(), center.len());
        for (&v, &c) in vars.iter().zip(center) {
            self.quadratic.push((v, weight));
            self.cost[v] -= 2.0 * weight * c;
            self.cost_offset += weight * c * c;
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.cost.iter().zip(x).map(|(c, v)| c * v).sum();
        let quad: f64 = self.quadratic.iter().map(|&(j, w)| w * x[j] * x[j]).sum();
        lin + quad + self.cost_offset
    }

    pub fn row_activity(&self, row: usize, x: &[f64]) -> f64 {
        self.rows[row].coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Nonnegative slack of an inequality row at `x` (zero for equalities).
    pub fn row_slack(&self, row: usize, x: &[f64]) -> f64 {
        let r = &self.rows[row];
        let act = self.row_activity(row, x);
        match r.sense {
            Sense::Le => r.rhs - act,
            Sense::Ge => act - r.rhs,
            Sense::Eq => 0.0,
        }
    }

    /// Largest violation of any bound or row at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for j in 0..self.n_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for (r, row) in self.rows.iter().enumerate() {
            let act = self.row_activity(r, x);
            let v = match row.sense {
                Sense::Le => act - row.rhs,
                Sense::Ge => row.rhs - act,
                Sense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        if let Some(b) = &self.ball {
            let d: f64 = b
                .vars
                .iter()
                .zip(&b.center)
                .map(|(&v, c)| (x[v] - c).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(d - b.radius);
        }
        worst
    }

    fn check(&self) -> Result<()> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::InvalidArgument(
                "bound vectors differ in length".into(),
            ));
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] || self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "variable {j} has empty bounds"
                )));
            }
        }
        for &(j, w) in &self.quadratic {
            if j >= n || !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(
                    "quadratic objective terms must be nonnegative (positive semidefinite)".into(),
                ));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) || !row.rhs.is_finite() {
                return Err(Error::InvalidArgument(format!("row {r} is malformed")));
            }
        }
        if let Some(b) = &self.ball {
            if b.vars.len() != b.center.len()
                || b.vars.iter().any(|&v| v >= n)
                || !(b.radius >= 0.0 && b.radius.is_finite())
            {
                return Err(Error::InvalidArgument(
                    "ball constraint is malformed".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    OptimalWithinTol,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    /// d(objective)/d(rhs) per row; empty unless the solve succeeded.
    pub duals: Vec<f64>,
    pub objective: f64,
    /// Relative primal-dual gap actually reached.
    pub achieved_tolerance: f64,
    pub iterations: u32,
    pub solve_time: f64,
}

impl SolveOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::OptimalWithinTol
    }
}

/// How a user row was mapped into the conic form `A x + s = b`.
struct RowMap {
    cone_row: usize,
    sign: f64,
    scale: f64,
}

/// Solves `program` to the given relative gap tolerance.
///
/// Returns an error only for malformed input; solver trouble is reported
/// through [`SolveOutcome::status`].
pub fn solve(program: &ConvexProgram, rel_tolerance: f64) -> Result<SolveOutcome> {
    if !(MIN_TOLERANCE..=MAX_TOLERANCE).contains(&rel_tolerance) {
        return Err(Error::InvalidArgument(format!(
            "tolerance {rel_tolerance} outside [{MIN_TOLERANCE}, {MAX_TOLERANCE}]"
        )));
    }
    program.check()?;
    let n = program.n_vars();

    // Equality block first (zero cone), then inequalities (nonnegative cone),
    // then the optional second-order cone.
    let mut eq: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut le: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut maps: Vec<(bool, usize, f64, f64)> = Vec::with_capacity(program.n_rows());

    for row in &program.rows {
        let scale = row.coeffs.iter().fold(0.0_f64, |m, &(_, a)| m.max(a.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let sign = if row.sense == Sense::Ge { -1.0 } else { 1.0 };
        let coeffs: Vec<(usize, f64)> = row
            .coeffs
            .iter()
            .map(|&(j, a)| (j, sign * a / scale))
            .collect();
        let rhs = sign * row.rhs / scale;
        if row.sense == Sense::Eq {
            maps.push((true, eq.len(), sign, scale));
            eq.push((coeffs, rhs));
        } else {
            maps.push((false, le.len(), sign, scale));
            le.push((coeffs, rhs));
        }
    }
    for j in 0..n {
        let (lo, hi) = (program.lower[j], program.upper[j]);
        if lo == hi {
            eq.push((vec![(j, 1.0)], lo));
            continue;
        }
        if lo.is_finite() {
            le.push((vec![(j, -1.0)], -lo));
        }
        if hi.is_finite() {
            le.push((vec![(j, 1.0)], hi));
        }
    }

    let n_eq = eq.len();
    let n_le = le.len();
    let row_maps: Vec<RowMap> = maps
        .into_iter()
        .map(|(is_eq, idx, sign, scale)| RowMap {
            cone_row: if is_eq { idx } else { n_eq + idx },
            sign,
            scale,
        })
        .collect();

    let mut ri = Vec::new();
    let mut cj = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::with_capacity(n_eq + n_le);
    for (r, (coeffs, rhs)) in eq.iter().chain(le.iter()).enumerate() {
        for &(j, a) in coeffs {
            if a != 0.0 {
                ri.push(r);
                cj.push(j);
                vals.push(a);
            }
        }
        b.push(*rhs);
    }
    let mut cones = Vec::new();
    if n_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(n_eq));
    }
    if n_le > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(n_le));
    }
    if let Some(ball) = &program.ball {
        // s = [radius; x - center] in the second-order cone.
        let base = b.len();
        b.push(ball.radius);
        for (k, (&v, &c)) in ball.vars.iter().zip(&ball.center).enumerate() {
            ri.push(base + 1 + k);
            cj.push(v);
            vals.push(-1.0);
            b.push(-c);
        }
        cones.push(SupportedConeT::SecondOrderConeT(ball.vars.len() + 1));
    }
    let m = b.len();
    let a_mat = CscMatrix::new_from_triplets(m, n, ri, cj, vals);

    let mut pi = Vec::new();
    let mut pv = Vec::new();
    let mut diag = vec![0.0; n];
    for &(j, w) in &program.quadratic {
        diag[j] += 2.0 * w;
    }
    for (j, d) in diag.iter().enumerate() {
        if *d != 0.0 {
            pi.push(j);
            pv.push(*d);
        }
    }
    let p_mat = CscMatrix::new_from_triplets(n, n, pi.clone(), pi, pv);

    // Equilibration occasionally produces a spurious infeasibility
    // certificate on badly scaled programs; retry once without it.
    let mut solver = None;
    for equilibrate in [true, false] {
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(200)
            .equilibrate_enable(equilibrate)
            .tol_gap_rel(rel_tolerance)
            .tol_gap_abs(rel_tolerance)
            .tol_feas((rel_tolerance * 1e-2).clamp(1e-11, FEASIBILITY_TOLERANCE))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("solver settings: {e}")))?;
        let mut s = DefaultSolver::new(&p_mat, &program.cost, &a_mat, &b, &cones, settings)
            .map_err(|e| Error::InvalidArgument(format!("solver setup: {e:?}")))?;
        s.solve();
        let done = matches!(
            s.solution.status,
            SolverStatus::Solved | SolverStatus::AlmostSolved
        );
        solver = Some(s);
        if done {
            break;
        }
    }
    let solver = solver.expect("at least one attempt");
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::OptimalWithinTol,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalFailure,
    };

    let mut outcome = SolveOutcome {
        status,
        primal: Vec::new(),
        duals: Vec::new(),
        objective: f64::NAN,
        achieved_tolerance: f64::NAN,
        iterations: sol.iterations,
        solve_time: sol.solve_time,
    };
    if status == SolveStatus::OptimalWithinTol {
        let x = sol.x.clone();
        outcome.objective = program.objective_value(&x);
        outcome.duals = row_maps
            .iter()
            .map(|rm| -sol.z[rm.cone_row] * rm.sign / rm.scale)
            .collect();
        // Measured against the primal point actually returned, which can
        // sit slightly further from the optimum than the solver's own gap.
        let (p, d) = (outcome.objective, sol.obj_val_dual);
        let measured = (p - d).abs() / 1f64.max(p.abs().min(d.abs()));
        outcome.achieved_tolerance = measured.max(rel_tolerance);
        outcome.primal = x;
    }
    Ok(outcome)
}
