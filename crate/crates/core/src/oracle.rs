//! Dense two-phase tableau simplex used as an independent reference for
//! small linear programs. It shares nothing with the interior-point path
//! except the [`ConvexProgram`] description of the problem.

use crate::error::{Error, Result};
use crate::solver::{ConvexProgram, Sense};

/// Largest number of structural variables the dense oracle accepts.
pub const ORACLE_VARIABLE_LIMIT: usize = 5_000;

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

/// How an original variable is expressed through nonnegative columns.
enum Column {
    /// x = offset + col
    Shifted { col: usize, offset: f64 },
    /// x = offset - col
    Mirrored { col: usize, offset: f64 },
    /// x = plus - minus
    Free { plus: usize, minus: usize },
}

struct Tableau {
    rows: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, pr: usize, pc: usize, obj: &mut [f64]) {
        let w = self.width;
        let p = self.data[pr * w + pc];
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[pr * w..(pr + 1) * w].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f != 0.0 {
                let row = &mut self.data[r * w..(r + 1) * w];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    if *pv != 0.0 {
                        *v -= f * pv;
                    }
                }
                row[pc] = 0.0;
            }
        }
        let f = obj[pc];
        if f != 0.0 {
            for (v, pv) in obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            obj[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Runs primal simplex on reduced-cost row `obj` (last entry is -z).
    /// Returns false when unbounded.
    fn optimize(&mut self, obj: &mut [f64], allowed: &dyn Fn(usize) -> bool) -> bool {
        let ncols = self.width - 1;
        let mut degenerate_run = 0usize;
        loop {
            let bland = degenerate_run > 50;
            let mut enter = None;
            let mut best = -COST_EPS;
            for c in 0..ncols {
                if !allowed(c) {
                    continue;
                }
                if obj[c] < best {
                    enter = Some(c);
                    if bland {
                        break;
                    }
                    best = obj[c];
                }
            }
            let Some(pc) = enter else { return true };
            let mut leave = None;
            let mut ratio = f64::INFINITY;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_EPS {
                    let t = self.rhs(r) / a;
                    let better = t < ratio - 1e-12
                        || (t <= ratio + 1e-12
                            && leave.is_some_and(|l: usize| self.basis[r] < self.basis[l]));
                    if better {
                        ratio = t;
                        leave = Some(r);
                    }
                }
            }
            let Some(pr) = leave else { return false };
            if ratio.abs() < 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(pr, pc, obj);
        }
    }
}

/// Solves a linear program with the dense two-phase simplex method.
pub fn solve_lp(program: &ConvexProgram) -> Result<LpOutcome> {
    if !program.is_linear() {
        return Err(Error::InvalidArgument(
            "the simplex oracle handles linear programs only".into(),
        ));
    }
    let n = program.n_vars();
    if n > ORACLE_VARIABLE_LIMIT {
        return Err(Error::SizeGuard {
            variables: n,
            limit: ORACLE_VARIABLE_LIMIT,
        });
    }

    // Map variables to nonnegative columns.
    let mut columns = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (program.lower[j], program.upper[j]);
        let c = if lo.is_finite() {
            if hi.is_finite() {
                bound_rows.push((ncols, hi - lo));
            }
            Column::Shifted {
                col: ncols,
                offset: lo,
            }
        } else if hi.is_finite() {
            Column::Mirrored {
                col: ncols,
                offset: hi,
            }
        } else {
            ncols += 1;
            Column::Free {
                plus: ncols - 1,
                minus: ncols,
            }
        };
        ncols += 1;
        columns.push(c);
    }

    // Rows in terms of columns: (coeffs, sense, rhs).
    let mut rows: Vec<(Vec<(usize, f64)>, Sense, f64)> = Vec::new();
    for row in &program.rows {
        let mut coeffs = Vec::with_capacity(row.coeffs.len());
        let mut rhs = row.rhs;
        for &(j, a) in &row.coeffs {
            match columns[j] {
                Column::Shifted { col, offset } => {
                    coeffs.push((col, a));
                    rhs -= a * offset;
                }
                Column::Mirrored { col, offset } => {
                    coeffs.push((col, -a));
                    rhs -= a * offset;
                }
                Column::Free { plus, minus } => {
                    coeffs.push((plus, a));
                    coeffs.push((minus, -a));
                }
            }
        }
        rows.push((coeffs, row.sense, rhs));
    }
    for &(col, ub) in &bound_rows {
        rows.push((vec![(col, 1.0)], Sense::Le, ub));
    }

    let mut cost = vec![0.0; ncols];
    let mut cost_offset = program.cost_offset;
    for j in 0..n {
        let c = program.cost[j];
        match columns[j] {
            Column::Shifted { col, offset } => {
                cost[col] += c;
                cost_offset += c * offset;
            }
            Column::Mirrored { col, offset } => {
                cost[col] -= c;
                cost_offset += c * offset;
            }
            Column::Free { plus, minus } => {
                cost[plus] += c;
                cost[minus] -= c;
            }
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let first_slack = ncols;
    let first_art = ncols + n_slack;
    let width = first_art + m + 1;
    let mut tab = Tableau {
        rows: m,
        width,
        data: vec![0.0; m * width],
        basis: vec![usize::MAX; m],
    };
    let mut slack = first_slack;
    let mut needs_art = Vec::new();
    for (r, (coeffs, sense, rhs)) in rows.iter().enumerate() {
        let flip = if *rhs < 0.0 { -1.0 } else { 1.0 };
        for &(c, a) in coeffs {
            tab.data[r * width + c] += flip * a;
        }
        tab.data[r * width + width - 1] = flip * rhs;
        match sense {
            Sense::Le | Sense::Ge => {
                let s = if *sense == Sense::Le { 1.0 } else { -1.0 } * flip;
                tab.data[r * width + slack] = s;
                if s > 0.0 {
                    tab.basis[r] = slack;
                } else {
                    needs_art.push(r);
                }
                slack += 1;
            }
            Sense::Eq => needs_art.push(r),
        }
    }
    for &r in &needs_art {
        let a = first_art + r;
        tab.data[r * width + a] = 1.0;
        tab.basis[r] = a;
    }

    // Phase I: minimize the sum of artificials.
    let mut obj = vec![0.0; width];
    for &r in &needs_art {
        obj[first_art + r] = 1.0;
    }
    for &r in &needs_art {
        for c in 0..width {
            obj[c] -= tab.at(r, c);
        }
    }
    tab.optimize(&mut obj, &|_| true);
    let infeasibility = -obj[width - 1];
    let scale = rows.iter().map(|r| r.2.abs()).fold(1.0_f64, f64::max);
    if infeasibility > 1e-7 * scale {
        return Ok(LpOutcome::Infeasible);
    }
    // Drive remaining artificials out of the basis where possible.
    for r in 0..m {
        if tab.basis[r] >= first_art {
            if let Some(c) = (0..first_art).find(|&c| tab.at(r, c).abs() > PIVOT_EPS) {
                let mut dummy = vec![0.0; width];
                tab.pivot(r, c, &mut dummy);
            }
        }
    }

    // Phase II on the original costs.
    let mut obj = vec![0.0; width];
    obj[..ncols].copy_from_slice(&cost);
    for r in 0..m {
        let b = tab.basis[r];
        let cb = obj[b];
        if cb != 0.0 {
            for c in 0..width {
                obj[c] -= cb * tab.at(r, c);
            }
        }
    }
    if !tab.optimize(&mut obj, &|c| c < first_art) {
        return Ok(LpOutcome::Unbounded);
    }

    let mut colval = vec![0.0; width - 1];
    for r in 0..m {
        colval[tab.basis[r]] = tab.rhs(r);
    }
    let x: Vec<f64> = columns
        .iter()
        .map(|c| match *c {
            Column::Shifted { col, offset } => offset + colval[col],
            Column::Mirrored { col, offset } => offset - colval[col],
            Column::Free { plus, minus } => colval[plus] - colval[minus],
        })
        .collect();
    let objective = program.objective_value(&x);
    debug_assert!(
        (objective - (cost_offset - obj[width - 1])).abs() <= 1e-6 * (1.0 + objective.abs())
    );
    Ok(LpOutcome::Optimal { objective, x })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(out: LpOutcome) -> f64 {
        match out {
            LpOutcome::Optimal { objective, .. } => objective,
            o => panic!("expected optimum, got {o:?}"),
        }
    }

    #[test]
    fn textbook_lp() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let mut p = ConvexProgram::new();
        let x = p.add_var(0.0, f64::INFINITY, -3.0);
        let y = p.add_var(0.0, f64::INFINITY, -5.0);
        p.add_row(vec![(x, 1.0)], Sense::Le, 4.0);
        p.add_row(vec![(y, 2.0)], Sense::Le, 12.0);
        p.add_row(vec![(x, 3.0), (y, 2.0)], Sense::Le, 18.0);
        match solve_lp(&p).unwrap() {
            LpOutcome::Optimal { objective, x: v } => {
                assert!((objective + 36.0).abs() < 1e-9);
                assert!((v[0] - 2.0).abs() < 1e-9 && (v[1] - 6.0).abs() < 1e-9);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y s.t. x + y = 5, x >= 1, y >= 2, x <= 2.5 (bound)
        let mut p = ConvexProgram::new();
        let x = p.add_var(0.0, 2.5, 1.0);
        let y = p.add_var(0.0, f64::INFINITY, 2.0);
        p.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 5.0);
        p.add_row(vec![(x, 1.0)], Sense::Ge, 1.0);
        p.add_row(vec![(y, 1.0)], Sense::Ge, 2.0);
        assert!((obj(solve_lp(&p).unwrap()) - 7.5).abs() < 1e-9);
    }

    #[test]
    fn free_and_mirrored_variables() {
        // min x - y, x free with x >= -3 via row, y <= 2 (no lower bound) and y >= -10 via row
        let mut p = ConvexProgram::new();
        let x = p.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let y = p.add_var(f64::NEG_INFINITY, 2.0, -1.0);
        p.add_row(vec![(x, 1.0)], Sense::Ge, -3.0);
        p.add_row(vec![(y, 1.0)], Sense::Ge, -10.0);
        assert!((obj(solve_lp(&p).unwrap()) + 5.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut p = ConvexProgram::new();
        let x = p.add_var(0.0, f64::INFINITY, 0.0);
        p.add_row(vec![(x, 1.0)], Sense::Le, -1.0);
        assert_eq!(solve_lp(&p).unwrap(), LpOutcome::Infeasible);

        let mut q = ConvexProgram::new();
        let x = q.add_var(0.0, f64::INFINITY, -1.0);
        q.add_row(vec![(x, 1.0)], Sense::Ge, 1.0);
        assert_eq!(solve_lp(&q).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn size_guard() {
        let mut p = ConvexProgram::new();
        for _ in 0..=ORACLE_VARIABLE_LIMIT {
            p.add_var(0.0, 1.0, 1.0);
        }
        assert!(matches!(solve_lp(&p), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn degenerate_lp_terminates() {
        // Classic cycling example under the largest-coefficient rule (Beale).
        let mut p = ConvexProgram::new();
        let x: Vec<usize> = [-0.75, 150.0, -0.02, 6.0]
            .iter()
            .map(|&c| p.add_var(0.0, f64::INFINITY, c))
            .collect();
        p.add_row(
            vec![(x[0], 0.25), (x[1], -60.0), (x[2], -0.04), (x[3], 9.0)],
            Sense::Le,
            0.0,
        );
        p.add_row(
            vec![(x[0], 0.5), (x[1], -90.0), (x[2], -0.02), (x[3], 3.0)],
            Sense::Le,
            0.0,
        );
        p.add_row(vec![(x[2], 1.0)], Sense::Le, 1.0);
        assert!((obj(solve_lp(&p).unwrap()) + 0.05).abs() < 1e-9);
    }
}
