//! Output files: convergence trace, solution summary and the closed-vs-BD
//! benchmark report.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detequiv::{build_closed, solve_closed};
use crate::driver::{run_with, RunConfig, RunResult, TraceRow};
use crate::error::Result;
use crate::exec::Executor;
use crate::instance::ProblemInstance;
use crate::layout::{Layout, SlotKind};
use crate::master::MasterState;

pub const TRACE_COLUMNS: [&str; 15] = [
    "iter",
    "t_total_s",
    "t_master_s",
    "t_sps_s",
    "lb",
    "ub",
    "gap",
    "sp_tol",
    "cuts_added",
    "cuts_deleted",
    "cuts_total",
    "serious",
    "mu",
    "level",
    "psi",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trace<W: Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in trace {
        w.write_record([
            r.iter.to_string(),
            r.t_total_s.to_string(),
            r.t_master_s.to_string(),
            r.t_sps_s.to_string(),
            r.lb.to_string(),
            r.ub.to_string(),
            r.gap.to_string(),
            r.sp_tol.to_string(),
            r.cuts_added.to_string(),
            r.cuts_deleted.to_string(),
            r.cuts_total.to_string(),
            u8::from(r.serious).to_string(),
            opt(r.mu),
            opt(r.level),
            opt(r.psi),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(trace: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    write_trace(trace, std::fs::File::create(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEntry {
    pub year: u32,
    pub technology: String,
    pub kind: String,
    pub value: f64,
}

/// Contents of `solution.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub objective: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub expansion: Vec<CapacityEntry>,
    pub capacities: Vec<CapacityEntry>,
    pub converged: bool,
    pub iterations: usize,
}

fn entries(inst: &ProblemInstance, layout: &Layout, values: &[f64]) -> Vec<CapacityEntry> {
    let mut out = Vec::with_capacity(values.len());
    for (yi, &year) in inst.years.iter().enumerate() {
        for (slot, s) in layout.slots.iter().enumerate() {
            out.push(CapacityEntry {
                year,
                technology: inst.technologies[s.tech].id.clone(),
                kind: match s.kind {
                    SlotKind::Power => "power".into(),
                    SlotKind::Energy => "energy".into(),
                },
                value: values[layout.index(yi, slot)],
            });
        }
    }
    out
}

impl SolutionFile {
    pub fn from_run(inst: &ProblemInstance, result: &RunResult) -> Self {
        let layout = Layout::new(inst);
        SolutionFile {
            objective: result.objective,
            lower_bound: result.lower_bound,
            gap: result.gap,
            expansion: entries(inst, &layout, &result.point.expansion),
            capacities: entries(inst, &layout, &result.point.capacity),
            converged: result.converged,
            iterations: result.iterations,
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// One line of `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub instance: String,
    pub scenarios: usize,
    pub closed_gen_s: f64,
    pub closed_solve_s: f64,
    pub closed_objective: f64,
    pub bd_gen_s: f64,
    pub bd_solve_s: f64,
    pub bd_objective: f64,
    pub bd_iterations: usize,
    pub bd_converged: bool,
    /// |bd - closed| / |closed|.
    pub discrepancy: f64,
}

/// Solves `inst` both closed and by decomposition and compares them.
pub fn benchmark(
    name: &str,
    inst: &ProblemInstance,
    config: &RunConfig,
    exec: &Executor,
) -> Result<BenchmarkRow> {
    let t = Instant::now();
    build_closed(inst, None)?;
    let closed_gen_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let closed = solve_closed(inst, config.tol_min)?;
    let closed_solve_s = (t.elapsed().as_secs_f64() - closed_gen_s).max(0.0);

    let t = Instant::now();
    MasterState::new(inst, config.eta, config.valid_inequalities).build(inst);
    let bd_gen_s = t.elapsed().as_secs_f64();
    let bd = run_with(inst, config, exec)?;
    Ok(BenchmarkRow {
        instance: name.to_string(),
        scenarios: inst.scenarios.len(),
        closed_gen_s,
        closed_solve_s,
        closed_objective: closed.objective,
        bd_gen_s,
        bd_solve_s: bd.total_time_s,
        bd_objective: bd.objective,
        bd_iterations: bd.iterations,
        bd_converged: bd.converged,
        discrepancy: (bd.objective - closed.objective).abs() / closed.objective.abs().max(1e-12),
    })
}

pub fn write_report<W: Write>(rows: &[BenchmarkRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_file(rows: &[BenchmarkRow], path: impl AsRef<Path>) -> Result<()> {
    write_report(rows, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::run;
    use crate::fixtures::{analytic_1240, with_storage};
    use crate::stabilization::Method;

    #[test]
    fn trace_header_and_empty_telemetry() {
        let cfg = RunConfig {
            method: Method::None,
            ..RunConfig::default()
        };
        let r = run(&analytic_1240(), &cfg).unwrap();
        let mut buf = Vec::new();
        write_trace(&r.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRACE_COLUMNS.join(","));
        let first = lines.next().unwrap();
        assert!(first.ends_with(",,,"), "{first}");
        assert_eq!(first.split(',').count(), 15);
    }

    #[test]
    fn solution_lists_every_slot() {
        let inst = with_storage(analytic_1240(), 1.0, 1.0);
        let r = run(&inst, &RunConfig::default()).unwrap();
        let s = SolutionFile::from_run(&inst, &r);
        assert_eq!(s.capacities.len(), 3);
        assert_eq!(s.capacities[2].kind, "energy");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("solution.json");
        s.write(&p).unwrap();
        let back: SolutionFile =
            serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn report_is_csv() {
        let inst = analytic_1240();
        let row = benchmark(
            "analytic",
            &inst,
            &RunConfig::default(),
            &Executor::sequential(),
        )
        .unwrap();
        assert!(row.discrepancy < 0.01);
        let mut buf = Vec::new();
        write_report(&[row.clone()], &mut buf).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        let back: Vec<BenchmarkRow> = rd
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        assert_eq!(back, vec![row]);
        assert!(rd
            .headers()
            .unwrap()
            .iter()
            .any(|h| h == "closed_objective"));
    }
}
