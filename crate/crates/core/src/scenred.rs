//! Problem-dependent scenario reduction: cross-evaluation costs, the
//! symmetric distance between scenarios, k-medoid selection and the
//! similarity graph export.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detequiv::{solve_closed_subset, ClosedSolution};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::instance::ProblemInstance;
use crate::layout::Layout;
use crate::subproblem::evaluate;

/// Tolerance of every solve behind the Z matrix.
pub const Z_TOLERANCE: f64 = 1e-8;
/// Offset in `1 / (d + offset)`.
pub const SIMILARITY_OFFSET: f64 = 1e-9;
const EXHAUSTIVE_MAX_N: usize = 10;
const EXHAUSTIVE_MAX_M: usize = 4;
/// Random starts of the local search beyond the greedy one.
const RESTARTS: usize = 16;

#[derive(Debug, Clone)]
pub struct ZMatrix {
    /// `z[s][t]`: total cost of scenario `s` run on the capacities that are
    /// optimal for scenario `t` alone.
    pub z: Vec<Vec<f64>>,
    /// Single-scenario closed solutions, one per scenario.
    pub own: Vec<ClosedSolution>,
}

/// `n` single-scenario closed solves followed by `n^2` cross evaluations.
pub fn compute_z_matrix(inst: &ProblemInstance, exec: &Executor) -> Result<ZMatrix> {
    let n = inst.scenarios.len();
    let layout = Layout::new(inst);
    let ids: Vec<usize> = (0..n).collect();
    let own = exec
        .map(&ids, |&s| {
            solve_closed_subset(inst, Some(&[s]), Z_TOLERANCE)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize, usize)> = (0..n)
        .flat_map(|s| (0..n).flat_map(move |t| (0..layout.n_years).map(move |y| (s, t, y))))
        .collect();
    let values = exec
        .map(&jobs, |&(s, t, y)| {
            let capa = own[t].point.year_capacity(&layout, y);
            evaluate(inst, &layout, y, s, capa, Z_TOLERANCE).map(|r| r.value)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut z = vec![vec![0.0; n]; n];
    for (&(s, t, _), v) in jobs.iter().zip(values) {
        z[s][t] += v;
    }
    for (s, row) in z.iter_mut().enumerate() {
        for (t, cell) in row.iter_mut().enumerate() {
            *cell += own[t].expansion_cost;
        }
        // The diagonal is the closed optimum itself.
        row[s] = own[s].objective;
    }
    Ok(ZMatrix { z, own })
}

/// Symmetric scenario distances. Negative entries from solver noise are
/// clamped to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub d: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

pub fn distance(z: &[Vec<f64>]) -> DistanceMatrix {
    let n = z.len();
    let mut d = vec![vec![0.0; n]; n];
    for s in 0..n {
        for t in s + 1..n {
            // Summed as two regrets so relabeling gives bit-identical results.
            let v = 0.5 * ((z[s][t] - z[s][s]) + (z[t][s] - z[t][t]));
            let v = v.max(0.0);
            d[s][t] = v;
            d[t][s] = v;
        }
    }
    DistanceMatrix { d }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    /// Sorted medoid indices.
    pub medoids: Vec<usize>,
    /// Medoid of every scenario.
    pub assignment: Vec<usize>,
    /// Weight of each medoid, in the order of `medoids`.
    pub weights: Vec<f64>,
    /// Sum of distances from each scenario to its medoid.
    pub objective: f64,
}

impl Reduction {
    pub fn weight_of(&self, medoid: usize) -> Option<f64> {
        self.medoids
            .iter()
            .position(|&m| m == medoid)
            .map(|i| self.weights[i])
    }
}

/// Nearest medoid of every scenario (ties to the lower id) and the total
/// distance.
fn assign(d: &DistanceMatrix, medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut sorted = medoids.to_vec();
    sorted.sort_unstable();
    let mut total = 0.0;
    let assignment = (0..d.len())
        .map(|s| {
            let mut best = sorted[0];
            for &m in &sorted[1..] {
                if d.d[s][m] < d.d[s][best] {
                    best = m;
                }
            }
            total += d.d[s][best];
            best
        })
        .collect();
    (assignment, total)
}

pub fn kmedoid_objective(d: &DistanceMatrix, medoids: &[usize]) -> f64 {
    assign(d, medoids).1
}

fn improves(new: f64, old: f64) -> bool {
    new < old - 1e-12 * old.abs().max(1.0)
}

fn exhaustive(d: &DistanceMatrix, m: usize) -> Vec<usize> {
    let n = d.len();
    let mut idx: Vec<usize> = (0..m).collect();
    let mut best = idx.clone();
    let mut best_obj = kmedoid_objective(d, &idx);
    loop {
        // Next combination in lexicographic order.
        let Some(i) = (0..m).rev().find(|&i| idx[i] < n - m + i) else {
            return best;
        };
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
        let obj = kmedoid_objective(d, &idx);
        if improves(obj, best_obj) {
            best_obj = obj;
            best = idx.clone();
        }
    }
}

/// Greedy build: repeatedly add the scenario that lowers the objective most.
fn greedy_build(d: &DistanceMatrix, m: usize) -> Vec<usize> {
    let mut medoids: Vec<usize> = Vec::with_capacity(m);
    while medoids.len() < m {
        let mut pick = None;
        let mut pick_obj = f64::INFINITY;
        for c in 0..d.len() {
            if medoids.contains(&c) {
                continue;
            }
            medoids.push(c);
            let obj = kmedoid_objective(d, &medoids);
            medoids.pop();
            if obj < pick_obj {
                pick_obj = obj;
                pick = Some(c);
            }
        }
        medoids.push(pick.expect("m <= n"));
    }
    medoids
}

/// First-improvement single swaps in a shuffled order until none helps.
fn swap_descent(
    d: &DistanceMatrix,
    mut medoids: Vec<usize>,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, f64) {
    let (n, m) = (d.len(), medoids.len());
    let mut obj = kmedoid_objective(d, &medoids);
    loop {
        let mut pairs: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| (0..n).map(move |c| (i, c)))
            .filter(|&(_, c)| !medoids.contains(&c))
            .collect();
        pairs.shuffle(rng);
        let mut swapped = false;
        for (i, c) in pairs {
            let old = medoids[i];
            medoids[i] = c;
            let cand = kmedoid_objective(d, &medoids);
            if improves(cand, obj) {
                obj = cand;
                swapped = true;
                break;
            }
            medoids[i] = old;
        }
        if !swapped {
            medoids.sort_unstable();
            return (medoids, obj);
        }
    }
}

/// Swap descent from the greedy build and from seeded random starts; the
/// best local optimum wins, ties to the lexicographically smaller set.
fn local_search(d: &DistanceMatrix, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut best, mut best_obj) = swap_descent(d, greedy_build(d, m), &mut rng);
    for _ in 0..RESTARTS {
        let start = rand::seq::index::sample(&mut rng, d.len(), m).into_vec();
        let (cand, obj) = swap_descent(d, start, &mut rng);
        if improves(obj, best_obj) || (!improves(best_obj, obj) && cand < best) {
            best = cand;
            best_obj = obj;
        }
    }
    best
}

/// Chooses `m` representative scenarios. Exact for `n <= 10, m <= 4`,
/// otherwise seeded multi-start single-swap local search.
pub fn kmedoid(d: &DistanceMatrix, m: usize, seed: u64) -> Result<Reduction> {
    let n = d.len();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "cannot pick {m} representatives from {n} scenarios"
        )));
    }
    let mut medoids = if n <= EXHAUSTIVE_MAX_N && m <= EXHAUSTIVE_MAX_M {
        exhaustive(d, m)
    } else {
        local_search(d, m, seed)
    };
    medoids.sort_unstable();
    let (mut assignment, objective) = assign(d, &medoids);
    // A medoid at distance zero from a lower medoid still represents itself.
    for &m in &medoids {
        assignment[m] = m;
    }
    let weights = medoids
        .iter()
        .map(|&m| assignment.iter().filter(|&&a| a == m).count() as f64 / n as f64)
        .collect();
    Ok(Reduction {
        medoids,
        assignment,
        weights,
        objective,
    })
}

/// The instance restricted to the medoids, carrying their weights as
/// probabilities.
pub fn reduced_instance(inst: &ProblemInstance, reduction: &Reduction) -> Result<ProblemInstance> {
    let mut out = inst.restrict_scenarios(&reduction.medoids)?;
    for (sc, &w) in out.scenarios.iter_mut().zip(&reduction.weights) {
        sc.probability = w;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub scenario: String,
    /// Id of the representative scenario.
    pub group: String,
    /// Group weight on the representative's row, zero elsewhere.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub a: String,
    pub b: String,
    pub distance: f64,
    pub similarity: f64,
}

pub fn similarity(distance: f64) -> f64 {
    1.0 / (distance + SIMILARITY_OFFSET)
}

pub fn graph_records(
    ids: &[String],
    d: &DistanceMatrix,
    reduction: &Reduction,
) -> (Vec<NodeRecord>, Vec<EdgeRecord>) {
    let nodes = ids
        .iter()
        .enumerate()
        .map(|(s, id)| NodeRecord {
            scenario: id.clone(),
            group: ids[reduction.assignment[s]].clone(),
            weight: reduction.weight_of(s).unwrap_or(0.0),
        })
        .collect();
    let mut edges = Vec::new();
    for s in 0..ids.len() {
        for t in s + 1..ids.len() {
            edges.push(EdgeRecord {
                a: ids[s].clone(),
                b: ids[t].clone(),
                distance: d.d[s][t],
                similarity: similarity(d.d[s][t]),
            });
        }
    }
    (nodes, edges)
}

/// Writes `nodes.csv` and `edges.csv` into `dir`.
pub fn export_similarity_graph(
    ids: &[String],
    d: &DistanceMatrix,
    reduction: &Reduction,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let (nodes, edges) = graph_records(ids, d, reduction);
    let mut w = csv::Writer::from_path(dir.join("nodes.csv"))?;
    for n in nodes {
        w.serialize(n)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("edges.csv"))?;
    for e in edges {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}
