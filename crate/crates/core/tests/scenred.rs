use stochplan::detequiv::solve_closed_subset;
use stochplan::exec::Executor;
use stochplan::instance::generate_synthetic;
use stochplan::layout::Layout;
use stochplan::oracle::{solve_lp, LpOutcome};
use stochplan::scenred::{
    compute_z_matrix, distance, export_similarity_graph, kmedoid, reduced_instance, EdgeRecord,
    NodeRecord,
};
use stochplan::subproblem::build_subproblem;

#[test]
fn z_matches_dense_oracle() {
    let inst = generate_synthetic(7, 3, 3, 1, 24, 1).unwrap();
    let layout = Layout::new(&inst);
    let z = compute_z_matrix(&inst, &Executor::sequential()).unwrap();
    for s in 0..3 {
        for t in 0..3 {
            let own = solve_closed_subset(&inst, Some(&[t]), 1e-9).unwrap();
            let sp = build_subproblem(&inst, &layout, 0, s, own.point.year_capacity(&layout, 0))
                .unwrap();
            let LpOutcome::Optimal { objective, .. } = solve_lp(&sp.program).unwrap() else {
                panic!("oracle failed");
            };
            let expected = own.expansion_cost + objective;
            let rel = (z.z[s][t] - expected).abs() / expected;
            assert!(rel < 1e-6, "Z[{s}][{t}] = {} vs {expected}", z.z[s][t]);
            assert!(z.z[s][t] >= z.z[s][s] * (1.0 - 1e-7));
        }
    }
}

#[test]
fn identical_scenarios_have_zero_distance() {
    let mut inst = generate_synthetic(3, 3, 3, 1, 24, 1).unwrap();
    let mut copy = inst.scenarios[0].clone();
    copy.id = "twin".into();
    for t in &mut inst.technologies {
        for m in t.variable_cost.values_mut() {
            let v = m[&inst.scenarios[0].id];
            m.insert("twin".into(), v);
        }
    }
    inst.scenarios.push(copy);
    for s in &mut inst.scenarios {
        s.probability = 0.25;
    }
    let z = compute_z_matrix(&inst, &Executor::sequential()).unwrap();
    assert!((z.z[0][3] - z.z[0][0]).abs() <= 1e-7 * z.z[0][0]);
    let d = distance(&z.z);
    assert!(d.d[0][3] <= 1e-7 * z.z[0][0]);
    assert!(d.d[0][1] > d.d[0][3]);
}

#[test]
fn graph_export_round_trip() {
    let inst = generate_synthetic(5, 5, 3, 1, 24, 1).unwrap();
    let z = compute_z_matrix(&inst, &Executor::new(2).unwrap()).unwrap();
    let d = distance(&z.z);
    let red = kmedoid(&d, 2, 0).unwrap();
    let ids: Vec<String> = inst.scenarios.iter().map(|s| s.id.clone()).collect();
    let dir = tempfile::tempdir().unwrap();
    export_similarity_graph(&ids, &d, &red, dir.path()).unwrap();

    let nodes: Vec<NodeRecord> = csv::Reader::from_path(dir.path().join("nodes.csv"))
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(nodes.len(), 5);
    assert!((nodes.iter().map(|n| n.weight).sum::<f64>() - 1.0).abs() < 1e-12);
    let edges: Vec<EdgeRecord> = csv::Reader::from_path(dir.path().join("edges.csv"))
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(edges.len(), 10);
    for e in &edges {
        assert!((e.similarity - 1.0 / (e.distance + 1e-9)).abs() <= 1e-12 * e.similarity);
    }

    let reduced = reduced_instance(&inst, &red).unwrap();
    assert_eq!(reduced.scenarios.len(), 2);
    assert!(reduced.validate().is_empty());
}
