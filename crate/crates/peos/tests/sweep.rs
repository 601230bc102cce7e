use peos::bench::{self, BenchmarkSpec};
use peos::core::{HnswIndex, HnswParams, Metric, RoutingConfig, RoutingMode};
use peos::data;

#[test]
fn sweep_produces_one_row_per_cell() {
    let (base, queries) = data::gaussian_workload(3000, 30, 24, 1).unwrap();
    let truth = bench::ground_truth(&base, &queries, 10, Metric::L2, None).unwrap();
    let mut idx = HnswIndex::build(&base, Metric::L2, HnswParams { m: 8, efc: 60, seed: 1 }).unwrap();
    let spec = BenchmarkSpec {
        routings: vec![
            RoutingConfig::none(),
            RoutingConfig::peos(0.2, 4, 32),
            RoutingConfig::peos(0.1, 4, 32),
            RoutingConfig::rceos(0.2, 64),
            RoutingConfig::simhash(0.2, 64),
        ],
        efs: vec![10, 80],
        k: 10,
        repetitions: 2,
        routing_seed: 3,
    };
    let rows = bench::run_sweep(&mut idx, &queries, &truth, &spec).unwrap();
    assert_eq!(rows.len(), 10);
    for r in &rows {
        assert!((0.0..=1.0).contains(&r.recall) && r.qps > 0.0 && r.dist_comps > 0.0);
        if r.config.mode == RoutingMode::None {
            assert_eq!(r.pass_frac, 1.0);
        } else {
            assert!(r.pass_frac < 1.0);
        }
    }
    assert!(rows[1].recall > 0.8 && rows[1].recall >= rows[0].recall);
    let mut out = Vec::new();
    bench::write_csv(&rows, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 11);
}

#[test]
fn audit_on_a_small_graph() {
    let (base, queries) = data::gaussian_workload(4000, 40, 32, 2).unwrap();
    let mut idx = HnswIndex::build(&base, Metric::L2, HnswParams { m: 8, efc: 60, seed: 1 }).unwrap();
    let cfg = RoutingConfig::peos(0.2, 4, 64);
    idx.attach_routing(cfg, 1).unwrap();
    let r = bench::audit_guarantee(&idx, &queries, cfg, 10, 100).unwrap();
    assert!(r.true_positives > 0 && r.tp_passed <= r.true_positives && r.true_positives <= r.evaluated);
    assert!((r.bound - 0.78).abs() < 1e-12);
    assert_eq!(r.pass, r.rate >= r.bound);
    assert!(bench::audit_guarantee(&idx, &queries, RoutingConfig::none(), 10, 100).is_err());
}
