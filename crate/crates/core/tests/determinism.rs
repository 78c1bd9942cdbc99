use hyperfill_core::filling::{build_nested_filling, FillingFile};
use hyperfill_core::json;
use hyperfill_core::norms::SmoothnessParams;
use hyperfill_core::space::{Metric, SpaceDescriptor};
use hyperfill_core::verify::{run_audit, AuditName, ExperimentConfig};

fn config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(SpaceDescriptor::interval_cantor(), vec![4, 5]);
    cfg.trials = 4;
    cfg.seed = seed;
    cfg
}

fn report_json(audit: AuditName, cfg: &ExperimentConfig, threads: usize) -> String {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| json::to_string(&run_audit(audit, cfg).unwrap()).unwrap())
}

#[test]
fn audits_are_reproducible_across_thread_counts() {
    for audit in [AuditName::PorosityQindependence, AuditName::Equiv26, AuditName::Prop52, AuditName::Density54] {
        let cfg = config(21);
        assert_eq!(report_json(audit, &cfg, 1), report_json(audit, &cfg, 3), "{audit}");
    }
    let mut cfg = config(21);
    cfg.params = vec![SmoothnessParams::besov(0.8, 4.0, 2.0).unwrap()];
    assert_eq!(
        report_json(AuditName::TheoremSuite, &cfg, 1),
        report_json(AuditName::TheoremSuite, &cfg, 4)
    );
}

#[test]
fn the_seed_changes_random_inputs() {
    let a = report_json(AuditName::Equiv26, &config(1), 2);
    let b = report_json(AuditName::Equiv26, &config(2), 2);
    assert_ne!(a, b);
}

#[test]
fn filling_files_are_stable() {
    let desc = SpaceDescriptor::Cube {
        dim: 1,
        level: 8,
        metric: Metric::Euclidean,
        subset: Some(hyperfill_core::space::SubsetDescriptor::Ifs {
            preset: Some(hyperfill_core::space::IfsPreset::Cantor),
            maps: None,
            depth: 4,
            lambda: None,
        }),
    };
    let (space, mask) = desc.build().unwrap();
    let mask = mask.unwrap();
    let a = json::to_string(&FillingFile::from_nested(desc.clone(), &build_nested_filling(&space, &mask, 0, 5).unwrap())).unwrap();
    let b = json::to_string(&FillingFile::from_nested(desc, &build_nested_filling(&space, &mask, 0, 5).unwrap())).unwrap();
    assert_eq!(a, b);
    let parsed: FillingFile = serde_json::from_str(&a).unwrap();
    assert_eq!(json::to_string(&parsed).unwrap(), a);
}
