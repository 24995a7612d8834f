use cran_sched::harness::ExperimentConfig;
use cran_sched::policies::PolicySpec;

#[test]
fn shipped_configs_load() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        seen += 1;
    }
    assert_eq!(seen, 6);
}

#[test]
fn default_config_matches_built_in_profile() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    let file = ExperimentConfig::load(format!("{dir}/default.toml")).unwrap();
    let built = ExperimentConfig::default_profile();
    assert_eq!(file.system, built.system);
    assert_eq!(file.traffic, built.traffic);
    assert_eq!(file.system().unwrap().links, built.system().unwrap().links);
    assert!(matches!(file.policy, PolicySpec::Proposed(_)));
    let desk = ExperimentConfig::load(format!("{dir}/desk.toml")).unwrap();
    assert_eq!(desk.system().unwrap().links, ExperimentConfig::desk().system().unwrap().links);
}
