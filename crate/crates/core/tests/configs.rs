use std::path::PathBuf;

use vrmec::config::ExperimentConfig;

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn full_config_equals_defaults() {
    assert_eq!(load("full.toml"), ExperimentConfig::default());
}

#[test]
fn desk_config_is_self_consistent() {
    let cfg = load("desk.toml");
    assert!(cfg.topology.mec_compute_min > cfg.topology.vr_compute);
    assert!(cfg.topology.users <= cfg.topology.mecs);
    let c = vrmec::latency::fov_bits(&cfg.rendering).unwrap();
    let m = vrmec::latency::stitched_bits(&cfg.rendering).unwrap();
    assert!(c < m);
    // the fastest MEC can render within the threshold, the headset cannot
    let fastest = cfg.topology.mec_cycles_per_bit * m / cfg.topology.mec_compute_max;
    let headset = cfg.topology.vr_cycles_per_bit * m / cfg.topology.vr_compute;
    assert!(fastest < cfg.rendering.latency_threshold && headset > cfg.rendering.latency_threshold);
}
