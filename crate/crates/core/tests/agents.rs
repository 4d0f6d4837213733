mod common;

use std::collections::HashMap;

use rand::Rng;
use vrmec::agents::{build_controller, AgentParams, Algorithm, ControllerSpec, HeadLayout};
use vrmec::config::ExperimentConfig;
use vrmec::env::{build_state, enumerate_actions, validate_action, ActionVector, EnvState};
use vrmec::harness;
use vrmec::model::NetworkTopology;
use vrmec::rng;

const LEARNERS: [Algorithm; 4] = [Algorithm::Cdqn, Algorithm::Ddqn, Algorithm::Cac, Algorithm::Dac];

fn setup(mecs: usize, users: usize, n_fov: usize, migration: bool) -> (NetworkTopology<f64>, ControllerSpec, EnvState) {
    let mec_pos: Vec<(f64, f64)> = (0..mecs).map(|b| (10.0 + 20.0 * b as f64, 50.0)).collect();
    let computes: Vec<f64> = (0..mecs).map(|b| 3e9 + 0.5e9 * b as f64).collect();
    let user_pos: Vec<(f64, f64)> = (0..users).map(|k| (15.0 + 17.0 * k as f64, 40.0)).collect();
    let topo = common::topology(&mec_pos, &computes, &user_pos, 100.0);
    let state = build_state(&topo, &vec![0; users], n_fov, 0);
    let spec = ControllerSpec {
        users,
        mecs,
        n_fov,
        migration,
        global_features: state.global_feature_len(),
        local_features: state.local_feature_len(),
        reward_scale: 10.0,
        total_steps: 1000,
        seed: 3,
    };
    (topo, spec, state)
}

fn small_params(epsilon: f64) -> AgentParams {
    AgentParams {
        hidden: vec![16],
        epsilon_start: epsilon,
        epsilon_end: epsilon,
        batch_size: 4,
        replay_capacity: 50,
        ..AgentParams::default()
    }
}

#[test]
fn full_exploration_is_uniform_over_valid_actions() {
    let (topo, spec, mut state) = setup(2, 2, 2, true);
    state.fovs = vec![0, 0];
    let all = enumerate_actions(&state.fovs, 2, 2, true);
    for algorithm in [Algorithm::Cdqn, Algorithm::Ddqn] {
        let mut c = build_controller::<f64>(algorithm, &small_params(1.0), &spec, &topo).unwrap();
        let mut counts: HashMap<ActionVector, usize> = HashMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            *counts.entry(c.act(&state, true).unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), all.len(), "{algorithm}");
        let expected = draws as f64 / all.len() as f64;
        let chi2: f64 = counts.values().map(|n| (*n as f64 - expected).powi(2) / expected).sum();
        // 5 degrees of freedom, 99.9% quantile about 20.5
        assert!(chi2 < 20.5, "{algorithm}: chi2 {chi2}");
    }
}

#[test]
fn controllers_only_emit_valid_actions() {
    for migration in [false, true] {
        let (topo, spec, mut state) = setup(4, 3, 3, migration);
        let mut r = rng::stream(5, "states");
        for algorithm in LEARNERS {
            let mut c = build_controller::<f64>(algorithm, &small_params(0.5), &spec, &topo).unwrap();
            for i in 0..2_500 {
                state.fovs = (0..3).map(|_| r.random_range(0..3)).collect();
                let a = c.act(&state, i % 2 == 0).unwrap();
                validate_action(&a, &state.fovs, 4, 3, migration).unwrap();
            }
        }
    }
}

#[test]
fn greedy_dqn_follows_its_q_values() {
    let (_, spec, mut state) = setup(3, 2, 2, true);
    let mut dqn = vrmec::CentralizedDqn::new(&small_params(0.0), &spec).unwrap();
    let layout = spec.layout();
    for fovs in [[0, 0], [0, 1], [1, 1]] {
        state.fovs = fovs.to_vec();
        let q = dqn.q_values(&state).unwrap();
        let a = vrmec::agents::Controller::act(&mut dqn, &state, false).unwrap();
        assert_eq!(a, layout.greedy(&q, &state.fovs));
        let best = enumerate_actions(&state.fovs, 3, 2, true)
            .iter()
            .map(|a| HeadLayout::joint_value(&q, &layout.selected(a)))
            .fold(f64::MIN, f64::max);
        let chosen = HeadLayout::joint_value(&q, &layout.selected(&a));
        assert!(chosen <= best + 1e-12);
    }
}

#[test]
fn single_mec_leaves_one_choice() {
    let (topo, spec, mut state) = setup(1, 1, 2, true);
    for algorithm in LEARNERS {
        let mut c = build_controller::<f64>(algorithm, &small_params(0.3), &spec, &topo).unwrap();
        for q in [0, 1, 1, 0] {
            state.fovs = vec![q];
            let a = c.act(&state, true).unwrap();
            let mut rendering = vec![None; 2];
            rendering[q] = Some(0);
            assert_eq!(a, ActionVector { serving: vec![0], rendering }, "{algorithm}");
        }
    }
}

#[test]
fn checkpoints_restore_the_greedy_policy() {
    let mut cfg = ExperimentConfig::from_toml_str(
        "prediction = false\n[run]\nepisodes = 3\nslots_per_episode = 20\neval_slots = 20\neval_episodes = 2\n\
         [topology]\nmecs = 3\nusers = 2\n[mobility]\nn_fov = 2\ncols = 2\nrows = 1\n[agent]\nhidden = [16]\nbatch_size = 8\n",
    )
    .unwrap();
    for algorithm in LEARNERS {
        cfg.algorithm = algorithm;
        let dir = tempfile::tempdir().unwrap();
        let result = harness::run_experiment(&cfg, Some(dir.path())).unwrap();
        let again = harness::evaluate_run(dir.path()).unwrap();
        assert_eq!(result.evaluation, again, "{algorithm}");
    }
}
