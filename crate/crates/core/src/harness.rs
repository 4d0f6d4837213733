//! Experiment orchestration: predictor training, agent training, greedy
//! evaluation, parameter sweeps and cross-run ranking.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::agents::{build_controller, Algorithm, Controller, ControllerSpec};
use crate::config::{parse_value, set_dotted, ExperimentConfig};
use crate::env::{Env, EnvOptions, EnvStreams, EpisodeLog, SlotEvaluation};
use crate::error::{Error, Result};
use crate::latency::on_time_psnr;
use crate::mobility::{generate_trace, write_trace_csv, EyeState};
use crate::model::{build_topology, FovIndex, NetworkTopology};
use crate::neural::save_checkpoint;
use crate::predictor::{train_predictor, write_curve_csv, FovPredictor, TrainedPredictor};
use crate::rng;

/// Per-episode summary written to `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub episode: usize,
    pub total_reward: f64,
    pub avg_qoe_per_user: f64,
    /// Mean over users and slots, in seconds.
    pub avg_interaction_latency: f64,
    /// Percentage of user-slots whose controller-side FoV was correct.
    pub prediction_accuracy: f64,
    pub wall_time: Option<f64>,
}

pub const METRICS_HEADER: &str = "episode,total_reward,avg_qoe_per_user,avg_interaction_latency,prediction_accuracy,wall_time";

impl MetricsRow {
    fn from_slots(episode: usize, slots: &[SlotEvaluation], wall_time: Option<f64>) -> Self {
        let mut reward = 0.0;
        let mut latency = 0.0;
        let mut correct = 0usize;
        let mut count = 0usize;
        for s in slots {
            reward += s.reward;
            for u in &s.users {
                latency += u.latency.total;
                correct += usize::from(u.fov_pred == u.fov_true);
                count += 1;
            }
        }
        let n = count.max(1) as f64;
        Self {
            episode,
            total_reward: reward,
            avg_qoe_per_user: reward / n,
            avg_interaction_latency: latency / n,
            prediction_accuracy: 100.0 * correct as f64 / n,
            wall_time,
        }
    }

    fn csv_line(&self) -> String {
        let wall = self.wall_time.map(|w| w.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{wall}",
            self.episode, self.total_reward, self.avg_qoe_per_user, self.avg_interaction_latency, self.prediction_accuracy
        )
    }
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

/// Greedy-policy summary over the evaluation slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub slots: usize,
    pub total_reward: f64,
    pub avg_reward_per_slot: f64,
    pub avg_qoe_per_user: f64,
    pub avg_interaction_latency: f64,
    pub prediction_accuracy: f64,
}

pub const EVALUATION_HEADER: &str =
    "slots,total_reward,avg_reward_per_slot,avg_qoe_per_user,avg_interaction_latency,prediction_accuracy";

impl Evaluation {
    fn from_slots(slots: &[SlotEvaluation]) -> Self {
        let row = MetricsRow::from_slots(0, slots, None);
        Self {
            slots: slots.len(),
            total_reward: row.total_reward,
            avg_reward_per_slot: row.total_reward / slots.len().max(1) as f64,
            avg_qoe_per_user: row.avg_qoe_per_user,
            avg_interaction_latency: row.avg_interaction_latency,
            prediction_accuracy: row.prediction_accuracy,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{EVALUATION_HEADER}")?;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            self.slots,
            self.total_reward,
            self.avg_reward_per_slot,
            self.avg_qoe_per_user,
            self.avg_interaction_latency,
            self.prediction_accuracy
        )?;
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(EVALUATION_HEADER) {
            return Err(Error::Config("evaluation file has an unexpected header".into()));
        }
        let line = lines.next().ok_or_else(|| Error::Config("evaluation file has no data row".into()))?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Config(format!("malformed evaluation row `{line}`")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("bad number `{s}`: {e}")));
        Ok(Self {
            slots: f[0].parse().map_err(|e| Error::Config(format!("bad slot count: {e}")))?,
            total_reward: num(f[1])?,
            avg_reward_per_slot: num(f[2])?,
            avg_qoe_per_user: num(f[3])?,
            avg_interaction_latency: num(f[4])?,
            prediction_accuracy: num(f[5])?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub metrics: Vec<MetricsRow>,
    pub evaluation: Evaluation,
    pub evaluation_log: EpisodeLog,
    /// Held-out accuracy of the trained predictor (fraction), if one was used.
    pub predictor_accuracy: Option<f64>,
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.tmp", e.to_string_lossy()),
        None => "tmp".into(),
    });
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn topology_for(cfg: &ExperimentConfig) -> Result<NetworkTopology<f64>> {
    build_topology(&cfg.topology, &mut rng::stream(cfg.seed, rng::TOPOLOGY))
}

/// Synthetic Brownian traces for every user, used to train the predictor.
pub fn predictor_traces(cfg: &ExperimentConfig) -> Result<Vec<Vec<FovIndex>>> {
    let grid = cfg.mobility.grid()?;
    let mut r = rng::stream(cfg.seed, rng::PREDICTOR_DATA);
    let mut eyes: Vec<EyeState<f64>> = (0..cfg.topology.users)
        .map(|_| EyeState::random(cfg.mobility.diffusion, &grid, &mut r))
        .collect();
    generate_trace(&mut eyes, &grid, cfg.predictor.trace_slots, &mut r)
}

pub fn train_fov_predictor(cfg: &ExperimentConfig) -> Result<TrainedPredictor<f64>> {
    let traces = predictor_traces(cfg)?;
    train_predictor::<f64, _>(
        &traces,
        cfg.mobility.n_fov,
        &cfg.predictor,
        &mut rng::stream(cfg.seed, rng::PREDICTOR_INIT),
    )
}

pub fn save_predictor(predictor: &FovPredictor<f64>, dir: &Path) -> Result<()> {
    for (i, m) in predictor.models().iter().enumerate() {
        save_checkpoint(&m.params, &dir.join(format!("predictor{i}.bin")))?;
    }
    Ok(())
}

pub fn load_predictor(cfg: &ExperimentConfig, dir: &Path) -> Result<FovPredictor<f64>> {
    let mut p = FovPredictor::<f64>::new(
        cfg.mobility.n_fov,
        cfg.topology.users,
        &cfg.predictor,
        &mut rng::stream(cfg.seed, rng::PREDICTOR_INIT),
    )?;
    for (i, m) in p.models_mut().iter_mut().enumerate() {
        let loaded = crate::neural::load_checkpoint::<f64>(&dir.join(format!("predictor{i}.bin")))?;
        m.params.copy_from(&loaded)?;
    }
    Ok(p)
}

/// Trains the predictor and writes its learning curve, traces and weights.
pub fn run_predictor_training(cfg: &ExperimentConfig, out: &Path) -> Result<TrainedPredictor<f64>> {
    std::fs::create_dir_all(out.join("checkpoints"))?;
    let traces = predictor_traces(cfg)?;
    let trained = train_predictor::<f64, _>(
        &traces,
        cfg.mobility.n_fov,
        &cfg.predictor,
        &mut rng::stream(cfg.seed, rng::PREDICTOR_INIT),
    )?;
    write_atomic(&out.join("traces.csv"), &csv_bytes(|b| write_trace_csv(&traces, b))?)?;
    write_atomic(&out.join("predictor_curve.csv"), &csv_bytes(|b| write_curve_csv(&trained.curve, b))?)?;
    save_predictor(&trained.predictor, &out.join("checkpoints"))?;
    Ok(trained)
}

fn env_options(cfg: &ExperimentConfig) -> EnvOptions {
    EnvOptions {
        scheme: cfg.scheme,
        prediction: cfg.prediction,
        freeze_channels: cfg.run.freeze_channels,
    }
}

pub fn training_env(cfg: &ExperimentConfig, topology: &NetworkTopology<f64>, predictor: Option<FovPredictor<f64>>) -> Result<Env> {
    Env::new(
        topology.clone(),
        cfg.phy.clone(),
        cfg.rendering.clone(),
        &cfg.mobility,
        env_options(cfg),
        predictor,
        EnvStreams {
            mobility: rng::stream(cfg.seed, rng::MOBILITY),
            channel: rng::stream(cfg.seed, rng::CHANNEL),
        },
    )
}

/// Fresh eyes for evaluation; channels are fresh too unless frozen, in which
/// case the training realization is reused.
pub fn evaluation_env(cfg: &ExperimentConfig, topology: &NetworkTopology<f64>, predictor: Option<FovPredictor<f64>>) -> Result<Env> {
    let channel = if cfg.run.freeze_channels {
        rng::stream(cfg.seed, rng::CHANNEL)
    } else {
        rng::indexed_stream(cfg.seed, rng::EVALUATION, 1)
    };
    Env::new(
        topology.clone(),
        cfg.phy.clone(),
        cfg.rendering.clone(),
        &cfg.mobility,
        env_options(cfg),
        predictor,
        EnvStreams {
            mobility: rng::indexed_stream(cfg.seed, rng::EVALUATION, 0),
            channel,
        },
    )
}

pub fn controller_spec(cfg: &ExperimentConfig, env: &Env) -> ControllerSpec {
    let state = env.state();
    ControllerSpec {
        users: cfg.topology.users,
        mecs: cfg.topology.mecs,
        n_fov: cfg.mobility.n_fov,
        migration: cfg.migration(),
        global_features: state.global_feature_len(),
        local_features: state.local_feature_len(),
        reward_scale: cfg.topology.users as f64 * on_time_psnr(cfg.rendering.qoe_delta),
        total_steps: cfg.total_steps(),
        seed: cfg.seed,
    }
}

/// Runs one episode; `learn` turns on exploration and updates.
pub fn run_episode(env: &mut Env, controller: &mut dyn Controller, slots: usize, learn: bool) -> Result<Vec<SlotEvaluation>> {
    env.reset()?;
    let mut out = Vec::with_capacity(slots);
    for t in 0..slots {
        let state = env.state().clone();
        let action = controller.act(&state, learn)?;
        let step = env.step(&action)?;
        if learn {
            controller.observe(&state, &action, &step.evaluation, &step.next_state, t + 1 == slots)?;
        }
        out.push(step.evaluation);
    }
    if learn {
        controller.end_episode()?;
    }
    Ok(out)
}

/// Everything a run needs before the first episode.
pub struct Prepared {
    pub topology: NetworkTopology<f64>,
    pub predictor: Option<TrainedPredictor<f64>>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let topology = topology_for(cfg)?;
    let predictor = if cfg.prediction { Some(train_fov_predictor(cfg)?) } else { None };
    Ok(Prepared { topology, predictor })
}

/// Trains the configured controller, then evaluates it greedily. With `out`,
/// writes `config.toml`, `metrics.csv`, `evaluation.csv`, `episode_log.csv`
/// and checkpoints.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentResult> {
    let prepared = prepare(cfg)?;
    run_prepared(cfg, &prepared, out)
}

/// Builds the configured controller and trains it for `cfg.run.episodes`.
pub fn train_controller(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<(Box<dyn Controller>, Vec<MetricsRow>)> {
    let predictor = prepared.predictor.as_ref().map(|p| p.predictor.clone());
    let mut env = training_env(cfg, &prepared.topology, predictor)?;
    let spec = controller_spec(cfg, &env);
    let mut controller = build_controller::<f64>(cfg.algorithm, &cfg.agent, &spec, &prepared.topology)?;
    let timed = cfg.run.record_wall_time && cfg.algorithm.learns();
    let mut metrics = Vec::with_capacity(cfg.run.episodes);
    for episode in 0..cfg.run.episodes {
        let start = Instant::now();
        let slots = run_episode(&mut env, controller.as_mut(), cfg.run.slots_per_episode, true)?;
        let wall = timed.then(|| start.elapsed().as_secs_f64());
        metrics.push(MetricsRow::from_slots(episode, &slots, wall));
    }
    Ok((controller, metrics))
}

pub fn run_prepared(cfg: &ExperimentConfig, prepared: &Prepared, out: Option<&Path>) -> Result<ExperimentResult> {
    let (mut controller, metrics) = train_controller(cfg, prepared)?;
    let predictor = prepared.predictor.as_ref().map(|p| p.predictor.clone());
    let (evaluation, evaluation_log) = evaluate_controller(cfg, &prepared.topology, predictor, controller.as_mut())?;
    let result = ExperimentResult {
        metrics,
        evaluation,
        evaluation_log,
        predictor_accuracy: prepared.predictor.as_ref().map(|p| p.final_accuracy),
    };
    if let Some(dir) = out {
        write_run(cfg, dir, &result, controller.as_ref(), prepared)?;
    }
    Ok(result)
}

/// Greedy runs of `cfg.run.eval_slots` slots on the evaluation environment,
/// reset `cfg.run.eval_episodes` times.
pub fn evaluate_controller(
    cfg: &ExperimentConfig,
    topology: &NetworkTopology<f64>,
    predictor: Option<FovPredictor<f64>>,
    controller: &mut dyn Controller,
) -> Result<(Evaluation, EpisodeLog)> {
    let mut env = evaluation_env(cfg, topology, predictor)?;
    let mut slots = Vec::with_capacity(cfg.run.eval_slots * cfg.run.eval_episodes);
    for _ in 0..cfg.run.eval_episodes {
        slots.extend(run_episode(&mut env, controller, cfg.run.eval_slots, false)?);
    }
    let mut log = EpisodeLog::default();
    for s in &slots {
        log.record(s);
    }
    Ok((Evaluation::from_slots(&slots), log))
}

fn write_run(cfg: &ExperimentConfig, dir: &Path, result: &ExperimentResult, controller: &dyn Controller, prepared: &Prepared) -> Result<()> {
    let ckpt = dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt)?;
    write_atomic(&dir.join("config.toml"), cfg.to_toml_string()?.as_bytes())?;
    write_atomic(&dir.join("metrics.csv"), &csv_bytes(|b| write_metrics_csv(&result.metrics, b))?)?;
    write_atomic(&dir.join("evaluation.csv"), &csv_bytes(|b| result.evaluation.write_csv(b))?)?;
    write_atomic(&dir.join("episode_log.csv"), &csv_bytes(|b| result.evaluation_log.write_csv(b))?)?;
    if let Some(p) = &prepared.predictor {
        write_atomic(&dir.join("predictor_curve.csv"), &csv_bytes(|b| write_curve_csv(&p.curve, b))?)?;
        save_predictor(&p.predictor, &ckpt)?;
    }
    controller.save(&ckpt)
}

/// Re-evaluates a finished run from its saved config and checkpoints.
pub fn evaluate_run(dir: &Path) -> Result<Evaluation> {
    let cfg = ExperimentConfig::load(&dir.join("config.toml"))?;
    let topology = topology_for(&cfg)?;
    let ckpt = dir.join("checkpoints");
    let predictor = if cfg.prediction { Some(load_predictor(&cfg, &ckpt)?) } else { None };
    let probe = training_env(&cfg, &topology, predictor.clone())?;
    let spec = controller_spec(&cfg, &probe);
    let mut controller = build_controller::<f64>(cfg.algorithm, &cfg.agent, &spec, &topology)?;
    controller.load(&ckpt)?;
    let (evaluation, log) = evaluate_controller(&cfg, &topology, predictor, controller.as_mut())?;
    write_atomic(&dir.join("evaluation.csv"), &csv_bytes(|b| evaluation.write_csv(b))?)?;
    write_atomic(&dir.join("episode_log.csv"), &csv_bytes(|b| log.write_csv(b))?)?;
    Ok(evaluation)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: String,
    pub dir: PathBuf,
    pub evaluation: Evaluation,
}

/// Worker count from `VRMEC_WORKERS`, default 1.
pub fn workers_from_env() -> usize {
    std::env::var("VRMEC_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|n: &usize| *n > 0)
        .unwrap_or(1)
}

fn dir_label(index: usize, value: &str) -> String {
    let clean: String = value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("{index:02}_{clean}")
}

/// One run per value of the dotted `axis`, each in its own subdirectory,
/// plus `summary.csv` in input order.
pub fn run_sweep(base: &ExperimentConfig, axis: &str, values: &[String], out: &Path, workers: usize) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let base_tree = toml::Value::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
    let configs = values
        .iter()
        .map(|v| {
            let mut tree = base_tree.clone();
            set_dotted(&mut tree, axis, parse_value(v))?;
            ExperimentConfig::from_value(tree)
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out)?;
    let dirs: Vec<PathBuf> = values.iter().enumerate().map(|(i, v)| out.join(dir_label(i, v))).collect();
    let mut results: Vec<Option<Result<Evaluation>>> = (0..values.len()).map(|_| None).collect();
    let workers = workers.clamp(1, values.len());
    std::thread::scope(|scope| {
        let chunks: Vec<Vec<usize>> = (0..workers).map(|w| (w..values.len()).step_by(workers).collect()).collect();
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|idx| {
                let (configs, dirs) = (&configs, &dirs);
                scope.spawn(move || {
                    idx.into_iter()
                        .map(|i| (i, run_experiment(&configs[i], Some(&dirs[i])).map(|r| r.evaluation)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let mut points = Vec::with_capacity(values.len());
    for ((value, dir), r) in values.iter().zip(dirs).zip(results) {
        let evaluation = r.expect("every point assigned")?;
        points.push(SweepPoint { value: value.clone(), dir, evaluation });
    }
    let mut summary = String::from("value,final_avg_qoe,final_avg_latency\n");
    for p in &points {
        writeln!(summary, "{},{},{}", p.value, p.evaluation.avg_qoe_per_user, p.evaluation.avg_interaction_latency).unwrap();
    }
    write_atomic(&out.join("summary.csv"), summary.as_bytes())?;
    Ok(points)
}

/// Final reward of one finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub algorithm: String,
    pub seed: u64,
    pub final_reward: f64,
}

pub fn read_run_summary(dir: &Path) -> Result<RunSummary> {
    let cfg = ExperimentConfig::load(&dir.join("config.toml"))?;
    let eval = Evaluation::read_csv(&std::fs::read_to_string(dir.join("evaluation.csv"))?)?;
    Ok(RunSummary {
        algorithm: cfg.algorithm.name().to_string(),
        seed: cfg.seed,
        final_reward: eval.avg_reward_per_slot,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub algorithm: String,
    pub mean_final_reward: f64,
    /// `(seed, final reward)` sorted by seed.
    pub per_seed: Vec<(u64, f64)>,
}

/// Ranks algorithms by mean final reward, highest first; ties by name.
pub fn compare_report(runs: &[RunSummary]) -> Vec<RankRow> {
    let mut rows: Vec<RankRow> = Vec::new();
    for r in runs {
        match rows.iter_mut().find(|row| row.algorithm == r.algorithm) {
            Some(row) => row.per_seed.push((r.seed, r.final_reward)),
            None => rows.push(RankRow {
                algorithm: r.algorithm.clone(),
                mean_final_reward: 0.0,
                per_seed: vec![(r.seed, r.final_reward)],
            }),
        }
    }
    for row in &mut rows {
        row.per_seed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        row.mean_final_reward = row.per_seed.iter().map(|s| s.1).sum::<f64>() / row.per_seed.len() as f64;
    }
    rows.sort_by(|a, b| b.mean_final_reward.total_cmp(&a.mean_final_reward).then_with(|| a.algorithm.cmp(&b.algorithm)));
    rows
}

pub fn format_report(rows: &[RankRow]) -> String {
    let mut s = String::from("rank,algorithm,mean_final_reward,per_seed\n");
    for (i, r) in rows.iter().enumerate() {
        let seeds: Vec<String> = r.per_seed.iter().map(|(seed, v)| format!("{seed}:{v}")).collect();
        writeln!(s, "{},{},{},{}", i + 1, r.algorithm, r.mean_final_reward, seeds.join(" ")).unwrap();
    }
    s
}

/// Whether `algorithm` occurs in the ranking above `other`.
pub fn ranks_above(rows: &[RankRow], algorithm: Algorithm, other: Algorithm) -> Option<bool> {
    let pos = |a: Algorithm| rows.iter().position(|r| r.algorithm == a.name());
    Some(pos(algorithm)? < pos(other)?)
}
