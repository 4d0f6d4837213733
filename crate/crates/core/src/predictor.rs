//! Next-slot FoV prediction with a GRU over a sliding window of past FoVs.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::prediction_accuracy;
use crate::model::FovIndex;
use crate::neural::{argmax, cross_entropy, softmax, GruClassifier};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorParams {
    /// Observation window T0.
    pub window: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Minibatches drawn per epoch.
    pub batches_per_epoch: usize,
    /// Trailing fraction of every trace held out for accuracy.
    pub holdout_fraction: f64,
    /// Held-out examples scored per epoch (evenly strided); the final score
    /// always uses the whole held-out set.
    pub epoch_eval_examples: usize,
    /// One model for all users, or one per user.
    pub shared: bool,
    /// Slots of synthetic trace generated per user for training.
    pub trace_slots: usize,
}

impl Default for PredictorParams {
    fn default() -> Self {
        Self {
            window: 20,
            hidden: 64,
            learning_rate: 0.005,
            batch_size: 64,
            epochs: 20,
            batches_per_epoch: 20,
            holdout_fraction: 0.2,
            epoch_eval_examples: 1000,
            shared: true,
            trace_slots: 10_000,
        }
    }
}

impl PredictorParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "predictor window, hidden and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidParameter("predictor learning_rate must be >= 0".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::InvalidParameter("holdout_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Output of `predict_next`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub probabilities: Vec<T>,
    pub fov: FovIndex,
    /// False when the history was shorter than the window and the uniform
    /// fallback was returned.
    pub warm: bool,
}

/// A window of past FoVs and the FoV that followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub user: usize,
    pub window: Vec<FovIndex>,
    pub target: FovIndex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-example training loss over the epoch's minibatches (nats).
    pub loss: f64,
    /// Held-out exact-match accuracy as a fraction.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FovPredictor<T> {
    n_fov: usize,
    window: usize,
    learning_rate: T,
    models: Vec<GruClassifier<T>>,
}

impl<T: Scalar> FovPredictor<T> {
    /// `users` only matters for per-user mode (`shared == false`).
    pub fn new<R: Rng + ?Sized>(n_fov: usize, users: usize, params: &PredictorParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let count = if params.shared { 1 } else { users.max(1) };
        let models = (0..count)
            .map(|_| GruClassifier::new(n_fov, params.hidden, n_fov, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            n_fov,
            window: params.window,
            learning_rate: T::lit(params.learning_rate),
            models,
        })
    }

    pub fn zeros(n_fov: usize, params: &PredictorParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            n_fov,
            window: params.window,
            learning_rate: T::lit(params.learning_rate),
            models: vec![GruClassifier::zeros(n_fov, params.hidden, n_fov)?],
        })
    }

    pub fn n_fov(&self) -> usize {
        self.n_fov
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn models(&self) -> &[GruClassifier<T>] {
        &self.models
    }

    pub fn models_mut(&mut self) -> &mut [GruClassifier<T>] {
        &mut self.models
    }

    pub fn set_learning_rate(&mut self, lr: T) {
        self.learning_rate = lr;
    }

    pub fn model_index(&self, user: usize) -> usize {
        if self.models.len() == 1 {
            0
        } else {
            user % self.models.len()
        }
    }

    fn encode(&self, window: &[FovIndex]) -> Vec<Vec<T>> {
        window
            .iter()
            .map(|f| {
                let mut v = vec![T::zero(); self.n_fov];
                v[f.value()] = T::one();
                v
            })
            .collect()
    }

    /// Predicts the FoV following `history` from its last `window` entries.
    pub fn predict_next(&self, user: usize, history: &[FovIndex]) -> Result<Prediction<T>> {
        if history.len() < self.window {
            let p = T::one() / T::lit(self.n_fov as f64);
            return Ok(Prediction {
                probabilities: vec![p; self.n_fov],
                fov: FovIndex::new(0, self.n_fov)?,
                warm: false,
            });
        }
        let recent = &history[history.len() - self.window..];
        let (logits, _) = self.models[self.model_index(user)].forward(&self.encode(recent))?;
        let probabilities = softmax(&logits);
        let fov = FovIndex::new(argmax(&probabilities), self.n_fov)?;
        Ok(Prediction {
            probabilities,
            fov,
            warm: true,
        })
    }

    /// One SGD step on the summed cross-entropy of `batch`, all routed to the
    /// model of `batch[0].user`. Returns the summed loss before the step.
    pub fn train_step(&mut self, batch: &[Example]) -> Result<T> {
        let first = batch
            .first()
            .ok_or_else(|| Error::InsufficientData("empty minibatch".into()))?;
        let m = self.model_index(first.user);
        let model = &self.models[m];
        let mut grads = model.params.zeros_like();
        let mut loss = T::zero();
        for ex in batch {
            if ex.window.len() != self.window {
                return Err(Error::ShapeMismatch(format!(
                    "window of {} FoVs, expected {}",
                    ex.window.len(),
                    self.window
                )));
            }
            let (logits, cache) = model.forward(&self.encode(&ex.window))?;
            let (l, g) = cross_entropy(&logits, ex.target.value());
            loss += l;
            model.backward_into(&cache, &g, &mut grads)?;
        }
        let lr = self.learning_rate;
        self.models[m].params.sgd_step(&grads, lr)?;
        Ok(loss)
    }

    /// Exact-match accuracy (fraction) over `examples`.
    pub fn accuracy(&self, examples: &[&Example]) -> Result<f64> {
        let mut predicted = Vec::with_capacity(examples.len());
        let mut actual = Vec::with_capacity(examples.len());
        for ex in examples {
            predicted.push(self.predict_next(ex.user, &ex.window)?.fov);
            actual.push(ex.target);
        }
        Ok(prediction_accuracy(&actual, &predicted)? / 100.0)
    }
}

/// Training and held-out examples cut from per-user traces. A target belongs
/// to the held-out set when it falls in the trailing `holdout_fraction` of
/// its trace; its window may reach back into the training part.
pub fn split_examples(traces: &[Vec<FovIndex>], window: usize, holdout_fraction: f64) -> Result<(Vec<Example>, Vec<Example>)> {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (user, trace) in traces.iter().enumerate() {
        if trace.len() < window + 1 {
            return Err(Error::InsufficientData(format!(
                "trace of user {user} has {} slots, need at least {}",
                trace.len(),
                window + 1
            )));
        }
        let cut = ((trace.len() as f64) * (1.0 - holdout_fraction)).floor() as usize;
        for t in window..trace.len() {
            let ex = Example {
                user,
                window: trace[t - window..t].to_vec(),
                target: trace[t],
            };
            if t < cut {
                train.push(ex);
            } else {
                held.push(ex);
            }
        }
    }
    if train.is_empty() || held.is_empty() {
        return Err(Error::InsufficientData("traces too short to split".into()));
    }
    Ok((train, held))
}

fn strided(examples: &[Example], cap: usize) -> Vec<&Example> {
    if cap == 0 || examples.len() <= cap {
        return examples.iter().collect();
    }
    (0..cap).map(|i| &examples[i * examples.len() / cap]).collect()
}

/// Result of `train_predictor`.
#[derive(Debug, Clone)]
pub struct TrainedPredictor<T> {
    pub predictor: FovPredictor<T>,
    pub curve: Vec<EpochStats>,
    /// Accuracy over every held-out example after the last epoch.
    pub final_accuracy: f64,
}

/// Trains a predictor on `traces`. Initial weights are drawn from `rng` first,
/// then minibatches are sampled uniformly with replacement.
pub fn train_predictor<T: Scalar, R: Rng + ?Sized>(
    traces: &[Vec<FovIndex>],
    n_fov: usize,
    params: &PredictorParams,
    rng: &mut R,
) -> Result<TrainedPredictor<T>> {
    params.validate()?;
    let (train, held) = split_examples(traces, params.window, params.holdout_fraction)?;
    let mut predictor = FovPredictor::<T>::new(n_fov, traces.len(), params, rng)?;

    // per-model pools so per-user mode never mixes users within a batch
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); predictor.models.len()];
    for (i, ex) in train.iter().enumerate() {
        pools[predictor.model_index(ex.user)].push(i);
    }
    let epoch_eval = strided(&held, params.epoch_eval_examples);
    let mut curve = Vec::with_capacity(params.epochs);
    let mut batch = Vec::with_capacity(params.batch_size);
    for epoch in 0..params.epochs {
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for b in 0..params.batches_per_epoch {
            let pool = &pools[b % pools.len()];
            if pool.is_empty() {
                continue;
            }
            batch.clear();
            for _ in 0..params.batch_size {
                batch.push(train[pool[rng.random_range(0..pool.len())]].clone());
            }
            loss_sum += predictor.train_step(&batch)?.to_f64_lossy();
            seen += batch.len();
        }
        curve.push(EpochStats {
            epoch,
            loss: if seen == 0 { 0.0 } else { loss_sum / seen as f64 },
            accuracy: predictor.accuracy(&epoch_eval)?,
        });
    }
    let all: Vec<&Example> = held.iter().collect();
    let final_accuracy = predictor.accuracy(&all)?;
    Ok(TrainedPredictor {
        predictor,
        curve,
        final_accuracy,
    })
}

/// Writes `epoch,loss,accuracy` rows.
pub fn write_curve_csv<W: Write>(curve: &[EpochStats], mut out: W) -> Result<()> {
    writeln!(out, "epoch,loss,accuracy")?;
    for s in curve {
        writeln!(out, "{},{},{}", s.epoch, s.loss, s.accuracy)?;
    }
    Ok(())
}
