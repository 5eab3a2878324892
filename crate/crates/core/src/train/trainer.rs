use std::time::Instant;

use super::metrics::TrainMetrics;
use super::optimizer::{OptimizerConfig, OptimizerState};
use crate::error::{Error, Result};
use crate::network::{rse_forward, ModelConfig, ModelInput, ModelParams};
use crate::numcore::{Eager, Graph, Real, Tape, Tensor};
use crate::rng::{self, Stream};
use crate::tasks::{Batch, Curriculum, LengthMode, Task, TaskExample, TRAIN_BUCKETS};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub steps: u64,
    pub batch: usize,
    pub buckets: Vec<usize>,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub log_every: u64,
    pub eval_every: u64,
    pub eval_lengths: Vec<usize>,
    pub eval_examples: usize,
    /// Stop once evaluation at `.0` reaches per-symbol accuracy `.1`.
    pub stop_at: Option<(usize, f64)>,
    pub divergence_factor: f64,
    pub divergence_window: u64,
    /// Record elapsed seconds in the metrics; off keeps seeded runs byte-identical.
    pub log_wallclock: bool,
}

impl TrainConfig {
    pub fn new(task: Task, steps: u64) -> Self {
        Self {
            task,
            steps,
            batch: 32,
            buckets: TRAIN_BUCKETS.to_vec(),
            optimizer: OptimizerConfig::default(),
            seed: 0,
            log_every: 100,
            eval_every: 500,
            eval_lengths: vec![64, 128, 256],
            eval_examples: 128,
            stop_at: None,
            divergence_factor: 10.0,
            divergence_window: 1000,
            log_wallclock: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.log_every == 0 || self.eval_every == 0 {
            return Err(Error::invalid("log and eval intervals must be positive"));
        }
        if let Some(&l) = self.eval_lengths.iter().find(|l| !l.is_power_of_two() || **l < 4) {
            return Err(Error::invalid(format!("evaluation length {l} is not a power of two >= 4")));
        }
        Curriculum::new(&self.buckets, self.steps)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub length: usize,
    pub per_symbol_acc: f64,
    pub seq_acc: f64,
    pub loss: f64,
}

/// Counts `(correct masked positions, masked positions, fully correct rows)`.
pub fn score<T: Real>(logits: &Tensor<T>, batch: &Batch) -> (usize, usize, usize) {
    let classes = logits.features();
    let (mut hit, mut total, mut rows_ok) = (0, 0, 0);
    for r in 0..batch.rows {
        let mut row_ok = true;
        for p in 0..batch.len {
            let i = r * batch.len + p;
            if batch.mask[i] == 0.0 {
                continue;
            }
            let scores = &logits.data()[i * classes..(i + 1) * classes];
            let pred = argmax(scores);
            total += 1;
            if pred == batch.labels[i] {
                hit += 1;
            } else {
                row_ok = false;
            }
        }
        rows_ok += row_ok as usize;
    }
    (hit, total, rows_ok)
}

fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Rows per evaluation batch, so long lengths stay within memory.
fn eval_rows(length: usize) -> usize {
    (16_384 / length).clamp(1, 32)
}

/// Fixed evaluation set for `length`: the same examples every call.
pub fn eval_examples(task: Task, length: usize, count: usize, seed: u64) -> Result<Vec<TaskExample>> {
    let mut rng = rng::indexed(seed, Stream::Eval, length as u64);
    (0..count).map(|_| task.sample(length, LengthMode::Full, &mut rng)).collect()
}

/// Accuracy over `examples` (all of one length), masked positions only.
pub fn evaluate_examples<T: Real>(
    config: &ModelConfig,
    params: &ModelParams<Tensor<T>>,
    examples: &[TaskExample],
) -> Result<EvalResult> {
    let length = examples.first().map(|e| e.len()).ok_or_else(|| Error::invalid("no evaluation examples"))?;
    let (mut hit, mut total, mut rows_ok, mut loss_sum) = (0, 0, 0, 0.0);
    let mut g = Eager;
    let bound = params.bind(&mut g);
    for chunk in examples.chunks(eval_rows(length)) {
        let batch = Batch::new(chunk)?;
        let logits = rse_forward(&mut g, config, &bound, ModelInput::Tokens { ids: &batch.ids, batch: batch.rows }, length)?;
        let (h, t, r) = score(&logits, &batch);
        let mask: Vec<T> = batch.mask.iter().map(|&m| T::lit(m)).collect();
        let loss = g.softmax_xent(&logits, &batch.labels, &mask)?;
        loss_sum += loss.item().as_f64() * t as f64;
        hit += h;
        total += t;
        rows_ok += r;
    }
    Ok(EvalResult {
        length,
        per_symbol_acc: hit as f64 / total.max(1) as f64,
        seq_acc: rows_ok as f64 / examples.len() as f64,
        loss: loss_sum / total.max(1) as f64,
    })
}

/// Accuracy on freshly generated full-length examples at `length`.
pub fn evaluate<T: Real>(
    config: &ModelConfig,
    params: &ModelParams<Tensor<T>>,
    task: Task,
    length: usize,
    n_examples: usize,
    seed: u64,
) -> Result<EvalResult> {
    if !length.is_power_of_two() {
        return Err(Error::invalid(format!("evaluation length {length} is not a power of two")));
    }
    evaluate_examples(config, params, &eval_examples(task, length, n_examples, seed)?)
}

/// One optimization step on `batch`; returns `(loss, per-symbol acc, seq acc)`.
pub fn train_step<T: Real>(
    config: &ModelConfig,
    params: &mut ModelParams<Tensor<T>>,
    opt: &mut OptimizerState,
    batch: &Batch,
) -> Result<(f64, f64, f64)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let logits = rse_forward(&mut tape, config, &bound, ModelInput::Tokens { ids: &batch.ids, batch: batch.rows }, batch.len)?;
    let mask: Vec<T> = batch.mask.iter().map(|&m| T::lit(m)).collect();
    let loss = tape.softmax_xent(&logits, &batch.labels, &mask)?;
    let loss_value = tape.value(&loss).item().as_f64();
    let (hit, total, rows_ok) = score(tape.value(&logits), batch);
    tape.backward(loss)?;
    let mut grads = Vec::new();
    bound.visit(&mut |_, var| {
        let value = tape.value(var);
        grads.push(tape.grad(*var).unwrap_or_else(|| Tensor::zeros(value.shape().to_vec())));
    });
    drop(tape);
    opt.apply(params, &grads)?;
    Ok((loss_value, hit as f64 / total.max(1) as f64, rows_ok as f64 / batch.rows as f64))
}

/// Receives metrics rows and periodic checkpoints while training runs.
pub trait TrainSink<T: Real> {
    fn metrics(&mut self, _row: &TrainMetrics) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&mut self, _step: u64, _params: &ModelParams<Tensor<T>>) -> Result<()> {
        Ok(())
    }
}

impl<T: Real> TrainSink<T> for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub steps_run: u64,
    pub metrics: Vec<TrainMetrics>,
    pub initial_loss: f64,
    /// Losses of every step.
    pub losses: Vec<f64>,
    /// Last evaluation per length.
    pub last_eval: Vec<EvalResult>,
    pub stopped_early: bool,
    /// First step at which the 500-step mean loss rose during the first 5000 steps.
    pub smoothed_loss_increase: Option<u64>,
}

impl TrainOutcome {
    pub fn eval_at(&self, length: usize) -> Option<EvalResult> {
        self.last_eval.iter().copied().find(|e| e.length == length)
    }

    pub fn mean_loss(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.losses.len());
        let s = &self.losses[from.min(to)..to];
        s.iter().sum::<f64>() / s.len().max(1) as f64
    }
}

const SMOOTH_WINDOW: usize = 500;
const SMOOTH_HORIZON: usize = 5000;

/// Trains `params` in place on the curriculum. Deterministic given
/// `train.seed` and the initial parameters.
pub fn train_loop<T: Real>(
    model: &ModelConfig,
    params: &mut ModelParams<Tensor<T>>,
    train: &TrainConfig,
    sink: &mut dyn TrainSink<T>,
    checkpoint_every: Option<u64>,
) -> Result<TrainOutcome> {
    train.validate()?;
    model.validate()?;
    let curriculum = Curriculum::new(&train.buckets, train.steps)?;
    let mut opt = OptimizerState::new(train.optimizer, params);
    let eval_sets: Vec<Vec<TaskExample>> = train
        .eval_lengths
        .iter()
        .map(|&l| eval_examples(train.task, l, train.eval_examples, train.seed))
        .collect::<Result<_>>()?;
    let started = Instant::now();
    let clock = |started: &Instant| {
        if train.log_wallclock {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        }
    };

    let mut out = TrainOutcome {
        steps_run: 0,
        metrics: Vec::new(),
        initial_loss: f64::NAN,
        losses: Vec::with_capacity(train.steps as usize),
        last_eval: Vec::new(),
        stopped_early: false,
        smoothed_loss_increase: None,
    };
    let mut above = 0u64;
    let mut window_means: Vec<f64> = Vec::new();

    for step in 0..train.steps {
        let bucket = curriculum.sample(step, train.seed);
        let mut data = rng::indexed(train.seed, Stream::Data, step);
        let examples: Vec<TaskExample> = (0..train.batch)
            .map(|_| train.task.sample(bucket, LengthMode::Bucket, &mut data))
            .collect::<Result<_>>()?;
        let batch = Batch::new(&examples)?;
        let (loss, acc, seq) = train_step(model, params, &mut opt, &batch)?;
        out.losses.push(loss);
        out.steps_run = step + 1;
        if step == 0 {
            out.initial_loss = loss;
        }

        let threshold = train.divergence_factor * out.initial_loss;
        if !loss.is_finite() || loss > threshold {
            above += 1;
            if above >= train.divergence_window || !loss.is_finite() {
                return Err(Error::Diverged { step, loss, threshold, window: train.divergence_window });
            }
        } else {
            above = 0;
        }

        let done = out.losses.len();
        if done % SMOOTH_WINDOW == 0 && done <= SMOOTH_HORIZON {
            let mean = out.mean_loss(done - SMOOTH_WINDOW, done);
            if window_means.last().is_some_and(|&prev| mean > prev) && out.smoothed_loss_increase.is_none() {
                out.smoothed_loss_increase = Some(step);
            }
            window_means.push(mean);
        }

        let row = |eval_length, per_symbol_acc, seq_acc, train_loss| TrainMetrics {
            step: step + 1,
            task: train.task.name().to_string(),
            bucket,
            train_loss,
            eval_length,
            per_symbol_acc,
            seq_acc,
            wallclock_s: clock(&started),
        };
        if (step + 1) % train.log_every == 0 || step == 0 {
            let r = row(0, acc, seq, loss);
            sink.metrics(&r)?;
            out.metrics.push(r);
        }

        let last = step + 1 == train.steps;
        if (step + 1) % train.eval_every == 0 || last {
            let recent = out.mean_loss(done.saturating_sub(train.log_every as usize), done);
            out.last_eval.clear();
            for set in &eval_sets {
                let e = evaluate_examples(model, params, set)?;
                let r = row(e.length, e.per_symbol_acc, e.seq_acc, recent);
                sink.metrics(&r)?;
                out.metrics.push(r);
                out.last_eval.push(e);
            }
            if let Some((len, target)) = train.stop_at {
                if out.eval_at(len).is_some_and(|e| e.per_symbol_acc >= target) {
                    out.stopped_early = !last;
                    sink.checkpoint(step + 1, params)?;
                    return Ok(out);
                }
            }
        }
        if checkpoint_every.is_some_and(|c| (step + 1) % c == 0) || last {
            sink.checkpoint(step + 1, params)?;
        }
    }
    Ok(out)
}
