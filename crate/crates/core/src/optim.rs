//! Momentum SGD and the training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::angular::Margin;
use crate::data::{Dataset, DatasetSplit};
use crate::error::{Error, Result};
use crate::loss::{self, FeatureBatch, LambdaSchedule};
use crate::metrics;
use crate::model::Model;
use crate::nn::{self, NetworkSpec};
use crate::tensor::Tensor;

/// Which loss supervises training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// λ-blended L-Softmax with the configured margin.
    #[default]
    LargeMargin,
    /// Plain softmax cross-entropy; `margin` and λ are ignored.
    PlainSoftmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Iterations at which the learning rate is multiplied by `lr_drop_factor`.
    pub lr_drop_iterations: Vec<usize>,
    pub lr_drop_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub margin: Margin,
    pub lambda_schedule: LambdaSchedule,
    pub seed: u64,
    /// Evaluate validation error every this many iterations (and at the end).
    pub eval_interval: Option<usize>,
    pub objective: Objective,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            lr_drop_iterations: Vec::new(),
            lr_drop_factor: 0.1,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 256,
            max_iterations: 1000,
            margin: Margin::SOFTMAX,
            lambda_schedule: LambdaSchedule::default(),
            seed: 0,
            eval_interval: None,
            objective: Objective::LargeMargin,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.learning_rate > 0.0) {
            return fail(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if self.lr_drop_iterations.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!(
                "lr drop iterations must be strictly increasing, got {:?}",
                self.lr_drop_iterations
            ));
        }
        if !(self.lr_drop_factor > 0.0) {
            return fail(format!("lr drop factor must be > 0, got {}", self.lr_drop_factor));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return fail(format!("weight decay must be >= 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return fail("batch size must be >= 1".into());
        }
        if self.eval_interval == Some(0) {
            return fail("eval interval must be >= 1".into());
        }
        let s = &self.lambda_schedule;
        LambdaSchedule::new(s.initial, s.min, s.gamma, s.window)?;
        Ok(())
    }
}

/// Staircase schedule: the drop applies from the listed iteration onward.
pub fn lr_at(config: &TrainConfig, iteration: usize) -> f64 {
    let drops = config
        .lr_drop_iterations
        .iter()
        .take_while(|&&d| d <= iteration)
        .count();
    config.learning_rate * config.lr_drop_factor.powi(drops as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub iteration: usize,
    pub model: Model,
    /// One velocity per parameter tensor, in [`Model::tensors`] order.
    pub velocities: Vec<Tensor>,
    pub lambda: f64,
    pub loss_history: Vec<f64>,
}

impl TrainState {
    pub fn new(model: Model) -> Self {
        let velocities = model
            .tensors()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        TrainState {
            iteration: 0,
            model,
            velocities,
            lambda: 0.0,
            loss_history: Vec::new(),
        }
    }
}

/// `v ← μv − η(g + wd·θ)`, `θ ← θ + v`, then advance the iteration counter.
/// Biases are not decayed. Nothing is updated if any gradient is non-finite.
pub fn sgd_step(state: &mut TrainState, grads: &[Tensor], config: &TrainConfig) -> Result<()> {
    let lr = lr_at(config, state.iteration);
    let names = state.model.tensors().len();
    if grads.len() != names {
        return Err(Error::shape("gradient tensor count", names, grads.len()));
    }
    for (i, g) in grads.iter().enumerate() {
        if let Some(element) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                iteration: state.iteration,
                param: format!("#{i}"),
                element,
            });
        }
    }
    let mu = config.momentum;
    let wd = config.weight_decay;
    let params = state.model.tensors_mut();
    for (((role, theta), v), g) in params.into_iter().zip(&mut state.velocities).zip(grads) {
        if theta.shape() != g.shape() || v.shape() != g.shape() {
            return Err(Error::shape("gradient", theta.shape(), g.shape()));
        }
        let decay = if role.decays() { wd } else { 0.0 };
        for ((p, vi), gi) in theta.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vi = mu * *vi - lr * (gi + decay * *p);
            *p += *vi;
        }
    }
    state.iteration += 1;
    Ok(())
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_error: Option<f64>,
}

/// What a hook sees after each iteration's update.
#[derive(Debug, Clone, Copy)]
pub struct IterationInfo {
    pub iteration: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub loss: f64,
}

/// The batch and loss of one iteration, seen before the update.
#[derive(Debug, Clone, Copy)]
pub struct BatchInfo<'a> {
    pub iteration: usize,
    pub lambda: f64,
    pub inputs: &'a Tensor,
    pub labels: &'a [usize],
    pub loss: f64,
}

pub trait TrainHook {
    /// Called after the loss is computed and before parameters change.
    fn on_batch(&mut self, _batch: &BatchInfo<'_>, _model: &Model) {}
    fn on_iteration(&mut self, _info: &IterationInfo, _model: &Model) {}
}

impl TrainHook for () {}

impl<F: FnMut(&IterationInfo)> TrainHook for F {
    fn on_iteration(&mut self, info: &IterationInfo, _model: &Model) {
        self(info)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub metrics: Vec<MetricsRow>,
}

/// Initialise a model from `config.seed` and train it on `data.train`.
pub fn train(
    spec: &NetworkSpec,
    data: &DatasetSplit,
    config: &TrainConfig,
    hook: &mut dyn TrainHook,
) -> Result<TrainOutcome> {
    let model = Model::init(spec.clone(), data.train.classes, config.seed)?;
    train_model(model, data, config, hook)
}

/// Mini-batch order: reshuffle every epoch, drop the ragged tail.
struct BatchSampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
}

impl BatchSampler {
    fn new(n: usize, batch: usize, seed: u64) -> Self {
        let mut s = BatchSampler {
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba7c_4e5f_0001),
            order: (0..n).collect(),
            cursor: 0,
            batch: batch.min(n),
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    fn next_batch(&mut self) -> &[usize] {
        if self.cursor + self.batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let b = &self.order[self.cursor..self.cursor + self.batch];
        self.cursor += self.batch;
        b
    }
}

pub fn train_model(
    model: Model,
    data: &DatasetSplit,
    config: &TrainConfig,
    hook: &mut dyn TrainHook,
) -> Result<TrainOutcome> {
    config.validate()?;
    let train = &data.train;
    if train.is_empty() {
        return Err(Error::EmptySplit {
            which: "train",
            total: 0,
            fraction: 0.0,
        });
    }
    if train.classes != model.classes() {
        return Err(Error::shape("number of classes", model.classes(), train.classes));
    }
    let mut state = TrainState::new(model);
    let mut sampler = BatchSampler::new(train.len(), config.batch_size, config.seed);
    let mut metrics_log = Vec::with_capacity(config.max_iterations);

    for t in 0..config.max_iterations {
        let lambda = config.lambda_schedule.at(t);
        let lr = lr_at(config, t);
        state.lambda = lambda;

        let idx = sampler.next_batch();
        let inputs = train.inputs.gather_rows(idx);
        let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
        let (loss, grads) = loss_and_gradients(&state.model, &inputs, &labels, config, lambda)?;
        hook.on_batch(
            &BatchInfo {
                iteration: t,
                lambda,
                inputs: &inputs,
                labels: &labels,
                loss,
            },
            &state.model,
        );

        sgd_step(&mut state, &grads, config)?;
        state.loss_history.push(loss);

        let last = t + 1 == config.max_iterations;
        let val_error = match config.eval_interval {
            Some(every) if !data.val.is_empty() && ((t + 1) % every == 0 || last) => {
                Some(1.0 - metrics::accuracy(&state.model, &data.val)?)
            }
            _ => None,
        };
        metrics_log.push(MetricsRow {
            iteration: t,
            lambda,
            learning_rate: lr,
            train_loss: loss,
            val_error,
        });
        hook.on_iteration(
            &IterationInfo {
                iteration: t,
                lambda,
                learning_rate: lr,
                loss,
            },
            &state.model,
        );
    }
    Ok(TrainOutcome {
        state,
        metrics: metrics_log,
    })
}

/// Mean batch loss and gradients for every parameter tensor, in
/// [`Model::tensors`] order.
pub fn loss_and_gradients(
    model: &Model,
    inputs: &Tensor,
    labels: &[usize],
    config: &TrainConfig,
    lambda: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let (features, cache) = nn::network_forward(&model.spec, &model.network, inputs)?;
    let batch = FeatureBatch::new(&features, labels)?;
    let result = match config.objective {
        Objective::LargeMargin => loss::backward(batch, &model.classifier, config.margin, lambda)?,
        Objective::PlainSoftmax => loss::softmax_loss(batch, &model.classifier, true)?,
    };
    let g = result.gradients.expect("gradients requested");
    let (net_grads, _) = nn::network_backward(&model.spec, &model.network, &cache, &g.features)?;
    let mut grads: Vec<Tensor> = net_grads.tensors().into_iter().map(|(_, t)| t.clone()).collect();
    grads.push(g.weights);
    Ok((result.loss, grads))
}

/// Error rate of a model on a dataset.
pub fn error_rate(model: &Model, data: &Dataset) -> Result<f64> {
    Ok(1.0 - metrics::accuracy(model, data)?)
}
