//! Desk-scale training runs on the synthetic suite.

use evseg_tensor::{Real, Sgd};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::{metrics, ConfusionMatrix, Metrics};
use crate::models::{EventTarget, ModelKind, Network, NetworkConfig, Scale};
use crate::repr::{table2_config, ReprConfig};
use crate::synthetic::Sample;
use crate::train::{evaluate_batch, make_batch, train_step, Example, LossConfig, StepLosses};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub kind: ModelKind,
    /// Representation name (`B1`, `B2`, `B18`, `P`, `P+N`); ignored for RGB-only.
    pub repr: Option<String>,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub loss: LossConfig,
    pub event_target: EventTarget,
    pub scale: Scale,
    /// Replaces the default network built from `kind`, `repr` and `scale`.
    pub network: Option<NetworkConfig>,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(kind: ModelKind, repr: Option<&str>, seed: u64) -> Self {
        Self {
            kind,
            repr: repr.map(str::to_string),
            steps: 500,
            batch_size: 4,
            lr: 0.01,
            momentum: 0.9,
            loss: LossConfig::default(),
            event_target: EventTarget::BinaryOccupancy,
            scale: Scale::Toy,
            network: None,
            seed,
        }
    }

    pub fn repr_config(&self, height: usize, width: usize) -> Result<Option<ReprConfig>> {
        match (&self.repr, self.kind) {
            (_, ModelKind::RgbOnly) | (None, _) => Ok(None),
            (Some(r), _) => Ok(Some(table2_config(r, height, width)?)),
        }
    }

    pub fn network_config(&self, repr: Option<&ReprConfig>) -> NetworkConfig {
        if let Some(n) = &self.network {
            return n.clone();
        }
        let mut cfg = NetworkConfig::new(self.kind, repr.map_or(1, ReprConfig::channels), self.scale);
        if let Some(d) = cfg.d2s.as_mut() {
            d.event_target = self.event_target;
        }
        cfg
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub losses: Vec<StepLosses>,
    pub test: Metrics,
    pub confusion: ConfusionMatrix,
}

impl RunResult {
    pub fn initial_ce(&self) -> f64 {
        self.losses.first().map_or(f64::NAN, |l| l.ce)
    }

    /// Mean cross entropy over the last `window` steps.
    pub fn final_ce(&self, window: usize) -> f64 {
        let tail = &self.losses[self.losses.len().saturating_sub(window.max(1))..];
        tail.iter().map(|l| l.ce).sum::<f64>() / tail.len() as f64
    }

    pub fn ce_reduction(&self, window: usize) -> f64 {
        1.0 - self.final_ce(window) / self.initial_ce()
    }
}

pub fn prepare(samples: &[Sample], kind: ModelKind, repr: Option<&ReprConfig>) -> Result<Vec<Example>> {
    samples
        .iter()
        .map(|s| Example::prepare(s.rgb.clone(), s.label.clone(), &s.events, kind, repr))
        .collect()
}

/// Trains a freshly initialised network on `train`.
/// Batches are drawn from reshuffled epochs, all seeded by `cfg.seed`.
pub fn train<T: Real>(cfg: &RunConfig, train: &[Sample]) -> Result<(Network<T>, Vec<StepLosses>)> {
    let first = train
        .first()
        .ok_or_else(|| Error::Config("no labelled training samples".into()))?;
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let repr = cfg.repr_config(first.label.height(), first.label.width())?;
    let mut net = Network::<T>::build(&cfg.network_config(repr.as_ref()), cfg.seed)?;
    let examples = prepare(train, cfg.kind, repr.as_ref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut opt = Sgd::new(cfg.lr, cfg.momentum);
    let mut order: Vec<usize> = Vec::new();
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        while order.len() < cfg.batch_size {
            let mut epoch: Vec<usize> = (0..examples.len()).collect();
            epoch.shuffle(&mut rng);
            order.extend(epoch);
        }
        let picked: Vec<&Example> = order.drain(..cfg.batch_size).map(|i| &examples[i]).collect();
        let batch = make_batch::<T>(&picked, cfg.kind, cfg.event_target)?;
        losses.push(train_step(&mut net, &batch, &mut opt, &cfg.loss)?);
    }
    Ok((net, losses))
}

/// [`train`] followed by evaluation on `test`.
pub fn run<T: Real>(cfg: &RunConfig, train_set: &[Sample], test: &[Sample]) -> Result<(Network<T>, RunResult)> {
    let (net, losses) = train::<T>(cfg, train_set)?;
    let confusion = match test.first() {
        Some(s) => {
            let repr = cfg.repr_config(s.label.height(), s.label.width())?;
            evaluate(&net, &prepare(test, cfg.kind, repr.as_ref())?, cfg.event_target)?
        }
        None => ConfusionMatrix::default(),
    };
    let test = metrics(&confusion);
    Ok((net, RunResult { losses, test, confusion }))
}

pub fn evaluate<T: Real>(net: &Network<T>, examples: &[Example], target: EventTarget) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    for chunk in examples.chunks(8) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let batch = make_batch::<T>(&refs, net.kind(), target)?;
        cm = evaluate_batch(net, &batch, &cm)?;
    }
    Ok(cm)
}
