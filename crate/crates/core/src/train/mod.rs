//! Supervised training: focal loss, L2 penalty, Adam and early stopping.

mod adam;
mod loss;

pub use adam::{adam_step, AdamState};
pub use loss::{bfl_loss, l2_penalty, LossConfig, PROB_EPS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{confusion_counts, net_accuracy};
use crate::gat::{model_backward, model_forward, Mode, ModelConfig, ModelParams};
use crate::net::{build_hanan_grid, disjoint_batch, BatchGraph, HananGrid, Net};
use crate::rng::{derive_seed, DetRng};
use crate::rsmt::OracleSolution;

/// A net with its optimal Steiner labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledNet {
    net: Net,
    grid: HananGrid,
    steiner_set: Vec<usize>,
    labels: Vec<bool>,
    optimal_wirelength: i64,
}

impl LabeledNet {
    /// `steiner_set` holds canonical indices of candidate nodes.
    pub fn new(net: Net, steiner_set: Vec<usize>, optimal_wirelength: i64) -> Result<Self> {
        let grid = build_hanan_grid(&net);
        let mut labels = vec![false; grid.node_count()];
        for &i in &steiner_set {
            if i >= grid.node_count() {
                return Err(Error::InvalidLabels {
                    id: net.id(),
                    msg: format!("label {i} out of range for {} grid nodes", grid.node_count()),
                });
            }
            if grid.is_pin(i) {
                return Err(Error::InvalidLabels {
                    id: net.id(),
                    msg: format!("label {i} marks a pin"),
                });
            }
            if labels[i] {
                return Err(Error::InvalidLabels {
                    id: net.id(),
                    msg: format!("label {i} repeated"),
                });
            }
            labels[i] = true;
        }
        let mut steiner_set = steiner_set;
        steiner_set.sort_unstable();
        Ok(LabeledNet {
            net,
            grid,
            steiner_set,
            labels,
            optimal_wirelength,
        })
    }

    pub fn from_oracle(net: Net, solution: &OracleSolution) -> Result<Self> {
        LabeledNet::new(net, solution.steiner_set.clone(), solution.optimal_wirelength)
    }

    pub fn net(&self) -> &Net {
        &self.net
    }

    pub fn grid(&self) -> &HananGrid {
        &self.grid
    }

    /// Per canonical node: true for optimal Steiner points.
    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn steiner_set(&self) -> &[usize] {
        &self.steiner_set
    }

    pub fn optimal_wirelength(&self) -> i64 {
        self.optimal_wirelength
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Nets per batch.
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub seed: u64,
    /// Selection threshold for the validation accuracy column.
    pub threshold: f64,
    pub loss: LossConfig,
    pub model: ModelConfig,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            learning_rate: 0.01,
            patience: 5,
            max_epochs: 100,
            batch_size: 256,
            l2_lambda: 5e-4,
            seed,
            threshold: 0.5,
            loss: LossConfig::default(),
            model: ModelConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.patience == 0 || self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "patience, max_epochs and batch_size must be positive".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(Error::Config("l2_lambda must be non-negative".into()));
        }
        Ok(())
    }
}

pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Shuffled 80/10/10 partition. Each part keeps the input order.
pub fn split_dataset<T>(data: Vec<T>, seed: u64) -> Result<Split<T>> {
    let n = data.len();
    if n < 10 {
        return Err(Error::TooFewNets(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    DetRng::new(seed).shuffle(&mut order);
    let n_train = (n as f64 * 0.8).round() as usize;
    let n_val = (n as f64 * 0.1).round() as usize;
    // 0 = train, 1 = val, 2 = test
    let mut part = vec![2u8; n];
    for &i in &order[..n_train] {
        part[i] = 0;
    }
    for &i in &order[n_train..n_train + n_val] {
        part[i] = 1;
    }
    let mut split = Split {
        train: Vec::with_capacity(n_train),
        val: Vec::with_capacity(n_val),
        test: Vec::with_capacity(n - n_train - n_val),
    };
    for (item, p) in data.into_iter().zip(part) {
        match p {
            0 => split.train.push(item),
            1 => split.val.push(item),
            _ => split.test.push(item),
        }
    }
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean focal loss per training net with dropout active, plus the L2 term.
    pub train_loss: f64,
    /// Mean focal loss per validation net in inference mode.
    pub val_loss: f64,
    /// Mean per-net confusion accuracy on the validation nets.
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation loss; stops after `patience` epochs without a
/// strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Verdict {
        match self.best {
            Some((_, best)) if !(val_loss < best) => {
                self.stale += 1;
                if self.stale >= self.patience {
                    Verdict::Stop
                } else {
                    Verdict::Continue
                }
            }
            _ => {
                self.best = Some((epoch, val_loss));
                self.stale = 0;
                Verdict::Improved
            }
        }
    }

    /// `(epoch, val_loss)` of the best epoch so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

struct Batch {
    graph: BatchGraph,
    labels: Vec<bool>,
    nets: usize,
}

fn make_batch(nets: &[&LabeledNet]) -> Result<Batch> {
    let graph = disjoint_batch(nets.iter().map(|n| n.grid.clone()).collect())?;
    let labels = nets.iter().flat_map(|n| n.labels.iter().copied()).collect();
    Ok(Batch {
        graph,
        labels,
        nets: nets.len(),
    })
}

/// Focal loss summed over the batch and the mean per-net confusion accuracy
/// of thresholded candidates, both in inference mode.
fn evaluate_batch(
    params: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let (probs, _) = model_forward(params, batch.graph.input(), Mode::Infer)?;
    let (loss, _) = bfl_loss(&probs, &batch.labels, &cfg.loss)?;
    let mut accuracy = 0.0;
    for (k, grid) in batch.graph.grids().iter().enumerate() {
        let range = batch.graph.member_range(k);
        let selected: Vec<usize> = (0..grid.node_count())
            .filter(|&i| !grid.is_pin(i) && probs[range.start + i] > cfg.threshold)
            .collect();
        let counts = confusion_counts(&selected, &batch.labels[range])?;
        accuracy += net_accuracy(&counts);
    }
    Ok((loss, accuracy))
}

/// Mean per-net focal loss of `params` over `data` in inference mode.
pub fn dataset_loss(params: &ModelParams, data: &[LabeledNet], cfg: &TrainConfig) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    let mut total = 0.0;
    for chunk in data.chunks(cfg.batch_size) {
        let refs: Vec<&LabeledNet> = chunk.iter().collect();
        total += evaluate_batch(params, &make_batch(&refs)?, cfg)?.0;
    }
    Ok(total / data.len() as f64)
}

/// Runs the epoch loop and returns the parameters of the epoch with the
/// lowest validation loss.
pub fn train(cfg: &TrainConfig, train: &[LabeledNet], val: &[LabeledNet]) -> Result<TrainOutcome> {
    train_with_observer(cfg, train, val, |_| {})
}

/// [`train`] with a callback invoked after each epoch.
pub fn train_with_observer(
    cfg: &TrainConfig,
    train: &[LabeledNet],
    val: &[LabeledNet],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }

    let mut params = ModelParams::init(&cfg.model, derive_seed(cfg.seed, 0));
    params.validate()?;
    let mut adam = AdamState::new(&params);

    let val_batches = val
        .chunks(cfg.batch_size)
        .map(|c| make_batch(&c.iter().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;

    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = params.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let epoch_seed = derive_seed(cfg.seed, epoch as u64);
        DetRng::new(epoch_seed).shuffle(&mut order);

        let mut train_loss = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let nets: Vec<&LabeledNet> = idx.iter().map(|&i| &train[i]).collect();
            let batch = make_batch(&nets)?;
            let mode = Mode::Train {
                seed: derive_seed(epoch_seed, b as u64 + 1),
            };
            let (probs, cache) = model_forward(&params, batch.graph.input(), mode)?;
            let (loss, d_prob) = bfl_loss(&probs, &batch.labels, &cfg.loss)?;
            let (penalty, penalty_grads) = l2_penalty(&params, cfg.l2_lambda);
            let mut grads = model_backward(&params, &cache, &d_prob)?;
            grads.accumulate(&penalty_grads);
            adam_step(&mut adam, &mut params, &grads, cfg.learning_rate)?;
            train_loss += loss + penalty * batch.nets as f64;
        }
        train_loss /= train.len() as f64;

        let (mut val_loss, mut val_accuracy) = (0.0, 0.0);
        for batch in &val_batches {
            let (l, a) = evaluate_batch(&params, batch, cfg)?;
            val_loss += l;
            val_accuracy += a;
        }
        val_loss /= val.len() as f64;
        val_accuracy /= val.len() as f64;

        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        };
        history.push(record);
        on_epoch(&record);

        match stopper.observe(epoch, val_loss) {
            Verdict::Improved => best_params = params.clone(),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }

    let (best_epoch, best_val_loss) = stopper.best().expect("at least one epoch ran");
    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch,
        best_val_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_partition() {
        let data: Vec<u32> = (0..100).collect();
        let s = split_dataset(data.clone(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
        let mut all: Vec<u32> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, data);

        let again = split_dataset(data.clone(), 1).unwrap();
        assert_eq!(s.val, again.val);
        assert_eq!(s.test, again.test);
        let other = split_dataset(data, 2).unwrap();
        assert_ne!(s.val, other.val);

        assert!(matches!(split_dataset(vec![0; 9], 1), Err(Error::TooFewNets(9))));
    }

    #[test]
    fn worsening_validation_keeps_first_epoch() {
        let mut es = EarlyStopping::new(5);
        let verdicts: Vec<Verdict> = (1..=6).map(|e| es.observe(e, e as f64)).collect();
        assert_eq!(verdicts[0], Verdict::Improved);
        assert_eq!(verdicts[4], Verdict::Continue);
        assert_eq!(verdicts[5], Verdict::Stop);
        assert_eq!(es.best(), Some((1, 1.0)));
    }

    #[test]
    fn improvement_resets_patience() {
        let mut es = EarlyStopping::new(2);
        assert_eq!(es.observe(1, 3.0), Verdict::Improved);
        assert_eq!(es.observe(2, 3.0), Verdict::Continue);
        assert_eq!(es.observe(3, 2.0), Verdict::Improved);
        assert_eq!(es.observe(4, 2.5), Verdict::Continue);
        assert_eq!(es.observe(5, 2.5), Verdict::Stop);
        assert_eq!(es.best(), Some((3, 2.0)));
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::new(0);
        cfg.validate().unwrap();
        cfg.patience = cfg.max_epochs + 1;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::new(0);
        cfg.loss.alpha = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn labels_must_be_candidates() {
        use crate::net::Point;
        let net = Net::new(4, [Point::new(0, 0), Point::new(2, 0), Point::new(1, 2)]).unwrap();
        let grid = build_hanan_grid(&net);
        let steiner = grid.index_of(Point::new(1, 0)).unwrap();
        let ln = LabeledNet::new(net.clone(), vec![steiner], 4).unwrap();
        assert_eq!(ln.labels().iter().filter(|&&b| b).count(), 1);
        let pin = grid.index_of(Point::new(0, 0)).unwrap();
        assert!(LabeledNet::new(net.clone(), vec![pin], 4).is_err());
        assert!(LabeledNet::new(net, vec![99], 4).is_err());
    }
}
