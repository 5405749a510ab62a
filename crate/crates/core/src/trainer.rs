//! Teacher training, post-surgery fine-tuning and evaluation.
//!
//! The optimizer is SGD with (optionally Nesterov) momentum and classic L2
//! weight decay: `λ·w` is added to the gradient before the momentum update,
//! so decay is itself subject to momentum.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{batches, Dataset};
use crate::error::{Error, Result};
use crate::network::{forward, record, Checkpoint};
use crate::tensor::{argmax, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Cosine,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub seed: u64,
}

impl TrainConfig {
    /// Teacher recipe: lr 1e-3, Nesterov momentum 0.9, weight decay 5e-4,
    /// cosine annealing over 40 epochs.
    pub fn teacher() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 32,
            lr0: 1e-3,
            momentum: 0.9,
            nesterov: true,
            weight_decay: 5e-4,
            schedule: Schedule::Cosine,
            seed: 0,
        }
    }

    /// Fine-tuning recipe: the teacher's optimizer at a fixed rate for 10 epochs.
    pub fn finetune() -> Self {
        TrainConfig {
            epochs: 10,
            schedule: Schedule::Constant,
            ..Self::teacher()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay {} is negative", self.weight_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate used throughout epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.lr0,
            Schedule::Cosine => {
                let frac = epoch as f64 / self.epochs.max(1) as f64;
                self.lr0 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    /// Accuracy on the held-out set, when one was supplied.
    pub eval_acc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,train_loss,train_acc,eval_acc\n");
        for r in &self.epochs {
            let eval = r.eval_acc.map(|v| format!("{v:?}")).unwrap_or_default();
            writeln!(s, "{},{:?},{:?},{:?},{}", r.epoch, r.lr, r.train_loss, r.train_acc, eval).unwrap();
        }
        s
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv().as_bytes()))
    }
}

/// SGD with momentum, optional Nesterov look-ahead and L2 weight decay.
#[derive(Clone, Debug)]
pub struct Sgd {
    momentum: f64,
    nesterov: bool,
    weight_decay: f64,
    buffers: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(config: &TrainConfig, params: &[Tensor]) -> Self {
        Sgd {
            momentum: config.momentum,
            nesterov: config.nesterov,
            weight_decay: config.weight_decay,
            buffers: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[&Tensor], lr: f64) {
        for ((p, g), buf) in params.iter_mut().zip(grads).zip(&mut self.buffers) {
            for ((w, &gv), b) in p.data_mut().iter_mut().zip(g.data()).zip(buf.iter_mut()) {
                let d = gv + self.weight_decay * *w;
                *b = self.momentum * *b + d;
                let update = if self.nesterov { d + self.momentum * *b } else { *b };
                *w -= lr * update;
            }
        }
    }
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_add((epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Trains `model` on `ds`. `eval`, when given, is scored after every epoch.
pub fn train(
    model: &Checkpoint,
    ds: &Dataset,
    config: &TrainConfig,
    eval: Option<&Dataset>,
) -> Result<(Checkpoint, TrainHistory)> {
    config.validate()?;
    let mut params = model.params.clone();
    let mut opt = Sgd::new(config, &params);
    let mut history = TrainHistory::default();
    let mut current = model.clone();

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for idx in batches(ds.len(), config.batch_size, epoch_seed(config.seed, epoch), true)? {
            let (x, labels) = ds.batch(&idx);
            let mut rec = record(&current, &x, None, true)?;
            let loss = rec.tape.cross_entropy(rec.logits, &labels)?;
            let lv = rec.tape.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::Training { epoch, msg: format!("loss became {lv}") });
            }
            loss_sum += lv * labels.len() as f64;
            let logits = rec.tape.value(rec.logits);
            correct += labels.iter().enumerate().filter(|&(i, &l)| argmax(logits.row(i)) == l).count();
            let grads = rec.tape.backward(loss)?;
            let gs: Vec<&Tensor> = rec.params.iter().map(|&v| grads.get(v).expect("parameter gradient")).collect();
            opt.step(&mut params, &gs, lr);
            if params.iter().any(|p| !p.all_finite()) {
                return Err(Error::Training { epoch, msg: "parameters became non-finite".into() });
            }
            current.params.clone_from(&params);
        }
        let eval_acc = eval.map(|e| evaluate(&current, e)).transpose()?;
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / ds.len() as f64,
            train_acc: correct as f64 / ds.len() as f64,
            eval_acc,
        });
    }

    if config.epochs > 0 {
        current.meta.epoch += config.epochs;
        current.meta.history_digest = history.digest();
    }
    Ok((current, history))
}

/// Fine-tunes a pruned network. Identical loop to [`train`]; the caller's
/// config decides the schedule (constant in [`TrainConfig::finetune`]).
pub fn finetune(
    pruned: &Checkpoint,
    ds: &Dataset,
    config: &TrainConfig,
    eval: Option<&Dataset>,
) -> Result<(Checkpoint, TrainHistory)> {
    train(pruned, ds, config, eval)
}

const EVAL_CHUNK: usize = 512;

/// Logits for every sample of `ds`, in order.
pub fn logits(model: &Checkpoint, ds: &Dataset) -> Result<Tensor> {
    let n = ds.len();
    let mut data = Vec::new();
    let mut width = 0;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let (x, _) = ds.batch(&idx);
        let out = forward(model, &x)?;
        width = out.row_len();
        data.extend(out.into_data());
    }
    Tensor::new(vec![n, width], data)
}

/// Top-1 accuracy; argmax ties go to the smallest class index.
pub fn evaluate(model: &Checkpoint, ds: &Dataset) -> Result<f64> {
    let out = logits(model, ds)?;
    accuracy(&out, ds.labels())
}

pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Input("cannot evaluate on zero samples".into()));
    }
    let correct = labels.iter().enumerate().filter(|&(i, &l)| argmax(logits.row(i)) == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_gaussian_clusters, SyntheticSpec};
    use crate::network::{build, NetworkSpec};

    #[test]
    fn cosine_schedule_endpoints() {
        let c = TrainConfig { epochs: 40, lr0: 0.1, ..TrainConfig::teacher() };
        assert_eq!(c.lr_at(0), 0.1);
        let last = c.lr_at(39);
        let expected = 0.1 * 0.5 * (1.0 + (std::f64::consts::PI * 39.0 / 40.0).cos());
        assert_eq!(last, expected);
        assert!(last < 0.1 * 0.01);
        assert_eq!(TrainConfig::finetune().lr_at(7), 1e-3);
    }

    #[test]
    fn weight_decay_follows_momentum_recurrence() {
        let cfg = TrainConfig { momentum: 0.9, weight_decay: 0.1, nesterov: true, ..TrainConfig::teacher() };
        let mut params = vec![Tensor::scalar(2.0)];
        let zero = Tensor::scalar(0.0);
        let mut opt = Sgd::new(&cfg, &params);
        let (lr, mu, wd) = (0.5, 0.9, 0.1);
        let (mut w, mut b) = (2.0f64, 0.0f64);
        for _ in 0..5 {
            opt.step(&mut params, &[&zero], lr);
            let d = wd * w;
            b = mu * b + d;
            w -= lr * (d + mu * b);
            assert_eq!(params[0].item(), w);
        }
        assert!(w < 2.0);
    }

    #[test]
    fn plain_momentum_recurrence() {
        let cfg = TrainConfig { momentum: 0.5, weight_decay: 0.0, nesterov: false, ..TrainConfig::teacher() };
        let mut params = vec![Tensor::scalar(1.0)];
        let g = Tensor::scalar(1.0);
        let mut opt = Sgd::new(&cfg, &params);
        opt.step(&mut params, &[&g], 0.1);
        opt.step(&mut params, &[&g], 0.1);
        // buffers 1 then 1.5
        assert!((params[0].item() - (1.0 - 0.1 - 0.15)).abs() < 1e-15);
    }

    fn separable() -> Dataset {
        gen_gaussian_clusters(&SyntheticSpec {
            num_classes: 2,
            dim: 8,
            samples_per_class: 100,
            cluster_separation: 3.0,
            noise_sigma: 0.3,
            seed: 4,
        })
        .unwrap()
    }

    #[test]
    fn separable_task_reaches_99_percent() {
        let ds = separable();
        let m = build(&NetworkSpec::mlp(8, 16, 2), 0).unwrap();
        let cfg = TrainConfig { epochs: 20, lr0: 1e-2, ..TrainConfig::teacher() };
        let (trained, hist) = train(&m, &ds, &cfg, None).unwrap();
        assert_eq!(hist.len(), 20);
        assert!(evaluate(&trained, &ds).unwrap() >= 0.99);
        assert_eq!(trained.meta.epoch, 20);
        assert_eq!(trained.meta.history_digest, hist.digest());
    }

    #[test]
    fn first_epoch_loss_decreases() {
        let ds = separable();
        let m = build(&NetworkSpec::mlp(8, 16, 2), 1).unwrap();
        let cfg = TrainConfig { epochs: 2, lr0: 1e-2, ..TrainConfig::teacher() };
        let (_, hist) = train(&m, &ds, &cfg, None).unwrap();
        assert!(hist.epochs[1].train_loss < hist.epochs[0].train_loss);
    }

    #[test]
    fn zero_lr_and_zero_epochs_leave_weights() {
        let ds = separable();
        let m = build(&NetworkSpec::mlp(8, 16, 2), 2).unwrap();
        let cfg = TrainConfig { epochs: 3, lr0: 0.0, ..TrainConfig::teacher() };
        let (t, _) = train(&m, &ds, &cfg, None).unwrap();
        assert_eq!(t.params, m.params);
        let (f, h) = finetune(&m, &ds, &TrainConfig { epochs: 0, ..TrainConfig::finetune() }, None).unwrap();
        assert_eq!(f, m);
        assert!(h.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let ds = separable();
        let m = build(&NetworkSpec::mlp(8, 16, 2), 3).unwrap();
        let cfg = TrainConfig { epochs: 3, lr0: 1e-2, ..TrainConfig::teacher() };
        let (a, ha) = train(&m, &ds, &cfg, Some(&ds)).unwrap();
        let (b, hb) = train(&m, &ds, &cfg, Some(&ds)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha.to_csv(), hb.to_csv());
    }

    #[test]
    fn divergence_is_reported() {
        let ds = separable();
        let m = build(&NetworkSpec::mlp(8, 16, 2), 3).unwrap();
        let cfg = TrainConfig { epochs: 5, lr0: 1e12, ..TrainConfig::teacher() };
        assert!(matches!(train(&m, &ds, &cfg, None), Err(Error::Training { .. })));
    }

    #[test]
    fn accuracy_rules() {
        let l = Tensor::from_rows(&[&[0.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(accuracy(&l, &[1, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&l, &[1, 1]).unwrap(), 0.5);
        assert!(matches!(accuracy(&l, &[]), Err(Error::Input(_))));
    }

    #[test]
    fn bad_configs() {
        assert!(TrainConfig { momentum: 1.0, ..TrainConfig::teacher() }.validate().is_err());
        assert!(TrainConfig { weight_decay: -1.0, ..TrainConfig::teacher() }.validate().is_err());
        assert!(TrainConfig { lr0: f64::NAN, ..TrainConfig::teacher() }.validate().is_err());
    }
}
