//! Training loop with condition masking, condition dropout, continuous-time
//! noising and early stopping on validation Recall@10.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::{hash_hex, mask_condition, DatasetSplit, SplitTag};
use crate::denoiser::{Activation, AdamConfig, AdamState, Batch, Checkpoint, Denoiser, DenoiserShape};
use crate::error::{Error, Result};
use crate::graph::SpectralBasis;
use crate::metrics::evaluate;
use crate::sampler::{DiffusionRecommender, SamplerConfig};
use crate::schedule::NoiseSchedule;

/// Granularity of the unconditional-branch coin flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    /// One flip per training example.
    PerExample,
    /// One flip per mini-batch.
    PerBatch,
}

impl std::fmt::Display for DropoutMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DropoutMode::PerExample => "per-example",
            DropoutMode::PerBatch => "per-batch",
        })
    }
}

impl std::str::FromStr for DropoutMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example" | "per-example" => Ok(DropoutMode::PerExample),
            "batch" | "per-batch" => Ok(DropoutMode::PerBatch),
            other => Err(Error::InvalidParameter(format!("unknown dropout mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub max_epochs: usize,
    pub p_uncond: f64,
    pub p_mask: f64,
    pub dropout: DropoutMode,
    /// Validate every this many epochs.
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub hidden: usize,
    pub time_dim: usize,
    pub film_width: usize,
    pub activation: Activation,
    /// Guidance weight used when sampling for validation.
    pub guidance: f64,
    /// Record elapsed milliseconds in the log (zero otherwise).
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            adam: AdamConfig::default(),
            max_epochs: 1000,
            p_uncond: 0.02,
            p_mask: 0.5,
            dropout: DropoutMode::PerExample,
            eval_every: 1,
            patience: 20,
            seed: 0,
            hidden: 1024,
            time_dim: 64,
            film_width: 16,
            activation: Activation::Tanh,
            guidance: 0.02,
            record_wall_time: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(0.0..=1.0).contains(&self.p_uncond) || !(0.0..=1.0).contains(&self.p_mask) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.eval_every == 0 || self.patience == 0 {
            return bad("batch size, epochs, eval interval and patience must be positive");
        }
        if !(0.0..=1.0).contains(&self.guidance) {
            return bad("guidance weight must lie in [0, 1]");
        }
        self.adam.validate()
    }

    pub fn shape(&self, rank: usize) -> DenoiserShape {
        DenoiserShape {
            rank,
            hidden: self.hidden,
            time_dim: self.time_dim,
            film_width: self.film_width,
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_recall: Option<f64>,
    pub val_ndcg: Option<f64>,
    pub wall_ms: u64,
}

/// Hooks into the loop, mainly for instrumentation in tests.
pub trait TrainObserver {
    fn on_example(&mut self, _t: f64, _unconditional: bool) {}
    fn on_epoch(&mut self, _record: &EpochRecord) {}
}

pub struct NoObserver;
impl TrainObserver for NoObserver {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation evaluation (or the last epoch when
    /// there is no validation data).
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
    pub stop: StopReason,
}

/// Checks that `basis` was computed from the training interactions of `split`
/// and that `sched` uses its spectrum.
pub fn check_inputs(split: &DatasetSplit, basis: &SpectralBasis, sched: &NoiseSchedule) -> Result<()> {
    let expected = split.train_hash()?;
    if &expected != basis.matrix_hash() {
        return Err(Error::HashMismatch {
            expected: hash_hex(&expected),
            found: hash_hex(basis.matrix_hash()),
        });
    }
    if basis.n_items() != split.n_items {
        return Err(Error::DimensionMismatch {
            expected: split.n_items,
            got: basis.n_items(),
        });
    }
    if sched.frequencies() != basis.frequencies() {
        return Err(Error::InvalidParameter("schedule spectrum differs from the basis".into()));
    }
    Ok(())
}

fn build_batch(
    users: &[usize],
    split: &DatasetSplit,
    basis: &SpectralBasis,
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    observer: &mut dyn TrainObserver,
) -> Result<Batch<f32>> {
    let k = basis.rank();
    let b = users.len();
    let mut v_t = Array2::zeros((b, k));
    let mut cond = Array2::zeros((b, k));
    let mut target = Array2::zeros((b, k));
    let mut ts = Vec::with_capacity(b);
    let batch_uncond = cfg.dropout == DropoutMode::PerBatch && rng.random_bool(cfg.p_uncond);
    for (row, &u) in users.iter().enumerate() {
        let x0 = &split.train[u];
        let uncond = match cfg.dropout {
            DropoutMode::PerExample => rng.random_bool(cfg.p_uncond),
            DropoutMode::PerBatch => batch_uncond,
        };
        if !uncond {
            let c = mask_condition(x0, cfg.p_mask, rng);
            for (j, x) in basis.gft_binary(&c).into_iter().enumerate() {
                cond[[row, j]] = x as f32;
            }
        }
        let v0 = basis.gft_binary(x0);
        let t = rng.random_range(0.0..sched.tau());
        observer.on_example(t, uncond);
        let noisy = sched.forward_sample(&v0, t, rng)?;
        for j in 0..k {
            target[[row, j]] = v0[j] as f32;
            v_t[[row, j]] = noisy[j] as f32;
        }
        ts.push(t as f32);
    }
    Ok(Batch { v_t, cond, t: ts, target })
}

fn validate_model(
    model: &Denoiser<f32>,
    split: &DatasetSplit,
    basis: &SpectralBasis,
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let sampler = SamplerConfig {
        guidance: cfg.guidance,
        seed: cfg.seed,
        ..Default::default()
    };
    let rec = DiffusionRecommender::new(model, sched, basis, sampler)?;
    let m = evaluate(split, SplitTag::Val, &[10], &rec)?;
    Ok((m.recall[0], m.ndcg[0]))
}

/// Trains a denoiser on the training interactions of `split`.
pub fn train(
    cfg: &TrainConfig,
    split: &DatasetSplit,
    basis: &SpectralBasis,
    sched: &NoiseSchedule,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_inputs(split, basis, sched)?;
    let mut users: Vec<usize> = (0..split.n_users()).filter(|&u| !split.train[u].is_empty()).collect();
    if users.is_empty() {
        return Err(Error::NoInteractions);
    }
    let has_val = split.val.iter().any(|v| !v.is_empty());
    let shape = cfg.shape(basis.rank());
    let mut model = Denoiser::<f32>::new(shape, cfg.seed)?;
    let mut opt = AdamState::new(shape);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let hash = *basis.matrix_hash();
    let snapshot = |model: &Denoiser<f32>, opt: &AdamState<f32>| Checkpoint {
        model: model.clone(),
        optimizer: Some(opt.clone()),
        basis_hash: hash,
        train_steps: opt.step,
    };
    let mut best = snapshot(&model, &opt);
    let mut best_epoch = 0;
    let mut best_recall = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut log = Vec::new();
    let mut stop = StopReason::MaxEpochs;
    let start = Instant::now();

    for epoch in 1..=cfg.max_epochs {
        users.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in users.chunks(cfg.batch_size) {
            let batch = build_batch(chunk, split, basis, sched, cfg, &mut rng, observer)?;
            let (loss, grad) = model.loss_and_grad(&batch)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    last_good: Box::new(best),
                });
            }
            opt.update(&cfg.adam, &mut model, &grad)?;
            loss_sum += loss as f64 * chunk.len() as f64;
        }
        let mut record = EpochRecord {
            epoch,
            loss: loss_sum / users.len() as f64,
            val_recall: None,
            val_ndcg: None,
            wall_ms: 0,
        };
        let mut improved = false;
        if has_val && epoch % cfg.eval_every == 0 {
            let (r, n) = validate_model(&model, split, basis, sched, cfg)?;
            record.val_recall = Some(r);
            record.val_ndcg = Some(n);
            if r > best_recall {
                best_recall = r;
                improved = true;
                stale = 0;
            } else {
                stale += 1;
            }
        }
        if improved || !has_val {
            best = snapshot(&model, &opt);
            best_epoch = epoch;
        }
        if cfg.record_wall_time {
            record.wall_ms = start.elapsed().as_millis() as u64;
        }
        observer.on_epoch(&record);
        log.push(record);
        if stale >= cfg.patience {
            stop = StopReason::EarlyStop;
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        log,
        stop,
    })
}

/// `epoch,loss,val_recall@10,val_ndcg@10,wall_ms` rows; missing
/// validation values are left empty.
pub fn log_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss,val_recall@10,val_ndcg@10,wall_ms\n");
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in log {
        let _ = writeln!(
            out,
            "{},{:.8e},{},{},{}",
            r.epoch,
            r.loss,
            opt(r.val_recall),
            opt(r.val_ndcg),
            r.wall_ms
        );
    }
    out
}
