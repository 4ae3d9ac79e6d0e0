//! End-to-end runs: split, basis, training and test evaluation.

use crate::dataio::{DatasetSplit, InteractionMatrix, SplitTag};
use crate::error::Result;
use crate::graph::{build_basis, LanczosConfig, SpectralBasis};
use crate::metrics::{evaluate, Metrics, Popularity};
use crate::sampler::{DiffusionRecommender, SamplerConfig};
use crate::schedule::{NoiseSchedule, ScheduleParams};
use crate::trainer::{train, NoObserver, TrainConfig, TrainOutcome};

pub const SPLIT_RATIOS: (f64, f64, f64) = (0.7, 0.1, 0.2);

/// A split and the basis of its training interactions.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: DatasetSplit,
    pub basis: SpectralBasis,
}

pub fn prepare(m: &InteractionMatrix, split_seed: u64, lanczos: &LanczosConfig) -> Result<Prepared> {
    let split = DatasetSplit::new(m, SPLIT_RATIOS, split_seed)?;
    let train = split.train_matrix(m)?;
    let basis = build_basis(&train, lanczos)?;
    Ok(Prepared { split, basis })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: TrainOutcome,
    pub test: Metrics,
}

/// Trains on `prep` and evaluates the best checkpoint on the test split.
pub fn train_and_test(
    prep: &Prepared,
    schedule: ScheduleParams,
    train_cfg: &TrainConfig,
    sampler: SamplerConfig,
    ks: &[usize],
) -> Result<RunResult> {
    let sched = NoiseSchedule::new(prep.basis.frequencies(), schedule)?;
    let outcome = train(train_cfg, &prep.split, &prep.basis, &sched, &mut NoObserver)?;
    let pop = Popularity::new(&prep.split);
    let rec = DiffusionRecommender::new(&outcome.best.model, &sched, &prep.basis, sampler)?.with_popularity(pop.scores);
    let test = evaluate(&prep.split, SplitTag::Test, ks, &rec)?;
    Ok(RunResult { outcome, test })
}

pub fn popularity_test(prep: &Prepared, ks: &[usize]) -> Result<Metrics> {
    evaluate(&prep.split, SplitTag::Test, ks, &Popularity::new(&prep.split))
}
