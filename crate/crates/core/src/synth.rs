//! Synthetic interaction data.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

use crate::dataio::InteractionMatrix;
use crate::error::{Error, Result};

/// Two disjoint item blocks; user `u` belongs to block `u % 2` and interacts
/// with `min(base + u % 6, block size)` random items of it.
pub fn two_block(n_users: usize, n_items: usize, base: usize, seed: u64) -> Result<InteractionMatrix> {
    if n_items < 2 || n_users == 0 {
        return Err(Error::InvalidParameter("two-block data needs users and two items".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n_items / 2;
    let rows = (0..n_users)
        .map(|u| {
            let (lo, hi) = if u % 2 == 0 { (0, half) } else { (half, n_items) };
            let mut block: Vec<u32> = (lo as u32..hi as u32).collect();
            block.shuffle(&mut rng);
            block.truncate((base + u % 6).min(hi - lo));
            block
        })
        .collect();
    InteractionMatrix::from_rows(rows, n_items)
}

/// Parameters of the latent-genre generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenreModel {
    pub n_users: usize,
    pub n_items: usize,
    pub n_genres: usize,
    /// Mean interactions per user.
    pub mean_activity: f64,
    pub min_activity: usize,
    /// Exponent on item popularity in the choice weights.
    pub popularity_power: f64,
    /// Weight of genre-agnostic choices relative to genre-matched ones.
    pub background: f64,
}

impl GenreModel {
    /// MovieLens-100k scale: 943 users, 1682 items, about 100k interactions.
    pub fn ml100k() -> Self {
        Self {
            n_users: 943,
            n_items: 1682,
            n_genres: 18,
            mean_activity: 106.0,
            min_activity: 20,
            popularity_power: 1.0,
            background: 0.05,
        }
    }

    /// MovieLens-1M scale: 5949 users, 2810 items, about 570k interactions.
    pub fn ml1m() -> Self {
        Self {
            n_users: 5949,
            n_items: 2810,
            mean_activity: 96.0,
            ..Self::ml100k()
        }
    }
}

fn activity(mean: f64, min: usize) -> LogNormal<f64> {
    let spread = 0.6f64;
    LogNormal::new((mean - min as f64).max(1.0).ln() - spread * spread / 2.0, spread).expect("valid log-normal")
}

/// Gumbel-top-k: `n` distinct indices drawn with probability proportional
/// to `exp(logits)`, sequentially without replacement.
fn sample_without_replacement(logits: impl Iterator<Item = f64>, n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut keyed: Vec<(f64, u32)> = logits
        .enumerate()
        .map(|(i, l)| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            (l - (-u.ln()).ln(), i as u32)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(n).map(|(_, i)| i).collect()
}

/// Users with one to three favourite genres (of `n_genres`) choose items by
/// genre affinity times a log-normal item popularity.
pub fn genre_model(p: &GenreModel, seed: u64) -> Result<InteractionMatrix> {
    if p.n_users == 0 || p.n_items == 0 || p.n_genres == 0 || p.min_activity > p.n_items {
        return Err(Error::InvalidParameter(format!("invalid generator settings {p:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pop_dist = LogNormal::new(0.0, 1.2).expect("valid log-normal");
    let popularity: Vec<f64> = (0..p.n_items)
        .map(|_| f64::powf(pop_dist.sample(&mut rng), p.popularity_power))
        .collect();
    let item_genres: Vec<Vec<usize>> = (0..p.n_items)
        .map(|_| {
            let n = rng.random_range(1..=3);
            let mut g: Vec<usize> = (0..p.n_genres).collect();
            g.shuffle(&mut rng);
            g.truncate(n);
            g
        })
        .collect();
    let act = activity(p.mean_activity, p.min_activity);
    let rows = (0..p.n_users)
        .map(|_| {
            let mut taste = vec![0.0; p.n_genres];
            for _ in 0..rng.random_range(1..=3) {
                taste[rng.random_range(0..p.n_genres)] += rng.random_range(0.5..1.0);
            }
            let n = (p.min_activity + act.sample(&mut rng).round() as usize).min(p.n_items);
            let logits: Vec<f64> = (0..p.n_items)
                .map(|i| {
                    let affinity: f64 = item_genres[i].iter().map(|&g| taste[g]).sum();
                    (popularity[i] * (p.background + affinity)).ln()
                })
                .collect();
            sample_without_replacement(logits.into_iter(), n, &mut rng)
        })
        .collect();
    InteractionMatrix::from_rows(rows, p.n_items)
}

/// Parameters of the latent-factor generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentModel {
    pub n_users: usize,
    pub n_items: usize,
    /// Dimension of the user and item factors.
    pub dim: usize,
    /// Scale of the user-item affinity term in the choice logits.
    pub affinity: f64,
    /// Standard deviation of the log item popularity.
    pub popularity_spread: f64,
    /// Mean interactions per user.
    pub mean_activity: f64,
    pub min_activity: usize,
}

impl LatentModel {
    /// MovieLens-100k scale: 943 users, 1682 items, about 100k interactions.
    pub fn ml100k() -> Self {
        Self {
            n_users: 943,
            n_items: 1682,
            dim: 64,
            affinity: 2.0,
            popularity_spread: 1.2,
            mean_activity: 106.0,
            min_activity: 20,
        }
    }

    /// MovieLens-1M scale: 5949 users, 2810 items, about 570k interactions.
    pub fn ml1m() -> Self {
        Self {
            n_users: 5949,
            n_items: 2810,
            mean_activity: 96.0,
            ..Self::ml100k()
        }
    }
}

/// Each user picks items without replacement with probability proportional
/// to `exp(log_pop_i + a · p_u·q_i / sqrt(dim))`, Gaussian factors `p`, `q`.
pub fn latent_model(p: &LatentModel, seed: u64) -> Result<InteractionMatrix> {
    if p.n_users == 0 || p.n_items == 0 || p.dim == 0 || p.min_activity > p.n_items {
        return Err(Error::InvalidParameter(format!("invalid generator settings {p:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let log_pop: Vec<f64> = (0..p.n_items).map(|_| p.popularity_spread * gauss(&mut rng)).collect();
    let items: Vec<Vec<f64>> = (0..p.n_items)
        .map(|_| (0..p.dim).map(|_| gauss(&mut rng)).collect())
        .collect();
    let act = activity(p.mean_activity, p.min_activity);
    let scale = p.affinity / (p.dim as f64).sqrt();
    let rows = (0..p.n_users)
        .map(|_| {
            let user: Vec<f64> = (0..p.dim).map(|_| gauss(&mut rng)).collect();
            let n = (p.min_activity + act.sample(&mut rng).round() as usize).min(p.n_items);
            let logits = (0..p.n_items).map(|i| {
                let dot: f64 = user.iter().zip(&items[i]).map(|(a, b)| a * b).sum();
                log_pop[i] + scale * dot
            });
            sample_without_replacement(logits, n, &mut rng)
        })
        .collect();
    InteractionMatrix::from_rows(rows, p.n_items)
}
