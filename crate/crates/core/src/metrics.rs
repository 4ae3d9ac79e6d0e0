//! Top-K evaluation: Recall@K, NDCG@K and the popularity baseline.
//!
//! Recall uses the uncapped denominator `|test|`. NDCG uses binary relevance
//! with gain `1 / log2(rank + 1)` and an ideal DCG over `min(K, |test|)` hits.

use std::fmt::Write as _;

use crate::dataio::{DatasetSplit, SplitTag};
use crate::error::{Error, Result};

const USER_CHUNK: usize = 256;

/// Anything that scores all items for a batch of users.
pub trait Recommender {
    /// One score vector of length `n_items` per user. `histories[i]` is the
    /// item set user `users[i]` has already interacted with at this stage.
    fn score_users(&self, users: &[usize], histories: &[Vec<u32>]) -> Result<Vec<Vec<f64>>>;
}

/// Top-`k` items by descending score, skipping `history` (sorted or not);
/// ties go to the lower item index.
pub fn recommend_topk(scores: &[f64], history: &[u32], k: usize) -> Vec<u32> {
    let mut excluded = vec![false; scores.len()];
    for &i in history {
        if let Some(e) = excluded.get_mut(i as usize) {
            *e = true;
        }
    }
    let mut cand: Vec<u32> = (0..scores.len() as u32).filter(|&i| !excluded[i as usize]).collect();
    let cmp = |a: &u32, b: &u32| {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then(a.cmp(b))
    };
    if k < cand.len() {
        cand.select_nth_unstable_by(k, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand
}

pub fn recall_at_k(ranked: &[u32], test: &[u32], k: usize) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let hits = ranked.iter().take(k).filter(|i| test.contains(i)).count();
    hits as f64 / test.len() as f64
}

pub fn ndcg_at_k(ranked: &[u32], test: &[u32], k: usize) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let gain = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| test.contains(i))
        .map(|(p, _)| gain(p))
        .sum();
    let idcg: f64 = (0..k.min(test.len())).map(gain).sum();
    dcg / idcg
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserMetrics {
    pub user: usize,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
}

/// Means over users with a nonempty held-out set, one entry per cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub per_user: Vec<UserMetrics>,
    pub seed: u64,
}

impl Metrics {
    pub fn n_users(&self) -> usize {
        self.per_user.len()
    }

    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.recall[i])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.ndcg[i])
    }
}

/// Ranks every user with a nonempty held-out set at `stage` and averages.
///
/// Validation excludes train items from candidates, test excludes train and
/// validation items. Histories passed to the recommender are those exclusions.
pub fn evaluate<R: Recommender + ?Sized>(
    split: &DatasetSplit,
    stage: SplitTag,
    ks: &[usize],
    recommender: &R,
) -> Result<Metrics> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidParameter("cutoffs must be positive".into()));
    }
    let max_k = *ks.iter().max().expect("nonempty");
    let held = split.held_out(stage);
    let users: Vec<usize> = (0..split.n_users()).filter(|&u| !held[u].is_empty()).collect();
    let mut per_user = Vec::with_capacity(users.len());
    for chunk in users.chunks(USER_CHUNK) {
        let histories: Vec<Vec<u32>> = chunk.iter().map(|&u| split.excluded(u, stage)).collect();
        let scores = recommender.score_users(chunk, &histories)?;
        if scores.len() != chunk.len() {
            return Err(Error::DimensionMismatch {
                expected: chunk.len(),
                got: scores.len(),
            });
        }
        for ((&u, hist), s) in chunk.iter().zip(&histories).zip(&scores) {
            if s.len() != split.n_items {
                return Err(Error::DimensionMismatch {
                    expected: split.n_items,
                    got: s.len(),
                });
            }
            let ranked = recommend_topk(s, hist, max_k);
            per_user.push(score_ranking(u, &ranked, hist, &held[u], ks)?);
        }
    }
    Ok(summarize(ks, per_user, split.seed))
}

/// Scores a precomputed ranking, rejecting excluded items.
pub fn score_ranking(
    user: usize,
    ranked: &[u32],
    excluded: &[u32],
    test: &[u32],
    ks: &[usize],
) -> Result<UserMetrics> {
    if let Some(&item) = ranked.iter().find(|i| excluded.contains(i)) {
        return Err(Error::ProtocolViolation { user, item });
    }
    Ok(UserMetrics {
        user,
        recall: ks.iter().map(|&k| recall_at_k(ranked, test, k)).collect(),
        ndcg: ks.iter().map(|&k| ndcg_at_k(ranked, test, k)).collect(),
    })
}

pub fn summarize(ks: &[usize], per_user: Vec<UserMetrics>, seed: u64) -> Metrics {
    let n = per_user.len().max(1) as f64;
    let mean = |f: &dyn Fn(&UserMetrics) -> f64| per_user.iter().map(f).sum::<f64>() / n;
    let recall = (0..ks.len()).map(|j| mean(&|m| m.recall[j])).collect();
    let ndcg = (0..ks.len()).map(|j| mean(&|m| m.ndcg[j])).collect();
    Metrics {
        ks: ks.to_vec(),
        recall,
        ndcg,
        per_user,
        seed,
    }
}

/// Per-item training interaction counts.
pub fn popularity_scores(split: &DatasetSplit) -> Vec<f64> {
    let mut counts = vec![0.0; split.n_items];
    for row in &split.train {
        for &i in row {
            counts[i as usize] += 1.0;
        }
    }
    counts
}

/// The same popularity ranking for every user.
#[derive(Debug, Clone)]
pub struct Popularity {
    pub scores: Vec<f64>,
}

impl Popularity {
    pub fn new(split: &DatasetSplit) -> Self {
        Self {
            scores: popularity_scores(split),
        }
    }
}

impl Recommender for Popularity {
    fn score_users(&self, users: &[usize], _histories: &[Vec<u32>]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![self.scores.clone(); users.len()])
    }
}

/// Mean and sample standard deviation of each metric across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub ks: Vec<usize>,
    pub recall_mean: Vec<f64>,
    pub recall_std: Vec<f64>,
    pub ndcg_mean: Vec<f64>,
    pub ndcg_std: Vec<f64>,
    pub runs: usize,
}

pub fn aggregate(runs: &[Metrics]) -> Result<RunSummary> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidParameter("no runs to aggregate".into()))?;
    if runs.iter().any(|m| m.ks != first.ks) {
        return Err(Error::InvalidParameter("runs use different cutoffs".into()));
    }
    let stats = |get: &dyn Fn(&Metrics) -> f64| {
        let n = runs.len() as f64;
        let mean = runs.iter().map(get).sum::<f64>() / n;
        let var = if runs.len() > 1 {
            runs.iter().map(|m| (get(m) - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (mean, var.sqrt())
    };
    let k = first.ks.len();
    let (recall_mean, recall_std) = (0..k).map(|j| stats(&|m| m.recall[j])).unzip();
    let (ndcg_mean, ndcg_std) = (0..k).map(|j| stats(&|m| m.ndcg[j])).unzip();
    Ok(RunSummary {
        ks: first.ks.clone(),
        recall_mean,
        recall_std,
        ndcg_mean,
        ndcg_std,
        runs: runs.len(),
    })
}

/// `label,k,recall,ndcg` rows.
pub fn metrics_csv(rows: &[(String, &Metrics)]) -> String {
    let mut out = String::from("label,k,recall,ndcg,users\n");
    for (label, m) in rows {
        for (j, k) in m.ks.iter().enumerate() {
            let _ = writeln!(out, "{label},{k},{:.6},{:.6},{}", m.recall[j], m.ndcg[j], m.n_users());
        }
    }
    out
}

/// Fixed-width table with one row per label and `R@K`/`N@K` columns.
pub fn metrics_table(rows: &[(String, &Metrics)]) -> String {
    let mut out = String::new();
    let Some((_, first)) = rows.first() else {
        return out;
    };
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let _ = write!(out, "{:<width$}", "model");
    for k in &first.ks {
        let _ = write!(out, " {:>9} {:>9}", format!("R@{k}"), format!("N@{k}"));
    }
    out.push('\n');
    for (label, m) in rows {
        let _ = write!(out, "{label:<width$}");
        for j in 0..m.ks.len() {
            let _ = write!(out, " {:>9.4} {:>9.4}", m.recall[j], m.ndcg[j]);
        }
        out.push('\n');
    }
    out
}

pub fn summary_table(rows: &[(String, &RunSummary)]) -> String {
    let mut out = String::new();
    for (label, s) in rows {
        let _ = write!(out, "{label} (n={})", s.runs);
        for j in 0..s.ks.len() {
            let _ = write!(
                out,
                "  R@{k} {:.4} ± {:.4}  N@{k} {:.4} ± {:.4}",
                s.recall_mean[j],
                s.recall_std[j],
                s.ndcg_mean[j],
                s.ndcg_std[j],
                k = s.ks[j]
            );
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_ranking() {
        assert_eq!(recall_at_k(&[3, 5], &[3, 5], 2), 1.0);
        assert_eq!(ndcg_at_k(&[3, 5], &[3, 5], 2), 1.0);
    }

    #[test]
    fn second_position_hit() {
        assert_eq!(recall_at_k(&[9, 4], &[4], 2), 1.0);
        let n = ndcg_at_k(&[9, 4], &[4], 2);
        assert!((n - 0.630_929_753_571_457_4).abs() < 1e-15);
    }

    #[test]
    fn recall_denominator_is_uncapped() {
        assert_eq!(recall_at_k(&[0, 1], &[0, 1, 2, 3], 2), 0.5);
        assert_eq!(ndcg_at_k(&[0, 1], &[0, 1, 2, 3], 2), 1.0);
    }

    #[test]
    fn topk_excludes_and_sorts() {
        assert_eq!(recommend_topk(&[0.9, 0.1, 0.5], &[0], 2), vec![2, 1]);
        assert_eq!(recommend_topk(&[1.0; 6], &[], 4), vec![0, 1, 2, 3]);
        assert_eq!(recommend_topk(&[0.2, 0.1], &[], 10), vec![0, 1]);
    }

    fn brute_topk(scores: &[f64], history: &[u32], k: usize) -> Vec<u32> {
        // Selection by repeated maximum.
        let mut left: Vec<u32> = (0..scores.len() as u32).filter(|i| !history.contains(i)).collect();
        let mut out = Vec::new();
        while out.len() < k && !left.is_empty() {
            let mut best = 0;
            for j in 1..left.len() {
                let (a, b) = (scores[left[j] as usize], scores[left[best] as usize]);
                if a > b || (a == b && left[j] < left[best]) {
                    best = j;
                }
            }
            out.push(left.remove(best));
        }
        out
    }

    fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let head = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, head);
                out.push(p);
            }
        }
        out
    }

    /// Recall and NDCG from their definitions over a full ranking.
    fn oracle(ranking: &[u32], test: &[u32], k: usize) -> (f64, f64) {
        let mut hits = 0usize;
        let mut dcg = 0.0;
        for (pos, item) in ranking.iter().enumerate().take(k) {
            if test.contains(item) {
                hits += 1;
                dcg += 1.0 / (pos as f64 + 2.0).log2();
            }
        }
        let mut idcg = 0.0;
        for pos in 0..test.len().min(k) {
            idcg += 1.0 / (pos as f64 + 2.0).log2();
        }
        (hits as f64 / test.len() as f64, dcg / idcg)
    }

    #[test]
    fn matches_exhaustive_oracle_on_small_universes() {
        for n in 1..=6u32 {
            let universe: Vec<u32> = (0..n).collect();
            let perms = permutations(&universe);
            for mask in 1u32..(1 << n) {
                let test: Vec<u32> = universe.iter().copied().filter(|i| mask >> i & 1 == 1).collect();
                for p in &perms {
                    for k in 1..=n as usize {
                        let (r, g) = oracle(p, &test, k);
                        assert_eq!(recall_at_k(p, &test, k), r);
                        assert_eq!(ndcg_at_k(p, &test, k), g);
                    }
                }
            }
        }
    }

    #[test]
    fn topk_matches_selection_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let scores: Vec<f64> = (0..5).map(|_| rng.random_range(0..4) as f64 / 2.0).collect();
            let history: Vec<u32> = (0..5).filter(|_| rng.random_bool(0.3)).collect();
            let k = rng.random_range(1..=6);
            assert_eq!(recommend_topk(&scores, &history, k), brute_topk(&scores, &history, k));
        }
    }

    fn toy_split() -> DatasetSplit {
        DatasetSplit {
            train: vec![vec![0, 1], vec![0, 2], vec![0], vec![1, 3]],
            val: vec![vec![], vec![], vec![], vec![]],
            test: vec![vec![2], vec![1], vec![], vec![0, 5]],
            n_items: 6,
            seed: 3,
        }
    }

    #[test]
    fn popularity_follows_hand_count() {
        let split = toy_split();
        assert_eq!(popularity_scores(&split), vec![3.0, 2.0, 1.0, 1.0, 0.0, 0.0]);
        let pop = Popularity::new(&split);
        let m = evaluate(&split, SplitTag::Test, &[1, 2], &pop).unwrap();
        // Users 0, 1 and 3 have test items; user 2 is skipped.
        assert_eq!(m.n_users(), 3);
        // User 0 sees [2, 3], user 1 sees [1, 3], user 3 sees [0, 2].
        assert_eq!(m.recall, vec![(1.0 + 1.0 + 0.5) / 3.0, (1.0 + 1.0 + 0.5) / 3.0]);
    }

    struct Leaky;
    impl Recommender for Leaky {
        fn score_users(&self, users: &[usize], _h: &[Vec<u32>]) -> Result<Vec<Vec<f64>>> {
            Ok(vec![vec![0.0; 6]; users.len()])
        }
    }

    #[test]
    fn violation_is_reported() {
        let err = score_ranking(7, &[4, 1], &[1], &[4], &[2]).unwrap_err();
        assert!(matches!(err, Error::ProtocolViolation { user: 7, item: 1 }));
        // The evaluation path filters history itself, so a flat scorer is legal.
        assert!(evaluate(&toy_split(), SplitTag::Test, &[2], &Leaky).is_ok());
    }

    #[test]
    fn aggregate_mean_and_std() {
        let mk = |r: f64| summarize(&[10], vec![UserMetrics { user: 0, recall: vec![r], ndcg: vec![r] }], 0);
        let s = aggregate(&[mk(0.1), mk(0.3)]).unwrap();
        assert!((s.recall_mean[0] - 0.2).abs() < 1e-15);
        assert!((s.recall_std[0] - 0.02f64.sqrt()).abs() < 1e-15);
        let table = metrics_table(&[("vp".into(), &mk(0.5))]);
        assert!(table.contains("R@10") && table.contains("0.5000"));
    }

    proptest! {
        #[test]
        fn metrics_in_unit_interval(
            ranking in proptest::sample::subsequence((0u32..12).collect::<Vec<_>>(), 0..12).prop_shuffle(),
            test in proptest::sample::subsequence((0u32..12).collect::<Vec<_>>(), 1..12),
            k in 1usize..12,
        ) {
            let r = recall_at_k(&ranking, &test, k);
            let n = ndcg_at_k(&ranking, &test, k);
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
            let full = ranking.iter().take(k.min(test.len())).all(|i| test.contains(i))
                && ranking.len() >= k.min(test.len());
            prop_assert_eq!(full, (n - 1.0).abs() < 1e-12);
        }

        #[test]
        fn monotone_transform_invariance(
            scores in proptest::collection::vec(-5.0f64..5.0, 8),
            history in proptest::sample::subsequence((0u32..8).collect::<Vec<_>>(), 0..4),
            k in 1usize..8,
        ) {
            let transformed: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 3.0).collect();
            prop_assert_eq!(
                recommend_topk(&scores, &history, k),
                recommend_topk(&transformed, &history, k)
            );
        }
    }
}
