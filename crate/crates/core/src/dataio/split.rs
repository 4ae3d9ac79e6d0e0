use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::InteractionMatrix;
use crate::error::{Error, Result};

/// Users with fewer interactions than this keep everything in train.
pub const MIN_SPLIT_INTERACTIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            other => Err(Error::Decode(format!("unknown split tag `{other}`"))),
        }
    }
}

/// Per-user disjoint train/validation/test item sets (each sorted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<Vec<u32>>,
    pub val: Vec<Vec<u32>>,
    pub test: Vec<Vec<u32>>,
    pub n_items: usize,
    pub seed: u64,
}

impl DatasetSplit {
    /// Per-user uniform random partition with the given `(train, val, test)` ratios.
    pub fn new(m: &InteractionMatrix, ratios: (f64, f64, f64), seed: u64) -> Result<Self> {
        let (r_train, r_val, r_test) = ratios;
        if !(r_train > 0.0 && r_val > 0.0 && r_test > 0.0)
            || ((r_train + r_val + r_test) - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidParameter(format!(
                "split ratios must be positive and sum to 1, got {ratios:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = m.n_users();
        let (mut train, mut val, mut test) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for row in m.rows() {
            let len = row.len();
            if len < MIN_SPLIT_INTERACTIONS {
                train.push(row.clone());
                val.push(Vec::new());
                test.push(Vec::new());
                continue;
            }
            let mut items = row.clone();
            items.shuffle(&mut rng);
            let n_train = ((r_train * len as f64).round() as usize).min(len);
            let n_val = ((r_val * len as f64).round() as usize).min(len - n_train);
            let mut tr = items[..n_train].to_vec();
            let mut va = items[n_train..n_train + n_val].to_vec();
            let mut te = items[n_train + n_val..].to_vec();
            tr.sort_unstable();
            va.sort_unstable();
            te.sort_unstable();
            train.push(tr);
            val.push(va);
            test.push(te);
        }
        Ok(Self {
            train,
            val,
            test,
            n_items: m.n_items(),
            seed,
        })
    }

    pub fn n_users(&self) -> usize {
        self.train.len()
    }

    /// Training interactions as a matrix, keeping the ID maps of `full`.
    pub fn train_matrix(&self, full: &InteractionMatrix) -> Result<InteractionMatrix> {
        InteractionMatrix::with_id_maps(
            self.train.clone(),
            full.users().clone(),
            full.items().clone(),
        )
    }

    /// Content hash of the training interactions alone.
    pub fn train_hash(&self) -> Result<[u8; 32]> {
        Ok(InteractionMatrix::from_rows(self.train.clone(), self.n_items)?.content_hash())
    }

    /// Items a ranking for `user` must not contain at the given evaluation stage.
    pub fn excluded(&self, user: usize, stage: SplitTag) -> Vec<u32> {
        match stage {
            SplitTag::Test => {
                let mut ex = self.train[user].clone();
                ex.extend_from_slice(&self.val[user]);
                ex.sort_unstable();
                ex
            }
            _ => self.train[user].clone(),
        }
    }

    /// Held-out items for a stage (`Train` returns the training set itself).
    pub fn held_out(&self, stage: SplitTag) -> &[Vec<u32>] {
        match stage {
            SplitTag::Train => &self.train,
            SplitTag::Val => &self.val,
            SplitTag::Test => &self.test,
        }
    }

    /// Checks that the split partitions exactly the interactions of `m`.
    pub fn covers(&self, m: &InteractionMatrix) -> bool {
        if self.n_users() != m.n_users() || self.n_items != m.n_items() {
            return false;
        }
        (0..self.n_users()).all(|u| {
            let mut all: Vec<u32> = self.train[u]
                .iter()
                .chain(&self.val[u])
                .chain(&self.test[u])
                .copied()
                .collect();
            all.sort_unstable();
            all == m.row(u)
        })
    }

    /// Rebuilds a split from `(user, item, tag)` triples.
    pub fn from_triples(
        n_users: usize,
        n_items: usize,
        triples: &[(u32, u32, SplitTag)],
        seed: u64,
    ) -> Result<Self> {
        let mut split = Self {
            train: vec![Vec::new(); n_users],
            val: vec![Vec::new(); n_users],
            test: vec![Vec::new(); n_users],
            n_items,
            seed,
        };
        for &(u, i, tag) in triples {
            if u as usize >= n_users || i as usize >= n_items {
                return Err(Error::Decode(format!(
                    "triple ({u}, {i}) outside {n_users}x{n_items}"
                )));
            }
            let bucket = match tag {
                SplitTag::Train => &mut split.train,
                SplitTag::Val => &mut split.val,
                SplitTag::Test => &mut split.test,
            };
            bucket[u as usize].push(i);
        }
        for u in 0..n_users {
            let mut seen: Vec<u32> = Vec::new();
            for set in [&mut split.train[u], &mut split.val[u], &mut split.test[u]] {
                set.sort_unstable();
                seen.extend_from_slice(set);
            }
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Decode(format!("user {u} has a repeated item")));
            }
        }
        Ok(split)
    }
}

/// Writes the split as `user_idx item_idx split_tag` lines, preceded by a
/// `# sdiff-split users=<n> items=<m> seed=<s>` header.
pub fn write_split_manifest<W: Write>(split: &DatasetSplit, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "# sdiff-split users={} items={} seed={}",
        split.n_users(),
        split.n_items,
        split.seed
    )?;
    for u in 0..split.n_users() {
        for (tag, set) in [
            (SplitTag::Train, &split.train[u]),
            (SplitTag::Val, &split.val[u]),
            (SplitTag::Test, &split.test[u]),
        ] {
            for &i in set {
                writeln!(out, "{u} {i} {tag}")?;
            }
        }
    }
    out.flush()
}

/// Parses a split manifest written by [`write_split_manifest`].
pub fn parse_split_manifest<R: BufRead>(reader: R) -> Result<DatasetSplit> {
    let mut header: Option<(usize, usize, u64)> = None;
    let mut triples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<split manifest>", e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if lineno == 0 {
                header = Some(parse_header(rest).ok_or_else(|| Error::Malformed {
                    line: 1,
                    reason: "bad split manifest header".into(),
                })?);
            }
            continue;
        }
        let malformed = |reason: &str| Error::Malformed {
            line: lineno + 1,
            reason: reason.into(),
        };
        let mut parts = line.split_ascii_whitespace();
        let (Some(u), Some(i), Some(tag), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(malformed("expected `user_idx item_idx split_tag`"));
        };
        let u: u32 = u.parse().map_err(|_| malformed("bad user index"))?;
        let i: u32 = i.parse().map_err(|_| malformed("bad item index"))?;
        let tag: SplitTag = tag.parse().map_err(|_| malformed("bad split tag"))?;
        triples.push((u, i, tag));
    }
    let (n_users, n_items, seed) = header.ok_or_else(|| Error::Decode("missing header".into()))?;
    DatasetSplit::from_triples(n_users, n_items, &triples, seed)
}

fn parse_header(rest: &str) -> Option<(usize, usize, u64)> {
    let mut parts = rest.split_ascii_whitespace();
    if parts.next()? != "sdiff-split" {
        return None;
    }
    let mut get = |key: &str| -> Option<&str> { parts.next()?.strip_prefix(key) };
    let users = get("users=")?.parse().ok()?;
    let items = get("items=")?.parse().ok()?;
    let seed = get("seed=")?.parse().ok()?;
    // Guard against absurd allocations from hostile headers.
    if users > (1 << 28) || items > u32::MAX as usize {
        return None;
    }
    Some((users, items, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: Vec<Vec<u32>>, n_items: usize) -> InteractionMatrix {
        InteractionMatrix::from_rows(rows, n_items).unwrap()
    }

    #[test]
    fn ten_items_split_seven_one_two() {
        let m = matrix(vec![(0..10).collect()], 10);
        let s = DatasetSplit::new(&m, (0.7, 0.1, 0.2), 3).unwrap();
        assert_eq!(
            (s.train[0].len(), s.val[0].len(), s.test[0].len()),
            (7, 1, 2)
        );
        assert!(s.covers(&m));
    }

    #[test]
    fn small_users_stay_in_train() {
        let m = matrix(vec![vec![4], vec![1, 2], vec![0, 1, 2]], 5);
        let s = DatasetSplit::new(&m, (0.7, 0.1, 0.2), 0).unwrap();
        assert_eq!(s.train[0], vec![4]);
        assert!(s.val[0].is_empty() && s.test[0].is_empty());
        assert_eq!(s.train[1], vec![1, 2]);
        assert_eq!(s.train[2].len() + s.val[2].len() + s.test[2].len(), 3);
    }

    #[test]
    fn same_seed_same_split() {
        let m = matrix((0..20).map(|u| (0..(5 + u % 7)).collect()).collect(), 12);
        let a = DatasetSplit::new(&m, (0.7, 0.1, 0.2), 42).unwrap();
        let b = DatasetSplit::new(&m, (0.7, 0.1, 0.2), 42).unwrap();
        let c = DatasetSplit::new(&m, (0.7, 0.1, 0.2), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_ratios_rejected() {
        let m = matrix(vec![vec![0]], 1);
        assert!(DatasetSplit::new(&m, (0.7, 0.1, 0.1), 0).is_err());
        assert!(DatasetSplit::new(&m, (0.8, 0.0, 0.2), 0).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let m = matrix((0..6).map(|u| (u..u + 6).collect()).collect(), 12);
        let s = DatasetSplit::new(&m, (0.7, 0.1, 0.2), 9).unwrap();
        let mut buf = Vec::new();
        write_split_manifest(&s, &mut buf).unwrap();
        let back = parse_split_manifest(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn manifest_rejects_garbage() {
        assert!(parse_split_manifest(&b"0 1 train\n"[..]).is_err());
        let hdr = "# sdiff-split users=2 items=2 seed=0\n";
        assert!(parse_split_manifest(format!("{hdr}0 1 bogus\n").as_bytes()).is_err());
        assert!(parse_split_manifest(format!("{hdr}5 1 train\n").as_bytes()).is_err());
        assert!(parse_split_manifest(format!("{hdr}0 1 train\n0 1 test\n").as_bytes()).is_err());
        assert!(parse_split_manifest(format!("{hdr}0 1 train extra\n").as_bytes()).is_err());
    }

    #[test]
    fn test_stage_excludes_val_too() {
        let m = matrix(vec![(0..10).collect()], 10);
        let s = DatasetSplit::new(&m, (0.7, 0.1, 0.2), 1).unwrap();
        assert_eq!(s.excluded(0, SplitTag::Val), s.train[0]);
        assert_eq!(s.excluded(0, SplitTag::Test).len(), 8);
    }

    proptest! {
        #[test]
        fn partition_covers_and_is_disjoint(
            rows in proptest::collection::vec(proptest::collection::btree_set(0u32..40, 0..30), 1..25),
            seed in any::<u64>(),
        ) {
            let rows: Vec<Vec<u32>> = rows.into_iter().map(|s| s.into_iter().collect()).collect();
            let m = matrix(rows, 40);
            let s = DatasetSplit::new(&m, (0.7, 0.1, 0.2), seed).unwrap();
            prop_assert!(s.covers(&m));
            let (mut tr, mut va, mut te) = (0usize, 0usize, 0usize);
            for u in 0..m.n_users() {
                let len = m.row(u).len();
                tr += s.train[u].len();
                va += s.val[u].len();
                te += s.test[u].len();
                if len >= MIN_SPLIT_INTERACTIONS {
                    // per-user rounding: each part within one item of its ratio
                    prop_assert!((s.train[u].len() as f64 - 0.7 * len as f64).abs() <= 0.5 + 1e-9);
                    prop_assert!((s.val[u].len() as f64 - 0.1 * len as f64).abs() <= 1.0 + 1e-9);
                }
            }
            prop_assert_eq!(tr + va + te, m.nnz());
        }
    }
}
