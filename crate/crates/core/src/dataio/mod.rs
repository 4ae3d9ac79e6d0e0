//! Implicit-feedback interaction data: loading, splitting and condition masking.
//!
//! Input files hold one interaction per line, `user<sep>item[<sep>rating[<sep>timestamp]]`,
//! with `sep` a tab or a comma. Only the two ID fields are read. Repeated
//! `(user, item)` pairs collapse into one binary interaction, and dense indices
//! are handed out in order of first appearance.

mod mask;
mod split;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use mask::mask_condition;
pub use split::{parse_split_manifest, write_split_manifest, DatasetSplit, SplitTag};

/// Field separator of an interaction file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Tsv,
    Csv,
}

impl Format {
    /// `.csv` means comma separated, everything else tab separated.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Tsv,
        }
    }

    fn separator(self) -> char {
        match self {
            Format::Tsv => '\t',
            Format::Csv => ',',
        }
    }
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Format::Tsv => "tsv",
            Format::Csv => "csv",
        })
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" | "tab" => Ok(Format::Tsv),
            "csv" | "comma" => Ok(Format::Csv),
            other => Err(Error::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

/// Bijection between external string IDs and dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    external: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dense indices `0..n` named by their decimal string.
    pub fn identity(n: usize) -> Self {
        let mut map = Self::new();
        for i in 0..n {
            map.intern(&i.to_string());
        }
        map
    }

    pub fn intern(&mut self, id: &str) -> u32 {
        if let Some(&idx) = self.index.get(id) {
            return idx;
        }
        let idx = self.external.len() as u32;
        self.external.push(id.to_owned());
        self.index.insert(id.to_owned(), idx);
        idx
    }

    pub fn get(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn external(&self, idx: u32) -> Option<&str> {
        self.external.get(idx as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }
}

/// Sparse binary user x item matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    rows: Vec<Vec<u32>>,
    n_items: usize,
    user_degrees: Vec<f64>,
    item_degrees: Vec<f64>,
    users: IdMap,
    items: IdMap,
}

impl InteractionMatrix {
    /// Builds a matrix from per-user item lists. Rows are sorted and deduplicated.
    pub fn from_rows(mut rows: Vec<Vec<u32>>, n_items: usize) -> Result<Self> {
        let users = IdMap::identity(rows.len());
        let items = IdMap::identity(n_items);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                if last as usize >= n_items {
                    return Err(Error::DimensionMismatch {
                        expected: n_items,
                        got: last as usize + 1,
                    });
                }
            }
        }
        Ok(Self::assemble(rows, users, items))
    }

    /// Same as [`from_rows`](Self::from_rows) but keeps existing ID maps.
    pub fn with_id_maps(mut rows: Vec<Vec<u32>>, users: IdMap, items: IdMap) -> Result<Self> {
        check_len(users.len(), rows.len())?;
        let n_items = items.len();
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            if row.last().is_some_and(|&i| i as usize >= n_items) {
                return Err(Error::InvalidParameter(format!(
                    "item index out of range for {n_items} items"
                )));
            }
        }
        Ok(Self::assemble(rows, users, items))
    }

    fn assemble(rows: Vec<Vec<u32>>, users: IdMap, items: IdMap) -> Self {
        let n_items = items.len();
        let user_degrees = rows.iter().map(|r| r.len() as f64).collect();
        let mut item_degrees = vec![0.0; n_items];
        for &i in rows.iter().flatten() {
            item_degrees[i as usize] += 1.0;
        }
        Self {
            rows,
            n_items,
            user_degrees,
            item_degrees,
            users,
            items,
        }
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, user: usize) -> &[u32] {
        &self.rows[user]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn user_degrees(&self) -> &[f64] {
        &self.user_degrees
    }

    pub fn item_degrees(&self) -> &[f64] {
        &self.item_degrees
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    pub fn contains(&self, user: usize, item: u32) -> bool {
        self.rows[user].binary_search(&item).is_ok()
    }

    /// SHA-256 over the dimensions and the sorted rows; ID strings are not hashed.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"sdiff-interactions-v1");
        hasher.update((self.n_users() as u64).to_le_bytes());
        hasher.update((self.n_items as u64).to_le_bytes());
        for row in &self.rows {
            hasher.update((row.len() as u64).to_le_bytes());
            for &i in row {
                hasher.update(i.to_le_bytes());
            }
        }
        hasher.finalize().into()
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    crate::error::check_dim(expected, got)
}

/// SHA-256 of raw bytes, for artifact fingerprints.
pub fn bytes_hash(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Lowercase hex rendering of a content hash.
pub fn hash_hex(hash: &[u8; 32]) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Counts reported while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadStats {
    pub records: usize,
    pub duplicates: usize,
    pub skipped_header: bool,
}

/// Loads an interaction file; `format` defaults to the one implied by the extension.
pub fn load_interactions(path: &Path, format: Option<Format>) -> Result<InteractionMatrix> {
    load_interactions_with_stats(path, format).map(|(m, _)| m)
}

pub fn load_interactions_with_stats(
    path: &Path,
    format: Option<Format>,
) -> Result<(InteractionMatrix, LoadStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let format = format.unwrap_or_else(|| Format::from_path(path));
    parse_interactions(BufReader::new(file), format).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses interaction records from any reader.
///
/// The first line is a header when its user field is not numeric while some
/// later record's user field is. Blank lines and `#` lines are ignored.
pub fn parse_interactions<R: BufRead>(
    reader: R,
    format: Format,
) -> Result<(InteractionMatrix, LoadStats)> {
    let sep = format.separator();
    let mut records: Vec<(String, String)> = Vec::new();
    let mut first_line_candidate = false;
    let mut later_numeric = false;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split(sep).map(str::trim);
        let user = fields.next().unwrap_or("");
        let numeric = user.parse::<f64>().is_ok();
        let item = fields.next();
        if lineno == 0 && !numeric {
            first_line_candidate = true;
            records.push((user.to_owned(), item.unwrap_or("").to_owned()));
            continue;
        }
        later_numeric |= numeric;
        let item = item.ok_or_else(|| Error::Malformed {
            line: lineno + 1,
            reason: format!("expected at least 2 fields separated by {sep:?}"),
        })?;
        if user.is_empty() || item.is_empty() {
            return Err(Error::Malformed {
                line: lineno + 1,
                reason: "empty ID field".into(),
            });
        }
        records.push((user.to_owned(), item.to_owned()));
    }

    let mut stats = LoadStats::default();
    if first_line_candidate {
        if later_numeric {
            records.remove(0);
            stats.skipped_header = true;
        } else if records[0].0.is_empty() || records[0].1.is_empty() {
            return Err(Error::Malformed {
                line: 1,
                reason: "expected at least 2 non-empty fields".into(),
            });
        }
    }
    if records.is_empty() {
        return Err(Error::NoInteractions);
    }

    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut rows: Vec<Vec<u32>> = Vec::new();
    for (user, item) in &records {
        let u = users.intern(user) as usize;
        let i = items.intern(item);
        if u == rows.len() {
            rows.push(Vec::new());
        }
        rows[u].push(i);
    }
    stats.records = records.len();
    for row in &mut rows {
        let before = row.len();
        row.sort_unstable();
        row.dedup();
        stats.duplicates += before - row.len();
    }
    Ok((InteractionMatrix::assemble(rows, users, items), stats))
}

/// Parses a user-ID list: one external ID per line, `#` comments and blank
/// lines ignored. Repeated IDs are rejected.
pub fn parse_user_list(text: &str) -> Result<Vec<String>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.split_whitespace().nth(1).is_some() {
            return Err(Error::Malformed {
                line: idx + 1,
                reason: "expected a single user ID".into(),
            });
        }
        if !seen.insert(line) {
            return Err(Error::Malformed {
                line: idx + 1,
                reason: format!("repeated user `{line}`"),
            });
        }
        out.push(line.to_string());
    }
    Ok(out)
}
