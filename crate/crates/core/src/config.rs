//! `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored; a `#` after the value
//! starts a trailing comment. Keys are case-sensitive, `_` and `-` are
//! interchangeable, and a repeated key is an error.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-")
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Malformed {
            line: line_no,
            reason: "expected `key = value`".into(),
        })?;
        let key = normalize_key(key);
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(Error::Malformed {
                line: line_no,
                reason: format!("invalid key `{key}`"),
            });
        }
        let value = value.trim();
        if value.is_empty() {
            return Err(Error::Malformed {
                line: line_no,
                reason: format!("empty value for `{key}`"),
            });
        }
        if out.insert(key.clone(), value.to_string()).is_some() {
            return Err(Error::Malformed {
                line: line_no,
                reason: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_comments_and_normalizes_keys() {
        let cfg = parse_config("# run\nalpha_min = 0.1\n\nsigma-max=0.4 # tight\n").unwrap();
        assert_eq!(cfg.get("alpha-min").map(String::as_str), Some("0.1"));
        assert_eq!(cfg.get("sigma-max").map(String::as_str), Some("0.4"));
        assert_eq!(cfg.len(), 2);
    }

    #[test]
    fn rejects_bad_lines() {
        for bad in ["lr", "lr =", "= 3", "a b = 1", "lr = 1\nlr = 2", "lr_x = 1\nlr-x = 2"] {
            assert!(matches!(parse_config(bad), Err(Error::Malformed { .. })), "{bad:?}");
        }
        let err = parse_config("a = 1\nb\n").unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }));
    }

    proptest! {
        #[test]
        fn never_panics(text in "\\PC{0,200}") {
            let _ = parse_config(&text);
        }

        #[test]
        fn round_trips_generated_files(
            entries in proptest::collection::btree_map("[a-z][a-z0-9-]{0,8}", "[A-Za-z0-9.,]{1,8}", 0..8)
        ) {
            let text: String = entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
            prop_assert_eq!(parse_config(&text).unwrap(), entries);
        }
    }
}
