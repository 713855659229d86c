//! Plain-text `key = value` run configuration.
//!
//! One setting per line; `#` starts a comment; blank lines are ignored.
//! Repeated keys are rejected so a config file stays an unambiguous
//! record of a run. Command-line flags override file values — that merge
//! happens in the CLI layer, which reads this map for anything the flags
//! left unset.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

/// Parsed config file: a key → value map.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

/// Read and parse a config file.
pub fn parse_config_file(path: &Path) -> Result<ConfigMap> {
    let text = std::fs::read_to_string(path)?;
    parse_config_text(&text)
}

/// Parse config-file syntax from a string.
pub fn parse_config_text(text: &str) -> Result<ConfigMap> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "config line {}: expected 'key = value', got '{}'",
                i + 1,
                raw.trim()
            )));
        };
        let key = k.trim().to_string();
        let value = v.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("config line {}: empty key", i + 1)));
        }
        if entries.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!(
                "config line {}: key '{key}' given twice",
                i + 1
            )));
        }
    }
    Ok(ConfigMap { entries })
}

impl ConfigMap {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    /// Typed lookup. A present-but-unparsable value is a config error
    /// naming the key.
    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("config key '{key}': cannot parse '{raw}'"))
            }),
        }
    }

    /// Reject any key outside `known` — catches typos that would
    /// otherwise silently fall back to defaults.
    pub fn ensure_known(&self, known: &[&str]) -> Result<()> {
        for k in self.entries.keys() {
            if !known.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown config key '{k}'")));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parse a comma-separated list of reals, e.g. `0.1, 0.2, 0.3`.
pub fn parse_real_list(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|piece| {
            let piece = piece.trim();
            piece
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse '{piece}' as a number")))
        })
        .collect()
}

/// Parse one `lo:hi` interval.
pub fn parse_interval(raw: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("cannot parse '{raw}' as an interval 'lo:hi'"));
    let (a, b) = raw.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::Config(format!(
            "interval '{raw}' is not a valid range (need finite lo < hi)"
        )));
    }
    Ok((lo, hi))
}

/// Parse a comma-separated list of `lo:hi` intervals.
pub fn parse_interval_list(raw: &str) -> Result<Vec<(f64, f64)>> {
    raw.split(',').map(|p| parse_interval(p.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_blanks() {
        let cfg = parse_config_text(
            "# run setup\nn = 400\nreps=500   # overnight budget\n\nnorming = sample-mean\nbandwidth = 0.18, 0.15, 0.13\n",
        )
        .unwrap();
        assert_eq!(cfg.parsed::<usize>("n").unwrap(), Some(400));
        assert_eq!(cfg.parsed::<usize>("reps").unwrap(), Some(500));
        assert_eq!(cfg.get("norming"), Some("sample-mean"));
        assert_eq!(
            parse_real_list(cfg.get("bandwidth").unwrap()).unwrap(),
            vec![0.18, 0.15, 0.13]
        );
        assert_eq!(cfg.parsed::<usize>("absent").unwrap(), None);
    }

    #[test]
    fn rejects_malformed_lines_and_duplicates() {
        let err = parse_config_text("n 400\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "message was: {err}");
        let err = parse_config_text("n = 1\nn = 2\n").unwrap_err().to_string();
        assert!(err.contains("twice"), "message was: {err}");
        let err = parse_config_text(" = 3\n").unwrap_err().to_string();
        assert!(err.contains("empty key"), "message was: {err}");
        // a present but garbled value errors on typed access, naming the key
        let cfg = parse_config_text("reps = soon\n").unwrap();
        let err = cfg.parsed::<usize>("reps").unwrap_err().to_string();
        assert!(err.contains("reps") && err.contains("soon"));
    }

    #[test]
    fn unknown_keys_are_flagged() {
        let cfg = parse_config_text("n = 400\nrepz = 500\n").unwrap();
        let err = cfg.ensure_known(&["n", "reps"]).unwrap_err().to_string();
        assert!(err.contains("repz"), "message was: {err}");
        assert!(cfg.ensure_known(&["n", "repz"]).is_ok());
    }

    #[test]
    fn interval_grammar() {
        assert_eq!(parse_interval("0:1").unwrap(), (0.0, 1.0));
        assert_eq!(parse_interval(" -1.5 : 2.5 ").unwrap(), (-1.5, 2.5));
        assert_eq!(
            parse_interval_list("0:1, 0:1, -2:3").unwrap(),
            vec![(0.0, 1.0), (0.0, 1.0), (-2.0, 3.0)]
        );
        assert!(parse_interval("1:0").is_err());
        assert!(parse_interval("0-1").is_err());
        assert!(parse_interval("0:nope").is_err());
        assert!(parse_real_list("0.1,,0.3").is_err());
    }
}
