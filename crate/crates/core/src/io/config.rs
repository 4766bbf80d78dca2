use std::collections::BTreeMap;

use super::IoError;

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// keys may repeat only once each.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, IoError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| IoError::Config(format!("line {}: expected key=value", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(IoError::Config(format!("line {}: empty key", n + 1)));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(IoError::Config(format!("line {}: duplicate key {key}", n + 1)));
        }
    }
    Ok(out)
}
