use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Context;
use lqsynth_core::io::parse_config;

/// Command line after splicing in config-file entries.
pub struct Expanded {
    pub argv: Vec<OsString>,
    pub config_file: Option<PathBuf>,
    /// The command line as typed, without the config splice.
    pub typed: Vec<String>,
}

/// Removes `--config FILE` and inserts each `key = value` of FILE as
/// `--key=value` right after the subcommand. Flags typed later on the
/// command line win because every subcommand lets an argument override
/// itself.
pub fn expand_argv(raw: Vec<OsString>) -> anyhow::Result<Expanded> {
    let typed = raw.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut argv = Vec::with_capacity(raw.len());
    let mut config_file = None;
    let mut it = raw.into_iter();
    argv.extend(it.next());
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            let v = it.next().context("--config needs a file")?;
            config_file = Some(PathBuf::from(v));
        } else if let Some(v) = s.strip_prefix("--config=") {
            config_file = Some(PathBuf::from(v));
        } else {
            argv.push(arg);
        }
    }
    if let Some(path) = &config_file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let entries = parse_config(&text)?;
        let sub = argv
            .iter()
            .skip(1)
            .position(|a| !a.to_string_lossy().starts_with('-'))
            .map(|p| p + 2);
        if let Some(at) = sub {
            let injected: Vec<OsString> = entries
                .iter()
                .map(|(k, v)| OsString::from(format!("--{k}={v}")))
                .collect();
            argv.splice(at..at, injected);
        }
    }
    Ok(Expanded {
        argv,
        config_file,
        typed,
    })
}
