use std::path::Path;

use serde::Serialize;

use crate::config::Expanded;

pub const VERSION: &str = env!("LQSYNTH_VERSION");

#[derive(Serialize)]
struct RunRecord<'a, A: Serialize, O: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    argv: &'a [String],
    config_file: Option<String>,
    /// Fully resolved arguments, defaults and config entries included.
    args: &'a A,
    outputs: O,
}

/// Writes `run_<command>.json` into `dir`.
pub fn write<A: Serialize, O: Serialize>(
    dir: &Path,
    command: &str,
    expanded: &Expanded,
    args: &A,
    outputs: O,
) -> Result<(), lqsynth_core::io::IoError> {
    let rec = RunRecord {
        tool: "lqsynth",
        version: VERSION,
        command,
        argv: &expanded.typed,
        config_file: expanded
            .config_file
            .as_ref()
            .map(|p| p.display().to_string()),
        args,
        outputs,
    };
    lqsynth_core::io::write_json(&dir.join(format!("run_{command}.json")), &rec)
}
