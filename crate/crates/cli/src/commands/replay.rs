//! `replay`: re-run the command recorded in a manifest and compare checksums.

use clap::Parser;
use serde::Serialize;
use serde_json::json;

use super::Outcome;
use crate::args::{Cli, Command, ReplayArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::{read_manifest, Artifact};
use crate::Ctx;

#[derive(Serialize)]
struct Check {
    path: std::path::PathBuf,
    expected: String,
    actual: String,
    matches: bool,
}

pub fn run(_ctx: &Ctx, a: &ReplayArgs) -> CliResult<Outcome> {
    let path = std::path::absolute(&a.manifest).map_err(|e| CliError::io(&a.manifest, e))?;
    let recorded = read_manifest(&path)?;
    let cli = Cli::try_parse_from(&recorded.argv)
        .map_err(|e| CliError::Usage(format!("manifest argv does not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage("a replay manifest cannot itself be replayed".into()));
    }
    std::env::set_current_dir(&recorded.cwd).map_err(|e| CliError::io(&recorded.cwd, e))?;
    let inner = Ctx { argv: recorded.argv.clone(), data_dir: recorded.data_dir.clone() };
    log::info!("replaying `{}` in {}", recorded.subcommand, recorded.cwd.display());
    super::run(&inner, &cli.command)?;

    let checks = recorded
        .outputs
        .iter()
        .map(|o| {
            let now = Artifact::of(&o.path)?;
            Ok(Check { path: o.path.clone(), matches: now.sha256 == o.sha256, expected: o.sha256.clone(), actual: now.sha256 })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mismatched: Vec<String> = checks.iter().filter(|c| !c.matches).map(|c| c.path.display().to_string()).collect();
    if !mismatched.is_empty() {
        return Err(CliError::Failed(format!("replay differs from the recorded run: {}", mismatched.join(", "))));
    }
    Ok(Outcome {
        summary: json!({ "subcommand": recorded.subcommand, "reproduced": true, "outputs": checks }),
        human: format!("`{}` reproduced {} outputs byte for byte", recorded.subcommand, checks.len()),
    })
}
