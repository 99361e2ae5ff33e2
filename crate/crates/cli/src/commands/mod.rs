mod data;
mod eval;
mod gradcheck;
mod hotpot;
mod replay;
mod sweep;
mod train;

use crate::args::Command;
use crate::error::CliResult;
use crate::Ctx;

/// What a subcommand reports: a JSON summary for `--json` and a short
/// human-readable line otherwise.
pub struct Outcome {
    pub summary: serde_json::Value,
    pub human: String,
}

pub fn run(ctx: &Ctx, command: &Command) -> CliResult<Outcome> {
    match command {
        Command::GenSynth(a) => data::gen_synth(ctx, a),
        Command::Label(a) => data::label(ctx, a),
        Command::Train(a) => train::run(ctx, a),
        Command::Eval(a) => eval::run(ctx, a),
        Command::CurateHotpot(a) => hotpot::curate(ctx, a),
        Command::SfEval(a) => hotpot::sf_eval(ctx, a),
        Command::SweepLambda(a) => sweep::run(ctx, a),
        Command::Gradcheck(a) => gradcheck::run(ctx, a),
        Command::Replay(a) => replay::run(ctx, a),
    }
}
