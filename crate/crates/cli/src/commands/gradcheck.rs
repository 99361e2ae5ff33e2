//! `gradcheck`: finite-difference check of the full model on random inputs.

use blanc_core::model::{gradcheck_model, random_encoded_example, ContextReduction, EncoderConfig, QAModel};
use blanc_core::numerics::{GradCheckReport, Stencil};
use blanc_core::{AnswerSpan, SoftLabelConfig};
use serde::Serialize;
use serde_json::json;

use super::Outcome;
use crate::args::GradcheckArgs;
use crate::error::{CliError, CliResult};
use crate::io::{json_bytes, prepare_output};
use crate::manifest::{manifest_path_for, write_atomic, Recorder};
use crate::Ctx;

#[derive(Serialize)]
struct LambdaRun {
    lambda: f64,
    passed: bool,
    max_rel_error: f64,
    #[serde(flatten)]
    report: GradCheckReport,
}

#[derive(Serialize)]
struct Report<'a> {
    encoder: &'a EncoderConfig,
    examples: usize,
    context_reduction: ContextReduction,
    corrupted: bool,
    passed: bool,
    max_rel_error: f64,
    runs: Vec<LambdaRun>,
}

pub fn run(ctx: &Ctx, a: &GradcheckArgs) -> CliResult<Outcome> {
    let mut rec = Recorder::new(ctx, "gradcheck");
    if let Some(bad) = a.lambdas.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(CliError::Usage(format!("lambda {bad} outside [0, 1]")));
    }
    if !(a.epsilon > 0.0) || !(a.tolerance > 0.0) {
        return Err(CliError::Usage("--epsilon and --tolerance must be positive".into()));
    }
    if a.examples == 0 {
        return Err(CliError::Usage("--examples must be at least 1".into()));
    }
    prepare_output(&a.report)?;
    let encoder = EncoderConfig {
        vocab_size: a.vocab_size,
        hidden: a.hidden,
        layers: a.layers,
        heads: a.heads,
        ffn: a.ffn,
        max_len: a.tokens,
        dropout: 0.0,
        context_softmax: a.softmax_domain.into(),
        seed: a.seed,
    };
    let model = QAModel::new(encoder.clone())?;
    let passage_len = a.tokens.saturating_sub(a.question_len);
    let start = passage_len / 3;
    let span = AnswerSpan { start, end: (start + 1).min(passage_len.saturating_sub(1)) };
    let examples = (0..a.examples as u64)
        .map(|k| random_encoded_example(a.vocab_size, a.tokens, a.question_len, span, SoftLabelConfig::SHORT_PASSAGE, a.seed ^ (k << 32)))
        .collect::<Result<Vec<_>, _>>()?;
    let reduction: ContextReduction = a.context_reduction.into();
    let stencil: Stencil = a.stencil.into();

    let mut runs = Vec::with_capacity(a.lambdas.len());
    for &lambda in &a.lambdas {
        let (_, mut grads) = model.batch_gradients(&examples, lambda, reduction)?;
        if let Some(offset) = a.corrupt_grad {
            grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v += offset));
        }
        let report = gradcheck_model(&model, &examples, lambda, reduction, &grads, &a.params, a.epsilon, a.tolerance, stencil)?;
        runs.push(LambdaRun { lambda, passed: report.passed(), max_rel_error: report.max_rel_error(), report });
    }
    let passed = runs.iter().all(|r| r.passed);
    let max_rel_error = runs.iter().fold(0.0, |m: f64, r| m.max(r.max_rel_error));
    let report = Report {
        encoder: &encoder,
        examples: a.examples,
        context_reduction: reduction,
        corrupted: a.corrupt_grad.is_some(),
        passed,
        max_rel_error,
        runs,
    };
    write_atomic(&a.report, &json_bytes(&report)?)?;
    rec.config(&json!({
        "encoder": encoder,
        "question_len": a.question_len,
        "examples": a.examples,
        "lambdas": a.lambdas,
        "epsilon": a.epsilon,
        "tolerance": a.tolerance,
        "stencil": stencil,
        "context_reduction": reduction,
        "params": a.params,
        "corrupt_grad": a.corrupt_grad,
    }))?;
    rec.seeds(&[a.seed]);
    rec.output(&a.report)?;
    rec.write(&manifest_path_for(&a.report))?;
    let checked: usize = report.runs.first().map_or(0, |r| r.report.entries.len());
    if !passed {
        let worst: Vec<String> = report
            .runs
            .iter()
            .flat_map(|r| r.report.failures().map(move |e| format!("{} at lambda {} ({:.3e})", e.name, r.lambda, e.max_rel_error)))
            .take(5)
            .collect();
        return Err(CliError::Failed(format!(
            "gradient check failed: max relative error {max_rel_error:.3e} > {}; worst: {}",
            a.tolerance,
            worst.join(", ")
        )));
    }
    Ok(Outcome {
        summary: json!({ "passed": true, "max_rel_error": max_rel_error, "parameters": checked, "report": a.report }),
        human: format!(
            "gradient check passed: {checked} parameters, {} lambda values, max relative error {max_rel_error:.3e}",
            report.runs.len()
        ),
    })
}
