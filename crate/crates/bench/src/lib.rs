//! Inputs shared by the benchmarks.

use blanc_core::model::{random_encoded_example, EncodedExample, EncoderConfig, QAModel};
use blanc_core::{AnswerSpan, SeededRng, SoftLabelConfig};

/// A normalized random distribution over `length` positions.
pub fn random_distribution(length: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::new(seed);
    let w: Vec<f64> = (0..length).map(|_| rng.uniform() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Untrained model at `hidden` width with inputs of up to `max_len` tokens.
pub fn model(hidden: usize, layers: usize, max_len: usize) -> QAModel {
    QAModel::new(EncoderConfig {
        vocab_size: 200,
        hidden,
        layers,
        heads: 4,
        ffn: 4 * hidden,
        max_len,
        dropout: 0.0,
        seed: 0,
        ..EncoderConfig::default()
    })
    .expect("valid benchmark config")
}

/// Random example filling `length` tokens, with a 12-token question.
pub fn example(length: usize) -> EncodedExample {
    let span = AnswerSpan { start: length / 3, end: length / 3 + 2 };
    random_encoded_example(200, length, 12, span, SoftLabelConfig::SHORT_PASSAGE, 1).expect("valid benchmark example")
}
