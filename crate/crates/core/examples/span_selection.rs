//! Span probabilities, best-span selection, length normalization, the
//! entity lexicon boost, and no-span abstention on an untrained model.

use finex::dataset::Vocab;
use finex::inference::{length_norm, predict_span, select_span, span_probs, Lexicon, SpanOptions};
use finex::model::{FinExModel, ModelConfig};

fn main() -> finex::Result<()> {
    let (ps, pe) = ([0.1, 0.6, 0.3], [0.2, 0.3, 0.5]);
    println!("select_span {:?}", select_span(&ps, &pe, None));
    let (ps2, pe2) = span_probs(&[0.0, 2.0, 1.0], &[1.0, 0.0, 3.0]);
    println!("from logits: {:?}", select_span(&ps2, &pe2, None));

    for len in [4, 16, 64] {
        println!("length_norm({len:>2}, 0.1) = {:.4}", length_norm(len, 0.1));
    }
    // Character lengths per word: a long final word makes (1, 2) lose to (1, 1).
    let lengths = [5usize, 4, 60];
    let norm = |i: usize, j: usize| length_norm(lengths[i..=j].iter().sum(), 0.5);
    println!("with gamma 0.5: {:?}", select_span(&ps, &pe, Some(&norm)));

    let text = "i was charged a late fee on my visa card";
    let vocab = Vocab::build([text]);
    let model = FinExModel::new(ModelConfig::desk(vocab.len()), vocab, 11)?;
    let plain = predict_span(&model, text, &SpanOptions { tau: 1.0, ..SpanOptions::default() })?;
    println!("untrained, gate off: {:?} p={:.4}", plain.text, plain.joint_prob);
    let boosted = SpanOptions {
        tau: 1.0,
        gamma: Some(0.1),
        lexicon: Some(Lexicon::new(["late fee", "visa"])),
        ..SpanOptions::default()
    };
    let p = predict_span(&model, text, &boosted)?;
    println!("with lexicon + length norm: {:?} p={:.4}", p.text, p.joint_prob);
    let gated = predict_span(&model, text, &SpanOptions { tau: 0.0, ..SpanOptions::default() })?;
    println!("tau 0.0 abstains: {}", gated.abstained);
    Ok(())
}
