use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use finex::dataset::{make_nli_toy_set, NliLabel, NliPair, Vocab};
use finex::model::{FinExModel, ModelConfig};
use finex::training::{train_nli_toy, NliTrainConfig};

fn model_for(pairs: &[NliPair], seed: u64) -> FinExModel {
    let vocab = Vocab::build(pairs.iter().flat_map(|p| [p.premise.as_str(), p.hypothesis.as_str()]));
    FinExModel::new(ModelConfig::desk(vocab.len()), vocab, seed).unwrap()
}

#[test]
fn three_separable_pairs_are_memorized() {
    let pairs = vec![
        NliPair { premise: "my card was declined".into(), hypothesis: "the store refused my card".into(), label: NliLabel::Entailment },
        NliPair { premise: "i was charged twice".into(), hypothesis: "i was charged once".into(), label: NliLabel::Contradiction },
        NliPair { premise: "my payment has not posted".into(), hypothesis: "i want a higher limit".into(), label: NliLabel::Neutral },
    ];
    let mut model = model_for(&pairs, 1);
    let cfg = NliTrainConfig { epochs: 50, batch_size: 3, ..NliTrainConfig::default() };
    let hist = train_nli_toy(&mut model, &pairs, &cfg).unwrap();
    let reached = hist.iter().position(|e| e.accuracy == 1.0);
    assert!(reached.is_some(), "accuracy never reached 1.0: {:?}", hist.last());
}

#[test]
fn loss_mostly_decreases_on_the_toy_set() {
    let pairs = make_nli_toy_set(300, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let mut model = model_for(&pairs, 2);
    let cfg = NliTrainConfig { epochs: 10, ..NliTrainConfig::default() };
    let hist = train_nli_toy(&mut model, &pairs, &cfg).unwrap();
    let down = hist.windows(2).filter(|w| w[1].loss < w[0].loss).count();
    assert!(down * 10 >= 8 * (hist.len() - 1), "loss fell in {down} of {} epochs: {hist:?}", hist.len() - 1);
    assert!(hist.last().unwrap().loss < hist[0].loss);
}
