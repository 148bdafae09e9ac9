//! Trains the NLI head end to end (encoder, both graph modules and the
//! classifier) on the templated premise/hypothesis set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use finex::dataset::{make_nli_toy_set, Vocab};
use finex::model::{FinExModel, ModelConfig};
use finex::training::{train_nli_toy, NliTrainConfig};

fn main() -> finex::Result<()> {
    let pairs = make_nli_toy_set(300, &mut ChaCha8Rng::seed_from_u64(0))?;
    for p in &pairs[..3] {
        println!("{:?}: {:?} / {:?}", p.label, p.premise, p.hypothesis);
    }
    let vocab = Vocab::build(pairs.iter().flat_map(|p| [p.premise.as_str(), p.hypothesis.as_str()]));
    let mut model = FinExModel::new(ModelConfig::desk(vocab.len()), vocab, 0)?;
    let cfg = NliTrainConfig { epochs: 12, ..NliTrainConfig::default() };
    for e in train_nli_toy(&mut model, &pairs, &cfg)? {
        println!("epoch {:>2} loss {:.4} accuracy {:.3}", e.epoch, e.loss, e.accuracy);
    }
    Ok(())
}
