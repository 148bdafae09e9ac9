//! Attaching LoRA adapters leaves the encoder function unchanged (B starts
//! at zero), freezes the base weights, and adds a small trainable budget.

use finex::dataset::vocab::CLS_ID;
use finex::dataset::Vocab;
use finex::encoder::LoraConfig;
use finex::model::{FinExModel, ModelConfig, TrainScope};
use finex::nn::Ctx;
use finex::tensor::{Component, Tape};

fn cls(model: &FinExModel, ids: &[usize]) -> finex::Result<Vec<f64>> {
    let mut tape = Tape::new();
    let out = model.encoder.encode(&model.store, &mut tape, ids, &mut Ctx::eval())?;
    Ok(tape.value(out.cls).data().to_vec())
}

fn main() -> finex::Result<()> {
    let vocab = Vocab::build(["i was charged twice for the same purchase", "my card was declined"]);
    let ids: Vec<usize> = std::iter::once(CLS_ID).chain(vocab.encode("my card was declined", 16)[1..].iter().copied()).collect();
    let mut model = FinExModel::new(ModelConfig::desk(vocab.len()), vocab, 42)?;
    let before = cls(&model, &ids)?;

    let cfg = LoraConfig::default();
    println!("rank {}, alpha {}, scaling {}, targets {:?}", cfg.rank, cfg.alpha, cfg.scaling(), cfg.targets);
    model.attach_lora(cfg, 7)?;
    let after = cls(&model, &ids)?;
    println!("[CLS] unchanged after attaching: {}", before == after);

    let groups = model.set_trainable(TrainScope::All, 1e-3, 1e-5);
    let trainable = |c: Component| {
        model.store.ids().filter(|&id| model.store.entry(id).component == c && model.store.is_trainable(id))
            .map(|id| model.store.value(id).numel()).sum::<usize>()
    };
    println!(
        "unfrozen with adapters: encoder {} trainable, lora {} trainable, {} head tensors, {} adapter tensors",
        trainable(Component::Encoder),
        trainable(Component::Lora),
        groups.head.len(),
        groups.encoder.len()
    );
    println!("total parameters {}", model.count_params("total")?);
    Ok(())
}
