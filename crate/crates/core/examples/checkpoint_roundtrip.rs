//! Saves a model, loads it back, and checks the bytes and the scores.

use finex::checkpoint;
use finex::dataset::Vocab;
use finex::model::{FinExModel, ModelConfig};

fn main() -> finex::Result<()> {
    let vocab = Vocab::build(["my card was declined", "i see a charge i do not recognize"]);
    let model = FinExModel::new(ModelConfig::desk(vocab.len()), vocab, 5)?;
    let path = std::env::temp_dir().join("finex-example.ckpt");
    checkpoint::save(&model, 5, 0, &path)?;
    let (loaded, header) = checkpoint::load(&path)?;
    println!("{}: {} bytes, seed {}, epoch {}, vocab {}", path.display(), std::fs::metadata(&path).map_or(0, |m| m.len()),
        header.seed, header.epoch, header.vocab.len());

    let same = checkpoint::to_bytes(&model, 5, 0)? == checkpoint::to_bytes(&loaded, 5, 0)?;
    println!("re-serialized bytes identical: {same}");
    let input = model.prepare("i see a charge i do not recognize", None)?;
    let a = model.score(std::slice::from_ref(&input))?[0];
    let b = loaded.score(&[input])?[0];
    println!("score before {a:.6}, after {b:.6} (values are stored as f32)");

    let bytes = std::fs::read(&path).map_err(|e| finex::Error::io(&path, e))?;
    match checkpoint::from_bytes(&bytes[..bytes.len() / 2]) {
        Ok(_) => println!("unexpected: truncated file loaded"),
        Err(e) => println!("truncated: {e}"),
    }
    std::fs::remove_file(&path).ok();
    Ok(())
}
