//! Message passing over a dependency tree and the fused
//! `[CLS, g_premise, g_hypothesis]` vector fed to the NLI head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use finex::dataset::Vocab;
use finex::depgraph::{fallback_chain_parse, fuse, DepGraph, Edge, Gnn, GnnConfig};
use finex::model::{FinExModel, ModelConfig};
use finex::nn::{normal_tensor, Ctx};
use finex::tensor::{Component, ParamStore, Tape};

fn main() -> finex::Result<()> {
    let words: Vec<String> = "the store declined my card".split(' ').map(String::from).collect();
    let rel = |head, dependent, r: &str| Edge { head, dependent, relation: r.into() };
    let tree = DepGraph::new(
        words.clone(),
        vec![rel(1, 0, "det"), rel(2, 1, "nsubj"), rel(4, 3, "nmod:poss"), rel(2, 4, "obj")],
        2,
    )?;
    let chain = fallback_chain_parse(&words)?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let gnn = Gnn::new(&mut store, "gnn", GnnConfig::desk(), Component::GnnPremise, &mut rng)?;
    let feats = normal_tensor(&mut rng, &[words.len(), 16], 1.0);
    println!("gnn parameters: {}", gnn.param_count());
    for (name, g) in [("tree", &tree), ("chain", &chain)] {
        let mut tape = Tape::new();
        let x = tape.input(feats.clone());
        let v = gnn.forward(&store, &mut tape, g, x, &mut Ctx::eval())?;
        let d = tape.value(v).data();
        println!("{name:>5}: g[..4] = {:.3?}", &d[..4]);
    }

    let mut tape = Tape::new();
    let parts: Vec<_> = [4, 2, 2].iter().map(|&n| tape.input(normal_tensor(&mut rng, &[n], 1.0))).collect();
    let fused = fuse(&mut tape, parts[0], parts[1], parts[2])?;
    println!("fuse([4], [2], [2]) -> {:?}", tape.shape(fused));

    let vocab = Vocab::build(["the store declined my card", "my card was refused"]);
    let model = FinExModel::new(ModelConfig::desk(vocab.len()), vocab, 3)?;
    let p = model.prepare("the store declined my card", Some(&tree))?;
    let h = model.prepare("my card was refused", None)?;
    let mut tape = Tape::new();
    let logits = model.nli_logits(&mut tape, &p, &h, &mut Ctx::eval())?;
    println!(
        "fused width {} -> nli logits {:.4?}",
        model.config.fused_dim(),
        tape.value(logits).data()
    );
    Ok(())
}
