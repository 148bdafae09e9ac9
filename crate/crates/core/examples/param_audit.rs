//! Parameter counts of the full-size components next to the published
//! table, plus the desk-scale model actually trained here.

use finex::audit::audit_table3;
use finex::dataset::Vocab;
use finex::model::{FinExModel, ModelConfig};

fn main() -> finex::Result<()> {
    let report = audit_table3()?;
    print!("{report}");
    println!("all verifiable rows match: {}\n", report.passed());

    let vocab = Vocab::build(["a small vocabulary for the desk model"]);
    let model = FinExModel::new(ModelConfig::desk(vocab.len()), vocab, 0)?;
    for sel in ["encoder", "graph_embedding", "graph_modules", "nli_head", "relevance_head", "span_mlp", "span_classifiers", "total"] {
        println!("desk {sel:<17} {:>8}", model.count_params(sel)?);
    }
    Ok(())
}
