//! Reads externally produced dependency parses (CoNLL-U) and shows how
//! transcript sentences are paired with them, with the chain fallback for
//! sentences the file does not cover.

use finex::dataset::vocab::split_words;
use finex::depgraph::{emit_conllu, parse_conllu, ParseBank};

const PARSES: &str = "\
# transcript_id = call-0001
# sentence_index = 1
# text = My card was declined.
1\tMy\tmy\tPRON\t_\t_\t2\tnmod:poss\t_\t_
2\tcard\tcard\tNOUN\t_\t_\t4\tnsubj:pass\t_\t_
3\twas\tbe\tAUX\t_\t_\t4\taux:pass\t_\t_
4\tdeclined\tdecline\tVERB\t_\t_\t0\troot\t_\t_
5\t.\t.\tPUNCT\t_\t_\t4\tpunct\t_\t_

";

fn main() -> finex::Result<()> {
    let graphs = parse_conllu(PARSES)?;
    let g = &graphs[0];
    println!("{} tokens, root {:?}, meta {:?}", g.len(), g.tokens[g.root], g.meta);
    for e in &g.edges {
        println!("  {} -{}-> {}", g.tokens[e.head], e.relation, g.tokens[e.dependent]);
    }
    let bank = ParseBank::from_graphs(graphs.clone());
    let covered = bank.graph_for("call-0001", 1, &split_words("My card was declined."))?;
    let fallback = bank.graph_for("call-0001", 2, &split_words("Can you check why?"))?;
    println!("covered sentence uses the file: {}", covered.edges == graphs[0].edges);
    println!("uncovered sentence falls back to a chain rooted at {:?}", fallback.tokens[fallback.root]);
    print!("\nround trip:\n{}", emit_conllu(&graphs));

    match parse_conllu("1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n2\tb\t_\t_\t_\t_\tx\tdep\t_\t_\n") {
        Ok(_) => println!("unexpected: malformed head accepted"),
        Err(e) => println!("malformed input: {e}"),
    }
    Ok(())
}
