//! Builds the synthetic transcript corpus, prints one example and the
//! summary statistics, and optionally writes the splits.
//!
//!     cargo run --example generate_corpus -- [n] [seed] [out_dir]

use finex::dataset::{generate_corpus, proportional_sizes, segment_transcript, split_dataset, write_jsonl, UtterancePool,
    DEFAULT_SPLIT};

fn main() -> finex::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(1200, |a| a.parse().expect("n"));
    let seed: u64 = args.next().map_or(42, |a| a.parse().expect("seed"));
    let out = args.next();

    let pool = UtterancePool::builtin();
    let corpus = generate_corpus(&pool, n, seed)?;
    let ex = &corpus[0];
    println!("{} (k={:?}, k1={:?}, k2={:?})\n{}\n", ex.id, ex.k, ex.k1, ex.k2, ex.call_transcript);
    for l in &ex.labels {
        println!("  label: {l}");
    }

    let mut hist = [0; 6];
    let (mut sentences, mut customer) = (0, 0);
    for ex in &corpus {
        hist[ex.k.unwrap_or(0)] += 1;
        let s = segment_transcript(&ex.call_transcript);
        customer += s.iter().filter(|s| s.is_customer()).count();
        sentences += s.len();
    }
    println!("\n{} transcripts from a pool of {}; k=3/4/5: {:?}", corpus.len(), pool.len(), &hist[3..]);
    println!("{sentences} sentences, {customer} from the customer");

    let splits = split_dataset(&corpus, proportional_sizes(n, DEFAULT_SPLIT), seed)?;
    println!("splits {} / {} / {}", splits.train.len(), splits.validation.len(), splits.test.len());
    if let Some(dir) = out {
        let dir = std::path::Path::new(&dir);
        std::fs::create_dir_all(dir).map_err(|e| finex::Error::io(dir, e))?;
        write_jsonl(dir.join("train.jsonl"), &splits.train)?;
        write_jsonl(dir.join("validation.jsonl"), &splits.validation)?;
        write_jsonl(dir.join("test.jsonl"), &splits.test)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
