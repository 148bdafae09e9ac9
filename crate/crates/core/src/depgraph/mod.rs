//! Dependency graphs and the graph pathway: CoNLL-U ingestion, chain
//! fallback parses, message passing and fusion with the `[CLS]` vector.

pub mod gnn;
pub mod graph;

pub use gnn::{fuse, Gnn, GnnConfig};
pub use graph::{emit_conllu, fallback_chain_parse, parse_conllu, DepGraph, Edge, ParseBank};
