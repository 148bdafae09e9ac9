use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::dataset::vocab::Vocab;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub head: usize,
    pub dependent: usize,
    pub relation: String,
}

/// A dependency tree over the tokens of one sentence. Indices are 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepGraph {
    pub tokens: Vec<String>,
    pub edges: Vec<Edge>,
    pub root: usize,
    /// `# key = value` comment lines, in file order of first appearance.
    pub meta: BTreeMap<String, String>,
}

impl DepGraph {
    pub fn new(tokens: Vec<String>, edges: Vec<Edge>, root: usize) -> Result<Self> {
        let g = Self {
            tokens,
            edges,
            root,
            meta: BTreeMap::new(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token_ids(&self, vocab: &Vocab) -> Vec<usize> {
        self.tokens.iter().map(|t| vocab.id(&t.to_lowercase())).collect()
    }

    /// Single head per non-root token, none for the root, connected.
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(Error::Validation("dependency graph has no tokens".into()));
        }
        if self.root >= n {
            return Err(Error::Validation(format!("root {} out of range for {n} tokens", self.root)));
        }
        let mut heads = vec![0usize; n];
        for e in &self.edges {
            if e.head >= n || e.dependent >= n {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) out of range for {n} tokens",
                    e.head, e.dependent
                )));
            }
            if e.head == e.dependent {
                return Err(Error::Validation(format!("token {} is its own head", e.head)));
            }
            heads[e.dependent] += 1;
        }
        for (i, &h) in heads.iter().enumerate() {
            let want = usize::from(i != self.root);
            if h != want {
                return Err(Error::Validation(format!("token {i} has {h} heads, expected {want}")));
            }
        }
        let adj = self.neighbors();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([self.root]);
        seen[self.root] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!("dependency graph is disconnected at token {i}")));
        }
        Ok(())
    }

    /// Undirected adjacency lists, sorted and deduplicated.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.tokens.len()];
        for e in &self.edges {
            adj[e.head].push(e.dependent);
            adj[e.dependent].push(e.head);
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// Row-normalized adjacency with self loops: row `i` averages over
    /// `neighbors(i) ∪ {i}`.
    pub fn mean_adjacency(&self) -> Vec<f64> {
        let n = self.tokens.len();
        let mut a = vec![0.0; n * n];
        for (i, nb) in self.neighbors().iter().enumerate() {
            let w = 1.0 / (nb.len() + 1) as f64;
            a[i * n + i] = w;
            for &j in nb {
                a[i * n + j] = w;
            }
        }
        a
    }
}

/// Token `i` is headed by token `i − 1`; token 0 is the root.
pub fn fallback_chain_parse(tokens: &[String]) -> Result<DepGraph> {
    if tokens.is_empty() {
        return Err(Error::Validation("cannot chain-parse an empty token list".into()));
    }
    let edges = (1..tokens.len())
        .map(|i| Edge {
            head: i - 1,
            dependent: i,
            relation: "dep".into(),
        })
        .collect();
    DepGraph::new(tokens.to_vec(), edges, 0)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads CoNLL-U. Multiword-token ranges (`1-2`) and empty nodes (`1.1`)
/// are skipped; comments of the form `# key = value` land in `meta`.
pub fn parse_conllu(text: &str) -> Result<Vec<DepGraph>> {
    let mut graphs = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut heads: Vec<(usize, String, usize)> = Vec::new();
    let mut meta = BTreeMap::new();
    let mut start_line = 1;

    let mut finish = |tokens: &mut Vec<String>,
                      heads: &mut Vec<(usize, String, usize)>,
                      meta: &mut BTreeMap<String, String>,
                      start: usize|
     -> Result<()> {
        if tokens.is_empty() {
            meta.clear();
            return Ok(());
        }
        let n = tokens.len();
        let mut edges = Vec::new();
        let mut root = None;
        for (dep, (head, rel, line)) in heads.drain(..).enumerate() {
            if head == 0 {
                if root.replace(dep).is_some() {
                    return Err(parse_err(line, "sentence has more than one root"));
                }
            } else if head > n {
                return Err(parse_err(line, format!("HEAD {head} exceeds sentence length {n}")));
            } else {
                edges.push(Edge {
                    head: head - 1,
                    dependent: dep,
                    relation: rel,
                });
            }
        }
        let root = root.ok_or_else(|| parse_err(start, "sentence has no root"))?;
        let g = DepGraph {
            tokens: std::mem::take(tokens),
            edges,
            root,
            meta: std::mem::take(meta),
        };
        g.validate()
            .map_err(|e| Error::Validation(format!("sentence starting at line {start}: {e}")))?;
        graphs.push(g);
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut tokens, &mut heads, &mut meta, start_line)?;
            start_line = line_no + 1;
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                meta.entry(k.trim().to_string()).or_insert_with(|| v.trim().to_string());
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(parse_err(line_no, format!("expected 10 tab-separated columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad ID {:?}", cols[0])))?;
        if id != tokens.len() + 1 {
            return Err(parse_err(line_no, format!("ID {id} out of sequence, expected {}", tokens.len() + 1)));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad HEAD {:?}", cols[6])))?;
        tokens.push(cols[1].to_string());
        heads.push((head, cols[7].to_string(), line_no));
    }
    finish(&mut tokens, &mut heads, &mut meta, start_line)?;
    Ok(graphs)
}

/// Writes CoNLL-U with `_` in the columns this crate does not track.
pub fn emit_conllu(graphs: &[DepGraph]) -> String {
    let mut out = String::new();
    for g in graphs {
        for (k, v) in &g.meta {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        let mut head = vec![(0usize, "root"); g.len()];
        for e in &g.edges {
            head[e.dependent] = (e.head + 1, e.relation.as_str());
        }
        for (i, tok) in g.tokens.iter().enumerate() {
            let (h, rel) = head[i];
            out.push_str(&format!("{}\t{tok}\t_\t_\t_\t_\t{h}\t{rel}\t_\t_\n", i + 1));
        }
        out.push('\n');
    }
    out
}

pub const META_TRANSCRIPT: &str = "transcript_id";
pub const META_SENTENCE: &str = "sentence_index";
pub const META_TEXT: &str = "text";

/// External parses keyed by transcript id and sentence index, with a chain
/// fallback for sentences that are missing or whose token count differs
/// from the local tokenizer.
#[derive(Clone, Debug, Default)]
pub struct ParseBank {
    by_key: HashMap<(String, usize), DepGraph>,
}

impl ParseBank {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graphs without both metadata keys are ignored.
    pub fn from_graphs(graphs: Vec<DepGraph>) -> Self {
        let mut by_key = HashMap::new();
        for g in graphs {
            let id = g.meta.get(META_TRANSCRIPT).cloned();
            let idx = g.meta.get(META_SENTENCE).and_then(|s| s.parse::<usize>().ok());
            if let (Some(id), Some(idx)) = (id, idx) {
                by_key.insert((id, idx), g);
            }
        }
        Self { by_key }
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    pub fn graph_for(&self, transcript_id: &str, sentence_index: usize, tokens: &[String]) -> Result<DepGraph> {
        match self.by_key.get(&(transcript_id.to_string(), sentence_index)) {
            Some(g) if g.len() == tokens.len() => Ok(g.clone()),
            _ => fallback_chain_parse(tokens),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_token_sentence() {
        let text = "1\tI\t_\t_\t_\t_\t2\tnsubj\t_\t_\n2\tleft\t_\t_\t_\t_\t0\troot\t_\t_\n";
        let g = parse_conllu(text).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].root, 1);
        assert_eq!(
            g[0].edges,
            vec![Edge {
                head: 1,
                dependent: 0,
                relation: "nsubj".into()
            }]
        );
    }

    #[test]
    fn empty_input_and_skipped_lines() {
        assert!(parse_conllu("").unwrap().is_empty());
        assert!(parse_conllu("\n\n# only = comment\n\n").unwrap().is_empty());
        let text = "# sent_id = 1\n1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tdo\t_\t_\t_\t_\t0\troot\t_\t_\n\
                    1.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n2\tn't\t_\t_\t_\t_\t1\tadvmod\t_\t_\n";
        let g = parse_conllu(text).unwrap();
        assert_eq!(g[0].tokens, toks(&["do", "n't"]));
        assert_eq!(g[0].meta["sent_id"], "1");
    }

    #[test]
    fn malformed_lines_carry_line_numbers() {
        let err = parse_conllu("1\tI\t_\t_\t_\t_\t0\troot\t_\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_conllu("# c\n1\tI\t_\t_\t_\t_\tx\troot\t_\t_\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_conllu("1\tI\t_\t_\t_\t_\t0\troot\t_\t_\n2\tgo\t_\t_\t_\t_\t7\tx\t_\t_\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn disconnected_graph_is_a_validation_error() {
        // 2 heads 3, 3 heads 2: a cycle detached from the root.
        let text = "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n2\tb\t_\t_\t_\t_\t3\tdep\t_\t_\n3\tc\t_\t_\t_\t_\t2\tdep\t_\t_\n";
        assert!(matches!(parse_conllu(text).unwrap_err(), Error::Validation(_)));
    }

    #[test]
    fn chain_parse() {
        let g = fallback_chain_parse(&toks(&["a"])).unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(g.root, 0);
        let g = fallback_chain_parse(&toks(&["a", "b", "c"])).unwrap();
        let pairs: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.head, e.dependent)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
        assert!(fallback_chain_parse(&[]).is_err());
    }

    #[test]
    fn emit_then_parse_round_trips() {
        let mut g = fallback_chain_parse(&toks(&["my", "card", "was", "declined"])).unwrap();
        g.meta.insert(META_TRANSCRIPT.into(), "call-0001".into());
        g.meta.insert(META_SENTENCE.into(), "3".into());
        let back = parse_conllu(&emit_conllu(&[g.clone(), g.clone()])).unwrap();
        assert_eq!(back, vec![g.clone(), g]);
    }

    #[test]
    fn mean_adjacency_rows_sum_to_one() {
        let g = fallback_chain_parse(&toks(&["a", "b", "c"])).unwrap();
        let a = g.mean_adjacency();
        assert_eq!(a, vec![0.5, 0.5, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn parse_bank_falls_back_on_mismatch() {
        let mut g = fallback_chain_parse(&toks(&["x", "y"])).unwrap();
        g.edges[0] = Edge {
            head: 1,
            dependent: 0,
            relation: "nsubj".into(),
        };
        g.root = 1;
        g.meta.insert(META_TRANSCRIPT.into(), "t".into());
        g.meta.insert(META_SENTENCE.into(), "0".into());
        let bank = ParseBank::from_graphs(vec![g.clone()]);
        assert_eq!(bank.graph_for("t", 0, &toks(&["x", "y"])).unwrap(), g);
        assert_eq!(bank.graph_for("t", 0, &toks(&["x", "y", "z"])).unwrap().root, 0);
        assert_eq!(bank.graph_for("t", 1, &toks(&["x", "y"])).unwrap().root, 0);
    }
}
