//! The assembled extractor: encoder, graph pathway and task heads sharing
//! one parameter store and vocabulary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::vocab::{split_words, Vocab, UNK};
use crate::depgraph::{fallback_chain_parse, fuse, DepGraph, Gnn, GnnConfig};
use crate::encoder::{Encoder, EncoderConfig, LoraConfig};
use crate::error::{Error, Result};
use crate::heads::{NliHead, RelevanceHead, SpanHead, SpanHeadConfig, SpanLogits};
use crate::nn::{normal_tensor, Ctx};
use crate::tensor::{Component, ParamId, ParamStore, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub gnn: GnnConfig,
    /// When off, the graph modules are not built and heads read `[CLS]` only.
    pub use_gnn: bool,
    pub span: SpanHeadConfig,
    pub relevance_dropout: f64,
    pub lora: Option<LoraConfig>,
}

impl ModelConfig {
    pub fn desk(vocab_size: usize) -> Self {
        let encoder = EncoderConfig::desk(vocab_size);
        Self {
            span: SpanHeadConfig::desk(encoder.d_model, encoder.dropout_rate),
            relevance_dropout: encoder.dropout_rate,
            encoder,
            gnn: GnnConfig::desk(),
            use_gnn: true,
            lora: None,
        }
    }

    /// Width of the `[CLS, g_premise, g_hypothesis]` vector.
    pub fn fused_dim(&self) -> usize {
        self.encoder.d_model + if self.use_gnn { 2 * self.gnn.d_out } else { 0 }
    }

    /// Width of the per-sentence relevance features `[CLS, g_sentence]`.
    pub fn relevance_dim(&self) -> usize {
        self.encoder.d_model + if self.use_gnn { self.gnn.d_out } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.use_gnn {
            self.gnn.validate()?;
        }
        if self.span.d_in != self.encoder.d_model {
            return Err(Error::Validation(format!(
                "span head input {} must equal d_model {}",
                self.span.d_in, self.encoder.d_model
            )));
        }
        if let Some(l) = &self.lora {
            l.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainScope {
    HeadOnly,
    All,
}

/// Trainable parameters split by learning rate. The two lists are disjoint
/// and together hold exactly the trainable parameters of the store.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGroups {
    pub head: Vec<ParamId>,
    pub encoder: Vec<ParamId>,
    pub lr_head: f64,
    pub lr_encoder: f64,
}

impl ParamGroups {
    pub fn lr_for(&self, id: ParamId) -> Option<f64> {
        if self.head.contains(&id) {
            Some(self.lr_head)
        } else if self.encoder.contains(&id) {
            Some(self.lr_encoder)
        } else {
            None
        }
    }
}

/// A tokenized sentence plus its dependency graph over the word tokens.
#[derive(Clone, Debug)]
pub struct SentenceInput {
    /// `[CLS]`-prefixed ids for the encoder.
    pub ids: Vec<usize>,
    pub graph: DepGraph,
    /// Vocabulary ids of the graph nodes.
    pub graph_ids: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct FinExModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub graph_embedding: Option<ParamId>,
    pub gnn_premise: Option<Gnn>,
    pub gnn_hypothesis: Option<Gnn>,
    pub nli: NliHead,
    pub relevance: RelevanceHead,
    pub span: SpanHead,
}

impl FinExModel {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.encoder.vocab_size {
            return Err(Error::Validation(format!(
                "vocabulary has {} tokens, config expects {}",
                vocab.len(),
                config.encoder.vocab_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut encoder = Encoder::new(&mut store, config.encoder.clone(), &mut rng)?;
        let (graph_embedding, gnn_premise, gnn_hypothesis) = if config.use_gnn {
            let table = store.add(
                "graph.embedding",
                normal_tensor(&mut rng, &[config.encoder.vocab_size, config.gnn.d_in], 1.0),
                Component::GraphEmbedding,
            );
            let p = Gnn::new(&mut store, "gnn.premise", config.gnn, Component::GnnPremise, &mut rng)?;
            let h = Gnn::new(&mut store, "gnn.hypothesis", config.gnn, Component::GnnHypothesis, &mut rng)?;
            (Some(table), Some(p), Some(h))
        } else {
            (None, None, None)
        };
        let nli = NliHead::new(&mut store, config.fused_dim(), &mut rng);
        let relevance = RelevanceHead::new(&mut store, config.relevance_dim(), config.relevance_dropout, &mut rng);
        let span = SpanHead::new(&mut store, config.span, &mut rng);
        if let Some(l) = &config.lora {
            encoder.attach_lora(&mut store, l.clone(), &mut rng)?;
        }
        Ok(Self {
            config,
            vocab,
            store,
            encoder,
            graph_embedding,
            gnn_premise,
            gnn_hypothesis,
            nli,
            relevance,
            span,
        })
    }

    /// Attaches LoRA adapters after construction (freezes the encoder).
    pub fn attach_lora(&mut self, config: LoraConfig, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.encoder.attach_lora(&mut self.store, config.clone(), &mut rng)?;
        self.config.lora = Some(config);
        Ok(())
    }

    pub fn lora_active(&self) -> bool {
        self.encoder.lora.is_some()
    }

    /// Sets trainability and returns the optimizer groups.
    ///
    /// `HeadOnly` trains the heads alone at `lr_head`. `All` adds the base
    /// side at `lr_encoder`: the encoder and graph pathway, or only the LoRA
    /// adapters when they are attached.
    pub fn set_trainable(&mut self, scope: TrainScope, lr_head: f64, lr_encoder: f64) -> ParamGroups {
        let lora = self.lora_active();
        let mut groups = ParamGroups {
            head: Vec::new(),
            encoder: Vec::new(),
            lr_head,
            lr_encoder,
        };
        for id in self.store.ids().collect::<Vec<_>>() {
            let c = self.store.entry(id).component;
            let trainable = match (scope, c.is_base()) {
                (_, false) => true,
                (TrainScope::HeadOnly, true) => false,
                (TrainScope::All, true) => !lora || c == Component::Lora,
            };
            self.store.set_trainable(id, trainable);
            if trainable {
                if c.is_base() {
                    groups.encoder.push(id);
                } else {
                    groups.head.push(id);
                }
            }
        }
        groups
    }

    /// Scalar count for a component name (`encoder`, `gnn_premise`, ...),
    /// `graph_modules` for both GNNs, or `total`.
    pub fn count_params(&self, selector: &str) -> Result<usize> {
        match selector {
            "total" => Ok(self.store.total()),
            "graph_modules" => {
                Ok(self.store.count(Component::GnnPremise) + self.store.count(Component::GnnHypothesis))
            }
            s => Component::parse(s)
                .map(|c| self.store.count(c))
                .ok_or_else(|| Error::Validation(format!("unknown parameter selector {s:?}"))),
        }
    }

    /// Tokenizes `text` and pairs it with `graph` when the token counts
    /// agree, otherwise with a chain parse.
    pub fn prepare(&self, text: &str, graph: Option<&DepGraph>) -> Result<SentenceInput> {
        let max = self.config.encoder.max_seq_len;
        let mut words = split_words(text);
        words.truncate(max - 1);
        if words.is_empty() {
            words.push(UNK.to_string());
        }
        let graph = match graph {
            Some(g) if g.len() == words.len() => g.clone(),
            _ => fallback_chain_parse(&words)?,
        };
        let word_ids: Vec<usize> = words.iter().map(|w| self.vocab.id(w)).collect();
        let mut ids = Vec::with_capacity(words.len() + 1);
        ids.push(crate::dataset::vocab::CLS_ID);
        ids.extend(&word_ids);
        Ok(SentenceInput {
            ids,
            graph,
            graph_ids: word_ids,
        })
    }

    fn graph_vector(&self, gnn: &Gnn, tape: &mut Tape, input: &SentenceInput, ctx: &mut Ctx) -> Result<Var> {
        let table_id = self
            .graph_embedding
            .ok_or_else(|| Error::State("graph pathway is disabled".into()))?;
        let table = tape.param(&self.store, table_id);
        let feats = tape.embedding(table, &input.graph_ids)?;
        gnn.forward(&self.store, tape, &input.graph, feats, ctx)
    }

    /// `[CLS]` of the sentence, concatenated with its graph vector when the
    /// graph pathway is on.
    pub fn relevance_features(&self, tape: &mut Tape, input: &SentenceInput, ctx: &mut Ctx) -> Result<Var> {
        let out = self.encoder.encode(&self.store, tape, &input.ids, ctx)?;
        match &self.gnn_premise {
            Some(gnn) => {
                let g = self.graph_vector(gnn, tape, input, ctx)?;
                tape.concat(&[out.cls, g], 0)
            }
            None => Ok(out.cls),
        }
    }

    /// Scalar relevance logit for one sentence.
    pub fn relevance_logit(&self, tape: &mut Tape, input: &SentenceInput, ctx: &mut Ctx) -> Result<Var> {
        let f = self.relevance_features(tape, input, ctx)?;
        self.relevance.forward(&self.store, tape, f, ctx)
    }

    /// Relevance probabilities in eval mode.
    pub fn score(&self, inputs: &[SentenceInput]) -> Result<Vec<f64>> {
        let mut ctx = Ctx::eval();
        inputs
            .iter()
            .map(|inp| {
                let mut tape = Tape::new();
                let l = self.relevance_logit(&mut tape, inp, &mut ctx)?;
                Ok(crate::tensor::sigmoid(tape.value(l).item()))
            })
            .collect()
    }

    /// Three NLI logits for `[CLS] premise [SEP] hypothesis` fused with both
    /// sentence graphs.
    pub fn nli_logits(
        &self,
        tape: &mut Tape,
        premise: &SentenceInput,
        hypothesis: &SentenceInput,
        ctx: &mut Ctx,
    ) -> Result<Var> {
        let max = self.config.encoder.max_seq_len;
        let mut ids = premise.ids.clone();
        ids.push(crate::dataset::vocab::SEP_ID);
        ids.extend(&hypothesis.graph_ids);
        ids.truncate(max);
        let out = self.encoder.encode(&self.store, tape, &ids, ctx)?;
        let fused = match (&self.gnn_premise, &self.gnn_hypothesis) {
            (Some(gp), Some(gh)) => {
                let p = self.graph_vector(gp, tape, premise, ctx)?;
                let h = self.graph_vector(gh, tape, hypothesis, ctx)?;
                fuse(tape, out.cls, p, h)?
            }
            _ => out.cls,
        };
        self.nli.forward(&self.store, tape, fused, ctx)
    }

    /// Start/end/no-span logits over the encoded token sequence.
    pub fn span_logits(&self, tape: &mut Tape, ids: &[usize], ctx: &mut Ctx) -> Result<SpanLogits> {
        let out = self.encoder.encode(&self.store, tape, ids, ctx)?;
        self.span.forward(&self.store, tape, out.hidden, ctx)
    }
}
