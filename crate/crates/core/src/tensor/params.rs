use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Tensor;

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Model block a parameter belongs to. Used for parameter counting and for
/// deciding which side of the frozen/unfrozen split a parameter sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Encoder,
    Lora,
    GraphEmbedding,
    GnnPremise,
    GnnHypothesis,
    NliHead,
    SpanMlp,
    SpanClassifiers,
    RelevanceHead,
}

impl Component {
    pub const ALL: [Component; 9] = [
        Component::Encoder,
        Component::Lora,
        Component::GraphEmbedding,
        Component::GnnPremise,
        Component::GnnHypothesis,
        Component::NliHead,
        Component::SpanMlp,
        Component::SpanClassifiers,
        Component::RelevanceHead,
    ];

    /// Base-model parameters: the contextual encoder, its adapters and the
    /// graph pathway. Everything else is a task head.
    pub fn is_base(self) -> bool {
        matches!(
            self,
            Component::Encoder
                | Component::Lora
                | Component::GraphEmbedding
                | Component::GnnPremise
                | Component::GnnHypothesis
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Encoder => "encoder",
            Component::Lora => "lora",
            Component::GraphEmbedding => "graph_embedding",
            Component::GnnPremise => "gnn_premise",
            Component::GnnHypothesis => "gnn_hypothesis",
            Component::NliHead => "nli_head",
            Component::SpanMlp => "span_mlp",
            Component::SpanClassifiers => "span_classifiers",
            Component::RelevanceHead => "relevance_head",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub name: String,
    pub value: Arc<Tensor>,
    pub trainable: bool,
    pub component: Component,
}

/// Owns every learnable array of a model. Values are shared into tapes by
/// reference count, so a forward pass never copies weights.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, component: Component) -> ParamId {
        let id = ParamId(self.entries.len());
        self.entries.push(ParamEntry {
            name: name.into(),
            value: Arc::new(value),
            trainable: true,
            component,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub(crate) fn shared(&self, id: ParamId) -> Arc<Tensor> {
        Arc::clone(&self.entries[id.0].value)
    }

    /// Mutable access for optimizers and loaders. Clones the array only if a
    /// live tape still holds it.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.entries[id.0].value)
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor) {
        self.entries[id.0].value = Arc::new(value);
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.entries[id.0].trainable = trainable;
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn count(&self, component: Component) -> usize {
        self.entries
            .iter()
            .filter(|e| e.component == component)
            .map(|e| e.value.numel())
            .sum()
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    /// Copies all values out; used to snapshot the best checkpoint.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.entries.iter().map(|e| (*e.value).clone()).collect()
    }

    pub fn restore(&mut self, values: Vec<Tensor>) {
        for (entry, value) in self.entries.iter_mut().zip(values) {
            entry.value = Arc::new(value);
        }
    }
}
