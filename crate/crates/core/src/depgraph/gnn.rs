use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::DepGraph;
use crate::error::{Error, Result};
use crate::nn::{Ctx, Linear};
use crate::tensor::{Component, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub d_in: usize,
    pub d_out: usize,
    pub rounds: usize,
    pub shared_weights: bool,
}

impl GnnConfig {
    pub fn desk() -> Self {
        Self {
            d_in: 16,
            d_out: 16,
            rounds: 2,
            shared_weights: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Validation("GNN needs at least one round".into()));
        }
        if self.d_in == 0 || self.d_out == 0 {
            return Err(Error::Validation(format!("GNN widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Mean-aggregation message passing over the undirected dependency graph:
/// `H ← ReLU(Â·H·W + b)` per round, where `Â` averages each node with its
/// neighbours, then a mean readout over nodes.
///
/// With shared weights a single `W: d_in × d_out` is used. When `d_in` and
/// `d_out` differ that map can only apply once, so later rounds propagate
/// without a transform (`H ← ReLU(Â·H)`).
#[derive(Clone, Debug)]
pub struct Gnn {
    pub config: GnnConfig,
    pub layers: Vec<Linear>,
}

impl Gnn {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        config: GnnConfig,
        component: Component,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let he = |d: usize| (2.0 / d as f64).sqrt();
        let layers = if config.shared_weights {
            vec![Linear::new(store, name, config.d_in, config.d_out, component, he(config.d_in), rng)]
        } else {
            (0..config.rounds)
                .map(|r| {
                    let d_in = if r == 0 { config.d_in } else { config.d_out };
                    Linear::new(store, &format!("{name}.round{r}"), d_in, config.d_out, component, he(d_in), rng)
                })
                .collect()
        };
        Ok(Self { config, layers })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Linear::param_count).sum()
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(Linear::params).collect()
    }

    fn layer_for_round(&self, r: usize) -> Option<&Linear> {
        match (self.config.shared_weights, self.config.d_in == self.config.d_out) {
            (false, _) => self.layers.get(r),
            (true, true) => self.layers.first(),
            (true, false) => (r == 0).then(|| &self.layers[0]),
        }
    }

    /// Final node states `[n × d_out]`.
    pub fn node_states(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        graph: &DepGraph,
        features: Var,
        ctx: &mut Ctx,
    ) -> Result<Var> {
        let n = graph.len();
        let shape = tape.shape(features).to_vec();
        if shape != [n, self.config.d_in] {
            return Err(Error::dim("gnn_forward", &shape, &[n, self.config.d_in]));
        }
        let adj = tape.input(Tensor::new(vec![n, n], graph.mean_adjacency())?);
        let mut h = features;
        for r in 0..self.config.rounds {
            let mixed = tape.matmul(adj, h)?;
            let z = match self.layer_for_round(r) {
                Some(l) => l.forward(store, tape, mixed, ctx)?,
                None => mixed,
            };
            h = tape.relu(z)?;
        }
        Ok(h)
    }

    /// Graph vector `[d_out]`: mean over final node states.
    pub fn forward(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        graph: &DepGraph,
        features: Var,
        ctx: &mut Ctx,
    ) -> Result<Var> {
        let h = self.node_states(store, tape, graph, features, ctx)?;
        tape.mean_pool(h, 0)
    }
}

/// `[cls, g_premise, g_hypothesis]` as one vector.
pub fn fuse(tape: &mut Tape, cls: Var, g_premise: Var, g_hypothesis: Var) -> Result<Var> {
    let (a, b, c) = (tape.shape(cls).to_vec(), tape.shape(g_premise).to_vec(), tape.shape(g_hypothesis).to_vec());
    if a.len() != 1 || b.len() != 1 || b != c {
        return Err(Error::dim("fuse", &[a, b].concat(), &c));
    }
    tape.concat(&[cls, g_premise, g_hypothesis], 0)
}

#[cfg(test)]
mod tests {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    use super::*;
    use crate::depgraph::graph::{fallback_chain_parse, Edge};
    use crate::nn::normal_tensor;
    use crate::tensor::gradcheck;

    fn words(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    fn run(gnn: &Gnn, store: &ParamStore, g: &DepGraph, x: &Tensor) -> Tensor {
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let out = gnn.forward(store, &mut tape, g, xv, &mut Ctx::eval()).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn table_count_for_shared_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let cfg = GnnConfig {
            d_in: 768,
            d_out: 128,
            rounds: 2,
            shared_weights: true,
        };
        let gnn = Gnn::new(&mut store, "gnn", cfg, Component::GnnPremise, &mut rng).unwrap();
        assert_eq!(gnn.param_count(), 98_432);
        assert_eq!(store.count(Component::GnnPremise), 98_432);
        let g = fallback_chain_parse(&words(4)).unwrap();
        let out = run(&gnn, &store, &g, &normal_tensor(&mut rng, &[4, 768], 1.0));
        assert_eq!(out.shape(), &[128]);
    }

    #[test]
    fn rounds_must_be_positive() {
        let mut cfg = GnnConfig::desk();
        cfg.rounds = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn single_node_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let cfg = GnnConfig {
            d_in: 3,
            d_out: 3,
            rounds: 2,
            shared_weights: true,
        };
        let gnn = Gnn::new(&mut store, "g", cfg, Component::GnnPremise, &mut rng).unwrap();
        let w = Tensor::matrix(&[vec![1.0, -1.0, 0.0], vec![0.5, 2.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        store.set_value(gnn.layers[0].weight, w);
        store.set_value(gnn.layers[0].bias, Tensor::vector(vec![0.1, 0.0, -0.2]));
        let g = fallback_chain_parse(&words(1)).unwrap();
        let x = Tensor::matrix(&[vec![1.0, 2.0, 3.0]]).unwrap();
        // Round 1: x·W + b = [2.1, 3, 2.8]. Round 2: [2.1+1.5+0.1, -2.1+6, 2.8-0.2].
        assert!(run(&gnn, &store, &g, &x).max_abs_diff(&Tensor::vector(vec![3.7, 3.9, 2.6])) < 1e-12);
    }

    #[test]
    fn identity_weight_on_self_loop_graph_is_relu() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let cfg = GnnConfig {
            d_in: 4,
            d_out: 4,
            rounds: 1,
            shared_weights: true,
        };
        let gnn = Gnn::new(&mut store, "g", cfg, Component::GnnPremise, &mut rng).unwrap();
        store.set_value(gnn.layers[0].weight, Tensor::eye(4));
        let g = fallback_chain_parse(&words(1)).unwrap();
        let x = Tensor::matrix(&[vec![-1.0, 2.0, -3.0, 4.0]]).unwrap();
        assert_eq!(run(&gnn, &store, &g, &x).data(), &[0.0, 2.0, 0.0, 4.0]);
    }

    #[test]
    fn permutation_invariant_readout() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let gnn = Gnn::new(&mut store, "g", GnnConfig::desk(), Component::GnnPremise, &mut rng).unwrap();
        let g = DepGraph::new(
            words(5),
            vec![
                Edge { head: 2, dependent: 0, relation: "a".into() },
                Edge { head: 2, dependent: 1, relation: "b".into() },
                Edge { head: 1, dependent: 3, relation: "c".into() },
                Edge { head: 3, dependent: 4, relation: "d".into() },
            ],
            2,
        )
        .unwrap();
        let x = normal_tensor(&mut rng, &[5, 16], 1.0);
        let base = run(&gnn, &store, &g, &x);
        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..5).collect();
            perm.shuffle(&mut rng);
            // Old node i becomes new node perm[i].
            let mut tokens = vec![String::new(); 5];
            let mut rows = vec![vec![0.0; 16]; 5];
            for i in 0..5 {
                tokens[perm[i]] = g.tokens[i].clone();
                rows[perm[i]] = x.row(i).to_vec();
            }
            let edges = g
                .edges
                .iter()
                .map(|e| Edge { head: perm[e.head], dependent: perm[e.dependent], relation: e.relation.clone() })
                .collect();
            let pg = DepGraph::new(tokens, edges, perm[g.root]).unwrap();
            let out = run(&gnn, &store, &pg, &Tensor::matrix(&rows).unwrap());
            assert!(out.max_abs_diff(&base) < 1e-9);
        }
    }

    #[test]
    fn unshared_and_mismatched_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let shared = GnnConfig { d_in: 8, d_out: 4, rounds: 3, shared_weights: true };
        let gnn = Gnn::new(&mut store, "s", shared, Component::GnnPremise, &mut rng).unwrap();
        assert_eq!(gnn.param_count(), 8 * 4 + 4);
        let g = fallback_chain_parse(&words(3)).unwrap();
        let x = normal_tensor(&mut rng, &[3, 8], 1.0);
        assert_eq!(run(&gnn, &store, &g, &x).shape(), &[4]);

        let own = GnnConfig { shared_weights: false, ..shared };
        let gnn = Gnn::new(&mut store, "u", own, Component::GnnHypothesis, &mut rng).unwrap();
        assert_eq!(gnn.param_count(), (8 * 4 + 4) + 2 * (4 * 4 + 4));
        assert_eq!(run(&gnn, &store, &g, &x).shape(), &[4]);

        let mut tape = Tape::new();
        let bad = tape.input(normal_tensor(&mut rng, &[2, 8], 1.0));
        assert!(gnn.forward(&store, &mut tape, &g, bad, &mut Ctx::eval()).is_err());
    }

    #[test]
    fn output_width_is_independent_of_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let gnn = Gnn::new(&mut store, "g", GnnConfig::desk(), Component::GnnPremise, &mut rng).unwrap();
        for n in [1, 2, 7, 30] {
            let g = fallback_chain_parse(&words(n)).unwrap();
            assert_eq!(run(&gnn, &store, &g, &normal_tensor(&mut rng, &[n, 16], 1.0)).shape(), &[16]);
        }
    }

    #[test]
    fn fuse_order_and_widths() {
        let mut tape = Tape::new();
        let cls = tape.input(Tensor::vector(vec![1.0, 2.0]));
        let p = tape.input(Tensor::vector(vec![3.0]));
        let h = tape.input(Tensor::vector(vec![4.0]));
        let f = fuse(&mut tape, cls, p, h).unwrap();
        assert_eq!(tape.value(f).data(), &[1.0, 2.0, 3.0, 4.0]);
        for (c, g) in [(768, 128), (64, 16)] {
            let cls = tape.input(Tensor::full(&[c], 1.0));
            let z = tape.input(Tensor::zeros(&[g]));
            let f = fuse(&mut tape, cls, z, z).unwrap();
            assert_eq!(tape.shape(f), &[c + 2 * g]);
            assert!(tape.value(f).data()[c..].iter().all(|v| *v == 0.0));
        }
        let bad = tape.input(Tensor::zeros(&[3]));
        assert!(fuse(&mut tape, cls, p, bad).is_err());
    }

    #[test]
    fn gradient_check_on_five_node_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParamStore::new();
        let cfg = GnnConfig { d_in: 6, d_out: 4, rounds: 2, shared_weights: false };
        let gnn = Gnn::new(&mut store, "g", cfg, Component::GnnPremise, &mut rng).unwrap();
        for p in gnn.params() {
            let shape = store.value(p).shape().to_vec();
            store.set_value(p, normal_tensor(&mut rng, &shape, 0.5));
        }
        let g = DepGraph::new(
            words(5),
            vec![
                Edge { head: 0, dependent: 1, relation: "x".into() },
                Edge { head: 0, dependent: 2, relation: "x".into() },
                Edge { head: 2, dependent: 3, relation: "x".into() },
                Edge { head: 2, dependent: 4, relation: "x".into() },
            ],
            0,
        )
        .unwrap();
        let x = normal_tensor(&mut rng, &[5, 6], 1.0);
        let probe = normal_tensor(&mut rng, &[4], 1.0);
        let loss = |store: &ParamStore, tape: &mut Tape, xv: Var| -> Result<Var> {
            let out = gnn.forward(store, tape, &g, xv, &mut Ctx::eval())?;
            let p = tape.input(probe.clone());
            let y = tape.mul(out, p)?;
            tape.sum(y)
        };
        let r = gradcheck::check_params(&mut store, 500, &mut rng, |s, t| {
            let xv = t.input(x.clone());
            loss(s, t, xv)
        })
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "{r:?}");
        let frozen = store.clone();
        let r = gradcheck::check_inputs(&[x.clone()], |t, v| loss(&frozen, t, v[0])).unwrap();
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }
}
