use std::collections::BTreeMap;

use proptest::collection::vec;
use proptest::prelude::*;

use finex::dataset::generator::split_k;
use finex::dataset::vocab::{split_words, CLS_ID};
use finex::dataset::{normalize, proportional_sizes, Vocab, DEFAULT_SPLIT};
use finex::depgraph::{emit_conllu, parse_conllu, DepGraph, Edge};
use finex::inference::{
    dynamic_threshold_elbow, dynamic_threshold_median, fixed_threshold, length_norm, select_span, span_probs,
};
use finex::training::lr_schedule;

const RELATIONS: &[&str] = &["nsubj", "obj", "amod", "det", "advmod", "case", "nmod", "punct"];

/// Random tree: token i > 0 hangs off some earlier token, then the labels
/// are permuted so the root is not always token 0.
fn arb_tree() -> impl Strategy<Value = DepGraph> {
    (1usize..12)
        .prop_flat_map(|n| {
            let parents: Vec<BoxedStrategy<usize>> = (1..n).map(|i| (0..i).boxed()).collect();
            (
                Just(n),
                parents,
                vec(0..RELATIONS.len(), n),
                Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
                vec("[a-z]{1,8}", n),
            )
        })
        .prop_map(|(n, parents, rels, perm, words)| {
            let mut edges: Vec<Edge> = (1..n)
                .map(|i| Edge {
                    head: perm[parents[i - 1]],
                    dependent: perm[i],
                    relation: RELATIONS[rels[i]].to_string(),
                })
                .collect();
            edges.sort_by_key(|e| e.dependent);
            let mut g = DepGraph::new(words, edges, perm[0]).expect("valid tree");
            g.meta = BTreeMap::from([("sent_id".to_string(), format!("s{n}"))]);
            g
        })
}

fn scores(max: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(0.0f64..1.0, 1..max)
}

fn exhaustive(ps: &[f64], pe: &[f64]) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for i in 0..ps.len() {
        for j in i..pe.len() {
            if ps[i] * pe[j] > best.2 {
                best = (i, j, ps[i] * pe[j]);
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn conllu_round_trip(graphs in vec(arb_tree(), 1..4)) {
        let text = emit_conllu(&graphs);
        let back = parse_conllu(&text).unwrap();
        prop_assert_eq!(&back, &graphs);
        prop_assert_eq!(emit_conllu(&back), text);
    }

    #[test]
    fn parsed_trees_have_one_head_per_token(g in arb_tree()) {
        let back = parse_conllu(&emit_conllu(&[g])).unwrap().remove(0);
        prop_assert_eq!(back.edges.len() + 1, back.len());
        prop_assert!(back.edges.iter().all(|e| e.dependent != back.root));
        let adj = back.mean_adjacency();
        for row in adj.chunks(back.len()) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn median_rule_is_shift_invariant(s in scores(40), c in -0.5f64..0.5, delta in 0.0f64..0.5) {
        let shifted: Vec<f64> = s.iter().map(|x| x + c).collect();
        prop_assert_eq!(dynamic_threshold_median(&s, delta).unwrap(), dynamic_threshold_median(&shifted, delta).unwrap());
    }

    #[test]
    fn larger_delta_selects_a_subset(s in scores(40), a in 0.0f64..0.6, b in 0.0f64..0.6) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let wide = dynamic_threshold_median(&s, lo).unwrap();
        let narrow = dynamic_threshold_median(&s, hi).unwrap();
        prop_assert!(narrow.iter().all(|i| wide.contains(i)));
    }

    #[test]
    fn median_rule_with_zero_delta_keeps_at_least_half(s in scores(40)) {
        let n = dynamic_threshold_median(&s, 0.0).unwrap().len();
        prop_assert!(2 * n >= s.len());
    }

    #[test]
    fn elbow_does_not_depend_on_order(s in scores(30), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..s.len()).collect();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let permuted: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
        let mut a: Vec<f64> = dynamic_threshold_elbow(&s, 0.15).unwrap().iter().map(|&i| s[i]).collect();
        let mut b: Vec<f64> = dynamic_threshold_elbow(&permuted, 0.15).unwrap().iter().map(|&i| permuted[i]).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn elbow_keeps_a_top_prefix(s in vec(0.0f64..1.0, 3..30)) {
        let sel = dynamic_threshold_elbow(&s, 0.15).unwrap();
        prop_assert!(!sel.is_empty() && sel.len() < s.len());
        let min_kept = sel.iter().map(|&i| s[i]).fold(f64::INFINITY, f64::min);
        for (i, &x) in s.iter().enumerate() {
            prop_assert_eq!(sel.contains(&i), x >= min_kept);
        }
    }

    #[test]
    fn fixed_rule_is_a_plain_cut(s in scores(40), tau in 0.0f64..1.0) {
        let sel = fixed_threshold(&s, tau);
        for (i, &x) in s.iter().enumerate() {
            prop_assert_eq!(sel.contains(&i), x >= tau);
        }
    }

    #[test]
    fn select_span_matches_enumeration(zs in vec(-5.0f64..5.0, 1..=16), shift in -5.0f64..5.0) {
        let ze: Vec<f64> = zs.iter().rev().map(|z| z + shift).collect();
        let (ps, pe) = span_probs(&zs, &ze);
        prop_assert!((ps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (i, j, p) = select_span(&ps, &pe, None).unwrap();
        let want = exhaustive(&ps, &pe);
        prop_assert_eq!((i, j), (want.0, want.1));
        prop_assert_eq!(p, want.2);
    }

    #[test]
    fn length_norm_is_decreasing(a in 1usize..500, b in 1usize..500, gamma in 0.01f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(length_norm(hi, gamma) <= length_norm(lo, gamma));
        prop_assert!(length_norm(lo, gamma) <= 1.0);
        prop_assert_eq!(length_norm(lo, 0.0), 1.0);
    }

    #[test]
    fn warmup_ramps_then_holds(total in 1usize..2000, frac in 0.0f64..0.5, base in 1e-6f64..1e-2) {
        let lrs: Vec<f64> = (0..total).map(|s| lr_schedule(s, total, base, frac)).collect();
        prop_assert!(lrs.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(lrs.iter().all(|&l| (0.0..=base).contains(&l)));
        prop_assert_eq!(lrs[0], if frac > 0.0 { 0.0 } else { base });
        let warmup = (frac * total as f64).ceil() as usize;
        if warmup < total {
            prop_assert_eq!(lrs[warmup], base);
        }
    }

    #[test]
    fn split_sizes_cover_the_corpus(n in 3usize..5000) {
        let s = proportional_sizes(n, DEFAULT_SPLIT);
        prop_assert_eq!(s.iter().sum::<usize>(), n);
        prop_assert!(s[0] >= s[1] && s[1] >= s[2]);
    }

    #[test]
    fn normalize_is_idempotent(text in "[ A-Za-z,.!?']{0,60}") {
        let once = normalize(&text);
        prop_assert_eq!(normalize(&once), once);
    }

    #[test]
    fn encoding_is_bounded_and_starts_with_cls(text in "[a-z ]{0,200}", max in 2usize..64) {
        let vocab = Vocab::build([text.as_str()]);
        let ids = vocab.encode(&text, max);
        prop_assert!(ids.len() <= max);
        prop_assert_eq!(ids[0], CLS_ID);
        prop_assert_eq!(ids.len(), (split_words(&text).len() + 1).min(max));
    }
}

#[test]
fn k_split_table() {
    assert_eq!(split_k(3).unwrap(), (2, 1));
    assert_eq!(split_k(4).unwrap(), (3, 1));
    assert_eq!(split_k(5).unwrap(), (3, 2));
    assert!(split_k(6).is_err());
}
