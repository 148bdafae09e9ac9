//! Small templated premise/hypothesis set for exercising the NLI head.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

impl NliLabel {
    pub const ALL: [NliLabel; 3] = [NliLabel::Entailment, NliLabel::Contradiction, NliLabel::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliPair {
    pub premise: String,
    pub hypothesis: String,
    pub label: NliLabel,
}

// (premise, paraphrase, negation)
const FACTS: &[(&str, &str, &str)] = &[
    ("my card was declined at the store", "the store refused my card", "my card worked at the store"),
    ("i was charged twice for one purchase", "the same purchase was billed two times", "i was charged once for the purchase"),
    ("i do not recognize this charge", "this transaction is unknown to me", "i made this purchase myself"),
    ("my new card will not activate", "the activation of my new card fails", "my new card activated without problems"),
    ("i want a higher credit limit", "i would like my limit increased", "i want to lower my credit limit"),
    ("there is a late fee on my statement", "my statement shows a late fee", "my statement has no fees"),
    ("my payment has not posted yet", "the payment is still not showing", "my payment posted right away"),
    ("the interest rate went up this month", "my rate increased this month", "my interest rate stayed the same"),
    ("the merchant refunded my order", "i got my money back from the merchant", "the merchant kept my money"),
    ("my card was lost on the train", "i left my card on the train", "my card is safe in my wallet"),
];

/// `n` pairs with labels balanced to within one of `n / 3`, shuffled.
pub fn make_nli_toy_set<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<NliPair>> {
    if n < 3 {
        return Err(Error::Validation(format!("NLI toy set needs n >= 3, got {n}")));
    }
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let label = NliLabel::ALL[i % 3];
        let fi = rng.random_range(0..FACTS.len());
        let (premise, para, neg) = FACTS[fi];
        let hypothesis = match label {
            NliLabel::Entailment => para,
            NliLabel::Contradiction => neg,
            NliLabel::Neutral => {
                let others: Vec<usize> = (0..FACTS.len()).filter(|&j| j != fi).collect();
                let j = *others.choose(rng).expect("more than one fact");
                if rng.random_bool(0.5) { FACTS[j].0 } else { FACTS[j].1 }
            }
        };
        pairs.push(NliPair {
            premise: premise.to_string(),
            hypothesis: hypothesis.to_string(),
            label,
        });
    }
    pairs.shuffle(rng);
    Ok(pairs)
}
