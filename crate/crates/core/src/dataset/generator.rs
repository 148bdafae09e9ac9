//! Synthetic call-transcript corpus.
//!
//! Each transcript draws five distinct pool utterances, keeps the first `k`
//! of them (`k` ∈ {3, 4, 5}, balanced across the corpus), and splits those
//! into deep topics (first `k1`) and shallow topics (next `k2`). Deep topics
//! get one to three follow-up exchanges; shallow topics are mentioned once
//! and acknowledged. All kept utterances are inserted verbatim and become
//! the labels.

use rand::seq::index::sample;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pool::{Utterance, UtterancePool};
use super::transcript::{TranscriptExample, K_SPLITS};
use crate::error::{Error, Result};

pub const AGENT: &str = "Phone Rep";
pub const CUSTOMER: &str = "Customer";

/// Five distinct pool indices, uniform without replacement, in draw order.
pub fn sample_sel5<R: Rng + ?Sized>(pool: &UtterancePool, rng: &mut R) -> Result<Vec<usize>> {
    if pool.len() < 5 {
        return Err(Error::Validation(format!("utterance pool has {} rows, need at least 5", pool.len())));
    }
    Ok(sample(rng, pool.len(), 5).into_vec())
}

/// `count / 3` each of 3, 4 and 5, shuffled.
pub fn assign_k<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Result<Vec<usize>> {
    if count % 3 != 0 {
        return Err(Error::Validation(format!("transcript count {count} is not divisible by 3")));
    }
    let mut ks: Vec<usize> = [3, 4, 5].iter().flat_map(|&k| std::iter::repeat_n(k, count / 3)).collect();
    ks.shuffle(rng);
    Ok(ks)
}

/// Deep/shallow split: 3 → (2, 1), 4 → (3, 1), 5 → (3, 2).
pub fn split_k(k: usize) -> Result<(usize, usize)> {
    K_SPLITS
        .iter()
        .find(|(kk, _, _)| *kk == k)
        .map(|&(_, k1, k2)| (k1, k2))
        .ok_or_else(|| Error::Validation(format!("k = {k} is not one of 3, 4, 5")))
}

const GREETINGS: &[&str] = &[
    "Thank you for calling Credit Card Services. How may I help you today?",
    "Good morning, you've reached card member support. What can I do for you?",
    "Hello, thanks for calling. Who do I have the pleasure of speaking with today?",
];
const CUSTOMER_OPENERS: &[&str] = &[
    "Hi, thanks for taking my call.",
    "Hello, I hope you can help me.",
    "Hi there. I have a few things to sort out.",
    "Good morning. This is about my credit card.",
];
const TOPIC_LEAD_INS: &[&str] = &[
    "Also, I have another problem.",
    "There is one more thing.",
    "While I have you on the line, I have another question.",
    "Something else has been bothering me.",
];
const SHALLOW_ACKS: &[&str] = &[
    "I have noted that as well.",
    "Thanks for mentioning it, I will add a note to your account.",
    "Understood, I will look into that too.",
    "Okay, I will flag that for review.",
];
const CLOSINGS: &[(&str, &str, &str)] = &[
    (
        "Is there anything else I can help you with today?",
        "No, that's everything. Thank you.",
        "Thank you for calling. Have a great day.",
    ),
    (
        "Have I resolved everything for you today?",
        "Yes, I think so. Thanks for your help.",
        "You're welcome. Take care.",
    ),
    (
        "Anything else on your account I can check?",
        "No, that covers it.",
        "Thanks for being a card member. Goodbye.",
    ),
];

fn agent_questions(intent: &str) -> &'static [&'static str] {
    match intent {
        "card_declined" => &[
            "I'm sorry about that. Can you confirm the last four digits of your card?",
            "Do you remember the amount you were trying to pay?",
            "Where were you trying to use the card?",
            "Have you traveled outside the country recently?",
        ],
        "duplicate_charge" => &[
            "Let me check that for you. Could you tell me when and where the purchase was made?",
            "What was the amount of each charge?",
            "Did the merchant give you a receipt for both charges?",
            "Have you contacted the merchant about this?",
        ],
        "unrecognized_transaction" => &[
            "I can help you with that. Can you provide the transaction date and amount?",
            "Is the card still in your possession?",
            "Has anyone else had access to your card recently?",
            "Would you like me to block the card while we investigate?",
        ],
        "card_activation" => &[
            "I can help with activation. Can you read me the last four digits on the new card?",
            "What message do you see when you try to activate it?",
            "Can you verify your date of birth for me?",
            "Did the card arrive in a sealed envelope?",
        ],
        "credit_limit" => &[
            "I'd be happy to assist. May I know the reason for the increase?",
            "What is your current annual income?",
            "How much of an increase are you looking for?",
            "Has your employment changed in the last year?",
        ],
        "fees_and_interest" => &[
            "Let me pull up your statement. Which billing cycle are you looking at?",
            "Do you see the amount listed under fees?",
            "Were any of your payments made after the due date?",
            "Would you like me to explain how the charge was calculated?",
        ],
        "payment_not_processed" => &[
            "Let me verify the status. When did you initiate the payment?",
            "Which bank account did you use for the payment?",
            "Do you have a confirmation number?",
            "How much was the payment for?",
        ],
        _ => &["Can you tell me a bit more about that?"],
    }
}

fn customer_replies(intent: &str) -> &'static [&'static str] {
    match intent {
        "card_declined" => &[
            "It's {digits}.",
            "It was around {amount} dollars.",
            "I was at the checkout in town.",
            "No, I haven't left the state.",
            "Yes, the card is right here with me.",
        ],
        "duplicate_charge" => &[
            "It was on the {day} at the mall.",
            "Both were {amount} dollars.",
            "I only got one receipt.",
            "Not yet, I wanted to call you first.",
        ],
        "unrecognized_transaction" => &[
            "It posted on the {day} for {amount} dollars.",
            "Yes, I have the card in my wallet.",
            "No, nobody else uses it.",
            "Yes, please block it right away.",
        ],
        "card_activation" => &[
            "The last four digits are {digits}.",
            "It just says the request could not be completed.",
            "Sure, it's on file under my name.",
            "Yes, it was sealed when it arrived.",
        ],
        "credit_limit" => &[
            "I have some travel expenses coming up.",
            "I make about {amount} thousand a year now.",
            "Maybe a few thousand more would be enough.",
            "I started a new job in the spring.",
        ],
        "fees_and_interest" => &[
            "The statement that closed on the {day}.",
            "Yes, I see it listed there.",
            "I don't think so, I always pay on time.",
            "Yes, please walk me through it.",
        ],
        "payment_not_processed" => &[
            "I sent it on the {day}.",
            "It came from my usual checking account.",
            "The confirmation number is {digits}.",
            "It was {amount} dollars.",
        ],
        _ => &["Sure."],
    }
}

const GENERIC_REPLIES: &[&str] = &[
    "Yes, that's correct.",
    "Okay, I can wait.",
    "That would be great, thanks.",
    "Sure, give me a second.",
];
const DAYS: &[&str] = &["first", "third", "fifth", "tenth", "twelfth", "fifteenth", "twentieth", "twenty second"];
const AMOUNTS: &[&str] = &["thirty", "sixty", "ninety", "one hundred", "two hundred fifty", "four hundred"];

fn fill<R: Rng + ?Sized>(template: &str, rng: &mut R) -> String {
    let mut s = template.to_string();
    if s.contains("{digits}") {
        s = s.replace("{digits}", &format!("{:04}", rng.random_range(0..10_000)));
    }
    if s.contains("{day}") {
        s = s.replace("{day}", DAYS.choose(rng).expect("non-empty"));
    }
    if s.contains("{amount}") {
        s = s.replace("{amount}", AMOUNTS.choose(rng).expect("non-empty"));
    }
    s
}

fn pick<'a, R: Rng + ?Sized>(items: &'a [&'a str], rng: &mut R) -> &'a str {
    items.choose(rng).expect("non-empty template list")
}

/// Expands deep and shallow utterances into a two-party transcript.
pub fn synthesize_transcript<R: Rng + ?Sized>(
    id: &str,
    deep: &[&Utterance],
    shallow: &[&Utterance],
    rng: &mut R,
) -> TranscriptExample {
    let mut turns: Vec<(&str, String)> = Vec::new();
    turns.push((AGENT, pick(GREETINGS, rng).to_string()));
    turns.push((CUSTOMER, pick(CUSTOMER_OPENERS, rng).to_string()));

    // Shallow topics slot in after a random deep topic.
    let mut shallow_after: Vec<usize> = shallow.iter().map(|_| rng.random_range(0..deep.len().max(1))).collect();
    shallow_after.sort_unstable();

    let mut shallow_iter = shallow.iter().zip(shallow_after).peekable();
    for (di, utt) in deep.iter().enumerate() {
        let text = if di > 0 && rng.random_bool(0.3) {
            format!("{} {}", pick(TOPIC_LEAD_INS, rng), utt.text)
        } else {
            utt.text.clone()
        };
        turns.push((CUSTOMER, text));
        let exchanges = rng.random_range(1..=3);
        let questions = agent_questions(&utt.intent);
        let replies = customer_replies(&utt.intent);
        for _ in 0..exchanges {
            turns.push((AGENT, pick(questions, rng).to_string()));
            let reply = if rng.random_bool(0.25) { pick(GENERIC_REPLIES, rng) } else { pick(replies, rng) };
            turns.push((CUSTOMER, fill(reply, rng)));
        }
        while let Some((s, _)) = shallow_iter.next_if(|(_, after)| *after == di) {
            turns.push((CUSTOMER, s.text.clone()));
            turns.push((AGENT, pick(SHALLOW_ACKS, rng).to_string()));
        }
    }
    for (s, _) in shallow_iter {
        turns.push((CUSTOMER, s.text.clone()));
        turns.push((AGENT, pick(SHALLOW_ACKS, rng).to_string()));
    }

    let (a, c, bye) = *CLOSINGS.choose(rng).expect("non-empty");
    turns.push((AGENT, a.to_string()));
    turns.push((CUSTOMER, c.to_string()));
    turns.push((AGENT, bye.to_string()));

    let call_transcript = turns
        .iter()
        .map(|(who, text)| format!("{who}: {text}"))
        .collect::<Vec<_>>()
        .join("\n");
    let labels = deep.iter().chain(shallow).map(|u| u.text.clone()).collect();
    TranscriptExample {
        id: id.to_string(),
        call_transcript,
        labels,
        k: Some(deep.len() + shallow.len()),
        k1: Some(deep.len()),
        k2: Some(shallow.len()),
    }
}

/// Generates `n` transcripts; a pure function of `(pool, n, seed)`.
pub fn generate_corpus(pool: &UtterancePool, n: usize, seed: u64) -> Result<Vec<TranscriptExample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ks = assign_k(n, &mut rng)?;
    let width = n.to_string().len().max(4);
    let mut out = Vec::with_capacity(n);
    for (i, &k) in ks.iter().enumerate() {
        let sel5 = sample_sel5(pool, &mut rng)?;
        let (k1, k2) = split_k(k)?;
        let deep: Vec<&Utterance> = sel5[..k1].iter().map(|&j| pool.get(j)).collect();
        let shallow: Vec<&Utterance> = sel5[k1..k1 + k2].iter().map(|&j| pool.get(j)).collect();
        let id = format!("call-{:0width$}", i + 1);
        out.push(synthesize_transcript(&id, &deep, &shallow, &mut rng));
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<TranscriptExample>,
    pub validation: Vec<TranscriptExample>,
    pub test: Vec<TranscriptExample>,
}

pub const DEFAULT_SPLIT: [usize; 3] = [700, 300, 200];

/// Seeded shuffle, then consecutive train/validation/test blocks of the
/// given sizes. Sizes must sum to the dataset size.
pub fn split_dataset(data: &[TranscriptExample], sizes: [usize; 3], seed: u64) -> Result<Splits> {
    let total: usize = sizes.iter().sum();
    if total != data.len() {
        return Err(Error::Validation(format!(
            "split sizes {sizes:?} sum to {total}, dataset has {}",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |range: std::ops::Range<usize>| order[range].iter().map(|&i| data[i].clone()).collect();
    Ok(Splits {
        train: take(0..sizes[0]),
        validation: take(sizes[0]..sizes[0] + sizes[1]),
        test: take(sizes[0] + sizes[1]..total),
    })
}

/// Scales `ratio` to `n` items; rounding remainders go to the first split.
pub fn proportional_sizes(n: usize, ratio: [usize; 3]) -> [usize; 3] {
    let sum: usize = ratio.iter().sum::<usize>().max(1);
    let val = n * ratio[1] / sum;
    let test = n * ratio[2] / sum;
    [n - val - test, val, test]
}
