//! Built-in pool of customer utterances for credit-card fee and payment
//! issues, grouped into seven intents.
//!
//! Rows are expanded from fixed frames in a fixed order, so the pool is
//! identical on every run. Every row is a single sentence with no internal
//! `.`, `?` or `!`, which keeps labels intact under sentence segmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROWS_PER_INTENT: usize = 143;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub intent: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UtterancePool {
    rows: Vec<Utterance>,
}

const WHEN: &[&str] = &["yesterday", "last night", "this morning", "on Monday", "over the weekend", "last week"];
const PLACE: &[&str] = &[
    "the grocery store",
    "the gas station",
    "a restaurant",
    "the pharmacy",
    "the airport",
    "an online store",
    "the hotel",
    "the hardware store",
];
const PAY_TARGET: &[&str] = &[
    "my phone bill",
    "my electric bill",
    "for my groceries",
    "for dinner",
    "for a hotel room",
    "at the pharmacy",
];
const CONTEXT: &[&str] = &[
    "when I shop online",
    "at the same store",
    "even after paying my balance",
    "when I travel",
    "at the gas pump",
    "for small purchases",
];
const CARD: &[&str] = &["rewards card", "travel card", "business card", "student card"];
const ACTION: &[&str] = &["buy groceries", "pay for gas", "book a flight", "shop online", "pay a bill", "order food"];
const ITEM: &[&str] = &[
    "my coffee",
    "a pair of shoes",
    "my groceries",
    "a hotel stay",
    "a plane ticket",
    "my phone repair",
];
const MERCHANT: &[&str] = &["Amazon", "Uber", "Netflix", "Walmart", "Target", "Starbucks", "Spotify", "Delta"];
const AMOUNT: &[&str] = &["forty", "eighty five", "one hundred twenty", "two hundred", "three hundred fifty", "five hundred"];
const STATEMENT: &[&str] = &["credit card statement", "monthly statement", "online statement"];
const ARRIVED: &[&str] = &["today", "yesterday", "last week", "this morning", "two days ago", "on Monday"];
const CHANNEL: &[&str] = &["app", "website", "phone line", "text message"];
const VIA: &[&str] = &["online", "in the app", "by phone", "at an ATM"];
const PURPOSE: &[&str] = &[
    "for travel",
    "for groceries",
    "for my business",
    "for online shopping",
    "at the gas station",
    "abroad",
];
const PLAN: &[&str] = &[
    "travel next week",
    "go shopping",
    "pay my rent",
    "book a flight",
    "start my trip",
    "make a big purchase",
];
const REASON: &[&str] = &[
    "for an upcoming trip",
    "because my income went up",
    "to cover a home repair",
    "before the holidays",
    "for my wedding expenses",
    "to lower my utilization",
    "for a medical bill",
    "for moving costs",
];
const BIG_AMOUNT: &[&str] = &["five thousand", "eight thousand", "ten thousand", "twelve thousand", "fifteen thousand", "twenty thousand"];
const NEED: &[&str] = &[
    "my monthly expenses",
    "a family vacation",
    "my business purchases",
    "an emergency repair",
    "my upcoming move",
    "holiday shopping",
];
const FEE: &[&str] = &[
    "late fee",
    "annual fee",
    "foreign transaction fee",
    "cash advance fee",
    "balance transfer fee",
    "returned payment fee",
];
const PAY_METHOD: &[&str] = &["online", "automatic", "bank transfer", "mobile app", "phone", "mailed check"];
const BANK: &[&str] = &["checking", "savings", "joint", "business", "credit union", "new"];
const PAY_VIA: &[&str] = &["online", "in the app", "by phone", "at the branch", "through my bank", "with a check"];

/// Expands `frame` over the cartesian product of `slots`, replacing `{0}`,
/// `{1}`, ... in order. The first slot varies slowest.
fn expand(frame: &str, slots: &[&[&str]]) -> Vec<String> {
    let mut out = vec![frame.to_string()];
    for (i, values) in slots.iter().enumerate() {
        let key = format!("{{{i}}}");
        out = out
            .iter()
            .flat_map(|partial| values.iter().map(|v| partial.replace(&key, v)))
            .collect();
    }
    out
}

fn intent_rows(intent: &str) -> Vec<String> {
    let mut rows: Vec<String> = Vec::new();
    let mut push = |frame: &str, slots: &[&[&str]]| rows.extend(expand(frame, slots));
    match intent {
        "card_declined" => {
            push("I tried to pay with my card yesterday but it didn't go through.", &[]);
            push("Why was it declined?", &[]);
            push("My card was declined at {0} {1}.", &[PLACE, WHEN]);
            push("I tried to pay {0} with my card {1} but it didn't go through.", &[PAY_TARGET, WHEN]);
            push("Why does my card keep getting declined {0}?", &[CONTEXT]);
            push("The payment at {0} was rejected even though I have available credit.", &[PLACE]);
            push("My {0} was declined when I tried to {1}.", &[CARD, ACTION]);
            push("Can you tell me why my card was declined {0}?", &[WHEN]);
            push("I keep getting an error when I use my card {0}.", &[CONTEXT]);
            push("Is there a reason my card was blocked at {0}?", &[PLACE]);
        }
        "duplicate_charge" => {
            push("I was charged twice for the same purchase.", &[]);
            push("I was charged twice for {0} at {1}.", &[ITEM, PLACE]);
            push("There are two identical charges from {0} on my account.", &[MERCHANT]);
            push("I see a duplicate charge of {0} dollars from {1}.", &[AMOUNT, MERCHANT]);
            push("The same charge for {0} shows up twice on my {1}.", &[ITEM, STATEMENT]);
            push("Why was I billed two times for {0}?", &[ITEM]);
            push("{0} charged me twice {1}.", &[MERCHANT, WHEN]);
        }
        "unrecognized_transaction" => {
            push("There is a vendor name I don't recognize on my credit card statement.", &[]);
            push("There is a charge from {0} that I don't recognize.", &[MERCHANT]);
            push("I don't recognize a {0} dollar transaction from {1}.", &[AMOUNT, WHEN]);
            push("Someone used my card at {0} without my permission.", &[PLACE]);
            push("There is a vendor name I don't recognize on my {0}.", &[&STATEMENT[1..]]);
            push("I think there is a fraudulent charge from {0} on my account.", &[MERCHANT]);
            push("I never made a purchase at {0} {1}.", &[PLACE, WHEN]);
            push("My {0} shows a payment to {1} that I never authorized.", &[STATEMENT, MERCHANT]);
            push("Someone may have stolen my card details to shop at {0}.", &[PLACE]);
        }
        "card_activation" => {
            push("I need to activate my new {0}.", &[CARD]);
            push("My {0} arrived {1} but I can't activate it.", &[CARD, ARRIVED]);
            push("The activation code for my {0} is not working.", &[CARD]);
            push("I can't activate the card I received {0} through the {1}.", &[ARRIVED, CHANNEL]);
            push("How do I activate the replacement card you sent me {0}?", &[ARRIVED]);
            push("My new card still says inactive after I tried to activate it {0}.", &[VIA]);
            push("I want to activate my {0} so I can use it {1}.", &[CARD, PURPOSE]);
            push("The {0} keeps rejecting my card activation.", &[CHANNEL]);
            push("Why won't my {0} activate?", &[CARD]);
            push("I received a new card {0} and it won't let me activate it {1}.", &[ARRIVED, VIA]);
            push("Can you help me activate the card that came in the mail {0}?", &[ARRIVED]);
            push("I need help turning on my {0} before I {1}.", &[CARD, PLAN]);
        }
        "credit_limit" => {
            push("I want to increase my credit limit.", &[]);
            push("I want to increase my credit limit {0}.", &[REASON]);
            push("Can I get my credit limit raised to {0} dollars?", &[BIG_AMOUNT]);
            push("My credit limit is too low for {0}.", &[NEED]);
            push("I would like to request a higher limit on my {0}.", &[CARD]);
            push("How can I increase the limit on my {0} {1}?", &[CARD, REASON]);
            push("I need a credit limit increase {0}.", &[REASON]);
            push("Why was my request for a higher credit limit denied {0}?", &[WHEN]);
            push("Is it possible to raise my limit to {0} dollars {1}?", &[BIG_AMOUNT, REASON]);
            push("I keep hitting my credit limit when I {0}.", &[ACTION]);
            push("My {0} limit needs to go up to {1} dollars.", &[CARD, BIG_AMOUNT]);
        }
        "fees_and_interest" => {
            push("I can't find the interest charges on my last bill.", &[]);
            push("Why was I charged a {0} {1}?", &[FEE, WHEN]);
            push("I don't understand the {0} on my {1}.", &[FEE, STATEMENT]);
            push("Can you waive the {0} that was added {1}?", &[FEE, WHEN]);
            push("My interest rate went up without any notice {0}.", &[WHEN]);
            push("The {0} on my account seems too high.", &[FEE]);
            push("I was never told about a {0} when I opened my {1}.", &[FEE, CARD]);
            push("Why am I paying interest when I paid my {0} in full?", &[STATEMENT]);
            push("There is a {0} of {1} dollars that I want removed.", &[FEE, AMOUNT]);
        }
        "payment_not_processed" => {
            push("Why has my payment not gone through yet?", &[]);
            push("I made a payment {0} but it still shows as pending.", &[WHEN]);
            push("My {0} payment has not been applied to my balance.", &[PAY_METHOD]);
            push("I paid {0} dollars {1} and my balance did not change.", &[AMOUNT, WHEN]);
            push("My automatic payment failed {0}.", &[WHEN]);
            push("The payment I scheduled {0} never posted to my account.", &[WHEN]);
            push("Why was my {0} payment returned?", &[PAY_METHOD]);
            push("I set up a payment from my {0} account but it never went through.", &[BANK]);
            push("My payment of {0} dollars {1} is missing from my account.", &[AMOUNT, WHEN]);
            push("I tried to pay my bill {0} {1} and got an error.", &[PAY_VIA, WHEN]);
        }
        _ => {}
    }
    rows
}

pub const INTENTS: [&str; 7] = [
    "card_declined",
    "duplicate_charge",
    "unrecognized_transaction",
    "card_activation",
    "credit_limit",
    "fees_and_interest",
    "payment_not_processed",
];

impl UtterancePool {
    /// 7 intents × 143 rows.
    pub fn builtin() -> Self {
        let mut rows = Vec::with_capacity(INTENTS.len() * ROWS_PER_INTENT);
        let mut seen = std::collections::HashSet::new();
        for intent in INTENTS {
            let mut taken = 0;
            for text in intent_rows(intent) {
                if taken == ROWS_PER_INTENT {
                    break;
                }
                if seen.insert(text.clone()) {
                    rows.push(Utterance {
                        text,
                        intent: intent.to_string(),
                    });
                    taken += 1;
                }
            }
        }
        Self { rows }
    }

    pub fn from_rows(rows: Vec<Utterance>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.text.trim().is_empty()) {
            return Err(Error::Validation(format!("empty utterance in intent {:?}", r.intent)));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Utterance] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, i: usize) -> &Utterance {
        &self.rows[i]
    }
}
