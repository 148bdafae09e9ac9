use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const K_SPLITS: [(usize, usize, usize); 3] = [(3, 2, 1), (4, 3, 1), (5, 3, 2)];

/// One call transcript with its relevant customer sentences.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptExample {
    pub id: String,
    /// Newline-separated `"Speaker: text"` turns.
    pub call_transcript: String,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<usize>,
}

impl TranscriptExample {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.labels.iter().find(|l| !self.call_transcript.contains(l.as_str())) {
            return Err(Error::Validation(format!(
                "{}: label {l:?} does not occur verbatim in the transcript",
                self.id
            )));
        }
        match (self.k, self.k1, self.k2) {
            (None, None, None) => Ok(()),
            (Some(k), Some(k1), Some(k2)) if K_SPLITS.contains(&(k, k1, k2)) => Ok(()),
            other => Err(Error::Validation(format!("{}: invalid (k, k1, k2) = {other:?}", self.id))),
        }
    }
}

/// A record skipped while reading external data.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rejected {
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub examples: Vec<TranscriptExample>,
    pub rejected: Vec<Rejected>,
}

/// Parses JSONL text. Malformed JSON is a hard error; records that parse but
/// violate the label-verbatim or k-split invariants are rejected and reported.
pub fn parse_jsonl(text: &str) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: TranscriptExample = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        match ex.validate() {
            Ok(()) => report.examples.push(ex),
            Err(e) => report.rejected.push(Rejected {
                line: i + 1,
                id: Some(ex.id.clone()),
                reason: e.to_string(),
            }),
        }
    }
    Ok(report)
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<LoadReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| Error::io(path, e))?);
        text.push('\n');
    }
    parse_jsonl(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn to_jsonl(examples: &[TranscriptExample]) -> Result<String> {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(ex)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl(path: impl AsRef<Path>, examples: &[TranscriptExample]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(to_jsonl(examples)?.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> TranscriptExample {
        TranscriptExample {
            id: "t1".into(),
            call_transcript: "Customer: I was charged twice for the same purchase.\nAgent: Let me check.".into(),
            labels: vec!["I was charged twice for the same purchase.".into()],
            k: Some(3),
            k1: Some(2),
            k2: Some(1),
        }
    }

    #[test]
    fn schema_field_order() {
        let line = to_jsonl(&[example()]).unwrap();
        let keys: Vec<&str> = ["\"id\"", "\"call_transcript\"", "\"labels\"", "\"k\"", "\"k1\"", "\"k2\""]
            .into_iter()
            .collect();
        let mut last = 0;
        for k in keys {
            let at = line.find(k).unwrap();
            assert!(at >= last);
            last = at;
        }
    }

    #[test]
    fn reader_accepts_missing_metadata() {
        let r = parse_jsonl(r#"{"id":"x","call_transcript":"Customer: Hi.","labels":["Hi."]}"#).unwrap();
        assert_eq!(r.examples.len(), 1);
        assert_eq!(r.examples[0].k, None);
    }

    #[test]
    fn non_verbatim_label_is_rejected_not_fatal() {
        let text = format!(
            "{}\n{}\n",
            r#"{"id":"bad","call_transcript":"Customer: Hi.","labels":["Bye."]}"#,
            serde_json::to_string(&example()).unwrap()
        );
        let r = parse_jsonl(&text).unwrap();
        assert_eq!(r.examples.len(), 1);
        assert_eq!(r.rejected.len(), 1);
        assert_eq!(r.rejected[0].line, 1);
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse_jsonl("\n{not json").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn invalid_k_split_is_rejected() {
        let mut ex = example();
        ex.k1 = Some(1);
        assert!(ex.validate().is_err());
    }
}
