//! Transcript segmentation into speaker-attributed sentences.

/// One sentence of a transcript.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub speaker: String,
    pub text: String,
    /// Zero-based line index of the turn this sentence came from.
    pub turn: usize,
}

impl Sentence {
    pub fn is_customer(&self) -> bool {
        self.speaker.to_lowercase().contains("customer")
    }
}

/// Splits a turn on runs of `.`, `?` or `!` that are followed by whitespace
/// or the end of the text. Terminal punctuation stays with its sentence, so
/// `"1.5"` is not split.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i], '.' | '?' | '!') {
            let mut j = i;
            while j + 1 < chars.len() && matches!(chars[j + 1], '.' | '?' | '!') {
                j += 1;
            }
            if j + 1 == chars.len() || chars[j + 1].is_whitespace() {
                let s: String = chars[start..=j].iter().collect();
                let s = s.trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                start = j + 1;
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    let rest: String = chars[start.min(chars.len())..].iter().collect();
    let rest = rest.trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
    out
}

/// Splits `"Speaker: text"` lines into sentences. Lines without a speaker
/// prefix get an empty speaker.
pub fn segment_transcript(transcript: &str) -> Vec<Sentence> {
    let mut out = Vec::new();
    for (turn, line) in transcript.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (speaker, text) = match line.split_once(':') {
            Some((s, t)) if !s.is_empty() && s.len() <= 40 && !s.contains(['.', '?', '!']) => (s.trim(), t.trim()),
            _ => ("", line),
        };
        for s in split_sentences(text) {
            out.push(Sentence {
                speaker: speaker.to_string(),
                text: s,
                turn,
            });
        }
    }
    out
}

/// Match key for sentence-level scoring: lowercased, whitespace collapsed,
/// trailing terminal punctuation removed.
pub fn normalize(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed.trim_end_matches(['.', '?', '!', ' ']).to_string()
}
