use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Result};

/// Sentence terminators. A cut happens after one of these when the next
/// character is whitespace or the end of the text.
pub const TERMINATORS: [char; 8] = ['.', '!', '?', ';', '。', '！', '？', '；'];

/// Non-empty, trimmed sentences in reading order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSeq(Vec<String>);

impl SentenceSeq {
    pub fn sentences(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

/// Splits `text` into sentences. Abbreviations are not special-cased, so
/// "Dr. Smith" becomes two sentences. Runs of terminators ("?!", "...")
/// stay with the sentence they end.
pub fn segment_sentences(text: &str) -> Result<SentenceSeq> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, ch)) = chars.next() {
        if !TERMINATORS.contains(&ch) {
            continue;
        }
        let cut = match chars.peek() {
            None => true,
            Some(&(_, next)) => next.is_whitespace(),
        };
        if cut {
            let end = i + ch.len_utf8();
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
    }
    push_trimmed(&mut out, &text[start..]);
    if out.is_empty() {
        return Err(Error::EmptyText);
    }
    Ok(SentenceSeq(out))
}

fn push_trimmed(out: &mut Vec<String>, fragment: &str) {
    let s = fragment.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}
