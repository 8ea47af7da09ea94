use serde::{Deserialize, Serialize};

/// Tokens of a text together with their byte spans in the original.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    text: String,
    tokens: Vec<String>,
    offsets: Vec<(usize, usize)>,
}

impl TokenSeq {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `(start, end)` byte offsets, one per token.
    pub fn offsets(&self) -> &[(usize, usize)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Original substring covering tokens `first..=last`.
    pub fn span_text(&self, first: usize, last: usize) -> Option<&str> {
        if first > last || last >= self.tokens.len() {
            return None;
        }
        Some(&self.text[self.offsets[first].0..self.offsets[last].1])
    }

    /// Index of the token starting exactly at byte `start`.
    pub fn token_starting_at(&self, start: usize) -> Option<usize> {
        self.offsets.iter().position(|&(s, _)| s == start)
    }

    /// Index of the token ending exactly at byte `end`.
    pub fn token_ending_at(&self, end: usize) -> Option<usize> {
        self.offsets.iter().position(|&(_, e)| e == end)
    }
}

pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c,
            '\u{00A1}' | '\u{00AB}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}'
            | '\u{2010}'..='\u{2027}'
            | '\u{2030}'..='\u{205E}'
            | '\u{3001}'..='\u{3003}'
            | '\u{3008}'..='\u{3011}'
            | '\u{FF01}'..='\u{FF0F}'
            | '\u{FF1A}'..='\u{FF1F}')
}

/// Whitespace split, then every leading and trailing punctuation character
/// of a chunk becomes its own token. Interior punctuation (hyphens,
/// apostrophes, decimal points) stays inside the token.
pub fn tokenize(text: &str) -> TokenSeq {
    let mut tokens = Vec::new();
    let mut offsets = Vec::new();
    let mut push = |s: usize, e: usize| {
        tokens.push(text[s..e].to_string());
        offsets.push((s, e));
    };

    let mut chunk_start = None;
    let bytes_end = text.len();
    let mut chunks = Vec::new();
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), chunk_start) {
            (true, Some(s)) => {
                chunks.push((s, i));
                chunk_start = None;
            }
            (false, None) => chunk_start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = chunk_start {
        chunks.push((s, bytes_end));
    }

    for (start, end) in chunks {
        let chunk = &text[start..end];
        let mut head = start;
        let mut leading = Vec::new();
        for (i, c) in chunk.char_indices() {
            if !is_punctuation(c) {
                break;
            }
            leading.push((start + i, start + i + c.len_utf8()));
            head = start + i + c.len_utf8();
        }
        let mut tail = end;
        let mut trailing = Vec::new();
        for (i, c) in text[head..end].char_indices().rev() {
            if !is_punctuation(c) {
                break;
            }
            trailing.push((head + i, head + i + c.len_utf8()));
            tail = head + i;
        }
        for (s, e) in leading {
            push(s, e);
        }
        if head < tail {
            push(head, tail);
        }
        for (s, e) in trailing.into_iter().rev() {
            push(s, e);
        }
    }

    TokenSeq {
        text: text.to_string(),
        tokens,
        offsets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s).tokens().to_vec()
    }

    #[test]
    fn question_mark_split() {
        assert_eq!(toks("Who wrote Hamlet?"), ["Who", "wrote", "Hamlet", "?"]);
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n\t").is_empty());
    }

    #[test]
    fn internal_hyphens_kept() {
        assert_eq!(toks("state-of-the-art."), ["state-of-the-art", "."]);
    }

    #[test]
    fn leading_and_trailing_runs() {
        assert_eq!(toks("(\"quoted\"),"), ["(", "\"", "quoted", "\"", ")", ","]);
        assert_eq!(toks("..."), [".", ".", "."]);
        assert_eq!(toks("don't 3.14 «oui»"), ["don't", "3.14", "«", "oui", "»"]);
    }

    #[test]
    fn span_text_uses_offsets() {
        let seq = tokenize("The sky is blue.");
        assert_eq!(seq.span_text(2, 3), Some("is blue"));
        assert_eq!(seq.span_text(3, 2), None);
        assert_eq!(seq.span_text(0, 9), None);
    }

    proptest! {
        #[test]
        fn offsets_round_trip(text in "[a-zA-Z0-9 .,;:!?'\"()\\-é漢\u{2014}\n]{0,60}") {
            let seq = tokenize(&text);
            let mut prev_end = 0;
            for (tok, &(s, e)) in seq.tokens().iter().zip(seq.offsets()) {
                prop_assert!(s >= prev_end && s < e && e <= text.len());
                prop_assert_eq!(&text[s..e], tok.as_str());
                prop_assert!(!tok.chars().any(char::is_whitespace));
                prev_end = e;
            }
        }
    }
}
