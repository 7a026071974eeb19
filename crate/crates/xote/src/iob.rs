//! IOB tagging of character-span target annotations.
//!
//! The scheme is the IOB1 variant: a chunk opens with `I`, and `B` is used
//! only to mark the first token of a chunk that immediately follows another
//! chunk. `"The wine list is nice"` with the target "wine list" therefore
//! tags as `O I I O O`, and two adjacent single-token targets tag as `I B`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One of the three IOB tags.
///
/// The declared order `O < I < B` is the total order used for tie-breaking
/// when a predicted distribution has exactly equal probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tag {
    O,
    I,
    B,
}

impl Tag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::O => "O",
            Tag::I => "I",
            Tag::B => "B",
        }
    }

    pub fn parse(s: &str) -> Result<Tag> {
        match s {
            "O" => Ok(Tag::O),
            "I" => Ok(Tag::I),
            "B" => Ok(Tag::B),
            other => Err(Error::Format(format!("unknown IOB tag {other:?}"))),
        }
    }

    /// Index into model tag distributions, which are ordered (I, O, B).
    pub fn dist_index(&self) -> usize {
        match self {
            Tag::I => 0,
            Tag::O => 1,
            Tag::B => 2,
        }
    }

    pub fn from_dist_index(i: usize) -> Tag {
        match i {
            0 => Tag::I,
            1 => Tag::O,
            2 => Tag::B,
            _ => panic!("tag distribution index out of range: {i}"),
        }
    }
}

/// A token with half-open character offsets into its sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// 0-based inclusive character offset.
    pub start: usize,
    /// Exclusive character offset.
    pub end: usize,
}

impl Token {
    pub fn new(text: impl Into<String>, start: usize, end: usize) -> Token {
        Token {
            text: text.into(),
            start,
            end,
        }
    }
}

/// An opinion target expression as a character span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

impl TargetSpan {
    pub fn new(start: usize, end: usize, surface: impl Into<String>) -> TargetSpan {
        TargetSpan {
            start,
            end,
            surface: surface.into(),
        }
    }
}

/// Slice a string by character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> String {
    text.chars()
        .skip(start)
        .take(end.saturating_sub(start))
        .collect()
}

/// Number of characters in a string (offsets throughout the crate are
/// character-based, never byte-based).
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Encode token-aligned target spans as an IOB1 tag sequence.
///
/// Spans must be sorted, non-overlapping, and must start and end exactly on
/// token boundaries (misaligned raw annotations are repaired upstream during
/// ingestion); anything else is an alignment error.
pub fn spans_to_tags(tokens: &[Token], spans: &[TargetSpan]) -> Result<Vec<Tag>> {
    // span index covering each token, if any
    let mut owner: Vec<Option<usize>> = vec![None; tokens.len()];
    let mut prev_end = 0usize;
    for (si, span) in spans.iter().enumerate() {
        if span.start >= span.end {
            return Err(Error::Alignment(format!(
                "empty span {}..{} ({:?})",
                span.start, span.end, span.surface
            )));
        }
        if si > 0 && span.start < prev_end {
            return Err(Error::Alignment(format!(
                "overlapping or unsorted spans at {}..{} ({:?})",
                span.start, span.end, span.surface
            )));
        }
        prev_end = span.end;

        let mut covered_start = None;
        let mut covered_end = None;
        for (ti, tok) in tokens.iter().enumerate() {
            let overlaps = tok.start < span.end && tok.end > span.start;
            if !overlaps {
                continue;
            }
            if tok.start < span.start || tok.end > span.end {
                return Err(Error::Alignment(format!(
                    "span {}..{} ({:?}) does not align with token {:?} at {}..{}",
                    span.start, span.end, span.surface, tok.text, tok.start, tok.end
                )));
            }
            owner[ti] = Some(si);
            covered_start.get_or_insert(tok.start);
            covered_end = Some(tok.end);
        }
        if covered_start != Some(span.start) || covered_end != Some(span.end) {
            return Err(Error::Alignment(format!(
                "span {}..{} ({:?}) boundaries do not coincide with token boundaries",
                span.start, span.end, span.surface
            )));
        }
    }

    let mut tags = Vec::with_capacity(tokens.len());
    for ti in 0..tokens.len() {
        let tag = match owner[ti] {
            None => Tag::O,
            Some(si) => {
                let first_of_span = ti == 0 || owner[ti - 1] != Some(si);
                let prev_in_other_span =
                    ti > 0 && owner[ti - 1].is_some() && owner[ti - 1] != Some(si);
                if first_of_span && prev_in_other_span {
                    Tag::B
                } else {
                    Tag::I
                }
            }
        };
        tags.push(tag);
    }
    Ok(tags)
}

/// Decode an IOB tag sequence back into character spans.
///
/// Decoding is total and permissive: `B` always opens a new chunk, `I`
/// extends the current chunk or opens one when none is active (so ill-formed
/// model outputs such as a leading `B` still decode). Surfaces are sliced
/// from `text` by character offset.
pub fn tags_to_spans(text: &str, tokens: &[Token], tags: &[Tag]) -> Result<Vec<TargetSpan>> {
    if tokens.len() != tags.len() {
        return Err(Error::Contract(format!(
            "token/tag length mismatch: {} vs {}",
            tokens.len(),
            tags.len()
        )));
    }
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None; // (start, end) char offsets
    for (tok, tag) in tokens.iter().zip(tags) {
        match tag {
            Tag::O => {
                if let Some((s, e)) = open.take() {
                    spans.push(TargetSpan::new(s, e, char_slice(text, s, e)));
                }
            }
            Tag::B => {
                if let Some((s, e)) = open.take() {
                    spans.push(TargetSpan::new(s, e, char_slice(text, s, e)));
                }
                open = Some((tok.start, tok.end));
            }
            Tag::I => match open {
                Some((_, ref mut e)) => *e = tok.end,
                None => open = Some((tok.start, tok.end)),
            },
        }
    }
    if let Some((s, e)) = open {
        spans.push(TargetSpan::new(s, e, char_slice(text, s, e)));
    }
    Ok(spans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn whitespace_tokens(text: &str) -> Vec<Token> {
        let chars: Vec<char> = text.chars().collect();
        let mut tokens = Vec::new();
        let mut start = None;
        for (i, &c) in chars.iter().enumerate() {
            if c.is_whitespace() {
                if let Some(s) = start.take() {
                    tokens.push(Token::new(chars[s..i].iter().collect::<String>(), s, i));
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            tokens.push(Token::new(
                chars[s..].iter().collect::<String>(),
                s,
                chars.len(),
            ));
        }
        tokens
    }

    #[test]
    fn wine_list_encodes_as_o_i_i() {
        let text = "The wine list is also really nice .";
        let tokens = whitespace_tokens(text);
        let spans = vec![TargetSpan::new(4, 13, "wine list")];
        let tags = spans_to_tags(&tokens, &spans).unwrap();
        assert_eq!(
            tags,
            vec![
                Tag::O,
                Tag::I,
                Tag::I,
                Tag::O,
                Tag::O,
                Tag::O,
                Tag::O,
                Tag::O
            ]
        );
    }

    #[test]
    fn no_spans_is_all_o() {
        let tokens = whitespace_tokens("nothing to see here");
        let tags = spans_to_tags(&tokens, &[]).unwrap();
        assert!(tags.iter().all(|&t| t == Tag::O));
    }

    #[test]
    fn adjacent_spans_force_b() {
        let text = "great food service";
        let tokens = whitespace_tokens(text);
        let spans = vec![
            TargetSpan::new(6, 10, "food"),
            TargetSpan::new(11, 18, "service"),
        ];
        let tags = spans_to_tags(&tokens, &spans).unwrap();
        assert_eq!(tags, vec![Tag::O, Tag::I, Tag::B]);
    }

    #[test]
    fn misaligned_span_is_rejected() {
        let text = "The wine list is nice";
        let tokens = whitespace_tokens(text);
        // "ine list" starts mid-token.
        let spans = vec![TargetSpan::new(5, 13, "ine list")];
        let err = spans_to_tags(&tokens, &spans).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
    }

    #[test]
    fn decode_wine_list() {
        let text = "The wine list is also really nice .";
        let tokens = whitespace_tokens(text);
        let tags = vec![
            Tag::O,
            Tag::I,
            Tag::I,
            Tag::O,
            Tag::O,
            Tag::O,
            Tag::O,
            Tag::O,
        ];
        let spans = tags_to_spans(text, &tokens, &tags).unwrap();
        assert_eq!(spans, vec![TargetSpan::new(4, 13, "wine list")]);
    }

    #[test]
    fn decode_all_o_is_empty() {
        let text = "a b c";
        let tokens = whitespace_tokens(text);
        let spans = tags_to_spans(text, &tokens, &[Tag::O, Tag::O, Tag::O]).unwrap();
        assert!(spans.is_empty());
    }

    #[test]
    fn leading_b_opens_span_at_token_zero() {
        let text = "food was good";
        let tokens = whitespace_tokens(text);
        let spans = tags_to_spans(text, &tokens, &[Tag::B, Tag::O, Tag::O]).unwrap();
        assert_eq!(spans, vec![TargetSpan::new(0, 4, "food")]);
    }

    #[test]
    fn b_never_follows_o_in_encoded_output() {
        let text = "x aa bb cc dd";
        let tokens = whitespace_tokens(text);
        let spans = vec![TargetSpan::new(2, 4, "aa"), TargetSpan::new(5, 7, "bb")];
        let tags = spans_to_tags(&tokens, &spans).unwrap();
        for w in tags.windows(2) {
            if w[1] == Tag::B {
                assert!(w[0] == Tag::I || w[0] == Tag::B);
            }
        }
    }

    #[test]
    fn tag_order_for_tie_breaking() {
        assert!(Tag::O < Tag::I);
        assert!(Tag::I < Tag::B);
    }

    /// Random non-overlapping token-aligned span sets over a synthetic
    /// sentence, as (token_start, token_len) pairs.
    fn span_set_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..20).prop_flat_map(|n_tokens| {
            let spans =
                prop::collection::vec((0usize..n_tokens, 1usize..4), 0..6).prop_map(move |raw| {
                    let mut picked: Vec<(usize, usize)> = Vec::new();
                    let mut used_until = 0usize;
                    let mut sorted = raw;
                    sorted.sort_unstable();
                    for (start, len) in sorted {
                        if start < used_until {
                            continue;
                        }
                        let end = (start + len).min(n_tokens);
                        if end <= start {
                            continue;
                        }
                        picked.push((start, end - start));
                        used_until = end;
                    }
                    picked
                });
            (Just(n_tokens), spans)
        })
    }

    proptest! {
        #[test]
        fn roundtrip_identity((n_tokens, span_toks) in span_set_strategy()) {
            // Build a sentence of single-char tokens separated by spaces.
            let text: String = (0..n_tokens)
                .map(|i| char::from(b'a' + (i % 26) as u8).to_string())
                .collect::<Vec<_>>()
                .join(" ");
            let tokens = whitespace_tokens(&text);
            let spans: Vec<TargetSpan> = span_toks
                .iter()
                .map(|&(ts, len)| {
                    let s = tokens[ts].start;
                    let e = tokens[ts + len - 1].end;
                    TargetSpan::new(s, e, char_slice(&text, s, e))
                })
                .collect();
            let tags = spans_to_tags(&tokens, &spans).unwrap();
            let decoded = tags_to_spans(&text, &tokens, &tags).unwrap();
            prop_assert_eq!(decoded, spans);
        }

        #[test]
        fn decoded_span_count_matches_tag_census(tags in prop::collection::vec(0usize..3, 1..24)) {
            let tags: Vec<Tag> = tags.into_iter().map(Tag::from_dist_index).collect();
            let text: String = (0..tags.len())
                .map(|_| "t".to_string())
                .collect::<Vec<_>>()
                .join(" ");
            let tokens = whitespace_tokens(&text);
            let spans = tags_to_spans(&text, &tokens, &tags).unwrap();
            let mut expected = 0usize;
            for (i, t) in tags.iter().enumerate() {
                match t {
                    Tag::B => expected += 1,
                    Tag::I if i == 0 || tags[i - 1] == Tag::O => expected += 1,
                    _ => {}
                }
            }
            prop_assert_eq!(spans.len(), expected);
        }
    }
}
