//! SemEval ABSA corpus ingestion: XML parsing, offset-preserving
//! tokenization, span/token alignment repair, and a CoNLL-style column
//! format for tokenized corpora.

use crate::error::{Error, Result};
use crate::iob::{char_len, char_slice, spans_to_tags, tags_to_spans, Tag, TargetSpan, Token};
use log::{info, warn};
use serde::Serialize;
use std::collections::HashSet;
use std::io::{BufRead, Write};

/// A tokenized, span-annotated review sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub id: String,
    pub language: String,
    pub text: String,
    pub tokens: Vec<Token>,
    pub targets: Vec<TargetSpan>,
}

impl Sentence {
    /// Gold IOB tags for the (already repaired) target spans.
    pub fn gold_tags(&self) -> Result<Vec<Tag>> {
        spans_to_tags(&self.tokens, &self.targets)
            .map_err(|e| Error::Alignment(format!("sentence {}: {e}", self.id)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// A set of sentences for one language and split.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub language: String,
    pub split: Split,
    pub sentences: Vec<Sentence>,
}

/// What happened during ingestion; serialized as the ingest report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    pub language: String,
    pub sentences_parsed: usize,
    pub sentences_kept: usize,
    pub null_targets_dropped: usize,
    pub duplicate_spans_dropped: usize,
    pub spans_snapped: usize,
    pub excluded: Vec<ExcludedSentence>,
    /// Out-of-vocabulary statistics, one entry per embedding table the
    /// corpus was checked against.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub oov: Vec<OovStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OovStats {
    pub table_language: String,
    pub tokens: usize,
    pub oov_tokens: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExcludedSentence {
    pub id: String,
    pub reason: String,
}

/// Parse a SemEval-2016 ABSA XML stream (Reviews/Review/sentences/sentence
/// with text and Opinion elements carrying target/from/to attributes).
///
/// Opinions with `target="NULL"` are dropped; several opinions annotating the
/// same character range (multi-category annotations) collapse into one span.
/// Offsets out of range are data errors naming the sentence.
pub fn parse_semeval_xml(xml: &str, language: &str) -> Result<(Vec<RawSentence>, usize, usize)> {
    let doc = roxmltree::Document::parse(xml)
        .map_err(|e| Error::Format(format!("malformed XML: {e}")))?;
    let mut sentences = Vec::new();
    let mut null_dropped = 0usize;
    let mut dup_dropped = 0usize;
    let mut seen_ids = HashSet::new();

    for node in doc.descendants().filter(|n| n.has_tag_name("sentence")) {
        let id = node.attribute("id").unwrap_or("").to_string();
        if id.is_empty() {
            let pos = doc.text_pos_at(node.range().start);
            return Err(Error::Format(format!(
                "sentence without id at line {} column {}",
                pos.row, pos.col
            )));
        }
        if !seen_ids.insert(id.clone()) {
            return Err(Error::Data(format!("duplicate sentence id {id:?}")));
        }
        let text = node
            .children()
            .find(|c| c.has_tag_name("text"))
            .and_then(|c| c.text())
            .unwrap_or("")
            .to_string();
        let n_chars = char_len(&text);

        let mut spans: Vec<TargetSpan> = Vec::new();
        for op in node.descendants().filter(|n| n.has_tag_name("Opinion")) {
            let target = op.attribute("target").unwrap_or("NULL");
            if target == "NULL" {
                null_dropped += 1;
                continue;
            }
            let from: usize = parse_offset(op.attribute("from"), &id, "from")?;
            let to: usize = parse_offset(op.attribute("to"), &id, "to")?;
            if from >= to || to > n_chars {
                return Err(Error::Data(format!(
                    "sentence {id}: span {from}..{to} outside text of {n_chars} chars"
                )));
            }
            if spans.iter().any(|s| s.start == from && s.end == to) {
                dup_dropped += 1;
                continue;
            }
            spans.push(TargetSpan::new(from, to, char_slice(&text, from, to)));
        }
        spans.sort_by_key(|s| (s.start, s.end));
        sentences.push(RawSentence {
            id,
            language: language.to_string(),
            text,
            spans,
        });
    }
    Ok((sentences, null_dropped, dup_dropped))
}

fn parse_offset(attr: Option<&str>, id: &str, name: &str) -> Result<usize> {
    attr.ok_or_else(|| Error::Format(format!("sentence {id}: Opinion missing {name:?}")))?
        .parse()
        .map_err(|e| Error::Format(format!("sentence {id}: bad {name} offset: {e}")))
}

/// A parsed sentence before tokenization and span repair.
#[derive(Debug, Clone)]
pub struct RawSentence {
    pub id: String,
    pub language: String,
    pub text: String,
    pub spans: Vec<TargetSpan>,
}

/// Whitespace tokenization with leading/trailing punctuation split off as
/// single-character tokens. Offsets are character-based and index the
/// original string, so concatenating token texts with the original gaps
/// reconstructs the text.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        push_chunk_tokens(&chars, start, i, &mut tokens);
    }
    tokens
}

/// Split one whitespace-delimited chunk `[start, end)` into tokens.
fn push_chunk_tokens(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let is_punct = |c: char| !c.is_alphanumeric();
    let mut lo = start;
    let mut hi = end;
    let mut leading = Vec::new();
    while lo < hi && is_punct(chars[lo]) {
        leading.push(Token::new(chars[lo].to_string(), lo, lo + 1));
        lo += 1;
    }
    let mut trailing = Vec::new();
    while hi > lo && is_punct(chars[hi - 1]) {
        trailing.push(Token::new(chars[hi - 1].to_string(), hi - 1, hi));
        hi -= 1;
    }
    out.extend(leading);
    if hi > lo {
        out.push(Token::new(chars[lo..hi].iter().collect::<String>(), lo, hi));
    }
    out.extend(trailing.into_iter().rev());
}

/// Snap each raw span to the minimal token sequence covering it and build
/// the final [`Sentence`]. Boundary changes are logged; spans that overlap
/// after snapping (or cover no token at all) are data errors, which callers
/// turn into per-sentence exclusions.
pub fn align_spans_to_tokens(raw: &RawSentence, tokens: Vec<Token>) -> Result<Sentence> {
    let mut snapped: Vec<TargetSpan> = Vec::new();
    for span in &raw.spans {
        let covering: Vec<&Token> = tokens
            .iter()
            .filter(|t| t.start < span.end && t.end > span.start)
            .collect();
        let (first, last) = match (covering.first(), covering.last()) {
            (Some(f), Some(l)) => (f.start, l.end),
            _ => {
                return Err(Error::Data(format!(
                    "sentence {}: span {}..{} ({:?}) covers no token",
                    raw.id, span.start, span.end, span.surface
                )))
            }
        };
        if (first, last) != (span.start, span.end) {
            info!(
                "sentence {}: snapped span {}..{} ({:?}) to token boundaries {first}..{last}",
                raw.id, span.start, span.end, span.surface
            );
        }
        snapped.push(TargetSpan::new(
            first,
            last,
            char_slice(&raw.text, first, last),
        ));
    }
    snapped.sort_by_key(|s| (s.start, s.end));
    snapped.dedup_by_key(|s| (s.start, s.end));
    for pair in snapped.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::Data(format!(
                "sentence {}: spans overlap after snapping ({}..{} and {}..{})",
                raw.id, pair[0].start, pair[0].end, pair[1].start, pair[1].end
            )));
        }
    }
    Ok(Sentence {
        id: raw.id.clone(),
        language: raw.language.clone(),
        text: raw.text.clone(),
        tokens,
        targets: snapped,
    })
}

/// Raw spans whose exact character range no longer appears after repair
/// (boundary snaps and dedup collisions), for the ingest report.
fn spans_snapped(raw: &RawSentence, repaired: &Sentence) -> usize {
    raw.spans
        .iter()
        .filter(|s| {
            !repaired
                .targets
                .iter()
                .any(|t| (t.start, t.end) == (s.start, s.end))
        })
        .count()
}

/// Full ingestion pipeline: parse, tokenize, repair, exclude unrepairable
/// sentences, and report all counts.
pub fn ingest_semeval_xml(
    xml: &str,
    language: &str,
    split: Split,
) -> Result<(Corpus, IngestReport)> {
    let (raw_sentences, null_dropped, dup_dropped) = parse_semeval_xml(xml, language)?;
    let mut report = IngestReport {
        language: language.to_string(),
        sentences_parsed: raw_sentences.len(),
        null_targets_dropped: null_dropped,
        duplicate_spans_dropped: dup_dropped,
        ..IngestReport::default()
    };
    let mut sentences = Vec::new();
    for raw in &raw_sentences {
        let tokens = tokenize(&raw.text);
        if tokens.is_empty() {
            report.excluded.push(ExcludedSentence {
                id: raw.id.clone(),
                reason: "no tokens".into(),
            });
            continue;
        }
        match align_spans_to_tokens(raw, tokens) {
            Ok(sentence) => {
                report.spans_snapped += spans_snapped(raw, &sentence);
                sentences.push(sentence);
            }
            Err(e) => {
                warn!("excluding sentence {}: {e}", raw.id);
                report.excluded.push(ExcludedSentence {
                    id: raw.id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    report.sentences_kept = sentences.len();
    Ok((
        Corpus {
            language: language.to_string(),
            split,
            sentences,
        },
        report,
    ))
}

/// (sentence count, token count, target count) of an ingested corpus.
pub fn dataset_stats(corpus: &Corpus) -> (usize, usize, usize) {
    let tokens = corpus.sentences.iter().map(|s| s.tokens.len()).sum();
    let targets = corpus.sentences.iter().map(|s| s.targets.len()).sum();
    (corpus.sentences.len(), tokens, targets)
}

/// Out-of-vocabulary statistics of a corpus under an embedding table.
pub fn oov_stats(corpus: &Corpus, table: &crate::embeddings::EmbeddingTable) -> OovStats {
    let mut total = 0usize;
    let mut oov = 0usize;
    for s in &corpus.sentences {
        for t in &s.tokens {
            total += 1;
            if !table.lookup(&t.text).1 {
                oov += 1;
            }
        }
    }
    OovStats {
        table_language: table.language().to_string(),
        tokens: total,
        oov_tokens: oov,
        rate: if total == 0 {
            0.0
        } else {
            oov as f64 / total as f64
        },
    }
}

/// Fraction of corpus tokens not found in an embedding table.
pub fn oov_rate(corpus: &Corpus, table: &crate::embeddings::EmbeddingTable) -> f64 {
    oov_stats(corpus, table).rate
}

/// Write the CoNLL-style column format: `# id=<id>` per sentence, then one
/// `token<TAB>start<TAB>end<TAB>tag` line per token, blank line after each
/// sentence.
pub fn export_conll(corpus: &Corpus, w: &mut impl Write) -> Result<()> {
    for s in &corpus.sentences {
        let tags = s.gold_tags()?;
        writeln!(w, "# id={}", s.id)?;
        for (tok, tag) in s.tokens.iter().zip(&tags) {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                tok.text,
                tok.start,
                tok.end,
                tag.as_str()
            )?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Read the CoNLL-style format back. The sentence text is reconstructed
/// from the token offsets with spaces in the gaps, so round-tripping
/// preserves ids, tokens and tags exactly.
pub fn import_conll(reader: impl BufRead, language: &str, split: Split) -> Result<Corpus> {
    let mut sentences = Vec::new();
    let mut id: Option<String> = None;
    let mut tokens: Vec<Token> = Vec::new();
    let mut tags: Vec<Tag> = Vec::new();
    let mut seen_ids = HashSet::new();

    let flush = |id: &mut Option<String>,
                 tokens: &mut Vec<Token>,
                 tags: &mut Vec<Tag>,
                 sentences: &mut Vec<Sentence>|
     -> Result<()> {
        if tokens.is_empty() {
            *id = None;
            return Ok(());
        }
        let sid = id
            .take()
            .ok_or_else(|| Error::Format("sentence block without a preceding # id= line".into()))?;
        let text = reconstruct_text(tokens);
        let targets = tags_to_spans(&text, tokens, tags)?;
        sentences.push(Sentence {
            id: sid,
            language: language.to_string(),
            text,
            tokens: std::mem::take(tokens),
            targets,
        });
        tags.clear();
        Ok(())
    };

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.is_empty() {
            flush(&mut id, &mut tokens, &mut tags, &mut sentences)?;
            continue;
        }
        if let Some(rest) = line.strip_prefix("# id=") {
            flush(&mut id, &mut tokens, &mut tags, &mut sentences)?;
            if !seen_ids.insert(rest.to_string()) {
                return Err(Error::Data(format!("duplicate sentence id {rest:?}")));
            }
            id = Some(rest.to_string());
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "line {lineno}: expected 4 tab-separated columns, found {}",
                fields.len()
            )));
        }
        let start: usize = fields[1]
            .parse()
            .map_err(|e| Error::Format(format!("line {lineno}: bad start offset: {e}")))?;
        let end: usize = fields[2]
            .parse()
            .map_err(|e| Error::Format(format!("line {lineno}: bad end offset: {e}")))?;
        if start >= end {
            return Err(Error::Format(format!("line {lineno}: empty token range")));
        }
        tokens.push(Token::new(fields[0], start, end));
        tags.push(Tag::parse(fields[3]).map_err(|e| Error::Format(format!("line {lineno}: {e}")))?);
    }
    flush(&mut id, &mut tokens, &mut tags, &mut sentences)?;
    Ok(Corpus {
        language: language.to_string(),
        split,
        sentences,
    })
}

/// Rebuild sentence text from tokens, filling inter-token gaps with spaces.
fn reconstruct_text(tokens: &[Token]) -> String {
    let mut text = String::new();
    let mut cursor = 0usize;
    for tok in tokens {
        while cursor < tok.start {
            text.push(' ');
            cursor += 1;
        }
        text.push_str(&tok.text);
        cursor = tok.end;
    }
    text
}

/// Load a corpus from either format, chosen by file extension: `.xml` is
/// SemEval ABSA XML, anything else the CoNLL-style format.
pub fn load_corpus_file(path: &std::path::Path, language: &str, split: Split) -> Result<Corpus> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("xml") {
        let xml = std::fs::read_to_string(path)?;
        let (corpus, _report) = ingest_semeval_xml(&xml, language, split)?;
        Ok(corpus)
    } else {
        let file = std::fs::File::open(path)?;
        import_conll(std::io::BufReader::new(file), language, split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<Reviews>
  <Review rid="r1">
    <sentences>
      <sentence id="r1:0">
        <text>The wine list is also really nice.</text>
        <Opinions>
          <Opinion target="wine list" category="DRINKS#STYLE_OPTIONS" polarity="positive" from="4" to="13"/>
        </Opinions>
      </sentence>
      <sentence id="r1:1">
        <text>Moules were excellent, lobster ravioli was VERY salty!</text>
        <Opinions>
          <Opinion target="Moules" category="FOOD#QUALITY" polarity="positive" from="0" to="6"/>
          <Opinion target="lobster ravioli" category="FOOD#QUALITY" polarity="negative" from="23" to="38"/>
          <Opinion target="lobster ravioli" category="FOOD#STYLE_OPTIONS" polarity="negative" from="23" to="38"/>
        </Opinions>
      </sentence>
      <sentence id="r1:2">
        <text>Service was ok.</text>
        <Opinions>
          <Opinion target="NULL" category="SERVICE#GENERAL" polarity="neutral" from="0" to="0"/>
        </Opinions>
      </sentence>
    </sentences>
  </Review>
</Reviews>
"#;

    #[test]
    fn parses_fixture_with_null_and_duplicate_handling() {
        let (raws, nulls, dups) = parse_semeval_xml(FIXTURE, "en").unwrap();
        assert_eq!(raws.len(), 3);
        assert_eq!(nulls, 1);
        assert_eq!(dups, 1);
        assert_eq!(raws[0].spans, vec![TargetSpan::new(4, 13, "wine list")]);
        assert_eq!(raws[1].spans.len(), 2);
        assert!(raws[2].spans.is_empty());
    }

    #[test]
    fn malformed_xml_is_format_error() {
        let err = parse_semeval_xml("<Reviews><sentence id=", "en").unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn out_of_bounds_offsets_name_the_sentence() {
        let xml = r#"<Reviews><sentence id="bad:1"><text>abc</text>
            <Opinions><Opinion target="x" from="1" to="9"/></Opinions></sentence></Reviews>"#;
        let err = parse_semeval_xml(xml, "en").unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("bad:1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tokenizer_splits_trailing_punctuation() {
        let toks = tokenize("Moules were excellent,");
        let texts: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, vec!["Moules", "were", "excellent", ","]);
        assert_eq!((toks[2].start, toks[2].end), (12, 21));
        assert_eq!((toks[3].start, toks[3].end), (21, 22));
    }

    #[test]
    fn tokenizer_handles_leading_and_all_punct_chunks() {
        let texts: Vec<String> = tokenize("\"VERY!\" :)")
            .iter()
            .map(|t| t.text.clone())
            .collect();
        assert_eq!(texts, vec!["\"", "VERY", "!", "\"", ":", ")"]);
    }

    #[test]
    fn tokenizer_empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t ").is_empty());
    }

    #[test]
    fn tokenizer_offsets_are_character_based() {
        // Cyrillic text: byte offsets would differ from char offsets.
        let toks = tokenize("это хороший ресторан.");
        assert_eq!(toks[0].text, "это");
        assert_eq!((toks[0].start, toks[0].end), (0, 3));
        let last = toks.last().unwrap();
        assert_eq!(last.text, ".");
        assert_eq!((last.start, last.end), (20, 21));
    }

    #[test]
    fn offset_fidelity_over_fixture() {
        let (corpus, _) = ingest_semeval_xml(FIXTURE, "en", Split::Train).unwrap();
        for s in &corpus.sentences {
            for t in &s.tokens {
                assert_eq!(char_slice(&s.text, t.start, t.end), t.text);
            }
        }
    }

    #[test]
    fn span_on_token_boundaries_is_unchanged() {
        let raw = RawSentence {
            id: "x".into(),
            language: "en".into(),
            text: "The wine list is nice".into(),
            spans: vec![TargetSpan::new(4, 13, "wine list")],
        };
        let s = align_spans_to_tokens(&raw, tokenize(&raw.text)).unwrap();
        assert_eq!(s.targets, vec![TargetSpan::new(4, 13, "wine list")]);
    }

    #[test]
    fn midtoken_span_snaps_to_covering_tokens() {
        let raw = RawSentence {
            id: "x".into(),
            language: "en".into(),
            text: "The wine list is nice".into(),
            spans: vec![TargetSpan::new(5, 13, "ine list")],
        };
        let s = align_spans_to_tokens(&raw, tokenize(&raw.text)).unwrap();
        assert_eq!(s.targets, vec![TargetSpan::new(4, 13, "wine list")]);
    }

    #[test]
    fn overlap_after_snapping_is_excluded() {
        let raw = RawSentence {
            id: "x".into(),
            language: "en".into(),
            text: "aa bb cc".into(),
            spans: vec![
                TargetSpan::new(0, 4, "aa b"),
                TargetSpan::new(3, 8, "bb cc"),
            ],
        };
        assert!(align_spans_to_tokens(&raw, tokenize(&raw.text)).is_err());
    }

    #[test]
    fn ingest_excludes_and_reports() {
        let xml = r#"<Reviews>
          <sentence id="ok"><text>nice food here</text>
            <Opinions><Opinion target="food" from="5" to="9"/></Opinions></sentence>
          <sentence id="clash"><text>aa bb cc</text>
            <Opinions><Opinion target="aa b" from="0" to="4"/><Opinion target="bb cc" from="3" to="8"/></Opinions></sentence>
        </Reviews>"#;
        let (corpus, report) = ingest_semeval_xml(xml, "en", Split::Train).unwrap();
        assert_eq!(report.sentences_parsed, 2);
        assert_eq!(report.sentences_kept, 1);
        assert_eq!(report.excluded.len(), 1);
        assert_eq!(report.excluded[0].id, "clash");
        assert_eq!(corpus.sentences[0].id, "ok");
    }

    #[test]
    fn gold_tags_succeed_on_every_ingested_sentence() {
        let (corpus, _) = ingest_semeval_xml(FIXTURE, "en", Split::Train).unwrap();
        for s in &corpus.sentences {
            let tags = s.gold_tags().unwrap();
            assert_eq!(tags.len(), s.tokens.len());
        }
    }

    #[test]
    fn wine_list_example_exports_eight_lines() {
        let (corpus, _) = ingest_semeval_xml(FIXTURE, "en", Split::Train).unwrap();
        let first = Corpus {
            language: "en".into(),
            split: Split::Train,
            sentences: vec![corpus.sentences[0].clone()],
        };
        let mut buf = Vec::new();
        export_conll(&first, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let token_lines: Vec<&str> = text
            .lines()
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        assert_eq!(token_lines.len(), 8);
        let tags: Vec<&str> = token_lines
            .iter()
            .map(|l| l.split('\t').nth(3).unwrap())
            .collect();
        assert_eq!(tags, vec!["O", "I", "I", "O", "O", "O", "O", "O"]);
    }

    #[test]
    fn conll_roundtrip_preserves_ids_tokens_tags() {
        let (corpus, _) = ingest_semeval_xml(FIXTURE, "en", Split::Train).unwrap();
        let mut buf = Vec::new();
        export_conll(&corpus, &mut buf).unwrap();
        let back = import_conll(std::io::Cursor::new(buf), "en", Split::Train).unwrap();
        assert_eq!(back.sentences.len(), corpus.sentences.len());
        for (a, b) in corpus.sentences.iter().zip(&back.sentences) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.tokens, b.tokens);
            assert_eq!(a.gold_tags().unwrap(), b.gold_tags().unwrap());
        }
    }

    #[test]
    fn empty_corpus_roundtrip() {
        let corpus = Corpus {
            language: "en".into(),
            split: Split::Train,
            sentences: vec![],
        };
        let mut buf = Vec::new();
        export_conll(&corpus, &mut buf).unwrap();
        assert!(buf.is_empty());
        let back = import_conll(std::io::Cursor::new(buf), "en", Split::Train).unwrap();
        assert!(back.sentences.is_empty());
        assert_eq!(dataset_stats(&back), (0, 0, 0));
    }

    #[test]
    fn conll_bad_column_count_reports_line() {
        let text = "# id=a\ntok\t0\t3\n";
        let err = import_conll(std::io::Cursor::new(text), "en", Split::Train).unwrap_err();
        match err {
            Error::Format(msg) => assert!(msg.contains("line 2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn conll_tokens_before_any_id_line_are_rejected() {
        let text = "tok\t0\t3\tO\n";
        let err = import_conll(std::io::Cursor::new(text), "en", Split::Train).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn stats_count_kept_content() {
        let (corpus, _) = ingest_semeval_xml(FIXTURE, "en", Split::Train).unwrap();
        let (sents, toks, targets) = dataset_stats(&corpus);
        assert_eq!(sents, 3);
        assert_eq!(targets, 3); // wine list, Moules, lobster ravioli
        assert!(toks > 15);
    }
}
