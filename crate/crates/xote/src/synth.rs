//! Synthetic corpora and embedding spaces for tests and benchmarks.
//!
//! Sentences are drawn from a small set of templates over a latent
//! vocabulary of function words, target nouns, adjectives and fillers. A
//! "language" realizes each latent word id as `<prefix><id>` with an
//! embedding vector from a shared latent space, optionally rotated by an
//! orthogonal matrix - so two languages with the same latent space but
//! different rotations are exact translations of each other, which gives
//! zero-shot transfer a controlled testbed with a known alignment.

use crate::embeddings::EmbeddingTable;
use crate::ingest::{tokenize, Sentence};
use crate::iob::{char_slice, TargetSpan};
use crate::rng::XRng;
use crate::tensor::Matrix;
use rand::{Rng, SeedableRng};

const N_TARGETS: usize = 12;
const N_ADJECTIVES: usize = 8;
const N_FILLERS: usize = 10;

// Latent ids of the function words.
const DET: usize = 0;
const WAS: usize = 1;
const WE: usize = 2;
const LIKED: usize = 3;
const FIRST_TARGET: usize = 4;
const FIRST_ADJ: usize = FIRST_TARGET + N_TARGETS;
const FIRST_FILLER: usize = FIRST_ADJ + N_ADJECTIVES;

/// Total latent vocabulary size.
pub const VOCAB_SIZE: usize = FIRST_FILLER + N_FILLERS;

/// Surface form of a latent word id in a given language.
pub fn surface(prefix: &str, latent: usize) -> String {
    format!("{prefix}{latent:02}")
}

/// The shared latent embedding space, uniform in [-1, 1).
pub fn latent_vectors(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = XRng::seed_from_u64(seed);
    (0..VOCAB_SIZE)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

/// Build one language's table from the latent space, optionally rotating
/// every vector by `rotation`.
pub fn make_table(
    language: &str,
    prefix: &str,
    latent: &[Vec<f64>],
    rotation: Option<&Matrix>,
) -> EmbeddingTable {
    let dim = latent[0].len();
    let entries = latent.iter().enumerate().map(|(i, v)| {
        let vec = match rotation {
            Some(r) => {
                let row = Matrix::from_vec(1, dim, v.clone()).expect("latent row");
                row.matmul(r).expect("rotation shape").data().to_vec()
            }
            None => v.clone(),
        };
        (surface(prefix, i), vec)
    });
    EmbeddingTable::from_entries(language, dim, entries).expect("synthetic vocab has no duplicates")
}

/// All `(src_word, tgt_word)` translation pairs between two prefixes.
pub fn make_dictionary(src_prefix: &str, tgt_prefix: &str) -> Vec<(String, String)> {
    (0..VOCAB_SIZE)
        .map(|i| (surface(src_prefix, i), surface(tgt_prefix, i)))
        .collect()
}

/// One sentence as latent word ids plus target spans in token indices.
struct LatentSentence {
    words: Vec<usize>,
    spans: Vec<(usize, usize)>, // [start_token, end_token)
}

fn draw_sentence(rng: &mut XRng) -> LatentSentence {
    let tgt = |rng: &mut XRng| FIRST_TARGET + rng.gen_range(0..N_TARGETS);
    let adj = |rng: &mut XRng| FIRST_ADJ + rng.gen_range(0..N_ADJECTIVES);
    let fill = |rng: &mut XRng| FIRST_FILLER + rng.gen_range(0..N_FILLERS);
    match rng.gen_range(0..10) {
        // "the TGT was ADJ"
        0..=2 => LatentSentence {
            words: vec![DET, tgt(rng), WAS, adj(rng)],
            spans: vec![(1, 2)],
        },
        // "we liked the TGT"
        3..=5 => LatentSentence {
            words: vec![WE, LIKED, DET, tgt(rng)],
            spans: vec![(3, 4)],
        },
        // "the TGT TGT was ADJ" (two-token target)
        6..=7 => LatentSentence {
            words: vec![DET, tgt(rng), tgt(rng), WAS, adj(rng)],
            spans: vec![(1, 3)],
        },
        // "FILL FILL ADJ" (no target)
        8 => LatentSentence {
            words: vec![fill(rng), fill(rng), adj(rng)],
            spans: vec![],
        },
        // "ADJ TGT TGT FILL": two adjacent single-token targets (tags I B)
        _ => LatentSentence {
            words: vec![adj(rng), tgt(rng), tgt(rng), fill(rng)],
            spans: vec![(1, 2), (2, 3)],
        },
    }
}

/// A templated corpus of `n` sentences for one language.
pub fn make_corpus(language: &str, prefix: &str, n: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = XRng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let latent = draw_sentence(&mut rng);
            realize(language, prefix, &latent, &format!("{language}-{i}"))
        })
        .collect()
}

fn realize(language: &str, prefix: &str, latent: &LatentSentence, id: &str) -> Sentence {
    let words: Vec<String> = latent.words.iter().map(|&w| surface(prefix, w)).collect();
    let text = words.join(" ");
    let tokens = tokenize(&text);
    debug_assert_eq!(tokens.len(), words.len());
    let targets = latent
        .spans
        .iter()
        .map(|&(ts, te)| {
            let start = tokens[ts].start;
            let end = tokens[te - 1].end;
            TargetSpan::new(start, end, char_slice(&text, start, end))
        })
        .collect();
    Sentence {
        id: id.to_string(),
        language: language.to_string(),
        text,
        tokens,
        targets,
    }
}

/// Two exactly-parallel synthetic languages with a known rotation between
/// their embedding spaces.
pub struct TwinLanguages {
    /// Language "aa" in the latent space.
    pub table_a: EmbeddingTable,
    /// Language "bb": latent vectors rotated by `rotation`.
    pub table_b: EmbeddingTable,
    /// The rotation taking an `aa` vector to the corresponding `bb` vector.
    pub rotation: Matrix,
    /// `(bb_word, aa_word)` pairs, i.e. oriented for aligning bb into aa.
    pub dictionary_b_to_a: Vec<(String, String)>,
}

pub fn twin_languages(dim: usize, seed: u64) -> TwinLanguages {
    let latent = latent_vectors(dim, seed);
    let mut rng = XRng::seed_from_u64(seed ^ 0x5bd1_e995);
    let rotation = crate::align::random_orthogonal(dim, &mut rng);
    TwinLanguages {
        table_a: make_table("aa", "aa", &latent, None),
        table_b: make_table("bb", "bb", &latent, Some(&rotation)),
        rotation,
        dictionary_b_to_a: make_dictionary("bb", "aa"),
    }
}
