//! Deterministic synthetic corpora and pair lists.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::cooccur::InputPair;

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusSpec {
    pub n_docs: usize,
    pub vocab_size: usize,
    pub seed: u64,
    pub min_words: usize,
    pub max_words: usize,
}

impl CorpusSpec {
    pub fn new(n_docs: usize, vocab_size: usize, seed: u64) -> Self {
        CorpusSpec {
            n_docs,
            vocab_size,
            seed,
            min_words: 8,
            max_words: 40,
        }
    }

    fn check(&self) -> Result<(), GenError> {
        if self.n_docs == 0 {
            return Err(GenError::ScenarioInvalid("n_docs must be at least 1".into()));
        }
        if self.vocab_size == 0 {
            return Err(GenError::ScenarioInvalid("vocab_size must be at least 1".into()));
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(GenError::ScenarioInvalid("bad document length range".into()));
        }
        Ok(())
    }
}

/// The word with Zipf rank `rank` (0 is the most frequent).
pub fn vocabulary_word(rank: usize) -> String {
    format!("t{rank}")
}

fn doc_key(i: usize, width: usize) -> String {
    format!("D{i:0width$}")
}

/// Renders a resource file. Documents are runs of sentences; the first word
/// of each sentence is capitalized so case modes differ.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<String, GenError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let zipf = Zipf::new(spec.vocab_size as f64, 1.0).map_err(|e| GenError::ScenarioInvalid(e.to_string()))?;
    let width = (spec.n_docs - 1).to_string().len();
    let mut out = String::with_capacity(spec.n_docs * spec.max_words * 4);
    for i in 0..spec.n_docs {
        out.push_str(&doc_key(i, width));
        out.push('\t');
        let n_words = rng.random_range(spec.min_words..=spec.max_words);
        let mut sentence_start = true;
        for w in 0..n_words {
            if w > 0 {
                out.push(' ');
            }
            let rank = zipf.sample(&mut rng) as usize - 1;
            if sentence_start {
                let _ = write!(out, "T{rank}");
            } else {
                let _ = write!(out, "t{rank}");
            }
            sentence_start = w + 1 == n_words || rng.random_ratio(1, 10);
            if sentence_start {
                out.push('.');
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_corpus(spec: &CorpusSpec, path: &Path) -> Result<(), GenError> {
    let text = generate_corpus(spec)?;
    fs::write(path, text).map_err(|source| GenError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `n_pairs` distinct unordered pairs of vocabulary words drawn from the
/// `top` most frequent ranks.
pub fn generate_pairs(top: usize, n_pairs: usize, seed: u64) -> Result<Vec<InputPair>, GenError> {
    if top < 2 || n_pairs > top * (top - 1) / 2 {
        return Err(GenError::ScenarioInvalid(format!("cannot draw {n_pairs} distinct pairs from {top} words")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut pairs = Vec::with_capacity(n_pairs);
    while pairs.len() < n_pairs {
        let a = rng.random_range(0..top);
        let b = rng.random_range(0..top);
        if a != b && seen.insert((a.min(b), a.max(b))) {
            pairs.push(InputPair::new(vocabulary_word(a), vocabulary_word(b)));
        }
    }
    Ok(pairs)
}

pub fn render_pairs(pairs: &[InputPair]) -> String {
    pairs.iter().map(|p| format!("{}\t{}\n", p.a, p.b)).collect()
}
