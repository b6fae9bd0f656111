//! Shared inputs for the criterion benches.

use coterm::cooccur::PairedTerm;
use coterm::corpus::{parse_resource, Corpus};
use coterm::gen::{generate_corpus, generate_pairs, CorpusSpec};
use coterm::index::CaseMode;

pub fn corpus(n_docs: usize, vocab: usize) -> Corpus {
    let text = generate_corpus(&CorpusSpec::new(n_docs, vocab, 1)).expect("valid corpus spec");
    parse_resource(text.as_bytes()).expect("generated corpus parses")
}

pub fn pairs(top: usize, n: usize) -> Vec<PairedTerm> {
    generate_pairs(top, n, 1)
        .expect("valid pair spec")
        .iter()
        .filter_map(|p| PairedTerm::new(&p.a, &p.b, CaseMode::Insensitive).ok())
        .collect()
}
