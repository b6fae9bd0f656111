use std::collections::BTreeSet;
use std::io::Write;

use proptest::prelude::*;

use coterm::cooccur::{evaluate_pairs, InputPair, LocalJobOptions, PairedTerm};
use coterm::corpus::{parse_resource, resource_fingerprint, split_sentences, Corpus};
use coterm::index::{tokenize, CaseMode, InvertedIndex};

const WORDS: &[&str] = &["alpha", "Alpha", "BETA", "beta", "gamma", "Äpfel", "äpfel", "ω", "Ω", "x1", "2y", "zeta"];

/// Independent tokenizer: split on anything that is not a letter or digit,
/// lowercasing in insensitive mode.
fn oracle_tokens(text: &str, mode: CaseMode) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| match mode {
            CaseMode::Sensitive => t.to_string(),
            CaseMode::Insensitive => t.to_lowercase(),
        })
        .collect()
}

fn occurrences(tokens: &[String], term: &[String]) -> usize {
    if term.is_empty() || tokens.len() < term.len() {
        return 0;
    }
    tokens.windows(term.len()).filter(|w| *w == term).count()
}

struct Oracle {
    n_a: usize,
    n_b: usize,
    n_ab: usize,
    tf_a: u64,
    tf_b: u64,
    keys: Vec<String>,
}

fn oracle(corpus: &Corpus, a: &str, b: &str, mode: CaseMode) -> Oracle {
    let ta = oracle_tokens(a, mode);
    let tb = oracle_tokens(b, mode);
    let mut o = Oracle {
        n_a: 0,
        n_b: 0,
        n_ab: 0,
        tf_a: 0,
        tf_b: 0,
        keys: Vec::new(),
    };
    for rec in corpus.records() {
        let toks = oracle_tokens(&rec.text, mode);
        let ca = occurrences(&toks, &ta);
        let cb = occurrences(&toks, &tb);
        o.tf_a += ca as u64;
        o.tf_b += cb as u64;
        o.n_a += usize::from(ca > 0);
        o.n_b += usize::from(cb > 0);
        if ca > 0 && cb > 0 {
            o.n_ab += 1;
            o.keys.push(rec.key.clone());
        }
    }
    o.keys.sort();
    o
}

fn doc_text() -> impl Strategy<Value = String> {
    prop::collection::vec((prop::sample::select(WORDS), prop::sample::select(&[" ", "  ", ", ", "-", ". ", "\u{a0}"][..])), 0..25)
        .prop_map(|parts| parts.into_iter().map(|(w, s)| format!("{w}{s}")).collect())
}

fn corpus_text() -> impl Strategy<Value = String> {
    prop::collection::vec(doc_text(), 1..40).prop_map(|docs| {
        docs.iter()
            .enumerate()
            .map(|(i, d)| format!("k{i:03}\t{}\n", d.trim()))
            .collect()
    })
}

fn term() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => prop::sample::select(WORDS).prop_map(str::to_string),
        1 => (prop::sample::select(WORDS), prop::sample::select(WORDS)).prop_map(|(a, b)| format!("{a} {b}")),
    ]
}

fn mode() -> impl Strategy<Value = CaseMode> {
    prop_oneof![Just(CaseMode::Sensitive), Just(CaseMode::Insensitive)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fingerprint_matches_md5(bytes in prop::collection::vec(any::<u8>(), 0..4096)) {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&bytes).unwrap();
        let expected: [u8; 16] = md5_oracle::compute(&bytes).0;
        let found = resource_fingerprint(f.path()).unwrap();
        prop_assert_eq!(found.as_bytes(), &expected);
    }

    #[test]
    fn serialize_round_trips(text in corpus_text()) {
        let corpus = parse_resource(text.as_bytes()).unwrap();
        let again = parse_resource(corpus.serialize().as_bytes()).unwrap();
        prop_assert_eq!(corpus.records(), again.records());
    }

    #[test]
    fn sentence_split_preserves_content(text in doc_text()) {
        let squash = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        let joined: String = split_sentences(&text).iter().map(|s| squash(s)).collect();
        prop_assert_eq!(joined, squash(&text));
    }

    #[test]
    fn insensitive_tokens_ignore_case(text in doc_text()) {
        let upper = text.to_uppercase();
        // Only compare when uppercasing does not change token boundaries.
        prop_assume!(oracle_tokens(&upper, CaseMode::Sensitive).len() == oracle_tokens(&text, CaseMode::Sensitive).len());
        prop_assert_eq!(tokenize(&text, CaseMode::Insensitive), tokenize(&upper, CaseMode::Insensitive));
    }

    #[test]
    fn term_stats_match_brute_force(text in corpus_text(), t in term(), mode in mode()) {
        let corpus = parse_resource(text.as_bytes()).unwrap();
        let index = InvertedIndex::new(&corpus, mode);
        let entry = index.term_stats(&corpus, &t).unwrap();
        let o = oracle(&corpus, &t, &t, mode);
        prop_assert_eq!(entry.doc_freq, o.n_a);
        prop_assert_eq!(entry.term_freq, o.tf_a);
    }

    #[test]
    fn results_are_symmetric(text in corpus_text(), a in term(), b in term(), mode in mode()) {
        let corpus = parse_resource(text.as_bytes()).unwrap();
        let index = InvertedIndex::new(&corpus, mode);
        let ab = PairedTerm::new(&a, &b, mode).unwrap();
        let out = evaluate_pairs(&index, &corpus, &[ab.clone(), ab.swapped()], LocalJobOptions::default()).unwrap();
        prop_assert_eq!((out[0].n_a, out[0].n_b, out[0].n_ab), (out[1].n_b, out[1].n_a, out[1].n_ab));
        prop_assert_eq!(out[0].significance, out[1].significance);
        prop_assert_eq!(&out[0].co_keys, &out[1].co_keys);
    }

    #[test]
    fn matching_document_adds_one_shared(text in corpus_text(), extra in doc_text(), a in term(), b in term(), mode in mode()) {
        let corpus = parse_resource(text.as_bytes()).unwrap();
        let grown = parse_resource(format!("{text}zz\t{extra} {a} {b}\n").as_bytes()).unwrap();
        let pair = PairedTerm::new(&a, &b, mode).unwrap();
        let before = evaluate_pairs(&InvertedIndex::new(&corpus, mode), &corpus, std::slice::from_ref(&pair), LocalJobOptions::default()).unwrap();
        let after = evaluate_pairs(&InvertedIndex::new(&grown, mode), &grown, &[pair], LocalJobOptions::default()).unwrap();
        prop_assert_eq!(after[0].n_ab, before[0].n_ab + 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn evaluation_matches_oracle(
        text in corpus_text(),
        pairs in prop::collection::vec((term(), term()), 1..20),
        mode in mode(),
        workers in 1usize..5,
    ) {
        let corpus = parse_resource(text.as_bytes()).unwrap();
        let index = InvertedIndex::new(&corpus, mode);
        let paired: Vec<PairedTerm> = pairs.iter().map(|(a, b)| PairedTerm::new(a, b, mode).unwrap()).collect();
        let opts = LocalJobOptions { workers, ..LocalJobOptions::default() };
        let results = evaluate_pairs(&index, &corpus, &paired, opts).unwrap();
        for ((a, b), r) in pairs.iter().zip(&results) {
            let o = oracle(&corpus, a, b, mode);
            prop_assert_eq!((r.n_a, r.n_b, r.n_ab, r.tf_a, r.tf_b), (o.n_a, o.n_b, o.n_ab, o.tf_a, o.tf_b));
            let union = o.n_a + o.n_b - o.n_ab;
            let expected = if union == 0 { 0.0 } else { o.n_ab as f64 / union as f64 };
            prop_assert!((r.significance - expected).abs() <= 1e-12);
            prop_assert_eq!(r.co_keys.clone().unwrap(), o.keys);
        }
    }

    #[test]
    fn plan_order_does_not_change_results(text in corpus_text(), pairs in prop::collection::vec((term(), term()), 1..15), seed in any::<u64>()) {
        use coterm::controller::{Job, JobSettings};
        let corpus = std::sync::Arc::new(parse_resource(text.as_bytes()).unwrap());
        let input: Vec<InputPair> = pairs.iter().map(|(a, b)| InputPair::new(a.as_str(), b.as_str())).collect();
        let run = |seed: u64, workers: usize| {
            let settings = JobSettings { shuffle_seed: seed, workers, ..JobSettings::default() };
            Job::new(corpus.clone(), input.clone(), settings).run_standalone().unwrap().rows
        };
        let base = run(0, 1);
        let other = run(seed, 3);
        prop_assert_eq!(base.len(), input.len());
        for (x, y) in base.iter().zip(&other) {
            prop_assert_eq!(&x.result, &y.result);
        }
        let keys: BTreeSet<String> = base.iter().filter_map(|r| r.result.as_ref().ok()).map(|r| r.pair.canonical_key()).collect();
        prop_assert!(keys.len() <= input.len());
    }
}
