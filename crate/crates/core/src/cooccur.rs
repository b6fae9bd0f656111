//! Paired-term co-occurrence: grouping, posting intersection and Jaccard
//! significance.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::index::{normalize_term, tokens_cow, unique_terms, CaseMode, IndexError, InvertedIndex, PostingEntry};

/// Shared-key lists longer than this are dropped from results by default.
pub const DEFAULT_CO_KEYS_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CooccurError {
    #[error("term {0:?} contains no letters or digits")]
    EmptyTerm(String),
    #[error("invalid counts: n_a={n_a}, n_b={n_b}, n_ab={n_ab}")]
    InvalidCounts { n_a: usize, n_b: usize, n_ab: usize },
    #[error("pair list line {line_no}: {reason}")]
    Format { line_no: usize, reason: String },
    #[error("index: {0}")]
    Index(String),
}

impl From<IndexError> for CooccurError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::EmptyTerm(t) => CooccurError::EmptyTerm(t),
            other => CooccurError::Index(other.to_string()),
        }
    }
}

/// One line of a paired-term list, spelled as the user wrote it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputPair {
    pub a: String,
    pub b: String,
}

impl InputPair {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        InputPair { a: a.into(), b: b.into() }
    }
}

/// Parses a tab-separated paired-term list. Blank lines are skipped; a
/// list without any pair is rejected.
pub fn parse_pair_list(bytes: &[u8]) -> Result<Vec<InputPair>, CooccurError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line_no = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        CooccurError::Format {
            line_no,
            reason: "invalid UTF-8".into(),
        }
    })?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => pairs.push(InputPair::new(a, b)),
            _ => {
                return Err(CooccurError::Format {
                    line_no: n + 1,
                    reason: "expected exactly two tab-separated terms".into(),
                })
            }
        }
    }
    if pairs.is_empty() {
        return Err(CooccurError::Format {
            line_no: 0,
            reason: "pair list contains no pairs".into(),
        });
    }
    Ok(pairs)
}

/// A pair of normalized terms in input orientation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairedTerm {
    a: String,
    b: String,
}

impl PairedTerm {
    pub fn new(a: &str, b: &str, case_mode: CaseMode) -> Result<Self, CooccurError> {
        let na = normalize_term(a, case_mode).ok_or_else(|| CooccurError::EmptyTerm(a.to_string()))?;
        let nb = normalize_term(b, case_mode).ok_or_else(|| CooccurError::EmptyTerm(b.to_string()))?;
        Ok(PairedTerm { a: na, b: nb })
    }

    pub fn a(&self) -> &str {
        &self.a
    }

    pub fn b(&self) -> &str {
        &self.b
    }

    /// Terms sorted lexicographically and joined by a tab.
    pub fn canonical_key(&self) -> String {
        let (lo, hi) = if self.a <= self.b { (&self.a, &self.b) } else { (&self.b, &self.a) };
        format!("{lo}\t{hi}")
    }

    /// The same pair with terms in canonical order.
    pub fn canonical(&self) -> PairedTerm {
        if self.a <= self.b {
            self.clone()
        } else {
            self.swapped()
        }
    }

    pub fn swapped(&self) -> PairedTerm {
        PairedTerm {
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceResult {
    pub pair: PairedTerm,
    pub n_a: usize,
    pub n_b: usize,
    pub n_ab: usize,
    pub tf_a: u64,
    pub tf_b: u64,
    pub n_docs: usize,
    pub significance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub co_keys: Option<Vec<String>>,
}

impl CooccurrenceResult {
    /// Re-orients the counts to match `pair` (which must be this pair or its swap).
    pub fn oriented_as(&self, pair: &PairedTerm) -> CooccurrenceResult {
        if &self.pair == pair || self.pair.a != pair.b || self.pair.b != pair.a {
            let mut out = self.clone();
            out.pair = pair.clone();
            return out;
        }
        CooccurrenceResult {
            pair: pair.clone(),
            n_a: self.n_b,
            n_b: self.n_a,
            tf_a: self.tf_b,
            tf_b: self.tf_a,
            ..self.clone()
        }
    }

    pub fn canonical(&self) -> CooccurrenceResult {
        self.oriented_as(&self.pair.canonical())
    }

    pub fn without_keys(mut self) -> Self {
        self.co_keys = None;
        self
    }

    /// Checks the count invariants a result must satisfy.
    pub fn validate(&self) -> Result<(), CooccurError> {
        let invalid = || CooccurError::InvalidCounts {
            n_a: self.n_a,
            n_b: self.n_b,
            n_ab: self.n_ab,
        };
        if self.n_ab > self.n_a.min(self.n_b) || self.n_a > self.n_docs || self.n_b > self.n_docs {
            return Err(invalid());
        }
        if self.tf_a < self.n_a as u64 || self.tf_b < self.n_b as u64 {
            return Err(invalid());
        }
        let expected = jaccard(self.n_a, self.n_b, self.n_ab)?;
        if (expected - self.significance).abs() > 1e-12 {
            return Err(invalid());
        }
        Ok(())
    }
}

/// `n_ab / (n_a + n_b - n_ab)`, or 0 when both terms are absent.
pub fn jaccard(n_a: usize, n_b: usize, n_ab: usize) -> Result<f64, CooccurError> {
    if n_ab > n_a.min(n_b) {
        return Err(CooccurError::InvalidCounts { n_a, n_b, n_ab });
    }
    let union = n_a + n_b - n_ab;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(n_ab as f64 / union as f64)
}

/// Linear merge of two ascending, duplicate-free lists.
pub fn intersect_postings<T: Ord + Clone>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i].clone());
                i += 1;
                j += 1;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupColumn {
    First,
    Second,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partner {
    /// Position of the pair in the grouped input.
    pub pair_index: usize,
    pub term: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairGroups {
    pub group_column: GroupColumn,
    pub groups: BTreeMap<String, Vec<Partner>>,
}

impl PairGroups {
    pub fn partner_count(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }
}

fn duplication_score<'a>(column: impl Iterator<Item = &'a str>, n: usize) -> usize {
    let distinct: std::collections::HashSet<&str> = column.collect();
    n - distinct.len()
}

/// Groups pairs by whichever column repeats more (ties go to the first).
pub fn group_pairs(pairs: &[PairedTerm]) -> PairGroups {
    let n = pairs.len();
    let first = duplication_score(pairs.iter().map(|p| p.a()), n);
    let second = duplication_score(pairs.iter().map(|p| p.b()), n);
    let column = if second > first { GroupColumn::Second } else { GroupColumn::First };
    group_pairs_by(pairs, column)
}

pub fn group_pairs_by(pairs: &[PairedTerm], group_column: GroupColumn) -> PairGroups {
    let mut groups: BTreeMap<String, Vec<Partner>> = BTreeMap::new();
    for (pair_index, p) in pairs.iter().enumerate() {
        let (key, partner) = match group_column {
            GroupColumn::First => (p.a(), p.b()),
            GroupColumn::Second => (p.b(), p.a()),
        };
        groups.entry(key.to_string()).or_default().push(Partner {
            pair_index,
            term: partner.to_string(),
        });
    }
    PairGroups { group_column, groups }
}

/// Builds a result from two materialized postings.
pub fn combine(
    corpus: &Corpus,
    pair: &PairedTerm,
    a: &PostingEntry,
    b: &PostingEntry,
    co_keys_limit: Option<usize>,
) -> CooccurrenceResult {
    let shared = intersect_postings(&a.docs, &b.docs);
    let n_ab = shared.len();
    let co_keys = match co_keys_limit {
        Some(limit) if n_ab <= limit => Some(shared.iter().map(|&r| corpus.key_at_rank(r).to_string()).collect()),
        _ => None,
    };
    CooccurrenceResult {
        pair: pair.clone(),
        n_a: a.doc_freq,
        n_b: b.doc_freq,
        n_ab,
        tf_a: a.term_freq,
        tf_b: b.term_freq,
        n_docs: corpus.n_docs(),
        significance: jaccard(a.doc_freq, b.doc_freq, n_ab).expect("intersection never exceeds either side"),
        co_keys,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LocalJobOptions {
    pub workers: usize,
    /// Overrides the duplication-based column choice.
    pub group_column: Option<GroupColumn>,
    pub co_keys_limit: Option<usize>,
}

impl Default for LocalJobOptions {
    fn default() -> Self {
        LocalJobOptions {
            workers: 1,
            group_column: None,
            co_keys_limit: Some(DEFAULT_CO_KEYS_LIMIT),
        }
    }
}

/// Outcome for one input line: the raw spelling plus a result or a per-pair error.
#[derive(Clone, Debug, PartialEq)]
pub struct PairOutcome {
    pub input: InputPair,
    pub result: Result<CooccurrenceResult, CooccurError>,
}

/// Runs every pair against the corpus: one materialization pass for all
/// distinct terms, then one intersection per pair within its group.
pub fn run_job_local(
    index: &InvertedIndex,
    corpus: &Corpus,
    pairs: &[InputPair],
    opts: LocalJobOptions,
) -> Result<Vec<PairOutcome>, CooccurError> {
    let case_mode = index.case_mode();
    let parsed: Vec<Result<PairedTerm, CooccurError>> =
        pairs.iter().map(|p| PairedTerm::new(&p.a, &p.b, case_mode)).collect();
    let valid: Vec<(usize, PairedTerm)> = parsed
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.as_ref().ok().map(|p| (i, p.clone())))
        .collect();
    let valid_pairs: Vec<PairedTerm> = valid.iter().map(|(_, p)| p.clone()).collect();
    let results = evaluate_pairs(index, corpus, &valid_pairs, opts)?;

    let mut by_input: Vec<Option<CooccurrenceResult>> = vec![None; pairs.len()];
    for ((input_idx, _), result) in valid.into_iter().zip(results) {
        by_input[input_idx] = Some(result);
    }
    Ok(pairs
        .iter()
        .zip(parsed)
        .zip(by_input)
        .map(|((input, parsed), result)| PairOutcome {
            input: input.clone(),
            result: match parsed {
                Ok(_) => Ok(result.expect("every valid pair is evaluated")),
                Err(e) => Err(e),
            },
        })
        .collect())
}

/// Evaluates already-normalized pairs, returning results in input order.
pub fn evaluate_pairs(
    index: &InvertedIndex,
    corpus: &Corpus,
    pairs: &[PairedTerm],
    opts: LocalJobOptions,
) -> Result<Vec<CooccurrenceResult>, CooccurError> {
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let terms = unique_terms(pairs);
    index.materialize(corpus, terms.iter().map(String::as_str), opts.workers)?;
    let groups = match opts.group_column {
        Some(column) => group_pairs_by(pairs, column),
        None => group_pairs(pairs),
    };
    let group_list: Vec<(&String, &Vec<Partner>)> = groups.groups.iter().collect();
    let eval_group = |(term, partners): &(&String, &Vec<Partner>)| -> Vec<(usize, CooccurrenceResult)> {
        let g = index.get(term).expect("materialized");
        partners
            .iter()
            .map(|partner| {
                let p = index.get(&partner.term).expect("materialized");
                let pair = &pairs[partner.pair_index];
                let (a, b) = match groups.group_column {
                    GroupColumn::First => (&g, &p),
                    GroupColumn::Second => (&p, &g),
                };
                (partner.pair_index, combine(corpus, pair, a, b, opts.co_keys_limit))
            })
            .collect()
    };

    let workers = opts.workers.max(1).min(group_list.len());
    let evaluated: Vec<(usize, CooccurrenceResult)> = if workers <= 1 {
        group_list.iter().flat_map(eval_group).collect()
    } else {
        let chunk = group_list.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = group_list
                .chunks(chunk)
                .map(|part| {
                    let eval_group = &eval_group;
                    s.spawn(move || part.iter().flat_map(eval_group).collect::<Vec<_>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("group worker panicked"))
                .collect()
        })
    };

    let mut out: Vec<Option<CooccurrenceResult>> = vec![None; pairs.len()];
    for (i, r) in evaluated {
        out[i] = Some(r);
    }
    Ok(out.into_iter().map(|r| r.expect("every pair grouped once")).collect())
}

/// Baseline without an index: scans every document for both terms of one pair.
pub fn naive_scan(corpus: &Corpus, pair: &PairedTerm, case_mode: CaseMode) -> CooccurrenceResult {
    let a: Vec<&str> = pair.a().split(' ').collect();
    let b: Vec<&str> = pair.b().split(' ').collect();
    let count = |tokens: &[std::borrow::Cow<'_, str>], term: &[&str]| -> u64 {
        if tokens.len() < term.len() {
            return 0;
        }
        tokens
            .windows(term.len())
            .filter(|w| w.iter().zip(term).all(|(t, q)| t.as_ref() == *q))
            .count() as u64
    };
    let (mut n_a, mut n_b, mut tf_a, mut tf_b) = (0, 0, 0, 0);
    let mut shared = Vec::new();
    for (idx, rec) in corpus.records().iter().enumerate() {
        let tokens = tokens_cow(&rec.text, case_mode);
        let ca = count(&tokens, &a);
        let cb = count(&tokens, &b);
        tf_a += ca;
        tf_b += cb;
        n_a += (ca > 0) as usize;
        n_b += (cb > 0) as usize;
        if ca > 0 && cb > 0 {
            shared.push(corpus.rank_of(idx));
        }
    }
    shared.sort_unstable();
    let n_ab = shared.len();
    CooccurrenceResult {
        pair: pair.clone(),
        n_a,
        n_b,
        n_ab,
        tf_a,
        tf_b,
        n_docs: corpus.n_docs(),
        significance: jaccard(n_a, n_b, n_ab).expect("consistent counts"),
        co_keys: Some(shared.iter().map(|&r| corpus.key_at_rank(r).to_string()).collect()),
    }
}

/// One TSV result row (no trailing newline).
pub fn format_row(input: &InputPair, result: &Result<CooccurrenceResult, CooccurError>) -> String {
    let mut row = format!("{}\t{}", input.a, input.b);
    match result {
        Ok(r) => {
            let _ = write!(
                row,
                "\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}",
                r.n_a, r.n_b, r.n_ab, r.tf_a, r.tf_b, r.n_docs, r.significance
            );
        }
        Err(e) => {
            let _ = write!(row, "\t#error\t{e}");
        }
    }
    row
}
