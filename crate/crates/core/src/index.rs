//! Tokenization and the term → document inverted index.
//!
//! Postings are materialized lazily: only terms that a job asks about are
//! looked up, and one pass over the corpus materializes a whole batch of terms
//! at once. Once published, an entry never changes.

use std::borrow::Cow;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::cooccur::PairedTerm;
use crate::corpus::{Corpus, Record, ResourceId};

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("term {0:?} contains no letters or digits")]
    EmptyTerm(String),
    #[error("index belongs to resource {expected}, corpus is {found}")]
    ResourceMismatch {
        expected: ResourceId,
        found: ResourceId,
    },
    #[error("index cache {path}: {reason}")]
    Cache { path: PathBuf, reason: String },
    #[error("index cache {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseMode {
    Sensitive,
    #[default]
    Insensitive,
}

impl CaseMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaseMode::Sensitive => "sensitive",
            CaseMode::Insensitive => "insensitive",
        }
    }
}

impl fmt::Display for CaseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sensitive" => Ok(CaseMode::Sensitive),
            "insensitive" => Ok(CaseMode::Insensitive),
            other => Err(format!("unknown case mode {other:?}")),
        }
    }
}

/// A maximal run of letters and digits, case-folded in insensitive mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(String);

impl Token {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Simple (single code point) case folding.
fn fold_char(c: char) -> char {
    if c == 'ς' {
        return 'σ';
    }
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

fn fold(token: &str) -> Cow<'_, str> {
    if token.bytes().all(|b| b.is_ascii() && !b.is_ascii_uppercase()) {
        return Cow::Borrowed(token);
    }
    if token.chars().all(|c| fold_char(c) == c) {
        return Cow::Borrowed(token);
    }
    Cow::Owned(token.chars().map(fold_char).collect())
}

pub(crate) fn raw_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !is_token_char(c)).filter(|t| !t.is_empty())
}

pub(crate) fn tokens_cow(text: &str, case_mode: CaseMode) -> Vec<Cow<'_, str>> {
    match case_mode {
        CaseMode::Sensitive => raw_tokens(text).map(Cow::Borrowed).collect(),
        CaseMode::Insensitive => raw_tokens(text).map(fold).collect(),
    }
}

pub fn tokenize(text: &str, case_mode: CaseMode) -> Vec<Token> {
    tokens_cow(text, case_mode)
        .into_iter()
        .map(|t| Token(t.into_owned()))
        .collect()
}

/// Tokenizes and re-joins with single spaces. `None` if no tokens remain.
pub fn normalize_term(term: &str, case_mode: CaseMode) -> Option<String> {
    let tokens = tokens_cow(term, case_mode);
    if tokens.is_empty() {
        None
    } else {
        Some(tokens.join(" "))
    }
}

/// Distinct normalized terms over both columns of a pair list.
pub fn unique_terms(pairs: &[PairedTerm]) -> BTreeSet<String> {
    let first: BTreeSet<&str> = pairs.iter().map(|p| p.a()).collect();
    let second: BTreeSet<&str> = pairs.iter().map(|p| p.b()).collect();
    first.union(&second).map(|t| t.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PostingEntry {
    pub term: String,
    pub doc_freq: usize,
    pub term_freq: u64,
    /// Ascending document ranks (see [`Corpus::key_at_rank`]).
    pub docs: Vec<u32>,
}

impl PostingEntry {
    pub fn doc_keys<'c>(&self, corpus: &'c Corpus) -> Vec<&'c str> {
        self.docs.iter().map(|&r| corpus.key_at_rank(r)).collect()
    }
}

/// Terms grouped by first token, so one scan position checks only
/// the candidates that could start there.
struct Matcher<'t> {
    by_first: HashMap<&'t str, Vec<(usize, Vec<&'t str>)>>,
}

impl<'t> Matcher<'t> {
    fn new(terms: &'t [String]) -> Self {
        let mut by_first: HashMap<&str, Vec<(usize, Vec<&str>)>> = HashMap::new();
        for (idx, term) in terms.iter().enumerate() {
            let mut parts = term.split(' ');
            let first = parts.next().expect("normalized terms are non-empty");
            by_first.entry(first).or_default().push((idx, parts.collect()));
        }
        Matcher { by_first }
    }

    fn scan(&self, corpus: &Corpus, offset: usize, records: &[Record], case_mode: CaseMode, n_terms: usize) -> Vec<(Vec<u32>, u64)> {
        let mut acc: Vec<(Vec<u32>, u64)> = vec![(Vec::new(), 0); n_terms];
        let mut last_doc = vec![u32::MAX; n_terms];
        for (i, rec) in records.iter().enumerate() {
            let rank = corpus.rank_of(offset + i);
            let tokens = tokens_cow(&rec.text, case_mode);
            for (pos, tok) in tokens.iter().enumerate() {
                let Some(cands) = self.by_first.get(tok.as_ref()) else {
                    continue;
                };
                for (term, rest) in cands {
                    let tail = &tokens[pos + 1..];
                    if tail.len() < rest.len() || !rest.iter().zip(tail).all(|(r, t)| *r == t.as_ref()) {
                        continue;
                    }
                    let slot = &mut acc[*term];
                    slot.1 += 1;
                    if last_doc[*term] != rank {
                        last_doc[*term] = rank;
                        slot.0.push(rank);
                    }
                }
            }
        }
        acc
    }
}

/// Term → posting map for one (resource, case mode).
#[derive(Debug)]
pub struct InvertedIndex {
    resource_id: ResourceId,
    case_mode: CaseMode,
    n_docs: usize,
    entries: RwLock<HashMap<String, Arc<PostingEntry>>>,
    build: Mutex<()>,
}

impl InvertedIndex {
    pub fn new(corpus: &Corpus, case_mode: CaseMode) -> Self {
        InvertedIndex {
            resource_id: corpus.resource_id(),
            case_mode,
            n_docs: corpus.n_docs(),
            entries: RwLock::new(HashMap::new()),
            build: Mutex::new(()),
        }
    }

    pub fn resource_id(&self) -> ResourceId {
        self.resource_id
    }

    pub fn case_mode(&self) -> CaseMode {
        self.case_mode
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_corpus(&self, corpus: &Corpus) -> Result<(), IndexError> {
        if corpus.resource_id() != self.resource_id {
            return Err(IndexError::ResourceMismatch {
                expected: self.resource_id,
                found: corpus.resource_id(),
            });
        }
        Ok(())
    }

    /// Cached posting for an already-normalized term.
    pub fn get(&self, normalized: &str) -> Option<Arc<PostingEntry>> {
        self.entries.read().unwrap().get(normalized).cloned()
    }

    /// Materializes postings for every normalized term not yet cached, in a
    /// single pass over the corpus split into `workers` shards.
    pub fn materialize<'a, I>(&self, corpus: &Corpus, terms: I, workers: usize) -> Result<(), IndexError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        self.check_corpus(corpus)?;
        let _guard = self.build.lock().unwrap();
        let missing: Vec<String> = {
            let entries = self.entries.read().unwrap();
            let mut missing: Vec<String> = terms
                .into_iter()
                .filter(|t| !entries.contains_key(*t))
                .map(str::to_string)
                .collect();
            missing.sort_unstable();
            missing.dedup();
            missing
        };
        if missing.is_empty() {
            return Ok(());
        }
        if let Some(bad) = missing.iter().find(|t| t.is_empty()) {
            return Err(IndexError::EmptyTerm(bad.clone()));
        }

        let matcher = Matcher::new(&missing);
        let records = corpus.records();
        let workers = workers.max(1).min(records.len().max(1));
        let chunk = records.len().div_ceil(workers).max(1);
        let shards: Vec<Vec<(Vec<u32>, u64)>> = if workers == 1 {
            vec![matcher.scan(corpus, 0, records, self.case_mode, missing.len())]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = records
                    .chunks(chunk)
                    .enumerate()
                    .map(|(i, part)| {
                        let matcher = &matcher;
                        let n = missing.len();
                        let case_mode = self.case_mode;
                        s.spawn(move || matcher.scan(corpus, i * chunk, part, case_mode, n))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("index shard panicked")).collect()
            })
        };

        let mut built = Vec::with_capacity(missing.len());
        for (idx, term) in missing.into_iter().enumerate() {
            let mut docs = Vec::new();
            let mut term_freq = 0;
            for shard in &shards {
                docs.extend_from_slice(&shard[idx].0);
                term_freq += shard[idx].1;
            }
            docs.sort_unstable();
            built.push(PostingEntry {
                term,
                doc_freq: docs.len(),
                term_freq,
                docs,
            });
        }
        let mut entries = self.entries.write().unwrap();
        for entry in built {
            entries.insert(entry.term.clone(), Arc::new(entry));
        }
        Ok(())
    }

    /// Counts and documents for one term, computing and caching it if needed.
    pub fn term_stats(&self, corpus: &Corpus, term: &str) -> Result<Arc<PostingEntry>, IndexError> {
        let normalized = normalize_term(term, self.case_mode).ok_or_else(|| IndexError::EmptyTerm(term.to_string()))?;
        if let Some(hit) = self.get(&normalized) {
            return Ok(hit);
        }
        self.materialize(corpus, [normalized.as_str()], 1)?;
        Ok(self.get(&normalized).expect("materialized above"))
    }

    /// All cached entries, sorted by term.
    pub fn entries(&self) -> Vec<Arc<PostingEntry>> {
        let mut out: Vec<_> = self.entries.read().unwrap().values().cloned().collect();
        out.sort_by(|a, b| a.term.cmp(&b.term));
        out
    }

    /// Cache file name for this index inside a directory.
    pub fn cache_file_name(&self) -> String {
        format!("{}.{}.idx", self.resource_id, self.case_mode)
    }

    /// Writes every cached entry as `term<TAB>term_freq<TAB>key,key,...`
    /// after a `#resource_id=...<TAB>case_mode=...` header.
    pub fn write_cache(&self, corpus: &Corpus, path: &Path) -> Result<(), IndexError> {
        self.check_corpus(corpus)?;
        let io_err = |source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = BufWriter::new(fs::File::create(path).map_err(io_err)?);
        writeln!(out, "#resource_id={}\tcase_mode={}", self.resource_id, self.case_mode).map_err(io_err)?;
        for entry in self.entries() {
            let keys = entry.doc_keys(corpus);
            if let Some(bad) = keys.iter().find(|k| k.contains(',')) {
                return Err(IndexError::Cache {
                    path: path.to_path_buf(),
                    reason: format!("document key {bad:?} contains ',' and cannot be stored"),
                });
            }
            writeln!(out, "{}\t{}\t{}", entry.term, entry.term_freq, keys.join(",")).map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }

    /// Loads a cache file written by [`write_cache`](Self::write_cache),
    /// rejecting it unless it was built from this exact corpus and case mode.
    pub fn load_cache(corpus: &Corpus, case_mode: CaseMode, path: &Path) -> Result<Self, IndexError> {
        let bad = |reason: String| IndexError::Cache {
            path: path.to_path_buf(),
            reason,
        };
        let io_err = |source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        };
        let reader = BufReader::new(fs::File::open(path).map_err(io_err)?);
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?.map_err(io_err)?;
        let expected = format!("#resource_id={}\tcase_mode={}", corpus.resource_id(), case_mode);
        if header != expected {
            return Err(bad(format!("header {header:?} does not match {expected:?}")));
        }
        let rank_by_key: HashMap<&str, u32> = (0..corpus.n_docs() as u32)
            .map(|r| (corpus.key_at_rank(r), r))
            .collect();
        let index = InvertedIndex::new(corpus, case_mode);
        {
            let mut entries = index.entries.write().unwrap();
            for (n, line) in lines.enumerate() {
                let line = line.map_err(io_err)?;
                let line_no = n + 2;
                let mut fields = line.splitn(3, '\t');
                let (Some(term), Some(tf), Some(keys)) = (fields.next(), fields.next(), fields.next()) else {
                    return Err(bad(format!("line {line_no}: expected 3 fields")));
                };
                let term_freq: u64 = tf.parse().map_err(|_| bad(format!("line {line_no}: bad term_freq {tf:?}")))?;
                let mut docs = Vec::new();
                for key in keys.split(',').filter(|k| !k.is_empty()) {
                    let rank = rank_by_key
                        .get(key)
                        .ok_or_else(|| bad(format!("line {line_no}: unknown document key {key:?}")))?;
                    docs.push(*rank);
                }
                if docs.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(bad(format!("line {line_no}: keys not strictly ascending")));
                }
                if term_freq < docs.len() as u64 {
                    return Err(bad(format!("line {line_no}: term_freq below doc_freq")));
                }
                entries.insert(
                    term.to_string(),
                    Arc::new(PostingEntry {
                        term: term.to_string(),
                        doc_freq: docs.len(),
                        term_freq,
                        docs,
                    }),
                );
            }
        }
        Ok(index)
    }
}
