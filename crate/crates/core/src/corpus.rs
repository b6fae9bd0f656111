//! Resource files: loading, fingerprinting and sentence splitting.
//!
//! A resource file is UTF-8 text with one `key<TAB>text` record per line.
//! Its identity is the MD5 digest of the raw file bytes, so two clusters that
//! load byte-identical files agree on the [`ResourceId`] without talking to
//! each other.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use md5::{Digest, Md5};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line_no}: {reason}")]
    Format { line_no: usize, reason: String },
    #[error("line {line_no}: invalid UTF-8")]
    Encoding { line_no: usize },
    #[error("malformed resource id {0:?} (expected 32 lowercase hex characters)")]
    MalformedResourceId(String),
}

/// MD5 fingerprint of a resource file, shown as 32 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResourceId([u8; 16]);

impl ResourceId {
    pub fn from_bytes(digest: [u8; 16]) -> Self {
        ResourceId(digest)
    }

    /// Digest of an in-memory byte string.
    pub fn of_bytes(data: &[u8]) -> Self {
        ResourceId(Md5::digest(data).into())
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        let mut out = String::with_capacity(32);
        for b in self.0 {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ResourceId({})", self.to_hex())
    }
}

impl FromStr for ResourceId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || CorpusError::MalformedResourceId(s.to_string());
        if s.len() != 32 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(malformed());
        }
        let mut digest = [0u8; 16];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let pair = std::str::from_utf8(chunk).map_err(|_| malformed())?;
            digest[i] = u8::from_str_radix(pair, 16).map_err(|_| malformed())?;
        }
        Ok(ResourceId(digest))
    }
}

impl Serialize for ResourceId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ResourceId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Abstract,
    Sentence,
}

impl Granularity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Granularity::Abstract => "abstract",
            Granularity::Sentence => "sentence",
        }
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abstract" => Ok(Granularity::Abstract),
            "sentence" => Ok(Granularity::Sentence),
            other => Err(format!("unknown granularity {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub key: String,
    pub text: String,
}

/// An immutable, fingerprinted set of records.
///
/// Besides the records in file order, the corpus keeps the permutation that
/// sorts record keys lexicographically. Postings store document *ranks* in
/// that order, so ascending ranks are ascending keys.
#[derive(Clone, Debug)]
pub struct Corpus {
    resource_id: ResourceId,
    granularity: Granularity,
    records: Vec<Record>,
    rank_of: Vec<u32>,
    by_rank: Vec<u32>,
}

impl Corpus {
    /// Builds a corpus from records, checking key validity and uniqueness.
    pub fn new(
        resource_id: ResourceId,
        granularity: Granularity,
        records: Vec<Record>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            check_key(&rec.key, i + 1)?;
            if rec.text.contains(['\n', '\r']) {
                return Err(CorpusError::Format {
                    line_no: i + 1,
                    reason: format!("text of {:?} contains a line break", rec.key),
                });
            }
            if !seen.insert(rec.key.as_str()) {
                return Err(duplicate_key(i + 1, &rec.key));
            }
        }
        Ok(Self::from_checked(resource_id, granularity, records))
    }

    fn from_checked(resource_id: ResourceId, granularity: Granularity, records: Vec<Record>) -> Self {
        let mut by_rank: Vec<u32> = (0..records.len() as u32).collect();
        by_rank.sort_unstable_by(|&a, &b| records[a as usize].key.cmp(&records[b as usize].key));
        let mut rank_of = vec![0u32; records.len()];
        for (rank, &idx) in by_rank.iter().enumerate() {
            rank_of[idx as usize] = rank as u32;
        }
        Corpus {
            resource_id,
            granularity,
            records,
            rank_of,
            by_rank,
        }
    }

    pub fn resource_id(&self) -> ResourceId {
        self.resource_id
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn n_docs(&self) -> usize {
        self.records.len()
    }

    /// Rank of the record at file position `idx` in lexicographic key order.
    pub fn rank_of(&self, idx: usize) -> u32 {
        self.rank_of[idx]
    }

    /// Key of the document with the given rank.
    pub fn key_at_rank(&self, rank: u32) -> &str {
        &self.records[self.by_rank[rank as usize] as usize].key
    }

    /// Serializes back to the resource file format (LF line endings).
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&rec.key);
            out.push('\t');
            out.push_str(&rec.text);
            out.push('\n');
        }
        out
    }
}

fn check_key(key: &str, line_no: usize) -> Result<(), CorpusError> {
    if key.is_empty() {
        return Err(CorpusError::Format {
            line_no,
            reason: "empty document key".into(),
        });
    }
    if key.contains(['\t', '\n', '\r']) {
        return Err(CorpusError::Format {
            line_no,
            reason: format!("document key {key:?} contains a tab or line break"),
        });
    }
    Ok(())
}

fn duplicate_key(line_no: usize, key: &str) -> CorpusError {
    CorpusError::Format {
        line_no,
        reason: format!("duplicate document key {key:?}"),
    }
}

/// Streams the file through MD5 without buffering it whole.
pub fn resource_fingerprint(path: &Path) -> Result<ResourceId, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut reader = BufReader::with_capacity(1 << 16, file);
    let mut hasher = Md5::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf).map_err(io_err)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(ResourceId(hasher.finalize().into()))
}

/// Loads a resource file. With [`Granularity::Sentence`] the records are
/// split into sentences after loading (see [`sentence_split`]).
pub fn load_resource(path: &Path, granularity: Granularity) -> Result<Corpus, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let corpus = parse_resource(&bytes)?;
    Ok(match granularity {
        Granularity::Abstract => corpus,
        Granularity::Sentence => sentence_split(&corpus),
    })
}

/// Parses resource bytes at abstract granularity; the id is the MD5 of `bytes`.
pub fn parse_resource(bytes: &[u8]) -> Result<Corpus, CorpusError> {
    let resource_id = ResourceId::of_bytes(bytes);
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut lines = bytes.split(|&b| b == b'\n').peekable();
    let mut line_no = 0;
    while let Some(raw) = lines.next() {
        line_no += 1;
        if raw.is_empty() && lines.peek().is_none() {
            break;
        }
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw).map_err(|_| CorpusError::Encoding { line_no })?;
        if line.trim().is_empty() {
            continue;
        }
        let Some((key, text)) = line.split_once('\t') else {
            return Err(CorpusError::Format {
                line_no,
                reason: "missing tab between key and text".into(),
            });
        };
        check_key(key, line_no)?;
        if !seen.insert(key.to_string()) {
            return Err(duplicate_key(line_no, key));
        }
        records.push(Record {
            key: key.to_string(),
            text: text.to_string(),
        });
    }
    Ok(Corpus::from_checked(resource_id, Granularity::Abstract, records))
}

const ABBREVIATIONS: &[&str] = &[
    "e.g", "i.e", "al", "fig", "figs", "vs", "cf", "ca", "approx", "eq", "ref", "no",
    "dr", "mr", "mrs", "ms", "prof", "st",
];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Whether the text ending right before a terminator at `end` forbids a break.
fn is_protected(text: &str, end: usize) -> bool {
    let head = &text[..end];
    let start = head
        .rfind(char::is_whitespace)
        .map(|i| i + head[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let token = head[start..].trim_start_matches(|c: char| !c.is_alphanumeric());
    let mut chars = token.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        // "J. Smith" style initials; a lowercase single letter ends a sentence normally
        if c.is_uppercase() {
            return true;
        }
    }
    ABBREVIATIONS.contains(&token.to_lowercase().as_str())
}

/// Splits one text into sentences using the terminator rule.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        // absorb runs like "?!" or "..."
        let mut j = i + 1;
        while j < chars.len() && is_terminator(chars[j].1) {
            j += 1;
        }
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let breaks = k > j
            && k < chars.len()
            && (chars[k].1.is_uppercase() || chars[k].1.is_numeric())
            && !is_protected(text, pos);
        if breaks {
            let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
            let sentence = text[start..end].trim();
            if !sentence.is_empty() {
                out.push(sentence);
            }
            start = chars[k].0;
            i = k;
        } else {
            i = j;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() || out.is_empty() {
        out.push(tail);
    }
    out
}

/// Splits every record into sentences keyed `<key>.<ordinal>` (1-based).
///
/// The resulting corpus is fingerprinted over its own serialized form, so a
/// sentence-level corpus never shares an id with its abstract-level source.
pub fn sentence_split(corpus: &Corpus) -> Corpus {
    let mut records = Vec::new();
    for rec in &corpus.records {
        for (n, sentence) in split_sentences(&rec.text).into_iter().enumerate() {
            records.push(Record {
                key: format!("{}.{}", rec.key, n + 1),
                text: sentence.to_string(),
            });
        }
    }
    let mut split = Corpus::from_checked(corpus.resource_id, Granularity::Sentence, records);
    split.resource_id = ResourceId::of_bytes(split.serialize().as_bytes());
    split
}
