//! Local article corpus and a BM25 inverted index over it.
//!
//! Terms are ASCII-lowercased runs of `[a-z0-9]`, at least two characters
//! long, minus [`STOPWORDS`]. No stemming is applied, so "vaccine" and
//! "vaccines" are different terms.
//!
//! Documents are numbered by ascending article id; posting entries are kept
//! in that order.

mod store;

pub use store::{ARTICLES_FILE, INDEX_FILES, POSTINGS_FILE, STATS_FILE, TERMS_FILE};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::{Path, PathBuf};

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: K1, b: B }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(self.k1.is_finite() && self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b)) {
            return Err(RetrievalError::BadParams(*self));
        }
        Ok(())
    }
}

/// Removed after tokenization. Exactly 50 entries, sorted.
pub const STOPWORDS: [&str; 50] = [
    "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "could", "did", "do", "does",
    "for", "from", "had", "has", "have", "he", "her", "his", "how", "if", "in", "into", "is", "it",
    "its", "not", "of", "on", "or", "our", "she", "so", "than", "that", "the", "their", "them",
    "they", "this", "to", "was", "we", "were", "what", "will", "with",
];

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate article id {0:?}")]
    DuplicateId(String),
    #[error("article {id:?}: {msg}")]
    InvalidArticle { id: String, msg: String },
    #[error("unknown document {0:?}")]
    UnknownDoc(String),
    #[error("{path}:{line}: {msg}")]
    Corpus { path: PathBuf, line: usize, msg: String },
    #[error("corrupt index ({file}): {msg}")]
    Corrupt { file: &'static str, msg: String },
    #[error("bm25 parameters out of range: {0:?} (need k1 >= 0, 0 <= b <= 1)")]
    BadParams(Bm25Params),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn is_stopword(term: &str) -> bool {
    STOPWORDS.binary_search(&term).is_ok()
}

/// Splits `text` into index terms.
pub fn tokenize_text(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| t.len() >= 2)
        .map(|t| t.to_ascii_lowercase())
        .filter(|t| !is_stopword(t))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArticleSource {
    Wikipedia,
    Claimreview,
    News,
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub body: String,
    pub source: ArticleSource,
    /// `YYYY-MM-DD`.
    #[serde(default)]
    pub published_at: Option<String>,
}

impl Article {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |msg: &str| RetrievalError::InvalidArticle {
            id: self.id.clone(),
            msg: msg.to_string(),
        };
        if self.id.is_empty() || self.id.chars().any(|c| c.is_control()) {
            return Err(bad("id must be non-empty and free of control characters"));
        }
        if self.body.trim().is_empty() {
            return Err(bad("body is empty"));
        }
        if let Some(d) = &self.published_at {
            if NaiveDate::parse_from_str(d, "%Y-%m-%d").is_err() {
                return Err(bad(&format!("published_at {d:?} is not a YYYY-MM-DD date")));
            }
        }
        Ok(())
    }

    pub fn date(&self) -> Option<NaiveDate> {
        self.published_at
            .as_deref()
            .and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
    }

    /// Title and body, the text that gets indexed.
    pub fn terms(&self) -> Vec<String> {
        let mut t = tokenize_text(&self.title);
        t.extend(tokenize_text(&self.body));
        t
    }
}

/// Reads a JSON-lines corpus. Blank lines are skipped.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Article>, RetrievalError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| RetrievalError::Corpus {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let a: Article = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        a.validate().map_err(|e| err(e.to_string()))?;
        out.push(a);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PostingList {
    pub term: String,
    /// `(doc number, term frequency)`, ascending by doc number.
    pub entries: Vec<(u32, u32)>,
    pub doc_frequency: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexStats {
    pub n_docs: usize,
    pub avg_doc_len: f64,
    pub doc_lens: BTreeMap<String, u32>,
}

/// Posting lists for pre-tokenized documents numbered by position.
pub fn count_postings(docs: &[Vec<String>]) -> BTreeMap<String, PostingList> {
    let mut lists: BTreeMap<String, PostingList> = BTreeMap::new();
    for (d, terms) in docs.iter().enumerate() {
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in terms {
            *tf.entry(t).or_default() += 1;
        }
        for (t, n) in tf {
            let list = lists.entry(t.to_string()).or_insert_with(|| PostingList {
                term: t.to_string(),
                entries: Vec::new(),
                doc_frequency: 0,
            });
            list.entries.push((d as u32, n));
            list.doc_frequency += 1;
        }
    }
    lists
}

pub fn idf(n_docs: usize, df: u32) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// One query term's contribution to a document's score.
fn term_weight(p: Bm25Params, idf: f64, tf: u32, dl: u32, avgdl: f64) -> f64 {
    let tf = tf as f64;
    idf * (tf * (p.k1 + 1.0)) / (tf + p.k1 * (1.0 - p.b + p.b * dl as f64 / avgdl))
}

/// Sorted, deduplicated query terms.
fn unique_terms(query: &[String]) -> Vec<&str> {
    let mut q: Vec<&str> = query.iter().map(String::as_str).collect();
    q.sort_unstable();
    q.dedup();
    q
}

/// Immutable after construction; share it behind an `Arc` for concurrent
/// readers.
#[derive(Clone, Debug, PartialEq)]
pub struct InvertedIndex {
    articles: Vec<Article>,
    postings: BTreeMap<String, PostingList>,
    doc_lens: Vec<u32>,
    avg_doc_len: f64,
    by_id: HashMap<String, u32>,
    params: Bm25Params,
}

pub fn build_index(articles: Vec<Article>) -> Result<InvertedIndex, RetrievalError> {
    InvertedIndex::build(articles)
}

impl InvertedIndex {
    pub fn build(articles: Vec<Article>) -> Result<Self, RetrievalError> {
        Self::build_with(articles, Bm25Params::default())
    }

    pub fn build_with(mut articles: Vec<Article>, params: Bm25Params) -> Result<Self, RetrievalError> {
        params.validate()?;
        if articles.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        for a in &articles {
            a.validate()?;
        }
        articles.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = articles.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(RetrievalError::DuplicateId(w[0].id.clone()));
        }
        let docs: Vec<Vec<String>> = articles.iter().map(Article::terms).collect();
        let doc_lens: Vec<u32> = docs.iter().map(|d| d.len() as u32).collect();
        let postings = count_postings(&docs);
        Ok(Self::from_parts(articles, postings, doc_lens, params))
    }

    fn from_parts(
        articles: Vec<Article>,
        postings: BTreeMap<String, PostingList>,
        doc_lens: Vec<u32>,
        params: Bm25Params,
    ) -> Self {
        let total: u64 = doc_lens.iter().map(|&l| l as u64).sum();
        let avg_doc_len = total as f64 / doc_lens.len() as f64;
        let by_id = articles
            .iter()
            .enumerate()
            .map(|(i, a)| (a.id.clone(), i as u32))
            .collect();
        Self {
            articles,
            postings,
            doc_lens,
            avg_doc_len,
            by_id,
            params,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.articles.len()
    }

    /// Articles in doc-number order.
    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn article(&self, id: &str) -> Option<&Article> {
        self.by_id.get(id).map(|&d| &self.articles[d as usize])
    }

    pub fn posting(&self, term: &str) -> Option<&PostingList> {
        self.postings.get(term)
    }

    pub fn postings(&self) -> impl Iterator<Item = &PostingList> {
        self.postings.values()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn stats(&self) -> IndexStats {
        IndexStats {
            n_docs: self.n_docs(),
            avg_doc_len: self.avg_doc_len,
            doc_lens: self
                .articles
                .iter()
                .zip(&self.doc_lens)
                .map(|(a, &l)| (a.id.clone(), l))
                .collect(),
        }
    }

    fn tf(&self, term: &str, doc: u32) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| p.entries.binary_search_by_key(&doc, |e| e.0).ok().map(|i| p.entries[i].1))
            .unwrap_or(0)
    }

    fn idf_of(&self, term: &str) -> f64 {
        self.postings
            .get(term)
            .map(|p| idf(self.n_docs(), p.doc_frequency))
            .unwrap_or(0.0)
    }

    /// BM25 score of one document. Repeated query terms count once.
    pub fn bm25_score(&self, query: &[String], doc_id: &str) -> Result<f64, RetrievalError> {
        let &doc = self
            .by_id
            .get(doc_id)
            .ok_or_else(|| RetrievalError::UnknownDoc(doc_id.to_string()))?;
        let dl = self.doc_lens[doc as usize];
        let mut score = 0.0;
        for t in unique_terms(query) {
            let tf = self.tf(t, doc);
            if tf > 0 {
                score += term_weight(self.params, self.idf_of(t), tf, dl, self.avg_doc_len);
            }
        }
        Ok(score)
    }

    /// Top `k` articles by score, ties broken by ascending id. Zero-score
    /// documents are never returned.
    pub fn retrieve(&self, query: &[String], k: usize) -> Vec<(&Article, f64)> {
        self.retrieve_since(query, k, None)
    }

    /// As [`retrieve`](Self::retrieve), keeping only articles published on
    /// or after `since`. Undated articles are dropped when a date is given.
    pub fn retrieve_since(&self, query: &[String], k: usize, since: Option<NaiveDate>) -> Vec<(&Article, f64)> {
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for t in unique_terms(query) {
            let Some(p) = self.postings.get(t) else { continue };
            let w = idf(self.n_docs(), p.doc_frequency);
            for &(doc, tf) in &p.entries {
                *acc.entry(doc).or_insert(0.0) += term_weight(self.params, w, tf, self.doc_lens[doc as usize], self.avg_doc_len);
            }
        }
        let mut hits: Vec<(u32, f64)> = acc
            .into_iter()
            .filter(|&(doc, s)| {
                s > 0.0 && since.is_none_or(|d| self.articles[doc as usize].date().is_some_and(|p| p >= d))
            })
            .collect();
        // doc numbers follow id order, so they break ties by id
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(k);
        hits.into_iter().map(|(d, s)| (&self.articles[d as usize], s)).collect()
    }

    /// Terms present in the index, in sorted order.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// Checks the structural invariants of the posting lists.
    pub fn check(&self) -> Result<(), RetrievalError> {
        let corrupt = |msg: String| RetrievalError::Corrupt { file: TERMS_FILE, msg };
        for p in self.postings.values() {
            if p.doc_frequency as usize != p.entries.len() || p.entries.is_empty() {
                return Err(corrupt(format!("term {:?} has df {} but {} entries", p.term, p.doc_frequency, p.entries.len())));
            }
            if p.entries.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(corrupt(format!("term {:?} entries not strictly ascending", p.term)));
            }
            if p.entries.iter().any(|&(d, tf)| d as usize >= self.n_docs() || tf == 0) {
                return Err(corrupt(format!("term {:?} references a missing doc or has tf 0", p.term)));
            }
        }
        Ok(())
    }
}
