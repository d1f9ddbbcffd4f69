//! On-disk index directory.
//!
//! ```text
//! terms.tsv       term \t df \t byte offset into postings.bin, one line per term, sorted
//! postings.bin    "VGPL1", then per term: (doc delta, tf) pairs as unsigned LEB128 varints
//! stats.json      {format, k1, b, n_docs, avg_doc_len, doc_lens}
//! articles.jsonl  one Article per line in doc-number order
//! ```
//!
//! The first doc delta of a list is the doc number itself.

use super::{Article, Bm25Params, InvertedIndex, PostingList, RetrievalError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub const TERMS_FILE: &str = "terms.tsv";
pub const POSTINGS_FILE: &str = "postings.bin";
pub const STATS_FILE: &str = "stats.json";
pub const ARTICLES_FILE: &str = "articles.jsonl";
pub const INDEX_FILES: [&str; 4] = [TERMS_FILE, POSTINGS_FILE, STATS_FILE, ARTICLES_FILE];

const POSTINGS_MAGIC: &[u8; 5] = b"VGPL1";
const FORMAT: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsFile {
    format: u32,
    k1: f64,
    b: f64,
    n_docs: usize,
    avg_doc_len: f64,
    doc_lens: BTreeMap<String, u32>,
}

fn put_varint(out: &mut Vec<u8>, mut v: u32) {
    while v >= 0x80 {
        out.push((v as u8 & 0x7f) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn get_varint(buf: &[u8], pos: &mut usize) -> Option<u32> {
    let mut v: u64 = 0;
    for shift in (0..35).step_by(7) {
        let byte = *buf.get(*pos)?;
        *pos += 1;
        v |= ((byte & 0x7f) as u64) << shift;
        if byte & 0x80 == 0 {
            return u32::try_from(v).ok();
        }
    }
    None
}

fn corrupt(file: &'static str, msg: impl Into<String>) -> RetrievalError {
    RetrievalError::Corrupt { file, msg: msg.into() }
}

impl InvertedIndex {
    /// The four index files as bytes, in [`INDEX_FILES`] order.
    pub fn to_files(&self) -> [Vec<u8>; 4] {
        let mut terms = String::new();
        let mut postings = POSTINGS_MAGIC.to_vec();
        for p in self.postings.values() {
            terms.push_str(&format!("{}\t{}\t{}\n", p.term, p.doc_frequency, postings.len()));
            let mut prev = 0;
            for &(doc, tf) in &p.entries {
                put_varint(&mut postings, doc - prev);
                put_varint(&mut postings, tf);
                prev = doc;
            }
        }
        let stats = self.stats();
        let file = StatsFile {
            format: FORMAT,
            k1: self.params.k1,
            b: self.params.b,
            n_docs: stats.n_docs,
            avg_doc_len: stats.avg_doc_len,
            doc_lens: stats.doc_lens,
        };
        let mut stats_json = serde_json::to_vec_pretty(&file).expect("stats serialize");
        stats_json.push(b'\n');
        let mut articles = Vec::new();
        for a in &self.articles {
            serde_json::to_writer(&mut articles, a).expect("article serialize");
            articles.push(b'\n');
        }
        [terms.into_bytes(), postings, stats_json, articles]
    }

    /// SHA-256 over the serialized index, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, bytes) in INDEX_FILES.iter().zip(self.to_files()) {
            h.update(name.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        format!("{:x}", h.finalize())
    }

    /// Writes the index into `dir`. Files go to a sibling staging directory
    /// first, which then replaces `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let dir = dir.as_ref();
        let name = dir
            .file_name()
            .ok_or_else(|| corrupt(TERMS_FILE, format!("bad output directory {}", dir.display())))?;
        let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let staging = parent.join(format!(".{}.staging-{}", name.to_string_lossy(), std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        for (file, bytes) in INDEX_FILES.iter().zip(self.to_files()) {
            fs::write(staging.join(file), bytes)?;
        }
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(&staging, dir)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let dir = dir.as_ref();
        let read = |f: &str| fs::read(dir.join(f));
        Self::from_files(&read(TERMS_FILE)?, &read(POSTINGS_FILE)?, &read(STATS_FILE)?, &read(ARTICLES_FILE)?)
    }

    pub fn from_files(terms: &[u8], postings: &[u8], stats: &[u8], articles: &[u8]) -> Result<Self, RetrievalError> {
        let articles_text = std::str::from_utf8(articles).map_err(|e| corrupt(ARTICLES_FILE, e.to_string()))?;
        let mut docs: Vec<Article> = Vec::new();
        for (i, line) in articles_text.lines().enumerate() {
            let a: Article =
                serde_json::from_str(line).map_err(|e| corrupt(ARTICLES_FILE, format!("line {}: {e}", i + 1)))?;
            a.validate().map_err(|e| corrupt(ARTICLES_FILE, e.to_string()))?;
            if docs.last().is_some_and(|p| p.id >= a.id) {
                return Err(corrupt(ARTICLES_FILE, format!("ids not strictly ascending at {:?}", a.id)));
            }
            docs.push(a);
        }
        if docs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }

        let st: StatsFile = serde_json::from_slice(stats).map_err(|e| corrupt(STATS_FILE, e.to_string()))?;
        if st.format != FORMAT {
            return Err(corrupt(STATS_FILE, format!("unsupported format version {}", st.format)));
        }
        let params = Bm25Params { k1: st.k1, b: st.b };
        params.validate()?;
        if st.n_docs != docs.len() || st.doc_lens.len() != docs.len() {
            return Err(corrupt(STATS_FILE, "document count disagrees with articles.jsonl"));
        }
        let mut doc_lens = Vec::with_capacity(docs.len());
        for a in &docs {
            let l = st
                .doc_lens
                .get(&a.id)
                .ok_or_else(|| corrupt(STATS_FILE, format!("no length for {:?}", a.id)))?;
            doc_lens.push(*l);
        }

        if postings.get(..POSTINGS_MAGIC.len()) != Some(&POSTINGS_MAGIC[..]) {
            return Err(corrupt(POSTINGS_FILE, "bad magic"));
        }
        let terms_text = std::str::from_utf8(terms).map_err(|e| corrupt(TERMS_FILE, e.to_string()))?;
        let mut lists = BTreeMap::new();
        let mut rows: Vec<(String, u32, usize)> = Vec::new();
        for (i, line) in terms_text.lines().enumerate() {
            let bad = || corrupt(TERMS_FILE, format!("line {}: expected term, df, offset", i + 1));
            let mut f = line.split('\t');
            let (Some(term), Some(df), Some(off), None) = (f.next(), f.next(), f.next(), f.next()) else {
                return Err(bad());
            };
            let df: u32 = df.parse().map_err(|_| bad())?;
            let off: usize = off.parse().map_err(|_| bad())?;
            if rows.last().is_some_and(|r| r.0.as_str() >= term) {
                return Err(corrupt(TERMS_FILE, format!("terms not strictly ascending at {term:?}")));
            }
            rows.push((term.to_string(), df, off));
        }
        let mut pos = POSTINGS_MAGIC.len();
        for (term, df, off) in rows {
            if off != pos {
                return Err(corrupt(POSTINGS_FILE, format!("term {term:?} offset {off}, expected {pos}")));
            }
            let mut entries = Vec::with_capacity(df as usize);
            let mut doc = 0u32;
            for k in 0..df {
                let truncated = || corrupt(POSTINGS_FILE, format!("list for {term:?} is truncated"));
                let delta = get_varint(postings, &mut pos).ok_or_else(truncated)?;
                let tf = get_varint(postings, &mut pos).ok_or_else(truncated)?;
                doc = doc.checked_add(delta).ok_or_else(truncated)?;
                if k > 0 && delta == 0 {
                    return Err(corrupt(POSTINGS_FILE, format!("repeated doc in list for {term:?}")));
                }
                entries.push((doc, tf));
            }
            lists.insert(
                term.clone(),
                PostingList {
                    term,
                    entries,
                    doc_frequency: df,
                },
            );
        }
        if pos != postings.len() {
            return Err(corrupt(POSTINGS_FILE, "trailing bytes"));
        }
        let index = Self::from_parts(docs, lists, doc_lens, params);
        if (index.avg_doc_len - st.avg_doc_len).abs() > 1e-9 {
            return Err(corrupt(STATS_FILE, "avg_doc_len disagrees with doc_lens"));
        }
        index.check()?;
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_index, ArticleSource};
    use super::*;

    #[test]
    fn varint_round_trip() {
        for v in [0u32, 1, 127, 128, 300, 16_383, 16_384, u32::MAX] {
            let mut buf = Vec::new();
            put_varint(&mut buf, v);
            let mut pos = 0;
            assert_eq!(get_varint(&buf, &mut pos), Some(v));
            assert_eq!(pos, buf.len());
        }
        assert_eq!(get_varint(&[0x80], &mut 0), None);
    }

    #[test]
    fn save_load_save_is_identical() {
        let arts = (0..12)
            .map(|i| Article {
                id: format!("a{i:02}"),
                title: format!("title {i}"),
                body: format!("river bridge {} crossing number{}", "flood ".repeat(i % 4), i % 3),
                source: ArticleSource::Wikipedia,
                published_at: (i % 2 == 0).then(|| format!("2021-0{}-15", 1 + i % 9)),
            })
            .collect();
        let idx = build_index(arts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("idx");
        idx.save(&out).unwrap();
        let back = InvertedIndex::load(&out).unwrap();
        assert_eq!(back, idx);
        let first = idx.to_files();
        assert_eq!(back.to_files(), first);
        for (f, bytes) in INDEX_FILES.iter().zip(&first) {
            assert_eq!(&fs::read(out.join(f)).unwrap(), bytes);
        }
        assert_eq!(back.checksum(), idx.checksum());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let idx = build_index(vec![Article {
            id: "x".into(),
            title: "t".into(),
            body: "alpha beta beta".into(),
            source: ArticleSource::Other,
            published_at: None,
        }])
        .unwrap();
        let [t, p, s, a] = idx.to_files();
        let mut short = p.clone();
        short.pop();
        assert!(InvertedIndex::from_files(&t, &short, &s, &a).is_err());
        assert!(InvertedIndex::from_files(&t, &p[1..], &s, &a).is_err());
        let bad_terms = String::from_utf8(t.clone()).unwrap().replace("beta\t1\t", "beta\t2\t");
        assert!(InvertedIndex::from_files(bad_terms.as_bytes(), &p, &s, &a).is_err());
        assert!(InvertedIndex::from_files(&t, &p, &s, b"").is_err());
    }
}
