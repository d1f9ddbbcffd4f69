//! Builds an inverted index over generated articles, saves it, reloads it
//! and runs a few ranked queries.
//!
//! cargo run --example bm25_search -- [query words...]

use chrono::NaiveDate;
use vimguard::retrieval::{tokenize_text, InvertedIndex};
use vimguard::rng::SeededRng;
use vimguard::synth::{synth_articles, synth_query};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let index = InvertedIndex::build(synth_articles(2000, 3000, 1))?;
    let dir = tempfile::tempdir()?;
    index.save(dir.path())?;
    let index = InvertedIndex::load(dir.path())?;
    println!(
        "{} articles, {} terms, average length {:.1}, checksum {}",
        index.n_docs(),
        index.vocabulary().count(),
        index.avg_doc_len(),
        &index.checksum()[..16]
    );

    let typed: Vec<String> = std::env::args().skip(1).collect();
    let queries = if typed.is_empty() {
        let mut rng = SeededRng::new(2);
        (0..3).map(|_| synth_query(3, 3000, &mut rng)).collect()
    } else {
        vec![tokenize_text(&typed.join(" "))]
    };
    let since = NaiveDate::from_ymd_opt(2020, 1, 1);
    for q in &queries {
        println!("\nquery {q:?}");
        for (a, score) in index.retrieve(q, 5) {
            println!("  {score:7.3}  {}  {}", a.id, a.title);
        }
        let recent = index.retrieve_since(q, 5, since);
        println!("  {} hits published since 2020", recent.len());
    }
    Ok(())
}
