//! Picks key terms from a video summary, retrieves reference articles and
//! prints the adjudication prompt, then parses a few replies.
//!
//! cargo run --example rag_prompt

use vimguard::retrieval::{Article, ArticleSource, InvertedIndex};
use vimguard::verify::{assemble_prompt, extract_key_terms, parse_verdict, prompt_hash};

fn article(id: &str, title: &str, body: &str, date: Option<&str>) -> Article {
    Article {
        id: id.into(),
        title: title.into(),
        body: body.into(),
        source: ArticleSource::News,
        published_at: date.map(String::from),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let index = InvertedIndex::build(vec![
        article(
            "tides",
            "What causes ocean tides",
            "Tides are caused mainly by the gravitational pull of the Moon and, to a lesser degree, the Sun.",
            Some("2021-03-02"),
        ),
        article(
            "moon-myth",
            "Full moon and hospital admissions",
            "Studies find no link between the full moon and emergency room admissions.",
            Some("2019-10-11"),
        ),
        article("wind", "Wind power in 2023", "Wind turbines supplied a record share of electricity.", None),
    ])?;
    let summary = "Claims that ocean tides are caused by underwater wind currents rather than the Moon.";
    let terms = extract_key_terms(summary, 10, &index);
    println!("key terms: {terms:?}");
    let hits = index.retrieve(&terms, 3);
    let prompt = assemble_prompt(summary, &hits);
    println!("--- prompt (sha256 {}) ---\n{prompt}\n---", &prompt_hash(&prompt)[..16]);

    for reply in [
        "FALSE Tides follow the Moon's gravity [1].",
        "true: matches [2]",
        "Probably false?",
    ] {
        match parse_verdict(reply) {
            Ok(v) => println!("{reply:?} -> {:?}, rationale {:?}", v.decision, v.rationale),
            Err(e) => println!("{reply:?} -> {e}"),
        }
    }
    Ok(())
}
