//! Runs the gated check over a few procedural bundles with a scripted
//! client: no-claim bundles stop at the gate, claim bundles are transcribed,
//! grounded in a small article index and adjudicated.
//!
//! cargo run --release --example mock_check

use vimguard::claim_detect::{ClaimHead, FinetuneConfig};
use vimguard::config::Config;
use vimguard::mae::{MaeConfig, MaeModel};
use vimguard::pipeline::{check_bundle, CheckContext, Models};
use vimguard::retrieval::{Article, ArticleSource, InvertedIndex};
use vimguard::synth::{synth_bundle, synth_corpus, SynthStyle};
use vimguard::verify::{mock_key, AudioInput, MockClient, MockRule, MockScript, Op, VerifyConfig};

fn article(id: &str, title: &str, body: &str) -> Article {
    Article {
        id: id.into(),
        title: title.into(),
        body: body.into(),
        source: ArticleSource::Wikipedia,
        published_at: None,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = Config::default();
    let video = MaeModel::<f32>::new(MaeConfig::video(&cfg.features.video, &cfg.model), 1)?.encoder_only();
    let audio = MaeModel::<f32>::new(MaeConfig::audio(&cfg.features.audio, &cfg.model), 2)?.encoder_only();
    let head = ClaimHead::new(video.dim() + audio.dim(), 32, 0.5, 0.02, 3)?;
    let mut models = Models::new(cfg.features.clone(), video, audio, head)?;

    let train: Vec<_> = synth_corpus(40, 4, &cfg.synth)
        .iter()
        .map(|b| Ok((models.embed(b)?.vector, b.manifest.as_ref().and_then(|m| m.label).unwrap())))
        .collect::<Result<_, Box<dyn std::error::Error>>>()?;
    let ft = FinetuneConfig {
        epochs: 60,
        lr: 5e-3,
        hidden: 32,
        ..FinetuneConfig::default()
    };
    models.head.finetune(&train, &ft, 5)?;

    let index = InvertedIndex::build(vec![
        article("honey", "Honey", "Sealed honey resists spoilage and edible honey has been found in ancient tombs."),
        article("lightning", "Lightning", "Lightning often strikes the same place repeatedly, tall towers are hit many times a year."),
    ])?;

    let bundles = [
        synth_bundle("clip_a", SynthStyle::TalkingHead, 10, &cfg.synth),
        synth_bundle("clip_b", SynthStyle::Dance, 11, &cfg.synth),
        synth_bundle("clip_c", SynthStyle::TalkingHead, 12, &cfg.synth),
        synth_bundle("clip_d", SynthStyle::TalkingHead, 13, &cfg.synth),
    ];
    let transcripts = [
        "Lightning never strikes the same place twice.",
        "",
        "Honey never spoils, jars from ancient tombs are still edible.",
        "Zorblat quinteps flumox.",
    ];
    let mut script = MockScript::default();
    for (b, text) in bundles.iter().zip(transcripts) {
        let input = AudioInput {
            source_id: &b.id,
            sample_rate: b.sample_rate,
            samples: &b.audio,
        };
        script.responses.insert(mock_key(Op::Transcribe, &input.digest()), text.to_string());
    }
    let rule = |contains: &str, output: &str| MockRule {
        op: Op::Adjudicate,
        contains: contains.into(),
        output: output.into(),
    };
    script.rules = vec![
        rule("Lightning never", "FALSE Tall structures are struck repeatedly [1]."),
        rule("Honey never", "TRUE Edible honey was found in tombs [1]."),
    ];
    script.defaults.insert(Op::Adjudicate, "UNVERIFIABLE No article covers this.".into());
    let client = MockClient::new(script);

    let ctx = CheckContext::new(&models, &index, &client, VerifyConfig::default());
    for b in &bundles {
        let o = check_bundle(b, &ctx);
        println!(
            "{}: p(claim) {:.3}, decision {:?}, calls {:?}{}",
            o.bundle_id,
            o.claim_probability.unwrap_or(f64::NAN),
            o.decision,
            o.api_calls,
            o.verdict.map(|v| format!(", rationale {:?}, cites {:?}", v.rationale, v.cited_article_ids)).unwrap_or_default()
        );
    }
    println!("total {:?}", ctx.counter.snapshot());
    Ok(())
}
