//! Trains the claim head on fused video+audio embeddings of procedural
//! talking-head (claim) and dance (no-claim) bundles, then scores held-out
//! bundles.
//!
//! cargo run --release --example claim_head

use vimguard::claim_detect::{ClaimHead, FinetuneConfig};
use vimguard::config::Config;
use vimguard::mae::{fuse, MaeConfig, MaeModel};
use vimguard::media::{ClaimLabel, SfvBundle};
use vimguard::synth::{synth_bundle, SynthStyle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = Config::default();
    let video = MaeModel::<f32>::new(MaeConfig::video(&cfg.features.video, &cfg.model), 1)?.encoder_only();
    let audio = MaeModel::<f32>::new(MaeConfig::audio(&cfg.features.audio, &cfg.model), 2)?.encoder_only();

    let bundles = |n: usize, seed: u64| -> Vec<(SfvBundle, ClaimLabel)> {
        (0..n)
            .map(|i| {
                let style = if i % 3 == 0 { SynthStyle::TalkingHead } else { SynthStyle::Dance };
                (synth_bundle(&format!("b{seed}_{i}"), style, seed * 1000 + i as u64, &cfg.synth), style.label())
            })
            .collect()
    };
    let embed = |set: &[(SfvBundle, ClaimLabel)]| -> Result<Vec<(Vec<f32>, ClaimLabel)>, Box<dyn std::error::Error>> {
        set.iter()
            .map(|(b, l)| {
                let v = video.embed(&cfg.features.video.tokens(b)?, &b.id)?;
                let a = audio.embed(&cfg.features.audio.tokens(b)?, &b.id)?;
                Ok((fuse(&v, &a)?.vector, *l))
            })
            .collect()
    };
    let train = embed(&bundles(30, 1))?;
    let test = embed(&bundles(12, 2))?;

    let ft = FinetuneConfig {
        epochs: 60,
        lr: 5e-3,
        hidden: 32,
        ..FinetuneConfig::default()
    };
    let mut head = ClaimHead::new(train[0].0.len(), ft.hidden, ft.threshold, ft.init_std, 3)?;
    let report = head.finetune(&train, &ft, 4)?;
    println!(
        "class weights {:?}; loss {:.4} -> {:.4}; train accuracy {:.3}",
        report.class_weights,
        report.epoch_loss[0],
        report.epoch_loss.last().unwrap(),
        report.epoch_accuracy.last().unwrap()
    );
    println!("held-out accuracy {:.3}", head.accuracy(&test)?);
    for (x, label) in test.iter().take(6) {
        let z = head.logit(x)?;
        let d = head.decision_from_logit(z, "");
        println!("  {label:?}: p(claim) = {:.3} -> {}", d.probability, if d.has_claim { "claim" } else { "no claim" });
    }
    Ok(())
}
