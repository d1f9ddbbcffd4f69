//! Pretrains the video and audio masked autoencoders on procedural bundles
//! and prints the masked-reconstruction loss before and after.
//!
//! cargo run --release --example pretrain_mae -- [steps] [seed]

use vimguard::config::Config;
use vimguard::mae::{eval_loss, pretrain, MaeConfig, MaeModel, MaeOptState, Modality};
use vimguard::synth::synth_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mut cfg = Config::default();
    if let Some(steps) = args.next() {
        cfg.pretrain.steps = steps.parse()?;
    }
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let bundles = synth_corpus(50, seed, &cfg.synth);
    for modality in [Modality::Video, Modality::Audio] {
        let (config, data) = match modality {
            Modality::Video => (
                MaeConfig::video(&cfg.features.video, &cfg.model),
                bundles.iter().map(|b| cfg.features.video.tokens(b)).collect::<Result<Vec<_>, _>>()?,
            ),
            _ => (
                MaeConfig::audio(&cfg.features.audio, &cfg.model),
                bundles.iter().map(|b| cfg.features.audio.tokens(b)).collect::<Result<Vec<_>, _>>()?,
            ),
        };
        println!(
            "{modality}: {} tokens of dim {} per bundle, {:.0}% masked",
            config.n_tokens,
            config.token_dim,
            config.mask_ratio * 100.0
        );
        let mut model = MaeModel::new(config, seed)?;
        let mut opt = MaeOptState::new(&model);
        let start = std::time::Instant::now();
        let before = eval_loss(&model, &data, seed)?;
        pretrain(&mut model, &mut opt, &data, &cfg.pretrain, seed, |r| {
            if r.step % 10 == 0 {
                println!("  step {:3}  batch loss {:.5}", r.step, r.loss);
            }
        })?;
        let after = eval_loss(&model, &data, seed)?;
        println!(
            "  {} params, eval loss {before:.5} -> {after:.5} (ratio {:.3}) in {:.1?}",
            model.n_params(),
            after / before,
            start.elapsed()
        );
    }
    Ok(())
}
