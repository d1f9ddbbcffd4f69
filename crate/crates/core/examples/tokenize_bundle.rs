//! Turns one procedural bundle into video tubelet tokens and audio
//! spectrogram patches, then draws a mask plan over each.
//!
//! cargo run --example tokenize_bundle

use vimguard::config::Config;
use vimguard::media::{log_mel_spectrogram, SpecParams};
use vimguard::synth::{synth_bundle, SynthStyle};
use vimguard::tokenizer::make_mask;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = Config::default();
    let bundle = synth_bundle("demo", SynthStyle::TalkingHead, 7, &cfg.synth);
    println!(
        "bundle {}: {} frames of {}x{} at {}/{} fps, {:.2} s of audio",
        bundle.id,
        bundle.frames.len(),
        bundle.frames[0].width,
        bundle.frames[0].height,
        bundle.fps.0,
        bundle.fps.1,
        bundle.audio_duration_s()
    );

    let params = SpecParams {
        n_mels: cfg.features.audio.n_mels,
        ..SpecParams::default()
    };
    let spec = log_mel_spectrogram(&bundle.audio_f32(), &params)?;
    let loudest = (0..spec.bins)
        .max_by(|&a, &b| {
            let energy = |bin| (0..spec.frames).map(|t| spec.get(bin, t)).sum::<f32>();
            energy(a).total_cmp(&energy(b))
        })
        .unwrap();
    println!("log-mel spectrogram: {} bins x {} frames, loudest bin {loudest}", spec.bins, spec.frames);

    for (name, ts, ratio) in [
        ("video", cfg.features.video.tokens(&bundle)?, cfg.features.video.mask_ratio),
        ("audio", cfg.features.audio.tokens(&bundle)?, cfg.features.audio.mask_ratio),
    ] {
        let plan = make_mask(ts.n_tokens, ratio, 1);
        println!(
            "{name}: {} tokens x {} values (patch {:?}), mask keeps {:?} visible",
            ts.n_tokens, ts.token_dim, ts.patch_shape, plan.visible
        );
    }
    Ok(())
}
