//! Projects encoder embeddings of procedural bundles onto two principal
//! components and writes them as CSV for plotting.
//!
//! cargo run --release --example pca_viz -- [out.csv]

use vimguard::config::Config;
use vimguard::mae::{pca_2d, write_pca_csv, MaeConfig, MaeModel, Modality};
use vimguard::synth::synth_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "video_pca.csv".into());
    let cfg = Config::default();
    let encoder = MaeModel::<f32>::new(MaeConfig::video(&cfg.features.video, &cfg.model), 0)?.encoder_only();
    let bundles = synth_corpus(40, 1, &cfg.synth);
    let embs = bundles
        .iter()
        .map(|b| encoder.embed(&cfg.features.video.tokens(b)?, &b.id))
        .collect::<Result<Vec<_>, _>>()?;
    let pca = pca_2d(&embs)?;
    println!(
        "{} points of dim {}, explained ratio {:.3} / {:.3}",
        pca.points.len(),
        encoder.dim(),
        pca.explained_ratio[0],
        pca.explained_ratio[1]
    );
    let labels: Vec<String> = bundles.iter().map(|b| format!("{:?}", b.manifest.as_ref().and_then(|m| m.label).unwrap()).to_lowercase()).collect();
    let ids: Vec<String> = bundles.iter().map(|b| b.id.clone()).collect();
    for label in ["claim", "noclaim"] {
        let (n, sx) = pca.points.iter().zip(&labels).filter(|(_, l)| *l == label).fold((0, 0.0), |(n, s), (p, _)| (n + 1, s + p[0]));
        println!("  {label}: {n} points, mean first component {:.3}", sx / n as f64);
    }
    write_pca_csv(out.as_ref(), &pca, &labels, &ids, Modality::Video)?;
    println!("wrote {out}");
    Ok(())
}
