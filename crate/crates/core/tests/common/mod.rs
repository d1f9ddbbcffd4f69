#![allow(dead_code)]

use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use vimguard::claim_detect::ClaimHead;
use vimguard::config::Config;
use vimguard::mae::{fuse, MaeConfig, MaeModel};
use vimguard::media::{load_bundle, write_bundle, ClaimLabel};
use vimguard::pipeline::Models;
use vimguard::synth::{synth_bundle, synth_corpus, SynthParams, SynthStyle};
use vimguard::verify::{mock_key, AudioInput, Op};

pub const N_BUNDLES: usize = 20;
pub const CLAIM_SLOTS: [usize; 7] = [0, 3, 6, 9, 12, 15, 18];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn mock_batch_dir() -> PathBuf {
    fixtures().join("mock_batch")
}

/// Fixture bundles are desk-sized with 8 kHz audio, resampled on load.
pub fn fixture_synth() -> SynthParams {
    SynthParams {
        sample_rate: 8_000,
        ..Config::default().synth
    }
}

struct ClaimScript {
    transcript: &'static str,
    summary: Option<&'static str>,
    /// Phrase that picks the adjudicator reply out of the prompt.
    cue: &'static str,
    reply: &'static str,
    misinformative: bool,
}

const CLAIMS: [ClaimScript; 7] = [
    ClaimScript {
        transcript: "Breaking: the Golden Gate Bridge was repainted bright blue last spring to mark its anniversary.",
        summary: None,
        cue: "repainted bright blue",
        reply: "FALSE The bridge keeps its international orange colour [1].",
        misinformative: true,
    },
    ClaimScript {
        transcript: "Doctors hate this: drinking seawater rehydrates you faster than fresh water.",
        summary: None,
        cue: "drinking seawater rehydrates",
        reply: "FALSE Seawater worsens dehydration because of its salt load [1].",
        misinformative: true,
    },
    ClaimScript {
        transcript: "Okay so listen, everybody keeps telling me this and now I finally believe it. \
                     Astronauts say you can see the Great Wall of China from the Moon with the naked eye, \
                     it is the only human structure visible from that far away, and schools have been \
                     teaching it for decades because it is simply true.",
        summary: Some("Claims the Great Wall of China is visible from the Moon with the naked eye."),
        cue: "visible from the Moon",
        reply: "FALSE Astronaut accounts say the wall cannot be seen unaided from the Moon [1] [2].",
        misinformative: true,
    },
    ClaimScript {
        transcript: "Fun fact: sealed honey never spoils, and edible honey was found in ancient Egyptian tombs.",
        summary: None,
        cue: "sealed honey never spoils",
        reply: "TRUE Archaeologists report preserved honey in tombs [1].",
        misinformative: false,
    },
    ClaimScript {
        transcript: "The Eiffel Tower grows about fifteen centimetres taller during summer heat.",
        summary: None,
        cue: "Eiffel Tower grows",
        reply: "TRUE Thermal expansion of the iron raises the tower in summer [1].",
        misinformative: false,
    },
    ClaimScript {
        transcript: "I did not believe this at first but it is real and you can look it up yourself right now. \
                     An octopus has three hearts pumping its blood, and that blood is blue because it uses \
                     a copper based protein instead of the iron based one we have, which is wild if you \
                     think about how different that makes them from us.",
        summary: Some("Claims an octopus has three hearts and blue, copper based blood."),
        cue: "three hearts",
        reply: "TRUE Marine biology references confirm three hearts and hemocyanin blood [1].",
        misinformative: false,
    },
    ClaimScript {
        transcript: "Zorblat quintessa frumious vexillology!",
        summary: None,
        cue: "NO ARTICLES RETRIEVED",
        reply: "UNVERIFIABLE No reference articles were available.",
        misinformative: false,
    },
];

const ARTICLES: [(&str, &str, &str, &str, Option<&str>); 10] = [
    (
        "ggb-colour",
        "Why the Golden Gate Bridge is orange",
        "The Golden Gate Bridge is painted international orange, a colour chosen in the 1930s. Crews repaint sections continuously; the bridge has never been painted blue.",
        "wikipedia",
        Some("2019-05-01"),
    ),
    (
        "seawater",
        "Can you drink seawater?",
        "Drinking seawater causes dehydration. The kidneys need more fresh water to flush the salt than the seawater supplies, so rehydrates claims are false.",
        "claimreview",
        Some("2021-07-14"),
    ),
    (
        "great-wall-moon",
        "Is the Great Wall of China visible from the Moon?",
        "Astronauts report that the Great Wall of China is not visible from the Moon with the naked eye. The wall is narrow and close in colour to the surrounding terrain.",
        "claimreview",
        Some("2020-02-10"),
    ),
    (
        "great-wall-orbit",
        "Seeing human structures from orbit",
        "From low Earth orbit astronauts can see cities and airports; the Great Wall is very hard to spot even there and is not visible from the Moon.",
        "news",
        Some("2022-11-03"),
    ),
    (
        "honey-tombs",
        "Honey found in ancient Egyptian tombs",
        "Archaeologists excavating ancient Egyptian tombs found pots of honey thousands of years old that was still edible. Sealed honey never spoils thanks to low moisture and acidity.",
        "news",
        Some("2018-08-22"),
    ),
    (
        "eiffel-summer",
        "The Eiffel Tower in summer heat",
        "Thermal expansion of the iron makes the Eiffel Tower grow by up to fifteen centimetres during hot summer days.",
        "wikipedia",
        Some("2017-06-30"),
    ),
    (
        "octopus",
        "Octopus anatomy",
        "An octopus has three hearts. Its blood is blue because it carries oxygen with hemocyanin, a copper based protein.",
        "wikipedia",
        None,
    ),
    (
        "bridge-traffic",
        "Bridge traffic report",
        "Traffic on the bridge was heavy during the spring festival weekend.",
        "news",
        Some("2023-04-02"),
    ),
    (
        "hydration",
        "Staying hydrated in summer",
        "Fresh water is the best drink for hydration; doctors recommend drinking regularly in summer heat.",
        "other",
        Some("2023-06-01"),
    ),
    (
        "space-tourism",
        "Space tourism and the Moon",
        "Private companies plan to fly tourists around the Moon within the decade.",
        "news",
        Some("2024-01-15"),
    ),
];

fn jsonl(values: impl IntoIterator<Item = serde_json::Value>) -> Vec<u8> {
    let mut out = Vec::new();
    for v in values {
        out.extend(serde_json::to_vec(&v).unwrap());
        out.push(b'\n');
    }
    out
}

/// Every file of the mock batch fixture, keyed by path relative to its root.
pub fn mock_batch_files() -> BTreeMap<PathBuf, Vec<u8>> {
    let p = fixture_synth();
    let tmp = tempfile::tempdir().unwrap();
    let mut files = BTreeMap::new();
    let mut manifest = Vec::new();
    let mut labels = Vec::new();
    let mut responses = serde_json::Map::new();
    let mut rules = Vec::new();
    let mut claims = CLAIMS.iter();
    for i in 0..N_BUNDLES {
        let id = format!("mb_{i:02}");
        let style = if CLAIM_SLOTS.contains(&i) { SynthStyle::TalkingHead } else { SynthStyle::Dance };
        let b = synth_bundle(&id, style, 9_000 + i as u64, &p);
        let dir = tmp.path().join(&id);
        write_bundle(&dir, &b).unwrap();
        for entry in std::fs::read_dir(&dir).unwrap() {
            let entry = entry.unwrap();
            let rel = Path::new("bundles").join(&id).join(entry.file_name());
            files.insert(rel, std::fs::read(entry.path()).unwrap());
        }
        let m = b.manifest.as_ref().unwrap();
        manifest.push(json!({
            "bundle_id": id,
            "label": m.label,
            "hashtags": m.hashtags,
            "path": format!("bundles/{id}"),
        }));
        let mut misinformative = false;
        if style == SynthStyle::TalkingHead {
            let c = claims.next().unwrap();
            let loaded = load_bundle(&dir).unwrap();
            let digest = AudioInput {
                source_id: &loaded.id,
                sample_rate: loaded.sample_rate,
                samples: &loaded.audio,
            }
            .digest();
            responses.insert(mock_key(Op::Transcribe, &digest), json!(c.transcript));
            if let Some(s) = c.summary {
                responses.insert(mock_key(Op::Summarize, c.transcript), json!(s));
            }
            rules.push(json!({"op": "adjudicate", "contains": c.cue, "output": c.reply}));
            misinformative = c.misinformative;
        }
        labels.push(json!({
            "bundle_id": id,
            "truth": if misinformative { "misinformative" } else { "not_misinformative" },
        }));
    }
    assert!(claims.next().is_none());
    files.insert("manifest.jsonl".into(), jsonl(manifest));
    files.insert("labels.jsonl".into(), jsonl(labels));
    let script = json!({"provider": "mock-fixture", "responses": responses, "rules": rules});
    files.insert("script.json".into(), (serde_json::to_string_pretty(&script).unwrap() + "\n").into_bytes());
    files.insert(
        "corpus.jsonl".into(),
        jsonl(ARTICLES.iter().map(|(id, title, body, source, date)| {
            let mut a = json!({"id": id, "title": title, "body": body, "source": source});
            if let Some(d) = date {
                a["published_at"] = json!(d);
            }
            a
        })),
    );
    files
}

/// Ids of the fixture bundles whose reply is FALSE.
pub fn misinformative_ids() -> Vec<String> {
    let mut claims = CLAIMS.iter();
    CLAIM_SLOTS
        .iter()
        .filter_map(|&i| claims.next().filter(|c| c.misinformative).map(|_| format!("mb_{i:02}")))
        .collect()
}

/// Untrained encoders plus a claim head fit on separately generated
/// synthetic bundles, saved as a models directory.
pub fn build_models(dir: &Path, seed: u64) -> Models {
    let cfg = Config::default();
    let f = cfg.features.clone();
    let video = MaeModel::<f32>::new(MaeConfig::video(&f.video, &cfg.model), seed).unwrap().encoder_only();
    let audio = MaeModel::<f32>::new(MaeConfig::audio(&f.audio, &cfg.model), seed + 1).unwrap().encoder_only();
    let train: Vec<(Vec<f32>, ClaimLabel)> = synth_corpus(40, seed + 2, &cfg.synth)
        .iter()
        .map(|b| {
            let v = video.embed(&f.video.tokens(b).unwrap(), &b.id).unwrap();
            let a = audio.embed(&f.audio.tokens(b).unwrap(), &b.id).unwrap();
            let label = b.manifest.as_ref().unwrap().label.unwrap();
            (fuse(&v, &a).unwrap().vector, label)
        })
        .collect();
    let ft = &cfg.finetune;
    let mut head = ClaimHead::new(video.dim() + audio.dim(), ft.hidden, ft.threshold, ft.init_std, seed + 3).unwrap();
    head.finetune(&train, ft, seed + 4).unwrap();
    let models = Models::new(f, video, audio, head).unwrap();
    models.save(dir).unwrap();
    models
}
