//! The `vimguard` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 client or transport
//! error.

use crate::claim_detect::{finetune_unfrozen, read_manifest, ClaimHead, LabeledExample, TokenExample};
use crate::config::{ClientKind, Config, ConfigError};
use crate::eval::{evaluate, read_comparison, read_labels, render_table, write_report};
use crate::mae::{
    eval_loss, fuse, pca_2d, pretrain, write_pca_csv, Embedding, FeatureConfig, MaeConfig, MaeEncoder, MaeModel,
    MaeOptState, Modality,
};
use crate::media::{decoder, load_bundle, ClaimLabel, SfvBundle};
use crate::nnet::checkpoint::Checkpoint;
use crate::pipeline::{
    check_batch, save_features, write_outcomes, CheckContext, Models, OutcomeCache, AUDIO_ENCODER_FILE,
    CLAIM_HEAD_FILE, FEATURES_FILE, VIDEO_ENCODER_FILE,
};
use crate::retrieval::{read_corpus, InvertedIndex};
use crate::rng::SeededRng;
use crate::synth::synth_corpus;
use crate::tokenizer::TokenSet;
use crate::verify::{HttpClient, MockClient, RetrieveFrom, TextClient};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CLIENT: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            msg: msg.into(),
        }
    }

    fn data(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_DATA,
            msg: e.to_string(),
        }
    }

    fn data_at(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::data(format!("{}: {e}", path.display()))
    }

    fn client(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_CLIENT,
            msg: e.to_string(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(_) => CliError::data(e),
            _ => CliError::usage(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "vimguard", version, about = "Gated claim detection and retrieval-backed verification for short-form video")]
pub struct Cli {
    /// TOML config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decode a video file into a bundle directory with the configured decoder.
    Ingest(IngestArgs),
    /// Pretrain masked autoencoders.
    Pretrain(PretrainArgs),
    /// Train the claim head on fused embeddings.
    Finetune(FinetuneArgs),
    /// Article index commands.
    Index {
        #[command(subcommand)]
        command: IndexCommand,
    },
    /// Run the gated pipeline over a bundle manifest.
    Check(CheckArgs),
    /// Score an outcome stream against labels.
    Eval(EvalArgs),
    /// Project embeddings to 2-D with PCA and write a CSV.
    VizEmbeddings(VizArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Print the decoder command instead of running it.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Video,
    Audio,
    Both,
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct DataSource {
    /// JSONL manifest of bundle directories.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Generate this many synthetic bundles instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: DataSource,
    #[arg(long, value_enum, default_value = "both")]
    pub modality: ModalityArg,
    /// Model directory for checkpoints, loss curves and features.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `pretrain.steps`.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Continue from the checkpoint already in `--out`.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub data: DataSource,
    /// Model directory holding pretrained encoders; the head is written here.
    #[arg(long)]
    pub models: PathBuf,
    /// Overrides `finetune.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Also train the encoders (overrides `finetune.unfreeze`).
    #[arg(long)]
    pub unfreeze: bool,
}

#[derive(Subcommand, Debug)]
pub enum IndexCommand {
    /// Build an index directory from a JSONL article corpus.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClientArg {
    Mock,
    Http,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RetrieveFromArg {
    Summary,
    Transcript,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
    /// Outcome stream path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `pipeline.jobs`.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub no_cache: bool,
    /// Overrides `pipeline.cache_dir`.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Record wall_time_ms per outcome.
    #[arg(long)]
    pub timing: bool,
    #[arg(long, value_enum)]
    pub client: Option<ClientArg>,
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Only articles published on or after this date (YYYY-MM-DD).
    #[arg(long)]
    pub since: Option<String>,
    #[arg(long, value_enum)]
    pub retrieve_from: Option<RetrieveFromArg>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub outcomes: PathBuf,
    /// JSONL with `bundle_id` and `truth` (misinformative | not_misinformative).
    #[arg(long)]
    pub labels: PathBuf,
    /// CSV rows `system,auroc,f1,api_calls` shown beside this run.
    #[arg(long)]
    pub comparison: Option<PathBuf>,
    #[arg(long, default_value = "vimguard")]
    pub system: String,
    /// Directory for report.json, report.txt and records.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VizModality {
    Video,
    Audio,
    Fused,
}

#[derive(Args, Debug)]
pub struct VizArgs {
    #[command(flatten)]
    pub data: DataSource,
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long, value_enum, default_value = "fused")]
    pub modality: VizModality,
    /// CSV path; a JSON sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

/// The clap command with the configuration key reference appended to help.
pub fn command() -> clap::Command {
    let keys = format!(
        "Configuration keys (TOML, `section.key = default`):\n{}",
        Config::key_reference()
    );
    Cli::command().after_help(keys.clone()).after_long_help(keys)
}

/// Parses `args`, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            e.code
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

fn load_config(cli: &Cli) -> CliResult<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> CliResult {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&cfg, &a),
        Command::Pretrain(a) => cmd_pretrain(cfg, &a),
        Command::Finetune(a) => cmd_finetune(cfg, &a),
        Command::Index {
            command: IndexCommand::Build { corpus, out },
        } => cmd_index_build(&cfg, &corpus, &out),
        Command::Check(a) => cmd_check(cfg, &a),
        Command::Eval(a) => cmd_eval(&cfg, &a),
        Command::VizEmbeddings(a) => cmd_viz(&cfg, &a),
    }
}

fn echo_config(dir: &Path, cfg: &Config) -> CliResult {
    std::fs::create_dir_all(dir).map_err(CliError::data)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(CliError::data)
}

pub fn cmd_ingest(cfg: &Config, a: &IngestArgs) -> CliResult {
    let template = &cfg.ingest.decoder_command;
    if template.trim().is_empty() {
        return Err(CliError::usage(
            "no decoder command configured; set ingest.decoder_command in the config, \
             e.g. \"my-decoder {input} --out {out}\"",
        ));
    }
    if a.dry_run {
        println!("{}", decoder::render_command(template, &a.input, &a.out));
        return Ok(());
    }
    let b = decoder::run_decoder(template, &a.input, &a.out).map_err(CliError::data)?;
    println!(
        "{}: {} frames, {:.2} s audio, hash {}",
        b.id,
        b.frames.len(),
        b.audio_duration_s(),
        b.content_hash()
    );
    Ok(())
}

/// Bundles from a manifest or the synthetic generator, with labels when known.
fn load_data(src: &DataSource, cfg: &Config, stream: u64) -> CliResult<Vec<(SfvBundle, Option<ClaimLabel>)>> {
    if let Some(n) = src.synthetic {
        if n == 0 {
            return Err(CliError::usage("--synthetic needs at least 1 bundle"));
        }
        let seed = SeededRng::derive(cfg.seed, stream).next_u64();
        return Ok(synth_corpus(n, seed, &cfg.synth)
            .into_iter()
            .map(|b| {
                let l = b.manifest.as_ref().and_then(|m| m.label);
                (b, l)
            })
            .collect());
    }
    let path = src.manifest.as_ref().expect("clap enforces one source");
    let entries = read_manifest(path).map_err(CliError::data)?;
    if entries.is_empty() {
        return Err(CliError::data(format!("{}: manifest is empty", path.display())));
    }
    entries
        .iter()
        .map(|e: &LabeledExample| {
            let b = load_bundle(&e.path).map_err(|err| CliError::data(format!("{}: {err}", e.path.display())))?;
            Ok((b, e.resolved_label()))
        })
        .collect()
}

fn tokens_of(bundles: &[(SfvBundle, Option<ClaimLabel>)], m: Modality, f: &FeatureConfig) -> CliResult<Vec<TokenSet>> {
    bundles
        .iter()
        .map(|(b, _)| match m {
            Modality::Video => f.video.tokens(b),
            _ => f.audio.tokens(b),
        })
        .collect::<Result<_, _>>()
        .map_err(CliError::data)
}

pub fn cmd_pretrain(mut cfg: Config, a: &PretrainArgs) -> CliResult {
    if let Some(s) = a.steps {
        cfg.pretrain.steps = s;
    }
    cfg.validate()?;
    let data = load_data(&a.data, &cfg, 0x7072_6574)?;
    std::fs::create_dir_all(&a.out).map_err(CliError::data)?;
    let modalities: &[Modality] = match a.modality {
        ModalityArg::Video => &[Modality::Video],
        ModalityArg::Audio => &[Modality::Audio],
        ModalityArg::Both => &[Modality::Video, Modality::Audio],
    };
    for &m in modalities {
        let tokens = tokens_of(&data, m, &cfg.features)?;
        let mae_cfg = match m {
            Modality::Video => MaeConfig::video(&cfg.features.video, &cfg.model),
            _ => MaeConfig::audio(&cfg.features.audio, &cfg.model),
        };
        let ckpt_path = a.out.join(format!("{m}_mae.vgck"));
        let curve_path = a.out.join(format!("{m}_loss.csv"));
        let (mut model, mut opt) = if a.resume {
            let c = Checkpoint::load(&ckpt_path).map_err(CliError::data)?;
            let (model, opt) = MaeModel::from_checkpoint(&c).map_err(CliError::data)?;
            if model.config != mae_cfg {
                return Err(CliError::usage(format!(
                    "{}: checkpoint config differs from the current config",
                    ckpt_path.display()
                )));
            }
            let opt = opt.unwrap_or_else(|| MaeOptState::new(&model));
            (model, opt)
        } else {
            let model = MaeModel::new(mae_cfg, cfg.seed).map_err(CliError::data)?;
            let opt = MaeOptState::new(&model);
            (model, opt)
        };
        let eval_seed = SeededRng::derive(cfg.seed, 0x6576_616c).next_u64();
        let before = eval_loss(&model, &tokens, eval_seed).map_err(CliError::data)?;
        let curve = pretrain(&mut model, &mut opt, &tokens, &cfg.pretrain, cfg.seed, |r| {
            log::info!("{m} step {} loss {:.6}", r.step, r.loss)
        })
        .map_err(CliError::data)?;
        let after = eval_loss(&model, &tokens, eval_seed).map_err(CliError::data)?;
        let mut csv = if a.resume && curve_path.exists() {
            std::fs::read_to_string(&curve_path).map_err(CliError::data)?
        } else {
            "step,loss\n".to_string()
        };
        for r in &curve {
            csv.push_str(&format!("{},{}\n", r.step, r.loss));
        }
        std::fs::write(&curve_path, csv).map_err(CliError::data)?;
        model.to_checkpoint(Some(&opt)).save(&ckpt_path).map_err(CliError::data)?;
        let enc_file = match m {
            Modality::Video => VIDEO_ENCODER_FILE,
            _ => AUDIO_ENCODER_FILE,
        };
        model.encoder_only().to_checkpoint().save(a.out.join(enc_file)).map_err(CliError::data)?;
        let summary = serde_json::json!({
            "modality": m.as_str(),
            "n_bundles": tokens.len(),
            "steps": opt.step(),
            "eval_loss_before": before,
            "eval_loss_after": after,
            "ratio": after / before,
        });
        std::fs::write(
            a.out.join(format!("{m}_pretrain.json")),
            serde_json::to_string_pretty(&summary).expect("json") + "\n",
        )
        .map_err(CliError::data)?;
        println!("{m}: eval loss {before:.6} -> {after:.6} (ratio {:.3}) after step {}", after / before, opt.step());
    }
    save_features(&a.out, &cfg.features).map_err(CliError::data)?;
    echo_config(&a.out, &cfg)
}

fn load_encoders(dir: &Path) -> CliResult<(FeatureConfig, MaeEncoder, MaeEncoder)> {
    let features: FeatureConfig = serde_json::from_slice(&std::fs::read(dir.join(FEATURES_FILE)).map_err(|e| {
        CliError::data(format!("{}: {e} (run `vimguard pretrain` first)", dir.join(FEATURES_FILE).display()))
    })?)
    .map_err(CliError::data)?;
    let load = |f: &str| -> CliResult<MaeEncoder> {
        let c = Checkpoint::load(dir.join(f)).map_err(|e| CliError::data(format!("{}: {e}", dir.join(f).display())))?;
        MaeEncoder::from_checkpoint(&c).map_err(CliError::data)
    };
    Ok((features, load(VIDEO_ENCODER_FILE)?, load(AUDIO_ENCODER_FILE)?))
}

fn fused_embedding(b: &SfvBundle, f: &FeatureConfig, v: &MaeEncoder, a: &MaeEncoder) -> CliResult<Embedding> {
    let ve = v.embed(&f.video.tokens(b).map_err(CliError::data)?, &b.id).map_err(CliError::data)?;
    let ae = a.embed(&f.audio.tokens(b).map_err(CliError::data)?, &b.id).map_err(CliError::data)?;
    fuse(&ve, &ae).map_err(CliError::data)
}

pub fn cmd_finetune(mut cfg: Config, a: &FinetuneArgs) -> CliResult {
    if let Some(e) = a.epochs {
        cfg.finetune.epochs = e;
    }
    cfg.finetune.unfreeze |= a.unfreeze;
    cfg.validate()?;
    let (features, mut video, mut audio) = load_encoders(&a.models)?;
    let data = load_data(&a.data, &cfg, 0x6669_6e65)?;
    let labeled: Vec<&(SfvBundle, Option<ClaimLabel>)> = data.iter().filter(|(_, l)| l.is_some()).collect();
    if labeled.len() < data.len() {
        log::warn!("skipping {} bundles without a resolvable label", data.len() - labeled.len());
    }
    let ft = &cfg.finetune;
    let mut head = ClaimHead::new(video.dim() + audio.dim(), ft.hidden, ft.threshold, ft.init_std, cfg.seed)
        .map_err(CliError::data)?;
    let report = if ft.unfreeze {
        let ex: Vec<TokenExample> = labeled
            .iter()
            .map(|(b, l)| {
                Ok(TokenExample {
                    video: features.video.tokens(b).map_err(CliError::data)?,
                    audio: features.audio.tokens(b).map_err(CliError::data)?,
                    label: l.expect("filtered"),
                })
            })
            .collect::<CliResult<_>>()?;
        let r = finetune_unfrozen(&mut head, &mut video, &mut audio, &ex, ft, cfg.seed).map_err(CliError::data)?;
        video.to_checkpoint().save(a.models.join(VIDEO_ENCODER_FILE)).map_err(CliError::data)?;
        audio.to_checkpoint().save(a.models.join(AUDIO_ENCODER_FILE)).map_err(CliError::data)?;
        r
    } else {
        let ex: Vec<(Vec<f32>, ClaimLabel)> = labeled
            .iter()
            .map(|(b, l)| Ok((fused_embedding(b, &features, &video, &audio)?.vector, l.expect("filtered"))))
            .collect::<CliResult<_>>()?;
        head.finetune(&ex, ft, cfg.seed).map_err(CliError::data)?
    };
    head.to_checkpoint().save(a.models.join(CLAIM_HEAD_FILE)).map_err(CliError::data)?;
    std::fs::write(
        a.models.join("finetune_report.json"),
        serde_json::to_string_pretty(&report).expect("json") + "\n",
    )
    .map_err(CliError::data)?;
    echo_config(&a.models, &cfg)?;
    println!(
        "claim head: {} examples, final train accuracy {:.3}",
        labeled.len(),
        report.epoch_accuracy.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

pub fn cmd_index_build(cfg: &Config, corpus: &Path, out: &Path) -> CliResult {
    let articles = read_corpus(corpus).map_err(CliError::data)?;
    let index = InvertedIndex::build_with(articles, cfg.retrieval).map_err(CliError::data)?;
    index.save(out).map_err(CliError::data)?;
    echo_config(out, cfg)?;
    println!(
        "{} articles, {} terms, avg length {:.1}, checksum {}",
        index.n_docs(),
        index.vocabulary().count(),
        index.avg_doc_len(),
        index.checksum()
    );
    Ok(())
}

fn make_client(cfg: &Config) -> CliResult<Box<dyn TextClient>> {
    match cfg.client.kind {
        ClientKind::Mock => {
            let path = cfg
                .client
                .mock_script
                .as_ref()
                .ok_or_else(|| CliError::usage("mock client needs --mock-script or client.mock_script"))?;
            Ok(Box::new(MockClient::from_file(path).map_err(CliError::data)?))
        }
        ClientKind::Http => Ok(Box::new(HttpClient::new(cfg.client.http.clone()))),
    }
}

pub fn cmd_check(mut cfg: Config, a: &CheckArgs) -> CliResult {
    if let Some(j) = a.jobs {
        cfg.pipeline.jobs = j;
    }
    if a.no_cache {
        cfg.pipeline.cache = false;
    }
    if let Some(d) = &a.cache_dir {
        cfg.pipeline.cache_dir = d.clone();
    }
    cfg.pipeline.timing |= a.timing;
    if let Some(c) = a.client {
        cfg.client.kind = match c {
            ClientArg::Mock => ClientKind::Mock,
            ClientArg::Http => ClientKind::Http,
        };
    }
    if let Some(s) = &a.mock_script {
        cfg.client.mock_script = Some(s.clone());
    }
    if let Some(s) = &a.since {
        cfg.verify.since = Some(s.clone());
    }
    if let Some(r) = a.retrieve_from {
        cfg.verify.retrieve_from = match r {
            RetrieveFromArg::Summary => RetrieveFrom::Summary,
            RetrieveFromArg::Transcript => RetrieveFrom::Transcript,
        };
    }
    cfg.validate()?;
    let entries = read_manifest(&a.manifest).map_err(CliError::data)?;
    let models = Models::load(&a.models).map_err(CliError::data)?;
    let index = InvertedIndex::load(&a.index).map_err(CliError::data)?;
    let client = make_client(&cfg)?;
    let mut ctx = CheckContext::new(&models, &index, client.as_ref(), cfg.verify.clone()).with_timing(cfg.pipeline.timing);
    if cfg.pipeline.cache {
        ctx = ctx.with_cache(OutcomeCache::new(&cfg.pipeline.cache_dir).map_err(CliError::data)?);
    }
    let result = check_batch(&entries, &ctx, cfg.pipeline.jobs).map_err(CliError::data)?;
    match &a.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(CliError::data)?;
            }
            let f = std::io::BufWriter::new(std::fs::File::create(p).map_err(CliError::data)?);
            write_outcomes(f, &result).map_err(CliError::data)?;
        }
        None => write_outcomes(std::io::stdout().lock(), &result).map_err(CliError::data)?,
    }
    let s = &result.summary;
    eprintln!(
        "{} bundles, {} errors, {} llm calls, {} database calls",
        s.n_bundles, s.n_errors, s.api_calls.llm, s.api_calls.database
    );
    // a batch where every bundle hit a client failure is a client error
    let client_failures = result
        .outcomes
        .iter()
        .filter(|o| o.error.as_deref().is_some_and(|e| e.contains(" failed after ")))
        .count();
    if s.n_bundles > 0 && client_failures == s.n_bundles {
        return Err(CliError::client("every bundle failed in the text client"));
    }
    Ok(())
}

pub fn cmd_eval(cfg: &Config, a: &EvalArgs) -> CliResult {
    let outcomes = crate::pipeline::read_outcomes(&a.outcomes).map_err(|e| CliError::data_at(&a.outcomes, e))?;
    let labels = read_labels(&a.labels).map_err(|e| CliError::data_at(&a.labels, e))?;
    let comparison = match &a.comparison {
        Some(p) => read_comparison(p).map_err(|e| CliError::data_at(p, e))?,
        None => Vec::new(),
    };
    let report = evaluate(&outcomes.outcomes, &labels, &a.system, &comparison).map_err(CliError::data)?;
    write_report(&a.out, &report).map_err(CliError::data)?;
    echo_config(&a.out, cfg)?;
    print!("{}", render_table(&report));
    std::io::stdout().flush().map_err(CliError::data)
}

pub fn cmd_viz(cfg: &Config, a: &VizArgs) -> CliResult {
    let (features, video, audio) = load_encoders(&a.models)?;
    let data = load_data(&a.data, cfg, 0x7669_7a00)?;
    let mut embs = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for (b, l) in &data {
        let e = match a.modality {
            VizModality::Fused => fused_embedding(b, &features, &video, &audio)?,
            VizModality::Video => video
                .embed(&features.video.tokens(b).map_err(CliError::data)?, &b.id)
                .map_err(CliError::data)?,
            VizModality::Audio => audio
                .embed(&features.audio.tokens(b).map_err(CliError::data)?, &b.id)
                .map_err(CliError::data)?,
        };
        embs.push(e);
        labels.push(match l {
            Some(ClaimLabel::Claim) => "claim".to_string(),
            Some(ClaimLabel::NoClaim) => "no_claim".to_string(),
            None => "unlabeled".to_string(),
        });
    }
    let pca = pca_2d(&embs).map_err(CliError::data)?;
    let ids: Vec<String> = embs.iter().map(|e| e.source_id.clone()).collect();
    let modality = embs[0].modality;
    write_pca_csv(&a.out, &pca, &labels, &ids, modality).map_err(CliError::data)?;
    println!(
        "{} points, explained variance ratio {:.3} / {:.3}",
        embs.len(),
        pca.explained_ratio[0],
        pca.explained_ratio[1]
    );
    Ok(())
}
