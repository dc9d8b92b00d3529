//! Operator command line. Exit codes: 0 success, 1 usage, 2 data, 3
//! internal.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coughscreen_core::analysis::{self, TsneConfig};
use coughscreen_core::classifiers::NetKind;
use coughscreen_core::corpus::{SynthClass, SynthSpec};
use coughscreen_core::dsp;
use coughscreen_core::evaluation::{self, CvReport};
use coughscreen_core::mediator::{self, ClassifierRates, MediatorReport};
use coughscreen_core::nn::Network;

use crate::config::{AppConfig, ConfigError};
use crate::corpus_io::{self, Corpus, CorpusIoError};
use crate::engine::{Engine, EngineError, Models};
use crate::model_io::{self, ModelIoError};
use crate::pipeline::PipelineError;
use crate::report::{self, ReportError};
use crate::service::ScreenResponse;
use crate::training::{self, NetCv, RunManifest, SvmCv, TrainError};
use crate::wav::{self, WavError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "coughscreen",
    version,
    about = "Acoustic cough screening: training, evaluation, prediction and service"
)]
pub struct Cli {
    /// TOML configuration file; AI4C_* environment variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CorpusOut {
    /// Corpus directory holding manifest.csv (or an ESC-50 tree with --esc50).
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Read the corpus as an ESC-50 folder (meta/esc50.csv + audio/).
    #[arg(long)]
    pub esc50: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Detector,
    DtlMc,
    DtlBc,
    CmlMc,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the cough detector on a detection corpus.
    TrainDetector(CorpusOut),
    /// Train the four-class transfer network from a trained detector.
    TrainDtlMc {
        #[command(flatten)]
        io: CorpusOut,
        /// Trained detector file (or a directory holding detector.aicn).
        #[arg(long)]
        model: PathBuf,
    },
    /// Train the binary COVID-19 transfer network from a trained detector.
    TrainDtlBc {
        #[command(flatten)]
        io: CorpusOut,
        #[arg(long)]
        model: PathBuf,
    },
    /// Train the feature SVM on a diagnosis corpus.
    TrainCmlMc(CorpusOut),
    /// k-fold cross-validation of one model's training recipe.
    Evaluate {
        #[command(flatten)]
        io: CorpusOut,
        #[arg(long, value_enum)]
        kind: ModelKind,
        /// Detector used as the transfer source of dtl-mc and dtl-bc.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Screen clips with the full pipeline and print one JSON result each.
    Predict {
        /// Directory holding the four model files.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        clips: Vec<PathBuf>,
    },
    /// Write the feature vector of every clip to features.csv.
    ExtractFeatures(CorpusOut),
    /// 2-D t-SNE embedding of corpus features (CSV + SVG).
    Tsne {
        #[command(flatten)]
        io: CorpusOut,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 200.0)]
        learning_rate: f64,
    },
    /// Outcome probabilities of the veto mediator for given classifier rates.
    MediatorAnalyze {
        /// sens1,spec1,sens2,spec2,sens3,spec3
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        /// d1..d6 dependence coefficients (default all 1).
        #[arg(long, value_delimiter = ',')]
        d: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic corpus (WAV files + manifest.csv).
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated classes, e.g. covid19,pertussis,bronchitis,normal.
        #[arg(long, default_value = "covid19,pertussis,bronchitis,normal")]
        classes: String,
        #[arg(long, default_value_t = 50)]
        per_class: usize,
    },
    /// Dump the mel spectrogram (CSV) and spectro-image (PGM) of one clip.
    Spectrogram {
        clip: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn data(message: impl std::fmt::Display) -> Self {
        Self { code: EXIT_DATA, message: message.to_string() }
    }

    pub fn internal(message: impl std::fmt::Display) -> Self {
        Self { code: EXIT_INTERNAL, message: message.to_string() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<CorpusIoError> for CliError {
    fn from(e: CorpusIoError) -> Self {
        CliError::data(e)
    }
}

impl From<WavError> for CliError {
    fn from(e: WavError) -> Self {
        CliError::data(e)
    }
}

impl From<ModelIoError> for CliError {
    fn from(e: ModelIoError) -> Self {
        CliError::data(format!("model file: {e}"))
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Audio(_) | PipelineError::Corpus(_) => CliError::data(e),
            _ => CliError::internal(e),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::MalformedAudio(_) | EngineError::Validation(_) | EngineError::ModelIo(_) => CliError::data(e),
            _ => CliError::internal(e),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Corpus(_) => CliError::data(e),
            _ => CliError::internal(e),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::internal(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<AppConfig> {
    let mut cfg = AppConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn dispatch(cli: Cli) -> CliResult {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::TrainDetector(io) => train_net_cmd("train-detector", NetKind::Detector, &io, None, &cfg),
        Command::TrainDtlMc { io, model } => train_net_cmd("train-dtl-mc", NetKind::DtlMc, &io, Some(&model), &cfg),
        Command::TrainDtlBc { io, model } => train_net_cmd("train-dtl-bc", NetKind::DtlBc, &io, Some(&model), &cfg),
        Command::TrainCmlMc(io) => train_svm_cmd(&io, &cfg),
        Command::Evaluate { io, kind, model, k } => evaluate_cmd(&io, kind, model.as_deref(), k, &cfg),
        Command::Predict { model, out, clips } => predict_cmd(model.as_deref(), out.as_deref(), &clips, &cfg),
        Command::ExtractFeatures(io) => extract_features_cmd(&io, &cfg),
        Command::Tsne { io, perplexity, iterations, learning_rate } => {
            let tsne = TsneConfig { perplexity, iterations, learning_rate, seed: cfg.seed, ..TsneConfig::default() };
            tsne_cmd(&io, &tsne, &cfg)
        }
        Command::MediatorAnalyze { rates, d, out } => mediator_cmd(&rates, d.as_deref(), out.as_deref()),
        Command::SynthCorpus { out, classes, per_class } => synth_cmd(&out, &classes, per_class, &cfg),
        Command::Spectrogram { clip, out } => spectrogram_cmd(&clip, &out, &cfg),
        Command::Serve { bind, model, store } => {
            let mut svc = cfg.service.clone();
            if let Some(b) = bind {
                svc.bind = b;
            }
            if let Some(m) = model {
                svc.models_dir = m;
            }
            if let Some(s) = store {
                svc.store_dir = s;
            }
            let rt = tokio::runtime::Runtime::new().map_err(CliError::internal)?;
            rt.block_on(crate::service::serve(&svc, cfg.preprocess.clone())).map_err(CliError::internal)
        }
    }
}

fn load_corpus(io: &CorpusOut, labels: Option<&[String]>) -> CliResult<Corpus> {
    Ok(if io.esc50 { corpus_io::load_esc50(&io.corpus)? } else { corpus_io::load_corpus_dir(&io.corpus, labels)? })
}

fn write_manifest(out: &Path, manifest: RunManifest) -> CliResult {
    report::write_json(&out.join("manifest.json"), &manifest.finish())?;
    Ok(())
}

fn detector_path(model: &Path) -> PathBuf {
    if model.is_dir() {
        model.join(NetKind::Detector.file_name())
    } else {
        model.to_path_buf()
    }
}

fn load_detector(model: &Path) -> CliResult<(Network<f64>, String)> {
    let path = detector_path(model);
    let bytes = model_io::read_file(&path)?;
    let (net, kind) = model_io::decode_network::<f64>(&bytes)?;
    if kind.is_some_and(|k| k != NetKind::Detector) {
        return Err(CliError::data(format!("{} is not a detector model", path.display())));
    }
    Ok((net, model_io::version_tag(&bytes)))
}

fn labels_for(kind: NetKind, corpus: &Corpus) -> CliResult<Vec<usize>> {
    let expected =
        if kind == NetKind::Detector { corpus_io::detection_labels() } else { corpus_io::diagnosis_labels() };
    if corpus.labels != expected {
        return Err(CliError::data(format!(
            "corpus labels {:?} do not fit this model (expected {:?})",
            corpus.labels, expected
        )));
    }
    let labels = corpus.label_indices();
    Ok(if kind == NetKind::DtlBc { training::binary_labels(&labels) } else { labels })
}

fn train_net_cmd(name: &str, kind: NetKind, io: &CorpusOut, model: Option<&Path>, cfg: &AppConfig) -> CliResult {
    let mut manifest = RunManifest::new(name, cfg);
    let corpus = load_corpus(io, None)?;
    let labels = labels_for(kind, &corpus)?;
    let detector = model.map(load_detector).transpose()?;
    if let Some((_, v)) = &detector {
        manifest.model_versions.insert("detector".into(), v.clone());
    }
    let t = Instant::now();
    let images = cfg.preprocess.corpus_images(&corpus)?;
    tracing::info!("{} images in {:.1?}", images.len(), t.elapsed());
    let (net, run) = training::train_network(kind, &images, &labels, detector.as_ref().map(|d| &d.0), cfg)?;
    let bytes = model_io::encode_network(&net, Some(kind));
    model_io::write_file(&io.out.join(kind.file_name()), &bytes)?;
    report::write_loss_csv(&io.out.join("loss.csv"), &run.history)?;
    report::write_json(&io.out.join("training.json"), &run)?;
    manifest.corpus = Some(corpus.provenance.clone());
    manifest.corpus_size = Some(corpus.len());
    manifest.model_versions.insert(name_of(kind).into(), model_io::version_tag(&bytes));
    write_manifest(&io.out, manifest)
}

fn name_of(kind: NetKind) -> &'static str {
    match kind {
        NetKind::Detector => "detector",
        NetKind::DtlMc => "dtl_mc",
        NetKind::DtlBc => "dtl_bc",
    }
}

fn train_svm_cmd(io: &CorpusOut, cfg: &AppConfig) -> CliResult {
    let mut manifest = RunManifest::new("train-cml-mc", cfg);
    let corpus = load_corpus(io, Some(&corpus_io::diagnosis_labels()))?;
    let features = cfg.preprocess.corpus_features(&corpus)?;
    let (model, tuning) = training::train_cml_mc(&features, &corpus.label_indices(), cfg)?;
    let bytes = model_io::encode_svm(&model);
    model_io::write_file(&io.out.join(model_io::SVM_FILE_NAME), &bytes)?;
    report::write_json(&io.out.join("tuning.json"), &tuning)?;
    manifest.corpus = Some(corpus.provenance.clone());
    manifest.corpus_size = Some(corpus.len());
    manifest.model_versions.insert("cml_mc".into(), model_io::version_tag(&bytes));
    write_manifest(&io.out, manifest)
}

fn evaluate_cmd(io: &CorpusOut, kind: ModelKind, model: Option<&Path>, k: usize, cfg: &AppConfig) -> CliResult {
    if k < 2 {
        return Err(CliError::usage("--k must be at least 2"));
    }
    let mut manifest = RunManifest::new("evaluate", cfg);
    manifest.seeds.insert("folds".into(), cfg.seed);
    let report: CvReport = match kind {
        ModelKind::CmlMc => {
            let corpus = load_corpus(io, Some(&corpus_io::diagnosis_labels()))?;
            let features = cfg.preprocess.corpus_features(&corpus)?;
            let labels = corpus.label_indices();
            let names: Vec<&str> = corpus.labels.iter().map(String::as_str).collect();
            manifest.corpus = Some(corpus.provenance.clone());
            let mut p = SvmCv { features: &features, labels: &labels, config: cfg.svm.svm_config(cfg.seed) };
            evaluation::cross_validate(&mut p, &labels, &names, k, cfg.seed).map_err(cv_err)?
        }
        net => {
            let kind = match net {
                ModelKind::Detector => NetKind::Detector,
                ModelKind::DtlMc => NetKind::DtlMc,
                _ => NetKind::DtlBc,
            };
            let corpus = load_corpus(io, None)?;
            let labels = labels_for(kind, &corpus)?;
            let detector = match (kind, model) {
                (NetKind::Detector, _) => None,
                (_, Some(m)) => Some(load_detector(m)?.0),
                (_, None) => return Err(CliError::usage("--model <detector> is required for transfer networks")),
            };
            let names: Vec<String> = match kind {
                NetKind::DtlBc => vec!["covid".into(), "not_covid".into()],
                _ => corpus.labels.clone(),
            };
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            let images = cfg.preprocess.corpus_images(&corpus)?;
            manifest.corpus = Some(corpus.provenance.clone());
            let mut p = NetCv {
                kind,
                images: &images,
                labels: &labels,
                detector: detector.as_ref(),
                recipe: *cfg.training.recipe(kind),
                precision: cfg.training.precision,
                balance: kind == NetKind::DtlBc && cfg.training.balance_dtl_bc,
                seed: cfg.seed,
            };
            evaluation::cross_validate(&mut p, &labels, &names, k, cfg.seed).map_err(cv_err)?
        }
    };
    report::write_cv_report(&io.out, &report)?;
    println!("mean accuracy {:.4} over {} folds", report.mean_accuracy(), report.k);
    write_manifest(&io.out, manifest)
}

fn cv_err(e: evaluation::CvError<TrainError>) -> CliError {
    match e {
        evaluation::CvError::Eval(e) => CliError::data(e),
        evaluation::CvError::Pipeline { fold, source } => {
            let inner = CliError::from(source);
            CliError { code: inner.code, message: format!("fold {fold}: {}", inner.message) }
        }
        other => CliError::internal(other),
    }
}

/// Screens each clip exactly as the service does.
pub fn predict_clips(engine: &Engine, clips: &[PathBuf]) -> CliResult<Vec<serde_json::Value>> {
    clips
        .iter()
        .map(|path| {
            let bytes = std::fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            let screening = engine.screen_wav(&bytes).map_err(|e| {
                let inner = CliError::from(e);
                CliError { code: inner.code, message: format!("{}: {}", path.display(), inner.message) }
            })?;
            let mut v = serde_json::to_value(ScreenResponse::new(&screening, None, engine.versions()))
                .map_err(CliError::internal)?;
            v["clip"] = serde_json::Value::String(path.display().to_string());
            Ok(v)
        })
        .collect()
}

fn predict_cmd(model: Option<&Path>, out: Option<&Path>, clips: &[PathBuf], cfg: &AppConfig) -> CliResult {
    let dir = model.unwrap_or(&cfg.service.models_dir);
    let engine = Engine::new(Models::load_dir(dir)?, cfg.preprocess.clone());
    let results = predict_clips(&engine, clips)?;
    let value = if results.len() == 1 { results.into_iter().next().expect("one") } else { results.into() };
    let text = serde_json::to_string_pretty(&value).map_err(CliError::internal)?;
    match out {
        Some(p) => report::write_bytes(p, format!("{text}\n").as_bytes())?,
        None => println!("{text}"),
    }
    Ok(())
}

fn extract_features_cmd(io: &CorpusOut, cfg: &AppConfig) -> CliResult {
    let mut manifest = RunManifest::new("extract-features", cfg);
    let corpus = load_corpus(io, None)?;
    let rows = cfg.preprocess.corpus_features(&corpus)?;
    let ids: Vec<String> = corpus.samples.iter().map(|s| s.id.clone()).collect();
    let labels: Vec<String> = corpus.samples.iter().map(|s| s.label.clone()).collect();
    report::write_bytes(&io.out.join("features.csv"), &report::features_csv(&ids, &labels, &rows)?)?;
    manifest.corpus = Some(corpus.provenance.clone());
    manifest.corpus_size = Some(corpus.len());
    write_manifest(&io.out, manifest)
}

fn tsne_cmd(io: &CorpusOut, tsne: &TsneConfig, cfg: &AppConfig) -> CliResult {
    let mut manifest = RunManifest::new("tsne", cfg);
    let corpus = load_corpus(io, None)?;
    let rows = cfg.preprocess.corpus_features(&corpus)?;
    let ids: Vec<String> = corpus.samples.iter().map(|s| s.id.clone()).collect();
    let labels: Vec<String> = corpus.samples.iter().map(|s| s.label.clone()).collect();
    let embedding = analysis::tsne(&rows, tsne).map_err(CliError::data)?;
    report::write_bytes(&io.out.join("embedding.csv"), &report::embedding_csv(&ids, &labels, &embedding)?)?;
    report::write_bytes(&io.out.join("embedding.svg"), report::embedding_svg(&labels, &embedding).as_bytes())?;
    let kl: String = std::iter::once("iteration,kl".to_string())
        .chain(embedding.kl_history.iter().enumerate().map(|(i, v)| format!("{},{v}", i + 1)))
        .collect::<Vec<_>>()
        .join("\n");
    report::write_bytes(&io.out.join("kl.csv"), format!("{kl}\n").as_bytes())?;
    manifest.seeds.insert("tsne".into(), tsne.seed);
    manifest.corpus = Some(corpus.provenance.clone());
    manifest.corpus_size = Some(corpus.len());
    write_manifest(&io.out, manifest)
}

/// The six outcome rows as an aligned text table.
pub fn mediator_table(report: &MediatorReport) -> String {
    let rows = report.rows();
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut s = format!("{:<width$}  {:>12}  d\n", "Event", "Probability");
    for (event, value, i) in rows {
        s.push_str(&format!("{event:<width$}  {value:>12.4e}  d{i}={}\n", report.d[i - 1]));
    }
    s.push_str(&format!("{:<width$}  {:>12.4}\n", "p(I|C) + p(I|C')", report.conditional_sum));
    s
}

fn mediator_cmd(rates: &[f64], d: Option<&[f64]>, out: Option<&Path>) -> CliResult {
    if rates.len() != 6 {
        return Err(CliError::usage(format!("--rates takes six values, got {}", rates.len())));
    }
    let r = |i: usize| ClassifierRates { sensitivity: rates[2 * i], specificity: rates[2 * i + 1] };
    let d: [f64; 6] = match d {
        Some(v) => v.try_into().map_err(|_| CliError::usage("--d takes six values"))?,
        None => [1.0; 6],
    };
    let report = mediator::independence_analysis(&[r(0), r(1), r(2)], d).map_err(CliError::data)?;
    let json = serde_json::to_string_pretty(&report).map_err(CliError::internal)?;
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{}", mediator_table(&report));
    let _ = writeln!(stdout, "{json}");
    if let Some(out) = out {
        report::write_bytes(out, format!("{json}\n").as_bytes())?;
    }
    Ok(())
}

fn synth_cmd(out: &Path, classes: &str, per_class: usize, cfg: &AppConfig) -> CliResult {
    let classes: Vec<SynthClass> = corpus_io::parse_synth_classes(classes)?;
    let spec = SynthSpec { classes, per_class, seed: cfg.seed };
    let corpus = corpus_io::synth_corpus(&spec, out)?;
    println!("{} clips written to {}", corpus.len(), out.display());
    Ok(())
}

fn spectrogram_cmd(clip: &Path, out: &Path, cfg: &AppConfig) -> CliResult {
    let bytes = std::fs::read(clip).map_err(|e| CliError::data(format!("{}: {e}", clip.display())))?;
    let clip = cfg.preprocess.canonical(&wav::decode_wav(&bytes)?).map_err(CliError::data)?;
    let spec = dsp::mel_spectrogram(&clip, &cfg.preprocess.spectro).map_err(CliError::internal)?;
    let image = dsp::to_image(&spec).map_err(CliError::internal)?;
    report::write_bytes(&out.join("mel.csv"), report::spectrogram_csv(&spec).as_bytes())?;
    report::write_bytes(&out.join("image.pgm"), &report::image_pgm(&image))?;
    Ok(())
}
