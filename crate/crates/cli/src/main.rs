//! `seqstyle` command-line driver.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seqstyle::corpus::{commingle, load_corpus, preprocess, segment, CommingledDocument, EntityLexicon};
use seqstyle::experiments::{outcome, run_grid, ExperimentConfig, PairOutcome};
use seqstyle::features::{
    build_vocabulary, count_matrix, tfidf, write_matrix, zscore, FeatureMode, FeatureSpec,
};
use seqstyle::report::{confusion_summary, render_heatmap, significance_csv, GenreAnnotation};
use seqstyle::{Error, ErrorKind, Result};

const CSV_FILE: &str = "significance.csv";
const HEATMAP_FILE: &str = "heatmap.png";
const OUTCOME_FILE: &str = "outcome.json";
const COMMINGLING_FILE: &str = "commingling.json";
const RUN_MANIFEST_FILE: &str = "run_manifest.json";
const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Parser)]
#[command(name = "seqstyle", version, about = "Stylometric classification of commingled texts")]
struct Cli {
    /// Increase log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize every text of a corpus manifest into a token file.
    Preprocess {
        manifest: PathBuf,
        #[arg(long)]
        entities: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Commingle two texts at one unit length into a labeled document.
    Commingle {
        manifest: PathBuf,
        #[arg(long)]
        first: String,
        #[arg(long)]
        second: String,
        #[arg(long)]
        unit_length: usize,
        #[arg(long, default_value_t = seqstyle::corpus::DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        entities: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed a commingled document and write an interchange matrix.
    Embed {
        document: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::WordNgram)]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        f: usize,
        #[arg(long, value_enum, default_value_t = Weighting::Tfidf)]
        weighting: Weighting,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment grid.
    Run(RunArgs),
    /// Summarize the outcomes of finished runs as confusion tables.
    Report {
        /// Directories searched recursively for outcome files.
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// JSON object mapping pair ids to true, false or "?".
        #[arg(long)]
        genre_annotations: Option<PathBuf>,
        /// Also compute rates without genre-differing same-author pairs.
        #[arg(long)]
        bracketed: bool,
        /// Where to write the summary JSON; defaults to the first input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "replay", conflicts_with = "replay")]
    config: Option<PathBuf>,
    /// Re-run exactly the configuration recorded in a run manifest.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    WordNgram,
    CharKmer,
}

impl From<Mode> for FeatureMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::WordNgram => FeatureMode::WordNgram,
            Mode::CharKmer => FeatureMode::CharKmer,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Weighting {
    Count,
    Tfidf,
    Zscore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OutputFile {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunManifest {
    tool_version: String,
    config_path: PathBuf,
    master_seed: u64,
    threads: Option<usize>,
    started_at: String,
    finished_at: String,
    status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    /// The configuration as executed, with paths made absolute.
    config: ExperimentConfig,
    outputs: Vec<OutputFile>,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Internal => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let result = match cli.command {
        Command::Preprocess { manifest, entities, out } => cmd_preprocess(&manifest, entities.as_deref(), &out),
        Command::Commingle { manifest, first, second, unit_length, lambda, seed, entities, out } => {
            cmd_commingle(&manifest, (&first, &second), unit_length, lambda, seed, entities.as_deref(), &out)
        }
        Command::Embed { document, mode, n, f, weighting, out } => {
            cmd_embed(&document, mode.into(), n, f, weighting, &out)
        }
        Command::Run(args) => cmd_run(&args),
        Command::Report { inputs, genre_annotations, bracketed, out } => {
            cmd_report(&inputs, genre_annotations.as_deref(), bracketed, out.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    if source.kind() == std::io::ErrorKind::NotFound {
        Error::MissingFile(path.to_path_buf())
    } else {
        Error::Io { path: path.to_path_buf(), source }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| Error::Contract(format!("serialization failed: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// A lexicon named on the command line must exist; its absence is a usage
/// problem rather than a data problem.
fn load_lexicon(path: Option<&Path>) -> Result<Option<EntityLexicon>> {
    match path {
        None => Ok(None),
        Some(p) if !p.is_file() => Err(Error::Config(format!("entity lexicon {} does not exist", p.display()))),
        Some(p) => EntityLexicon::load(p).map(Some),
    }
}

fn safe_file_stem(id: &str) -> Result<&str> {
    if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']) {
        return Err(Error::MalformedManifest(format!("text id {id:?} cannot name a file")));
    }
    Ok(id)
}

fn cmd_preprocess(manifest: &Path, entities: Option<&Path>, out: &Path) -> Result<()> {
    let lexicon = load_lexicon(entities)?;
    let texts = load_corpus(manifest)?;
    create_dir(out)?;
    for text in &texts {
        let stream = preprocess(text, lexicon.as_ref())?;
        let mut body = stream.tokens.join("\n");
        body.push('\n');
        let path = out.join(format!("{}.tokens.txt", safe_file_stem(&text.id)?));
        write_file(&path, body.as_bytes())?;
        log::info!("{}: {} tokens", text.id, stream.tokens.len());
    }
    println!("wrote {} token files to {}", texts.len(), out.display());
    Ok(())
}

fn cmd_commingle(
    manifest: &Path,
    (first, second): (&str, &str),
    unit_length: usize,
    lambda: f64,
    seed: u64,
    entities: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let lexicon = load_lexicon(entities)?;
    let texts = load_corpus(manifest)?;
    let units = |id: &str| {
        let text = texts
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::Config(format!("text {id:?} is not in the manifest")))?;
        segment(&preprocess(text, lexicon.as_ref())?, unit_length)
    };
    let doc = commingle(&units(first)?, &units(second)?, lambda, seed)?;
    write_file(out, &to_json(&doc)?)?;
    println!(
        "{} units ({} from {second}) written to {}",
        doc.truth.len(),
        doc.truth.count_ones(),
        out.display()
    );
    Ok(())
}

fn cmd_embed(document: &Path, mode: FeatureMode, n: usize, f: usize, weighting: Weighting, out: &Path) -> Result<()> {
    let raw = fs::read_to_string(document).map_err(|e| io_err(document, e))?;
    let doc: CommingledDocument =
        serde_json::from_str(&raw).map_err(|e| Error::Format(format!("bad commingled document: {e}")))?;
    let vocab = build_vocabulary(&doc.units, FeatureSpec::new(mode, n, f)?)?;
    let counts = count_matrix(&doc.units, &vocab)?;
    let mut matrix = match weighting {
        Weighting::Count => counts,
        Weighting::Tfidf => tfidf(&counts)?,
        Weighting::Zscore => zscore(&counts)?,
    };
    matrix.unit_length = doc.units.unit_length;
    matrix.source = document
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    write_matrix(&matrix, out)?;
    println!("{}x{} {} matrix written to {}", matrix.nrows(), matrix.ncols(), matrix.kind.as_str(), out.display());
    Ok(())
}

fn absolutize(base: &Path, p: &Path) -> Result<PathBuf> {
    let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    std::path::absolute(&joined).map_err(|e| io_err(&joined, e))
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let raw = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Config(format!("config {} does not exist", path.display())),
        _ => io_err(path, e),
    })?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    if let Some(m) = &config.manifest {
        config.manifest = Some(absolutize(base, m)?);
    }
    if let Some(m) = &config.entities {
        config.entities = Some(absolutize(base, m)?);
    }
    for files in config.external.values_mut() {
        for p in files.values_mut() {
            *p = absolutize(base, p)?;
        }
    }
    Ok(config)
}

fn load_run_manifest(path: &Path) -> Result<RunManifest> {
    let raw = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Config(format!("run manifest {} does not exist", path.display())),
        _ => io_err(path, e),
    })?;
    serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn record_output(out: &Path, name: &str) -> Result<OutputFile> {
    let path = out.join(name);
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    Ok(OutputFile {
        path: name.to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let (config_path, mut config) = match (&args.config, &args.replay) {
        (Some(c), _) => (absolutize(Path::new("."), c)?, load_config(c)?),
        (None, Some(r)) => {
            let m = load_run_manifest(r)?;
            (m.config_path, m.config)
        }
        (None, None) => return Err(Error::Config("either --config or --replay is required".into())),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    config.validate()?;
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Contract(format!("cannot start worker pool: {e}")))?;
    }
    create_dir(&args.out)?;

    let started_at = chrono::Utc::now().to_rfc3339();
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let mut outputs = Vec::new();
    let result = run_grid(&config, base).and_then(|map| {
        write_file(&args.out.join(CSV_FILE), &significance_csv(&map)?)?;
        outputs.push(record_output(&args.out, CSV_FILE)?);
        render_heatmap(&map, &args.out.join(HEATMAP_FILE))?;
        outputs.push(record_output(&args.out, HEATMAP_FILE)?);
        write_file(&args.out.join(COMMINGLING_FILE), &to_json(&map.commingling)?)?;
        outputs.push(record_output(&args.out, COMMINGLING_FILE)?);
        let same_author = map
            .same_author
            .ok_or_else(|| Error::Contract("pair authorship unknown after loading".into()))?;
        let record = outcome(&map, same_author);
        write_file(&args.out.join(OUTCOME_FILE), &to_json(&record)?)?;
        outputs.push(record_output(&args.out, OUTCOME_FILE)?);
        Ok(record)
    });

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_path,
        master_seed: config.master_seed,
        threads: args.threads,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        status: if result.is_ok() { RunStatus::Complete } else { RunStatus::Failed },
        error: result.as_ref().err().map(ToString::to_string),
        config,
        outputs,
    };
    write_file(&args.out.join(RUN_MANIFEST_FILE), &to_json(&manifest)?)?;

    let record = result?;
    println!(
        "{}: {} of {} evaluated cells significant ({} skipped); outputs in {}",
        record.pair_id,
        record.significant_cells,
        record.evaluated_cells,
        record.skipped_cells,
        args.out.display()
    );
    Ok(())
}

fn find_outcomes(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| io_err(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            find_outcomes(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == OUTCOME_FILE) {
            found.push(path);
        }
    }
    Ok(())
}

fn cmd_report(inputs: &[PathBuf], annotations: Option<&Path>, bracketed: bool, out: Option<&Path>) -> Result<()> {
    let annotations: BTreeMap<String, GenreAnnotation> = match annotations {
        None => BTreeMap::new(),
        Some(p) if !p.is_file() => {
            return Err(Error::Config(format!("genre annotations {} do not exist", p.display())))
        }
        Some(p) => {
            let raw = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
    };
    let mut files = Vec::new();
    for dir in inputs {
        if !dir.is_dir() {
            return Err(Error::MissingFile(dir.clone()));
        }
        find_outcomes(dir, &mut files)?;
    }
    if files.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no {OUTCOME_FILE} found under {}",
            inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
        )));
    }
    let outcomes: Vec<PairOutcome> = files
        .iter()
        .map(|p| {
            let raw = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            serde_json::from_str(&raw).map_err(|e| Error::Format(format!("{}: {e}", p.display())))
        })
        .collect::<Result<_>>()?;
    let summary = confusion_summary(&outcomes, &annotations, bracketed || !annotations.is_empty())?;
    print!("{summary}");
    let target = out.map_or_else(|| inputs[0].join(SUMMARY_FILE), Path::to_path_buf);
    write_file(&target, &to_json(&summary)?)?;
    Ok(())
}
