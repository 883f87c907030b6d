use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mudra::classifier::DEFAULT_WINDOW;
use mudra::eval::{
    enroll, evaluate, make_split, render_report, DatasetManifest, EvalConfig, ReportFormat,
    SplitMode, SplitSpec, DEFAULT_SEED,
};
use mudra::{
    classify, AnchorSet, ClassifierConfig, FrameRecord, Gallery, Outcome, Point3, Prediction,
    SmoothedPrediction, StreamState, VectorStore,
};

#[derive(Parser)]
#[command(
    name = "mudra",
    version,
    about = "Hand-gesture classification from hand landmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize every record of a manifest and store it in a gallery file.
    Enroll {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        #[command(flatten)]
        reference: ReferenceArg,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        output: Format,
    },
    /// Classify landmark frames read from JSONL files.
    Classify {
        #[arg(long)]
        gallery: PathBuf,
        #[command(flatten)]
        match_args: MatchArgs,
        #[command(flatten)]
        reference: ReferenceArg,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        output: Format,
        /// Files holding one frame record per line.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Classify a JSONL frame stream from standard input with window voting.
    Stream {
        #[arg(long)]
        gallery: PathBuf,
        #[command(flatten)]
        match_args: MatchArgs,
        /// Frames in the voting window.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[command(flatten)]
        reference: ReferenceArg,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        output: Format,
    },
    /// Write train/test source-id lists for a manifest.
    Split {
        #[command(flatten)]
        split: SplitArgs,
        /// Directory receiving train.txt and test.txt.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        output: Format,
    },
    /// Split a manifest, enroll the train side and score the test side.
    Eval {
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        match_args: MatchArgs,
        #[command(flatten)]
        reference: ReferenceArg,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        output: Format,
    },
}

#[derive(Args)]
struct MatchArgs {
    /// Matches kept per frame.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Largest accepted distance (disabled when omitted).
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct ReferenceArg {
    /// JSON file with four [x, y, z] reference anchor rows.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Training samples per class.
    #[arg(
        long,
        conflicts_with = "fraction",
        required_unless_present = "fraction"
    )]
    k: Option<usize>,
    /// Stratified training fraction.
    #[arg(long)]
    fraction: Option<f64>,
    /// Comma-separated class subset.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

/// Error carrying the process exit code: 1 for usage, 2 for data problems.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        error: anyhow!(msg.into()),
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 2,
            error: e.into(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Enroll {
            manifest,
            gallery,
            reference,
            output,
        } => cmd_enroll(&manifest, &gallery, &reference.load()?, output),
        Command::Classify {
            gallery,
            match_args,
            reference,
            output,
            inputs,
        } => cmd_classify(
            &inputs,
            &gallery,
            &match_args.config()?,
            &reference.load()?,
            output,
        ),
        Command::Stream {
            gallery,
            match_args,
            window,
            reference,
            output,
        } => cmd_stream(
            &gallery,
            &match_args.config()?,
            window,
            &reference.load()?,
            output,
        ),
        Command::Split {
            split,
            out_dir,
            output,
        } => cmd_split(&split, &out_dir, output),
        Command::Eval {
            split,
            match_args,
            reference,
            output,
        } => cmd_eval(&split, &match_args.config()?, &reference.load()?, output),
    }
}

impl MatchArgs {
    fn config(&self) -> CliResult<ClassifierConfig> {
        if self.n == 0 {
            return Err(usage("--n must be at least 1"));
        }
        let threshold = match self.threshold {
            None => f64::INFINITY,
            Some(t) if t > 0.0 => t,
            Some(t) => return Err(usage(format!("--threshold must be positive, got {t}"))),
        };
        Ok(ClassifierConfig {
            top_n: self.n,
            threshold,
        })
    }
}

impl ReferenceArg {
    fn load(&self) -> CliResult<AnchorSet> {
        let Some(path) = &self.reference else {
            return Ok(AnchorSet::default());
        };
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let rows: [Point3; 4] = serde_json::from_str(&text)
            .with_context(|| format!("{}: expected four [x, y, z] rows", path.display()))?;
        Ok(AnchorSet::new(rows).with_context(|| format!("{}", path.display()))?)
    }
}

impl SplitArgs {
    fn spec(&self) -> CliResult<SplitSpec> {
        let mode = match (self.k, self.fraction) {
            (Some(0), _) => return Err(usage("--k must be at least 1")),
            (Some(k), None) => SplitMode::PerClassK(k),
            (None, Some(f)) if f > 0.0 && f < 1.0 => SplitMode::Fraction(f),
            (None, Some(f)) => {
                return Err(usage(format!("--fraction must lie in (0, 1), got {f}")))
            }
            _ => return Err(usage("give exactly one of --k or --fraction")),
        };
        Ok(SplitSpec {
            mode,
            seed: self.seed,
            class_filter: self.classes.as_ref().map(|c| {
                c.iter()
                    .map(|s| s.trim().to_string())
                    .collect::<BTreeSet<_>>()
            }),
        })
    }

    fn load(&self) -> CliResult<(DatasetManifest, SplitSpec)> {
        let spec = self.spec()?;
        let manifest = DatasetManifest::load(&self.manifest)
            .with_context(|| format!("loading {}", self.manifest.display()))?;
        if manifest.is_empty() {
            return Err(anyhow!("{}: no records", self.manifest.display()).into());
        }
        Ok((manifest, spec))
    }
}

fn load_gallery(path: &Path) -> CliResult<Gallery> {
    let gallery = Gallery::load(path).with_context(|| format!("loading {}", path.display()))?;
    if gallery.is_empty() {
        return Err(anyhow!("{}: gallery is empty", path.display()).into());
    }
    Ok(gallery)
}

fn stream_only_formats(output: Format) -> CliResult {
    if output == Format::Csv {
        return Err(usage("--output csv is only available for eval"));
    }
    Ok(())
}

fn cmd_enroll(
    manifest_path: &Path,
    gallery_path: &Path,
    reference: &AnchorSet,
    output: Format,
) -> CliResult {
    stream_only_formats(output)?;
    let manifest = DatasetManifest::load(manifest_path)
        .with_context(|| format!("loading {}", manifest_path.display()))?;
    if manifest.is_empty() {
        return Err(anyhow!("{}: no records", manifest_path.display()).into());
    }
    let enrollment = enroll(&manifest, reference)?;
    enrollment
        .gallery
        .save(gallery_path)
        .with_context(|| format!("writing {}", gallery_path.display()))?;

    let counts = enrollment.gallery.label_counts();
    let mut out = io::stdout().lock();
    match output {
        Format::Json => {
            let rejected: Vec<_> = enrollment
                .rejected
                .iter()
                .map(|(id, reason)| json!({"source_id": id, "reason": reason}))
                .collect();
            let summary = json!({
                "gallery": gallery_path.display().to_string(),
                "records": manifest.len(),
                "enrolled": enrollment.gallery.len(),
                "per_class": counts,
                "rejected": rejected,
            });
            writeln!(out, "{summary}")?;
        }
        _ => {
            writeln!(
                out,
                "enrolled {} of {} records into {}",
                enrollment.gallery.len(),
                manifest.len(),
                gallery_path.display()
            )?;
            for (label, n) in &counts {
                writeln!(out, "  {label}: {n}")?;
            }
            if !enrollment.rejected.is_empty() {
                writeln!(out, "rejected {}:", enrollment.rejected.len())?;
                for (id, reason) in &enrollment.rejected {
                    writeln!(out, "  {id}: {reason}")?;
                }
            }
        }
    }
    Ok(())
}

fn outcome_fields(outcome: &Outcome) -> (&'static str, Option<&str>, Option<String>) {
    match outcome {
        Outcome::Match(label) => ("match", Some(label.as_str()), None),
        Outcome::NoMatch => ("no_match", None, None),
        Outcome::Rejected(cause) => ("rejected", None, Some(cause.to_string())),
    }
}

fn ranked_json(p: &Prediction) -> serde_json::Value {
    p.ranked
        .iter()
        .map(|m| json!({"id": m.id, "label": m.label, "distance": m.distance}))
        .collect()
}

fn ranked_text(p: &Prediction) -> String {
    p.ranked
        .iter()
        .map(|m| format!("{}:{:.6}", m.label, m.distance))
        .collect::<Vec<_>>()
        .join(" ")
}

fn outcome_text(outcome: &Outcome) -> String {
    match outcome {
        Outcome::Match(label) => label.clone(),
        Outcome::NoMatch => "NO_MATCH".to_string(),
        Outcome::Rejected(cause) => format!("REJECTED ({cause})"),
    }
}

fn write_prediction(out: &mut impl Write, p: &Prediction, output: Format) -> io::Result<()> {
    match output {
        Format::Json => {
            let (kind, label, reason) = outcome_fields(&p.outcome);
            let line = json!({
                "source_id": p.source_id,
                "outcome": kind,
                "label": label,
                "reason": reason,
                "ranked": ranked_json(p),
            });
            writeln!(out, "{line}")
        }
        _ => writeln!(
            out,
            "{}\t{}\t{}",
            p.source_id,
            outcome_text(&p.outcome),
            ranked_text(p)
        ),
    }
}

fn cmd_classify(
    inputs: &[PathBuf],
    gallery_path: &Path,
    config: &ClassifierConfig,
    reference: &AnchorSet,
    output: Format,
) -> CliResult {
    stream_only_formats(output)?;
    let gallery = load_gallery(gallery_path)?;
    let mut out = BufWriter::new(io::stdout().lock());
    for path in inputs {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        for (index, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fallback = format!("{}:{}", path.display(), index + 1);
            let record: FrameRecord = serde_json::from_str(&line)
                .with_context(|| format!("{fallback}: malformed frame record"))?;
            let prediction = match record.to_landmarks(&fallback) {
                Ok(frame) => classify(&gallery, &frame, reference, config)?,
                Err(mudra::RecordError::Missing) => Prediction {
                    source_id: record.source_id.unwrap_or(fallback),
                    ranked: Vec::new(),
                    outcome: Outcome::NoMatch,
                },
                Err(e) => return Err(anyhow!("{fallback}: {e}").into()),
            };
            write_prediction(&mut out, &prediction, output)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_smoothed(
    out: &mut impl Write,
    index: usize,
    timestamp_ms: Option<i64>,
    s: &SmoothedPrediction,
    output: Format,
) -> io::Result<()> {
    match output {
        Format::Json => {
            let (kind, label, _) = outcome_fields(&s.outcome);
            let (frame_kind, frame_label, reason) = outcome_fields(&s.frame.outcome);
            let line = json!({
                "frame": index,
                "source_id": s.frame.source_id,
                "timestamp_ms": timestamp_ms,
                "outcome": kind,
                "label": label,
                "votes": s.votes,
                "window": s.window_len,
                "frame_outcome": frame_kind,
                "frame_label": frame_label,
                "reason": reason,
                "ranked": ranked_json(&s.frame),
            });
            writeln!(out, "{line}")
        }
        _ => writeln!(
            out,
            "{}\t{}\t{}/{}\t{}",
            s.frame.source_id,
            outcome_text(&s.outcome),
            s.votes,
            s.window_len,
            outcome_text(&s.frame.outcome)
        ),
    }
}

fn cmd_stream(
    gallery_path: &Path,
    config: &ClassifierConfig,
    window: usize,
    reference: &AnchorSet,
    output: Format,
) -> CliResult {
    stream_only_formats(output)?;
    let mut state = StreamState::new(window).map_err(|e| usage(e.to_string()))?;
    let gallery = load_gallery(gallery_path)?;
    let stdin = io::stdin().lock();
    let mut out = io::stdout().lock();
    for (index, line) in stdin.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fallback = format!("stdin:{}", index + 1);
        let record: FrameRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("{fallback}: skipping malformed frame: {e}");
                continue;
            }
        };
        let smoothed = match record.to_landmarks(&fallback) {
            Ok(frame) => state.step(&gallery, &frame, reference, config)?,
            // no hand in view: the frame still takes a window slot
            Err(mudra::RecordError::Missing) => state.push(Prediction {
                source_id: record.source_id.clone().unwrap_or(fallback),
                ranked: Vec::new(),
                outcome: Outcome::NoMatch,
            }),
            Err(e) => {
                eprintln!("{fallback}: skipping malformed frame: {e}");
                continue;
            }
        };
        write_smoothed(&mut out, index + 1, record.timestamp_ms, &smoothed, output)?;
        out.flush()?;
    }
    Ok(())
}

fn cmd_split(args: &SplitArgs, out_dir: &Path, output: Format) -> CliResult {
    stream_only_formats(output)?;
    let (manifest, spec) = args.load()?;
    let split = make_split(&manifest, &spec)?;
    split
        .write_id_lists(out_dir)
        .with_context(|| format!("writing split files to {}", out_dir.display()))?;
    let mut out = io::stdout().lock();
    match output {
        Format::Json => {
            let summary = json!({
                "train": split.train.len(),
                "test": split.test.len(),
                "seed": spec.seed,
                "train_file": out_dir.join("train.txt").display().to_string(),
                "test_file": out_dir.join("test.txt").display().to_string(),
            });
            writeln!(out, "{summary}")?;
        }
        _ => writeln!(
            out,
            "train: {}  test: {}  seed: {}",
            split.train.len(),
            split.test.len(),
            spec.seed
        )?,
    }
    Ok(())
}

fn cmd_eval(
    args: &SplitArgs,
    config: &ClassifierConfig,
    reference: &AnchorSet,
    output: Format,
) -> CliResult {
    let (manifest, spec) = args.load()?;
    let split = make_split(&manifest, &spec)?;
    let report = evaluate(
        &split.train,
        &split.test,
        &EvalConfig {
            reference: *reference,
            classifier: *config,
            seed: Some(spec.seed),
        },
    )?;
    let format = match output {
        Format::Text => ReportFormat::Text,
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    };
    io::stdout()
        .lock()
        .write_all(render_report(&report, format).as_bytes())?;
    Ok(())
}
