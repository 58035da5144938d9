//! Command-line workflows: detect, predict, evaluate and synth.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::anomaly::AnomalyEvent;
use crate::artifact::{self, atomic_write, sha256_hex};
use crate::error::{Error, Result};
use crate::metrics::{self, DetectionReport, RegressionReport};
use crate::pipeline::{self, FrameDetection, PipelineConfig};
use crate::stream::DetectorSpec;
use crate::synth::{self, SynthSpec};
use crate::timeseries_io::{self, format_cell, ChannelSchema, MeasurementFrame, Timestamp};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "HAVOK_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "havok",
    version,
    about = "Forced-linear decomposition, anomaly flagging and sparse forecasting for PMU time series"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flag anomalies in every selected channel.
    Detect(DetectArgs),
    /// Fit sparse dynamics on a training span and forecast the rest.
    Predict(PredictArgs),
    /// Score flags against truth, or predictions against actuals.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic PMU recording with labelled events.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Pipeline TOML; defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// PMU CSV with a timestamp column.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub output: PathBuf,
    /// Comma-separated channel names; overrides the config.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Pipeline TOML; defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// PMU CSV with a timestamp column.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub output: PathBuf,
    /// Comma-separated channel names; overrides the config.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
    /// Training fraction in (0, 1) or a timestamp; samples before it train.
    #[arg(long, default_value = "0.8")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Flags CSV (`flag` column, optional `score`) or predictions CSV
    /// (`<name>_actual` / `<name>_predicted` pairs).
    #[arg(long)]
    pub input: PathBuf,
    /// CSV with a `truth` or `flag` column aligned to the input rows.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Matching tolerance in samples.
    #[arg(long, default_value_t = 0)]
    pub tolerance: usize,
    /// Directory for the JSON report and manifest.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synth spec TOML; defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    pub output: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let cli = Cli::parse();
    configure_threads();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("havok: {}", e.to_string().replace('\n', " "));
            e.kind().exit_code()
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Detect(a) => cmd_detect(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

/// Loads and validates a pipeline config; the schema path resolves relative to the file.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut cfg: PipelineConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
    if let Some(schema) = &cfg.io.schema {
        let resolved = if schema.is_relative() {
            path.parent().unwrap_or(Path::new(".")).join(schema)
        } else {
            schema.clone()
        };
        if !resolved.is_file() {
            return Err(Error::Config(format!(
                "schema file {} does not exist",
                resolved.display()
            )));
        }
        cfg.io.schema = Some(resolved);
    }
    cfg.validate().map_err(Error::Config)?;
    Ok(cfg)
}

fn load_frame(input: &Path, cfg: &PipelineConfig) -> Result<(MeasurementFrame, Vec<u8>)> {
    let bytes = fs::read(input).map_err(|e| Error::Data(format!("{}: {e}", input.display())))?;
    let schema = match &cfg.io.schema {
        Some(p) => ChannelSchema::load(p).map_err(|e| Error::Config(e.to_string()))?,
        None => ChannelSchema::default(),
    };
    let frame = timeseries_io::parse_pmu_csv(bytes.as_slice(), &schema)?;
    Ok((pipeline::prepare_frame(frame, &cfg.io)?, bytes))
}

/// Collects files for an output directory and its manifest.
struct OutputDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutputDir {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        atomic_write(&self.root.join(rel), bytes)?;
        self.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn finish(
        self,
        command: &str,
        config_hash: String,
        input_hash: String,
        parameters: serde_json::Value,
    ) -> Result<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_hash,
            input_hash,
            parameters,
            outputs: self.files,
            content_hash: String::new(),
            created_at: String::new(),
        };
        let manifest = manifest.sealed();
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        atomic_write(&self.root.join("manifest.json"), text.as_bytes())?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    config_hash: String,
    input_hash: String,
    parameters: serde_json::Value,
    outputs: BTreeMap<String, String>,
    /// SHA-256 of this manifest with `content_hash` and `created_at` blank.
    content_hash: String,
    created_at: String,
}

impl Manifest {
    fn sealed(mut self) -> Self {
        let body = serde_json::to_vec(&self).expect("manifest serializes");
        self.content_hash = sha256_hex(&body);
        self.created_at = creation_time();
        self
    }
}

/// `SOURCE_DATE_EPOCH` when set, else the wall clock.
fn creation_time() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse::<i64>().ok());
    match secs {
        Some(s) => Timestamp::from_nanos(s.saturating_mul(1_000_000_000)).to_iso(),
        None => {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_nanos() as i64);
            Timestamp::from_nanos(now).to_iso()
        }
    }
}

fn config_hash(cfg: &PipelineConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Data(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

fn flag_cell(f: bool) -> String {
    if f { "1" } else { "0" }.to_string()
}

fn events_csv(events: &[AnomalyEvent]) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "channel",
            "start",
            "end",
            "start_index",
            "end_index",
            "peak_index",
            "peak_forcing",
        ],
        events.iter().map(|e| {
            vec![
                e.channel.clone(),
                e.start.to_iso(),
                e.end.to_iso(),
                e.start_index.to_string(),
                e.end_index.to_string(),
                e.peak_index.to_string(),
                format_cell(e.peak_forcing),
            ]
        }),
    )
}

fn events_jsonl(events: &[AnomalyEvent]) -> Vec<u8> {
    let mut out = Vec::new();
    for e in events {
        out.extend(serde_json::to_vec(e).expect("event serializes"));
        out.push(b'\n');
    }
    out
}

fn flags_csv(ts: &[Timestamp], flags: &[bool], scores: &[f64]) -> Result<Vec<u8>> {
    csv_bytes(
        &["timestamp", "flag", "score"],
        (0..ts.len()).map(|i| vec![ts[i].to_iso(), flag_cell(flags[i]), format_cell(scores[i])]),
    )
}

/// File-system-safe directory name for a channel.
pub fn channel_dir(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn selected_channels(frame: &MeasurementFrame, cfg: &mut PipelineConfig, over: &Option<Vec<String>>) -> Vec<String> {
    if let Some(list) = over {
        cfg.channels = list
            .iter()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
    }
    cfg.resolve_channels(frame)
}

#[derive(Serialize)]
struct ChannelModelJson<'a> {
    channel: &'a str,
    rank: usize,
    spectrum: &'a [f64],
    forcing_mean: f64,
    forcing_std: f64,
    model: crate::havok::HavokReport,
}

fn write_detection(
    out: &mut OutputDir,
    frame: &MeasurementFrame,
    det: &FrameDetection,
    cfg: &PipelineConfig,
) -> Result<()> {
    let t0 = frame.timestamps()[0];
    for ch in &det.channels {
        let dir = channel_dir(&ch.channel);
        let measured = &frame.channel(&ch.channel).expect("detected channel exists").values;
        let ftimes = ch.forcing.timestamps();
        out.write(
            &format!("{dir}/forcing.csv"),
            &csv_bytes(
                &["timestamp", "forcing", "flag"],
                (0..ch.forcing.len()).map(|j| {
                    vec![
                        ftimes[j].to_iso(),
                        format_cell(ch.forcing.values()[j]),
                        flag_cell(ch.forcing_flags[j]),
                    ]
                }),
            )?,
        )?;
        out.write(
            &format!("{dir}/flags.csv"),
            &flags_csv(&det.timestamps, &ch.sample_flags, &ch.sample_scores)?,
        )?;
        out.write(&format!("{dir}/events.csv"), &events_csv(&ch.events)?)?;
        out.write(&format!("{dir}/events.jsonl"), &events_jsonl(&ch.events))?;
        let forcing = ch.sample_forcing();
        out.write(
            &format!("{dir}/plot.csv"),
            &csv_bytes(
                &["t", "measurement", "forcing", "flag"],
                (0..frame.len()).map(|i| {
                    let t = (det.timestamps[i].nanos() - t0.nanos()) as f64 / 1e9;
                    vec![
                        format_cell(t),
                        format_cell(measured[i]),
                        format_cell(forcing[i]),
                        flag_cell(ch.sample_flags[i]),
                    ]
                }),
            )?,
        )?;
        let mut bin = Vec::new();
        artifact::write_model(&mut bin, &ch.model)?;
        out.write(&format!("{dir}/model.bin"), &bin)?;
        let json = ChannelModelJson {
            channel: &ch.channel,
            rank: ch.rank,
            spectrum: &ch.spectrum,
            forcing_mean: ch.forcing.mean(),
            forcing_std: ch.forcing.std(),
            model: ch.model.report(),
        };
        out.write(
            &format!("{dir}/model.json"),
            (serde_json::to_string_pretty(&json).expect("serializes") + "\n").as_bytes(),
        )?;
        let spec = DetectorSpec::from_detection(ch, &cfg.detection);
        out.write(
            &format!("{dir}/detector.json"),
            (serde_json::to_string_pretty(&spec).expect("serializes") + "\n").as_bytes(),
        )?;
    }
    out.write("flags.csv", &flags_csv(&det.timestamps, &det.flags, &det.scores)?)?;
    out.write("events.csv", &events_csv(&det.events)?)?;
    out.write("events.jsonl", &events_jsonl(&det.events))?;
    Ok(())
}

pub fn cmd_detect(args: &DetectArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    let (frame, input) = load_frame(&args.input, &cfg)?;
    let channels = selected_channels(&frame, &mut cfg, &args.channels);
    let det = pipeline::detect_frame(&frame, &channels, &cfg)?;
    let mut out = OutputDir::new(&args.output)?;
    write_detection(&mut out, &frame, &det, &cfg)?;
    log::info!("{} events over {} channels", det.events.len(), channels.len());
    out.finish(
        "detect",
        config_hash(&cfg),
        sha256_hex(&input),
        serde_json::json!({ "channels": channels }),
    )
}

/// Number of training samples for a split given as a fraction or timestamp.
pub fn split_index(frame: &MeasurementFrame, split: &str) -> Result<usize> {
    let n = frame.len();
    let n_train = match split.trim().parse::<f64>() {
        Ok(f) if f.is_finite() && f > 0.0 && f < 1.0 => (f * n as f64).floor() as usize,
        // larger numbers are epoch timestamps
        Ok(f) if !f.is_finite() || f.abs() < 1e6 => {
            return Err(Error::Config(format!(
                "split fraction must lie strictly between 0 and 1, got {split}"
            )));
        }
        _ => {
            let t = Timestamp::parse(split).ok_or_else(|| Error::Config(format!("unparseable split `{split}`")))?;
            frame.timestamps().partition_point(|&x| x < t)
        }
    };
    if n_train < 5 || n_train >= n {
        return Err(Error::Config(format!(
            "split leaves {n_train} training and {} test samples; need at least 5 and 1",
            n - n_train.min(n)
        )));
    }
    Ok(n_train)
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    let (frame, input) = load_frame(&args.input, &cfg)?;
    let channels = selected_channels(&frame, &mut cfg, &args.channels);
    cfg.channels = channels.clone();
    let n_train = split_index(&frame, &args.split)?;
    let n_test = frame.len() - n_train;
    let horizon = cfg.sindy.horizon.unwrap_or(n_test);
    let train = frame.slice(0..n_train);
    let outcome = pipeline::predict_and_detect(&train, horizon, &cfg)?;

    let scored = horizon.min(n_test);
    let test_ts = &frame.timestamps()[n_train..n_train + scored];
    let mut reports = BTreeMap::new();
    let mut header = vec!["timestamp".to_string()];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for fc in &outcome.forecasts {
        let actual = &frame.channel(&fc.channel).expect("selected channel").values[n_train..n_train + scored];
        let predicted = &fc.predicted[..scored];
        if scored > 0 {
            let valid: Vec<usize> = (0..scored).filter(|&i| actual[i].is_finite()).collect();
            let a: Vec<f64> = valid.iter().map(|&i| actual[i]).collect();
            let p: Vec<f64> = valid.iter().map(|&i| predicted[i]).collect();
            reports.insert(fc.channel.clone(), metrics::regression_metrics(&a, &p)?);
        }
        header.push(format!("{}_actual", fc.channel));
        header.push(format!("{}_predicted", fc.channel));
        columns.push(actual.to_vec());
        columns.push(predicted.to_vec());
    }

    let mut out = OutputDir::new(&args.output)?;
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write(
        "predictions.csv",
        &csv_bytes(
            &header_refs,
            (0..scored).map(|i| {
                let mut row = vec![test_ts[i].to_iso()];
                row.extend(columns.iter().map(|c| format_cell(c[i])));
                row
            }),
        )?,
    )?;
    out.write(
        "regression.json",
        (serde_json::to_string_pretty(&reports).expect("serializes") + "\n").as_bytes(),
    )?;
    out.write("predicted_events.csv", &events_csv(&outcome.events)?)?;
    out.write("predicted_events.jsonl", &events_jsonl(&outcome.events))?;
    for fc in &outcome.forecasts {
        let body = serde_json::json!({
            "channel": fc.channel,
            "delay_rank": fc.rank,
            "cleaned_samples": fc.cleaned_samples,
            "equations": fc.model.equations(),
            "model": fc.model,
        });
        out.write(
            &format!("{}/sindy.json", channel_dir(&fc.channel)),
            (serde_json::to_string_pretty(&body).expect("serializes") + "\n").as_bytes(),
        )?;
    }
    for (name, r) in &reports {
        println!("{name}\n{r}");
    }
    out.finish(
        "predict",
        config_hash(&cfg),
        sha256_hex(&input),
        serde_json::json!({ "channels": channels, "split": args.split, "train_samples": n_train, "horizon": horizon }),
    )
}

/// A CSV loaded as named string columns.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let header = r
            .headers()
            .map_err(|e| Error::Data(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if rows.is_empty() {
            return Err(Error::Data(format!("{}: no rows", path.display())));
        }
        Ok(Self { header, rows })
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn numbers(&self, col: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r.get(col).map(String::as_str).unwrap_or("");
                if cell.is_empty() {
                    return Ok(f64::NAN);
                }
                cell.parse::<f64>()
                    .map_err(|_| Error::Data(format!("row {}: `{cell}` is not a number", i + 1)))
            })
            .collect()
    }

    fn bools(&self, col: usize) -> Result<Vec<bool>> {
        Ok(self
            .numbers(col)?
            .into_iter()
            .map(|v| v.is_finite() && v != 0.0)
            .collect())
    }

    fn timestamps(&self) -> Option<Vec<Option<Timestamp>>> {
        let c = self.index("timestamp")?;
        Some(
            self.rows
                .iter()
                .map(|r| r.get(c).and_then(|s| Timestamp::parse(s)))
                .collect(),
        )
    }
}

#[derive(Serialize)]
struct DetectionEvaluation {
    tolerance: usize,
    confusion: metrics::ConfusionMatrix,
    report: DetectionReport,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let input = Table::read(&args.input)?;
    let mut input_bytes = fs::read(&args.input)?;
    let (name, body) = if let Some(truth_path) = &args.truth {
        let truth = Table::read(truth_path)?;
        input_bytes.extend(fs::read(truth_path)?);
        if input.rows.len() != truth.rows.len() {
            return Err(Error::Data(format!(
                "misaligned inputs: {} predicted rows vs {} truth rows",
                input.rows.len(),
                truth.rows.len()
            )));
        }
        if let (Some(a), Some(b)) = (input.timestamps(), truth.timestamps()) {
            if let Some(i) = a.iter().zip(&b).position(|(x, y)| x != y || x.is_none()) {
                return Err(Error::Data(format!(
                    "misaligned inputs: timestamps differ at row {}",
                    i + 1
                )));
            }
        }
        let pc = input
            .index("flag")
            .ok_or_else(|| Error::Data(format!("{}: no `flag` column", args.input.display())))?;
        let tc = truth
            .index("truth")
            .or_else(|| truth.index("flag"))
            .ok_or_else(|| Error::Data(format!("{}: no `truth` or `flag` column", truth_path.display())))?;
        let predicted = input.bools(pc)?;
        let actual = truth.bools(tc)?;
        let positives = actual.iter().filter(|&&t| t).count();
        if positives == 0 || positives == actual.len() {
            return Err(metrics::MetricsError::DegenerateLabels {
                positives,
                negatives: actual.len() - positives,
            }
            .into());
        }
        let confusion = metrics::match_events(&predicted, &actual, args.tolerance)?;
        let mut report = metrics::detection_metrics(&confusion);
        if let Some(sc) = input.index("score") {
            let scores = input.numbers(sc)?;
            if scores.iter().all(|s| s.is_finite()) {
                report.auc = Some(metrics::auc(&scores, &actual)?);
            }
        }
        println!("{report}");
        let eval = DetectionEvaluation {
            tolerance: args.tolerance,
            confusion,
            report,
        };
        (
            "detection.json",
            serde_json::to_string_pretty(&eval).expect("serializes"),
        )
    } else {
        let mut reports: BTreeMap<String, RegressionReport> = BTreeMap::new();
        for (i, h) in input.header.iter().enumerate() {
            let Some(base) = h.strip_suffix("_actual") else {
                continue;
            };
            let Some(j) = input.index(&format!("{base}_predicted")) else {
                continue;
            };
            let a = input.numbers(i)?;
            let p = input.numbers(j)?;
            let keep: Vec<usize> = (0..a.len()).filter(|&k| a[k].is_finite() && p[k].is_finite()).collect();
            let a: Vec<f64> = keep.iter().map(|&k| a[k]).collect();
            let p: Vec<f64> = keep.iter().map(|&k| p[k]).collect();
            reports.insert(base.to_string(), metrics::regression_metrics(&a, &p)?);
        }
        if reports.is_empty() {
            return Err(Error::Data(
                "no truth file given and no `<name>_actual`/`<name>_predicted` columns found".into(),
            ));
        }
        for (name, r) in &reports {
            println!("{name}\n{r}");
        }
        (
            "regression.json",
            serde_json::to_string_pretty(&reports).expect("serializes"),
        )
    };
    if let Some(dir) = &args.output {
        let mut out = OutputDir::new(dir)?;
        out.write(name, (body + "\n").as_bytes())?;
        out.finish(
            "evaluate",
            sha256_hex(b""),
            sha256_hex(&input_bytes),
            serde_json::json!({ "tolerance": args.tolerance }),
        )?;
    }
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut spec = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            SynthSpec::from_toml_str(&text)?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let out = synth::synth_pmu(&spec)?;
    let mut bytes = Vec::new();
    out.write_csv(&mut bytes)?;
    atomic_write(&args.output, &bytes)?;
    print!("{}", spec.to_toml_string());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries_io::{Channel, ChannelSpec};

    fn frame(n: usize) -> MeasurementFrame {
        MeasurementFrame::uniform(
            Timestamp::from_nanos(0),
            1.0,
            vec![Channel {
                spec: ChannelSpec::derived("x"),
                values: vec![0.0; n],
            }],
        )
        .unwrap()
    }

    #[test]
    fn split_forms() {
        let f = frame(100);
        assert_eq!(split_index(&f, "0.8").unwrap(), 80);
        assert_eq!(split_index(&f, "1970-01-01T00:00:10Z").unwrap(), 10);
        for bad in ["1.0", "0", "0.01", "-0.5", "nope"] {
            assert_eq!(split_index(&f, bad).unwrap_err().kind().exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn channel_dir_sanitizes() {
        assert_eq!(channel_dir("VA_mag"), "VA_mag");
        assert_eq!(channel_dir("a/b c"), "a_b_c");
    }

    #[test]
    fn config_paths_and_bounds() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "[io]\nschema = \"missing.toml\"\n").unwrap();
        assert_eq!(load_config(Some(&p)).unwrap_err().kind().exit_code(), 2);
        fs::write(dir.path().join("s.toml"), "").unwrap();
        fs::write(&p, "[io]\nschema = \"s.toml\"\n[embedding]\nrows = 12\n").unwrap();
        let cfg = load_config(Some(&p)).unwrap();
        assert_eq!(cfg.embedding.rows, 12);
        assert_eq!(cfg.io.schema.unwrap(), dir.path().join("s.toml"));
        fs::write(&p, "[detection]\nsigma_multiplier = -1.0\n").unwrap();
        assert_eq!(load_config(Some(&p)).unwrap_err().kind().exit_code(), 2);
        fs::write(&p, "[bogus]\n").unwrap();
        assert_eq!(load_config(Some(&p)).unwrap_err().kind().exit_code(), 2);
    }
}
