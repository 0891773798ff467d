//! Subcommand implementations. Each takes the raw config, writes its
//! artifacts under `output_dir`, refreshes the manifest and returns a short
//! human-readable summary.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use shapmon::encoding::{
    build_dataset, build_schema, Dataset, DatasetItem, EncodeError, EncodedPrefix, FeatureSchema,
    Split,
};
use shapmon::event_log::{
    ingest_csv, ingest_csv_with_schema, AttributeKind, Domain, EventLog, Ingested, KpiLabeler,
    LogError, ACTIVITY,
};
use shapmon::explainer::{explain_attribution, records_to_csv, ExplainError, ExplanationRecord};
use shapmon::predictor::{evaluate, fit, FittedModel, ModelSpec, PredictError, Task};
use shapmon::reporting::{
    aggregate_heatmap, heatmap_csv, heatmap_svg, online_table_csv, OnlineCase, PredictionFormat,
};
use shapmon::shapley::{
    exact_shapley, explain, sample_background, sampled_shapley, Estimator, ShapleyAttribution,
    ShapleyError, ValueFunction,
};
use shapmon::synth::generate;

use crate::config::{EstimatorChoice, RawConfig, RunConfig};
use crate::error::CliError;

pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const MODEL_FILE: &str = "model.bin";
pub const DATASET_FILE: &str = "dataset.bin";
pub const METRICS_FILE: &str = "metrics.txt";
pub const MALFORMED_FILE: &str = "malformed_rows.txt";
pub const LOG_FILE: &str = "log.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const HEATMAP_CSV: &str = "heatmap.csv";
pub const HEATMAP_SVG: &str = "heatmap.svg";
pub const EXPLANATIONS_FILE: &str = "explanations.csv";
pub const ONLINE_FILE: &str = "online.csv";

fn log_error(err: LogError, input_field: &str) -> CliError {
    match err {
        LogError::MissingColumn { field, column } => {
            CliError::config(field, format!("column `{column}` not found in header"))
        }
        LogError::Config { field, message } => CliError::config(field, message),
        LogError::Io { path, source } => {
            CliError::config(input_field, format!("cannot read {path}: {source}"))
        }
        LogError::Csv(e) => {
            let location = match e.position() {
                Some(p) => format!("{input_field} line {}", p.line()),
                None => input_field.to_string(),
            };
            CliError::Input {
                location,
                message: e.to_string(),
            }
        }
    }
}

fn encode_error(err: EncodeError) -> CliError {
    match err {
        EncodeError::CardinalityCap { .. } => CliError::config("cardinality_cap", err.to_string()),
        EncodeError::InvalidSplit(_) => CliError::config("split_train", err.to_string()),
        EncodeError::PrefixTooLong { .. } => CliError::config("max_len", err.to_string()),
        EncodeError::EmptyLog => CliError::config("input", err.to_string()),
        other => CliError::runtime(DATASET_FILE, other),
    }
}

fn predict_error(err: PredictError) -> CliError {
    match err {
        PredictError::EmptyTraining => {
            CliError::config("split_train", "the training split is empty")
        }
        PredictError::FingerprintMismatch { .. } => CliError::runtime(MODEL_FILE, err),
        other => CliError::runtime(MODEL_FILE, other),
    }
}

fn shapley_error(err: ShapleyError) -> CliError {
    match err {
        ShapleyError::TooManyFeatures { .. } => CliError::config("exact_cap", err.to_string()),
        ShapleyError::EmptyBackground => CliError::config("background_size", err.to_string()),
        other => CliError::runtime("shapley", other),
    }
}

fn explain_error(err: ExplainError) -> CliError {
    CliError::runtime("explainer", err)
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::runtime(path.display().to_string(), e)
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io(&path))
}

/// Creates the output directory and stores the canonical config in it.
fn prepare(raw: &RawConfig, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| {
        CliError::config(
            "output_dir",
            format!("cannot create {}: {e}", dir.display()),
        )
    })?;
    write(&dir, CONFIG_FILE, raw.to_text())?;
    Ok(dir)
}

/// Rewrites `manifest.txt` with the SHA-256 of every other regular file.
pub fn write_manifest(dir: &Path) -> Result<(), CliError> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(Result::ok)
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n != MANIFEST_FILE)
        .collect();
    names.sort();
    let mut out = String::new();
    for name in names {
        let path = dir.join(&name);
        let bytes = fs::read(&path).map_err(io(&path))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        out.push_str(&format!("{hex}  {name}\n"));
    }
    write(dir, MANIFEST_FILE, out)
}

fn required<'a>(path: &'a Option<PathBuf>, field: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::config(field, "required for this command"))
}

fn ingest(cfg: &RunConfig, dir: &Path) -> Result<EventLog, CliError> {
    let input = required(&cfg.input, "input")?;
    let Ingested { log, report } =
        ingest_csv(input, &cfg.mapping).map_err(|e| log_error(e, "input"))?;
    write(dir, MALFORMED_FILE, report.to_text())?;
    if !report.is_clean() {
        warn!(
            "{} malformed rows, {} traces dropped; see {MALFORMED_FILE}",
            report.row_errors.len(),
            report.dropped_cases.len()
        );
    }
    if log.is_empty() {
        return Err(CliError::config(
            "input",
            format!("{} contains no usable traces", input.display()),
        ));
    }
    Ok(log)
}

/// Rejects KPI definitions the log cannot support.
fn check_kpi(kpi: &KpiLabeler, log: &EventLog) -> Result<(), CliError> {
    match kpi {
        KpiLabeler::RemainingTime => Ok(()),
        KpiLabeler::ActivityOccurrence(target) => {
            let known = matches!(
                log.attribute(ACTIVITY).map(|a| &a.domain),
                Some(Domain::Categorical(values)) if values.contains(target)
            );
            if known {
                Ok(())
            } else {
                Err(CliError::config(
                    "kpi_target",
                    format!("activity `{target}` does not occur in the log"),
                ))
            }
        }
        KpiLabeler::EndOfCaseNumeric(attr) => match log.attribute(attr) {
            Some(a) if a.kind == AttributeKind::Numeric => Ok(()),
            Some(a) => Err(CliError::config(
                "kpi_target",
                format!("attribute `{attr}` is {}, not numeric", a.kind),
            )),
            None => Err(CliError::config(
                "kpi_target",
                format!("attribute `{attr}` does not occur in the log"),
            )),
        },
    }
}

fn metrics_text(model: &FittedModel, dataset: &Dataset) -> Result<String, CliError> {
    let test = dataset.split(Split::Test);
    let mut out = format!(
        "model: {}\nkpi: {}\nmax_len: {}\nfingerprint: {}\n",
        model.spec.name(),
        dataset.labeler.name(),
        dataset.max_len,
        model.fingerprint
    );
    if test.is_empty() {
        warn!("test split is empty; no metrics computed");
        out.push_str("test_size: 0\n");
        return Ok(out);
    }
    out.push_str(&evaluate(model, &test).map_err(predict_error)?.to_text());
    // Mean-of-training-targets reference, refit here so `evaluate` can
    // reproduce it from the cached dataset alone.
    let baseline = fit(
        &ModelSpec::Mean,
        &dataset.schema,
        model.task,
        &dataset.split(Split::Train),
        &[],
        0,
    )
    .map_err(predict_error)?;
    let base = evaluate(&baseline, &test).map_err(predict_error)?;
    for line in base
        .to_text()
        .lines()
        .filter(|l| !l.starts_with("task") && !l.starts_with("test_size"))
    {
        out.push_str(&format!("baseline_{line}\n"));
    }
    Ok(out)
}

pub fn cmd_ingest_check(raw: &RawConfig) -> Result<String, CliError> {
    let cfg = RunConfig::from_raw(raw)?;
    let dir = prepare(raw, &cfg)?;
    let log = ingest(&cfg, &dir)?;
    check_kpi(&cfg.kpi, &log)?;
    write_manifest(&dir)?;
    let mut out = format!(
        "traces: {}\nevents: {}\nattributes:\n",
        log.traces.len(),
        log.event_count()
    );
    for a in &log.schema {
        let detail = match &a.domain {
            Domain::Categorical(v) => format!("{} values", v.len()),
            Domain::Numeric { min, max } | Domain::Timestamp { min, max } => {
                format!("[{min}, {max}]")
            }
            Domain::Boolean => String::new(),
        };
        out.push_str(&format!("  {} ({}) {}\n", a.name, a.kind, detail));
    }
    Ok(out)
}

pub fn cmd_synth(raw: &RawConfig) -> Result<String, CliError> {
    let cfg = RunConfig::from_raw(raw)?;
    let (log, truth) =
        generate(&cfg.synth).map_err(|e| CliError::config("synth_rules", e.to_string()))?;
    let dir = prepare(raw, &cfg)?;
    let path = dir.join(LOG_FILE);
    let file = fs::File::create(&path).map_err(io(&path))?;
    log.write_csv(std::io::BufWriter::new(file))
        .map_err(|e| CliError::runtime(path.display().to_string(), e))?;
    write(&dir, GROUND_TRUTH_FILE, truth.to_csv())?;
    write_manifest(&dir)?;
    Ok(format!(
        "wrote {} traces ({} events) to {}",
        log.traces.len(),
        log.event_count(),
        path.display()
    ))
}

pub fn cmd_train(raw: &RawConfig) -> Result<String, CliError> {
    let cfg = RunConfig::from_raw(raw)?;
    let dir = prepare(raw, &cfg)?;
    let log = ingest(&cfg, &dir)?;
    check_kpi(&cfg.kpi, &log)?;
    let schema = build_schema(&log, &cfg.encoding).map_err(encode_error)?;
    let dataset = build_dataset(&log, &cfg.kpi, &schema, &cfg.dataset).map_err(encode_error)?;
    for (case_id, reason) in &dataset.skipped {
        warn!("trace {case_id} skipped: {reason}");
    }
    info!(
        "{} prefixes, width {}, max length {}",
        dataset.items.len(),
        schema.width(),
        dataset.max_len
    );
    let task = Task::for_kpi(&cfg.kpi);
    let model = fit(
        &cfg.model,
        &schema,
        task,
        &dataset.split(Split::Train),
        &dataset.split(Split::Validation),
        cfg.model_seed,
    )
    .map_err(predict_error)?;
    let metrics = metrics_text(&model, &dataset)?;
    write(&dir, METRICS_FILE, &metrics)?;
    model.save(dir.join(MODEL_FILE)).map_err(predict_error)?;
    dataset.save(dir.join(DATASET_FILE)).map_err(encode_error)?;
    write_manifest(&dir)?;
    Ok(metrics)
}

/// Loads the cached dataset and a model trained on the same schema.
fn load_artifacts(dir: &Path) -> Result<(Dataset, FittedModel), CliError> {
    let dataset = Dataset::load(dir.join(DATASET_FILE), None)
        .map_err(|e| CliError::runtime(DATASET_FILE, e))?;
    let model = FittedModel::load(dir.join(MODEL_FILE), Some(dataset.schema.fingerprint()))
        .map_err(predict_error)?;
    Ok((dataset, model))
}

pub fn cmd_evaluate(raw: &RawConfig) -> Result<String, CliError> {
    let cfg = RunConfig::from_raw(raw)?;
    let dir = prepare(raw, &cfg)?;
    let (dataset, model) = load_artifacts(&dir)?;
    let metrics = metrics_text(&model, &dataset)?;
    write(&dir, METRICS_FILE, &metrics)?;
    write_manifest(&dir)?;
    Ok(metrics)
}

/// Attribution and filtered records for one encoded prefix.
pub fn explain_prefix(
    cfg: &RunConfig,
    model: &FittedModel,
    schema: &FeatureSchema,
    background: &[EncodedPrefix],
    instance: &EncodedPrefix,
) -> Result<(ShapleyAttribution, Vec<ExplanationRecord>), CliError> {
    let vf = ValueFunction::new(model, background, instance).map_err(shapley_error)?;
    let attribution = match cfg.estimator {
        EstimatorChoice::Auto => explain(&vf, &cfg.shapley),
        EstimatorChoice::Exact => exact_shapley(&vf, cfg.shapley.exact_cap),
        EstimatorChoice::Sampled => sampled_shapley(&vf, cfg.shapley.samples, cfg.shapley.seed),
    }
    .map_err(shapley_error)?;
    let records =
        explain_attribution(&attribution, cfg.delta, schema, instance).map_err(explain_error)?;
    Ok((attribution, records))
}

fn background(cfg: &RunConfig, dataset: &Dataset) -> Vec<EncodedPrefix> {
    let pool: Vec<&EncodedPrefix> = dataset
        .split(Split::Train)
        .into_iter()
        .map(|i| &i.x)
        .collect();
    sample_background(&pool, cfg.shapley.background_size, cfg.shapley.seed)
}

/// Explains every instance on a pool of `cfg.threads` workers. Results come
/// back in input order whatever the thread count.
fn explain_all(
    cfg: &RunConfig,
    model: &FittedModel,
    schema: &FeatureSchema,
    background: &[EncodedPrefix],
    instances: &[&EncodedPrefix],
) -> Result<Vec<(ShapleyAttribution, Vec<ExplanationRecord>)>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::config("threads", e.to_string()))?;
    let results: Vec<_> = pool.install(|| {
        instances
            .par_iter()
            .map(|x| explain_prefix(cfg, model, schema, background, x))
            .collect()
    });
    results.into_iter().collect()
}

fn log_estimators(results: &[(ShapleyAttribution, Vec<ExplanationRecord>)]) -> (usize, usize) {
    let exact = results
        .iter()
        .filter(|(a, _)| a.estimator == Estimator::Exact)
        .count();
    let sampled = results.len() - exact;
    info!(
        "explained {} prefixes: {exact} exact, {sampled} sampled",
        results.len()
    );
    (exact, sampled)
}

pub fn cmd_explain_offline(raw: &RawConfig) -> Result<String, CliError> {
    let cfg = RunConfig::from_raw(raw)?;
    let dir = prepare(raw, &cfg)?;
    let (dataset, model) = load_artifacts(&dir)?;
    let test: Vec<&DatasetItem> = dataset.split(Split::Test);
    if test.is_empty() {
        warn!("test split is empty; the heatmap will be empty");
    }
    let bg = background(&cfg, &dataset);
    let instances: Vec<&EncodedPrefix> = test.iter().map(|i| &i.x).collect();
    let results = explain_all(&cfg, &model, &dataset.schema, &bg, &instances)?;
    let (exact, sampled) = log_estimators(&results);

    let records: Vec<Vec<ExplanationRecord>> = results.into_iter().map(|(_, r)| r).collect();
    let medians = dataset.training_medians();
    let heatmap = aggregate_heatmap(&records, &medians, &cfg.report, &dataset.labeler.name());
    let ids: Vec<String> = test
        .iter()
        .map(|i| format!("{}#{}", i.case_id, i.prefix_len))
        .collect();
    write(&dir, HEATMAP_CSV, heatmap_csv(&heatmap))?;
    write(&dir, HEATMAP_SVG, heatmap_svg(&heatmap))?;
    write(
        &dir,
        EXPLANATIONS_FILE,
        records_to_csv(
            ids.iter()
                .map(String::as_str)
                .zip(records.iter().map(Vec::as_slice)),
        ),
    )?;
    write_manifest(&dir)?;
    Ok(format!(
        "explained {} test prefixes ({exact} exact, {sampled} sampled); heatmap has {} rows",
        test.len(),
        heatmap.rows.len()
    ))
}

pub fn cmd_explain_online(raw: &RawConfig) -> Result<String, CliError> {
    let cfg = RunConfig::from_raw(raw)?;
    let dir = prepare(raw, &cfg)?;
    let (dataset, model) = load_artifacts(&dir)?;
    let path = required(&cfg.running_cases, "running_cases")?;
    let known: Vec<_> = dataset
        .schema
        .attributes
        .iter()
        .filter(|a| !a.is_derived())
        .map(|a| a.schema.clone())
        .collect();
    let Ingested { log, report } = ingest_csv_with_schema(path, &cfg.mapping, &known)
        .map_err(|e| log_error(e, "running_cases"))?;
    for e in &report.row_errors {
        warn!(
            "running_cases line {} (case {}): {}",
            e.line, e.case_id, e.message
        );
    }

    let instances: Vec<EncodedPrefix> = log
        .traces
        .iter()
        .map(|t| dataset.schema.encode_tail(&t.events, dataset.max_len))
        .collect();
    let bg = background(&cfg, &dataset);
    let refs: Vec<&EncodedPrefix> = instances.iter().collect();
    let results = explain_all(&cfg, &model, &dataset.schema, &bg, &refs)?;
    log_estimators(&results);
    let cases: Vec<OnlineCase> = log
        .traces
        .iter()
        .zip(results)
        .map(|(t, (attribution, records))| OnlineCase {
            case_id: t.case_id.clone(),
            prediction: attribution.prediction,
            records,
        })
        .collect();
    let medians = dataset.training_medians();
    let format = PredictionFormat::from(dataset.labeler.output_domain());
    write(
        &dir,
        ONLINE_FILE,
        online_table_csv(&cases, cfg.report.top_k, format, &medians),
    )?;
    write_manifest(&dir)?;
    Ok(format!("explained {} running cases", cases.len()))
}
