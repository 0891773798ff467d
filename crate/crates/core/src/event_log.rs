//! Event-log data model, CSV ingestion and KPI labelers.
//!
//! An [`EventLog`] is a multiset of [`Trace`]s; each trace is an ordered
//! sequence of [`Event`]s, and each event is a partial map from attribute
//! names to typed values plus a mandatory UTC timestamp. The activity is
//! stored as an ordinary categorical attribute named [`ACTIVITY`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name under which the activity column is stored in every event.
pub const ACTIVITY: &str = "ACTIVITY";

/// Categorical value standing in for an absent cell.
pub const MISSING: &str = "⟂missing";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("config field `{field}`: column `{column}` not found in header")]
    MissingColumn { field: &'static str, column: String },
    #[error("config field `{field}`: {message}")]
    Config {
        field: &'static str,
        message: String,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("prefix length {i} outside 1..={len}")]
    PrefixOutOfRange { i: usize, len: usize },
    #[error("final event of case `{case_id}` has no numeric `{attribute}`")]
    MissingFinalValue { case_id: String, attribute: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttributeKind {
    Categorical,
    Numeric,
    Boolean,
    Timestamp,
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Categorical => "categorical",
            Self::Numeric => "numeric",
            Self::Boolean => "boolean",
            Self::Timestamp => "timestamp",
        };
        f.write_str(s)
    }
}

/// The observed domain of one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// Sorted, duplicate-free set of observed values.
    Categorical(Vec<String>),
    Numeric {
        min: f64,
        max: f64,
    },
    Boolean,
    /// Observed range in UTC seconds.
    Timestamp {
        min: f64,
        max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub kind: AttributeKind,
    pub domain: Domain,
}

impl AttributeSchema {
    /// Whether `value` belongs to the declared domain.
    pub fn contains(&self, value: &Value) -> bool {
        match (&self.domain, value) {
            (Domain::Categorical(values), Value::Categorical(v)) => values.binary_search(v).is_ok(),
            (Domain::Numeric { min, max }, Value::Numeric(v))
            | (Domain::Timestamp { min, max }, Value::Timestamp(v)) => *v >= *min && *v <= *max,
            (Domain::Boolean, Value::Boolean(_)) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Categorical(String),
    Numeric(f64),
    Boolean(bool),
    /// UTC seconds since the epoch.
    Timestamp(f64),
}

impl Value {
    pub fn kind(&self) -> AttributeKind {
        match self {
            Self::Categorical(_) => AttributeKind::Categorical,
            Self::Numeric(_) => AttributeKind::Numeric,
            Self::Boolean(_) => AttributeKind::Boolean,
            Self::Timestamp(_) => AttributeKind::Timestamp,
        }
    }

    /// Numeric view used by numeric KPIs and encodings.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Numeric(v) | Self::Timestamp(v) => Some(*v),
            Self::Boolean(b) => Some(if *b { 1.0 } else { 0.0 }),
            Self::Categorical(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Self::Categorical(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Categorical(s) => f.write_str(s),
            Self::Numeric(v) => write!(f, "{v}"),
            Self::Boolean(b) => write!(f, "{b}"),
            Self::Timestamp(t) => f.write_str(&format_timestamp(*t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub assignments: BTreeMap<String, Value>,
    /// UTC seconds since the epoch.
    pub timestamp: f64,
}

impl Event {
    pub fn new(activity: impl Into<String>, timestamp: f64) -> Self {
        let mut assignments = BTreeMap::new();
        assignments.insert(ACTIVITY.to_string(), Value::Categorical(activity.into()));
        Self {
            assignments,
            timestamp,
        }
    }

    pub fn with(mut self, attribute: impl Into<String>, value: Value) -> Self {
        self.assignments.insert(attribute.into(), value);
        self
    }

    pub fn get(&self, attribute: &str) -> Option<&Value> {
        self.assignments.get(attribute)
    }

    pub fn activity(&self) -> Option<&str> {
        self.get(ACTIVITY).and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn activities(&self) -> impl Iterator<Item = Option<&str>> {
        self.events.iter().map(Event::activity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub traces: Vec<Trace>,
    pub schema: Vec<AttributeSchema>,
}

impl EventLog {
    /// Builds a log from in-memory traces, inferring the attribute schema.
    ///
    /// Traces are kept in the given order; events within a trace are
    /// stably sorted by timestamp. Empty traces are discarded.
    pub fn from_traces(mut traces: Vec<Trace>) -> Self {
        traces.retain(|t| !t.events.is_empty());
        for trace in &mut traces {
            trace
                .events
                .sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        }
        let schema = infer_schema(&traces);
        Self { traces, schema }
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeSchema> {
        self.schema.iter().find(|a| a.name == name)
    }

    /// All prefixes of length `>= min_len`, trace order first, then
    /// increasing prefix length.
    pub fn enumerate_prefixes(&self, min_len: usize) -> impl Iterator<Item = (&Trace, usize)> {
        let min_len = min_len.max(1);
        self.traces
            .iter()
            .flat_map(move |t| (min_len..=t.len()).map(move |i| (t, i)))
    }
}

impl EventLog {
    /// Writes the log in the ingestion format: `case_id,activity,timestamp`
    /// followed by one column per attribute. Absent values and the missing
    /// sentinel become empty cells.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), LogError> {
        let mapping = CsvMapping::default();
        let mut w = csv::WriterBuilder::new()
            .delimiter(mapping.delimiter)
            .from_writer(writer);
        let attrs: Vec<&AttributeSchema> =
            self.schema.iter().filter(|a| a.name != ACTIVITY).collect();
        let mut header = vec![
            mapping.case_column.as_str(),
            mapping.activity_column.as_str(),
            mapping.timestamp_column.as_str(),
        ];
        header.extend(attrs.iter().map(|a| a.name.as_str()));
        w.write_record(&header)?;
        for trace in &self.traces {
            for event in &trace.events {
                let mut record = vec![
                    trace.case_id.clone(),
                    event
                        .activity()
                        .filter(|a| *a != MISSING)
                        .unwrap_or("")
                        .to_string(),
                    format_timestamp(event.timestamp),
                ];
                for attr in &attrs {
                    record.push(match event.get(&attr.name) {
                        Some(Value::Categorical(s)) if s == MISSING => String::new(),
                        Some(v) => v.to_string(),
                        None => String::new(),
                    });
                }
                w.write_record(&record)?;
            }
        }
        w.flush().map_err(|source| LogError::Io {
            path: "<writer>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Infers attribute kinds and domains from typed event values.
///
/// Categorical domains gain [`MISSING`] when at least one event lacks the
/// attribute.
fn infer_schema(traces: &[Trace]) -> Vec<AttributeSchema> {
    let mut order: Vec<String> = Vec::new();
    let mut seen: HashMap<String, AttributeKind> = HashMap::new();
    let mut cats: HashMap<String, BTreeSet<String>> = HashMap::new();
    let mut ranges: HashMap<String, (f64, f64)> = HashMap::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    let total: usize = traces.iter().map(Trace::len).sum();

    for event in traces.iter().flat_map(|t| &t.events) {
        for (name, value) in &event.assignments {
            if !seen.contains_key(name) {
                seen.insert(name.clone(), value.kind());
                order.push(name.clone());
            }
            *counts.entry(name.clone()).or_default() += 1;
            match value {
                Value::Categorical(s) => {
                    cats.entry(name.clone()).or_default().insert(s.clone());
                }
                other => {
                    if let Some(v) = other.as_f64() {
                        let r = ranges.entry(name.clone()).or_insert((v, v));
                        r.0 = r.0.min(v);
                        r.1 = r.1.max(v);
                    }
                }
            }
        }
    }

    // ACTIVITY first, remaining attributes alphabetically.
    order.sort_by(|a, b| (a != ACTIVITY, a).cmp(&(b != ACTIVITY, b)));
    order
        .into_iter()
        .map(|name| {
            let kind = seen[&name];
            let domain = match kind {
                AttributeKind::Categorical => {
                    let mut values = cats.remove(&name).unwrap_or_default();
                    if counts[&name] < total {
                        values.insert(MISSING.to_string());
                    }
                    Domain::Categorical(values.into_iter().collect())
                }
                AttributeKind::Numeric => {
                    let (min, max) = ranges[&name];
                    Domain::Numeric { min, max }
                }
                AttributeKind::Boolean => Domain::Boolean,
                AttributeKind::Timestamp => {
                    let (min, max) = ranges[&name];
                    Domain::Timestamp { min, max }
                }
            };
            AttributeSchema { name, kind, domain }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// How CSV columns map onto the event model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvMapping {
    pub case_column: String,
    pub activity_column: String,
    pub timestamp_column: String,
    pub delimiter: u8,
    /// `chrono` format string; `None` accepts ISO-8601 / RFC 3339.
    pub timestamp_format: Option<String>,
    /// Columns forced to categorical even when every cell parses as a number.
    pub categorical_columns: Vec<String>,
    /// Columns dropped on ingestion.
    pub ignore_columns: Vec<String>,
}

impl Default for CsvMapping {
    fn default() -> Self {
        Self {
            case_column: "case_id".into(),
            activity_column: "activity".into(),
            timestamp_column: "timestamp".into(),
            delimiter: b',',
            timestamp_format: None,
            categorical_columns: Vec::new(),
            ignore_columns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub case_id: String,
    pub message: String,
}

/// Side-channel report of rows that could not be ingested.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub row_errors: Vec<RowError>,
    /// Case ids dropped because at least one of their rows was malformed.
    pub dropped_cases: Vec<String>,
}

impl IngestReport {
    pub fn is_clean(&self) -> bool {
        self.row_errors.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "rows read: {}\nmalformed rows: {}\ndropped traces: {}\n",
            self.rows_read,
            self.row_errors.len(),
            self.dropped_cases.len()
        );
        for e in &self.row_errors {
            out.push_str(&format!(
                "line {} (case {}): {}\n",
                e.line, e.case_id, e.message
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub log: EventLog,
    pub report: IngestReport,
}

pub fn ingest_csv(path: impl AsRef<Path>, mapping: &CsvMapping) -> Result<Ingested, LogError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_reader(file, mapping, None)
}

/// Ingests a file using a known attribute schema instead of inferring one,
/// so running cases are typed exactly like the training log.
pub fn ingest_csv_with_schema(
    path: impl AsRef<Path>,
    mapping: &CsvMapping,
    schema: &[AttributeSchema],
) -> Result<Ingested, LogError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_reader(file, mapping, Some(schema))
}

pub fn ingest_reader<R: Read>(
    reader: R,
    mapping: &CsvMapping,
    known: Option<&[AttributeSchema]>,
) -> Result<Ingested, LogError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(mapping.delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |field: &'static str, column: &str| {
        header
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| LogError::MissingColumn {
                field,
                column: column.to_string(),
            })
    };
    let case_idx = find("case_column", &mapping.case_column)?;
    let act_idx = find("activity_column", &mapping.activity_column)?;
    let ts_idx = find("timestamp_column", &mapping.timestamp_column)?;
    for col in &mapping.categorical_columns {
        if !header.contains(col) {
            return Err(LogError::MissingColumn {
                field: "categorical_columns",
                column: col.clone(),
            });
        }
    }
    let attr_cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(i, h)| {
            *i != case_idx && *i != act_idx && *i != ts_idx && !mapping.ignore_columns.contains(h)
        })
        .map(|(i, h)| (i, h.clone()))
        .collect();
    if attr_cols.iter().any(|(_, h)| h == ACTIVITY) {
        return Err(LogError::Config {
            field: "activity_column",
            message: format!("attribute column may not be named `{ACTIVITY}`"),
        });
    }

    struct RawRow {
        line: u64,
        case_id: String,
        activity: String,
        timestamp: String,
        cells: Vec<String>,
    }

    let mut rows = Vec::new();
    let mut report = IngestReport::default();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        report.rows_read += 1;
        let cell = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        rows.push(RawRow {
            line,
            case_id: cell(case_idx),
            activity: cell(act_idx),
            timestamp: cell(ts_idx),
            cells: attr_cols.iter().map(|(i, _)| cell(*i)).collect(),
        });
    }

    // Column typing: either from the known schema or inferred from cells.
    let kinds: Vec<AttributeKind> = attr_cols
        .iter()
        .enumerate()
        .map(|(c, (_, name))| {
            if let Some(schema) = known {
                return schema
                    .iter()
                    .find(|a| &a.name == name)
                    .map(|a| a.kind)
                    .unwrap_or(AttributeKind::Categorical);
            }
            if mapping.categorical_columns.contains(name) {
                return AttributeKind::Categorical;
            }
            infer_column_kind(
                rows.iter().map(|r| r.cells[c].as_str()),
                mapping.timestamp_format.as_deref(),
            )
        })
        .collect();

    let mut case_order: Vec<String> = Vec::new();
    let mut events: HashMap<String, Vec<Event>> = HashMap::new();
    let mut bad_cases: BTreeSet<String> = BTreeSet::new();
    for row in rows {
        let mut fail = |message: String| {
            report.row_errors.push(RowError {
                line: row.line,
                case_id: row.case_id.clone(),
                message,
            });
        };
        if row.case_id.is_empty() {
            fail("empty case id".into());
            continue;
        }
        if !events.contains_key(&row.case_id) {
            case_order.push(row.case_id.clone());
            events.insert(row.case_id.clone(), Vec::new());
        }
        let ts = match parse_timestamp(&row.timestamp, mapping.timestamp_format.as_deref()) {
            Some(ts) => ts,
            None => {
                fail(format!("unparsable timestamp `{}`", row.timestamp));
                bad_cases.insert(row.case_id.clone());
                continue;
            }
        };
        let activity = if row.activity.is_empty() {
            MISSING.to_string()
        } else {
            row.activity.clone()
        };
        let mut event = Event::new(activity, ts);
        let mut bad = None;
        for (c, raw) in row.cells.iter().enumerate() {
            let name = &attr_cols[c].1;
            let kind = kinds[c];
            if raw.is_empty() {
                if kind == AttributeKind::Categorical {
                    event
                        .assignments
                        .insert(name.clone(), Value::Categorical(MISSING.to_string()));
                }
                continue;
            }
            match parse_cell(raw, kind, mapping.timestamp_format.as_deref()) {
                Some(v) => {
                    event.assignments.insert(name.clone(), v);
                }
                None => {
                    bad = Some(format!("column `{name}`: `{raw}` is not a valid {kind}"));
                    break;
                }
            }
        }
        if let Some(message) = bad {
            fail(message);
            bad_cases.insert(row.case_id.clone());
            continue;
        }
        events.get_mut(&row.case_id).unwrap().push(event);
    }

    let traces: Vec<Trace> = case_order
        .into_iter()
        .filter(|c| !bad_cases.contains(c))
        .map(|case_id| {
            let events = events.remove(&case_id).unwrap_or_default();
            Trace { case_id, events }
        })
        .collect();
    report.dropped_cases = bad_cases.into_iter().collect();
    let mut log = EventLog::from_traces(traces);
    if let Some(schema) = known {
        log.schema = schema.to_vec();
    }
    Ok(Ingested { log, report })
}

fn infer_column_kind<'a>(
    cells: impl Iterator<Item = &'a str>,
    ts_format: Option<&str>,
) -> AttributeKind {
    let mut any = false;
    let (mut boolean, mut numeric, mut timestamp) = (true, true, true);
    for cell in cells.filter(|c| !c.is_empty()) {
        any = true;
        boolean &= parse_bool(cell).is_some();
        numeric &= cell.parse::<f64>().map(|v| v.is_finite()).unwrap_or(false);
        timestamp &= parse_timestamp(cell, ts_format).is_some();
        if !(boolean || numeric || timestamp) {
            break;
        }
    }
    if !any {
        AttributeKind::Categorical
    } else if boolean {
        AttributeKind::Boolean
    } else if numeric {
        AttributeKind::Numeric
    } else if timestamp {
        AttributeKind::Timestamp
    } else {
        AttributeKind::Categorical
    }
}

fn parse_bool(cell: &str) -> Option<bool> {
    match cell.to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn parse_cell(raw: &str, kind: AttributeKind, ts_format: Option<&str>) -> Option<Value> {
    match kind {
        AttributeKind::Categorical => Some(Value::Categorical(raw.to_string())),
        AttributeKind::Numeric => raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Value::Numeric),
        AttributeKind::Boolean => parse_bool(raw).map(Value::Boolean),
        AttributeKind::Timestamp => parse_timestamp(raw, ts_format).map(Value::Timestamp),
    }
}

/// Parses a timestamp into UTC seconds.
///
/// With no explicit format, RFC 3339 and the naive forms
/// `YYYY-MM-DD[T ]HH:MM:SS[.fff]` and `YYYY-MM-DD` (read as UTC) are accepted.
pub fn parse_timestamp(raw: &str, format: Option<&str>) -> Option<f64> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    let to_secs =
        |dt: DateTime<Utc>| dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9;
    if let Some(fmt) = format {
        if let Ok(dt) = DateTime::parse_from_str(raw, fmt) {
            return Some(to_secs(dt.with_timezone(&Utc)));
        }
        return NaiveDateTime::parse_from_str(raw, fmt)
            .ok()
            .map(|n| to_secs(n.and_utc()));
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(to_secs(dt.with_timezone(&Utc)));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(n) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(to_secs(n.and_utc()));
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|n| to_secs(n.and_utc()))
}

/// RFC 3339 rendering of UTC seconds, whole seconds when possible.
pub fn format_timestamp(secs: f64) -> String {
    let whole = secs.floor();
    let nanos = ((secs - whole) * 1e9).round() as u32;
    match DateTime::from_timestamp(whole as i64, nanos.min(999_999_999)) {
        Some(dt) if nanos == 0 => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        Some(dt) => dt.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        None => format!("{secs}"),
    }
}

// ---------------------------------------------------------------------------
// KPI labelers
// ---------------------------------------------------------------------------

/// The KPI function T(σ, i) producing supervised targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum KpiLabeler {
    /// Seconds from the i-th event to the final event.
    RemainingTime,
    /// Whether the activity occurs strictly after position i.
    ActivityOccurrence(String),
    /// Value of a numeric attribute on the final event.
    EndOfCaseNumeric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputDomain {
    Seconds,
    Boolean,
    Numeric,
}

impl KpiLabeler {
    pub fn output_domain(&self) -> OutputDomain {
        match self {
            Self::RemainingTime => OutputDomain::Seconds,
            Self::ActivityOccurrence(_) => OutputDomain::Boolean,
            Self::EndOfCaseNumeric(_) => OutputDomain::Numeric,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::RemainingTime => "remaining_time".into(),
            Self::ActivityOccurrence(a) => format!("activity_occurrence({a})"),
            Self::EndOfCaseNumeric(a) => format!("end_of_case_numeric({a})"),
        }
    }

    /// KPI value for the prefix of length `i` (1-based). Boolean KPIs
    /// return 1.0 / 0.0.
    pub fn label(&self, trace: &Trace, i: usize) -> Result<f64, LabelError> {
        let n = trace.len();
        if i == 0 || i > n {
            return Err(LabelError::PrefixOutOfRange { i, len: n });
        }
        match self {
            Self::RemainingTime => {
                Ok(trace.events[n - 1].timestamp - trace.events[i - 1].timestamp)
            }
            Self::ActivityOccurrence(target) => {
                let hit = i < n
                    && trace.events[i..]
                        .iter()
                        .any(|e| e.activity() == Some(target.as_str()));
                Ok(if hit { 1.0 } else { 0.0 })
            }
            Self::EndOfCaseNumeric(attribute) => trace.events[n - 1]
                .get(attribute)
                .and_then(Value::as_f64)
                .ok_or_else(|| LabelError::MissingFinalValue {
                    case_id: trace.case_id.clone(),
                    attribute: attribute.clone(),
                }),
        }
    }

    /// Labels every prefix of `trace`, or fails for the whole trace.
    pub fn label_all(&self, trace: &Trace) -> Result<Vec<f64>, LabelError> {
        (1..=trace.len()).map(|i| self.label(trace, i)).collect()
    }
}
