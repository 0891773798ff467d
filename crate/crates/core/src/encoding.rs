//! Event-to-vector encoding, prefix padding and dataset assembly.
//!
//! Every event becomes a fixed-width row: one dimension per numeric or
//! boolean attribute and one one-hot dimension per categorical value.
//! A prefix of `m` events is left-padded with zero rows to `max_len`, so the
//! most recent event always occupies the last row.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::event_log::{
    AttributeKind, AttributeSchema, Domain, Event, EventLog, KpiLabeler, Value, MISSING,
};

/// Derived numeric feature: seconds since the first event of the case.
pub const TIME_FROM_START: &str = "time from start";
/// Derived numeric feature: seconds since the preceding event.
pub const TIME_SINCE_PREVIOUS: &str = "time since previous";

const DATASET_MAGIC: &[u8; 8] = b"SHMNDS01";

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("cannot build a feature schema from an empty log")]
    EmptyLog,
    #[error(
        "categorical attribute `{attribute}` has {count} values (cap {cap}); exclude it or raise the cap"
    )]
    CardinalityCap {
        attribute: String,
        count: usize,
        cap: usize,
    },
    #[error("prefix of {len} events exceeds max length {max_len}; truncate to the last {max_len} events")]
    PrefixTooLong { len: usize, max_len: usize },
    #[error("invalid split ratios: {0}")]
    InvalidSplit(String),
    #[error("schema fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch {
        expected: Fingerprint,
        found: Fingerprint,
    },
    #[error("not a dataset cache file (bad header)")]
    BadHeader,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialize(#[from] bincode::Error),
}

/// SHA-256 digest of a serialized [`FeatureSchema`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint(pub [u8; 32]);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingOptions {
    /// Min-max scale numeric dimensions to [0, 1].
    pub scale_numeric: bool,
    pub time_from_start: bool,
    pub time_since_previous: bool,
    pub cardinality_cap: usize,
    /// Attributes left out of the encoding.
    pub exclude: Vec<String>,
}

impl Default for EncodingOptions {
    fn default() -> Self {
        Self {
            scale_numeric: true,
            time_from_start: true,
            time_since_previous: false,
            cardinality_cap: 1000,
            exclude: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric,
    Boolean,
    OneHot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn scale(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (v - self.min) / span
        } else {
            0.0
        }
    }

    pub fn unscale(&self, s: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            s * span + self.min
        } else {
            self.min
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub attribute: String,
    /// The categorical value of a one-hot dimension.
    pub value: Option<String>,
    pub kind: FeatureKind,
}

impl FeatureDescriptor {
    pub fn label(&self) -> String {
        match &self.value {
            Some(v) => format!("{}={}", self.attribute, v),
            None => self.attribute.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum Source {
    Attribute,
    TimeFromStart,
    TimeSincePrevious,
}

/// One encoded attribute and the slice of the row it occupies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedAttribute {
    pub schema: AttributeSchema,
    pub offset: usize,
    pub width: usize,
    pub scale: Option<MinMax>,
    source: Source,
}

impl EncodedAttribute {
    pub fn is_derived(&self) -> bool {
        self.source != Source::Attribute
    }

    /// Maps a raw numeric value to its encoded dimension value.
    pub fn encode_numeric(&self, raw: f64) -> f64 {
        self.scale.map_or(raw, |s| s.scale(raw))
    }

    pub fn decode_numeric(&self, encoded: f64) -> f64 {
        self.scale.map_or(encoded, |s| s.unscale(encoded))
    }
}

/// The fixed dimension layout of the event-to-vector encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDescriptor>,
    pub attributes: Vec<EncodedAttribute>,
    pub options: EncodingOptions,
}

impl FeatureSchema {
    /// Row width `n`.
    pub fn width(&self) -> usize {
        self.features.len()
    }

    pub fn attribute(&self, name: &str) -> Option<&EncodedAttribute> {
        self.attributes.iter().find(|a| a.schema.name == name)
    }

    /// The encoded attribute owning feature column `j` (within a row).
    pub fn attribute_of(&self, j: usize) -> &EncodedAttribute {
        let pos = self.attributes.partition_point(|a| a.offset + a.width <= j);
        &self.attributes[pos]
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let bytes = bincode::serialize(self).expect("schema serializes");
        Fingerprint(Sha256::digest(&bytes).into())
    }

    /// Encodes one event into `row`. `case_start` and `previous` feed the
    /// derived time features. Returns the number of unseen categorical
    /// values (encoded as all-zero groups).
    pub fn encode_event(
        &self,
        event: &Event,
        case_start: f64,
        previous: Option<f64>,
        row: &mut [f64],
    ) -> usize {
        debug_assert_eq!(row.len(), self.width());
        row.fill(0.0);
        let mut unseen = 0;
        for attr in &self.attributes {
            let slot = &mut row[attr.offset..attr.offset + attr.width];
            let name = &attr.schema.name;
            match attr.source {
                Source::TimeFromStart => {
                    slot[0] = attr.encode_numeric(event.timestamp - case_start);
                }
                Source::TimeSincePrevious => {
                    let gap = previous.map_or(0.0, |p| event.timestamp - p);
                    slot[0] = attr.encode_numeric(gap);
                }
                Source::Attribute => {
                    match (&attr.schema.domain, event.get(name)) {
                        (Domain::Categorical(values), value) => {
                            let key = match value {
                                Some(Value::Categorical(s)) => s.clone(),
                                Some(other) => other.to_string(),
                                None => MISSING.to_string(),
                            };
                            match values.binary_search(&key) {
                                Ok(k) => slot[k] = 1.0,
                                Err(_) => {
                                    unseen += 1;
                                    warn!("unseen value `{key}` for attribute `{name}`; encoded as zeros");
                                }
                            }
                        }
                        (Domain::Boolean, Some(v)) => {
                            slot[0] = v.as_f64().unwrap_or(0.0);
                        }
                        (_, Some(v)) => {
                            let raw = match v {
                                Value::Categorical(s) => s.parse::<f64>().unwrap_or(0.0),
                                other => other.as_f64().unwrap_or(0.0),
                            };
                            slot[0] = attr.encode_numeric(raw);
                        }
                        (_, None) => {}
                    }
                }
            }
        }
        unseen
    }

    /// Encodes a prefix of at most `max_len` events.
    pub fn encode_prefix(
        &self,
        prefix: &[Event],
        max_len: usize,
    ) -> Result<EncodedPrefix, EncodeError> {
        if prefix.len() > max_len {
            return Err(EncodeError::PrefixTooLong {
                len: prefix.len(),
                max_len,
            });
        }
        Ok(self.encode_tail(prefix, max_len))
    }

    /// Encodes the most recent `max_len` events of `prefix`. Derived time
    /// features still refer to the first event of the full prefix.
    pub fn encode_tail(&self, prefix: &[Event], max_len: usize) -> EncodedPrefix {
        let n = self.width();
        let m = prefix.len().min(max_len);
        let mut data = vec![0.0; max_len * n];
        let start = prefix.first().map_or(0.0, |e| e.timestamp);
        let skip = prefix.len() - m;
        for (k, event) in prefix[skip..].iter().enumerate() {
            let pos = skip + k;
            let previous = pos.checked_sub(1).map(|p| prefix[p].timestamp);
            let r = max_len - m + k;
            self.encode_event(event, start, previous, &mut data[r * n..(r + 1) * n]);
        }
        EncodedPrefix {
            data,
            width: n,
            max_len,
            len: m,
        }
    }

    /// Inverse of [`encode_event`](Self::encode_event) for non-derived
    /// attributes. Categorical groups with no hot dimension decode to
    /// nothing.
    pub fn decode_row(&self, row: &[f64]) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        for attr in self.attributes.iter().filter(|a| !a.is_derived()) {
            let slot = &row[attr.offset..attr.offset + attr.width];
            let name = attr.schema.name.clone();
            let value = match (&attr.schema.domain, attr.schema.kind) {
                (Domain::Categorical(values), _) => slot
                    .iter()
                    .position(|&v| v == 1.0)
                    .map(|k| Value::Categorical(values[k].clone())),
                (_, AttributeKind::Boolean) => Some(Value::Boolean(slot[0] > 0.5)),
                (_, AttributeKind::Timestamp) => {
                    Some(Value::Timestamp(attr.decode_numeric(slot[0])))
                }
                _ => Some(Value::Numeric(attr.decode_numeric(slot[0]))),
            };
            if let Some(v) = value {
                out.insert(name, v);
            }
        }
        out
    }

    /// Column ranges of the one-hot groups within a row.
    pub fn one_hot_groups(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.attributes
            .iter()
            .filter(|a| matches!(a.schema.domain, Domain::Categorical(_)))
            .map(|a| a.offset..a.offset + a.width)
    }
}

/// Builds the dimension layout from a log.
pub fn build_schema(
    log: &EventLog,
    options: &EncodingOptions,
) -> Result<FeatureSchema, EncodeError> {
    if log.is_empty() {
        return Err(EncodeError::EmptyLog);
    }
    let mut attributes = Vec::new();
    let mut features = Vec::new();
    let mut push = |schema: AttributeSchema, scale: Option<MinMax>, source: Source| {
        let offset = features.len();
        match &schema.domain {
            Domain::Categorical(values) => {
                for v in values {
                    features.push(FeatureDescriptor {
                        attribute: schema.name.clone(),
                        value: Some(v.clone()),
                        kind: FeatureKind::OneHot,
                    });
                }
            }
            Domain::Boolean => features.push(FeatureDescriptor {
                attribute: schema.name.clone(),
                value: None,
                kind: FeatureKind::Boolean,
            }),
            Domain::Numeric { .. } | Domain::Timestamp { .. } => features.push(FeatureDescriptor {
                attribute: schema.name.clone(),
                value: None,
                kind: FeatureKind::Numeric,
            }),
        }
        let width = features.len() - offset;
        attributes.push(EncodedAttribute {
            schema,
            offset,
            width,
            scale,
            source,
        });
    };

    for attr in &log.schema {
        if options.exclude.contains(&attr.name) {
            continue;
        }
        let scale = match attr.domain {
            Domain::Categorical(ref values) => {
                if values.len() > options.cardinality_cap {
                    return Err(EncodeError::CardinalityCap {
                        attribute: attr.name.clone(),
                        count: values.len(),
                        cap: options.cardinality_cap,
                    });
                }
                None
            }
            Domain::Numeric { min, max } | Domain::Timestamp { min, max } => {
                options.scale_numeric.then_some(MinMax { min, max })
            }
            Domain::Boolean => None,
        };
        push(attr.clone(), scale, Source::Attribute);
    }

    let derived = |name: &str, values: &mut dyn Iterator<Item = f64>| {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        AttributeSchema {
            name: name.to_string(),
            kind: AttributeKind::Numeric,
            domain: Domain::Numeric { min, max },
        }
    };
    if options.time_from_start {
        let schema = derived(
            TIME_FROM_START,
            &mut log.traces.iter().flat_map(|t| {
                let start = t.events[0].timestamp;
                t.events.iter().map(move |e| e.timestamp - start)
            }),
        );
        let scale = scale_of(&schema, options);
        push(schema, scale, Source::TimeFromStart);
    }
    if options.time_since_previous {
        let schema = derived(
            TIME_SINCE_PREVIOUS,
            &mut log.traces.iter().flat_map(|t| {
                std::iter::once(0.0)
                    .chain(t.events.windows(2).map(|w| w[1].timestamp - w[0].timestamp))
            }),
        );
        let scale = scale_of(&schema, options);
        push(schema, scale, Source::TimeSincePrevious);
    }

    Ok(FeatureSchema {
        features,
        attributes,
        options: options.clone(),
    })
}

fn scale_of(schema: &AttributeSchema, options: &EncodingOptions) -> Option<MinMax> {
    match schema.domain {
        Domain::Numeric { min, max } if options.scale_numeric => Some(MinMax { min, max }),
        _ => None,
    }
}

/// A prefix as a left-padded `max_len x width` matrix, stored row-major.
/// The flat buffer is the feature vector that attributions index into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedPrefix {
    pub data: Vec<f64>,
    pub width: usize,
    pub max_len: usize,
    /// Number of real (non-padding) events.
    pub len: usize,
}

impl EncodedPrefix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    /// Index of the first non-padding row.
    pub fn first_real_row(&self) -> usize {
        self.max_len - self.len
    }

    pub fn is_padding_index(&self, index: usize) -> bool {
        index / self.width < self.first_real_row()
    }

    /// Offset of flat `index` relative to the last event (0 = last, -1 =
    /// second-last, ...).
    pub fn timestep_offset(&self, index: usize) -> i64 {
        (index / self.width) as i64 - (self.max_len as i64 - 1)
    }

    /// Re-pads this prefix to a different `max_len`.
    pub fn repad(&self, max_len: usize) -> Result<EncodedPrefix, EncodeError> {
        if self.len > max_len {
            return Err(EncodeError::PrefixTooLong {
                len: self.len,
                max_len,
            });
        }
        let n = self.width;
        let mut data = vec![0.0; max_len * n];
        let real = &self.data[self.first_real_row() * n..];
        data[(max_len - self.len) * n..].copy_from_slice(real);
        Ok(EncodedPrefix {
            data,
            width: n,
            max_len,
            len: self.len,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    /// Two thirds of the traces for training, one third for testing, with a
    /// fifth of the training share held out for validation.
    fn default() -> Self {
        Self {
            train: 2.0 / 3.0 * 0.8,
            validation: 2.0 / 3.0 * 0.2,
            test: 1.0 / 3.0,
            seed: 42,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), EncodeError> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(EncodeError::InvalidSplit(
                "ratios must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EncodeError::InvalidSplit(format!(
                "ratios sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// Split of a trace as a pure function of `(seed, case_id)`.
    pub fn assign(&self, case_id: &str) -> Split {
        let u = unit_hash(self.seed, case_id);
        if u < self.train {
            Split::Train
        } else if u < self.train + self.validation {
            Split::Validation
        } else {
            Split::Test
        }
    }
}

/// Stable hash of `(seed, key)` mapped to [0, 1).
fn unit_hash(seed: u64, key: &str) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub x: EncodedPrefix,
    pub y: f64,
    pub case_id: String,
    pub prefix_len: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub split: SplitConfig,
    /// Fixed padding length; `None` uses the 95th percentile of training
    /// trace lengths.
    pub max_len: Option<usize>,
    pub min_prefix_len: usize,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            split: SplitConfig::default(),
            max_len: None,
            min_prefix_len: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub labeler: KpiLabeler,
    pub max_len: usize,
    pub items: Vec<DatasetItem>,
    /// `(case_id, reason)` for traces the labeler rejected.
    pub skipped: Vec<(String, String)>,
}

/// Nearest-rank percentile of trace lengths.
pub fn length_percentile(lengths: &[usize], q: f64) -> usize {
    if lengths.is_empty() {
        return 1;
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1].max(1)
}

pub fn build_dataset(
    log: &EventLog,
    labeler: &KpiLabeler,
    schema: &FeatureSchema,
    options: &DatasetOptions,
) -> Result<Dataset, EncodeError> {
    options.split.validate()?;
    let splits: Vec<Split> = log
        .traces
        .iter()
        .map(|t| options.split.assign(&t.case_id))
        .collect();
    let max_len = options.max_len.unwrap_or_else(|| {
        let train: Vec<usize> = log
            .traces
            .iter()
            .zip(&splits)
            .filter(|(_, s)| **s == Split::Train)
            .map(|(t, _)| t.len())
            .collect();
        if train.is_empty() {
            length_percentile(
                &log.traces.iter().map(|t| t.len()).collect::<Vec<_>>(),
                0.95,
            )
        } else {
            length_percentile(&train, 0.95)
        }
    });

    let mut items = Vec::new();
    let mut skipped = Vec::new();
    for (trace, split) in log.traces.iter().zip(splits) {
        let targets = match labeler.label_all(trace) {
            Ok(t) => t,
            Err(e) => {
                skipped.push((trace.case_id.clone(), e.to_string()));
                continue;
            }
        };
        for i in options.min_prefix_len.max(1)..=trace.len() {
            items.push(DatasetItem {
                x: schema.encode_tail(&trace.events[..i], max_len),
                y: targets[i - 1],
                case_id: trace.case_id.clone(),
                prefix_len: i,
                split,
            });
        }
    }
    if !skipped.is_empty() {
        warn!("{} traces skipped by the labeler", skipped.len());
    }
    Ok(Dataset {
        schema: schema.clone(),
        labeler: labeler.clone(),
        max_len,
        items,
        skipped,
    })
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&DatasetItem> {
        self.items.iter().filter(|i| i.split == split).collect()
    }

    /// Median raw value of each numeric attribute over the training events.
    ///
    /// Each event of a training trace is the last row of exactly one prefix,
    /// so last rows enumerate the events once.
    pub fn training_medians(&self) -> BTreeMap<String, f64> {
        let n = self.schema.width();
        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for item in self.items.iter().filter(|i| i.split == Split::Train) {
            let row = item.x.row(self.max_len - 1);
            for attr in &self.schema.attributes {
                if matches!(attr.schema.domain, Domain::Categorical(_)) {
                    continue;
                }
                debug_assert!(attr.offset < n);
                values
                    .entry(attr.schema.name.clone())
                    .or_default()
                    .push(attr.decode_numeric(row[attr.offset]));
            }
        }
        values
            .into_iter()
            .map(|(k, mut v)| {
                v.sort_by(f64::total_cmp);
                let mid = v.len() / 2;
                let median = if v.len() % 2 == 1 {
                    v[mid]
                } else {
                    (v[mid - 1] + v[mid]) / 2.0
                };
                (k, median)
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EncodeError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(DATASET_MAGIC)?;
        file.write_all(&self.schema.fingerprint().0)?;
        bincode::serialize_into(&mut file, self)?;
        file.flush()?;
        Ok(())
    }

    /// Loads a cache file. When `expected` is given, the embedded schema
    /// fingerprint must match it.
    pub fn load(
        path: impl AsRef<Path>,
        expected: Option<Fingerprint>,
    ) -> Result<Dataset, EncodeError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        file.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(EncodeError::BadHeader);
        }
        let mut fp = [0u8; 32];
        file.read_exact(&mut fp)?;
        let header = Fingerprint(fp);
        if let Some(expected) = expected {
            if expected != header {
                return Err(EncodeError::FingerprintMismatch {
                    expected,
                    found: header,
                });
            }
        }
        let dataset: Dataset = bincode::deserialize_from(&mut file)?;
        let actual = dataset.schema.fingerprint();
        if actual != header {
            return Err(EncodeError::FingerprintMismatch {
                expected: header,
                found: actual,
            });
        }
        Ok(dataset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::{Trace, ACTIVITY};

    fn ev(act: &str, t: f64, role: &str, amount: f64) -> Event {
        Event::new(act, t)
            .with("role", Value::Categorical(role.into()))
            .with("amount", Value::Numeric(amount))
    }

    fn log() -> EventLog {
        EventLog::from_traces(vec![Trace {
            case_id: "c".into(),
            events: vec![
                ev("A", 0.0, "a", 42.0),
                ev("B", 10.0, "b", 7.0),
                ev("A", 30.0, "c", 1.0),
            ],
        }])
    }

    fn raw_options() -> EncodingOptions {
        EncodingOptions {
            scale_numeric: false,
            time_from_start: false,
            exclude: vec![ACTIVITY.into()],
            ..EncodingOptions::default()
        }
    }

    #[test]
    fn width_counts_one_hot_and_numeric() {
        let schema = build_schema(&log(), &raw_options()).unwrap();
        assert_eq!(schema.width(), 4);
        let labels: Vec<_> = schema
            .features
            .iter()
            .map(FeatureDescriptor::label)
            .collect();
        assert_eq!(labels, ["amount", "role=a", "role=b", "role=c"]);
    }

    #[test]
    fn one_hot_fragment_and_raw_numeric() {
        let schema = build_schema(&log(), &raw_options()).unwrap();
        let mut row = vec![0.0; 4];
        schema.encode_event(&ev("A", 0.0, "b", 42.0), 0.0, None, &mut row);
        assert_eq!(row, [42.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn left_padding_places_last_event_in_last_row() {
        let schema = build_schema(&log(), &raw_options()).unwrap();
        let l = log();
        let p = schema.encode_prefix(&l.traces[0].events[..2], 4).unwrap();
        assert_eq!(p.len, 2);
        assert!(p.row(0).iter().chain(p.row(1)).all(|v| *v == 0.0));
        assert_eq!(p.row(2), [42.0, 1.0, 0.0, 0.0]);
        assert_eq!(p.row(3), [7.0, 0.0, 1.0, 0.0]);
        assert_eq!(p.timestep_offset(3 * 4), 0);
        assert_eq!(p.timestep_offset(2 * 4 + 1), -1);
        assert!(p.is_padding_index(7));
        assert!(!p.is_padding_index(8));
    }

    #[test]
    fn too_long_prefix_is_rejected() {
        let schema = build_schema(&log(), &raw_options()).unwrap();
        let l = log();
        let err = schema.encode_prefix(&l.traces[0].events, 2).unwrap_err();
        assert!(matches!(
            err,
            EncodeError::PrefixTooLong { len: 3, max_len: 2 }
        ));
        let tail = schema.encode_tail(&l.traces[0].events, 2);
        assert_eq!(tail.len, 2);
        assert_eq!(tail.row(1)[0], 1.0);
    }

    #[test]
    fn missing_and_unseen_categoricals() {
        let mut l = log();
        l.traces[0].events[1].assignments.remove("role");
        let l = EventLog::from_traces(l.traces);
        let schema = build_schema(&l, &raw_options()).unwrap();
        let role = schema.attribute("role").unwrap();
        // "b" only occurred on the stripped event; the sentinel sorts last.
        assert_eq!(role.width, 3);
        let mut row = vec![0.0; schema.width()];
        schema.encode_event(&Event::new("A", 0.0), 0.0, None, &mut row);
        let group = &row[role.offset..role.offset + role.width];
        assert_eq!(group, [0.0, 0.0, 1.0]);

        let unseen = schema.encode_event(&ev("A", 0.0, "zzz", 1.0), 0.0, None, &mut row);
        assert_eq!(unseen, 1);
        assert!(row[role.offset..role.offset + role.width]
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn scaling_and_derived_time() {
        let schema = build_schema(&log(), &EncodingOptions::default()).unwrap();
        let l = log();
        let p = schema.encode_prefix(&l.traces[0].events, 3).unwrap();
        let amount = schema.attribute("amount").unwrap();
        let tfs = schema.attribute(TIME_FROM_START).unwrap();
        assert!(tfs.is_derived());
        assert_eq!(p.row(0)[amount.offset], 1.0);
        assert_eq!(p.row(2)[amount.offset], 0.0);
        assert_eq!(p.row(1)[tfs.offset], 10.0 / 30.0);
        assert_eq!(p.row(2)[tfs.offset], 1.0);
        let decoded = schema.decode_row(p.row(1));
        assert_eq!(decoded["amount"], Value::Numeric(7.0));
        assert!(!decoded.contains_key(TIME_FROM_START));
    }

    #[test]
    fn cardinality_cap_is_enforced() {
        let opts = EncodingOptions {
            cardinality_cap: 2,
            ..raw_options()
        };
        let err = build_schema(&log(), &opts).unwrap_err();
        assert!(matches!(err, EncodeError::CardinalityCap { count: 3, .. }));
    }

    #[test]
    fn dataset_items_and_targets() {
        let traces = [2usize, 3, 4]
            .iter()
            .enumerate()
            .map(|(k, &len)| Trace {
                case_id: format!("t{k}"),
                events: (0..len)
                    .map(|i| ev("A", i as f64 * 5.0, "a", 1.0))
                    .collect(),
            })
            .collect();
        let l = EventLog::from_traces(traces);
        let schema = build_schema(&l, &EncodingOptions::default()).unwrap();
        let opts = DatasetOptions {
            max_len: Some(4),
            ..DatasetOptions::default()
        };
        let ds = build_dataset(&l, &KpiLabeler::RemainingTime, &schema, &opts).unwrap();
        assert_eq!(ds.items.len(), 9);
        for item in ds.items.iter().filter(|i| i.prefix_len == i.x.len) {
            let trace_len = l
                .traces
                .iter()
                .find(|t| t.case_id == item.case_id)
                .unwrap()
                .len();
            if item.prefix_len == trace_len {
                assert_eq!(item.y, 0.0);
            }
        }
        let again = build_dataset(&l, &KpiLabeler::RemainingTime, &schema, &opts).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn split_ratios_must_sum_to_one() {
        let bad = SplitConfig {
            train: 0.5,
            validation: 0.1,
            test: 0.1,
            seed: 1,
        };
        assert!(bad.validate().is_err());
        assert!(SplitConfig::default().validate().is_ok());
    }

    #[test]
    fn split_assignment_is_stable_and_roughly_proportional() {
        let cfg = SplitConfig::default();
        let mut counts = [0usize; 3];
        for k in 0..3000 {
            let id = format!("case-{k}");
            let s = cfg.assign(&id);
            assert_eq!(s, cfg.assign(&id));
            counts[s as usize] += 1;
        }
        assert!((counts[2] as f64 / 3000.0 - 1.0 / 3.0).abs() < 0.03);
        assert!((counts[1] as f64 / 3000.0 - 2.0 / 15.0).abs() < 0.03);
    }

    #[test]
    fn percentile_uses_nearest_rank() {
        let lengths: Vec<usize> = (1..=20).collect();
        assert_eq!(length_percentile(&lengths, 0.95), 19);
        assert_eq!(length_percentile(&[3], 0.95), 3);
        assert_eq!(length_percentile(&[], 0.95), 1);
    }

    #[test]
    fn repad_moves_rows() {
        let schema = build_schema(&log(), &raw_options()).unwrap();
        let l = log();
        let p = schema.encode_prefix(&l.traces[0].events[..2], 3).unwrap();
        let q = p.repad(5).unwrap();
        assert_eq!(q.row(4), p.row(2));
        assert_eq!(q.row(3), p.row(1));
        assert!(q.row(2).iter().all(|v| *v == 0.0));
        assert!(p.repad(1).is_err());
    }
}
