//! Shapley-value explanations for predictive process monitoring.
//!
//! The pipeline runs from a CSV event log ([`event_log`]) through prefix
//! encoding ([`encoding`]) and a KPI predictor ([`predictor`]) to Shapley
//! attributions ([`shapley`]), filtered explanation records ([`explainer`])
//! and aggregated reports ([`reporting`]). [`synth`] generates logs with
//! planted effects for end-to-end checks.

pub mod encoding;
pub mod event_log;
pub mod explainer;
pub mod predictor;
pub mod reporting;
pub mod shapley;
pub mod synth;

pub use encoding::{
    build_dataset, build_schema, Dataset, DatasetOptions, EncodedPrefix, EncodingOptions,
    FeatureSchema, Fingerprint, Split, SplitConfig,
};
pub use event_log::{
    ingest_csv, ingest_csv_with_schema, AttributeKind, AttributeSchema, CsvMapping, Domain, Event,
    EventLog, KpiLabeler, OutputDomain, Trace, Value, ACTIVITY, MISSING,
};
pub use explainer::{explain_attribution, filter_significant, ExplanationRecord, Relation, Sign};
pub use predictor::{evaluate, fit, EvaluationReport, FittedModel, ModelSpec, Predictor, Task};
pub use reporting::{aggregate_heatmap, HeatmapMatrix, OnlineCase, ReportOptions};
pub use shapley::{explain, Estimator, ShapleyAttribution, ShapleyOptions, ValueFunction};
pub use synth::{generate, Effect, GroundTruth, Rule, SynthSpec};
