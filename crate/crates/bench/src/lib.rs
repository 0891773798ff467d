//! Shared fixtures for the benchmarks.

use shapmon::encoding::{
    build_dataset, build_schema, Dataset, DatasetOptions, EncodedPrefix, EncodingOptions, Split,
};
use shapmon::event_log::{EventLog, KpiLabeler};
use shapmon::predictor::{fit, FittedModel, ModelSpec, Task};
use shapmon::shapley::sample_background;
use shapmon::synth::{generate, Effect, Rule, SynthSpec};

pub struct Fixture {
    pub log: EventLog,
    pub dataset: Dataset,
    pub model: FittedModel,
    pub background: Vec<EncodedPrefix>,
}

/// Synth log with one delay rule and a model trained on it.
pub fn fixture(traces: usize, model: ModelSpec) -> Fixture {
    let spec = SynthSpec {
        n_traces: traces,
        noise: 300.0,
        rules: vec![Rule {
            attribute: "TYPE".into(),
            value: "slow".into(),
            effect: Effect::Delay(3600.0),
        }],
        ..SynthSpec::default()
    };
    let (log, _) = generate(&spec).expect("valid spec");
    let schema = build_schema(&log, &EncodingOptions::default()).expect("schema");
    let dataset = build_dataset(
        &log,
        &KpiLabeler::RemainingTime,
        &schema,
        &DatasetOptions::default(),
    )
    .expect("dataset");
    let train = dataset.split(Split::Train);
    let model = fit(
        &model,
        &schema,
        Task::Regression,
        &train,
        &dataset.split(Split::Validation),
        7,
    )
    .expect("fit");
    let pool: Vec<&EncodedPrefix> = train.iter().map(|i| &i.x).collect();
    let background = sample_background(&pool, 100, 7);
    Fixture {
        log,
        dataset,
        model,
        background,
    }
}

impl Fixture {
    /// A test prefix with exactly `len` real events, if there is one.
    pub fn instance(&self, len: usize) -> &EncodedPrefix {
        &self
            .dataset
            .split(Split::Test)
            .into_iter()
            .find(|i| i.prefix_len == len)
            .expect("test prefix of requested length")
            .x
    }
}
