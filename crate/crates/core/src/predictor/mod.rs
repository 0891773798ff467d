//! Pluggable KPI predictors over encoded prefixes.
//!
//! Any type implementing [`Predictor`] can be explained. Three reference
//! models ship: a training-mean baseline, a linear/logistic model over the
//! flattened padded prefix, and a single-layer recurrent network.

pub mod linear;
pub mod metrics;
pub mod recurrent;

use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{DatasetItem, EncodedPrefix, FeatureSchema, Fingerprint};
use crate::event_log::{KpiLabeler, OutputDomain};

pub use linear::LinearModel;
pub use recurrent::{RecurrentConfig, RecurrentModel};

const MODEL_MAGIC: &[u8; 8] = b"SHMNMD01";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("cannot fit on an empty training set")]
    EmptyTraining,
    #[error("cannot evaluate on an empty test set")]
    EmptyTest,
    #[error("schema fingerprint mismatch: model expects {expected}, got {found}")]
    FingerprintMismatch {
        expected: Fingerprint,
        found: Fingerprint,
    },
    #[error("prefix shape {found_width}x{found_len} incompatible with model width {width}, max length {max_len}")]
    ShapeMismatch {
        width: usize,
        max_len: usize,
        found_width: usize,
        found_len: usize,
    },
    #[error("not a model file (bad header)")]
    BadHeader,
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialize(#[from] bincode::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    /// Output is the probability of the positive class.
    Binary,
}

impl Task {
    pub fn for_kpi(labeler: &KpiLabeler) -> Task {
        match labeler.output_domain() {
            OutputDomain::Boolean => Task::Binary,
            OutputDomain::Seconds | OutputDomain::Numeric => Task::Regression,
        }
    }
}

/// A predictor that is an affine function of the flattened prefix vector.
#[derive(Debug, Clone, Copy)]
pub struct AdditiveForm<'a> {
    pub weights: &'a [f64],
    pub bias: f64,
}

/// A fitted KPI predictor.
///
/// `chi` is the flattened left-padded prefix and `len` the number of real
/// rows at its end. Implementations must be deterministic.
pub trait Predictor: Send + Sync {
    fn task(&self) -> Task;

    fn predict_raw(&self, chi: &[f64], len: usize) -> f64;

    fn predict(&self, x: &EncodedPrefix) -> f64 {
        self.predict_raw(&x.data, x.len)
    }

    /// Exposes the weights when the output is affine in `chi`, which lets
    /// attribution evaluate coalitions without replaying the background.
    fn additive_form(&self) -> Option<AdditiveForm<'_>> {
        None
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn task(&self) -> Task {
        (**self).task()
    }
    fn predict_raw(&self, chi: &[f64], len: usize) -> f64 {
        (**self).predict_raw(chi, len)
    }
    fn additive_form(&self) -> Option<AdditiveForm<'_>> {
        (**self).additive_form()
    }
}

/// Which reference model to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Mean,
    Linear { l2: f64 },
    Recurrent(RecurrentConfig),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::Linear { .. } => "linear",
            Self::Recurrent(_) => "recurrent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Constant(f64),
    Linear(LinearModel),
    Recurrent(RecurrentModel),
}

/// A fitted reference model bound to the schema it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub fingerprint: Fingerprint,
    pub task: Task,
    pub width: usize,
    pub max_len: usize,
    pub spec: ModelSpec,
    pub model: Model,
}

impl Predictor for FittedModel {
    fn task(&self) -> Task {
        self.task
    }

    fn predict_raw(&self, chi: &[f64], len: usize) -> f64 {
        match &self.model {
            Model::Constant(c) => *c,
            Model::Linear(m) => m.predict(chi),
            Model::Recurrent(m) => m.predict(chi, len),
        }
    }

    fn additive_form(&self) -> Option<AdditiveForm<'_>> {
        match &self.model {
            Model::Linear(m) if !m.logistic => Some(AdditiveForm {
                weights: &m.weights,
                bias: m.bias,
            }),
            _ => None,
        }
    }
}

/// Fits `spec` on the training items. Validation items are only used for
/// early stopping. Constant targets yield a constant model.
pub fn fit(
    spec: &ModelSpec,
    schema: &FeatureSchema,
    task: Task,
    train: &[&DatasetItem],
    validation: &[&DatasetItem],
    seed: u64,
) -> Result<FittedModel, PredictError> {
    let first = train.first().ok_or(PredictError::EmptyTraining)?;
    let width = schema.width();
    let max_len = first.x.max_len;
    for item in train.iter().chain(validation) {
        check_shape(width, max_len, &item.x)?;
    }
    let targets: Vec<f64> = train.iter().map(|i| i.y).collect();
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let degenerate = targets.iter().all(|y| *y == targets[0]);
    if degenerate && *spec != ModelSpec::Mean {
        warn!(
            "all training targets equal {}; fitting a constant predictor",
            targets[0]
        );
    }

    let model = match spec {
        _ if degenerate => Model::Constant(targets[0]),
        ModelSpec::Mean => Model::Constant(mean),
        ModelSpec::Linear { l2 } => {
            let rows: Vec<&[f64]> = train.iter().map(|i| i.x.data.as_slice()).collect();
            Model::Linear(match task {
                Task::Regression => linear::fit_least_squares(&rows, &targets, *l2),
                Task::Binary => linear::fit_logistic(&rows, &targets, l2.max(1e-6), 100),
            })
        }
        ModelSpec::Recurrent(config) => {
            fn sample<'a>(i: &&'a DatasetItem, width: usize) -> recurrent::Sample<'a> {
                recurrent::Sample {
                    rows: &i.x.data[i.x.first_real_row() * width..],
                    target: i.y,
                }
            }
            let tr: Vec<_> = train.iter().map(|i| sample(i, width)).collect();
            let va: Vec<_> = validation.iter().map(|i| sample(i, width)).collect();
            Model::Recurrent(recurrent::fit_recurrent(
                config,
                width,
                task == Task::Binary,
                &tr,
                &va,
                seed,
            ))
        }
    };
    Ok(FittedModel {
        fingerprint: schema.fingerprint(),
        task,
        width,
        max_len,
        spec: spec.clone(),
        model,
    })
}

fn check_shape(width: usize, max_len: usize, x: &EncodedPrefix) -> Result<(), PredictError> {
    if x.width != width || x.max_len != max_len || x.data.len() != width * max_len {
        return Err(PredictError::ShapeMismatch {
            width,
            max_len,
            found_width: x.width,
            found_len: x.max_len,
        });
    }
    Ok(())
}

impl FittedModel {
    pub fn is_constant(&self) -> bool {
        matches!(self.model, Model::Constant(_))
    }

    /// Order-preserving batch prediction. Prefixes padded to a different
    /// length are re-padded when they fit.
    pub fn predict_batch(
        &self,
        schema: &FeatureSchema,
        prefixes: &[EncodedPrefix],
    ) -> Result<Vec<f64>, PredictError> {
        let found = schema.fingerprint();
        if found != self.fingerprint {
            return Err(PredictError::FingerprintMismatch {
                expected: self.fingerprint,
                found,
            });
        }
        prefixes
            .iter()
            .map(|x| {
                if x.max_len != self.max_len && x.width == self.width {
                    let repadded =
                        x.repad(self.max_len)
                            .map_err(|_| PredictError::ShapeMismatch {
                                width: self.width,
                                max_len: self.max_len,
                                found_width: x.width,
                                found_len: x.max_len,
                            })?;
                    return Ok(self.predict(&repadded));
                }
                check_shape(self.width, self.max_len, x)?;
                Ok(self.predict(x))
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PredictError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(MODEL_MAGIC)?;
        file.write_all(&MODEL_VERSION.to_le_bytes())?;
        file.write_all(&self.fingerprint.0)?;
        bincode::serialize_into(&mut file, self)?;
        file.flush()?;
        Ok(())
    }

    /// Loads a model file; `expected` pins the schema fingerprint.
    pub fn load(
        path: impl AsRef<Path>,
        expected: Option<Fingerprint>,
    ) -> Result<FittedModel, PredictError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        file.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(PredictError::BadHeader);
        }
        let mut version = [0u8; 4];
        file.read_exact(&mut version)?;
        let version = u32::from_le_bytes(version);
        if version != MODEL_VERSION {
            return Err(PredictError::Version(version));
        }
        let mut fp = [0u8; 32];
        file.read_exact(&mut fp)?;
        let header = Fingerprint(fp);
        if let Some(expected) = expected {
            if expected != header {
                return Err(PredictError::FingerprintMismatch {
                    expected,
                    found: header,
                });
            }
        }
        let model: FittedModel = bincode::deserialize_from(&mut file)?;
        if model.fingerprint != header {
            return Err(PredictError::FingerprintMismatch {
                expected: header,
                found: model.fingerprint,
            });
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: Task,
    pub test_size: usize,
    pub mae: Option<f64>,
    pub f1: Option<f64>,
    pub auroc: Option<f64>,
    pub apr: Option<f64>,
    pub positive_rate: Option<f64>,
}

impl EvaluationReport {
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "absent".to_string(), |v| format!("{v:.6}"));
        let mut out = format!("task: {:?}\ntest_size: {}\n", self.task, self.test_size);
        match self.task {
            Task::Regression => out.push_str(&format!("mae: {}\n", fmt(self.mae))),
            Task::Binary => {
                out.push_str(&format!("f1: {}\n", fmt(self.f1)));
                out.push_str(&format!("auroc: {}\n", fmt(self.auroc)));
                out.push_str(&format!("apr: {}\n", fmt(self.apr)));
                out.push_str(&format!("positive_rate: {}\n", fmt(self.positive_rate)));
            }
        }
        out
    }
}

/// Scores a predictor on test items. MAE is reported for every task;
/// F1 at threshold 0.5, AUROC and APR for binary tasks.
pub fn evaluate<P: Predictor + ?Sized>(
    predictor: &P,
    test: &[&DatasetItem],
) -> Result<EvaluationReport, PredictError> {
    if test.is_empty() {
        return Err(PredictError::EmptyTest);
    }
    let targets: Vec<f64> = test.iter().map(|i| i.y).collect();
    let scores: Vec<f64> = test.iter().map(|i| predictor.predict(&i.x)).collect();
    let mae = metrics::mae(&targets, &scores);
    let task = predictor.task();
    let mut report = EvaluationReport {
        task,
        test_size: test.len(),
        mae,
        f1: None,
        auroc: None,
        apr: None,
        positive_rate: None,
    };
    if task == Task::Binary {
        let labels: Vec<bool> = targets.iter().map(|y| *y >= 0.5).collect();
        report.f1 = metrics::f1_score(&labels, &scores, 0.5);
        report.auroc = metrics::auroc(&labels, &scores);
        report.apr = metrics::average_precision(&labels, &scores);
        report.positive_rate =
            Some(labels.iter().filter(|&&b| b).count() as f64 / labels.len() as f64);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{build_schema, EncodingOptions, Split};
    use crate::event_log::{Event, EventLog, Trace, Value};

    fn schema_and_items(targets: &[f64]) -> (FeatureSchema, Vec<DatasetItem>) {
        let log = EventLog::from_traces(vec![Trace {
            case_id: "c".into(),
            events: vec![
                Event::new("A", 0.0).with("x", Value::Numeric(0.0)),
                Event::new("A", 1.0).with("x", Value::Numeric(1.0)),
            ],
        }]);
        let opts = EncodingOptions {
            scale_numeric: false,
            time_from_start: false,
            ..EncodingOptions::default()
        };
        let schema = build_schema(&log, &opts).unwrap();
        let items = targets
            .iter()
            .enumerate()
            .map(|(k, y)| {
                let ev = Event::new("A", 0.0).with("x", Value::Numeric(k as f64));
                DatasetItem {
                    x: schema.encode_prefix(&[ev], 2).unwrap(),
                    y: *y,
                    case_id: format!("c{k}"),
                    prefix_len: 1,
                    split: Split::Train,
                }
            })
            .collect();
        (schema, items)
    }

    #[test]
    fn mean_baseline_predicts_training_mean() {
        let (schema, items) = schema_and_items(&[2.0, 4.0]);
        let refs: Vec<_> = items.iter().collect();
        let m = fit(&ModelSpec::Mean, &schema, Task::Regression, &refs, &[], 0).unwrap();
        let preds = m
            .predict_batch(
                &schema,
                &items.iter().map(|i| i.x.clone()).collect::<Vec<_>>(),
            )
            .unwrap();
        assert_eq!(preds, vec![3.0, 3.0]);
    }

    #[test]
    fn constant_targets_give_zero_training_mae() {
        let (schema, items) = schema_and_items(&[5.0, 5.0, 5.0]);
        let refs: Vec<_> = items.iter().collect();
        let m = fit(
            &ModelSpec::Linear { l2: 0.0 },
            &schema,
            Task::Regression,
            &refs,
            &[],
            0,
        )
        .unwrap();
        assert!(m.is_constant());
        assert_eq!(evaluate(&m, &refs).unwrap().mae, Some(0.0));
    }

    #[test]
    fn linear_recovers_slope_on_last_feature() {
        let (schema, mut items) = schema_and_items(&[0.0; 6]);
        let x_col = schema.attribute("x").unwrap().offset + schema.width();
        for item in &mut items {
            item.y = 3.0 * item.x.data[x_col];
        }
        let refs: Vec<_> = items.iter().collect();
        let m = fit(
            &ModelSpec::Linear { l2: 0.0 },
            &schema,
            Task::Regression,
            &refs,
            &[],
            0,
        )
        .unwrap();
        let Model::Linear(lin) = &m.model else {
            panic!("expected linear")
        };
        assert!((lin.weights[x_col] - 3.0).abs() < 1e-6);
        assert!(m.additive_form().is_some());
    }

    #[test]
    fn batch_rejects_foreign_schema() {
        let (schema, items) = schema_and_items(&[1.0, 2.0]);
        let refs: Vec<_> = items.iter().collect();
        let m = fit(&ModelSpec::Mean, &schema, Task::Regression, &refs, &[], 0).unwrap();
        let mut other = schema.clone();
        other.options.cardinality_cap = 7;
        let err = m.predict_batch(&other, &[items[0].x.clone()]).unwrap_err();
        assert!(matches!(err, PredictError::FingerprintMismatch { .. }));
    }

    #[test]
    fn save_load_round_trip_and_fingerprint_guard() {
        let (schema, items) = schema_and_items(&[1.0, 2.0, 4.0]);
        let refs: Vec<_> = items.iter().collect();
        let m = fit(
            &ModelSpec::Linear { l2: 0.0 },
            &schema,
            Task::Regression,
            &refs,
            &[],
            0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        m.save(&path).unwrap();
        let back = FittedModel::load(&path, Some(schema.fingerprint())).unwrap();
        assert_eq!(back, m);
        let err = FittedModel::load(&path, Some(Fingerprint([0; 32]))).unwrap_err();
        assert!(matches!(err, PredictError::FingerprintMismatch { .. }));
    }

    #[test]
    fn evaluate_binary_reports_absent_auc_for_one_class() {
        let (schema, items) = schema_and_items(&[1.0, 1.0]);
        let refs: Vec<_> = items.iter().collect();
        let m = fit(&ModelSpec::Mean, &schema, Task::Binary, &refs, &[], 0).unwrap();
        let r = evaluate(&m, &refs).unwrap();
        assert_eq!(r.auroc, None);
        assert_eq!(r.apr, None);
        assert_eq!(r.f1, Some(1.0));
        assert!(evaluate(&m, &[]).is_err());
    }
}
