//! Turns an attribution into explanation records: significance filtering,
//! mapping of one-hot and numeric features back to attribute conditions,
//! and timestep offsets relative to the last event.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{EncodedPrefix, FeatureKind, FeatureSchema};
use crate::event_log::{Domain, Value};
use crate::shapley::{csv_field, ShapleyAttribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("index {index} lies in a padding row")]
    PaddingIndex { index: usize },
    #[error("attribution has {found} values, instance has {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    Equals,
    NotEquals,
    Numeric,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Equals => "equals",
            Self::NotEquals => "not_equals",
            Self::Numeric => "numeric",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub attribute: String,
    pub relation: Relation,
    /// The categorical value; `None` for numeric records.
    pub value: Option<String>,
    /// 0 for the last event, -1 for the one before, ...
    pub timestep_offset: i64,
    pub weight: f64,
    /// Raw (unscaled) instance value of a numeric record.
    pub numeric_value: Option<f64>,
}

impl ExplanationRecord {
    pub fn sign(&self) -> Sign {
        if self.weight > 0.0 {
            Sign::Increasing
        } else {
            Sign::Decreasing
        }
    }
}

/// The band `[μ - δξ, μ + δξ]` of attributions treated as insignificant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterInterval {
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    pub delta: f64,
}

impl FilterInterval {
    pub fn lower(&self) -> f64 {
        self.mean - self.delta * self.std_dev
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.delta * self.std_dev
    }

    /// Closed-interval membership; endpoints count as inside.
    pub fn contains(&self, psi: f64) -> bool {
        psi >= self.lower() && psi <= self.upper()
    }
}

/// Interval statistics over the active attributions. `None` when nothing
/// is active.
pub fn filter_interval(attribution: &ShapleyAttribution, delta: f64) -> Option<FilterInterval> {
    let values: Vec<f64> = attribution.active_values().map(|(_, v)| v).collect();
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(FilterInterval {
        mean,
        std_dev: var.sqrt(),
        delta,
    })
}

/// Active `(index, ψ)` pairs lying strictly outside the filter interval.
pub fn filter_significant(attribution: &ShapleyAttribution, delta: f64) -> Vec<(usize, f64)> {
    assert!(delta >= 0.0, "delta must be non-negative");
    let Some(interval) = filter_interval(attribution, delta) else {
        return Vec::new();
    };
    attribution
        .active_values()
        .filter(|(_, psi)| !interval.contains(*psi))
        .collect()
}

/// Maps significant features to explanation records.
pub fn to_explanations(
    significant: &[(usize, f64)],
    schema: &FeatureSchema,
    instance: &EncodedPrefix,
) -> Result<Vec<ExplanationRecord>, ExplainError> {
    let n = schema.width();
    let mut out = Vec::with_capacity(significant.len());
    for &(index, weight) in significant {
        if index >= instance.data.len() {
            return Err(ExplainError::LengthMismatch {
                expected: instance.data.len(),
                found: index + 1,
            });
        }
        if instance.is_padding_index(index) {
            return Err(ExplainError::PaddingIndex { index });
        }
        if weight == 0.0 {
            continue;
        }
        let column = index % n;
        let feature = &schema.features[column];
        let x = instance.data[index];
        let (relation, value, numeric_value) = match feature.kind {
            FeatureKind::OneHot => {
                let rel = if x == 1.0 {
                    Relation::Equals
                } else {
                    Relation::NotEquals
                };
                (rel, feature.value.clone(), None)
            }
            FeatureKind::Numeric | FeatureKind::Boolean => {
                let attr = schema.attribute_of(column);
                (Relation::Numeric, None, Some(attr.decode_numeric(x)))
            }
        };
        out.push(ExplanationRecord {
            attribute: feature.attribute.clone(),
            relation,
            value,
            timestep_offset: instance.timestep_offset(index),
            weight,
            numeric_value,
        });
    }
    Ok(out)
}

/// Filtering followed by mapping, the usual path from attribution to records.
pub fn explain_attribution(
    attribution: &ShapleyAttribution,
    delta: f64,
    schema: &FeatureSchema,
    instance: &EncodedPrefix,
) -> Result<Vec<ExplanationRecord>, ExplainError> {
    if attribution.values.len() != instance.data.len() {
        return Err(ExplainError::LengthMismatch {
            expected: instance.data.len(),
            found: attribution.values.len(),
        });
    }
    to_explanations(&filter_significant(attribution, delta), schema, instance)
}

/// Evaluates the explanation function K(a, v, i) over a record list.
///
/// An `Equals` record matches only its own value, a `NotEquals` record
/// matches every other value of the attribute's domain, and a `Numeric`
/// record matches any value. Values outside the attribute's domain give 0.
/// Matching weights are summed.
pub fn k_lookup(
    records: &[ExplanationRecord],
    schema: &FeatureSchema,
    attribute: &str,
    value: &Value,
    offset: i64,
) -> f64 {
    let Some(attr) = schema.attribute(attribute) else {
        return 0.0;
    };
    let in_domain = match (&attr.schema.domain, value) {
        (Domain::Numeric { min, max }, Value::Numeric(v)) => *v >= *min && *v <= *max,
        _ => attr.schema.contains(value),
    };
    if !in_domain {
        return 0.0;
    }
    let query = value.as_str();
    records
        .iter()
        .filter(|r| r.attribute == attribute && r.timestep_offset == offset)
        .filter(|r| match r.relation {
            Relation::Equals => query.is_some() && r.value.as_deref() == query,
            Relation::NotEquals => query.is_some() && r.value.as_deref() != query,
            Relation::Numeric => true,
        })
        .map(|r| r.weight)
        .sum()
}

/// CSV with columns `case_id,attribute,relation,value,timestep_offset,weight`.
pub fn records_to_csv<'a, I>(rows: I) -> String
where
    I: IntoIterator<Item = (&'a str, &'a [ExplanationRecord])>,
{
    let mut out = String::from("case_id,attribute,relation,value,timestep_offset,weight\n");
    for (case_id, records) in rows {
        for r in records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_field(case_id),
                csv_field(&r.attribute),
                r.relation,
                csv_field(r.value.as_deref().unwrap_or("")),
                r.timestep_offset,
                r.weight
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{build_schema, EncodingOptions};
    use crate::event_log::{Event, EventLog, Trace, ACTIVITY};
    use crate::shapley::Estimator;

    fn attribution(values: Vec<f64>) -> ShapleyAttribution {
        let active = (0..values.len()).collect();
        ShapleyAttribution {
            values,
            base_value: 0.0,
            prediction: 0.0,
            estimator: Estimator::Exact,
            std_error: None,
            active,
        }
    }

    #[test]
    fn interval_by_hand() {
        let a = attribution(vec![1.0, 2.0, 3.0, 10.0]);
        let i = filter_interval(&a, 1.0).unwrap();
        assert_eq!(i.mean, 4.0);
        assert!((i.std_dev - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((i.lower() - 0.4645).abs() < 1e-4);
        assert!((i.upper() - 7.5355).abs() < 1e-4);
        assert_eq!(filter_significant(&a, 1.0), vec![(3, 10.0)]);
    }

    #[test]
    fn zero_delta_keeps_everything_off_the_mean() {
        let a = attribution(vec![1.0, 4.0, 7.0]);
        assert_eq!(filter_significant(&a, 0.0), vec![(0, 1.0), (2, 7.0)]);
    }

    #[test]
    fn equal_values_are_never_significant() {
        let a = attribution(vec![2.5; 5]);
        assert!(filter_significant(&a, 0.5).is_empty());
    }

    #[test]
    fn inactive_entries_are_ignored() {
        let mut a = attribution(vec![0.0, 0.0, 1.0, 2.0, 3.0, 10.0]);
        a.active = vec![2, 3, 4, 5];
        assert_eq!(filter_significant(&a, 1.0), vec![(5, 10.0)]);
    }

    #[test]
    fn endpoints_are_filtered_out() {
        // mean 0, std 1 -> interval [-1, 1] with delta 1
        let a = attribution(vec![-1.0, 1.0]);
        assert!(filter_significant(&a, 1.0).is_empty());
    }

    fn bank_schema() -> (FeatureSchema, EventLog) {
        let ev = |role: &str, ct: &str, amount: f64, t: f64| {
            Event::new("Close", t)
                .with("ROLE", Value::Categorical(role.into()))
                .with("CLOSURE_TYPE", Value::Categorical(ct.into()))
                .with("AMOUNT", Value::Numeric(amount))
        };
        let log = EventLog::from_traces(vec![Trace {
            case_id: "c".into(),
            events: vec![
                ev("DIRECTOR", "Porting", 10.0, 0.0),
                ev("BACK-OFFICE", "Inheritance", 20.0, 1.0),
                ev("CLERK", "Bank Recess", 30.0, 2.0),
            ],
        }]);
        let opts = EncodingOptions {
            time_from_start: false,
            exclude: vec![ACTIVITY.into()],
            ..EncodingOptions::default()
        };
        (build_schema(&log, &opts).unwrap(), log)
    }

    #[test]
    fn one_hot_and_numeric_mapping() {
        let (schema, log) = bank_schema();
        let x = schema.encode_prefix(&log.traces[0].events[..2], 3).unwrap();
        let n = schema.width();
        let role = schema.attribute("ROLE").unwrap();
        let ct = schema.attribute("CLOSURE_TYPE").unwrap();
        let amount = schema.attribute("AMOUNT").unwrap();
        let last = 2 * n;
        let back_office = last + role.offset; // sorted: BACK-OFFICE, CLERK, DIRECTOR
        let inheritance = last + ct.offset + 1; // Bank Recess, Inheritance, Porting
        let amount_prev = n + amount.offset;
        assert_eq!(x.data[back_office], 1.0);

        let records = to_explanations(
            &[(back_office, -2.0), (inheritance, -1.5), (amount_prev, 2.5)],
            &schema,
            &x,
        )
        .unwrap();
        assert_eq!(records[0].relation, Relation::Equals);
        assert_eq!(records[0].value.as_deref(), Some("BACK-OFFICE"));
        assert_eq!(records[0].timestep_offset, 0);
        assert_eq!(records[0].sign(), Sign::Decreasing);
        // instance has CLOSURE_TYPE=Inheritance at the last event, so flip to a
        // value it does not have
        assert_eq!(records[1].relation, Relation::Equals);
        let porting = last + ct.offset + 2;
        let r = to_explanations(&[(porting, -3.0)], &schema, &x).unwrap();
        assert_eq!(r[0].relation, Relation::NotEquals);
        assert_eq!(r[0].value.as_deref(), Some("Porting"));
        assert_eq!(records[2].relation, Relation::Numeric);
        assert_eq!(records[2].timestep_offset, -1);
        assert_eq!(records[2].numeric_value, Some(10.0));
        assert_eq!(records[2].weight, 2.5);
    }

    #[test]
    fn padding_index_is_rejected() {
        let (schema, log) = bank_schema();
        let x = schema.encode_prefix(&log.traces[0].events[..1], 3).unwrap();
        let err = to_explanations(&[(0, 1.0)], &schema, &x).unwrap_err();
        assert_eq!(err, ExplainError::PaddingIndex { index: 0 });
    }

    fn record(attr: &str, rel: Relation, value: Option<&str>, w: f64) -> ExplanationRecord {
        ExplanationRecord {
            attribute: attr.into(),
            relation: rel,
            value: value.map(String::from),
            timestep_offset: 0,
            weight: w,
            numeric_value: None,
        }
    }

    #[test]
    fn k_semantics() {
        let (schema, _) = bank_schema();
        let cat = |s: &str| Value::Categorical(s.into());
        assert_eq!(k_lookup(&[], &schema, "ROLE", &cat("CLERK"), 0), 0.0);

        let eq = [record("ROLE", Relation::Equals, Some("DIRECTOR"), 5.0)];
        assert_eq!(k_lookup(&eq, &schema, "ROLE", &cat("DIRECTOR"), 0), 5.0);
        assert_eq!(k_lookup(&eq, &schema, "ROLE", &cat("CLERK"), 0), 0.0);
        assert_eq!(k_lookup(&eq, &schema, "ROLE", &cat("DIRECTOR"), -1), 0.0);

        let ne = [record(
            "CLOSURE_TYPE",
            Relation::NotEquals,
            Some("Inheritance"),
            -3.0,
        )];
        assert_eq!(
            k_lookup(&ne, &schema, "CLOSURE_TYPE", &cat("Porting"), 0),
            -3.0
        );
        assert_eq!(
            k_lookup(&ne, &schema, "CLOSURE_TYPE", &cat("Bank Recess"), 0),
            -3.0
        );
        assert_eq!(
            k_lookup(&ne, &schema, "CLOSURE_TYPE", &cat("Inheritance"), 0),
            0.0
        );
        assert_eq!(
            k_lookup(&ne, &schema, "CLOSURE_TYPE", &cat("Unknown"), 0),
            0.0
        );

        let num = [record("AMOUNT", Relation::Numeric, None, 2.0)];
        assert_eq!(
            k_lookup(&num, &schema, "AMOUNT", &Value::Numeric(15.0), 0),
            2.0
        );
        assert_eq!(
            k_lookup(&num, &schema, "AMOUNT", &Value::Numeric(99.0), 0),
            0.0
        );

        let both = [
            record("ROLE", Relation::Equals, Some("CLERK"), 1.0),
            record("ROLE", Relation::NotEquals, Some("DIRECTOR"), 0.5),
        ];
        assert_eq!(k_lookup(&both, &schema, "ROLE", &cat("CLERK"), 0), 1.5);
    }

    #[test]
    fn csv_quotes_fields() {
        let r = [record("A,B", Relation::Equals, Some("x"), 1.0)];
        let csv = records_to_csv([("c1", &r[..])]);
        assert_eq!(
            csv,
            "case_id,attribute,relation,value,timestep_offset,weight\nc1,\"A,B\",equals,x,0,1\n"
        );
    }
}
