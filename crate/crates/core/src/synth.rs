//! Synthetic event logs with planted, known causal effects.
//!
//! Traces follow a short sequential skeleton with an optional rework loop.
//! Case-level attributes are sampled per trace and repeated on every event,
//! and each [`Rule`] applies its effect to the traces whose case attribute
//! matches the rule's condition.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_log::{Event, EventLog, Trace, Value};

/// Per-event cost attribute emitted when costs are enabled.
pub const COST: &str = "COST";
/// Running sum of [`COST`] over the trace so far.
pub const TOTAL_COST: &str = "TOTAL_COST";
/// Per-event resource attribute.
pub const RESOURCE: &str = "RESOURCE";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("n_traces must be at least 1")]
    NoTraces,
    #[error("field `{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
    #[error("rule {rule}: attribute `{attribute}` is not declared")]
    UnknownAttribute { rule: usize, attribute: String },
    #[error("rule {rule}: value `{value}` is not in the domain of `{attribute}`")]
    UnknownValue {
        rule: usize,
        attribute: String,
        value: String,
    },
    #[error("rule {rule}: activity `{activity}` is not an optional activity")]
    UnknownActivity { rule: usize, activity: String },
    #[error("rules {first} and {second} both force and forbid `{activity}`")]
    Contradiction {
        first: usize,
        second: usize,
        activity: String,
    },
}

/// A categorical attribute sampled once per trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseAttribute {
    pub name: String,
    /// Values with unnormalized sampling weights.
    pub values: Vec<(String, f64)>,
}

/// An activity inserted before the final event with some base probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionalActivity {
    pub name: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Effect {
    /// Seconds added before the final event, so it lands on remaining time.
    Delay(f64),
    /// The optional activity always occurs.
    Force(String),
    /// The optional activity never occurs.
    Forbid(String),
    /// Added to the cost of the final event.
    Cost(f64),
}

impl Effect {
    fn kind(&self) -> &'static str {
        match self {
            Self::Delay(_) => "delay",
            Self::Force(_) => "force",
            Self::Forbid(_) => "forbid",
            Self::Cost(_) => "cost",
        }
    }

    fn magnitude(&self) -> Option<f64> {
        match self {
            Self::Delay(v) | Self::Cost(v) => Some(*v),
            _ => None,
        }
    }

    fn target(&self) -> Option<&str> {
        match self {
            Self::Force(a) | Self::Forbid(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub attribute: String,
    pub value: String,
    pub effect: Effect,
}

impl Rule {
    pub fn label(&self) -> String {
        format!("{}={}", self.attribute, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_traces: usize,
    /// Sequential skeleton; every trace visits these in order.
    pub skeleton: Vec<String>,
    /// Index range of the skeleton repeated once on rework.
    pub rework: Option<(usize, usize)>,
    pub rework_probability: f64,
    pub optional_activities: Vec<OptionalActivity>,
    pub case_attributes: Vec<CaseAttribute>,
    /// Size of the resource pool; 0 disables the attribute.
    pub resources: usize,
    /// Base cost per event; `None` disables costs unless a cost rule exists.
    pub cost_per_event: Option<f64>,
    pub step_seconds: f64,
    /// Standard deviation of the Gaussian noise added to each step duration,
    /// delay, and cost, in the unit of the quantity it perturbs.
    pub noise: f64,
    pub interarrival_seconds: f64,
    pub start: f64,
    pub rules: Vec<Rule>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let skeleton = ["Register", "Check", "Assess", "Decide", "Notify", "Close"]
            .into_iter()
            .map(String::from)
            .collect();
        Self {
            n_traces: 1000,
            skeleton,
            rework: Some((1, 2)),
            rework_probability: 0.2,
            optional_activities: vec![OptionalActivity {
                name: "Escalate".into(),
                probability: 0.1,
            }],
            case_attributes: vec![
                CaseAttribute {
                    name: "TYPE".into(),
                    values: vec![("normal".into(), 0.7), ("slow".into(), 0.3)],
                },
                CaseAttribute {
                    name: "CHANNEL".into(),
                    values: vec![("email".into(), 0.5), ("phone".into(), 0.5)],
                },
            ],
            resources: 3,
            cost_per_event: None,
            step_seconds: 300.0,
            noise: 0.0,
            interarrival_seconds: 3600.0,
            // 2024-01-01T00:00:00Z
            start: 1_704_067_200.0,
            rules: Vec::new(),
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_traces == 0 {
            return Err(SynthError::NoTraces);
        }
        let invalid = |field, message: &str| {
            Err(SynthError::Invalid {
                field,
                message: message.to_string(),
            })
        };
        if self.skeleton.len() < 2 {
            return invalid("skeleton", "needs at least two activities");
        }
        if let Some((a, b)) = self.rework {
            if a > b || b + 1 >= self.skeleton.len() {
                return invalid(
                    "rework",
                    "range must lie strictly before the final activity",
                );
            }
        }
        if !(0.0..=1.0).contains(&self.rework_probability) {
            return invalid("rework_probability", "must be in [0, 1]");
        }
        if self
            .optional_activities
            .iter()
            .any(|o| !(0.0..=1.0).contains(&o.probability))
        {
            return invalid("optional_activities", "probabilities must be in [0, 1]");
        }
        for attr in &self.case_attributes {
            if attr.values.is_empty() || attr.values.iter().any(|(_, w)| w.is_nan() || *w < 0.0) {
                return invalid(
                    "case_attributes",
                    "each attribute needs values with non-negative weights",
                );
            }
            if attr.values.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
                return invalid("case_attributes", "weights must not all be zero");
            }
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return invalid("noise", "must be a finite non-negative number");
        }
        if self.step_seconds.is_nan() || self.step_seconds <= 0.0 {
            return invalid("step_seconds", "must be positive");
        }
        let mut forced: BTreeMap<&str, usize> = BTreeMap::new();
        let mut forbidden: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, rule) in self.rules.iter().enumerate() {
            let attr = self
                .case_attributes
                .iter()
                .find(|a| a.name == rule.attribute)
                .ok_or_else(|| SynthError::UnknownAttribute {
                    rule: i,
                    attribute: rule.attribute.clone(),
                })?;
            if !attr.values.iter().any(|(v, _)| *v == rule.value) {
                return Err(SynthError::UnknownValue {
                    rule: i,
                    attribute: rule.attribute.clone(),
                    value: rule.value.clone(),
                });
            }
            if let Some(target) = rule.effect.target() {
                if !self.optional_activities.iter().any(|o| o.name == target) {
                    return Err(SynthError::UnknownActivity {
                        rule: i,
                        activity: target.to_string(),
                    });
                }
                let (mine, other) = match rule.effect {
                    Effect::Force(_) => (&mut forced, &forbidden),
                    _ => (&mut forbidden, &forced),
                };
                if let Some(&j) = other.get(target) {
                    return Err(SynthError::Contradiction {
                        first: j,
                        second: i,
                        activity: target.to_string(),
                    });
                }
                mine.entry(target).or_insert(i);
            }
        }
        Ok(())
    }

    fn emits_cost(&self) -> bool {
        self.cost_per_event.is_some()
            || self
                .rules
                .iter()
                .any(|r| matches!(r.effect, Effect::Cost(_)))
    }
}

/// How often each rule fired in a generated log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTruth {
    pub rule: Rule,
    pub affected_traces: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rules: Vec<RuleTruth>,
}

impl GroundTruth {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("rule,attribute,value,effect,magnitude,target,affected_traces,fraction\n");
        for (i, t) in self.rules.iter().enumerate() {
            let magnitude = t
                .rule
                .effect
                .magnitude()
                .map(|m| m.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                i,
                crate::shapley::csv_field(&t.rule.attribute),
                crate::shapley::csv_field(&t.rule.value),
                t.rule.effect.kind(),
                magnitude,
                crate::shapley::csv_field(t.rule.effect.target().unwrap_or("")),
                t.affected_traces,
                t.fraction,
            );
        }
        out
    }
}

/// Generates a log and its ground-truth table. The result depends only on
/// `spec`; each trace draws from its own stream of the seeded generator.
pub fn generate(spec: &SynthSpec) -> Result<(EventLog, GroundTruth), SynthError> {
    spec.validate()?;
    let width = spec.n_traces.to_string().len();
    let mut affected = vec![0usize; spec.rules.len()];
    let traces: Vec<Trace> = (0..spec.n_traces)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let (trace, fired) = generate_trace(spec, i, width, &mut rng);
            for (count, hit) in affected.iter_mut().zip(fired) {
                *count += usize::from(hit);
            }
            trace
        })
        .collect();
    let truth = GroundTruth {
        rules: spec
            .rules
            .iter()
            .zip(affected)
            .map(|(rule, affected_traces)| RuleTruth {
                rule: rule.clone(),
                affected_traces,
                fraction: affected_traces as f64 / spec.n_traces as f64,
            })
            .collect(),
    };
    Ok((EventLog::from_traces(traces), truth))
}

fn weighted_choice<'a>(values: &'a [(String, f64)], rng: &mut ChaCha8Rng) -> &'a str {
    let total: f64 = values.iter().map(|(_, w)| w).sum();
    let mut u = rng.gen::<f64>() * total;
    for (v, w) in values {
        if u < *w {
            return v;
        }
        u -= w;
    }
    &values.last().expect("validated non-empty").0
}

fn generate_trace(
    spec: &SynthSpec,
    index: usize,
    width: usize,
    rng: &mut ChaCha8Rng,
) -> (Trace, Vec<bool>) {
    let noise = Normal::new(0.0, spec.noise).expect("validated noise");
    let case: Vec<(&str, &str)> = spec
        .case_attributes
        .iter()
        .map(|a| (a.name.as_str(), weighted_choice(&a.values, rng)))
        .collect();
    let fired: Vec<bool> = spec
        .rules
        .iter()
        .map(|r| case.iter().any(|(a, v)| *a == r.attribute && *v == r.value))
        .collect();

    let last = spec.skeleton.len() - 1;
    let mut activities: Vec<&str> = Vec::new();
    for (k, a) in spec.skeleton[..last].iter().enumerate() {
        activities.push(a);
        if let Some((from, to)) = spec.rework {
            if k == to && rng.gen::<f64>() < spec.rework_probability {
                activities.extend(spec.skeleton[from..=to].iter().map(String::as_str));
            }
        }
    }
    for opt in &spec.optional_activities {
        let base = rng.gen::<f64>() < opt.probability;
        let mut occurs = base;
        for (rule, &hit) in spec.rules.iter().zip(&fired) {
            match &rule.effect {
                Effect::Force(a) if hit && *a == opt.name => occurs = true,
                Effect::Forbid(a) if hit && *a == opt.name => occurs = false,
                _ => {}
            }
        }
        if occurs {
            activities.push(&opt.name);
        }
    }
    activities.push(&spec.skeleton[last]);

    let mut delay = 0.0;
    let mut extra_cost = 0.0;
    for (rule, &hit) in spec.rules.iter().zip(&fired) {
        if !hit {
            continue;
        }
        match rule.effect {
            Effect::Delay(d) => delay += (d + noise.sample(rng)).max(0.0),
            Effect::Cost(c) => extra_cost += c + noise.sample(rng),
            _ => {}
        }
    }

    let with_cost = spec.emits_cost();
    let base_cost = spec.cost_per_event.unwrap_or(0.0);
    let mut ts = spec.start + index as f64 * spec.interarrival_seconds;
    let mut total = 0.0;
    let n = activities.len();
    let mut events = Vec::with_capacity(n);
    for (k, activity) in activities.into_iter().enumerate() {
        if k > 0 {
            ts += (spec.step_seconds + noise.sample(rng)).max(1.0).round();
            if k == n - 1 {
                ts += delay.round();
            }
        }
        let mut event = Event::new(activity, ts);
        for (name, value) in &case {
            event = event.with(*name, Value::Categorical(value.to_string()));
        }
        if spec.resources > 0 {
            let r = rng.gen_range(0..spec.resources);
            event = event.with(RESOURCE, Value::Categorical(format!("R{r}")));
        }
        if with_cost {
            let mut cost = base_cost;
            if spec.cost_per_event.is_some() {
                cost += noise.sample(rng);
            }
            if k == n - 1 {
                cost += extra_cost;
            }
            total += cost;
            event = event
                .with(COST, Value::Numeric(cost))
                .with(TOTAL_COST, Value::Numeric(total));
        }
        events.push(event);
    }
    let trace = Trace {
        case_id: format!("case-{index:0width$}"),
        events,
    };
    (trace, fired)
}
