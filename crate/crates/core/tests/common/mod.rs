#![allow(dead_code)]

use proptest::prelude::*;
use shapmon::encoding::EncodedPrefix;
use shapmon::event_log::{Event, EventLog, Trace, Value, MISSING};
use shapmon::predictor::{AdditiveForm, Predictor, Task};

pub const ACTIVITIES: [&str; 4] = ["Open", "Check", "Approve", "Close"];
pub const ROLES: [&str; 4] = ["clerk", "director", "back-office", MISSING];

/// One event drawn from a small fixed schema.
pub fn event(gap: f64) -> impl Strategy<Value = (usize, usize, f64, bool, f64)> {
    (
        0..ACTIVITIES.len(),
        0..ROLES.len(),
        -1000.0..1000.0f64,
        any::<bool>(),
        1.0..gap,
    )
}

pub fn traces(max_traces: usize, max_len: usize) -> impl Strategy<Value = Vec<Trace>> {
    prop::collection::vec(
        prop::collection::vec(event(3600.0), 1..=max_len),
        1..=max_traces,
    )
    .prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(c, events)| {
                let mut ts = 1_700_000_000.0;
                let events = events
                    .into_iter()
                    .map(|(a, r, amount, flag, gap)| {
                        ts += gap.round();
                        Event::new(ACTIVITIES[a], ts)
                            .with("ROLE", Value::Categorical(ROLES[r].into()))
                            .with("AMOUNT", Value::Numeric(amount))
                            .with("URGENT", Value::Boolean(flag))
                    })
                    .collect();
                Trace {
                    case_id: format!("c{c}"),
                    events,
                }
            })
            .collect()
    })
}

pub fn log(max_traces: usize, max_len: usize) -> impl Strategy<Value = EventLog> {
    traces(max_traces, max_len).prop_map(EventLog::from_traces)
}

/// Nonlinear predictor with pairwise interactions.
#[derive(Debug, Clone)]
pub struct Poly {
    pub bias: f64,
    pub weights: Vec<f64>,
    pub pairs: Vec<(usize, usize, f64)>,
}

impl Predictor for Poly {
    fn task(&self) -> Task {
        Task::Regression
    }
    fn predict_raw(&self, chi: &[f64], _len: usize) -> f64 {
        let linear: f64 = self.weights.iter().zip(chi).map(|(w, x)| w * x).sum();
        let inter: f64 = self
            .pairs
            .iter()
            .filter(|&&(i, j, _)| i < chi.len() && j < chi.len())
            .map(|&(i, j, c)| c * chi[i] * chi[j])
            .sum();
        self.bias + linear + inter + linear.sin()
    }
}

pub fn poly(n: usize) -> impl Strategy<Value = Poly> {
    (
        -2.0..2.0f64,
        prop::collection::vec(-2.0..2.0f64, n),
        prop::collection::vec((0..n, 0..n, -1.0..1.0f64), 0..=n),
    )
        .prop_map(|(bias, weights, pairs)| Poly {
            bias,
            weights,
            pairs,
        })
}

/// Affine predictor that exposes its weights.
#[derive(Debug, Clone)]
pub struct Affine {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Predictor for Affine {
    fn task(&self) -> Task {
        Task::Regression
    }
    fn predict_raw(&self, chi: &[f64], _len: usize) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(chi)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }
    fn additive_form(&self) -> Option<AdditiveForm<'_>> {
        Some(AdditiveForm {
            weights: &self.weights,
            bias: self.bias,
        })
    }
}

/// The same affine model with the fast path hidden.
pub struct Opaque<'a>(pub &'a Affine);

impl Predictor for Opaque<'_> {
    fn task(&self) -> Task {
        Task::Regression
    }
    fn predict_raw(&self, chi: &[f64], len: usize) -> f64 {
        self.0.predict_raw(chi, len)
    }
}

/// A left-padded prefix with `len` random rows out of `max_len`.
pub fn prefix(width: usize, max_len: usize, len: usize, values: &[f64]) -> EncodedPrefix {
    let mut data = vec![0.0; width * max_len];
    let start = (max_len - len) * width;
    for (k, v) in data[start..].iter_mut().enumerate() {
        *v = values[k % values.len()];
    }
    EncodedPrefix {
        data,
        width,
        max_len,
        len,
    }
}

/// Instance shape plus a background, all with at most `cap` real features.
pub fn shapley_case(cap: usize) -> impl Strategy<Value = (EncodedPrefix, Vec<EncodedPrefix>)> {
    (1..=4usize, 1..=4usize)
        .prop_flat_map(move |(width, max_len)| {
            let max_real = (cap / width).clamp(1, max_len);
            (Just(width), Just(max_len), 1..=max_real)
        })
        .prop_flat_map(|(width, max_len, len)| {
            let n = width * max_len;
            (
                prop::collection::vec(-1.0..1.0f64, n),
                prop::collection::vec((1..=max_len, prop::collection::vec(-1.0..1.0f64, n)), 1..6),
            )
                .prop_map(move |(x, bg)| {
                    let instance = prefix(width, max_len, len, &x);
                    let background = bg
                        .iter()
                        .map(|(l, v)| prefix(width, max_len, *l, v))
                        .collect();
                    (instance, background)
                })
        })
}
