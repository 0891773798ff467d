//! Shapley values over the flattened prefix vector.
//!
//! The payout of a coalition `S` is the interventional expectation
//!
//! ```text
//! val(S) = mean over background b of f(x_S, b_rest)
//! ```
//!
//! where features in `S` come from the instance and the rest from each
//! background prefix. Background prefixes are aligned to the instance: their
//! most recent rows line up with the instance's real rows and the instance's
//! padding rows stay zero. Features whose background values all equal the
//! instance value cannot move the payout; they are frozen and get ψ = 0.
//! Padding rows are always in that set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{EncodedPrefix, FeatureSchema};
use crate::predictor::Predictor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapleyError {
    #[error("background set is empty")]
    EmptyBackground,
    #[error("{active} active features exceed the exact cap of {cap}; use the sampling estimator")]
    TooManyFeatures { active: usize, cap: usize },
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error("background prefix width {found} differs from instance width {expected}")]
    WidthMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    Exact,
    Permutation {
        samples: usize,
        seed: u64,
    },
    /// Every ordering of the active features, in lexicographic order.
    AllPermutations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyAttribution {
    /// One value per flat index of the padded prefix (`max_len * width`).
    pub values: Vec<f64>,
    pub base_value: f64,
    pub prediction: f64,
    pub estimator: Estimator,
    /// Standard error of each sampled value; `None` for exact estimates.
    pub std_error: Option<Vec<f64>>,
    /// Flat indices that took part in the game, ascending.
    pub active: Vec<usize>,
}

impl ShapleyAttribution {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// The attribution restricted to active features, as `(index, ψ)`.
    pub fn active_values(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.active.iter().map(|&i| (i, self.values[i]))
    }

    /// CSV with columns `index,attribute,value,timestep_offset,psi`, one row
    /// per flat index.
    pub fn to_csv(&self, schema: &FeatureSchema, instance: &EncodedPrefix) -> String {
        let mut out = String::from("index,attribute,value,timestep_offset,psi\n");
        let n = schema.width();
        for (i, psi) in self.values.iter().enumerate() {
            let d = &schema.features[i % n];
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                csv_field(&d.attribute),
                csv_field(d.value.as_deref().unwrap_or("")),
                instance.timestep_offset(i),
                psi
            ));
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// The coalition game for one instance.
pub struct ValueFunction<'a, P: Predictor + ?Sized> {
    predictor: &'a P,
    instance: &'a EncodedPrefix,
    background: Vec<Vec<f64>>,
    background_preds: Vec<f64>,
    prediction: f64,
    base_value: f64,
    active: Vec<usize>,
    /// Per-index payout shift when the predictor is affine.
    additive: Option<Vec<f64>>,
}

impl<'a, P: Predictor + ?Sized> ValueFunction<'a, P> {
    pub fn new(
        predictor: &'a P,
        background: &[EncodedPrefix],
        instance: &'a EncodedPrefix,
    ) -> Result<Self, ShapleyError> {
        if background.is_empty() {
            return Err(ShapleyError::EmptyBackground);
        }
        let n = instance.width;
        let aligned: Vec<Vec<f64>> = background
            .iter()
            .map(|b| {
                if b.width != n {
                    return Err(ShapleyError::WidthMismatch {
                        expected: n,
                        found: b.width,
                    });
                }
                let k = b.len.min(instance.len);
                let mut data = vec![0.0; instance.data.len()];
                let src = &b.data[(b.max_len - k) * n..];
                data[(instance.max_len - k) * n..].copy_from_slice(src);
                Ok(data)
            })
            .collect::<Result<_, _>>()?;

        let x = &instance.data;
        let active: Vec<usize> = (0..x.len())
            .filter(|&j| aligned.iter().any(|b| b[j] != x[j]))
            .collect();
        let background_preds: Vec<f64> = aligned
            .iter()
            .map(|b| predictor.predict_raw(b, instance.len))
            .collect();
        let base_value = mean(&background_preds);
        let prediction = predictor.predict(instance);
        let additive = predictor.additive_form().map(|form| {
            let b = aligned.len() as f64;
            let mut delta = vec![0.0; x.len()];
            for &j in &active {
                let m = aligned.iter().map(|bg| bg[j]).sum::<f64>() / b;
                delta[j] = form.weights[j] * (x[j] - m);
            }
            delta
        });
        Ok(Self {
            predictor,
            instance,
            background: aligned,
            background_preds,
            prediction,
            base_value,
            active,
            additive,
        })
    }

    /// Indices that can change the payout, ascending.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn base_value(&self) -> f64 {
        self.base_value
    }

    pub fn prediction(&self) -> f64 {
        self.prediction
    }

    pub fn background_len(&self) -> usize {
        self.background.len()
    }

    /// Payout of the coalition `s` (flat indices). Frozen indices may be
    /// included; they do not change the result.
    pub fn value_of(&self, s: &[usize]) -> f64 {
        let in_s = |j: &usize| s.contains(j);
        if self.active.iter().all(in_s) {
            return self.prediction;
        }
        if !self.active.iter().any(in_s) {
            return self.base_value;
        }
        let x = &self.instance.data;
        let mut composite = vec![0.0; x.len()];
        let total: f64 = self
            .background
            .iter()
            .map(|b| {
                composite.copy_from_slice(b);
                for &j in s {
                    composite[j] = x[j];
                }
                self.predictor.predict_raw(&composite, self.instance.len)
            })
            .sum();
        total / self.background.len() as f64
    }

    fn walker(&self) -> Walker<'_, 'a, P> {
        match &self.additive {
            Some(delta) => Walker::Additive {
                vf: self,
                delta,
                value: self.base_value,
                members: 0,
            },
            None => Walker::Replay {
                vf: self,
                buffers: self.background.clone(),
                preds: self.background_preds.clone(),
                members: 0,
            },
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Incremental evaluation of a coalition that grows or shrinks one feature
/// at a time.
enum Walker<'v, 'a, P: Predictor + ?Sized> {
    /// Keeps one composite per background prefix and re-predicts only the
    /// composites an added feature actually changes.
    Replay {
        vf: &'v ValueFunction<'a, P>,
        buffers: Vec<Vec<f64>>,
        preds: Vec<f64>,
        members: usize,
    },
    /// Affine predictors: each feature shifts the payout by a fixed amount.
    Additive {
        vf: &'v ValueFunction<'a, P>,
        delta: &'v [f64],
        value: f64,
        members: usize,
    },
}

impl<P: Predictor + ?Sized> Walker<'_, '_, P> {
    fn reset(&mut self) {
        match self {
            Walker::Replay {
                vf,
                buffers,
                preds,
                members,
            } => {
                for (buf, bg) in buffers.iter_mut().zip(&vf.background) {
                    buf.copy_from_slice(bg);
                }
                preds.copy_from_slice(&vf.background_preds);
                *members = 0;
            }
            Walker::Additive {
                vf, value, members, ..
            } => {
                *value = vf.base_value;
                *members = 0;
            }
        }
    }

    /// Adds (`insert`) or removes feature `j` and returns the new payout.
    fn toggle(&mut self, j: usize, insert: bool) -> f64 {
        match self {
            Walker::Replay {
                vf,
                buffers,
                preds,
                members,
            } => {
                let x = &vf.instance.data;
                for (k, (buf, bg)) in buffers.iter_mut().zip(&vf.background).enumerate() {
                    let target = if insert { x[j] } else { bg[j] };
                    if buf[j] != target {
                        buf[j] = target;
                        preds[k] = vf.predictor.predict_raw(buf, vf.instance.len);
                    }
                }
                if insert {
                    *members += 1;
                } else {
                    *members -= 1;
                }
                if *members == vf.active.len() {
                    vf.prediction
                } else if *members == 0 {
                    vf.base_value
                } else {
                    mean(preds)
                }
            }
            Walker::Additive {
                vf,
                delta,
                value,
                members,
            } => {
                let d = delta[j];
                if insert {
                    *value += d;
                    *members += 1;
                } else {
                    *value -= d;
                    *members -= 1;
                }
                if *members == vf.active.len() {
                    vf.prediction
                } else if *members == 0 {
                    vf.base_value
                } else {
                    *value
                }
            }
        }
    }
}

/// ln(k!) for k = 0..=n.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    for k in 1..=n {
        out.push(out[k - 1] + (k as f64).ln());
    }
    out
}

/// Exact Shapley values by enumerating every coalition of the active
/// features. Coalitions are visited in Gray-code order so each step moves a
/// single feature.
pub fn exact_shapley<P: Predictor + ?Sized>(
    vf: &ValueFunction<P>,
    cap: usize,
) -> Result<ShapleyAttribution, ShapleyError> {
    let active = vf.active().to_vec();
    let k = active.len();
    if k > cap {
        return Err(ShapleyError::TooManyFeatures { active: k, cap });
    }
    let mut values = vec![0.0; vf.instance.data.len()];
    if let Some(delta) = &vf.additive {
        // every marginal of an additive game equals its shift
        for &j in &active {
            values[j] = delta[j];
        }
    } else if k > 0 {
        let mut payout = vec![0.0; 1 << k];
        payout[0] = vf.base_value;
        let mut walker = vf.walker();
        walker.reset();
        let mut mask = 0usize;
        for step in 1..(1usize << k) {
            let bit = step.trailing_zeros() as usize;
            mask ^= 1 << bit;
            payout[mask] = walker.toggle(active[bit], mask & (1 << bit) != 0);
        }

        let lf = log_factorials(k);
        let weight: Vec<f64> = (0..k)
            .map(|s| (lf[s] + lf[k - s - 1] - lf[k]).exp())
            .collect();
        let mut psi = vec![0.0; k];
        for s in 0..(1usize << k) {
            let w = weight_for(&weight, s, k);
            let here = payout[s];
            for (i, p) in psi.iter_mut().enumerate() {
                if s & (1 << i) == 0 {
                    *p += w * (payout[s | (1 << i)] - here);
                }
            }
        }
        for (i, &j) in active.iter().enumerate() {
            values[j] = psi[i];
        }
    }
    Ok(ShapleyAttribution {
        values,
        base_value: vf.base_value,
        prediction: vf.prediction,
        estimator: Estimator::Exact,
        std_error: None,
        active,
    })
}

fn weight_for(weight: &[f64], s: usize, k: usize) -> f64 {
    let size = s.count_ones() as usize;
    if size < k {
        weight[size]
    } else {
        0.0
    }
}

/// Accumulates per-feature marginal contributions along each ordering.
fn permutation_estimate<P, I>(
    vf: &ValueFunction<P>,
    orderings: I,
    estimator: Estimator,
) -> ShapleyAttribution
where
    P: Predictor + ?Sized,
    I: Iterator<Item = Vec<usize>>,
{
    let active = vf.active().to_vec();
    let dim = vf.instance.data.len();
    let mut mean_acc = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    let mut count = 0usize;
    let mut walker = vf.walker();
    for order in orderings {
        count += 1;
        walker.reset();
        let mut previous = vf.base_value;
        for &j in &order {
            let now = walker.toggle(j, true);
            let marginal = now - previous;
            previous = now;
            // Welford update
            let d = marginal - mean_acc[j];
            mean_acc[j] += d / count as f64;
            m2[j] += d * (marginal - mean_acc[j]);
        }
    }
    let std_error = (0..dim)
        .map(|j| {
            if count > 1 {
                (m2[j] / (count - 1) as f64 / count as f64).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    ShapleyAttribution {
        values: mean_acc,
        base_value: vf.base_value,
        prediction: vf.prediction,
        estimator,
        std_error: Some(std_error),
        active,
    }
}

/// Monte Carlo estimate from `samples` uniformly random orderings of the
/// active features; deterministic for a given `seed`.
pub fn sampled_shapley<P: Predictor + ?Sized>(
    vf: &ValueFunction<P>,
    samples: usize,
    seed: u64,
) -> Result<ShapleyAttribution, ShapleyError> {
    if samples == 0 {
        return Err(ShapleyError::ZeroSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<usize> = vf.active().to_vec();
    let orderings = (0..samples).map(move |_| {
        let mut p = base.clone();
        p.shuffle(&mut rng);
        p
    });
    Ok(permutation_estimate(
        vf,
        orderings,
        Estimator::Permutation { samples, seed },
    ))
}

/// The permutation estimator run over all `k!` orderings. Feasible only for
/// a handful of active features.
pub fn all_permutations_shapley<P: Predictor + ?Sized>(
    vf: &ValueFunction<P>,
    cap: usize,
) -> Result<ShapleyAttribution, ShapleyError> {
    let k = vf.active().len();
    if k > cap {
        return Err(ShapleyError::TooManyFeatures { active: k, cap });
    }
    let mut current: Option<Vec<usize>> = Some(vf.active().to_vec());
    let orderings = std::iter::from_fn(move || {
        let out = current.take()?;
        let mut next = out.clone();
        if next_permutation(&mut next) {
            current = Some(next);
        }
        Some(out)
    });
    Ok(permutation_estimate(
        vf,
        orderings,
        Estimator::AllPermutations,
    ))
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let Some(i) = (0..v.len() - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        return false;
    };
    let j = (i + 1..v.len())
        .rev()
        .find(|&j| v[j] > v[i])
        .expect("successor exists");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapleyOptions {
    pub background_size: usize,
    /// Largest active-feature count computed exactly.
    pub exact_cap: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ShapleyOptions {
    fn default() -> Self {
        Self {
            background_size: 100,
            exact_cap: 20,
            samples: 2000,
            seed: 7,
        }
    }
}

/// Exact when the active set fits under the cap, sampled otherwise.
pub fn explain<P: Predictor + ?Sized>(
    vf: &ValueFunction<P>,
    options: &ShapleyOptions,
) -> Result<ShapleyAttribution, ShapleyError> {
    if vf.active().len() <= options.exact_cap {
        exact_shapley(vf, options.exact_cap)
    } else {
        sampled_shapley(vf, options.samples, options.seed)
    }
}

/// Draws up to `size` prefixes uniformly without replacement, keeping the
/// source order.
pub fn sample_background(pool: &[&EncodedPrefix], size: usize, seed: u64) -> Vec<EncodedPrefix> {
    if size >= pool.len() {
        return pool.iter().map(|p| (*p).clone()).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, pool.len(), size).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pool[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{AdditiveForm, Task};

    struct Func<F: Fn(&[f64]) -> f64 + Send + Sync>(F);

    impl<F: Fn(&[f64]) -> f64 + Send + Sync> Predictor for Func<F> {
        fn task(&self) -> Task {
            Task::Regression
        }
        fn predict_raw(&self, chi: &[f64], _len: usize) -> f64 {
            (self.0)(chi)
        }
    }

    struct Affine(Vec<f64>, f64);

    impl Predictor for Affine {
        fn task(&self) -> Task {
            Task::Regression
        }
        fn predict_raw(&self, chi: &[f64], _len: usize) -> f64 {
            self.1 + self.0.iter().zip(chi).map(|(w, x)| w * x).sum::<f64>()
        }
        fn additive_form(&self) -> Option<AdditiveForm<'_>> {
            Some(AdditiveForm {
                weights: &self.0,
                bias: self.1,
            })
        }
    }

    fn flat(values: &[f64]) -> EncodedPrefix {
        EncodedPrefix {
            data: values.to_vec(),
            width: values.len(),
            max_len: 1,
            len: 1,
        }
    }

    #[test]
    fn value_of_uses_composites() {
        let f = Func(|x: &[f64]| x[0] * x[1]);
        let x = flat(&[1.0, 1.0]);
        let bg = [flat(&[0.0, 0.0])];
        let vf = ValueFunction::new(&f, &bg, &x).unwrap();
        assert_eq!(vf.value_of(&[0]), 0.0);
        assert_eq!(vf.value_of(&[0, 1]), 1.0);
        assert_eq!(vf.value_of(&[]), 0.0);
        assert_eq!(vf.base_value(), 0.0);
    }

    #[test]
    fn exact_linear_and_product() {
        let bg = [flat(&[0.0, 0.0])];
        let x = flat(&[1.0, 1.0]);
        let lin = Func(|x: &[f64]| 3.0 * x[0] + 5.0 * x[1]);
        let vf = ValueFunction::new(&lin, &bg, &x).unwrap();
        let a = exact_shapley(&vf, 20).unwrap();
        assert_eq!(a.values, vec![3.0, 5.0]);

        let prod = Func(|x: &[f64]| x[0] * x[1]);
        let vf = ValueFunction::new(&prod, &bg, &x).unwrap();
        let a = exact_shapley(&vf, 20).unwrap();
        assert_eq!(a.values, vec![0.5, 0.5]);
    }

    #[test]
    fn constant_predictor_gets_zero() {
        let c = Func(|_: &[f64]| 4.0);
        let bg = [flat(&[0.0, 2.0]), flat(&[1.0, 0.0])];
        let x = flat(&[3.0, 3.0]);
        let vf = ValueFunction::new(&c, &bg, &x).unwrap();
        let a = exact_shapley(&vf, 20).unwrap();
        assert!(a.values.iter().all(|v| *v == 0.0));
        assert_eq!(a.prediction, a.base_value);
        let s = sampled_shapley(&vf, 10, 3).unwrap();
        assert!(s.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sampled_linear_is_exact_with_one_sample() {
        let bg = [flat(&[0.0, 0.0])];
        let x = flat(&[1.0, 1.0]);
        let lin = Func(|x: &[f64]| 3.0 * x[0] + 5.0 * x[1]);
        let vf = ValueFunction::new(&lin, &bg, &x).unwrap();
        for seed in 0..5 {
            let a = sampled_shapley(&vf, 1, seed).unwrap();
            assert_eq!(a.values, vec![3.0, 5.0]);
        }
        assert_eq!(
            sampled_shapley(&vf, 0, 0).unwrap_err(),
            ShapleyError::ZeroSamples
        );
    }

    #[test]
    fn additive_fast_path_matches_replay() {
        let w = vec![0.5, -2.0, 1.5, 0.0, 3.0];
        let affine = Affine(w.clone(), 0.25);
        let plain = Func(move |x: &[f64]| 0.25 + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        let bg = [
            flat(&[0.0, 1.0, 0.3, 2.0, 1.0]),
            flat(&[1.0, 0.0, 0.9, 2.0, 0.0]),
            flat(&[0.5, 0.5, 0.1, 2.0, 1.0]),
        ];
        let x = flat(&[1.0, 1.0, 0.2, 2.0, 0.0]);
        let fast = exact_shapley(&ValueFunction::new(&affine, &bg, &x).unwrap(), 20).unwrap();
        let slow = exact_shapley(&ValueFunction::new(&plain, &bg, &x).unwrap(), 20).unwrap();
        assert_eq!(fast.active, vec![0, 1, 2, 4]);
        for (a, b) in fast.values.iter().zip(&slow.values) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn padding_rows_are_frozen() {
        // max_len 3, width 2, instance has one real row
        let x = EncodedPrefix {
            data: vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0],
            width: 2,
            max_len: 3,
            len: 1,
        };
        let bg = [EncodedPrefix {
            data: vec![5.0, 5.0, 6.0, 6.0, 0.0, 0.0],
            width: 2,
            max_len: 3,
            len: 3,
        }];
        let f = Func(|x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum());
        let vf = ValueFunction::new(&f, &bg, &x).unwrap();
        assert_eq!(vf.active(), &[4, 5]);
        let a = exact_shapley(&vf, 20).unwrap();
        assert_eq!(&a.values[..4], &[0.0; 4]);
        assert!((a.sum() - (a.prediction - a.base_value)).abs() < 1e-12);
        assert_eq!(vf.base_value(), 0.0);
    }

    #[test]
    fn cap_and_empty_background_errors() {
        let f = Func(|x: &[f64]| x.iter().sum());
        let x = flat(&[1.0, 1.0, 1.0]);
        assert!(matches!(
            ValueFunction::new(&f, &[], &x),
            Err(ShapleyError::EmptyBackground)
        ));
        let bg = [flat(&[0.0, 0.0, 0.0])];
        let vf = ValueFunction::new(&f, &bg, &x).unwrap();
        assert_eq!(
            exact_shapley(&vf, 2).unwrap_err(),
            ShapleyError::TooManyFeatures { active: 3, cap: 2 }
        );
        let auto = explain(
            &vf,
            &ShapleyOptions {
                exact_cap: 2,
                samples: 5,
                ..ShapleyOptions::default()
            },
        )
        .unwrap();
        assert!(matches!(
            auto.estimator,
            Estimator::Permutation { samples: 5, .. }
        ));
    }

    #[test]
    fn permutation_enumeration_is_lexicographic() {
        let mut v = vec![0, 1, 2];
        let mut seen = vec![v.clone()];
        while next_permutation(&mut v) {
            seen.push(v.clone());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], vec![0, 2, 1]);
        assert_eq!(seen[5], vec![2, 1, 0]);
    }

    #[test]
    fn background_sampling_is_seeded() {
        let pool: Vec<EncodedPrefix> = (0..50).map(|i| flat(&[i as f64])).collect();
        let refs: Vec<&EncodedPrefix> = pool.iter().collect();
        let a = sample_background(&refs, 10, 1);
        assert_eq!(a, sample_background(&refs, 10, 1));
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0].data[0] < w[1].data[0]));
        assert_eq!(sample_background(&refs, 100, 1).len(), 50);
    }
}
