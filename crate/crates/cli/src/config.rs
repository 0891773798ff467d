//! Plain-text `key = value` run configuration.
//!
//! Every key has a default, so an empty file is a valid config. Lines
//! starting with `#` are comments. The canonical rendering lists every key
//! in a fixed order and is what gets copied into the output directory.

use std::collections::BTreeMap;
use std::path::PathBuf;

use shapmon::encoding::{DatasetOptions, EncodingOptions, SplitConfig};
use shapmon::event_log::{CsvMapping, KpiLabeler};
use shapmon::predictor::{ModelSpec, RecurrentConfig};
use shapmon::reporting::ReportOptions;
use shapmon::shapley::ShapleyOptions;
use shapmon::synth::{Effect, Rule, SynthSpec};

use crate::error::CliError;

/// `(key, default)` in rendering order.
const KEYS: &[(&str, &str)] = &[
    ("input", ""),
    ("running_cases", ""),
    ("output_dir", "out"),
    ("case_column", "case_id"),
    ("activity_column", "activity"),
    ("timestamp_column", "timestamp"),
    ("delimiter", ","),
    ("timestamp_format", ""),
    ("categorical_columns", ""),
    ("ignore_columns", ""),
    ("kpi", "remaining_time"),
    ("kpi_target", ""),
    ("max_len", "auto"),
    ("min_prefix_len", "1"),
    ("scale_numeric", "true"),
    ("time_from_start", "true"),
    ("time_since_previous", "false"),
    ("cardinality_cap", "1000"),
    ("exclude", ""),
    ("split_train", "0.5333333333333333"),
    ("split_validation", "0.13333333333333333"),
    ("split_test", "0.3333333333333333"),
    ("split_seed", "42"),
    ("model", "linear"),
    ("l2", "0"),
    ("hidden", "16"),
    ("learning_rate", "0.005"),
    ("epochs", "40"),
    ("batch_size", "32"),
    ("patience", "5"),
    ("clip_norm", "5"),
    ("model_seed", "7"),
    ("estimator", "auto"),
    ("background_size", "100"),
    ("exact_cap", "20"),
    ("samples", "2000"),
    ("shapley_seed", "7"),
    ("delta", "1"),
    ("window", "5"),
    ("top_rows", "30"),
    ("top_k", "2"),
    ("threads", "1"),
    ("synth_traces", "1000"),
    ("synth_seed", "7"),
    ("synth_noise", "0"),
    ("synth_step_seconds", "300"),
    ("synth_rework_probability", "0.2"),
    ("synth_cost_per_event", ""),
    ("synth_rules", "TYPE=slow:delay:3600"),
];

/// Raw key/value pairs, always containing every known key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (*k, v.to_string())).collect(),
        }
    }
}

fn known_key(key: &str) -> Option<&'static str> {
    KEYS.iter().map(|(k, _)| *k).find(|k| *k == key)
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut raw = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::Input {
                location: format!("config line {}", n + 1),
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let field = known_key(key).ok_or_else(|| CliError::Input {
                location: format!("config line {}", n + 1),
                message: format!("unknown key `{key}`"),
            })?;
            raw.values.insert(field, value.trim().to_string());
        }
        Ok(raw)
    }

    /// Overrides one key; used for command-line flags.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), CliError> {
        let field = known_key(key).ok_or_else(|| CliError::config(key, "unknown key"))?;
        self.values.insert(field, value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// Canonical rendering: every key, fixed order.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|(k, _)| format!("{k} = {}\n", self.get(k)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorChoice {
    /// Exact up to `exact_cap` active features, sampled above.
    Auto,
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub running_cases: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub mapping: CsvMapping,
    pub kpi: KpiLabeler,
    pub encoding: EncodingOptions,
    pub dataset: DatasetOptions,
    pub model: ModelSpec,
    pub model_seed: u64,
    pub estimator: EstimatorChoice,
    pub shapley: ShapleyOptions,
    pub delta: f64,
    pub report: ReportOptions,
    pub threads: usize,
    pub synth: SynthSpec,
}

fn list(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn optional(raw: &str) -> Option<&str> {
    Some(raw).filter(|s| !s.is_empty())
}

struct Reader<'a>(&'a RawConfig);

impl Reader<'_> {
    fn num<T: std::str::FromStr>(&self, key: &'static str) -> Result<T, CliError> {
        self.0
            .get(key)
            .parse()
            .map_err(|_| CliError::config(key, format!("cannot parse `{}`", self.0.get(key))))
    }

    fn float(&self, key: &'static str) -> Result<f64, CliError> {
        let v: f64 = self.num(key)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CliError::config(key, "must be finite"))
        }
    }

    fn non_negative(&self, key: &'static str) -> Result<f64, CliError> {
        let v = self.float(key)?;
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(CliError::config(key, "must not be negative"))
        }
    }

    fn positive(&self, key: &'static str) -> Result<usize, CliError> {
        match self.num::<usize>(key)? {
            0 => Err(CliError::config(key, "must be at least 1")),
            v => Ok(v),
        }
    }

    fn flag(&self, key: &'static str) -> Result<bool, CliError> {
        match self.0.get(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(CliError::config(
                key,
                format!("expected true or false, got `{other}`"),
            )),
        }
    }
}

/// Parses `ATTR=VALUE:effect:arg` rules separated by `;`.
fn parse_rules(raw: &str) -> Result<Vec<Rule>, CliError> {
    let bad = |rule: &str, why: &str| CliError::config("synth_rules", format!("`{rule}`: {why}"));
    raw.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|rule| {
            let mut parts = rule.splitn(3, ':');
            let cond = parts.next().unwrap_or("");
            let (attribute, value) = cond
                .split_once('=')
                .ok_or_else(|| bad(rule, "condition must be ATTR=VALUE"))?;
            let kind = parts.next().ok_or_else(|| bad(rule, "missing effect"))?;
            let arg = parts
                .next()
                .ok_or_else(|| bad(rule, "missing effect argument"))?;
            let number = || {
                arg.parse::<f64>()
                    .map_err(|_| bad(rule, "effect argument must be a number"))
            };
            let effect = match kind {
                "delay" => Effect::Delay(number()?),
                "cost" => Effect::Cost(number()?),
                "force" => Effect::Force(arg.to_string()),
                "forbid" => Effect::Forbid(arg.to_string()),
                _ => return Err(bad(rule, "effect must be delay, cost, force or forbid")),
            };
            Ok(Rule {
                attribute: attribute.trim().to_string(),
                value: value.trim().to_string(),
                effect,
            })
        })
        .collect()
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        let r = Reader(raw);
        let path = |key| optional(raw.get(key)).map(PathBuf::from);

        let delimiter = match raw.get("delimiter").as_bytes() {
            [b] => *b,
            _ if raw.get("delimiter") == "\\t" => b'\t',
            _ => return Err(CliError::config("delimiter", "must be a single byte")),
        };
        let mapping = CsvMapping {
            case_column: raw.get("case_column").to_string(),
            activity_column: raw.get("activity_column").to_string(),
            timestamp_column: raw.get("timestamp_column").to_string(),
            delimiter,
            timestamp_format: optional(raw.get("timestamp_format")).map(String::from),
            categorical_columns: list(raw.get("categorical_columns")),
            ignore_columns: list(raw.get("ignore_columns")),
        };

        let target = raw.get("kpi_target");
        let kpi = match raw.get("kpi") {
            "remaining_time" => KpiLabeler::RemainingTime,
            "activity_occurrence" | "end_of_case_numeric" if target.is_empty() => {
                return Err(CliError::config("kpi_target", "required for this kpi"))
            }
            "activity_occurrence" => KpiLabeler::ActivityOccurrence(target.to_string()),
            "end_of_case_numeric" => KpiLabeler::EndOfCaseNumeric(target.to_string()),
            other => {
                return Err(CliError::config(
                    "kpi",
                    format!("`{other}` is not one of remaining_time, activity_occurrence, end_of_case_numeric"),
                ))
            }
        };

        let encoding = EncodingOptions {
            scale_numeric: r.flag("scale_numeric")?,
            time_from_start: r.flag("time_from_start")?,
            time_since_previous: r.flag("time_since_previous")?,
            cardinality_cap: r.positive("cardinality_cap")?,
            exclude: list(raw.get("exclude")),
        };
        let split = SplitConfig {
            train: r.non_negative("split_train")?,
            validation: r.non_negative("split_validation")?,
            test: r.non_negative("split_test")?,
            seed: r.num("split_seed")?,
        };
        split
            .validate()
            .map_err(|e| CliError::config("split_train", e.to_string()))?;
        let max_len = match raw.get("max_len") {
            "auto" | "" => None,
            _ => Some(r.positive("max_len")?),
        };
        let dataset = DatasetOptions {
            split,
            max_len,
            min_prefix_len: r.positive("min_prefix_len")?,
        };

        let model = match raw.get("model") {
            "mean" => ModelSpec::Mean,
            "linear" => ModelSpec::Linear {
                l2: r.non_negative("l2")?,
            },
            "recurrent" => ModelSpec::Recurrent(RecurrentConfig {
                hidden: r.positive("hidden")?,
                learning_rate: r.non_negative("learning_rate")?,
                epochs: r.positive("epochs")?,
                batch_size: r.positive("batch_size")?,
                patience: r.positive("patience")?,
                clip_norm: r.non_negative("clip_norm")?,
            }),
            other => {
                return Err(CliError::config(
                    "model",
                    format!("`{other}` is not one of mean, linear, recurrent"),
                ))
            }
        };
        let estimator = match raw.get("estimator") {
            "auto" => EstimatorChoice::Auto,
            "exact" => EstimatorChoice::Exact,
            "sampled" => EstimatorChoice::Sampled,
            other => {
                return Err(CliError::config(
                    "estimator",
                    format!("`{other}` is not one of auto, exact, sampled"),
                ))
            }
        };
        let shapley = ShapleyOptions {
            background_size: r.positive("background_size")?,
            exact_cap: r.num("exact_cap")?,
            samples: r.positive("samples")?,
            seed: r.num("shapley_seed")?,
        };
        let report = ReportOptions {
            window: r.positive("window")?,
            top_rows: r.num("top_rows")?,
            top_k: r.num("top_k")?,
        };

        let synth = SynthSpec {
            n_traces: r.positive("synth_traces")?,
            seed: r.num("synth_seed")?,
            noise: r.non_negative("synth_noise")?,
            step_seconds: r.float("synth_step_seconds")?,
            rework_probability: r.non_negative("synth_rework_probability")?,
            cost_per_event: match optional(raw.get("synth_cost_per_event")) {
                None => None,
                Some(_) => Some(r.float("synth_cost_per_event")?),
            },
            rules: parse_rules(raw.get("synth_rules"))?,
            ..SynthSpec::default()
        };

        Ok(Self {
            input: path("input"),
            running_cases: path("running_cases"),
            output_dir: PathBuf::from(raw.get("output_dir")),
            mapping,
            kpi,
            encoding,
            dataset,
            model,
            model_seed: r.num("model_seed")?,
            estimator,
            shapley,
            delta: r.non_negative("delta")?,
            report,
            threads: r.positive("threads")?,
            synth,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let raw = RawConfig::parse("").unwrap();
        let cfg = RunConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.kpi, KpiLabeler::RemainingTime);
        assert_eq!(cfg.dataset.split, SplitConfig::default());
        assert_eq!(cfg.shapley, ShapleyOptions::default());
        assert_eq!(cfg.report, ReportOptions::default());
        assert_eq!(cfg.encoding, EncodingOptions::default());
        assert_eq!(cfg.model, ModelSpec::Linear { l2: 0.0 });
    }

    #[test]
    fn rendering_round_trips() {
        let mut raw =
            RawConfig::parse("# comment\nkpi = activity_occurrence\nkpi_target = Escalate\n")
                .unwrap();
        raw.set("threads", "4").unwrap();
        let again = RawConfig::parse(&raw.to_text()).unwrap();
        assert_eq!(again, raw);
    }

    #[test]
    fn errors_name_the_field_or_line() {
        let err = RawConfig::parse("delta = 1\nbogus = 2").unwrap_err();
        assert!(err.to_string().contains("config line 2"), "{err}");
        let raw = RawConfig::parse("model = forest").unwrap();
        let err = RunConfig::from_raw(&raw).unwrap_err();
        assert!(err.to_string().contains("`model`"), "{err}");
        let raw = RawConfig::parse("kpi = activity_occurrence").unwrap();
        let err = RunConfig::from_raw(&raw).unwrap_err();
        assert!(err.to_string().contains("`kpi_target`"), "{err}");
        let raw = RawConfig::parse("split_train = 0.9").unwrap();
        assert!(RunConfig::from_raw(&raw).is_err());
    }

    #[test]
    fn synth_rules_parse() {
        let rules = parse_rules("TYPE=slow:delay:3600; CHANNEL=phone:force:Escalate").unwrap();
        assert_eq!(rules[0].effect, Effect::Delay(3600.0));
        assert_eq!(rules[1].attribute, "CHANNEL");
        assert_eq!(rules[1].effect, Effect::Force("Escalate".into()));
        assert!(parse_rules("TYPE:delay:1").is_err());
        assert!(parse_rules("TYPE=slow:teleport:1").is_err());
    }
}
