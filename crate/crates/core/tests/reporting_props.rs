use std::collections::BTreeMap;

use proptest::prelude::*;
use shapmon::explainer::{ExplanationRecord, Relation};
use shapmon::reporting::{
    aggregate_heatmap, heatmap_csv, heatmap_svg, label, online_row, Medians, PredictionFormat,
    ReportOptions,
};

fn record() -> impl Strategy<Value = ExplanationRecord> {
    (
        0..4usize,
        0..3usize,
        0..3usize,
        -6..=0i64,
        -3.0..3.0f64,
        -10.0..10.0f64,
    )
        .prop_map(|(attr, rel, value, offset, weight, numeric)| {
            let attribute = ["ACTIVITY", "ROLE", "AMOUNT", "WAIT"][attr].to_string();
            let numeric_attr = attr >= 2;
            let relation = if numeric_attr {
                Relation::Numeric
            } else if rel == 0 {
                Relation::NotEquals
            } else {
                Relation::Equals
            };
            ExplanationRecord {
                attribute,
                relation,
                value: (!numeric_attr).then(|| ["a", "b", "c"][value].to_string()),
                timestep_offset: offset,
                weight: if weight == 0.0 { 1.0 } else { weight },
                numeric_value: numeric_attr.then_some(numeric),
            }
        })
}

fn prefixes() -> impl Strategy<Value = Vec<Vec<ExplanationRecord>>> {
    prop::collection::vec(prop::collection::vec(record(), 0..8), 0..30)
}

fn options() -> impl Strategy<Value = ReportOptions> {
    (1..7usize, 1..12usize, 1..4usize).prop_map(|(window, top_rows, top_k)| ReportOptions {
        window,
        top_rows,
        top_k,
    })
}

fn medians() -> Medians {
    Medians::from([("AMOUNT".to_string(), 0.0)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cells_are_net_prefix_counts(prefixes in prefixes(), options in options()) {
        let m = medians();
        let hm = aggregate_heatmap(&prefixes, &m, &options, "kpi");
        prop_assert!(hm.rows.len() <= options.top_rows);

        // Independent oracle: per-prefix sign of the summed weight.
        let mut net: BTreeMap<(String, i64), i64> = BTreeMap::new();
        for records in &prefixes {
            let mut sums: BTreeMap<(String, i64), f64> = BTreeMap::new();
            for r in records {
                *sums.entry((label(r, &m), r.timestep_offset)).or_default() += r.weight;
            }
            for (key, s) in sums {
                *net.entry(key).or_default() += if s > 0.0 { 1 } else if s < 0.0 { -1 } else { 0 };
            }
        }
        let mut total = 0i64;
        for row in &hm.rows {
            for c in 0..options.window {
                let offset = -(c as i64);
                let cell = hm.cell(row, offset).unwrap();
                prop_assert_eq!(cell, net.get(&(row.clone(), offset)).copied().unwrap_or(0));
                total += cell.abs();
            }
        }
        prop_assert!(total as usize <= prefixes.len() * hm.rows.len() * options.window);
    }

    #[test]
    fn rendering_is_deterministic(prefixes in prefixes(), options in options()) {
        let m = medians();
        let a = aggregate_heatmap(&prefixes, &m, &options, "kpi");
        let b = aggregate_heatmap(&prefixes, &m, &options, "kpi");
        prop_assert_eq!(heatmap_csv(&a), heatmap_csv(&b));
        prop_assert_eq!(heatmap_svg(&a), heatmap_svg(&b));
    }

    #[test]
    fn online_strings_are_heatmap_labels(records in prop::collection::vec(record(), 0..10), k in 1..4usize) {
        let m = medians();
        let case = shapmon::reporting::OnlineCase { case_id: "c".into(), prediction: 90061.0, records: records.clone() };
        let row = online_row(&case, k, PredictionFormat::Duration, &m);
        prop_assert_eq!(&row.prediction, "1d 1h 1m");
        prop_assert!(row.increasing.len() <= k && row.decreasing.len() <= k);
        let labels: Vec<(String, i64)> = records.iter().map(|r| (label(r, &m), r.timestep_offset)).collect();
        for text in row.increasing.iter().chain(&row.decreasing) {
            let found = labels.iter().any(|(l, o)| {
                if *o == 0 { text == l } else { *text == format!("{l} ({o})") }
            });
            prop_assert!(found, "{} not constructible from {:?}", text, labels);
        }
    }
}
