use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use polindex::analytics::aggregate::{aggregate_day, AggregateMode, TopicValue};
use polindex::analytics::events::event_triggered_average;
use polindex::metric::within_pair_count;
use polindex::mlp::{argmax, softmax};
use polindex::{poli_approx, poli_approx_with, poli_exact, ApproxConfig, LabeledCohort};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Rows = Vec<(String, Vec<f64>)>;

fn rows_strategy(dim: usize) -> impl Strategy<Value = Rows> {
    proptest::collection::vec((0usize..4, proptest::collection::vec(-10.0f64..10.0, dim)), 6..40).prop_map(|v| {
        v.into_iter()
            .enumerate()
            // the first four rows seed two groups with two members each
            .map(|(i, (g, x))| (format!("g{}", if i < 4 { i % 2 } else { g }), x))
            .collect()
    })
}

fn cohort(rows: &Rows) -> LabeledCohort {
    LabeledCohort::from_rows(rows.clone()).unwrap()
}

fn gaussians(n: usize, delta: f64, seed: u64) -> LabeledCohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nrm = Normal::new(0.0, 1.0).unwrap();
    LabeledCohort::from_rows((0..n).map(|i| {
        let g = i % 2;
        let v: Vec<f64> = (0..4).map(|d| nrm.sample(&mut rng) + if d == 0 { g as f64 * delta } else { 0.0 }).collect();
        (if g == 0 { "a" } else { "b" }, v)
    }))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bounds_and_pair_count(rows in rows_strategy(3)) {
        let r = poli_exact(&cohort(&rows)).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.poli));
        prop_assert!(r.s_min <= r.s_w + 1e-9 && r.s_w <= r.s_max + 1e-9);
        prop_assert_eq!(r.m, within_pair_count(r.group_sizes.values().copied()));
        let by_hand: u64 = r.group_sizes.values().map(|&k| (k * k.saturating_sub(1) / 2) as u64).sum();
        prop_assert_eq!(r.m, by_hand);
    }

    #[test]
    fn translation_rotation_scaling(rows in rows_strategy(2), t in (-100.0f64..100.0, -100.0f64..100.0),
                                    angle in 0.0f64..std::f64::consts::TAU, scale in 0.001f64..1000.0) {
        let base = poli_exact(&cohort(&rows)).unwrap().poli;
        let (s, c) = angle.sin_cos();
        let moved: Rows = rows
            .iter()
            .map(|(g, v)| {
                let (x, y) = (v[0] * c - v[1] * s, v[0] * s + v[1] * c);
                (g.clone(), vec![scale * x + t.0, scale * y + t.1])
            })
            .collect();
        prop_assert!((poli_exact(&cohort(&moved)).unwrap().poli - base).abs() <= 1e-9);
    }

    #[test]
    fn renaming_and_order_are_exact(rows in rows_strategy(3), rot in 0usize..40) {
        let base = poli_exact(&cohort(&rows)).unwrap();
        let mut shuffled: Rows = rows.iter().map(|(g, v)| (format!("{g}-renamed"), v.clone())).collect();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let other = poli_exact(&cohort(&shuffled)).unwrap();
        prop_assert_eq!(base.poli.to_bits(), other.poli.to_bits());
        prop_assert_eq!(base.s_w.to_bits(), other.s_w.to_bits());
        prop_assert_eq!(base.s_min.to_bits(), other.s_min.to_bits());
        prop_assert_eq!(base.s_max.to_bits(), other.s_max.to_bits());
        prop_assert_eq!(base.m, other.m);
    }

    #[test]
    fn approx_trace_semantics(seed in 0u64..1000, fraction in 0.05f64..0.6, jobs in 1usize..4) {
        let c = gaussians(200, 1.0, 3);
        let cfg = ApproxConfig { seed, fraction, step_size: 0.1, repeats: 4, ..ApproxConfig::default() };
        let a = poli_approx(&c, &cfg).unwrap();
        let b = poli_approx_with(&c, &cfg, jobs).unwrap();
        prop_assert_eq!(&a, &b);
        let trace = a.trace.unwrap();
        prop_assert!(!trace.rounds.is_empty());
        for round in &trace.rounds {
            let n = round.values.len() as f64;
            let mean = round.values.iter().sum::<f64>() / n;
            let std = (round.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            let cv = if std == 0.0 { 0.0 } else { std / mean.abs() };
            prop_assert!((round.cv - cv).abs() <= 1e-12);
        }
        let last = trace.rounds.last().unwrap();
        prop_assert!(trace.exact_fallback || last.cv <= cfg.epsilon);
    }

    #[test]
    fn events_equal_direct_recomputation(vals in proptest::collection::vec(proptest::option::weighted(0.9, 0.0f64..1.0), 40),
                                         picks in proptest::collection::btree_set(0u64..40, 1..6), w in 1i64..6) {
        let day0 = NaiveDate::from_ymd_opt(2020, 10, 11).unwrap();
        let series: BTreeMap<NaiveDate, Option<f64>> =
            vals.iter().enumerate().map(|(i, v)| (day0 + Days::new(i as u64), *v)).collect();
        let events: Vec<NaiveDate> = picks.iter().map(|&d| day0 + Days::new(d)).collect();
        let Ok(ev) = event_triggered_average(&series, &events, w) else { return Ok(()) };
        for (k, off) in ev.offsets.iter().enumerate() {
            let got: Vec<f64> = events
                .iter()
                .filter_map(|e| series.get(&(*e + chrono::Duration::days(*off))).copied().flatten())
                .collect();
            prop_assert_eq!(ev.count[k], got.len());
            if got.is_empty() {
                prop_assert!(ev.mean[k].is_none());
                continue;
            }
            let n = got.len() as f64;
            let mean = got.iter().sum::<f64>() / n;
            let std = (got.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            prop_assert_eq!(ev.mean[k], Some(mean));
            prop_assert_eq!(ev.std[k], Some(std));
        }
    }

    #[test]
    fn equal_shares_weighted_is_mean(vals in proptest::collection::vec(0.0f64..1.0, 1..5), vol in 1u64..1000) {
        let tv: Vec<TopicValue> = vals.iter().map(|&p| TopicValue { poli: Some(p), volume: vol }).collect();
        let w = aggregate_day(&tv, AggregateMode::Weighted).unwrap();
        let u = aggregate_day(&tv, AggregateMode::Unweighted).unwrap();
        prop_assert!((w - u).abs() <= 1e-12);
    }

    #[test]
    fn argmax_ignores_logit_shift(logits in proptest::collection::vec(-50.0f64..50.0, 2..8), shift in -100.0f64..100.0) {
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        prop_assert_eq!(argmax(&softmax(&logits)), argmax(&softmax(&shifted)));
    }
}

#[test]
fn separation_never_lowers_expected_poli() {
    let levels = [0.0, 1.0, 3.0];
    let means: Vec<f64> = levels
        .iter()
        .map(|&d| (0..10).map(|s| poli_exact(&gaussians(120, d, s)).unwrap().poli).sum::<f64>() / 10.0)
        .collect();
    assert!(means[0] <= means[1] && means[1] <= means[2], "{means:?}");
}

#[test]
fn larger_fraction_weakly_lowers_error() {
    let c = gaussians(3000, 1.0, 8);
    let exact = poli_exact(&c).unwrap().poli;
    let errs: Vec<f64> = [0.01, 0.05, 0.2]
        .iter()
        .map(|&fraction| {
            (0..40)
                .map(|seed| {
                    let cfg = ApproxConfig { fraction, seed, ..ApproxConfig::default() };
                    (poli_approx(&c, &cfg).unwrap().poli - exact).abs()
                })
                .sum::<f64>()
                / 40.0
        })
        .collect();
    assert!(errs[0] >= errs[1] && errs[1] >= errs[2], "{errs:?}");
}
