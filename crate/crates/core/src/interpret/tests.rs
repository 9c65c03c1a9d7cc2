use proptest::prelude::*;

use super::*;
use crate::data::{generate, infill, prepare, PipelineConfig, SynthConfig};
use crate::models::{build_model, ModelConfig};

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2005, 6, 15).unwrap()
}

#[test]
fn single_variable_gets_all_weight() {
    let m = importance_map(&names(1), &[1.0, 1.0, 1.0]).unwrap();
    assert_eq!(m[0].weight, 1.0);
}

#[test]
fn uniform_attention_over_a_year() {
    let lookback = 365;
    let mut row = vec![1.0 / 366.0; lookback + 1];
    row[lookback] = 0.5;
    let p = attention_profile(&row, lookback, &[day()], BinScheme::Fixed30).unwrap();
    for b in &p[..11] {
        assert!((b.mean_pct - 3000.0 / 365.0).abs() < 1e-9, "{}", b.mean_pct);
    }
    assert!((p[11].mean_pct - 3500.0 / 365.0).abs() < 1e-9);
    assert!((p[0].mean_pct - 8.219).abs() < 1e-3 && (p[11].mean_pct - 9.589).abs() < 1e-3);
    assert!((p.iter().map(|b| b.mean_pct).sum::<f64>() - 100.0).abs() < 0.1);
    assert_eq!(p[0].label, "days 1-30");
    assert_eq!(p[11].label, "days 331+");
    let u = uniform_profile(365);
    assert!((u[0] - 3000.0 / 365.0).abs() < 1e-9 && (u[11] - 3500.0 / 365.0).abs() < 1e-9);
    let u = uniform_profile(90);
    assert!((u[0] - 100.0 / 3.0).abs() < 1e-9 && u[3] == 0.0);
}

#[test]
fn attention_on_the_latest_day_fills_bin_one() {
    let lookback = 365;
    let mut row = vec![0.0; lookback + 1];
    row[lookback - 1] = 0.7;
    row[lookback] = 0.3;
    let p = attention_profile(&row, lookback, &[day()], BinScheme::Fixed30).unwrap();
    assert_eq!(p[0].mean_pct, 100.0);
    assert!(p[1..].iter().all(|b| b.mean_pct == 0.0));
}

#[test]
fn calendar_bins_follow_months() {
    let target = NaiveDate::from_ymd_opt(2005, 3, 1).unwrap();
    // Yesterday was 28 February: bin 1 is February, 31 January is bin 2.
    assert_eq!(BinScheme::Calendar.bin(1, target), 0);
    assert_eq!(BinScheme::Calendar.bin(28, target), 0);
    assert_eq!(BinScheme::Calendar.bin(29, target), 1);
    assert_eq!(BinScheme::Calendar.bin(400, target), 11);
    assert_eq!(fixed_bin(30), 0);
    assert_eq!(fixed_bin(31), 1);
    assert_eq!(fixed_bin(365), 11);
}

proptest! {
    #[test]
    fn profiles_sum_to_one_hundred(
        raw in prop::collection::vec(prop::collection::vec(0.001f64..1.0, 41), 1..6),
        calendar in any::<bool>(),
    ) {
        let scheme = if calendar { BinScheme::Calendar } else { BinScheme::Fixed30 };
        let rows: Vec<f64> = raw.concat();
        let dates: Vec<NaiveDate> = (0..raw.len()).map(|i| day() + Days::new(17 * i as u64)).collect();
        let p = attention_profile(&rows, 40, &dates, scheme).unwrap();
        prop_assert!((p.iter().map(|b| b.mean_pct).sum::<f64>() - 100.0).abs() < 0.1);
        prop_assert!(p.iter().all(|b| b.p25 <= b.p75));
    }

    #[test]
    fn importance_is_permutation_equivariant(
        w in prop::collection::vec(0.01f64..1.0, 20),
        shift in 1usize..4,
    ) {
        let m = 4;
        let n = names(m);
        let perm: Vec<usize> = (0..m).map(|i| (i + shift) % m).collect();
        let base = importance_map(&n, &w).unwrap();
        let pn: Vec<String> = perm.iter().map(|&j| n[j].clone()).collect();
        let pw: Vec<f64> = w.chunks(m).flat_map(|r| perm.iter().map(|&j| r[j]).collect::<Vec<_>>()).collect();
        let permuted = importance_map(&pn, &pw).unwrap();
        for (k, &j) in perm.iter().enumerate() {
            prop_assert_eq!(&permuted[k].variable, &base[j].variable);
            prop_assert!((permuted[k].weight - base[j].weight).abs() < 1e-12);
        }
        prop_assert!((base.iter().map(|i| i.weight).sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn report_from_an_untrained_tft() {
    let cfg = SynthConfig {
        n_basins: 2,
        years: 1,
        gap_rate: 0.0,
        ..SynthConfig::default()
    };
    let records: Vec<_> = generate(&cfg).iter().map(|r| infill(r).unwrap()).collect();
    let pipeline = PipelineConfig {
        lookback: 40,
        calendar_features: true,
        ..PipelineConfig::default()
    };
    let data = prepare(&records, &pipeline).unwrap().1.remove(0);
    let config = ModelConfig {
        lookback: 40,
        ..ModelConfig::default()
    };
    let model = build_model(&config, data.dims(), 9).unwrap();
    let samples: Vec<usize> = data.splits.test.clone().collect();
    let report = interpret(&model, &data, &samples, BinScheme::Fixed30).unwrap();
    assert_eq!(report.sample_count, samples.len());
    for map in [
        &report.static_importance,
        &report.encoder_importance,
        &report.decoder_importance,
    ] {
        assert!(!map.is_empty());
        assert!((map.iter().map(|i| i.weight).sum::<f64>() - 1.0).abs() < 1e-6);
    }
    assert_eq!(report.encoder_importance.len(), 6);
    assert_eq!(report.static_importance.len(), 4);
    assert_eq!(report.decoder_importance.len(), 3);
    assert!((report.merged_ranking.iter().map(|r| r.weight).sum::<f64>() - 1.0).abs() < 1e-6);
    assert!(
        (report
            .attention_profile
            .iter()
            .map(|b| b.mean_pct)
            .sum::<f64>()
            - 100.0)
            .abs()
            < 0.1
    );
    assert_eq!(
        interpret(&model, &data, &samples, BinScheme::Fixed30).unwrap(),
        report
    );

    let dir = tempfile::tempdir().unwrap();
    write_tables(dir.path(), &report).unwrap();
    let profile = std::fs::read_to_string(dir.path().join("attention_profile.csv")).unwrap();
    assert_eq!(profile.lines().count(), 13);

    let lstm = build_model(
        &ModelConfig {
            lookback: 40,
            ..ModelConfig::for_kind(ModelKind::Lstm)
        },
        data.dims(),
        9,
    )
    .unwrap();
    assert!(matches!(
        interpret(&lstm, &data, &samples, BinScheme::Fixed30),
        Err(Error::Unsupported(_))
    ));
}
