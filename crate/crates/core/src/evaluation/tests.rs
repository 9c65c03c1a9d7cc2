use chrono::Days;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::data::{generate, infill, prepare, PipelineConfig, SynthConfig};
use crate::models::{build_model, ModelConfig};

fn dates(n: usize) -> Vec<NaiveDate> {
    let d0 = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    (0..n).map(|i| d0 + Days::new(i as u64)).collect()
}

#[test]
fn kge_examples() {
    let obs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let k = kge(&obs, &obs).unwrap();
    assert_eq!((k.r, k.alpha, k.beta), (1.0, 1.0, 1.0));
    assert!((k.kge - 1.0).abs() < 1e-12);

    let sim: Vec<f64> = obs.iter().map(|v| 2.0 * v).collect();
    let k = kge(&sim, &obs).unwrap();
    assert!(
        (k.r - 1.0).abs() < 1e-12 && (k.alpha - 2.0).abs() < 1e-12 && (k.beta - 2.0).abs() < 1e-12
    );
    assert!((k.kge - (1.0 - 2f64.sqrt())).abs() < 1e-12);
    assert!((k.kge + 0.414214).abs() < 1e-6);

    let k = kge(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!((k.r - 1.0).abs() < 1e-12 && (k.alpha - 1.0).abs() < 1e-12);
    assert!((k.beta - 1.5).abs() < 1e-12 && (k.kge - 0.5).abs() < 1e-12);
}

#[test]
fn degenerate_series() {
    assert!(
        matches!(kge(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::Evaluation(m)) if m.contains("variance"))
    );
    assert!(
        matches!(kge(&[1.0, 2.0], &[-1.0, 1.0]), Err(Error::Evaluation(m)) if m.contains("mean"))
    );
    assert!(kge(&[1.0], &[1.0]).is_err());
    let k = kge(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!(k.sim_constant && k.r == 0.0 && k.alpha == 0.0);
}

proptest! {
    #[test]
    fn scaling_sim_scales_alpha_and_beta(
        obs in prop::collection::vec(0.1f64..100.0, 3..50),
        noise in prop::collection::vec(-1.0f64..1.0, 50),
        c in 0.1f64..10.0,
    ) {
        let sim: Vec<f64> = obs.iter().zip(&noise).map(|(o, e)| o + 5.0 * e).collect();
        let base = kge(&sim, &obs).unwrap();
        prop_assume!(!base.sim_constant);
        let scaled: Vec<f64> = sim.iter().map(|v| c * v).collect();
        let k = kge(&scaled, &obs).unwrap();
        prop_assert!((k.r - base.r).abs() < 1e-9);
        prop_assert!((k.alpha - c * base.alpha).abs() < 1e-9 * (1.0 + k.alpha));
        prop_assert!((k.beta - c * base.beta).abs() < 1e-9 * (1.0 + k.beta.abs()));
        let self_score = kge(&obs, &obs).unwrap();
        prop_assume!(!self_score.sim_constant);
        prop_assert!((self_score.kge - 1.0).abs() < 1e-12);
    }
}

#[test]
fn identity_forecast_scores_one() {
    let obs: Vec<f64> = (0..40).map(|i| 3.0 + (i as f64 * 0.3).sin()).collect();
    let r = score_forecasts("b", ModelKind::Lstm, &dates(40), &obs, &obs, &[]).unwrap();
    assert!((r.kge.kge - 1.0).abs() < 1e-12);
    assert_eq!(r.hydrograph.len(), 40);
    assert!(r.quantile_losses.is_empty());
}

#[test]
fn calibrated_band_covers_eighty_percent() {
    // Observations are μ_t + σε with ε ~ N(0, 1); a calibrated forecaster
    // issues μ_t + σΦ⁻¹(q), so the 10–90 band should hold 80% of them.
    const Z90: f64 = 1.281_551_565_544_600_4;
    let levels = [0.1, 0.5, 0.9];
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut obs = Vec::with_capacity(n);
    let mut pred = Vec::with_capacity(3 * n);
    for t in 0..n {
        let mu = 10.0 + 3.0 * (t as f64 / 58.0).sin();
        let sigma = 0.5 + 0.3 * (t as f64 / 101.0).cos().abs();
        obs.push(mu + sigma * unit.sample(&mut rng));
        pred.extend([mu - sigma * Z90, mu, mu + sigma * Z90]);
    }
    let r = score_forecasts("b", ModelKind::Tft, &dates(n), &obs, &pred, &levels).unwrap();
    let coverage = r.coverage(0.1, 0.9).unwrap();
    assert!((coverage - 0.8).abs() < 0.1, "coverage {coverage}");
    // A calibrated normal forecast has pinball loss σφ(Φ⁻¹(q)), largest at
    // the median.
    assert!(
        r.quantile_losses[1] > r.quantile_losses[0] && r.quantile_losses[1] > r.quantile_losses[2]
    );
    assert!(r.coverage(0.25, 0.9).is_err());
}

#[test]
fn evaluation_covers_the_test_split_without_side_effects() {
    let cfg = SynthConfig {
        n_basins: 1,
        years: 1,
        gap_rate: 0.0,
        ..SynthConfig::default()
    };
    let r = infill(&generate(&cfg)[0]).unwrap();
    let pipeline = PipelineConfig {
        lookback: 8,
        ..PipelineConfig::default()
    };
    let data = prepare(&[r], &pipeline).unwrap().1.remove(0);
    for kind in ModelKind::ALL {
        let config = ModelConfig {
            lookback: 8,
            ..ModelConfig::for_kind(kind)
        };
        let model = build_model(&config, data.dims(), 1).unwrap();
        let before = model.store.checksum();
        let result = evaluate(&model, &data).unwrap();
        assert_eq!(model.store.checksum(), before);
        assert_eq!(result.hydrograph.len(), data.splits.test.len());
        assert_eq!(
            result.hydrograph[0].date,
            data.sample(data.splits.test.start).date
        );
        assert!(result.kge.kge <= 1.0);
        assert_eq!(result.levels.len(), if kind.is_quantile() { 7 } else { 0 });
        assert_eq!(evaluate(&model, &data).unwrap(), result);

        let dir = tempfile::tempdir().unwrap();
        let h = dir.path().join("h.csv");
        write_hydrograph(&h, &result).unwrap();
        let text = std::fs::read_to_string(&h).unwrap();
        assert_eq!(text.lines().count(), data.splits.test.len() + 1);
        if kind.is_quantile() {
            assert!(text.starts_with("date,observed,predicted,p02,p10,p25,p50,p75,p90,p98\n"));
        }
    }
}
