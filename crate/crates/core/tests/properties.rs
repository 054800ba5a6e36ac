use proptest::prelude::*;

use sinkclean::anomaly::confidence_interval;
use sinkclean::arima::{select_model, SelectionBounds};
use sinkclean::sink::{regularize, Channel, SensorReading};
use sinkclean::timeseries::{acf, difference, pacf, TimeSeries};

fn finite_series(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, min..max)
}

fn non_constant(x: &[f64]) -> bool {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() > 1e-6 * x.len() as f64
}

proptest! {
    #[test]
    fn difference_round_trips(x in finite_series(5, 60), d in 0usize..=2) {
        let ts = TimeSeries::from_values(x.clone()).unwrap();
        let back = difference(&ts, d).unwrap().undifference();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
        prop_assert_eq!(back.len(), x.len());
    }

    #[test]
    fn acf_ignores_shift_and_positive_scale(x in finite_series(10, 80), shift in -1e3f64..1e3, scale in 0.1f64..10.0) {
        prop_assume!(non_constant(&x));
        let y: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        let lags = 5.min(x.len() - 1);
        let (a, b) = (acf(&x, lags).unwrap(), acf(&y, lags).unwrap());
        for k in 0..=lags {
            prop_assert!((a.at(k) - b.at(k)).abs() < 1e-8);
        }
    }

    #[test]
    fn pacf_lag_one_matches_acf(x in finite_series(10, 80)) {
        prop_assume!(non_constant(&x));
        let lags = 3.min(x.len() - 1);
        prop_assert!((pacf(&x, lags).unwrap().at(1) - acf(&x, lags).unwrap().at(1)).abs() < 1e-12);
    }

    #[test]
    fn wider_level_nests(mu in -1e3f64..1e3, sigma in 0.0f64..100.0, a in 0.5f64..0.99, b in 0.5f64..0.99) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let inner = confidence_interval(mu, sigma, lo).unwrap();
        let outer = confidence_interval(mu, sigma, hi).unwrap();
        prop_assert!(outer.lower <= inner.lower && inner.upper <= outer.upper);
    }

    #[test]
    fn regularization_conserves_and_is_idempotent(
        offsets in prop::collection::vec((0u32..60, -0.8f64..0.8, prop::option::of(-50f64..50.0)), 1..80),
    ) {
        let mut readings: Vec<SensorReading> = offsets
            .iter()
            .map(|&(k, jitter, value)| SensorReading {
                node_id: 1,
                timestamp: 2.0 * f64::from(k) + jitter,
                channel: Channel::Light,
                value,
            })
            .collect();
        readings.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let once = regularize(&readings, 2.0, 0.25).unwrap();
        prop_assert_eq!(
            once.slotted() + once.displaced.len() + once.out_of_tolerance.len(),
            readings.len()
        );
        let again = regularize(&once.grid.to_readings(1, Channel::Light), 2.0, 0.25).unwrap();
        prop_assert_eq!(&again.grid, &once.grid);
        prop_assert!(again.displaced.is_empty() && again.out_of_tolerance.is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn selection_is_deterministic(x in finite_series(60, 120)) {
        prop_assume!(non_constant(&x));
        let ts = TimeSeries::from_values(x).unwrap();
        let bounds = SelectionBounds { p_max: 4, q_max: 4, min_train: 50, ..SelectionBounds::default() };
        let a = select_model(&ts, &bounds);
        let b = select_model(&ts, &bounds);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.model, b.model),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "one run failed and the other did not"),
        }
    }
}
