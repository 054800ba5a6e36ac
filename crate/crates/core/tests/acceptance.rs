//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sinkclean::anomaly::{
    confidence_interval, error_percent, Decision, NodeStreamState, StreamConfig,
};
use sinkclean::arima::{
    forecast, select_model, ArimaModel, ArimaState, SelectionBounds, MAX_HORIZON,
};
use sinkclean::cli::{cmd_clean, ConfigArgs, RunConfig};
use sinkclean::simulate::{inject_spikes, ArmaProcess};
use sinkclean::timeseries::{acf, pacf, TimeSeries};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = outcome.pass && in_time;
    println!(
        "{} criterion {id}: {} [{:.2}s, budget {}s{}]",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", over budget" }
    );
    pass
}

// upper, lower, actual, forecast, std err, error %
const TABLE_1: [(f64, f64, f64, f64, f64, f64); 5] = [
    (369.32, 343.90, 363.0, 356.61, 6.48, 1.75),
    (376.92, 347.29, 353.0, 362.10, 7.55, 2.58),
    (376.44, 340.64, 346.0, 358.54, 9.13, 3.62),
    (379.04, 336.67, 360.0, 357.85, 10.80, 0.59),
    (384.79, 335.37, 364.0, 360.08, 12.60, 1.07),
];

fn table_arithmetic() -> Outcome {
    let mut worst_bound = 0.0f64;
    let mut worst_err = 0.0f64;
    for (upper, lower, actual, mu, se, err) in TABLE_1 {
        let ci = confidence_interval(mu, se, 0.95).unwrap();
        worst_bound = worst_bound
            .max((ci.upper - upper).abs())
            .max((ci.lower - lower).abs());
        worst_err = worst_err.max((error_percent(actual, mu).unwrap() - err).abs());
    }
    Outcome {
        pass: worst_bound <= 0.05 && worst_err <= 0.02,
        detail: format!("max bound deviation {worst_bound:.4} (<= 0.05), max error% deviation {worst_err:.4} (<= 0.02)"),
    }
}

/// Stationary AR coefficients from partial autocorrelations in (-1, 1).
fn ar_from_partials(partials: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::new();
    for &a in partials {
        let prev = phi.clone();
        phi = prev
            .iter()
            .zip(prev.iter().rev())
            .map(|(p, r)| p - a * r)
            .collect();
        phi.push(a);
    }
    phi
}

fn std_error_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    for _ in 0..100 {
        let p = rng.random_range(0..=5);
        let q = rng.random_range(0..=5);
        let d = rng.random_range(0..=2);
        let partials: Vec<f64> = (0..p).map(|_| rng.random_range(-0.95..0.95)).collect();
        let theta: Vec<f64> = (0..q).map(|_| rng.random_range(-1.5..1.5)).collect();
        let sigma2 = rng.random_range(0.01..10.0);
        let model =
            ArimaModel::new(d, ar_from_partials(&partials), theta, 0.0, sigma2, 500).unwrap();
        let history: Vec<f64> = (0..60).map(|_| rng.random_range(-5.0..5.0)).collect();
        let f = forecast(
            &model,
            &TimeSeries::from_values(history).unwrap(),
            MAX_HORIZON,
        )
        .unwrap();
        if f.std_errors.windows(2).any(|w| w[1] < w[0]) {
            violations += 1;
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!(
            "{violations} of 100 random models with a decreasing std error over h=1..25"
        ),
    }
}

fn order_recovery() -> Outcome {
    let process = ArmaProcess::new(vec![0.5, 0.3], vec![], 0.0, 1.0).unwrap();
    let bounds = SelectionBounds::default();
    let (mut order_hits, mut white) = (0, 0);
    for seed in 0..100 {
        let series = TimeSeries::from_values(process.generate(2000, seed)).unwrap();
        let sel = select_model(&series, &bounds).unwrap();
        order_hits += usize::from(sel.model.p() == 2);
        white += usize::from(sel.diagnostics.pass);
    }
    Outcome {
        pass: order_hits >= 80 && white >= 90,
        detail: format!("AR(2) p=2 selected in {order_hits}/100 (>= 80), residual diagnostics pass in {white}/100 (>= 90)"),
    }
}

fn stream_config() -> StreamConfig {
    StreamConfig {
        level: 0.95,
        ..StreamConfig::default()
    }
}

fn rejection_rate(phi: f64) -> f64 {
    let process = ArmaProcess::new(vec![phi], vec![], 10.0, 1.0).unwrap();
    let train = SelectionBounds::default().min_train;
    let mut rejected = 0;
    for seed in 0..10 {
        let values = process.generate(train + 5000, 1000 + seed);
        let training = TimeSeries::from_values(values[..train].to_vec()).unwrap();
        let mut state = NodeStreamState::train(1, &training, stream_config()).unwrap();
        rejected += values[train..]
            .iter()
            .filter(|&&x| state.process_reading(Some(x)).unwrap().decision == Decision::Rejected)
            .count();
    }
    rejected as f64 / 50_000.0
}

fn type_one_error() -> Outcome {
    let rate = rejection_rate(0.7);
    // weakly correlated stream for context only; anomaly runs cascade less
    let weak = rejection_rate(0.3);
    Outcome {
        pass: (rate - 0.05).abs() <= 0.02,
        detail: format!("AR(1) phi=0.7: mean rejection rate {rate:.4} over 10 seeds (0.05 +/- 0.02); phi=0.3 for reference: {weak:.4}"),
    }
}

fn detection_power() -> Outcome {
    let sigma = 1.0;
    let process = ArmaProcess::new(vec![0.7], vec![], 10.0, sigma).unwrap();
    let train = SelectionBounds::default().min_train;
    let mut values = process.generate(train + 50 * 40 + 100, 42);
    let indices: Vec<usize> = (0..50).map(|i| train + 20 + 40 * i).collect();
    inject_spikes(&mut values, &indices, 6.0 * sigma);

    let training = TimeSeries::from_values(values[..train].to_vec()).unwrap();
    let mut state = NodeStreamState::train(1, &training, stream_config()).unwrap();
    let (mut caught, mut outside) = (0, 0);
    for (i, &x) in values.iter().enumerate().skip(train) {
        let v = state.process_reading(Some(x)).unwrap();
        if indices.contains(&i) && v.decision == Decision::Rejected {
            caught += 1;
            if !v.interval.contains(v.output_value()) {
                outside += 1;
            }
        }
    }

    // a run of five spikes on a fresh stream
    let mut run = process.generate(train + 30, 43);
    let start = train + 10;
    let tail = run[start..start + 5].to_vec();
    let shifted: Vec<f64> = tail.iter().map(|x| x + 6.0 * sigma).collect();
    run[start..start + 5].copy_from_slice(&shifted);
    let training = TimeSeries::from_values(run[..train].to_vec()).unwrap();
    let mut state = NodeStreamState::train(2, &training, stream_config()).unwrap();
    let mut run_rejected = 0;
    for (i, &x) in run.iter().enumerate().skip(train) {
        let v = state.process_reading(Some(x)).unwrap();
        if (start..start + 5).contains(&i) && v.decision == Decision::Rejected {
            run_rejected += 1;
        }
    }

    let pass = caught >= 48
        && outside == 0
        && run_rejected == 5
        && state.refits() == 1
        && state.fault_flagged();
    Outcome {
        pass,
        detail: format!(
            "{caught}/50 spikes rejected (>= 48), {outside} replacements outside their interval, \
             5-run: {run_rejected}/5 rejected, refits {}, fault_flag {}",
            state.refits(),
            state.fault_flagged()
        ),
    }
}

fn oracle_acf(x: &[f64], lag: usize) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let c = |k: usize| {
        (0..x.len() - k)
            .map(|t| (x[t] - mean) * (x[t + k] - mean))
            .sum::<f64>()
            / n
    };
    c(lag) / c(0)
}

/// Last coefficient of the order-k Yule-Walker system, solved by Gaussian
/// elimination with partial pivoting.
fn oracle_pacf(x: &[f64], k: usize) -> f64 {
    let r: Vec<f64> = (0..=k).map(|l| oracle_acf(x, l)).collect();
    let mut a: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut row: Vec<f64> = (0..k).map(|j| r[i.abs_diff(j)]).collect();
            row.push(r[i + 1]);
            row
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let pivot_row = a[col].clone();
        for row in a.iter_mut().skip(col + 1) {
            let f = row[col] / pivot_row[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
        }
    }
    let mut sol = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| a[i][j] * sol[j]).sum();
        sol[i] = (a[i][k] - s) / a[i][i];
    }
    sol[k - 1]
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(30..=200);
        let phi = rng.random_range(-0.9..0.9);
        let mut x = vec![rng.random_range(-1.0..1.0)];
        for _ in 1..n {
            let prev = *x.last().unwrap();
            x.push(phi * prev + rng.random_range(-1.0..1.0) + 3.0);
        }
        let max_lag = 20.min(n - 1);
        let a = acf(&x, max_lag).unwrap();
        let p = pacf(&x, max_lag).unwrap();
        for k in 1..=max_lag {
            worst = worst.max((a.at(k) - oracle_acf(&x, k)).abs());
            worst = worst.max((p.at(k) - oracle_pacf(&x, k)).abs());
        }
    }

    let (phi, mu, sigma2) = (0.6, 5.0, 2.0);
    let model = ArimaModel::new(0, vec![phi], vec![], mu, sigma2, 500).unwrap();
    let history = [4.0, 6.5, 3.0, 9.0];
    let f = ArimaState::with_history(model, &history)
        .unwrap()
        .forecast(MAX_HORIZON)
        .unwrap();
    let mut worst_forecast = 0.0f64;
    for h in 1..=MAX_HORIZON {
        let point = mu + phi.powi(h as i32) * (9.0 - mu);
        let var = sigma2 * (1.0 - phi.powi(2 * h as i32)) / (1.0 - phi * phi);
        worst_forecast = worst_forecast
            .max((f.points[h - 1] - point).abs())
            .max((f.std_errors[h - 1] - var.sqrt()).abs());
    }
    Outcome {
        pass: worst <= 1e-10 && worst_forecast <= 1e-9,
        detail: format!("ACF/PACF max deviation {worst:.2e} (<= 1e-10), AR(1) forecast max deviation {worst_forecast:.2e} (<= 1e-9)"),
    }
}

fn three_node_file() -> String {
    let mut s = String::from("node_id,timestamp,channel,value\n");
    let series: Vec<Vec<f64>> = (0..3u64)
        .map(|i| {
            let mut v = ArmaProcess::new(vec![0.6], vec![], 20.0 + i as f64, 0.3)
                .unwrap()
                .generate(320, 90 + i);
            inject_spikes(&mut v, &[250, 280], 3.0);
            v
        })
        .collect();
    for t in 0..320 {
        for (node, v) in series.iter().enumerate() {
            // node 2 misses every 37th reading, node 3 jitters its clock
            if node == 1 && t % 37 == 5 {
                continue;
            }
            let jitter = if node == 2 {
                0.1 * ((t % 5) as f64 - 2.0)
            } else {
                0.0
            };
            s.push_str(&format!(
                "{},{},temperature,{}\n",
                node + 1,
                2.0 * t as f64 + jitter,
                v[t]
            ));
        }
    }
    s
}

fn clean_file(dir: &Path, input: &str, tag: &str) -> String {
    let input_path = dir.join(format!("{tag}.csv"));
    fs::write(&input_path, input).unwrap();
    let out = dir.join(tag);
    let args = ConfigArgs {
        input: Some(input_path),
        out_dir: Some(out.clone()),
        pmax: Some(5),
        qmax: Some(5),
        ..ConfigArgs::default()
    };
    cmd_clean(&RunConfig::resolve("clean", args).unwrap(), true).unwrap();
    fs::read_to_string(out.join("cleaned.csv")).unwrap()
}

fn rows_of(output: &str, node: u32) -> Vec<&str> {
    let prefix = format!("{node},");
    output.lines().filter(|l| l.starts_with(&prefix)).collect()
}

fn determinism_and_isolation() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let input = three_node_file();
    let first = clean_file(dir.path(), &input, "run1");
    let second = clean_file(dir.path(), &input, "run2");
    let without_b: String = input
        .lines()
        .filter(|l| !l.starts_with("2,"))
        .map(|l| format!("{l}\n"))
        .collect();
    let isolated = clean_file(dir.path(), &without_b, "run3");
    let identical = first == second;
    let a_same = rows_of(&first, 1) == rows_of(&isolated, 1) && !rows_of(&first, 1).is_empty();
    let c_same = rows_of(&first, 3) == rows_of(&isolated, 3);
    Outcome {
        pass: identical && a_same && c_same,
        detail: format!(
            "repeat run byte-identical: {identical}, node 1 rows unchanged without node 2: {a_same}, node 3: {c_same}"
        ),
    }
}

fn main() {
    let s = Duration::from_secs;
    let results = [
        check("1", s(1), table_arithmetic),
        {
            println!(
                "N/A  criterion 2: fitted orders of the original deployment and its figures need the unpublished mote data; covered by criteria 3-8"
            );
            true
        },
        check("3", s(5), std_error_monotonicity),
        check("4", s(60), order_recovery),
        check("5", s(30), type_one_error),
        check("6", s(30), detection_power),
        check("7", s(5), oracle_equivalence),
        check("8", s(10), determinism_and_isolation),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria failed", failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
