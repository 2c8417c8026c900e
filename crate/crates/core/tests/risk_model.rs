use rand::Rng;
use screentree::matrix::CodeMatrix;
use screentree::risk::{fit_risk_model, posterior_mean_prob, RiskConfig};
use screentree::stats::stream_rng;

fn uniform_rows(n: usize, p: usize, seed: u64) -> Vec<Vec<i32>> {
    let mut rng = stream_rng(seed, 3);
    (0..n)
        .map(|_| (0..p).map(|_| rng.random_range(1..=5)).collect())
        .collect()
}

#[test]
fn recovers_step_function() {
    let p = 5;
    let rows = uniform_rows(2000, p, 11);
    let y: Vec<u8> = rows.iter().map(|r| u8::from(r[2] >= 4)).collect();
    let names: Vec<String> = (1..=p).map(|j| format!("Q{j}")).collect();
    let data = CodeMatrix::from_rows(names, &rows).unwrap();
    let cfg = RiskConfig {
        burn_in: 200,
        draws: 200,
        seed: 4,
        ..Default::default()
    };
    let post = fit_risk_model(&data, &y, &cfg).unwrap();

    // Held-out grid: every Q3 level crossed with fresh draws of the rest.
    let others = uniform_rows(100, p, 12);
    let mut err = 0.0;
    let mut count = 0;
    for q3 in 1..=5 {
        for base in &others {
            let mut x = base.clone();
            x[2] = q3;
            let truth = if q3 >= 4 { 1.0 } else { 0.0 };
            err += (posterior_mean_prob(&post, &x).unwrap() - truth).abs();
            count += 1;
        }
    }
    let mae = err / count as f64;
    println!("step-function MAE = {mae:.4}");
    assert!(mae <= 0.10);
}

#[test]
fn weak_signal_shrinks_toward_base_rate() {
    // Labels independent of the items: predictions should sit near the base rate.
    let rows = uniform_rows(5000, 4, 21);
    let mut rng = stream_rng(22, 0);
    let y: Vec<u8> = (0..rows.len()).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
    let base = y.iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64;
    let names: Vec<String> = (1..=4).map(|j| format!("Q{j}")).collect();
    let data = CodeMatrix::from_rows(names, &rows).unwrap();
    let cfg = RiskConfig {
        num_trees: 20,
        burn_in: 100,
        draws: 100,
        seed: 5,
        ..Default::default()
    };
    let post = fit_risk_model(&data, &y, &cfg).unwrap();
    let probe = uniform_rows(200, 4, 23);
    let dev = probe
        .iter()
        .map(|x| (posterior_mean_prob(&post, x).unwrap() - base).abs())
        .sum::<f64>()
        / probe.len() as f64;
    println!("mean deviation from base rate = {dev:.4}");
    assert!(dev < 0.05, "{dev}");
}
