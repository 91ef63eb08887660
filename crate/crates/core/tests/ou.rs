//! Monte Carlo checks of the OU hitting and maximum laws.

use bridgex::densities::BridgeEndpoints;
use bridgex::numerics::RandomSource;
use bridgex::ou::{ou_max_bound_prob, Barrier, NuSolver, OuMode, OuNumerics};
use bridgex::processes::OUParams;
use bridgex::validation::chi_square_counts;

// Probability that a unit-OU step from `x` to `y` over `dt` crosses `level`
// (chord approximation of the curved boundary in Brownian time).
fn crossing_probability(level: f64, x: f64, y: f64, dt: f64) -> f64 {
    if x >= level || y >= level {
        return 1.0;
    }
    (-2.0 * (level - x) * (level - y) / dt.sinh()).exp()
}

#[test]
fn first_passage_times_match_hitting_law() {
    let (start, level, horizon) = (0.0, 1.0, 2.0f64);
    let dt = 1e-3f64;
    let steps = (horizon / dt).round() as usize;
    let n_bins = 20;
    let decay = (-dt).exp();
    let sd = (-(-2.0 * dt).exp_m1() / 2.0).sqrt();
    let mut rng = RandomSource::new(2024);
    let mut counts = vec![0u64; n_bins + 1];
    for _ in 0..100_000 {
        let mut x = start;
        let mut hit = None;
        for i in 0..steps {
            let y = x * decay + sd * rng.normal();
            if rng.uniform() < crossing_probability(level, x, y, dt) {
                hit = Some((i as f64 + 0.5) * dt);
                break;
            }
            x = y;
        }
        match hit {
            Some(t) => counts[((t / horizon * n_bins as f64) as usize).min(n_bins - 1)] += 1,
            None => counts[n_bins] += 1,
        }
    }
    let barrier = Barrier::new(level, false, NuSolver::Volterra, horizon, 200).unwrap();
    let cdf: Vec<f64> = (0..=n_bins)
        .map(|j| barrier.probability(horizon * j as f64 / n_bins as f64, start).unwrap())
        .collect();
    let mut probs: Vec<f64> = cdf.windows(2).map(|w| w[1] - w[0]).collect();
    probs.push(1.0 - cdf[n_bins]);
    let test = chi_square_counts(&counts, &probs).unwrap();
    assert!(test.p_value > 0.01, "{test:?} counts {counts:?}");
}

#[test]
fn bridge_maxima_match_max_law() {
    let p = OUParams::new(1.0, 0.0, 1.0).unwrap();
    let ep = BridgeEndpoints::new(0.0, 1.0, 0.0, 0.0, 1.0).unwrap();
    let dt = 1e-3;
    let steps = (ep.duration() / dt).round() as usize;
    let decay = (-dt).exp();
    let sd = (-(-2.0 * dt).exp_m1() / 2.0).sqrt();
    let pull: Vec<f64> = (0..=steps).map(|i| (i as f64 * dt).sinh() / ep.duration().sinh()).collect();
    let edges: Vec<f64> = (0..=20).map(|j| 0.125 * j as f64).collect();
    let mut counts = vec![0u64; edges.len()];
    let mut rng = RandomSource::new(77);
    let mut free = vec![0.0; steps + 1];
    for _ in 0..100_000 {
        for i in 1..=steps {
            free[i] = free[i - 1] * decay + sd * rng.normal();
        }
        // Conditioning a Gaussian path on its end value is an exact linear shift.
        let shift = ep.x2 - free[steps];
        let mut max = ep.x1;
        let mut prev = ep.x1;
        for i in 1..=steps {
            let cur = free[i] + shift * pull[i];
            let gap = prev - cur;
            let step_max = 0.5 * (prev + cur + (gap * gap - 2.0 * dt * rng.uniform_pos().ln()).sqrt());
            max = max.max(step_max);
            prev = cur;
        }
        let bin = edges.partition_point(|&e| e <= max) - 1;
        counts[bin.min(edges.len() - 1)] += 1;
    }
    let num = OuNumerics::default();
    let mut cdf: Vec<f64> = edges
        .iter()
        .map(|&m| ou_max_bound_prob(m, &ep, &p, OuMode::Bridge, &num).unwrap())
        .collect();
    cdf.push(1.0);
    let probs: Vec<f64> = cdf.windows(2).map(|w| w[1] - w[0]).collect();
    let test = chi_square_counts(&counts, &probs).unwrap();
    assert!(test.p_value > 0.01, "{test:?} counts {counts:?}");
}
