//! Distributional checks of the open-ended drift generator.

use bridgex::bayesian::{gen_bounded_bayesian, gen_open_constrained, BrownianDynamics, ConstraintSpec, ExtremumKind, NumericsConfig};
use bridgex::densities::DriftParams;
use bridgex::drift::{gen_drift_open_constrained, DriftDynamics};
use bridgex::numerics::RandomSource;
use bridgex::validation::ks_two_sample;

fn open_spec(a: f64, m: f64, t_end: f64) -> ConstraintSpec {
    ConstraintSpec {
        t0: 0.0,
        t_end,
        a,
        b: None,
        m,
        kind: ExtremumKind::Max,
    }
}

// A bound far above every plausible path leaves the drift untouched.
#[test]
fn remote_bound_keeps_the_terminal_mean() {
    let (c, t_end, runs) = (0.8, 1.0, 1000);
    let cfg = NumericsConfig::new(20, 1e-3, 0.1, 200, 3);
    let spec = open_spec(0.0, 50.0, t_end);
    let dynamics = DriftDynamics { c };
    let mut rng = RandomSource::new(cfg.seed);
    let mut sum = 0.0;
    for _ in 0..runs {
        let path = gen_bounded_bayesian(&spec, &dynamics, &cfg, &mut rng).unwrap();
        sum += path.terminal();
    }
    let mean = sum / runs as f64;
    // The last node repeats the value one step before the end.
    let horizon = t_end * 19.0 / 20.0;
    let sd = (horizon / runs as f64).sqrt();
    assert!((mean - c * horizon).abs() < 3.0 * sd, "{mean} vs {}", c * horizon);
}

#[test]
fn zero_drift_matches_brownian_generation() {
    let (sigma, n) = (2.0, 1000);
    let cfg = NumericsConfig::new(40, 1e-3, 0.1, 300, 8);
    let spec = open_spec(3.0, 6.0, 2.0);
    let drift = DriftParams::new(0.0, sigma).unwrap();
    let brownian = BrownianDynamics::new(sigma, None).unwrap();
    let mut rng_a = RandomSource::new(1);
    let mut rng_b = RandomSource::new(2);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        a.push(gen_drift_open_constrained(&spec, &drift, &cfg, &mut rng_a).unwrap().terminal());
        b.push(gen_open_constrained(&spec, &brownian, &cfg, &mut rng_b).unwrap().terminal());
    }
    let ks = ks_two_sample(&a, &b).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}
