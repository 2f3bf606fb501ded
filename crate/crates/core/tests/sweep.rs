use sia_sim::experiments::{run_sweep, ExperimentConfig, GainBoost};
use sia_sim::strong_ia::Scheme;

fn config() -> ExperimentConfig {
    ExperimentConfig {
        n: 2,
        trials: 80,
        gain_boosts: vec![GainBoost::parse("23", 100.0).unwrap()],
        seed: 31,
        ..ExperimentConfig::default()
    }
}

#[test]
fn sum_rate_grows_with_snr() {
    let cfg = config();
    let rows = run_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), cfg.snr_grid_db.len() * cfg.schemes.len());
    for scheme in [Scheme::StrongIa, Scheme::LinearFallback] {
        let series: Vec<_> = rows.iter().filter(|r| r.scheme == scheme).collect();
        for w in series.windows(2) {
            let slack = 3.0 * (w[0].sum_rate_stderr + w[1].sum_rate_stderr);
            assert!(w[1].sum_rate + slack >= w[0].sum_rate, "{scheme:?} drops at {} dB", w[1].snr_db);
        }
    }
}

#[test]
fn rows_respect_invariants() {
    for r in run_sweep(&config()).unwrap() {
        assert!((0.0..=1.0).contains(&r.condition_rate));
        assert!((r.sum_rate - r.rates.iter().sum::<f64>()).abs() < 1e-12);
        assert!(r.trials_used + r.skipped >= 80);
    }
}

#[test]
fn seed_changes_output() {
    let a = run_sweep(&config()).unwrap();
    let b = run_sweep(&ExperimentConfig { seed: 32, ..config() }).unwrap();
    assert_ne!(a[4].sum_rate, b[4].sum_rate);
}

#[test]
fn larger_blocks_give_block_level_condition_rate() {
    let cfg = ExperimentConfig { snr_grid_db: vec![20.0], ..config() };
    let rows = run_sweep(&ExperimentConfig { block_size: 20, ..cfg.clone() }).unwrap();
    assert_eq!(rows.len(), 2);
    let fractions = [0.0, 0.25, 0.5, 0.75, 1.0];
    assert!(fractions.iter().any(|f| (rows[0].condition_rate - f).abs() < 1e-12));
}
