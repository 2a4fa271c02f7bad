use eabf::analytic::{run_recursion, success_probability};
use eabf::compare::{compare_curves, fraction_within};
use eabf::sim::{run_monte_carlo, SimOptions};
use eabf::{ActivationProfile, BarringSetting, EnergyConfig, Scenario};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn light_scenario() -> Scenario {
    Scenario {
        profile: ActivationProfile::new(3.0, 4.0, 2000.0, 3000).unwrap(),
        ..Scenario::reference()
    }
}

#[test]
fn eab_draws_per_pass_are_geometric() {
    let p = 0.3;
    let s = BarringSetting::new(p, 100).unwrap();
    let r = run_monte_carlo(&s, &light_scenario(), &EnergyConfig::reference(), &SimOptions::default(), 20, 3).unwrap();
    let passes = r.eab_passes as f64;
    let mean = r.eab_draws as f64 / passes;
    let se = ((1.0 - p) / (p * p) / passes).sqrt();
    assert!((mean - 1.0 / p).abs() <= 3.0 * se, "mean draws {mean} vs {} (se {se})", 1.0 / p);
}

#[test]
fn collision_backoff_is_uniform() {
    let s = BarringSetting::new(0.7, 8000).unwrap();
    let sc = Scenario::reference();
    let r = run_monte_carlo(&s, &sc, &EnergyConfig::reference(), &SimOptions::default(), 12, 8).unwrap();
    let h = &r.backoff_histogram;
    let total: u64 = h.iter().sum();
    assert!(total >= 100_000, "only {total} backoff samples");
    let expected = total as f64 / h.len() as f64;
    let stat: f64 = h.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new((h.len() - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(stat <= critical, "chi-square {stat} above {critical}");
}

#[test]
fn light_load_tracks_the_recursion() {
    let sc = light_scenario();
    let s = BarringSetting::new(0.5, 200).unwrap();
    let trace = run_recursion(&s, &sc).unwrap();
    let r = run_monte_carlo(&s, &sc, &EnergyConfig::reference(), &SimOptions::default(), 100, 21).unwrap();
    let ps = success_probability(&trace).unwrap();
    assert!((r.success_probability.mean - ps).abs() < 0.03, "{} vs {ps}", r.success_probability.mean);
    let within = fraction_within(&compare_curves(&trace, &r), 3.0);
    assert!(within.iter().all(|&f| f > 0.95), "{within:?}");
}

#[test]
fn single_device_shows_no_deviation() {
    let sc = Scenario {
        profile: ActivationProfile::new(3.0, 4.0, 5.0, 1).unwrap(),
        ..Scenario::reference()
    };
    let s = BarringSetting::new(1.0, 100).unwrap();
    let trace = run_recursion(&s, &sc).unwrap();
    assert_eq!(trace.len(), 1);
    let r = run_monte_carlo(&s, &sc, &EnergyConfig::reference(), &SimOptions::default(), 5, 2).unwrap();
    let dev = compare_curves(&trace, &r);
    assert_eq!(dev.len(), 1);
    assert_eq!(dev[0].max_abs_z(), 0.0);
}

#[test]
fn truncation_only_changes_saturated_cycles() {
    let sc = light_scenario();
    let s = BarringSetting::new(0.5, 200).unwrap();
    let e = EnergyConfig::reference();
    let off = run_monte_carlo(&s, &sc, &e, &SimOptions::default(), 5, 4).unwrap();
    let on = SimOptions {
        rar_window_truncation: true,
        ..Default::default()
    };
    let on = run_monte_carlo(&s, &sc, &e, &on, 5, 4).unwrap();
    assert_eq!(on.total_demoted, 0);
    assert_eq!(on, off);
}
