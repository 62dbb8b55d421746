use cuthmm_web::{fit_q_summary, simulate_series, spectral_summary};

#[test]
fn simulation_is_seeded() {
    let a = simulate_series(200, 0.7, 0.8, 5).unwrap();
    let b = simulate_series(200, 0.7, 0.8, 5).unwrap();
    assert_eq!(a.y, b.y);
    assert_eq!(a.x.len(), 200);
    assert!(simulate_series(10, 1.5, 0.8, 5).is_err());
}

#[test]
fn posterior_and_spectral_summaries_land_near_the_truth() {
    let y = simulate_series(3000, 0.7, 0.8, 1).unwrap().y;
    let fit = fit_q_summary(&y, 2, 3000, 2).unwrap();
    assert_eq!(fit.kappa, 4);
    assert_eq!(fit.diagonal[0].len(), 2400);
    assert!((fit.mean[0][0] - 0.7).abs() < 0.1 && (fit.mean[1][1] - 0.8).abs() < 0.1, "{:?}", fit.mean);
    for row in &fit.mean {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let json = serde_json::to_value(&fit).unwrap();
    assert_eq!(json["edges"].as_array().unwrap().len(), 3);

    // State 0 is the low-mean state in both summaries. The moment estimator
    // needs a longer series than the sampler.
    let y = simulate_series(40_000, 0.7, 0.8, 1).unwrap().y;
    let spec = spectral_summary(&y, 3, 4).unwrap();
    assert!((spec.q_hat[0][0] - 0.7).abs() < 0.08 && (spec.q_hat[1][1] - 0.8).abs() < 0.08, "{:?}", spec.q_hat);
}
