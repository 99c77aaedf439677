use vaxnet::*;

fn trial(k: usize) -> TrialConfig {
    TrialConfig {
        vaccine_arm_size: 1500,
        placebo_arm_size: 1500,
        horizon_days: 100,
        repetitions: 16,
        n: 20_000,
        k,
        rewire_p: 0.02,
        background_infected: 60,
    }
}

#[test]
fn trial_map_is_monotone_in_candidate() {
    let params = EpidemicParams::default();
    let bench = TrialBench::new(&trial(12), &params, 5).unwrap();
    let candidates = [0.02, 0.015, 0.01, 0.005, 0.0];
    let outcomes: Vec<_> = candidates
        .iter()
        .map(|&x| bench.evaluate(x).unwrap())
        .collect();
    for (x, o) in candidates.iter().zip(&outcomes) {
        println!("p_inf {x}: efficacy {:.4} se {:.4}", o.efficacy, o.std_error);
    }
    // baseline: both arms identical, efficacy zero within 3 standard errors
    assert!(outcomes[0].efficacy.abs() <= 3.0 * outcomes[0].std_error);
    assert_eq!(outcomes[4].efficacy, 1.0);
    for w in outcomes.windows(2) {
        let band = 3.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        assert!(w[1].efficacy >= w[0].efficacy - band);
    }
}

#[test]
fn calibration_round_trip() {
    let params = EpidemicParams::default();
    let solver = SolverConfig::default();
    let r = calibrate_p_inf(0.7, &trial(12), &params, &solver, 3).unwrap();
    println!("{r:?}");
    assert!(r.converged);
    assert!(r.solved_p_inf > 0.0 && r.solved_p_inf < params.p_inf_base);
    assert!(*r.residual_trace.last().unwrap() <= solver.tol);
    // residuals never increase after the first step
    assert!(r.residual_trace.windows(2).skip(1).all(|w| w[1] <= w[0]) || r.bisected);

    let fresh = simulate_trial(&trial(12), &params, r.solved_p_inf, 1234).unwrap();
    let band = solver.tol.max(2.0 * fresh.std_error);
    assert!(
        (fresh.efficacy - 0.7).abs() <= band + solver.tol,
        "{} vs 0.7 (band {band})",
        fresh.efficacy
    );
}

#[test]
fn table_is_monotone_in_efficacy_and_bounded() {
    let params = EpidemicParams::default();
    let table = build_efficacy_table(
        &[0.0, 0.5, 0.9],
        &[12],
        &trial(12),
        &params,
        &SolverConfig::default(),
        8,
    )
    .unwrap();
    assert!(table.all_converged());
    let p0 = table.lookup(0.0, 12).unwrap();
    let p5 = table.lookup(0.5, 12).unwrap();
    let p9 = table.lookup(0.9, 12).unwrap();
    assert_eq!(p0, 0.02);
    assert!(p9 < p5 && p5 < p0);
    assert!(table.cells.iter().all(|c| c.p_inf > 0.0 && c.p_inf <= 0.02));

    // independent check of the ordering through the trial map itself
    let bench = TrialBench::new(&TrialConfig { k: 12, ..trial(12) }, &params, 99).unwrap();
    assert!(bench.evaluate(p9).unwrap().efficacy > bench.evaluate(p5).unwrap().efficacy);
}

#[test]
fn non_convergence_is_reported_not_fatal() {
    let params = EpidemicParams::default();
    let solver = SolverConfig {
        max_iter: 1,
        ..SolverConfig::default()
    };
    let r = calibrate_p_inf(0.9, &trial(12), &params, &solver, 3).unwrap();
    assert!(!r.converged);
    assert_eq!(r.iterations, 1);
    assert_eq!(r.residual_trace.len(), 1);
}

#[test]
fn dead_trial_reports_zero_placebo_infections() {
    let params = EpidemicParams {
        p_inf_base: 0.0,
        ..EpidemicParams::default()
    };
    let err = simulate_trial(&trial(12), &params, 0.0, 1).unwrap_err();
    assert!(matches!(err, Error::ZeroPlaceboInfections));
}
