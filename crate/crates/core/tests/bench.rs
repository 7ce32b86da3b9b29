use atomprune::bench::*;

fn small_phase() -> PhaseConfig {
    PhaseConfig {
        n: 40,
        m: 20,
        k_values: vec![2, 5, 16],
        trials: 6,
        algorithms: vec![Algorithm::Gap, Algorithm::Sl0, Algorithm::Iht, Algorithm::L0Oracle],
        solvers: SolverSettings { l0_k_max: Some(2), ..SolverSettings::default() },
        ..PhaseConfig::default()
    }
}

#[test]
fn json_sidecar_reloads_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let table = phase_transition(&small_phase(), 3, &Runner::new(1)).unwrap();
    let csv = dir.path().join("phase.csv");
    write_table(&table, &csv).unwrap();
    let (json, timings) = sidecar_paths(&csv);
    assert!(timings.exists());
    let back = read_table(&json).unwrap();
    assert_eq!(back.to_json().unwrap(), table.to_json().unwrap());
    assert_eq!(back.to_csv(), std::fs::read_to_string(&csv).unwrap());
    for (a, b) in back.records.iter().zip(&table.records) {
        assert_eq!(a.distortion.to_bits(), b.distortion.to_bits());
    }
    let cfg: PhaseConfig = serde_json::from_value(back.config.clone()).unwrap();
    assert_eq!(cfg, small_phase());
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let one = phase_transition(&small_phase(), 9, &Runner::new(1)).unwrap();
    let four = phase_transition(&small_phase(), 9, &Runner::new(4)).unwrap();
    assert_eq!(one.to_json().unwrap(), four.to_json().unwrap());
    assert_eq!(one.to_csv(), four.to_csv());
    let other_seed = phase_transition(&small_phase(), 10, &Runner::new(1)).unwrap();
    assert_ne!(one.to_json().unwrap(), other_seed.to_json().unwrap());
}

#[test]
fn phase_aggregates_are_consistent_with_records() {
    let cfg = small_phase();
    let table = phase_transition(&cfg, 3, &Runner::new(2)).unwrap();
    assert_eq!(table.records.len(), cfg.k_values.len() * cfg.trials * cfg.algorithms.len());
    for (p, row) in table.rows.iter().enumerate() {
        for agg in &row.aggregates {
            let recs: Vec<_> = table.records.iter().filter(|r| r.point == p && r.algorithm == agg.algorithm).collect();
            assert_eq!(recs.len(), cfg.trials);
            let failures = recs.iter().filter(|r| !r.success).count();
            assert_eq!(agg.failures, failures);
            assert_eq!(agg.failure_probability, failures as f64 / cfg.trials as f64);
            for r in &recs {
                assert_eq!(r.success, r.distortion <= cfg.threshold);
            }
        }
    }
    // the oracle capped at two atoms recovers k = 2 always and k = 5 never
    assert_eq!(table.aggregate(&[2.0], Algorithm::L0Oracle).unwrap().failures, 0);
    assert_eq!(table.aggregate(&[5.0], Algorithm::L0Oracle).unwrap().failures, cfg.trials);
    for algo in [Algorithm::Gap, Algorithm::Sl0, Algorithm::Iht] {
        let easy = table.aggregate(&[2.0], algo).unwrap().failure_probability;
        let hard = table.aggregate(&[16.0], algo).unwrap().failure_probability;
        assert!(easy <= hard, "{algo}: {easy} > {hard}");
        assert_eq!(hard, 1.0, "{algo} recovered k = 16 from 20 measurements");
    }
}

#[test]
fn noiseless_stability_matches_phase_successes() {
    let phase = small_phase();
    let stab = StabilityConfig {
        n: phase.n,
        m: phase.m,
        k_values: phase.k_values.clone(),
        noiseless: true,
        trials: phase.trials,
        algorithms: vec![Algorithm::Gap, Algorithm::Sl0],
        ..StabilityConfig::default()
    };
    let phase = PhaseConfig { algorithms: stab.algorithms.clone(), ..phase };
    let p = phase_transition(&phase, 4, &Runner::new(1)).unwrap();
    let s = stability_sweep(&stab, 4, &Runner::new(1)).unwrap();
    assert_eq!(s.sweep_columns, vec!["k".to_string()]);
    let flags = |t: &ExperimentTable| t.records.iter().map(|r| (r.k, r.trial, r.algorithm, r.success)).collect::<Vec<_>>();
    assert_eq!(flags(&p), flags(&s));
}

#[test]
fn stability_distortion_falls_with_snr() {
    let cfg = StabilityConfig {
        n: 40,
        m: 20,
        k_values: vec![2],
        snr_db: vec![5.0, 40.0],
        trials: 6,
        algorithms: vec![Algorithm::Sl0],
        ..StabilityConfig::default()
    };
    let t = stability_sweep(&cfg, 2, &Runner::new(1)).unwrap();
    let d = |snr: f64| t.aggregate(&[2.0, snr], Algorithm::Sl0).unwrap().mean_distortion.unwrap();
    assert!(d(40.0) < d(5.0) / 10.0, "{} vs {}", d(40.0), d(5.0));
}

#[test]
fn wavelet_table_carries_reconstructions() {
    let cfg = WaveletConfig { n: 64, m: 32, algorithms: vec![Algorithm::Sl0, Algorithm::Iht], ..WaveletConfig::default() };
    let t = wavelet_experiment(&cfg, 1, &Runner::new(1)).unwrap();
    let labels: Vec<&str> = t.reconstructions.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["reference", "sl0", "iht"]);
    assert!(t.reconstructions.iter().all(|r| r.samples.len() == 64));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("signals.csv");
    write_reconstructions(&t, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 65);
}
