//! Every example compiled in and run at reduced size.

mod simulate_data {
    include!("../examples/simulate_data.rs");
    #[test]
    fn writes_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        run(60, 3, path.to_str().unwrap()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 61);
        assert!(text.starts_with("w1,w2,w3,a,y,delta"));
    }
}

mod estimate_curves {
    include!("../examples/estimate_curves.rs");
    #[test]
    fn bundled_data() {
        let est = run(concat!(env!("CARGO_MANIFEST_DIR"), "/data/simulated_200.csv"), 12.0).unwrap();
        for e in &est {
            assert!(e.theta_proj.windows(2).all(|w| w[1] <= w[0]));
            assert!(e.theta_proj.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

mod uniform_bands {
    include!("../examples/uniform_bands.rs");
    #[test]
    fn bands_contain_estimate() {
        let (fixed, variable) = run(400, 1000).unwrap();
        assert!(fixed.critical_value > 0.0 && variable.critical_value > 1.96);
        assert!(variable.t0 > 0.0 && variable.t1 < 12.0);
    }
}

mod contrasts {
    include!("../examples/contrasts.rs");
    #[test]
    fn all_contrasts() {
        let c = run(400).unwrap();
        assert_eq!(c.len(), 6);
        assert!(c.iter().all(|x| x.lower.iter().zip(&x.upper).all(|(l, u)| !(l > u))));
    }
}

mod equality_test {
    include!("../examples/equality_test.rs");
    #[test]
    fn p_values_in_range() {
        let r = run(400, 1000).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|(_, t)| (0.0..=1.0).contains(&t.p_value) && t.statistic >= 0.0));
    }
}

mod superlearner {
    include!("../examples/superlearner.rs");
    #[test]
    fn weights_on_simplex() {
        let r = run(400).unwrap();
        for w in [&r.s_weights, &r.g_weights] {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9 && w.iter().all(|&x| x >= 0.0));
        }
    }
}

mod km_reduction {
    include!("../examples/km_reduction.rs");
    #[test]
    fn matches() {
        assert!(run(120, 4).unwrap() < 1e-10);
    }
}

mod monte_carlo {
    include!("../examples/monte_carlo.rs");
    #[test]
    fn tiny_study() {
        let dir = tempfile::tempdir().unwrap();
        let s = run(2, vec![200], Some(&dir.path().join("mc.csv"))).unwrap();
        assert_eq!(s.get(StudyEstimator::Cfsurv, "theta0", 200, "replicates").unwrap().value, 2.0);
        assert!(dir.path().join("mc.csv").exists());
    }
}

mod calibrate_dgp {
    include!("../examples/calibrate_dgp.rs");
    #[test]
    fn near_built_in() {
        let cfg = run(20_000).unwrap();
        assert!((cfg.beta0 - CALIBRATED_BETA0).abs() < 0.1);
    }
}

mod custom_learner {
    include!("../examples/custom_learner.rs");
    #[test]
    fn runs() {
        let est = run(400).unwrap();
        assert!(est.iter().all(|v| (0.5..=1.0).contains(v)));
    }
}

mod cli_run {
    include!("../examples/cli_run.rs");
    #[test]
    fn writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let files = run(dir.path());
        assert!(files.iter().any(|f| f.ends_with("results.csv")));
        assert_eq!(files.len(), 9);
    }
}
