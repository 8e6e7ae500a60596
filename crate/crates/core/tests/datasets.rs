use egp_core::datagen::{self, generate_cs, generate_mc, lookup_setting, CsSetting, McSetting, RHO_GRID};
use egp_core::egp::{self, EgpConfig};
use egp_core::linalg::{self, Rng};
use egp_core::{metrics, Coefficient};
use proptest::prelude::*;

#[test]
fn null_estimator_identity_on_builtin_settings() {
    for (name, ..) in datagen::builtin_settings().into_iter().filter(|(n, ..)| *n != "S4") {
        for rho in RHO_GRID {
            for snr in [0.05, 1.0, 60000.0] {
                let set = lookup_setting(name, rho, snr).unwrap();
                let ds = generate_cs(&set, &mut Rng::new(60, 0)).unwrap();
                let zero = vec![0.0; ds.p()];
                let r0 = metrics::rte(&zero, &ds.beta, &ds.cov, ds.sigma2).unwrap();
                assert!((r0 - (snr + 1.0)).abs() <= 1e-9 * (snr + 1.0));
                assert_eq!(metrics::rte(&ds.beta, &ds.beta, &ds.cov, ds.sigma2).unwrap(), 1.0);
            }
        }
    }
}

#[test]
fn finetune_recovers_noise_free_beta() {
    let set = lookup_setting("S1", 0.35, 1.0).unwrap();
    let mut ds = generate_cs(&set, &mut Rng::new(61, 0)).unwrap();
    ds.y = linalg::matvec(&ds.f, &ds.beta).unwrap();
    let (_, mut val) = datagen::validation_split(&ds, 100, &mut Rng::new(61, 1));
    val.y = linalg::matvec(&val.f, &ds.beta).unwrap();
    let start = Coefficient::new([vec![0.5; 5], vec![0.0; 5]].concat());
    let out = egp::finetune(&ds.f, &ds.y, &val, &start, &EgpConfig::default().finetune_lr);
    assert_eq!(out.active_set(), vec![0, 1, 2, 3, 4]);
    for (a, b) in out.values().iter().zip(&ds.beta) {
        assert!((a - b).abs() <= 1e-4);
    }
    // already optimal: at most one step away
    let again = egp::finetune(&ds.f, &ds.y, &val, &out, &[1.0]);
    for (a, b) in again.values().iter().zip(out.values()) {
        assert!((a - b).abs() <= 1e-6);
    }
}

#[test]
fn dataset_file_round_trip_on_disk() {
    let ds = generate_mc(&McSetting::M1, &mut Rng::new(62, 0)).unwrap();
    let dir = std::env::temp_dir().join(format!("egp-core-ds-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m1.egpd");
    datagen::write_dataset(&ds, &mut std::fs::File::create(&path).unwrap()).unwrap();
    let back = datagen::read_dataset(&mut std::fs::File::open(&path).unwrap()).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(back, ds);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_noise_matches_snr(seed in any::<u64>(), rho in 0.0f64..0.95, snr in 0.05f64..1000.0, s in 0usize..8) {
        let set = CsSetting { n: 20, p: 8, s, rho, snr };
        let ds = generate_cs(&set, &mut Rng::new(seed, 0)).unwrap();
        prop_assert_eq!(ds.beta.iter().filter(|b| **b != 0.0).count(), s);
        prop_assert!(ds.beta[..s].iter().all(|b| *b == 1.0));
        let signal = ds.cov.quad_form(&ds.beta);
        prop_assert!((ds.sigma2 - signal / snr).abs() <= 1e-12 * signal.max(1e-300) / snr);
    }

    #[test]
    fn rte_bounds(seed in any::<u64>(), scale in 0.0f64..3.0) {
        let set = CsSetting { n: 10, p: 6, s: 3, rho: 0.5, snr: 2.5 };
        let ds = generate_cs(&set, &mut Rng::new(seed, 0)).unwrap();
        let theta: Vec<f64> = ds.beta.iter().map(|b| b * scale).collect();
        let r = metrics::rte(&theta, &ds.beta, &ds.cov, ds.sigma2).unwrap();
        prop_assert!(r >= 1.0);
        if scale <= 1.0 {
            prop_assert!(r <= ds.snr + 1.0 + 1e-9);
        }
    }
}
