use dpfe_core::data::{
    generate_two_factor, label_counts, split_dataset, split_indices, Dataset, SplitFractions, TwoFactorConfig,
};
use dpfe_core::metrics::oracle::{
    bound_ordering_suite, builtin_worlds, discrete_mi_oracle, mc_gaussian_kl, DiscreteJoint, JointEntry, SuiteBudget,
};
use dpfe_core::metrics::{gaussian_kl, one_nn_error};
use dpfe_core::Tensor2;

#[test]
fn small_config_has_every_label() {
    let cfg = TwoFactorConfig {
        input_dim: 8,
        primary_classes: 2,
        sensitive_classes: 4,
        samples: 100,
        ..TwoFactorConfig::default()
    };
    let d = generate_two_factor(&cfg, 5).unwrap();
    assert_eq!(d.len(), 100);
    assert!(label_counts(d.z(), 2).iter().all(|&c| c > 0));
    assert!(label_counts(d.y(), 4).iter().all(|&c| c > 0));
    assert_eq!(d, generate_two_factor(&cfg, 5).unwrap());
}

#[test]
fn well_separated_identities_are_found_by_nearest_neighbour() {
    let cfg = TwoFactorConfig {
        identity_spread: 10.0,
        noise_sd: 0.5,
        samples: 2000,
        ..TwoFactorConfig::default()
    };
    let d = generate_two_factor(&cfg, 1).unwrap();
    let err = one_nn_error(d.x(), d.y()).unwrap();
    assert!(err < 0.05, "{err}");
}

fn empirical_label_mi(d: &Dataset) -> f64 {
    // I(y; z) through the discrete oracle, with the feature taken to be y.
    let (cy, cz) = (d.sensitive_classes(), d.primary_classes());
    let n = d.len() as f64;
    let mut joint = vec![0usize; cy * cz];
    for (&z, &y) in d.z().iter().zip(d.y()) {
        joint[y * cz + z] += 1;
    }
    let entries = joint
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| JointEntry {
            x: k / cz,
            z: k % cz,
            y: k / cz,
            probability: c as f64 / n,
        })
        .collect();
    discrete_mi_oracle(&DiscreteJoint::new(entries, (0..cy).collect()).unwrap()).i_fz
}

#[test]
fn label_marginals_are_uniform_and_independent() {
    let mut corrected = 0.0;
    for seed in 0..5 {
        let d = generate_two_factor(&TwoFactorConfig::default(), seed).unwrap();
        let n = d.len() as f64;
        for (labels, c) in [(d.z(), d.primary_classes()), (d.y(), d.sensitive_classes())] {
            let p = 1.0 / c as f64;
            let se = (p * (1.0 - p) / n).sqrt();
            for count in label_counts(labels, c) {
                assert!((count as f64 / n - p).abs() < 5.0 * se);
            }
        }
        // The plug-in estimate carries a (c_y - 1)(c_z - 1) / (2N) upward bias.
        let bias = ((d.sensitive_classes() - 1) * (d.primary_classes() - 1)) as f64 / (2.0 * n);
        corrected += (empirical_label_mi(&d) - bias) / 5.0;
    }
    assert!(corrected < 3.0 / 2000.0, "{corrected}");
}

#[test]
fn correlated_labels_carry_information() {
    let cfg = TwoFactorConfig {
        correlation: 0.9,
        ..TwoFactorConfig::default()
    };
    let d = generate_two_factor(&cfg, 0).unwrap();
    assert!(empirical_label_mi(&d) > 0.3);
}

#[test]
fn splits_partition_the_dataset() {
    let fr = SplitFractions {
        train: 0.8,
        validation: 0.1,
        test: 0.1,
    };
    let [a, b, c] = split_indices(10, &fr, 3).unwrap();
    assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
    let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
    all.sort();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
    assert_eq!(split_indices(10, &fr, 3).unwrap(), [a, b, c]);
    assert!(split_indices(3, &fr, 3).is_err());
}

#[test]
fn split_union_is_the_original_multiset() {
    let d = generate_two_factor(
        &TwoFactorConfig {
            samples: 50,
            ..TwoFactorConfig::default()
        },
        9,
    )
    .unwrap();
    let s = split_dataset(&d, &SplitFractions::default(), 9).unwrap();
    let key = |ds: &Dataset| -> Vec<String> { (0..ds.len()).map(|i| format!("{:?}", ds.sample(i))).collect() };
    let mut got = [key(&s.train), key(&s.validation), key(&s.test)].concat();
    let mut want = key(&d);
    got.sort();
    want.sort();
    assert_eq!(got, want);
}

#[test]
fn labels_out_of_range_are_rejected() {
    let x = Tensor2::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
    assert!(matches!(
        Dataset::new(x, vec![0, 1], vec![0, 2], 2, 2),
        Err(dpfe_core::Error::Validation(_))
    ));
}

#[test]
fn gaussian_kl_closed_form_matches_sampling() {
    let (p, q) = ([0.3, -1.0, 0.5], [1.0, 0.2, -0.4]);
    let closed = gaussian_kl(&p, &q, 0.6).unwrap();
    let mc = mc_gaussian_kl(&p, &q, 0.6, 400_000, 3);
    assert!((mc.mean - closed).abs() / closed < 0.02);
    assert!((mc.mean - closed).abs() < 4.0 * mc.std_error);
}

#[test]
fn builtin_worlds_are_normalized_and_varied() {
    let worlds = builtin_worlds();
    assert!(worlds.len() >= 5);
    for (_, w) in &worlds {
        let total: f64 = w.entries().iter().map(|e| e.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let info = discrete_mi_oracle(w);
        assert!(info.i_fz >= -1e-15 && info.i_fz <= info.h_z + 1e-15);
    }
}

#[test]
fn bound_ordering_suite_passes() {
    let budget = SuiteBudget {
        mi_samples: 50_000,
        kl_samples: 200_000,
    };
    for seed in 0..3 {
        for check in bound_ordering_suite(seed, budget).unwrap() {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
