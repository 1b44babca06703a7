use dpfe_core::data::{generate_two_factor, split_dataset, SplitFractions, TwoFactorConfig};
use dpfe_core::linalg::{covariance, SquareMatrix};
use dpfe_core::nn::{Layer, Params};
use dpfe_core::pipeline::{run_pipeline, StageEpochs, TrainConfig};
use dpfe_core::tradeoff::{clean_eval, feature_covariance, noisy_eval, sweep, NoiseSpec, SweepConfig};
use dpfe_core::Tensor2;

fn separable() -> dpfe_core::data::Splits {
    let cfg = TwoFactorConfig {
        samples: 600,
        sensitive_classes: 6,
        identity_spread: 10.0,
        primary_offset: 5.0,
        ..TwoFactorConfig::default()
    };
    split_dataset(&generate_two_factor(&cfg, 5).unwrap(), &SplitFractions::default(), 5).unwrap()
}

fn short(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: StageEpochs {
            original: 10,
            simple: 3,
            dpfe: 3,
        },
        seed,
        ..TrainConfig::default()
    }
}

fn kinds(layers: &[Layer]) -> Vec<(&'static str, usize, usize)> {
    layers.iter().map(|l| (l.kind(), l.in_dim(), l.out_dim())).collect()
}

#[test]
fn separable_data_is_learned_and_runs_repeat() {
    let s = separable();
    let a = run_pipeline(&s.train, &s.validation, &short(1)).unwrap();
    let b = run_pipeline(&s.train, &s.validation, &short(1)).unwrap();
    let last = a.original.trace.last().unwrap();
    assert!(last.validation_accuracy >= 0.95, "{}", last.validation_accuracy);
    assert_eq!(a.original.model.params(), b.original.model.params());
    assert_eq!(a.simple.model.params(), b.simple.model.params());
    assert_eq!(a.dpfe.model.params(), b.dpfe.model.params());

    let (s_ext, p_ext) = (a.simple.model.extractor(), a.dpfe.model.extractor());
    assert_eq!(kinds(s_ext.layers()), kinds(p_ext.layers()));
    assert_eq!(
        kinds(a.simple.model.predictor().layers()),
        kinds(a.dpfe.model.predictor().layers())
    );
    assert_eq!(a.dpfe.model.feature_dim(), 10);
}

#[test]
fn noise_covariance_matches_scaled_target() {
    let mut r = dpfe_core::rng::seeded(8);
    use rand::Rng;
    let raw: Vec<f64> = (0..3 * 3).map(|_| r.random_range(-1.0..1.0)).collect();
    let a = SquareMatrix::from_vec(3, raw).unwrap();
    let c = a.mul(&a.transpose());
    let noise = NoiseSpec::from_covariance(&c).unwrap();
    let zero = Tensor2::zeros(10_000, 3);
    let ratio = 2.5;
    let drawn = noise.perturb(&zero, ratio, 3).unwrap();
    let empirical = covariance(&drawn).unwrap();
    let target = c.scaled(ratio);
    let mut diff = SquareMatrix::zeros(3);
    for i in 0..3 {
        for j in 0..3 {
            diff.set(i, j, empirical.get(i, j) - target.get(i, j));
        }
    }
    assert!(
        diff.frobenius() / target.frobenius() < 0.05,
        "{}",
        diff.frobenius() / target.frobenius()
    );
}

#[test]
fn sweep_points_and_zero_ratio() {
    let s = separable();
    let art = run_pipeline(&s.train, &s.validation, &short(2)).unwrap();
    let model = &art.dpfe.model;
    let noise = NoiseSpec::from_covariance(&feature_covariance(model, s.train.x()).unwrap()).unwrap();
    assert_eq!(
        noisy_eval(model, &s.test, &noise, 0.0, 4).unwrap(),
        clean_eval(model, &s.test, 4).unwrap()
    );

    let cfg = SweepConfig {
        ratios: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
        replicates: 2,
        seed: 4,
    };
    let curve = sweep(model, s.train.x(), &s.test, &cfg).unwrap();
    assert_eq!(curve.points.len(), 6);
    let ratios: Vec<f64> = curve.points.iter().map(|p| p.ratio).collect();
    assert_eq!(ratios, cfg.ratios);
    for p in &curve.points {
        assert_eq!(p.seed_count, 2);
        assert!((0.0..=1.0).contains(&p.accuracy) && (0.0..=1.0).contains(&p.lrp));
    }
}
