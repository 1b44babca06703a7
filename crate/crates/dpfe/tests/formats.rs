use std::path::Path;

use dpfe::checkpoint::Model;
use dpfe::config::RunConfig;
use dpfe::curve_csv::{curve_to_csv, parse_curve, round_real};
use dpfe::dataset_io::{dataset_to_csv, parse_dataset, read_dataset, write_dataset};
use dpfe::world_io::{parse_world, world_to_csv};
use dpfe::Error;
use dpfe_core::data::{generate_two_factor, DatasetManifest, Provenance, SplitFractions, TwoFactorConfig};
use dpfe_core::metrics::oracle::builtin_worlds;
use dpfe_core::nn::{Network, Params, SplitModel};
use dpfe_core::rng;
use dpfe_core::tradeoff::{CurvePoint, TradeoffCurve};

fn here() -> &'static Path {
    Path::new("mem.csv")
}

fn manifest(n: usize, d: usize, cz: usize, cy: usize) -> DatasetManifest {
    DatasetManifest {
        sample_count: n,
        input_dim: d,
        primary_classes: cz,
        sensitive_classes: cy,
        seed: Some(1),
        fractions: SplitFractions::default(),
        provenance: Provenance::Synthetic,
    }
}

#[test]
fn checkpoints_round_trip_exactly() {
    let split = SplitModel::random(5, &[7, 6], 4, &[6], 3, &mut rng::seeded(2));
    let net = Network::mlp_classifier(5, &[8, 8], 2, &mut rng::seeded(3));
    for model in [Model::Split(split.clone()), Model::Network(net.clone())] {
        let json = model.to_json();
        let back = Model::from_json(&json, here()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json(), json);
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("nested/m.ckpt.json");
    Model::Split(split.clone()).save(&p).unwrap();
    let loaded = dpfe::checkpoint::load_split(&p).unwrap();
    assert_eq!(loaded.params(), split.params());
    assert!(dpfe::checkpoint::load_network(&p).is_err());
}

#[test]
fn corrupted_checkpoint_is_a_format_error() {
    let net = Network::mlp_classifier(3, &[4], 2, &mut rng::seeded(4));
    let json = Model::Network(net)
        .to_json()
        .replacen("\"in_dim\": 3", "\"in_dim\": 5", 1);
    let err = Model::from_json(&json, here()).unwrap_err();
    assert!(matches!(err, Error::Format { .. } | Error::Core(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn dataset_round_trips_through_files() {
    let cfg = TwoFactorConfig {
        samples: 40,
        sensitive_classes: 4,
        ..TwoFactorConfig::default()
    };
    let data = generate_two_factor(&cfg, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    let m = manifest(40, 16, 2, 4);
    write_dataset(&p, &data, &m).unwrap();
    assert!(dir.path().join("d.manifest.json").exists());
    let (back, bm) = read_dataset(&p).unwrap();
    assert_eq!(bm, m);
    assert_eq!(back.x(), data.x());
    assert_eq!(back.z(), data.z());
    assert_eq!(back.y(), data.y());
    assert_eq!(dataset_to_csv(&back), dataset_to_csv(&data));
}

#[test]
fn three_row_file_without_manifest_loads() {
    let text = "x0,x1,z,y\n0.5,-1,0,2\n1e-3,2.25,1,0\n0,0,1,1\n";
    let (d, m) = parse_dataset(text, None, here()).unwrap();
    assert_eq!(d.len(), 3);
    assert_eq!(d.input_dim(), 2);
    assert_eq!((m.primary_classes, m.sensitive_classes), (2, 3));
    assert_eq!(m.provenance, Provenance::External);
}

#[test]
fn label_equal_to_class_count_is_rejected() {
    let text = "x0,z,y\n0.1,0,0\n0.2,1,3\n";
    let err = parse_dataset(text, Some(&manifest(2, 1, 2, 3)), here()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains('3'), "{err}");
}

#[test]
fn malformed_rows_name_their_line() {
    let text = "x0,x1,z,y\n0,0,0,0\n1,abc,1,1\n";
    match parse_dataset(text, None, here()).unwrap_err() {
        Error::Parse { line, message, .. } => {
            assert_eq!(line, 3);
            assert!(message.contains("x1"), "{message}");
        }
        e => panic!("unexpected {e}"),
    }
    let short = "x0,x1,z,y\n0,0,0,0\n1,1,1\n";
    assert!(matches!(
        parse_dataset(short, None, here()).unwrap_err(),
        Error::Parse { line: 3, .. }
    ));
    let bad_header = "a,b,z,y\n0,0,0,0\n";
    assert!(matches!(
        parse_dataset(bad_header, None, here()).unwrap_err(),
        Error::Parse { line: 1, .. }
    ));
}

#[test]
fn curve_csv_round_trips_at_emitted_precision() {
    let points = (0..5)
        .map(|k| CurvePoint {
            ratio: k as f64 * 0.25,
            accuracy: 1.0 - k as f64 / 7.0,
            lrp: (k as f64).sqrt() / 3.0,
            rank_mean: 0.1 + k as f64 * 0.01,
            rank_std: core::f64::consts::PI / 100.0,
            one_nn_error: 1.0 / 3.0,
            seed_count: 3,
        })
        .collect();
    let curve = TradeoffCurve { points };
    let text = curve_to_csv(&curve);
    let back = parse_curve(&text, here()).unwrap();
    for (a, b) in curve.points.iter().zip(&back.points) {
        assert_eq!(round_real(a.accuracy), b.accuracy);
        assert_eq!(round_real(a.lrp), b.lrp);
        assert_eq!(round_real(a.rank_std), b.rank_std);
        assert!((a.one_nn_error - b.one_nn_error).abs() < 1e-9);
        assert_eq!(a.seed_count, b.seed_count);
    }
    assert_eq!(curve_to_csv(&back), text);
}

#[test]
fn worlds_round_trip() {
    for (name, world) in builtin_worlds() {
        let text = world_to_csv(&world);
        let back = parse_world(&text, here()).unwrap();
        assert_eq!(world_to_csv(&back), text, "{name}");
    }
    let inconsistent = "x,z,y,f,probability\n0,0,0,0,0.5\n0,1,1,1,0.5\n";
    assert!(parse_world(inconsistent, here()).is_err());
}

#[test]
fn config_rejects_unknown_keys() {
    let ok = "seed = 4\n[train]\nlambda = 0.5\n[train.epochs]\ndpfe = 3\n";
    let cfg = RunConfig::from_toml(ok, here()).unwrap().resolve();
    assert_eq!(cfg.train.seed, 4);
    assert_eq!(cfg.train.lambda, 0.5);
    assert_eq!(cfg.train.epochs.dpfe, 3);
    assert_eq!(cfg.train.epochs.simple, 15);
    cfg.validate().unwrap();
    for bad in ["sed = 4\n", "[train]\nlamda = 1\n", "[data]\nsamples = 10\nfoo = 1\n"] {
        let err = RunConfig::from_toml(bad, here()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{bad}: {err}");
        assert_eq!(err.exit_code(), 2);
    }
}
