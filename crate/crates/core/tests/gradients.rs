use dpfe_core::gradcheck::{finite_diff_check, LossEval};
use dpfe_core::nn::{Network, SplitModel};
use dpfe_core::objective::{
    dpfe_total_loss, network_primary_loss, split_primary_loss, DpfeLossConfig, PairLoss, PairStrategy, SameLabelTerm,
};
use dpfe_core::rng;
use dpfe_core::Tensor2;

fn batch(n: usize, d: usize, seed: u64) -> (Tensor2, Vec<usize>, Vec<usize>) {
    use rand::Rng;
    let mut r = rng::seeded(seed);
    let x = Tensor2::from_vec(n, d, (0..n * d).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap();
    let z = (0..n).map(|i| i % 2).collect();
    let y = (0..n).map(|i| (i / 2) % 3).collect();
    (x, z, y)
}

fn config(strategy: PairStrategy, same_term: SameLabelTerm) -> DpfeLossConfig {
    DpfeLossConfig {
        lambda: 0.7,
        pair: PairLoss { margin: 6.0, same_term },
        strategy,
    }
}

#[test]
fn dpfe_loss_gradient_all_pairs() {
    let model = SplitModel::random(5, &[8, 8], 3, &[6], 2, &mut rng::seeded(21));
    let (x, z, y) = batch(12, 5, 4);
    let cfg = config(PairStrategy::AllPairs, SameLabelTerm::Hinge);
    let loss = |m: &SplitModel| {
        let o = dpfe_total_loss(m, &x, &z, &y, &cfg, 9)?;
        Ok(LossEval {
            value: o.breakdown.total,
            grad: o.grads,
            kink_margin: o.kink_margin,
        })
    };
    let report = finite_diff_check(&model, loss, 50, 1e-5, 3).unwrap();
    assert!(
        report.probed.len() >= 40,
        "only {} probes accepted ({} unresolved)",
        report.probed.len(),
        report.unresolved
    );
    assert!(report.max_relative_error < 1e-4, "{}", report.max_relative_error);
}

#[test]
fn dpfe_loss_gradient_disjoint_linear() {
    let model = SplitModel::random(4, &[6], 3, &[5], 3, &mut rng::seeded(22));
    let (x, _, y) = batch(10, 4, 5);
    let z: Vec<usize> = (0..10).map(|i| i % 3).collect();
    let cfg = config(PairStrategy::RandomDisjoint, SameLabelTerm::Linear);
    let loss = |m: &SplitModel| {
        let o = dpfe_total_loss(m, &x, &z, &y, &cfg, 17)?;
        Ok(LossEval {
            value: o.breakdown.total,
            grad: o.grads,
            kink_margin: o.kink_margin,
        })
    };
    let report = finite_diff_check(&model, loss, 50, 1e-5, 4).unwrap();
    assert!(report.max_relative_error < 1e-4, "{}", report.max_relative_error);
}

#[test]
fn primary_loss_gradients() {
    let model = SplitModel::random(4, &[6], 3, &[5], 2, &mut rng::seeded(23));
    let net = Network::mlp_classifier(4, &[7, 5], 2, &mut rng::seeded(24));
    let (x, z, _) = batch(9, 4, 6);
    let split = |m: &SplitModel| {
        let o = split_primary_loss(m, &x, &z)?;
        Ok(LossEval {
            value: o.breakdown.total,
            grad: o.grads,
            kink_margin: o.kink_margin,
        })
    };
    let plain = |m: &Network| {
        let o = network_primary_loss(m, &x, &z)?;
        Ok(LossEval {
            value: o.breakdown.total,
            grad: o.grads,
            kink_margin: o.kink_margin,
        })
    };
    assert!(
        finite_diff_check(&model, split, 40, 1e-5, 1)
            .unwrap()
            .max_relative_error
            < 1e-4
    );
    assert!(finite_diff_check(&net, plain, 40, 1e-5, 2).unwrap().max_relative_error < 1e-4);
}

#[test]
fn pair_term_leaves_predictor_gradient_unchanged() {
    let model = SplitModel::random(4, &[6], 3, &[5], 2, &mut rng::seeded(25));
    let (x, z, y) = batch(8, 4, 7);
    let with = dpfe_total_loss(
        &model,
        &x,
        &z,
        &y,
        &config(PairStrategy::AllPairs, SameLabelTerm::Hinge),
        1,
    )
    .unwrap();
    let without = split_primary_loss(&model, &x, &z).unwrap();
    let theta = model.extractor_param_count();
    assert_eq!(with.grads[theta..], without.grads[theta..]);
    assert_ne!(with.grads[..theta], without.grads[..theta]);
}
