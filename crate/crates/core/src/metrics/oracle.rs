//! Independent references for the information quantities: exact enumeration
//! on finite worlds and Monte-Carlo estimates on Gaussian mixture worlds.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::data::label_counts;
use crate::error::{Error, Result};
use crate::math;
use crate::rng;
use crate::tensor::Tensor2;

use super::bounds::{bound_u1, bound_u2, gaussian_kl, gmm_kl_upper, GaussianMixture};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointEntry {
    pub x: usize,
    pub z: usize,
    pub y: usize,
    pub probability: f64,
}

/// Finite joint law of `(x, z, y)` with a deterministic feature map `f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    entries: Vec<JointEntry>,
    feature_of: Vec<usize>,
}

impl DiscreteJoint {
    pub fn new(entries: Vec<JointEntry>, feature_of: Vec<usize>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Validation("world has no outcomes".into()));
        }
        if let Some(e) = entries
            .iter()
            .find(|e| !(e.probability >= 0.0) || !e.probability.is_finite())
        {
            return Err(Error::Validation(format!("invalid probability {}", e.probability)));
        }
        let total: f64 = entries.iter().map(|e| e.probability).sum();
        if math::abs(total - 1.0) > 1e-9 {
            return Err(Error::Validation(format!("probabilities sum to {total}, not 1")));
        }
        if let Some(e) = entries.iter().find(|e| e.x >= feature_of.len()) {
            return Err(Error::Validation(format!("outcome x={} has no feature", e.x)));
        }
        Ok(DiscreteJoint { entries, feature_of })
    }

    pub fn entries(&self) -> &[JointEntry] {
        &self.entries
    }

    pub fn feature_of(&self) -> &[usize] {
        &self.feature_of
    }

    pub fn feature_count(&self) -> usize {
        self.feature_of.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn z_count(&self) -> usize {
        self.entries.iter().map(|e| e.z).max().unwrap_or(0) + 1
    }

    pub fn y_count(&self) -> usize {
        self.entries.iter().map(|e| e.y).max().unwrap_or(0) + 1
    }

    fn table(&self, label: impl Fn(&JointEntry) -> usize, width: usize) -> Vec<Vec<f64>> {
        let mut t = vec![vec![0.0; width]; self.feature_count()];
        for e in &self.entries {
            t[self.feature_of[e.x]][label(e)] += e.probability;
        }
        t
    }

    /// `p(f, z)` indexed `[f][z]`.
    pub fn joint_fz(&self) -> Vec<Vec<f64>> {
        self.table(|e| e.z, self.z_count())
    }

    /// `p(f, y)` indexed `[f][y]`.
    pub fn joint_fy(&self) -> Vec<Vec<f64>> {
        self.table(|e| e.y, self.y_count())
    }

    /// The exact posterior `p(z | f)`, indexed `[f][z]`; uniform where `p(f) = 0`.
    pub fn exact_posterior_z(&self) -> Vec<Vec<f64>> {
        self.joint_fz()
            .into_iter()
            .map(|row| {
                let pf: f64 = row.iter().sum();
                if pf > 0.0 {
                    row.iter().map(|p| p / pf).collect()
                } else {
                    vec![1.0 / row.len() as f64; row.len()]
                }
            })
            .collect()
    }

    /// `H(z) + E ln q(z | f)` for a conditional table `q[f][z]`.
    pub fn bound_l(&self, q: &[Vec<f64>]) -> Result<f64> {
        let joint = self.joint_fz();
        if q.len() != joint.len() || q.iter().any(|r| r.len() != self.z_count()) {
            return Err(Error::shape("q table does not match the world"));
        }
        let h_z = entropy(&marginal_columns(&joint));
        let mut expected = 0.0;
        for (pf, qf) in joint.iter().zip(q) {
            for (&p, &qz) in pf.iter().zip(qf) {
                if p > 0.0 {
                    expected += p * math::ln(qz);
                }
            }
        }
        Ok(h_z + expected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationQuantities {
    pub i_fz: f64,
    pub i_fy: f64,
    pub h_z: f64,
    pub h_y_given_f: f64,
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * math::ln(v)).sum()
}

fn marginal_columns(joint: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; joint.first().map_or(0, Vec::len)];
    for row in joint {
        for (a, b) in m.iter_mut().zip(row) {
            *a += b;
        }
    }
    m
}

fn mutual_information(joint: &[Vec<f64>]) -> f64 {
    let col = marginal_columns(joint);
    let mut mi = 0.0;
    for row in joint {
        let pr: f64 = row.iter().sum();
        for (&p, &pc) in row.iter().zip(&col) {
            if p > 0.0 {
                mi += p * math::ln(p / (pr * pc));
            }
        }
    }
    mi
}

/// Exact enumeration of the information quantities (nats).
pub fn discrete_mi_oracle(world: &DiscreteJoint) -> InformationQuantities {
    let fz = world.joint_fz();
    let fy = world.joint_fy();
    let h_y = entropy(&marginal_columns(&fy));
    let i_fy = mutual_information(&fy);
    InformationQuantities {
        i_fz: mutual_information(&fz),
        i_fy,
        h_z: entropy(&marginal_columns(&fz)),
        h_y_given_f: h_y - i_fy,
    }
}

fn world(rows: &[(usize, usize, usize, f64)], feature_of: Vec<usize>) -> DiscreteJoint {
    let entries = rows
        .iter()
        .map(|&(x, z, y, probability)| JointEntry { x, z, y, probability })
        .collect();
    DiscreteJoint::new(entries, feature_of).expect("built-in world is valid")
}

/// Hand-built finite worlds covering independence, determinism, noise and
/// feature coarsening.
pub fn builtin_worlds() -> Vec<(&'static str, DiscreteJoint)> {
    vec![
        (
            "feature-equals-primary",
            world(
                &[(0, 0, 0, 0.25), (0, 0, 1, 0.25), (1, 1, 0, 0.25), (1, 1, 1, 0.25)],
                vec![0, 1],
            ),
        ),
        (
            "feature-independent",
            world(
                &[(0, 0, 0, 0.25), (0, 1, 1, 0.25), (1, 0, 1, 0.25), (1, 1, 0, 0.25)],
                vec![0, 0],
            ),
        ),
        (
            "noisy-channel",
            world(
                &[(0, 0, 0, 0.4), (1, 0, 1, 0.1), (2, 1, 0, 0.1), (3, 1, 1, 0.4)],
                vec![0, 1, 0, 1],
            ),
        ),
        (
            "three-outcome",
            world(&[(0, 0, 0, 0.5), (1, 1, 1, 0.3), (2, 1, 0, 0.2)], vec![0, 1, 1]),
        ),
        (
            "identity-leaking",
            world(
                &[
                    (0, 0, 0, 0.2),
                    (1, 0, 1, 0.15),
                    (2, 0, 2, 0.15),
                    (3, 1, 0, 0.1),
                    (4, 1, 1, 0.2),
                    (5, 1, 2, 0.2),
                ],
                vec![0, 1, 2, 3, 4, 5],
            ),
        ),
        (
            "coarsened-three-class",
            world(
                &[
                    (0, 0, 0, 0.1),
                    (1, 1, 0, 0.2),
                    (2, 2, 1, 0.15),
                    (3, 0, 1, 0.25),
                    (4, 1, 2, 0.1),
                    (5, 2, 2, 0.2),
                ],
                vec![0, 0, 1, 1, 2, 2],
            ),
        ),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

fn summarize(values: impl Iterator<Item = f64>) -> McEstimate {
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for v in values {
        n += 1.0;
        let delta = v - mean;
        mean += delta / n;
        m2 += delta * (v - mean);
    }
    let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
    McEstimate {
        mean,
        std_error: math::sqrt(var / n),
    }
}

fn draw_gaussian(mean: &[f64], sd: f64, r: &mut rng::Rng, out: &mut [f64]) {
    for (o, m) in out.iter_mut().zip(mean) {
        let g: f64 = r.sample(StandardNormal);
        *o = m + sd * g;
    }
}

fn draw_index(weights: &[f64], r: &mut rng::Rng) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Monte-Carlo `KL(p ‖ q)` for two mixtures with shared covariance `σI`.
pub fn mc_mixture_kl(p: &GaussianMixture, q: &GaussianMixture, sigma: f64, samples: usize, seed: u64) -> McEstimate {
    let mut r = rng::stream(seed, 0x6b6c);
    let sd = math::sqrt(sigma);
    let mut x = vec![0.0; p.dim()];
    summarize((0..samples).map(|_| {
        let a = draw_index(&p.weights, &mut r);
        draw_gaussian(&p.means[a], sd, &mut r, &mut x);
        p.log_density(&x, sigma) - q.log_density(&x, sigma)
    }))
}

/// Monte-Carlo `KL` for two Gaussians `N(μ, σI)`.
pub fn mc_gaussian_kl(mu_p: &[f64], mu_q: &[f64], sigma: f64, samples: usize, seed: u64) -> McEstimate {
    let p = GaussianMixture::new(vec![1.0], vec![mu_p.to_vec()]).expect("single component");
    let q = GaussianMixture::new(vec![1.0], vec![mu_q.to_vec()]).expect("single component");
    mc_mixture_kl(&p, &q, sigma, samples, seed)
}

/// Monte-Carlo `I(f; y)` when `p(f | y_a)` is the KDE (kernel `σI`) of the
/// class-`a` rows of `features` and `p(y_a)` their empirical frequency.
pub fn mc_mutual_information(
    features: &Tensor2,
    labels: &[usize],
    classes: usize,
    sigma: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let counts = label_counts(labels, classes);
    if counts.contains(&0) {
        return Err(Error::Validation("every class needs a sample".into()));
    }
    let n = labels.len() as f64;
    let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let mixtures: Vec<GaussianMixture> = (0..classes)
        .map(|a| {
            let pts: Vec<&[f64]> = features
                .row_iter()
                .zip(labels)
                .filter(|(_, &l)| l == a)
                .map(|(r, _)| r)
                .collect();
            GaussianMixture::from_points(&pts)
        })
        .collect::<Result<_>>()?;
    let mut r = rng::stream(seed, 0x6d69);
    let sd = math::sqrt(sigma);
    let mut x = vec![0.0; features.cols()];
    let mut logs = vec![0.0; classes];
    Ok(summarize((0..samples).map(|_| {
        let a = draw_index(&priors, &mut r);
        let k = r.random_range(0..mixtures[a].means.len());
        draw_gaussian(&mixtures[a].means[k], sd, &mut r, &mut x);
        for (b, slot) in logs.iter_mut().enumerate() {
            *slot = math::ln(priors[b]) + mixtures[b].log_density(&x, sigma);
        }
        mixtures[a].log_density(&x, sigma) - math::log_sum_exp(&logs)
    })))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Sample counts for the Monte-Carlo parts of the suite.
#[derive(Debug, Clone, Copy)]
pub struct SuiteBudget {
    pub mi_samples: usize,
    pub kl_samples: usize,
}

impl Default for SuiteBudget {
    fn default() -> Self {
        SuiteBudget {
            mi_samples: 200_000,
            kl_samples: 1_000_000,
        }
    }
}

fn normal_vec(r: &mut rng::Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let g: f64 = r.sample(StandardNormal);
            scale * g
        })
        .collect()
}

fn random_simplex(r: &mut rng::Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.2..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// `L` with the exact posterior equals `I(f;z)`, and `L` with random
/// conditionals never exceeds it.
pub fn world_checks(name: &str, world: &DiscreteJoint, seed: u64) -> Result<Vec<OracleCheck>> {
    let mut r = rng::stream(seed, 0x776f_726c);
    let info = discrete_mi_oracle(world);
    let exact = world.bound_l(&world.exact_posterior_z())?;
    let gap = math::abs(exact - info.i_fz);
    let mut worst = f64::INFINITY;
    for _ in 0..5 {
        let q: Vec<Vec<f64>> = (0..world.feature_count())
            .map(|_| random_simplex(&mut r, world.z_count()))
            .collect();
        worst = worst.min(info.i_fz - world.bound_l(&q)?);
    }
    Ok(vec![
        OracleCheck {
            name: format!("{name}: L(exact q) = I(f;z)"),
            passed: gap < 1e-12,
            detail: format!("L={exact:.12} I={:.12}", info.i_fz),
        },
        OracleCheck {
            name: format!("{name}: L(random q) <= I(f;z)"),
            passed: worst >= -1e-9,
            detail: format!("min slack {worst:.3e}"),
        },
    ])
}

/// Runs every bound-ordering check: `L ≤ I(f;z)` on the built-in finite
/// worlds, `I(f;y) ≤ U1 ≤ U2` on random mixture worlds, and the Gaussian and
/// mixture KL closed forms against sampling.
pub fn bound_ordering_suite(seed: u64, budget: SuiteBudget) -> Result<Vec<OracleCheck>> {
    let mut checks = Vec::new();
    let mut r = rng::stream(seed, 0x7375_6974);

    for (name, w) in builtin_worlds() {
        checks.extend(world_checks(name, &w, r.random())?);
    }

    for world_idx in 0..3 {
        let classes = 3;
        let per_class = 4;
        let d = 2;
        let sigma = 0.5;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for a in 0..classes {
            let center = normal_vec(&mut r, d, 1.5);
            for _ in 0..per_class {
                let jitter = normal_vec(&mut r, d, 0.7);
                rows.push(center.iter().zip(&jitter).map(|(c, j)| c + j).collect::<Vec<f64>>());
                labels.push(a);
            }
        }
        let features = Tensor2::from_rows(&rows)?;
        let mc = mc_mutual_information(&features, &labels, classes, sigma, budget.mi_samples, r.random())?;
        let u1 = bound_u1(&features, &labels, classes, sigma)?;
        let u2 = bound_u2(&features, &labels, sigma)?.direct;
        checks.push(OracleCheck {
            name: format!("mixture world {world_idx}: I(f;y) <= U1"),
            passed: mc.mean <= u1 + 3.0 * mc.std_error,
            detail: format!("I={:.5}±{:.5} U1={u1:.5}", mc.mean, mc.std_error),
        });
        checks.push(OracleCheck {
            name: format!("mixture world {world_idx}: U1 <= U2"),
            passed: u1 <= u2 + 1e-9,
            detail: format!("U1={u1:.9} U2={u2:.9}"),
        });
    }

    let mu_p = normal_vec(&mut r, 3, 1.0);
    let mu_q = normal_vec(&mut r, 3, 1.0);
    let sigma = 0.8;
    let closed = gaussian_kl(&mu_p, &mu_q, sigma)?;
    let mc = mc_gaussian_kl(&mu_p, &mu_q, sigma, budget.kl_samples, r.random());
    let rel = math::abs(mc.mean - closed) / closed;
    checks.push(OracleCheck {
        name: "gaussian KL closed form vs sampling".into(),
        passed: rel < 0.02,
        detail: format!("closed={closed:.5} mc={:.5} rel={rel:.2e}", mc.mean),
    });

    for k in 0..3 {
        let p = GaussianMixture::new(
            random_simplex(&mut r, 3),
            (0..3).map(|_| normal_vec(&mut r, 2, 1.0)).collect(),
        )?;
        let q = GaussianMixture::new(
            random_simplex(&mut r, 3),
            (0..3).map(|_| normal_vec(&mut r, 2, 1.0)).collect(),
        )?;
        let bound = gmm_kl_upper(&p, &q, 0.6)?;
        let mc = mc_mixture_kl(&p, &q, 0.6, budget.mi_samples, r.random());
        checks.push(OracleCheck {
            name: format!("mixture KL {k}: sampled <= bound"),
            passed: mc.mean <= bound + 3.0 * mc.std_error,
            detail: format!("mc={:.5}±{:.5} bound={bound:.5}", mc.mean, mc.std_error),
        });
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_feature_carries_no_information() {
        let (_, w) = &builtin_worlds()[1];
        let info = discrete_mi_oracle(w);
        assert!(info.i_fy.abs() < 1e-15);
        assert!(info.i_fz.abs() < 1e-15);
    }

    #[test]
    fn feature_equal_to_uniform_binary_primary() {
        let (_, w) = &builtin_worlds()[0];
        let info = discrete_mi_oracle(w);
        assert!((info.i_fz - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((info.h_z - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn three_outcome_world_by_hand() {
        // f=0 ↔ z=0 (p 0.5); f=1 ↔ z=1 (p 0.5) so I(f;z) = ln 2.
        // p(f,y): (0,0)=0.5, (1,1)=0.3, (1,0)=0.2; p(y=0)=0.7, p(y=1)=0.3.
        let (_, w) = &builtin_worlds()[3];
        let info = discrete_mi_oracle(w);
        let expect_fy = 0.5 * (0.5_f64 / (0.5 * 0.7)).ln()
            + 0.3 * (0.3_f64 / (0.5 * 0.3)).ln()
            + 0.2 * (0.2_f64 / (0.5 * 0.7)).ln();
        assert!((info.i_fz - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((info.i_fy - expect_fy).abs() < 1e-15);
        let h_y = -(0.7_f64 * 0.7_f64.ln() + 0.3 * 0.3_f64.ln());
        assert!((info.h_y_given_f - (h_y - expect_fy)).abs() < 1e-15);
    }

    #[test]
    fn unnormalized_world_rejected() {
        let e = vec![JointEntry {
            x: 0,
            z: 0,
            y: 0,
            probability: 0.5,
        }];
        assert!(matches!(DiscreteJoint::new(e, vec![0]), Err(Error::Validation(_))));
    }
}
