//! `dpfe` subcommands. Every command writes `<command>.manifest.json` into
//! its output directory alongside its artifacts.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpfe_core::data::{generate_two_factor, split_dataset, Dataset, DatasetManifest, Provenance, Splits};
use dpfe_core::metrics::oracle::{bound_ordering_suite, world_checks, OracleCheck, SuiteBudget};
use dpfe_core::metrics::{estimate_bounds, fit_posterior};
use dpfe_core::nn::{accuracy, Mode, SplitModel};
use dpfe_core::objective::{PairStrategy, SameLabelTerm};
use dpfe_core::pipeline::{pca_bottleneck_embed, train_dpfe, train_original, train_simple, StageResult};
use dpfe_core::tradeoff::{
    default_accuracy_grid, feature_covariance, interpolate_privacy, noisy_eval, superiority_check, sweep, NoiseSpec,
    PrivacyAxis, Verdict,
};
use dpfe_core::Warning;
use serde::Serialize;

use crate::checkpoint::{load_network, load_split, Model};
use crate::config::RunConfig;
use crate::curve_csv::{read_curve, write_curve};
use crate::dataset_io::{manifest_path, read_dataset, write_dataset};
use crate::error::{Error, Result};
use crate::report::{summarize_warnings, write_json, EvalReport, RunManifest, Seeds, StageReport};
use crate::world_io::read_world;

#[derive(Debug, Parser)]
#[command(
    name = "dpfe",
    version,
    about = "Train split feature extractors that hide a sensitive label, and measure how well they do"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed for generation, splitting, training and sweeps.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; relative paths go under $DPFE_OUTPUT_ROOT when set.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct Inputs {
    /// Dataset CSV (x0..x{d-1},z,y).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model checkpoint.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Strategy {
    AllPairs,
    RandomDisjoint,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SameTerm {
    Hinge,
    Linear,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    Lrp,
    OneNn,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic two-factor dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        dx: Option<usize>,
        #[arg(long)]
        cz: Option<usize>,
        #[arg(long)]
        cy: Option<usize>,
        #[arg(long)]
        spread: Option<f64>,
        #[arg(long)]
        offset: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        correlation: Option<f64>,
        #[arg(long, default_value = "dataset.csv")]
        name: String,
    },
    /// Train the original primary-task classifier.
    TrainOriginal {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Insert the PCA bottleneck into an original model and split it.
    EmbedBottleneck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// Feature dimension h.
        #[arg(long)]
        h: Option<usize>,
        /// Insert after this layer of the original network.
        #[arg(long)]
        layer: Option<usize>,
    },
    /// Fine-tune a bottlenecked model on the primary task only.
    TrainSimple {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Fine-tune with the pairwise sensitive-removal term.
    TrainDpfe {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
        #[arg(long, value_enum)]
        same_term: Option<SameTerm>,
    },
    /// Accuracy, log-rank privacy, 1NN error and bounds on the test split.
    EvalPrivacy {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// Noise ratio r; 0 evaluates the clean features.
        #[arg(long, default_value_t = 0.0)]
        ratio: f64,
    },
    /// Noise sweep producing an accuracy/privacy curve CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// Comma-separated noise ratios (must include 0).
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long, default_value = "curve.csv")]
        name: String,
    },
    /// Decide whether curve A or curve B is superior.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: Option<PathBuf>,
        #[arg(long)]
        b: Option<PathBuf>,
        #[arg(long, value_enum)]
        axis: Option<Axis>,
        #[arg(long)]
        grid_points: Option<usize>,
    },
    /// Check bound orderings against exact and Monte-Carlo oracles.
    OracleValidate {
        #[command(flatten)]
        common: Common,
        /// Extra world files (x,z,y,f,probability).
        #[arg(long)]
        world: Vec<PathBuf>,
        #[arg(long)]
        mi_samples: Option<usize>,
        #[arg(long)]
        kl_samples: Option<usize>,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Session {
    command: &'static str,
    config: RunConfig,
    dir: PathBuf,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Session {
    fn open(command: &'static str, common: &Common, overrides: impl FnOnce(&mut RunConfig)) -> Result<Self> {
        let mut config = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = common.seed {
            config.seed = s;
        }
        if let Some(o) = &common.out {
            config.output_dir = o.clone();
        }
        overrides(&mut config);
        let config = config.resolve();
        config.validate()?;
        let dir = config.output_path();
        let mut inputs = Vec::new();
        if let Some(p) = &common.config {
            inputs.push(p.display().to_string());
        }
        Ok(Session {
            command,
            config,
            dir,
            inputs,
            outputs: Vec::new(),
        })
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    fn finish(mut self) -> Result<()> {
        let name = format!("{}.manifest.json", self.command);
        let path = self.output(&name);
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config: &self.config,
            seeds: Seeds::of(&self.config),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
        };
        write_json(&path, &manifest)
    }

    fn load_splits(&mut self, data: Option<&PathBuf>) -> Result<Splits> {
        let path = require(self.command, "data", data, "generate one with gen-data")?;
        self.input(&path);
        self.input(&manifest_path(&path));
        let (dataset, _) = read_dataset(&path)?;
        Ok(split_dataset(&dataset, &self.config.split, self.config.seed)?)
    }

    fn model_path(&mut self, model: Option<&PathBuf>, hint: &str) -> Result<PathBuf> {
        let p = require(self.command, "model", model, hint)?;
        self.input(&p);
        Ok(p)
    }
}

fn require(command: &str, flag: &str, value: Option<&PathBuf>, hint: &str) -> Result<PathBuf> {
    value
        .cloned()
        .ok_or_else(|| Error::Usage(format!("{command} needs --{flag} <path>; {hint}")))
}

fn log_warnings(w: &[Warning]) {
    for msg in summarize_warnings(w) {
        log::warn!("{msg}");
    }
}

fn evaluate_clean(model: &SplitModel, splits: &Splits, config: &RunConfig) -> Result<EvalReport> {
    let noise = NoiseSpec::from_covariance(&feature_covariance(model, splits.train.x())?)?;
    evaluate_with(model, &splits.test, config, &noise, 0.0)
}

fn evaluate_with(
    model: &SplitModel,
    test: &Dataset,
    config: &RunConfig,
    noise: &NoiseSpec,
    ratio: f64,
) -> Result<EvalReport> {
    let seed = config.seed;
    let e = noisy_eval(model, test, noise, ratio, seed)?;
    let bounds = if config.metrics.bounds {
        let features = noise.perturb(&model.extract(test.x())?, ratio, seed)?;
        let probs = model.predict(&features)?;
        let sigma = fit_posterior(&features, test.y(), test.sensitive_classes())?.kernel_variance();
        Some(estimate_bounds(
            &probs,
            test.z(),
            &features,
            test.y(),
            test.sensitive_classes(),
            sigma,
        )?)
    } else {
        None
    };
    Ok(EvalReport {
        accuracy: e.accuracy,
        privacy: e.privacy,
        bounds,
    })
}

fn stage_report<M>(stage: &str, result: &StageResult<M>, test: Option<EvalReport>) -> StageReport {
    StageReport {
        stage: stage.to_string(),
        trace: result.trace.clone(),
        test,
        warnings: summarize_warnings(&result.warnings),
    }
}

fn print_eval(label: &str, e: &EvalReport) {
    println!(
        "{label}: accuracy {:.4}  lrp {:.4}  rank {:.4}±{:.4}  1nn error {:.4}",
        e.accuracy, e.privacy.lrp, e.privacy.rank_mean, e.privacy.rank_std, e.privacy.one_nn_error
    );
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::GenData {
            common,
            n,
            dx,
            cz,
            cy,
            spread,
            offset,
            noise,
            correlation,
            name,
        } => {
            let mut s = Session::open("gen-data", &common, |c| {
                let d = &mut c.data;
                d.samples = n.unwrap_or(d.samples);
                d.input_dim = dx.unwrap_or(d.input_dim);
                d.primary_classes = cz.unwrap_or(d.primary_classes);
                d.sensitive_classes = cy.unwrap_or(d.sensitive_classes);
                d.identity_spread = spread.unwrap_or(d.identity_spread);
                d.primary_offset = offset.unwrap_or(d.primary_offset);
                d.noise_sd = noise.unwrap_or(d.noise_sd);
                d.correlation = correlation.unwrap_or(d.correlation);
            })?;
            let dataset = generate_two_factor(&s.config.data, s.config.seed)?;
            let manifest = DatasetManifest {
                sample_count: dataset.len(),
                input_dim: dataset.input_dim(),
                primary_classes: dataset.primary_classes(),
                sensitive_classes: dataset.sensitive_classes(),
                seed: Some(s.config.seed),
                fractions: s.config.split,
                provenance: Provenance::Synthetic,
            };
            let path = s.output(&name);
            s.outputs.push(manifest_path(Path::new(&name)).display().to_string());
            write_dataset(&path, &dataset, &manifest)?;
            println!("wrote {} samples to {}", dataset.len(), path.display());
            s.finish()?;
        }
        Command::TrainOriginal { common, inputs, epochs } => {
            let mut s = Session::open("train-original", &common, |c| {
                c.train.epochs.original = epochs.unwrap_or(c.train.epochs.original);
            })?;
            let splits = s.load_splits(inputs.data.as_ref())?;
            let result = train_original(
                &splits.train.primary_view(),
                &splits.validation.primary_view(),
                &s.config.train,
            )?;
            log_warnings(&result.warnings);
            let test_acc = accuracy(&result.model.forward(splits.test.x(), Mode::Eval)?, splits.test.z());
            Model::Network(result.model.clone()).save(&s.output("original.ckpt.json"))?;
            #[derive(Serialize)]
            struct Report {
                stage: StageReport,
                test_accuracy: f64,
            }
            write_json(
                &s.output("train-original.report.json"),
                &Report {
                    stage: stage_report("original", &result, None),
                    test_accuracy: test_acc,
                },
            )?;
            println!("original: test accuracy {test_acc:.4}");
            s.finish()?;
        }
        Command::EmbedBottleneck {
            common,
            inputs,
            h,
            layer,
        } => {
            let mut s = Session::open("embed-bottleneck", &common, |c| {
                c.train.feature_dim = h.unwrap_or(c.train.feature_dim);
                c.train.layer_index = layer.unwrap_or(c.train.layer_index);
            })?;
            let splits = s.load_splits(inputs.data.as_ref())?;
            let path = s.model_path(inputs.model.as_ref(), "train one with train-original")?;
            let original = load_network(&path)?;
            let cfg = &s.config.train;
            let (embedded, warnings) =
                pca_bottleneck_embed(&original, cfg.layer_index, cfg.feature_dim, splits.train.x())?;
            log_warnings(&warnings);
            let before = accuracy(&original.forward(splits.test.x(), Mode::Eval)?, splits.test.z());
            let after = accuracy(&embedded.forward_eval(splits.test.x())?.1, splits.test.z());
            Model::Split(embedded).save(&s.output("embedded.ckpt.json"))?;
            #[derive(Serialize)]
            struct Report {
                original_test_accuracy: f64,
                embedded_test_accuracy: f64,
                warnings: Vec<String>,
            }
            write_json(
                &s.output("embed-bottleneck.report.json"),
                &Report {
                    original_test_accuracy: before,
                    embedded_test_accuracy: after,
                    warnings: summarize_warnings(&warnings),
                },
            )?;
            println!("bottleneck: test accuracy {before:.4} -> {after:.4}");
            s.finish()?;
        }
        Command::TrainSimple { common, inputs, epochs } => {
            let mut s = Session::open("train-simple", &common, |c| {
                c.train.epochs.simple = epochs.unwrap_or(c.train.epochs.simple);
            })?;
            let splits = s.load_splits(inputs.data.as_ref())?;
            let path = s.model_path(inputs.model.as_ref(), "create one with embed-bottleneck")?;
            let embedded = load_split(&path)?;
            let result = train_simple(
                embedded,
                &splits.train.primary_view(),
                &splits.validation.primary_view(),
                &s.config.train,
            )?;
            log_warnings(&result.warnings);
            let eval = evaluate_clean(&result.model, &splits, &s.config)?;
            Model::Split(result.model.clone()).save(&s.output("simple.ckpt.json"))?;
            write_json(
                &s.output("train-simple.report.json"),
                &stage_report("simple", &result, Some(eval)),
            )?;
            print_eval("simple", &eval);
            s.finish()?;
        }
        Command::TrainDpfe {
            common,
            inputs,
            epochs,
            lambda,
            margin,
            strategy,
            same_term,
        } => {
            let mut s = Session::open("train-dpfe", &common, |c| {
                let t = &mut c.train;
                t.epochs.dpfe = epochs.unwrap_or(t.epochs.dpfe);
                t.lambda = lambda.unwrap_or(t.lambda);
                t.margin = margin.or(t.margin);
                if let Some(st) = strategy {
                    t.strategy = match st {
                        Strategy::AllPairs => PairStrategy::AllPairs,
                        Strategy::RandomDisjoint => PairStrategy::RandomDisjoint,
                    };
                }
                if let Some(st) = same_term {
                    t.same_term = match st {
                        SameTerm::Hinge => SameLabelTerm::Hinge,
                        SameTerm::Linear => SameLabelTerm::Linear,
                    };
                }
            })?;
            let splits = s.load_splits(inputs.data.as_ref())?;
            let path = s.model_path(inputs.model.as_ref(), "train one with train-simple")?;
            let simple = load_split(&path)?;
            let result = train_dpfe(simple, &splits.train, &splits.validation, &s.config.train)?;
            log_warnings(&result.warnings);
            let eval = evaluate_clean(&result.model, &splits, &s.config)?;
            Model::Split(result.model.clone()).save(&s.output("dpfe.ckpt.json"))?;
            write_json(
                &s.output("train-dpfe.report.json"),
                &stage_report("dpfe", &result, Some(eval)),
            )?;
            print_eval("dpfe", &eval);
            s.finish()?;
        }
        Command::EvalPrivacy { common, inputs, ratio } => {
            let mut s = Session::open("eval-privacy", &common, |_| {})?;
            let splits = s.load_splits(inputs.data.as_ref())?;
            let path = s.model_path(inputs.model.as_ref(), "train one with train-simple or train-dpfe")?;
            let model = load_split(&path)?;
            let noise = NoiseSpec::from_covariance(&feature_covariance(&model, splits.train.x())?)?;
            let eval = evaluate_with(&model, &splits.test, &s.config, &noise, ratio)?;
            #[derive(Serialize)]
            struct Report {
                ratio: f64,
                #[serde(flatten)]
                eval: EvalReport,
            }
            write_json(&s.output("eval-privacy.report.json"), &Report { ratio, eval })?;
            print_eval(&format!("r={ratio}"), &eval);
            s.finish()?;
        }
        Command::Sweep {
            common,
            inputs,
            ratios,
            replicates,
            name,
        } => {
            let mut s = Session::open("sweep", &common, |c| {
                if let Some(r) = ratios {
                    c.sweep.ratios = r;
                }
                c.sweep.replicates = replicates.unwrap_or(c.sweep.replicates);
            })?;
            let path = s.model_path(inputs.model.as_ref(), "train one with train-dpfe first")?;
            let splits = s.load_splits(inputs.data.as_ref())?;
            let model = load_split(&path)?;
            let curve = sweep(&model, splits.train.x(), &splits.test, &s.config.sweep)?;
            write_curve(&s.output(&name), &curve)?;
            for p in &curve.points {
                println!(
                    "r={:<6} accuracy {:.4}  lrp {:.4}  1nn error {:.4}",
                    p.ratio, p.accuracy, p.lrp, p.one_nn_error
                );
            }
            s.finish()?;
        }
        Command::Compare {
            common,
            a,
            b,
            axis,
            grid_points,
        } => {
            let mut s = Session::open("compare", &common, |c| {
                if let Some(ax) = axis {
                    c.metrics.privacy_axis = match ax {
                        Axis::Lrp => PrivacyAxis::Lrp,
                        Axis::OneNn => PrivacyAxis::OneNn,
                    };
                }
                c.metrics.grid_points = grid_points.unwrap_or(c.metrics.grid_points);
            })?;
            let pa = require("compare", "a", a.as_ref(), "pass a curve CSV written by sweep")?;
            let pb = require("compare", "b", b.as_ref(), "pass a curve CSV written by sweep")?;
            s.input(&pa);
            s.input(&pb);
            let (ca, cb) = (read_curve(&pa)?, read_curve(&pb)?);
            let axis = s.config.metrics.privacy_axis;
            let grid = default_accuracy_grid(&ca, &cb, s.config.metrics.grid_points)?;
            let verdict = superiority_check(&ca, &cb, &grid, axis)?;
            #[derive(Serialize)]
            struct GridRow {
                accuracy: f64,
                privacy_a: Option<f64>,
                privacy_b: Option<f64>,
            }
            #[derive(Serialize)]
            struct Report {
                axis: PrivacyAxis,
                verdict: Verdict,
                grid: Vec<GridRow>,
            }
            let rows: Vec<GridRow> = grid
                .iter()
                .map(|&g| GridRow {
                    accuracy: g,
                    privacy_a: interpolate_privacy(&ca, g, axis),
                    privacy_b: interpolate_privacy(&cb, g, axis),
                })
                .collect();
            for r in &rows {
                println!("accuracy {:.4}  a {:?}  b {:?}", r.accuracy, r.privacy_a, r.privacy_b);
            }
            let label = match verdict {
                Verdict::SuperiorA => "superior_a",
                Verdict::SuperiorB => "superior_b",
                Verdict::Mixed => "mixed",
            };
            println!("verdict: {label}");
            write_json(
                &s.output("compare.report.json"),
                &Report {
                    axis,
                    verdict,
                    grid: rows,
                },
            )?;
            s.finish()?;
        }
        Command::OracleValidate {
            common,
            world,
            mi_samples,
            kl_samples,
        } => {
            let mut s = Session::open("oracle-validate", &common, |_| {})?;
            let defaults = SuiteBudget::default();
            let budget = SuiteBudget {
                mi_samples: mi_samples.unwrap_or(defaults.mi_samples),
                kl_samples: kl_samples.unwrap_or(defaults.kl_samples),
            };
            let mut checks = bound_ordering_suite(s.config.seed, budget)?;
            for p in &world {
                s.input(p);
                let w = read_world(p)?;
                checks.extend(world_checks(&p.display().to_string(), &w, s.config.seed)?);
            }
            print_checks(&checks);
            let passed = checks.iter().filter(|c| c.passed).count();
            println!("{passed}/{} checks passed", checks.len());
            #[derive(Serialize)]
            struct Row<'a> {
                name: &'a str,
                passed: bool,
                detail: &'a str,
            }
            let rows: Vec<Row> = checks
                .iter()
                .map(|c| Row {
                    name: &c.name,
                    passed: c.passed,
                    detail: &c.detail,
                })
                .collect();
            write_json(&s.output("oracle-validate.report.json"), &rows)?;
            s.finish()?;
            return Ok(if passed == checks.len() { 0 } else { 1 });
        }
    }
    Ok(0)
}

fn print_checks(checks: &[OracleCheck]) {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        println!("{mark}  {:<width$}  {}", c.name, c.detail);
    }
}
