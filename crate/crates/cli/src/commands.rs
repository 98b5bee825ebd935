//! `train`, `eval`, `gradcheck` and `figure1`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lsoftmax::data::{self, Dataset, DatasetSplit};
use lsoftmax::gradcheck::{LossInstance, DEFAULT_STEP};
use lsoftmax::metrics::{self, AngularStats};
use lsoftmax::model::Model;
use lsoftmax::nn::NetworkSpec;
use lsoftmax::optim::{self, MetricsRow};
use lsoftmax::{params_io, Margin, Tensor};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::CliError;
use crate::netspec;

/// Feature CSVs are only written for feature dimensions up to this.
pub const MAX_EXPORT_DIM: usize = 16;

pub fn load_data(cfg: &ExperimentConfig) -> Result<DatasetSplit, CliError> {
    let d = &cfg.data;
    let limit = |n: usize| (n > 0).then_some(n);
    let mut split = match d.source {
        DataSource::Mnist => {
            let train = data::load_mnist(Path::new(&d.train_images), Path::new(&d.train_labels), limit(d.train_limit))?;
            let test = data::load_mnist(Path::new(&d.test_images), Path::new(&d.test_labels), limit(d.test_limit))?;
            if d.val_fraction > 0.0 {
                let mut s = data::split(&train, [1.0 - d.val_fraction, d.val_fraction, 0.0], d.split_seed)?;
                s.test = test;
                s
            } else {
                let val = train.take(0);
                DatasetSplit::new(train, val, test)
            }
        }
        DataSource::Blobs => {
            let all = data::make_blobs(d.blob_per_class, d.blob_classes, d.blob_dim, d.blob_spread, d.blob_seed)?;
            data::split(&all, d.split, d.split_seed)?
        }
    };
    if d.subtract_mean {
        split.subtract_train_mean();
    }
    Ok(split)
}

pub fn network_spec(cfg: &ExperimentConfig, sample_shape: &[usize]) -> Result<NetworkSpec, CliError> {
    netspec::network(&cfg.network.layers, sample_shape, cfg.network.feature_dim)
        .map_err(|e| CliError::Validation(format!("config: [network] layers: {e}")))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

/// `iteration,lambda,learning_rate,train_loss,val_error`, val_error blank
/// when not evaluated.
pub fn write_metrics_csv<W: Write>(mut out: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(out, "iteration,lambda,learning_rate,train_loss,val_error")?;
    for r in rows {
        write!(out, "{},{},{},{},", r.iteration, r.lambda, r.learning_rate, r.train_loss)?;
        if let Some(v) = r.val_error {
            write!(out, "{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricsRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some("iteration,lambda,learning_rate,train_loss,val_error") {
        return Err("unexpected metrics header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(format!("line {}: expected 5 fields", i + 2));
            }
            let bad = |e: &dyn std::fmt::Display| format!("line {}: {e}", i + 2);
            Ok(MetricsRow {
                iteration: f[0].parse().map_err(|e| bad(&e))?,
                lambda: f[1].parse().map_err(|e| bad(&e))?,
                learning_rate: f[2].parse().map_err(|e| bad(&e))?,
                train_loss: f[3].parse().map_err(|e| bad(&e))?,
                val_error: if f[4].is_empty() {
                    None
                } else {
                    Some(f[4].parse().map_err(|e| bad(&e))?)
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub output_dir: PathBuf,
    pub model: Model,
    pub metrics: Vec<MetricsRow>,
    pub test_accuracy: Option<f64>,
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainReport, CliError> {
    let out = PathBuf::from(&cfg.output.directory);
    ensure_dir(&out)?;
    write_file(&out.join("resolved_config.toml"), |w| w.write_all(cfg.to_toml().as_bytes()))?;

    let split = load_data(cfg)?;
    let spec = network_spec(cfg, split.train.sample_shape())?;
    let outcome = optim::train(&spec, &split, &cfg.train_config(), &mut ())?;
    let model = outcome.state.model;

    write_file(&out.join("metrics.csv"), |w| write_metrics_csv(w, &outcome.metrics))?;
    params_io::save_model(&model, &out.join("final_params.bin"))?;
    if model.feature_dim() <= MAX_EXPORT_DIM {
        export(&model, &split.train, &out.join("features_train.csv"))?;
        if !split.test.is_empty() {
            export(&model, &split.test, &out.join("features_test.csv"))?;
        }
    }
    let test_accuracy = if split.test.is_empty() {
        None
    } else {
        Some(metrics::accuracy(&model, &split.test)?)
    };
    Ok(TrainReport {
        output_dir: out,
        model,
        metrics: outcome.metrics,
        test_accuracy,
    })
}

fn export(model: &Model, data: &Dataset, path: &Path) -> Result<(), CliError> {
    let f = metrics::extract_features(model, data)?;
    metrics::export_features(&f, &data.labels, path)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: Tensor,
    pub stats: AngularStats,
    pub verification: Option<metrics::VerificationReport>,
}

/// Build the configured model and load `params` into it, naming the
/// feature dimensions when they disagree.
pub fn load_model(cfg: &ExperimentConfig, spec: NetworkSpec, classes: usize, params: &Path) -> Result<Model, CliError> {
    let bytes = fs::read(params).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", params.display())))?;
    let tensors = params_io::decode(&bytes)?;
    let mut model = Model::init(spec, classes, cfg.optim.seed)?;
    if let (Some(last), d) = (tensors.last(), model.feature_dim()) {
        if last.rank() == 2 && last.shape()[1] != d {
            return Err(CliError::Validation(format!(
                "shape mismatch: params were trained with feature_dim {} but the config gives feature_dim {d}",
                last.shape()[1]
            )));
        }
        if last.rank() == 2 && last.shape()[0] != classes {
            return Err(CliError::Validation(format!(
                "shape mismatch: params have {} classes but the data has {classes}",
                last.shape()[0]
            )));
        }
    }
    model.load_tensors(tensors)?;
    Ok(model)
}

/// Pairs of test samples, alternating same-class and different-class.
pub fn sample_pairs(labels: &[usize], count: usize, seed: u64) -> Vec<(usize, usize, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = labels.len();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && n > 1 && attempts < count * 1000 {
        attempts += 1;
        let want_same = out.len() % 2 == 0;
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j && (labels[i] == labels[j]) == want_same {
            out.push((i, j, want_same));
        }
    }
    out
}

pub fn cmd_eval(cfg: &ExperimentConfig, params: &Path) -> Result<EvalReport, CliError> {
    let split = load_data(cfg)?;
    let spec = network_spec(cfg, split.train.sample_shape())?;
    let model = load_model(cfg, spec, split.train.classes, params)?;
    let data = if split.test.is_empty() { &split.train } else { &split.test };
    let features = metrics::extract_features(&model, data)?;
    let accuracy = metrics::accuracy_from_features(&features, &data.labels, &model.classifier)?;
    let confusion = metrics::cosine_confusion(&features, &data.labels, data.classes)?;
    let stats = metrics::angular_stats(&features, &data.labels, data.classes)?;

    let out = PathBuf::from(&cfg.output.directory);
    ensure_dir(&out)?;
    write_file(&out.join("confusion.csv"), |w| metrics::write_matrix_csv(w, &confusion))?;
    write_file(&out.join("angular_stats.csv"), |w| metrics::write_angular_stats_csv(w, &stats))?;
    let verification = if cfg.eval.pairs > 0 {
        let pairs = sample_pairs(&data.labels, cfg.eval.pairs, cfg.eval.pair_seed);
        let a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let same: Vec<bool> = pairs.iter().map(|p| p.2).collect();
        let grid = metrics::threshold_grid(cfg.eval.thresholds);
        let report = metrics::verify_pairs(&features.gather_rows(&a), &features.gather_rows(&b), &same, &grid)?;
        write_file(&out.join("verification.csv"), |w| metrics::write_verification_csv(w, &report))?;
        Some(report)
    } else {
        None
    };
    Ok(EvalReport {
        accuracy,
        confusion,
        stats,
        verification,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub m: u32,
    pub seed: u64,
    pub lambda: f64,
    pub error_features: f64,
    pub error_weights: f64,
    pub passed: bool,
}

/// Shape of each random instance: N = 8 samples, D = 5, K = 6 classes.
pub const GRADCHECK_SHAPE: (usize, usize, usize) = (8, 5, 6);
/// Instances with a target cosine this close to a segment boundary are redrawn.
pub const BOUNDARY_GAP: f64 = 1e-4;

pub fn cmd_gradcheck(ms: &[u32], seeds: u64, lambdas: &[f64], tolerance: f64) -> Result<Vec<GradcheckRow>, CliError> {
    let (n, d, k) = GRADCHECK_SHAPE;
    let mut rows = Vec::new();
    for &m in ms {
        let margin = Margin::new(m).map_err(|e| CliError::Validation(e.to_string()))?;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = LossInstance::random(&mut rng, n, d, k, margin, BOUNDARY_GAP);
            for &lambda in lambdas {
                let (rx, rw) = inst.check(margin, lambda, DEFAULT_STEP)?;
                rows.push(GradcheckRow {
                    m,
                    seed,
                    lambda,
                    error_features: rx.max_relative_error,
                    error_weights: rw.max_relative_error,
                    passed: rx.passes(tolerance) && rw.passes(tolerance),
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure1Row {
    pub m: u32,
    pub seed: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub margin_proxy: f64,
    pub mean_spread: f64,
    pub max_spread: f64,
    pub min_interclass_angle: f64,
    pub ideal_margin: f64,
    pub test_margin_proxy: f64,
    pub test_mean_spread: f64,
}

const SUMMARY_HEADER: &str = "m,seed,train_accuracy,test_accuracy,margin_proxy,mean_spread,max_spread,\
min_interclass_angle,ideal_margin,test_margin_proxy,test_mean_spread";

pub fn write_summary_csv<W: Write>(mut out: W, rows: &[Figure1Row]) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.m,
            r.seed,
            r.train_accuracy,
            r.test_accuracy,
            r.margin_proxy,
            r.mean_spread,
            r.max_spread,
            r.min_interclass_angle,
            r.ideal_margin,
            r.test_margin_proxy,
            r.test_mean_spread
        )?;
    }
    Ok(())
}

pub fn read_summary_csv(text: &str) -> Result<Vec<Figure1Row>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err("unexpected summary header".into());
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(format!("expected 11 fields in {line:?}"));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|e| format!("{line:?}: {e}"));
            Ok(Figure1Row {
                m: f[0].parse().map_err(|e| format!("{line:?}: {e}"))?,
                seed: f[1].parse().map_err(|e| format!("{line:?}: {e}"))?,
                train_accuracy: num(2)?,
                test_accuracy: num(3)?,
                margin_proxy: num(4)?,
                mean_spread: num(5)?,
                max_spread: num(6)?,
                min_interclass_angle: num(7)?,
                ideal_margin: num(8)?,
                test_margin_proxy: num(9)?,
                test_mean_spread: num(10)?,
            })
        })
        .collect()
}

/// Train the configured network once per m ∈ {1, 2, 3, 4} and export the
/// training-subset features and their angular statistics.
pub fn cmd_figure1(cfg: &ExperimentConfig) -> Result<Vec<Figure1Row>, CliError> {
    let out = PathBuf::from(&cfg.output.directory);
    ensure_dir(&out)?;
    write_file(&out.join("resolved_config.toml"), |w| w.write_all(cfg.to_toml().as_bytes()))?;
    let split = load_data(cfg)?;
    let spec = network_spec(cfg, split.train.sample_shape())?;
    let mut rows = Vec::new();
    for m in 1..=4 {
        let mut run = cfg.clone();
        run.loss.m = m;
        let outcome = optim::train(&spec, &split, &run.train_config(), &mut ())?;
        let model = outcome.state.model;
        let features = metrics::extract_features(&model, &split.train)?;
        metrics::export_features(&features, &split.train.labels, &out.join(format!("features_m{m}.csv")))?;
        let stats = metrics::angular_stats(&features, &split.train.labels, split.train.classes)?;
        write_file(&out.join(format!("angular_stats_m{m}.csv")), |w| {
            metrics::write_angular_stats_csv(w, &stats)
        })?;
        let train_accuracy = metrics::accuracy_from_features(&features, &split.train.labels, &model.classifier)?;
        let (test_accuracy, test_stats) = if split.test.is_empty() {
            (f64::NAN, None)
        } else {
            let tf = metrics::extract_features(&model, &split.test)?;
            (
                metrics::accuracy_from_features(&tf, &split.test.labels, &model.classifier)?,
                Some(metrics::angular_stats(&tf, &split.test.labels, split.test.classes)?),
            )
        };
        rows.push(Figure1Row {
            m,
            seed: cfg.optim.seed,
            train_accuracy,
            test_accuracy,
            margin_proxy: stats.margin_proxy,
            mean_spread: stats.mean_spread(),
            max_spread: stats.max_spread(),
            min_interclass_angle: stats.min_interclass_angle,
            ideal_margin: metrics::ideal_margin(run.margin(), stats.min_interclass_angle),
            test_margin_proxy: test_stats.as_ref().map_or(f64::NAN, |s| s.margin_proxy),
            test_mean_spread: test_stats.as_ref().map_or(f64::NAN, AngularStats::mean_spread),
        });
    }
    write_file(&out.join("summary.csv"), |w| write_summary_csv(w, &rows))?;
    Ok(rows)
}
