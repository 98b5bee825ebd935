//! Accuracy, cosine statistics of learned features and CSV export.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::angular::Margin;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::{ClassifierParams, NORM_EPSILON};
use crate::model::Model;
use crate::tensor::{dot, norm, Tensor};

/// Samples per forward pass when evaluating whole datasets.
const EVAL_CHUNK: usize = 256;

/// Argmax of `W_jᵀx` per row (first index wins ties). The margin plays no
/// part at test time.
pub fn predict(features: &Tensor, classifier: &ClassifierParams) -> Result<Vec<usize>> {
    let (_, d) = features.matrix_dims("features")?;
    if d != classifier.dim() {
        return Err(Error::shape("feature dimension", classifier.dim(), d));
    }
    let w = classifier.weights();
    Ok(features
        .rows()
        .take(features.dim0())
        .map(|x| {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for j in 0..classifier.classes() {
                let s = dot(w.row(j), x);
                if s > best_score {
                    best = j;
                    best_score = s;
                }
            }
            best
        })
        .collect())
}

/// Features of every sample, computed in fixed-size chunks.
pub fn extract_features(model: &Model, data: &Dataset) -> Result<Tensor> {
    let n = data.len();
    let d = model.feature_dim();
    let mut out = Vec::with_capacity(n * d);
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let f = model.features(&data.inputs.gather_rows(&idx))?;
        out.extend_from_slice(f.data());
        start = end;
    }
    Tensor::from_vec(&[n, d], out)
}

pub fn accuracy_from_features(features: &Tensor, labels: &[usize], classifier: &ClassifierParams) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let pred = predict(features, classifier)?;
    if pred.len() != labels.len() {
        return Err(Error::shape("labels", pred.len(), labels.len()));
    }
    let correct = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Fraction of `data` classified correctly.
pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let features = extract_features(model, data)?;
    accuracy_from_features(&features, &data.labels, &model.classifier)
}

fn unit_rows(features: &Tensor) -> Result<Tensor> {
    let (n, _) = features.matrix_dims("features")?;
    let mut out = features.clone();
    for i in 0..n {
        let row = out.row_mut(i);
        let r = norm(row);
        if r < NORM_EPSILON {
            return Err(Error::ZeroNorm {
                what: "feature",
                index: i,
                epsilon: NORM_EPSILON,
            });
        }
        row.iter_mut().for_each(|v| *v /= r);
    }
    Ok(out)
}

/// Per-class means of the normalised features (not renormalised).
fn class_mean_units(units: &Tensor, labels: &[usize], classes: usize) -> Result<Vec<Vec<f64>>> {
    let d = units.row_len();
    if labels.len() != units.dim0() {
        return Err(Error::shape("labels", units.dim0(), labels.len()));
    }
    let mut sums = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::LabelOutOfRange {
                index: i,
                label: y,
                classes,
            });
        }
        counts[y] += 1;
        for (s, v) in sums[y].iter_mut().zip(units.row(i)) {
            *s += v;
        }
    }
    for (c, (s, &n)) in sums.iter_mut().zip(&counts).enumerate() {
        if n == 0 {
            return Err(Error::EmptyClass(c));
        }
        s.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(sums)
}

/// `K × K` matrix whose `(a, b)` entry is the mean cosine similarity over
/// all pairs (sample of class a, sample of class b), self-pairs included.
pub fn cosine_confusion(features: &Tensor, labels: &[usize], classes: usize) -> Result<Tensor> {
    let units = unit_rows(features)?;
    // mean over pairs of ûᵢ·ûⱼ factorises into (mean_a û)·(mean_b û).
    let means = class_mean_units(&units, labels, classes)?;
    let mut out = Tensor::zeros(&[classes, classes]);
    for a in 0..classes {
        for b in 0..classes {
            out.data_mut()[a * classes + b] = dot(&means[a], &means[b]).clamp(-1.0, 1.0);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub accuracy: f64,
    pub true_positive_rate: f64,
    pub false_positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub best_threshold: f64,
    pub best_accuracy: f64,
    pub curve: Vec<RocPoint>,
}

/// `points` thresholds evenly spaced over [−1, 1].
pub fn threshold_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|i| -1.0 + 2.0 * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na < NORM_EPSILON || nb < NORM_EPSILON {
        return Err(Error::ZeroNorm {
            what: "feature",
            index: 0,
            epsilon: NORM_EPSILON,
        });
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Pair verification: "same" iff cosine ≥ threshold. The best threshold is
/// the first grid point reaching the highest accuracy.
pub fn verify_pairs(
    features_a: &Tensor,
    features_b: &Tensor,
    same: &[bool],
    grid: &[f64],
) -> Result<VerificationReport> {
    if features_a.shape() != features_b.shape() {
        return Err(Error::shape("pair features", features_a.shape(), features_b.shape()));
    }
    let n = features_a.dim0();
    if same.len() != n {
        return Err(Error::shape("pair labels", n, same.len()));
    }
    if n == 0 || grid.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let cos = (0..n)
        .map(|i| cosine_similarity(features_a.row(i), features_b.row(i)))
        .collect::<Result<Vec<_>>>()?;
    let positives = same.iter().filter(|&&s| s).count();
    let negatives = n - positives;
    let mut curve = Vec::with_capacity(grid.len());
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &t in grid {
        let (mut tp, mut fp) = (0usize, 0usize);
        for (&c, &s) in cos.iter().zip(same) {
            if c >= t {
                if s {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let tn = negatives - fp;
        let acc = (tp + tn) as f64 / n as f64;
        if acc > best.0 {
            best = (acc, t);
        }
        curve.push(RocPoint {
            threshold: t,
            accuracy: acc,
            true_positive_rate: if positives > 0 { tp as f64 / positives as f64 } else { 0.0 },
            false_positive_rate: if negatives > 0 { fp as f64 / negatives as f64 } else { 0.0 },
        });
    }
    Ok(VerificationReport {
        best_threshold: best.1,
        best_accuracy: best.0,
        curve,
    })
}

/// Angular compactness and separation of features, by class.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularStats {
    /// Unit vector along the mean normalised feature of each class.
    pub mean_directions: Vec<Vec<f64>>,
    /// Mean angle (radians) between a class's features and its mean direction.
    pub angular_spread: Vec<f64>,
    /// Smallest angle between two distinct class mean directions (π for one class).
    pub min_interclass_angle: f64,
    /// `min_interclass_angle − 2 · max(angular_spread)`.
    pub margin_proxy: f64,
}

impl AngularStats {
    pub fn mean_spread(&self) -> f64 {
        self.angular_spread.iter().sum::<f64>() / self.angular_spread.len() as f64
    }

    pub fn max_spread(&self) -> f64 {
        self.angular_spread.iter().copied().fold(0.0, f64::max)
    }
}

fn angle_between_units(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos()
}

pub fn angular_stats(features: &Tensor, labels: &[usize], classes: usize) -> Result<AngularStats> {
    let units = unit_rows(features)?;
    let mut directions = class_mean_units(&units, labels, classes)?;
    for (c, dir) in directions.iter_mut().enumerate() {
        let r = norm(dir);
        if r < NORM_EPSILON {
            return Err(Error::ZeroNorm {
                what: "class mean direction",
                index: c,
                epsilon: NORM_EPSILON,
            });
        }
        dir.iter_mut().for_each(|v| *v /= r);
    }
    let mut spread = vec![0.0; classes];
    let mut counts = vec![0usize; classes];
    for (i, &y) in labels.iter().enumerate() {
        spread[y] += angle_between_units(units.row(i), &directions[y]);
        counts[y] += 1;
    }
    for (s, &n) in spread.iter_mut().zip(&counts) {
        *s /= n as f64;
    }
    let mut min_angle = std::f64::consts::PI;
    for a in 0..classes {
        for b in a + 1..classes {
            min_angle = min_angle.min(angle_between_units(&directions[a], &directions[b]));
        }
    }
    let max_spread = spread.iter().copied().fold(0.0, f64::max);
    Ok(AngularStats {
        mean_directions: directions,
        angular_spread: spread,
        min_interclass_angle: min_angle,
        margin_proxy: min_angle - 2.0 * max_spread,
    })
}

/// Asymptotic angular margin `(m − 1)/(m + 1) · θ₁₂` between two classes
/// whose classifier vectors are `θ₁₂` apart.
pub fn ideal_margin(m: Margin, theta_12: f64) -> f64 {
    let m = m.get() as f64;
    (m - 1.0) / (m + 1.0) * theta_12
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// `label,f0,…,f{D-1}` followed by one row per sample, in input order.
pub fn write_features_csv<W: Write>(mut out: W, features: &Tensor, labels: &[usize]) -> std::io::Result<()> {
    let d = if features.rank() == 2 { features.shape()[1] } else { 0 };
    write!(out, "label")?;
    for j in 0..d {
        write!(out, ",f{j}")?;
    }
    writeln!(out)?;
    for (i, &y) in labels.iter().enumerate() {
        write!(out, "{y}")?;
        for v in features.row(i) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn export_features(features: &Tensor, labels: &[usize], path: &Path) -> Result<()> {
    if features.dim0() != labels.len() && !labels.is_empty() {
        return Err(Error::shape("labels", features.dim0(), labels.len()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_features_csv(&mut w, features, labels).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features_csv<R: BufRead>(input: R) -> std::result::Result<(Tensor, Vec<usize>), String> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or("missing header")?
        .map_err(|e| e.to_string())?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"label") {
        return Err(format!("unexpected header {header:?}"));
    }
    let d = cols.len() - 1;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let mut fields = line.split(',');
        let label = fields
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| format!("line {}: bad label", ln + 2))?;
        let row: Vec<f64> = fields
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", ln + 2))?;
        if row.len() != d {
            return Err(format!("line {}: expected {d} values, got {}", ln + 2, row.len()));
        }
        labels.push(label);
        data.extend(row);
    }
    let t = Tensor::from_vec(&[labels.len(), d], data).map_err(|e| e.to_string())?;
    Ok((t, labels))
}

pub fn read_features(path: &Path) -> Result<(Tensor, Vec<usize>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_features_csv(BufReader::new(f)).map_err(|msg| {
        Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, msg))
    })
}

/// Square matrix as `class,c0,…` rows.
pub fn write_matrix_csv<W: Write>(mut out: W, matrix: &Tensor) -> std::io::Result<()> {
    let k = matrix.shape()[1];
    write!(out, "class")?;
    for j in 0..k {
        write!(out, ",c{j}")?;
    }
    writeln!(out)?;
    for i in 0..matrix.dim0() {
        write!(out, "{i}")?;
        for v in matrix.row(i) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Per-class rows; the two global statistics are repeated on every row.
pub fn write_angular_stats_csv<W: Write>(mut out: W, stats: &AngularStats) -> std::io::Result<()> {
    let d = stats.mean_directions.first().map_or(0, Vec::len);
    write!(out, "class,angular_spread,min_interclass_angle,margin_proxy")?;
    for j in 0..d {
        write!(out, ",dir{j}")?;
    }
    writeln!(out)?;
    for (c, (spread, dir)) in stats.angular_spread.iter().zip(&stats.mean_directions).enumerate() {
        write!(out, "{c},{spread},{},{}", stats.min_interclass_angle, stats.margin_proxy)?;
        for v in dir {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_verification_csv<W: Write>(mut out: W, report: &VerificationReport) -> std::io::Result<()> {
    writeln!(out, "threshold,accuracy,true_positive_rate,false_positive_rate")?;
    for p in &report.curve {
        writeln!(
            out,
            "{},{},{},{}",
            p.threshold, p.accuracy, p.true_positive_rate, p.false_positive_rate
        )?;
    }
    Ok(())
}
