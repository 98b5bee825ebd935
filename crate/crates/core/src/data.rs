//! Datasets: MNIST IDX parsing, synthetic Gaussian blobs and splitting.

use std::f64::consts::TAU;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_CLASSES: usize = 10;
/// Radius of the circle blob centers are placed on.
pub const BLOB_RADIUS: f64 = 5.0;

/// Inputs with integer labels. `inputs` is `[N, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Factor raw values were multiplied by when loaded (1/255 for pixels).
    pub pixel_scale: f64,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.dim0() != labels.len() {
            return Err(Error::shape("dataset labels", inputs.dim0(), labels.len()));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::LabelOutOfRange { index, label, classes });
        }
        Ok(Dataset {
            inputs,
            labels,
            classes,
            pixel_scale: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample input shape.
    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.gather_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            pixel_scale: self.pixel_scale,
        }
    }

    /// First `n` samples (all of them if `n >= len`).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    fn empty_like(&self) -> Dataset {
        self.subset(&[])
    }
}

/// Preprocessing applied to every split.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub pixel_scale: f64,
    /// Per-feature mean of the training split, subtracted from all splits.
    /// Empty until [`DatasetSplit::subtract_train_mean`] runs.
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub normalization: Normalization,
}

impl DatasetSplit {
    pub fn new(train: Dataset, val: Dataset, test: Dataset) -> Self {
        let pixel_scale = train.pixel_scale;
        DatasetSplit {
            train,
            val,
            test,
            normalization: Normalization {
                pixel_scale,
                mean: Vec::new(),
            },
        }
    }

    /// Mean subtraction with statistics from the training split only.
    pub fn subtract_train_mean(&mut self) {
        let w = self.train.inputs.row_len();
        let mut mean = vec![0.0; w];
        for row in self.train.inputs.rows().take(self.train.len()) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.train.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        for ds in [&mut self.train, &mut self.val, &mut self.test] {
            apply_mean(&mut ds.inputs, &mean);
        }
        self.normalization.mean = mean;
    }
}

/// Subtract a recorded per-feature mean from every sample.
pub fn apply_mean(inputs: &mut Tensor, mean: &[f64]) {
    let n = inputs.dim0();
    for i in 0..n {
        for (v, m) in inputs.row_mut(i).iter_mut().zip(mean) {
            *v -= m;
        }
    }
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

/// A parsed IDX file of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxFile {
    pub magic: u32,
    pub dims: Vec<u32>,
    pub payload: Vec<u8>,
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::TruncatedPayload {
            offset,
            needed: 4,
            available: bytes.len().saturating_sub(offset),
        })
}

/// Parse an (uncompressed) IDX image or label file.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxFile> {
    let magic = be_u32(bytes, 0)?;
    let rank = match magic {
        IDX_IMAGES_MAGIC => 3,
        IDX_LABELS_MAGIC => 1,
        found => return Err(Error::BadMagic { offset: 0, found }),
    };
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        dims.push(be_u32(bytes, 4 + 4 * i)?);
    }
    let header = 4 + 4 * rank;
    let needed = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or_else(|| Error::DimensionMismatch {
            offset: 4,
            detail: format!("dimensions {dims:?} overflow"),
        })?;
    let available = bytes.len() - header;
    if available < needed {
        return Err(Error::TruncatedPayload {
            offset: header,
            needed,
            available,
        });
    }
    if available > needed {
        return Err(Error::DimensionMismatch {
            offset: header + needed,
            detail: format!("{} trailing bytes after declared payload", available - needed),
        });
    }
    Ok(IdxFile {
        magic,
        dims,
        payload: bytes[header..].to_vec(),
    })
}

impl IdxFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.payload.len());
        out.extend_from_slice(&self.magic.to_be_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn count(&self) -> usize {
        self.dims[0] as usize
    }

    /// `N × 1 × rows × cols` tensor with pixels scaled to [0, 1].
    pub fn images(&self) -> Result<Tensor> {
        if self.magic != IDX_IMAGES_MAGIC {
            return Err(Error::BadMagic {
                offset: 0,
                found: self.magic,
            });
        }
        let [n, r, c] = [self.dims[0], self.dims[1], self.dims[2]].map(|d| d as usize);
        let data = self.payload.iter().map(|&b| b as f64 / 255.0).collect();
        Tensor::from_vec(&[n, 1, r, c], data)
    }

    pub fn labels(&self) -> Result<Vec<usize>> {
        if self.magic != IDX_LABELS_MAGIC {
            return Err(Error::BadMagic {
                offset: 0,
                found: self.magic,
            });
        }
        Ok(self.payload.iter().map(|&b| b as usize).collect())
    }
}

/// Read a file, transparently gunzipping it when it starts with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn read_idx(path: &Path) -> Result<IdxFile> {
    parse_idx(&read_maybe_gz(path)?)
}

/// Pair an image file with its label file; optionally keep only the first
/// `limit` samples.
pub fn load_mnist(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Dataset> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    if img.count() != lab.count() {
        return Err(Error::DimensionMismatch {
            offset: 4,
            detail: format!(
                "{} declares {} images but {} declares {} labels",
                images.display(),
                img.count(),
                labels.display(),
                lab.count()
            ),
        });
    }
    let mut ds = Dataset::new(img.images()?, lab.labels()?, MNIST_CLASSES)?;
    ds.pixel_scale = 1.0 / 255.0;
    Ok(match limit {
        Some(n) => ds.take(n),
        None => ds,
    })
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Isotropic Gaussian blobs around `classes` centers evenly spaced on a
/// circle of radius [`BLOB_RADIUS`] in the first two coordinates. Samples
/// are grouped by class.
pub fn make_blobs(n_per_class: usize, classes: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 || dim < 2 {
        return Err(Error::InvalidConfig(format!(
            "blobs need classes >= 2 and dim >= 2 (got {classes}, {dim})"
        )));
    }
    if !(spread >= 0.0) {
        return Err(Error::InvalidConfig(format!("blob spread must be >= 0, got {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_per_class * classes;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        let center = blob_center(c, classes, dim);
        for _ in 0..n_per_class {
            for &mu in &center {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(mu + spread * z);
            }
            labels.push(c);
        }
    }
    Dataset::new(Tensor::from_vec(&[n, dim], data)?, labels, classes)
}

pub fn blob_center(class: usize, classes: usize, dim: usize) -> Vec<f64> {
    let angle = TAU * class as f64 / classes as f64;
    let mut center = vec![0.0; dim];
    center[0] = BLOB_RADIUS * angle.cos();
    center[1] = BLOB_RADIUS * angle.sin();
    center
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Seeded permutation followed by contiguous train/val/test slices.
pub fn split(data: &Dataset, fractions: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidFractions(fractions.to_vec()));
    }
    let total = data.len();
    let n_train = ((fractions[0] * total as f64).round() as usize).min(total);
    let n_val = ((fractions[1] * total as f64).round() as usize).min(total - n_train);
    let n_test = total - n_train - n_val;
    for (which, count, fraction) in [
        ("train", n_train, fractions[0]),
        ("val", n_val, fractions[1]),
        ("test", n_test, fractions[2]),
    ] {
        if count == 0 && (fraction > 0.0 || which == "train") {
            return Err(Error::EmptySplit { which, total, fraction });
        }
    }

    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (tr, rest) = order.split_at(n_train);
    let (va, te) = rest.split_at(n_val);
    let pick = |idx: &[usize]| {
        if idx.is_empty() {
            data.empty_like()
        } else {
            data.subset(idx)
        }
    };
    Ok(DatasetSplit::new(pick(tr), pick(va), pick(te)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<u8> {
        // Two 2×2 images, built byte by byte.
        let mut b = vec![0x00, 0x00, 0x08, 0x03];
        b.extend_from_slice(&[0, 0, 0, 2]);
        b.extend_from_slice(&[0, 0, 0, 2]);
        b.extend_from_slice(&[0, 0, 0, 2]);
        b.extend_from_slice(&[0, 255, 51, 102, 255, 0, 0, 204]);
        b
    }

    #[test]
    fn idx_fixture_parses_exactly() {
        let f = parse_idx(&fixture()).unwrap();
        assert_eq!(f.dims, vec![2, 2, 2]);
        let t = f.images().unwrap();
        assert_eq!(t.shape(), &[2, 1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 0.2, 0.4, 1.0, 0.0, 0.0, 0.8]);
        assert_eq!(f.to_bytes(), fixture());
    }

    #[test]
    fn idx_labels() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 9];
        let f = parse_idx(&bytes).unwrap();
        assert_eq!(f.labels().unwrap(), vec![7, 0, 9]);
        assert!(f.images().is_err());
    }

    #[test]
    fn idx_bad_magic() {
        let mut b = fixture();
        b[3] = 0x02;
        assert!(matches!(parse_idx(&b), Err(Error::BadMagic { offset: 0, found: 0x802 })));
    }

    #[test]
    fn idx_truncated() {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 10, 0, 0, 0, 2, 0, 0, 0, 2];
        b.extend(std::iter::repeat(1u8).take(9 * 4));
        let err = parse_idx(&b).unwrap_err();
        assert!(
            matches!(err, Error::TruncatedPayload { offset: 16, needed: 40, available: 36 }),
            "{err}"
        );
        assert!(matches!(parse_idx(&b[..6]), Err(Error::TruncatedPayload { offset: 4, .. })));
    }

    #[test]
    fn idx_trailing_bytes() {
        let mut b = fixture();
        b.push(0);
        assert!(matches!(parse_idx(&b), Err(Error::DimensionMismatch { offset: 24, .. })));
    }

    #[test]
    fn blobs_zero_spread_sit_on_centers() {
        let ds = make_blobs(5, 3, 2, 0.0, 1).unwrap();
        for (row, &y) in ds.inputs.rows().zip(&ds.labels) {
            assert_eq!(row, &blob_center(y, 3, 2)[..]);
        }
        assert_eq!(ds, make_blobs(5, 3, 2, 0.0, 99).unwrap());
    }

    #[test]
    fn blobs_are_seeded() {
        assert_eq!(make_blobs(10, 4, 3, 0.7, 5).unwrap(), make_blobs(10, 4, 3, 0.7, 5).unwrap());
        assert_ne!(make_blobs(10, 4, 3, 0.7, 5).unwrap(), make_blobs(10, 4, 3, 0.7, 6).unwrap());
        assert!(make_blobs(10, 1, 3, 0.7, 5).is_err());
        assert!(make_blobs(10, 2, 1, 0.7, 5).is_err());
    }

    #[test]
    fn two_blobs_are_linearly_separable() {
        // Centers at (±r, 0); the oracle classifier is the sign of x₀.
        let ds = make_blobs(500, 2, 2, BLOB_RADIUS / 10.0, 3).unwrap();
        let correct = ds
            .inputs
            .rows()
            .zip(&ds.labels)
            .filter(|(row, &y)| (row[0] < 0.0) == (y == 1))
            .count();
        assert!(correct as f64 / ds.len() as f64 >= 0.99);
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let n = 60_000;
        let ds = Dataset::new(
            Tensor::from_vec(&[n, 1], (0..n).map(|i| i as f64).collect()).unwrap(),
            vec![0; n],
            1,
        )
        .unwrap();
        let s = split(&ds, [45_000.0 / 60_000.0, 5_000.0 / 60_000.0, 10_000.0 / 60_000.0], 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (45_000, 5_000, 10_000));
        let mut seen: Vec<usize> = s
            .train
            .inputs
            .data()
            .iter()
            .chain(s.val.inputs.data())
            .chain(s.test.inputs.data())
            .map(|&v| v as usize)
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());

        let other = split(&ds, [0.75, 5_000.0 / 60_000.0, 10_000.0 / 60_000.0], 2).unwrap();
        assert_eq!(other.train.len(), 45_000);
        assert_ne!(other.train.inputs, s.train.inputs);
    }

    #[test]
    fn split_all_train_and_errors() {
        let ds = make_blobs(5, 2, 2, 0.1, 0).unwrap();
        let s = split(&ds, [1.0, 0.0, 0.0], 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (10, 0, 0));
        assert!(matches!(split(&ds, [0.5, 0.2, 0.2], 0), Err(Error::InvalidFractions(_))));
        assert!(matches!(
            split(&ds, [0.98, 0.01, 0.01], 0),
            Err(Error::EmptySplit { which: "val", .. })
        ));
    }

    #[test]
    fn mean_subtraction_uses_train_statistics() {
        let ds = make_blobs(50, 3, 4, 1.0, 8).unwrap();
        let mut s = split(&ds, [0.6, 0.2, 0.2], 4).unwrap();
        let raw_test = s.test.inputs.clone();
        s.subtract_train_mean();
        let w = 4;
        for j in 0..w {
            let m: f64 = s.train.inputs.rows().map(|r| r[j]).sum::<f64>() / s.train.len() as f64;
            assert!(m.abs() < 1e-9);
        }
        for (a, b) in raw_test.rows().zip(s.test.inputs.rows()) {
            for j in 0..w {
                assert!((a[j] - s.normalization.mean[j] - b[j]).abs() < 1e-12);
            }
        }
    }
}
