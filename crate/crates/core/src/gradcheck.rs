//! Central finite-difference gradient checking.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::angular::{self, Margin};
use crate::error::{Error, Result};
use crate::loss::{self, ClassifierParams, FeatureBatch};
use crate::tensor::{dot, norm, Tensor};

pub const DEFAULT_STEP: f64 = 1e-6;
const REL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub step: f64,
    pub max_abs_error: f64,
    pub analytic_gradient: Vec<f64>,
    pub numeric_gradient: Vec<f64>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }

    /// Coordinates exceeding both the relative tolerance and an absolute
    /// floor. With `h = 1e−6` the central difference of a loss of order one
    /// carries round-off near `1e−10`, so tiny components can miss a purely
    /// relative bar while agreeing to every digit the probe resolves.
    pub fn failing_coordinates(&self, relative: f64, absolute: f64) -> Vec<usize> {
        self.analytic_gradient
            .iter()
            .zip(&self.numeric_gradient)
            .enumerate()
            .filter(|(_, (&a, &n))| relative_error(a, n) > relative && (a - n).abs() > absolute)
            .map(|(i, _)| i)
            .collect()
    }
}

/// `|a − n| / max(|a|, |n|, 1e−12)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central differences of `f` around `point`, compared coordinate-wise with
/// `grad`. `point` is copied into a scratch buffer; it is never modified.
pub fn check<F>(mut f: F, grad: &[f64], point: &[f64], step: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if grad.len() != point.len() {
        return Err(Error::shape("gradcheck", point.len(), grad.len()));
    }
    let numeric = numeric_gradient(&mut f, point, step)?;
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_coordinate: 0,
        analytic: grad.first().copied().unwrap_or(0.0),
        numeric: numeric.first().copied().unwrap_or(0.0),
        step,
        max_abs_error: 0.0,
        analytic_gradient: grad.to_vec(),
        numeric_gradient: Vec::new(),
    };
    for (i, (&a, &n)) in grad.iter().zip(&numeric).enumerate() {
        report.max_abs_error = report.max_abs_error.max((a - n).abs());
        let err = relative_error(a, n);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_coordinate = i;
            report.analytic = a;
            report.numeric = n;
        }
    }
    report.numeric_gradient = numeric;
    Ok(report)
}

pub fn numeric_gradient<F>(f: &mut F, point: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = point.to_vec();
    let mut out = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = f(&probe);
        probe[i] = orig - step;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteFunction { coordinate: i });
        }
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// Random loss inputs for gradient checks: standard-normal features and
/// classifier weights, uniform labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LossInstance {
    pub features: Tensor,
    pub weights: Tensor,
    pub labels: Vec<usize>,
}

impl LossInstance {
    /// Draw instances until no sample's target cosine lies within
    /// `boundary_gap` of a segment boundary of `m`.
    pub fn random<R: Rng>(rng: &mut R, n: usize, d: usize, k: usize, m: Margin, boundary_gap: f64) -> Self {
        loop {
            let mut normal = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.sample(StandardNormal)).collect() };
            let features = Tensor::from_vec(&[n, d], normal(n * d)).expect("shape");
            let weights = Tensor::from_vec(&[k, d], normal(k * d)).expect("shape");
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let inst = LossInstance {
                features,
                weights,
                labels,
            };
            if inst.min_boundary_distance(m) >= boundary_gap {
                return inst;
            }
        }
    }

    /// Smallest `|ĉ − cos(jπ/m)|` over samples and interior boundaries
    /// (infinite for m = 1).
    pub fn min_boundary_distance(&self, m: Margin) -> f64 {
        let bounds: Vec<f64> = m.boundaries().collect();
        let mut best = f64::INFINITY;
        for (i, &y) in self.labels.iter().enumerate() {
            let (w, x) = (self.weights.row(y), self.features.row(i));
            let c = angular::clamp_cos(dot(w, x) / (norm(w) * norm(x)));
            for b in &bounds {
                best = best.min((c - b).abs());
            }
        }
        best
    }

    /// Check `grad_X` and `grad_W` of the blended loss against central differences.
    pub fn check(&self, m: Margin, lambda: f64, step: f64) -> Result<(GradCheckReport, GradCheckReport)> {
        let params = ClassifierParams::new(self.weights.clone())?;
        let batch = FeatureBatch::new(&self.features, &self.labels)?;
        let g = loss::backward(batch, &params, m, lambda)?
            .gradients
            .expect("backward returns gradients");
        let shape_x = self.features.shape().to_vec();
        let fx = |p: &[f64]| {
            let x = Tensor::from_vec(&shape_x, p.to_vec()).expect("shape");
            loss::forward(FeatureBatch::new(&x, &self.labels).expect("batch"), &params, m, lambda)
                .map_or(f64::NAN, |r| r.loss)
        };
        let rx = check(fx, g.features.data(), self.features.data(), step)?;
        let shape_w = self.weights.shape().to_vec();
        let fw = |p: &[f64]| {
            let w = ClassifierParams::new(Tensor::from_vec(&shape_w, p.to_vec()).expect("shape")).expect("params");
            loss::forward(batch, &w, m, lambda).map_or(f64::NAN, |r| r.loss)
        };
        let rw = check(fw, g.weights.data(), self.weights.data(), step)?;
        Ok((rx, rw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_is_exact() {
        let r = check(|p| p[0] * p[0], &[6.0], &[3.0], DEFAULT_STEP).unwrap();
        assert!(r.max_relative_error <= 1e-9, "{r:?}");
    }

    #[test]
    fn constant_has_zero_error() {
        let r = check(|_| 4.2, &[0.0, 0.0], &[1.0, -2.0], DEFAULT_STEP).unwrap();
        assert_eq!(r.max_relative_error, 0.0);
    }

    #[test]
    fn planted_fault_is_flagged() {
        // f = x², claimed gradient 3x instead of 2x.
        let x = 1.7;
        let r = check(|p| p[0] * p[0], &[3.0 * x], &[x], DEFAULT_STEP).unwrap();
        assert!((r.max_relative_error - 1.0 / 3.0).abs() < 1e-6, "{r:?}");
        assert!(!r.passes(1e-6));
    }

    #[test]
    fn worst_coordinate_reported() {
        // f = x0² + x1³; coordinate 1 gets a wrong gradient.
        let p = [1.0, 2.0];
        let r = check(|q| q[0] * q[0] + q[1].powi(3), &[2.0, 10.0], &p, DEFAULT_STEP).unwrap();
        assert_eq!(r.worst_coordinate, 1);
        assert!((r.numeric - 12.0).abs() < 1e-6);
    }

    #[test]
    fn multivariate_analytic_function() {
        // f = sin(x) e^y + x y², a known-gradient bootstrap case.
        let p = [0.3f64, -0.8];
        let g = [p[0].cos() * p[1].exp() + p[1] * p[1], p[0].sin() * p[1].exp() + 2.0 * p[0] * p[1]];
        let r = check(|q| q[0].sin() * q[1].exp() + q[0] * q[1] * q[1], &g, &p, DEFAULT_STEP).unwrap();
        assert!(r.passes(1e-8), "{r:?}");
    }

    #[test]
    fn non_finite_probe_errors() {
        let r = check(|p| if p[0] > 0.0 { f64::NAN } else { 0.0 }, &[0.0], &[0.0], 1e-3);
        assert!(matches!(r, Err(Error::NonFiniteFunction { coordinate: 0 })));
    }

    #[test]
    fn point_is_untouched() {
        let point = vec![0.5f64, -1.25, 3.0];
        let checksum: Vec<u64> = point.iter().map(|v| v.to_bits()).collect();
        check(|q| q.iter().map(|v| v * v).sum(), &[1.0, -2.5, 6.0], &point, DEFAULT_STEP).unwrap();
        let after: Vec<u64> = point.iter().map(|v| v.to_bits()).collect();
        assert_eq!(checksum, after);
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(check(|_| 0.0, &[1.0], &[1.0, 2.0], DEFAULT_STEP).is_err());
    }
}
