//! Batch L-Softmax loss with analytic gradients.
//!
//! Only the ground-truth logit differs from plain softmax. For a sample
//! `x` with class vector `w` the margin logit is `‖w‖‖x‖ψ(ĉ)` with
//! `ĉ = wᵀx / (‖w‖‖x‖)`; during warm-up it is blended with the plain logit,
//!
//! ```text
//! f_y = (λ wᵀx + ‖w‖‖x‖ψ(ĉ)) / (1 + λ)
//! ```
//!
//! Non-target logits are the inner products `W_jᵀx`. The classifier has no
//! bias.

use std::f64::consts::FRAC_PI_2;

use crate::angular::{self, Margin};
use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, norm, Tensor};

/// Norms below this are rejected rather than perturbed.
pub const NORM_EPSILON: f64 = 1e-12;

/// Last-layer classifier, one row per class, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    weights: Tensor,
}

impl ClassifierParams {
    pub fn new(weights: Tensor) -> Result<Self> {
        let (k, _) = weights.matrix_dims("classifier weights")?;
        if k == 0 {
            return Err(Error::shape("classifier weights", "at least one class", 0));
        }
        Ok(ClassifierParams { weights })
    }

    pub fn classes(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Tensor {
        &mut self.weights
    }

    pub fn into_weights(self) -> Tensor {
        self.weights
    }
}

/// `N × D` features with one label per row.
#[derive(Debug, Clone, Copy)]
pub struct FeatureBatch<'a> {
    features: &'a Tensor,
    labels: &'a [usize],
}

impl<'a> FeatureBatch<'a> {
    pub fn new(features: &'a Tensor, labels: &'a [usize]) -> Result<Self> {
        let (n, _) = features.matrix_dims("feature batch")?;
        if n == 0 {
            return Err(Error::shape("feature batch", "N >= 1", 0));
        }
        if labels.len() != n {
            return Err(Error::shape("labels", n, labels.len()));
        }
        Ok(FeatureBatch { features, labels })
    }

    pub fn features(&self) -> &'a Tensor {
        self.features
    }

    pub fn labels(&self) -> &'a [usize] {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// λ(t) = max(λ_min, λ₀ · γ^⌊t / S⌋).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSchedule {
    pub initial: f64,
    pub min: f64,
    pub gamma: f64,
    pub window: usize,
}

impl LambdaSchedule {
    pub fn new(initial: f64, min: f64, gamma: f64, window: usize) -> Result<Self> {
        let ok = min >= 0.0
            && initial >= min
            && initial.is_finite()
            && gamma > 0.0
            && gamma <= 1.0
            && window >= 1;
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "lambda schedule needs initial >= min >= 0, gamma in (0, 1], window >= 1 \
                 (got initial={initial}, min={min}, gamma={gamma}, window={window})"
            )));
        }
        Ok(LambdaSchedule {
            initial,
            min,
            gamma,
            window,
        })
    }

    pub fn constant(lambda: f64) -> Self {
        LambdaSchedule {
            initial: lambda,
            min: lambda,
            gamma: 1.0,
            window: 1,
        }
    }

    pub fn at(&self, iteration: usize) -> f64 {
        lambda_at(self, iteration)
    }
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::constant(0.0)
    }
}

pub fn lambda_at(schedule: &LambdaSchedule, iteration: usize) -> f64 {
    let steps = (iteration / schedule.window).min(i32::MAX as usize) as i32;
    (schedule.initial * schedule.gamma.powi(steps)).max(schedule.min)
}

/// Margin logit and its partial derivatives for a single `(w, x)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTerms {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_w: Vec<f64>,
}

/// Which code path evaluates the margin logit and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetPath {
    /// Dedicated closed form for `m = 2`, chain rule otherwise.
    #[default]
    Auto,
    /// Chain rule through ψ′ for every `m`.
    General,
}

fn norms(w: &[f64], x: &[f64]) -> Result<(f64, f64)> {
    if w.len() != x.len() {
        return Err(Error::shape("target logit", w.len(), x.len()));
    }
    let nw = norm(w);
    if nw < NORM_EPSILON {
        return Err(Error::ZeroNorm {
            what: "classifier row",
            index: 0,
            epsilon: NORM_EPSILON,
        });
    }
    let nx = norm(x);
    if nx < NORM_EPSILON {
        return Err(Error::ZeroNorm {
            what: "feature",
            index: 0,
            epsilon: NORM_EPSILON,
        });
    }
    Ok((nw, nx))
}

/// `‖w‖‖x‖ψ(ĉ)`; equal to `wᵀx` when `m = 1`.
pub fn target_logit(w: &[f64], x: &[f64], m: Margin) -> Result<f64> {
    let (nw, nx) = norms(w, x)?;
    let d = dot(w, x);
    if m.get() == 1 {
        return Ok(d);
    }
    let a = nw * nx;
    Ok(a * angular::psi(d / a, m))
}

/// Margin logit with gradients, assembled by the chain rule
/// `∂f/∂x = ‖w‖‖x‖ψ′(ĉ) ∂ĉ/∂x + ψ(ĉ) ‖w‖ x/‖x‖` (and symmetrically for `w`).
pub fn target_terms(w: &[f64], x: &[f64], m: Margin) -> Result<TargetTerms> {
    let (nw, nx) = norms(w, x)?;
    let d = dot(w, x);
    if m.get() == 1 {
        return Ok(TargetTerms {
            value: d,
            grad_x: w.to_vec(),
            grad_w: x.to_vec(),
        });
    }
    let a = nw * nx;
    let c = angular::clamp_cos(d / a);
    let psi = angular::psi(c, m);
    let dpsi = angular::psi_derivative(c, m);

    // ∂ĉ/∂x = w/a − ĉ x/‖x‖², so a·ψ′·∂ĉ/∂x = ψ′ (w − ĉ (‖w‖/‖x‖) x).
    let rx = nw / nx;
    let rw = nx / nw;
    let grad_x = w
        .iter()
        .zip(x)
        .map(|(&wi, &xi)| dpsi * (wi - c * rx * xi) + psi * rx * xi)
        .collect();
    let grad_w = w
        .iter()
        .zip(x)
        .map(|(&wi, &xi)| dpsi * (xi - c * rw * wi) + psi * rw * wi)
        .collect();
    Ok(TargetTerms {
        value: a * psi,
        grad_x,
        grad_w,
    })
}

/// Closed form for `m = 2`:
///
/// ```text
/// f      = s·2(wᵀx)²/(‖w‖‖x‖) − (2k + s)‖w‖‖x‖,              s = (−1)^k
/// ∂f/∂x  = s(4(wᵀx)w/(‖w‖‖x‖) − 2(wᵀx)²x/(‖w‖‖x‖³)) − (2k + s)‖w‖x/‖x‖
/// ∂f/∂w  = s(4(wᵀx)x/(‖w‖‖x‖) − 2(wᵀx)²w/(‖x‖‖w‖³)) − (2k + s)‖x‖w/‖w‖
/// ```
///
/// with `k = 1` iff `ĉ ≤ cos(π/2)`.
pub fn target_terms_m2(w: &[f64], x: &[f64]) -> Result<TargetTerms> {
    let (nw, nx) = norms(w, x)?;
    let d = dot(w, x);
    let a = nw * nx;
    let k = if d / a <= FRAC_PI_2.cos() { 1.0 } else { 0.0 };
    let s = if k == 1.0 { -1.0 } else { 1.0 };
    let offset = 2.0 * k + s;

    let value = s * 2.0 * d * d / a - offset * a;
    let grad_x = w
        .iter()
        .zip(x)
        .map(|(&wi, &xi)| {
            s * (4.0 * d * wi / a - 2.0 * d * d * xi / (nw * nx.powi(3))) - offset * nw * xi / nx
        })
        .collect();
    let grad_w = w
        .iter()
        .zip(x)
        .map(|(&wi, &xi)| {
            s * (4.0 * d * xi / a - 2.0 * d * d * wi / (nx * nw.powi(3))) - offset * nx * wi / nw
        })
        .collect();
    Ok(TargetTerms {
        value,
        grad_x,
        grad_w,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    /// `N × D`
    pub features: Tensor,
    /// `K × D`
    pub weights: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    /// `N × K` logits actually fed to the softmax (target entries blended).
    pub logits: Tensor,
    /// `N × K` softmax probabilities of `logits`.
    pub probabilities: Tensor,
    pub gradients: Option<LossGradients>,
}

impl LossResult {
    pub fn grad_features(&self) -> Option<&Tensor> {
        self.gradients.as_ref().map(|g| &g.features)
    }

    pub fn grad_weights(&self) -> Option<&Tensor> {
        self.gradients.as_ref().map(|g| &g.weights)
    }
}

/// Loss and logits of the λ-blended L-Softmax objective.
pub fn forward(
    batch: FeatureBatch<'_>,
    params: &ClassifierParams,
    m: Margin,
    lambda: f64,
) -> Result<LossResult> {
    evaluate(batch, params, Objective::margin(m, lambda, TargetPath::Auto), false)
}

/// Loss, logits and exact gradients with respect to features and weights.
pub fn backward(
    batch: FeatureBatch<'_>,
    params: &ClassifierParams,
    m: Margin,
    lambda: f64,
) -> Result<LossResult> {
    backward_with(batch, params, m, lambda, TargetPath::Auto)
}

pub fn backward_with(
    batch: FeatureBatch<'_>,
    params: &ClassifierParams,
    m: Margin,
    lambda: f64,
    path: TargetPath,
) -> Result<LossResult> {
    evaluate(batch, params, Objective::margin(m, lambda, path), true)
}

/// Plain softmax cross-entropy over `XWᵀ`.
pub fn softmax_loss(
    batch: FeatureBatch<'_>,
    params: &ClassifierParams,
    with_gradients: bool,
) -> Result<LossResult> {
    evaluate(batch, params, Objective::Plain, with_gradients)
}

#[derive(Debug, Clone, Copy)]
enum Objective {
    Plain,
    Margin {
        m: Margin,
        lambda: f64,
        path: TargetPath,
    },
}

impl Objective {
    fn margin(m: Margin, lambda: f64, path: TargetPath) -> Self {
        Objective::Margin { m, lambda, path }
    }
}

fn evaluate(
    batch: FeatureBatch<'_>,
    params: &ClassifierParams,
    objective: Objective,
    with_gradients: bool,
) -> Result<LossResult> {
    let x = batch.features();
    let labels = batch.labels();
    let (n, d) = x.matrix_dims("feature batch")?;
    let k = params.classes();
    if params.dim() != d {
        return Err(Error::shape(
            "feature dimension (classifier vs batch)",
            params.dim(),
            d,
        ));
    }
    if let Objective::Margin { lambda, .. } = objective {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda must be finite and >= 0, got {lambda}")));
        }
    }
    let w = params.weights();

    let mut logits = Tensor::zeros(&[n, k]);
    // Blended target derivatives per sample, when they differ from plain softmax.
    let mut targets: Vec<Option<TargetTerms>> = Vec::with_capacity(n);
    for i in 0..n {
        let xi = x.row(i);
        let y = labels[i];
        if y >= k {
            return Err(Error::LabelOutOfRange {
                index: i,
                label: y,
                classes: k,
            });
        }
        let row = logits.row_mut(i);
        for (j, out) in row.iter_mut().enumerate() {
            *out = dot(w.row(j), xi);
        }
        let terms = match objective {
            Objective::Plain => None,
            Objective::Margin { m, lambda, path } => {
                let wy = w.row(y);
                let raw = match (path, m.get()) {
                    (_, 1) => {
                        norms(wy, xi).map_err(|e| reindex(e, i, y))?;
                        None
                    }
                    (TargetPath::Auto, 2) => Some(target_terms_m2(wy, xi)),
                    _ => Some(target_terms(wy, xi, m)),
                };
                match raw {
                    None => None,
                    Some(t) => {
                        let t = t.map_err(|e| reindex(e, i, y))?;
                        Some(blend(t, wy, xi, row[y], lambda))
                    }
                }
            }
        };
        if let Some(t) = &terms {
            row[y] = t.value;
        }
        targets.push(terms);
    }

    let mut probabilities = Tensor::zeros(&[n, k]);
    let mut total = 0.0;
    for i in 0..n {
        let f = logits.row(i);
        let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p = probabilities.row_mut(i);
        let mut sum = 0.0;
        for (pj, &fj) in p.iter_mut().zip(f) {
            *pj = (fj - max).exp();
            sum += *pj;
        }
        for pj in p.iter_mut() {
            *pj /= sum;
        }
        total += sum.ln() - (f[labels[i]] - max);
    }
    let loss = total / n as f64;

    let gradients = if with_gradients {
        let mut gx = Tensor::zeros(&[n, d]);
        let mut gw = Tensor::zeros(&[k, d]);
        let scale = 1.0 / n as f64;
        for i in 0..n {
            let y = labels[i];
            let xi = x.row(i);
            let p = probabilities.row(i);
            let gxi = gx.row_mut(i);
            for j in 0..k {
                let coef = (p[j] - if j == y { 1.0 } else { 0.0 }) * scale;
                match (&targets[i], j == y) {
                    (Some(t), true) => {
                        axpy(coef, &t.grad_x, gxi);
                        axpy(coef, &t.grad_w, gw.row_mut(j));
                    }
                    _ => {
                        axpy(coef, w.row(j), gxi);
                        axpy(coef, xi, gw.row_mut(j));
                    }
                }
            }
        }
        Some(LossGradients {
            features: gx,
            weights: gw,
        })
    } else {
        None
    };

    Ok(LossResult {
        loss,
        logits,
        probabilities,
        gradients,
    })
}

/// `(λ·wᵀx + t) / (1 + λ)` and the matching derivatives.
fn blend(t: TargetTerms, w: &[f64], x: &[f64], plain: f64, lambda: f64) -> TargetTerms {
    if lambda == 0.0 {
        return t;
    }
    let inv = 1.0 / (1.0 + lambda);
    TargetTerms {
        value: (lambda * plain + t.value) * inv,
        grad_x: t
            .grad_x
            .iter()
            .zip(w)
            .map(|(g, wi)| (lambda * wi + g) * inv)
            .collect(),
        grad_w: t
            .grad_w
            .iter()
            .zip(x)
            .map(|(g, xi)| (lambda * xi + g) * inv)
            .collect(),
    }
}

fn reindex(e: Error, sample: usize, class: usize) -> Error {
    match e {
        Error::ZeroNorm {
            what: "feature",
            epsilon,
            ..
        } => Error::ZeroNorm {
            what: "feature",
            index: sample,
            epsilon,
        },
        Error::ZeroNorm {
            what: "classifier row",
            epsilon,
            ..
        } => Error::ZeroNorm {
            what: "classifier row",
            index: class,
            epsilon,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn margin(m: u32) -> Margin {
        Margin::new(m).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::from_vec(&[r, c], (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn target_logit_examples() {
        assert_abs_diff_eq!(target_logit(&[1.0, 0.0], &[1.0, 1.0], margin(2)).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(target_logit(&[1.0, 0.0], &[3.0, 0.0], margin(4)).unwrap(), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(target_logit(&[2.0, 0.0], &[0.0, 1.0], margin(2)).unwrap(), -2.0, epsilon = 1e-15);
        assert_eq!(target_logit(&[0.3, -0.7], &[1.1, 0.4], margin(1)).unwrap(), 0.3 * 1.1 + -0.7 * 0.4);
    }

    #[test]
    fn zero_norm_rejected() {
        assert!(matches!(
            target_logit(&[0.0, 0.0], &[1.0, 0.0], margin(2)),
            Err(Error::ZeroNorm { what: "classifier row", .. })
        ));
        let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let w = ClassifierParams::new(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
        let labels = [0, 1];
        let err = forward(FeatureBatch::new(&x, &labels).unwrap(), &w, margin(3), 0.0).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm { what: "feature", index: 1, .. }), "{err}");
    }

    #[test]
    fn shape_and_label_errors() {
        let x = Tensor::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let w = ClassifierParams::new(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
        assert!(matches!(
            forward(FeatureBatch::new(&x, &[0]).unwrap(), &w, margin(2), 0.0),
            Err(Error::ShapeMismatch { .. })
        ));
        let x = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            forward(FeatureBatch::new(&x, &[2]).unwrap(), &w, margin(2), 0.0),
            Err(Error::LabelOutOfRange { label: 2, .. })
        ));
        assert!(FeatureBatch::new(&x, &[0, 1]).is_err());
    }

    #[test]
    fn single_sample_hand_value() {
        let x = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let w = ClassifierParams::new(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
        let b = FeatureBatch::new(&x, &[0]).unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        let l1 = forward(b, &w, margin(1), 0.0).unwrap().loss;
        assert_abs_diff_eq!(l1, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(l1, 0.313262, epsilon = 1e-6);
        // θ = 0 is a fixed point of ψ.
        let l2 = forward(b, &w, margin(2), 0.0).unwrap().loss;
        assert_abs_diff_eq!(l2, expected, epsilon = 1e-15);
    }

    #[test]
    fn lambda_schedule_examples() {
        let s = LambdaSchedule::new(1000.0, 5.0, 0.5, 100).unwrap();
        assert_eq!(lambda_at(&s, 0), 1000.0);
        assert_eq!(lambda_at(&s, 99), 1000.0);
        assert_eq!(lambda_at(&s, 250), 250.0);
        assert_eq!(lambda_at(&s, 1_000_000), 5.0);
        let c = LambdaSchedule::new(7.0, 0.0, 1.0, 10).unwrap();
        assert!((0..1000).all(|t| c.at(t) == 7.0));
        assert!(LambdaSchedule::new(1.0, 2.0, 0.5, 1).is_err());
        assert!(LambdaSchedule::new(1.0, 0.0, 1.5, 1).is_err());
        assert!(LambdaSchedule::new(1.0, 0.0, 0.5, 0).is_err());
    }

    #[test]
    fn m2_fast_path_matches_general() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = target_terms(&w, &x, margin(2)).unwrap();
            let b = target_terms_m2(&w, &x).unwrap();
            assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-12);
            for (p, q) in a.grad_x.iter().zip(&b.grad_x).chain(a.grad_w.iter().zip(&b.grad_w)) {
                assert_abs_diff_eq!(p, q, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [1, 2, 3, 4] {
            for lambda in [0.0, 1.0, 100.0] {
                let x = random_matrix(&mut rng, 5, 3);
                let w = random_matrix(&mut rng, 4, 3);
                let labels: Vec<usize> = (0..5).map(|_| rng.random_range(0..4)).collect();
                let params = ClassifierParams::new(w.clone()).unwrap();
                let res = backward(FeatureBatch::new(&x, &labels).unwrap(), &params, margin(m), lambda).unwrap();
                let g = res.gradients.unwrap();

                let fx = |p: &[f64]| {
                    let xt = Tensor::from_vec(&[5, 3], p.to_vec()).unwrap();
                    forward(FeatureBatch::new(&xt, &labels).unwrap(), &params, margin(m), lambda).unwrap().loss
                };
                let r = gradcheck::check(fx, g.features.data(), x.data(), 1e-6).unwrap();
                assert!(r.failing_coordinates(1e-6, 1e-8).is_empty(), "m={m} λ={lambda} grad_X {r:?}");

                let fw = |p: &[f64]| {
                    let wt = ClassifierParams::new(Tensor::from_vec(&[4, 3], p.to_vec()).unwrap()).unwrap();
                    forward(FeatureBatch::new(&x, &labels).unwrap(), &wt, margin(m), lambda).unwrap().loss
                };
                let r = gradcheck::check(fw, g.weights.data(), w.data(), 1e-6).unwrap();
                assert!(r.failing_coordinates(1e-6, 1e-8).is_empty(), "m={m} λ={lambda} grad_W {r:?}");
            }
        }
    }

    #[test]
    fn probabilities_normalised_and_stable() {
        let x = Tensor::from_rows(&[vec![400.0, -300.0], vec![-500.0, 900.0]]).unwrap();
        let w = ClassifierParams::new(Tensor::from_rows(&[vec![3.0, 1.0], vec![-2.0, 4.0], vec![1.0, 1.0]]).unwrap())
            .unwrap();
        let res = backward(FeatureBatch::new(&x, &[1, 0]).unwrap(), &w, margin(4), 0.0).unwrap();
        assert!(res.loss.is_finite() && res.loss >= 0.0);
        for row in res.probabilities.rows() {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(res.gradients.unwrap().features.is_finite());
    }

    #[test]
    fn negative_lambda_rejected() {
        let x = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let w = ClassifierParams::new(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
        assert!(forward(FeatureBatch::new(&x, &[0]).unwrap(), &w, margin(2), -1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec3() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-3.0f64..3.0, 3).prop_filter("nonzero", |v| norm(v) > 1e-3)
        }

        proptest! {
            #[test]
            fn target_logit_positively_homogeneous(w in vec3(), x in vec3(), alpha in 0.01f64..50.0, m in 1u32..=4) {
                let base = target_logit(&w, &x, margin(m)).unwrap();
                let xs: Vec<f64> = x.iter().map(|v| v * alpha).collect();
                let scaled = target_logit(&w, &xs, margin(m)).unwrap();
                prop_assert!((scaled - alpha * base).abs() <= 1e-9 * (1.0 + (alpha * base).abs()));
            }

            #[test]
            fn target_logit_below_plain(w in vec3(), x in vec3(), m in 1u32..=6) {
                let f = target_logit(&w, &x, margin(m)).unwrap();
                prop_assert!(f <= dot(&w, &x) + 1e-9);
            }
        }
    }
}
