//! Scalar mathematics of the angular margin.
//!
//! Everything here is a function of the cosine `c = cos θ` only. The target
//! score uses ψ(θ) = (−1)^k cos(mθ) − 2k on the segment
//! θ ∈ [kπ/m, (k+1)π/m], with `cos(mθ)` evaluated through its binomial
//! expansion in `c` so that no `acos` appears on the forward or backward
//! path.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Integer margin multiplier `m ≥ 1`. `m = 1` is plain softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Margin(u32);

impl Margin {
    pub const SOFTMAX: Margin = Margin(1);

    pub fn new(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidMargin(m));
        }
        Ok(Margin(m))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Cosines of the interior segment boundaries `cos(kπ/m)`, `k = 1..m`.
    pub fn boundaries(self) -> impl Iterator<Item = f64> {
        let m = self.0;
        (1..m).map(move |k| (k as f64 * PI / m as f64).cos())
    }
}

impl TryFrom<u32> for Margin {
    type Error = Error;

    fn try_from(m: u32) -> Result<Self> {
        Margin::new(m)
    }
}

impl std::fmt::Display for Margin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Clamp a cosine that drifted outside [−1, 1] through rounding.
#[inline]
pub fn clamp_cos(c: f64) -> f64 {
    c.clamp(-1.0, 1.0)
}

/// Segment index `k` with `c ∈ [cos((k+1)π/m), cos(kπ/m)]`.
///
/// Computed as the number of boundary cosines `cos(jπ/m)`, `j ≥ 1`, that
/// are `≥ c`. A cosine lying exactly on a boundary therefore belongs to
/// the segment on its larger-angle side, which for `m = 2` is the rule
/// `k = 1 iff c ≤ cos(π/2)`.
pub fn segment_of(c: f64, m: Margin) -> u32 {
    let c = clamp_cos(c);
    m.boundaries().take_while(|&b| c <= b).count() as u32
}

/// `C(n, r)` as a float; exact for the small arguments used here.
fn binomial(n: u32, r: u32) -> f64 {
    let r = r.min(n - r);
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `cos(mθ)` from `c = cos θ` via Σₙ (−1)ⁿ C(m, 2n) c^(m−2n) (1 − c²)ⁿ.
pub fn cos_multiple(c: f64, m: Margin) -> f64 {
    let m = m.get();
    if m == 1 {
        return c;
    }
    let s2 = 1.0 - c * c;
    let mut sum = 0.0;
    for n in 0..=m / 2 {
        let term = binomial(m, 2 * n) * c.powi((m - 2 * n) as i32) * s2.powi(n as i32);
        if n % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    sum
}

/// `d cos(mθ) / d cos θ`, differentiating the expansion term by term.
pub fn cos_multiple_derivative(c: f64, m: Margin) -> f64 {
    let m = m.get();
    if m == 1 {
        return 1.0;
    }
    let s2 = 1.0 - c * c;
    let mut sum = 0.0;
    for n in 0..=m / 2 {
        let p = m - 2 * n;
        // d/dc [c^p (1 − c²)^n] = p c^(p−1) (1 − c²)^n − 2n c^(p+1) (1 − c²)^(n−1)
        let mut d = 0.0;
        if p > 0 {
            d += p as f64 * c.powi(p as i32 - 1) * s2.powi(n as i32);
        }
        if n > 0 {
            d -= 2.0 * n as f64 * c.powi(p as i32 + 1) * s2.powi(n as i32 - 1);
        }
        let term = binomial(m, 2 * n) * d;
        if n % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    sum
}

#[inline]
fn segment_sign(k: u32) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// ψ(θ) evaluated from `c = cos θ`. Lies in `[−(2m−1), 1]`.
pub fn psi(c: f64, m: Margin) -> f64 {
    let c = clamp_cos(c);
    if m.get() == 1 {
        return c;
    }
    let k = segment_of(c, m);
    segment_sign(k) * cos_multiple(c, m) - 2.0 * k as f64
}

/// `dψ / dc`, using the segment chosen by [`segment_of`] at boundaries.
pub fn psi_derivative(c: f64, m: Margin) -> f64 {
    let c = clamp_cos(c);
    if m.get() == 1 {
        return 1.0;
    }
    let k = segment_of(c, m);
    segment_sign(k) * cos_multiple_derivative(c, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(v: u32) -> Margin {
        Margin::new(v).unwrap()
    }

    // Independent route: ψ from the angle itself.
    fn psi_oracle(theta: f64, m: u32) -> f64 {
        let k = ((theta * m as f64 / PI).floor() as u32).min(m - 1);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sign * (m as f64 * theta).cos() - 2.0 * k as f64
    }

    #[test]
    fn zero_margin_rejected() {
        assert!(matches!(Margin::new(0), Err(Error::InvalidMargin(0))));
    }

    #[test]
    fn segment_examples() {
        assert_eq!(segment_of(0.7, m(2)), 0);
        assert_eq!(segment_of(-0.3, m(2)), 1);
        assert_eq!(segment_of(0.9f64.cos(), m(4)), 1);
        assert_eq!(segment_of(-1.0, m(3)), 2);
        assert_eq!(segment_of(1.0, m(3)), 0);
        assert_eq!(segment_of(0.3, m(1)), 0);
    }

    #[test]
    fn segment_clamps_noise() {
        assert_eq!(segment_of(1.0 + 1e-12, m(4)), 0);
        assert_eq!(segment_of(-1.0 - 1e-12, m(4)), 3);
    }

    #[test]
    fn boundary_goes_to_larger_segment() {
        for mv in 2..=6 {
            for (j, b) in m(mv).boundaries().enumerate() {
                assert_eq!(segment_of(b, m(mv)), j as u32 + 1, "m={mv} boundary {}", j + 1);
            }
        }
        // The m = 2 rule from the forward pass: k = 1 iff c <= cos(pi/2).
        assert_eq!(segment_of(0.0, m(2)), 1);
        assert_eq!(segment_of(1e-15, m(2)), 0);
    }

    #[test]
    fn segment_contains_cosine() {
        for mv in 1..=6u32 {
            for i in 0..=1000 {
                let c = -1.0 + 2.0 * i as f64 / 1000.0;
                let k = segment_of(c, m(mv)) as f64;
                let hi = (k * PI / mv as f64).cos();
                let lo = ((k + 1.0) * PI / mv as f64).cos();
                assert!(c <= hi + 1e-15 && c >= lo - 1e-15, "c={c} m={mv} k={k}");
            }
        }
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(1.0, m(4)), 1.0);
        assert_abs_diff_eq!(psi(0.0, m(2)), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(psi(-1.0, m(2)), -3.0, epsilon = 1e-15);
        // cos(2 acos 0.5) = cos(2π/3)
        assert_abs_diff_eq!(psi(0.5, m(2)), (2.0 * PI / 3.0).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(psi(0.5, m(2)), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn cos_multiple_examples() {
        assert_abs_diff_eq!(cos_multiple(0.6, m(2)), -0.28, epsilon = 1e-15);
        assert_eq!(cos_multiple(1.0, m(3)), 1.0);
        assert_abs_diff_eq!(cos_multiple(0.5, m(3)), -1.0, epsilon = 1e-15);
        assert_eq!(cos_multiple(0.0, m(4)), 1.0);
        assert_eq!(cos_multiple(0.123456789, m(1)), 0.123456789);
    }

    #[test]
    fn derivative_examples() {
        assert_abs_diff_eq!(cos_multiple_derivative(0.6, m(2)), 2.4, epsilon = 1e-14);
        assert_eq!(cos_multiple_derivative(-0.77, m(1)), 1.0);
        assert_abs_diff_eq!(cos_multiple_derivative(0.5, m(3)), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(psi_derivative(0.6, m(2)), 2.4, epsilon = 1e-14);
        assert_abs_diff_eq!(psi_derivative(-0.6, m(2)), 2.4, epsilon = 1e-14);
        assert_eq!(psi_derivative(0.3, m(1)), 1.0);
    }

    #[test]
    fn derivative_at_endpoints_is_polynomial_limit() {
        // d cos(mθ)/d cos θ → m² at θ = 0.
        for mv in 1..=6u32 {
            assert_abs_diff_eq!(
                cos_multiple_derivative(1.0, m(mv)),
                (mv * mv) as f64,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn psi_matches_angle_oracle() {
        for mv in [1u32, 2, 3, 4, 6] {
            for i in 0..=2000 {
                let theta = PI * i as f64 / 2000.0;
                let got = psi(theta.cos(), m(mv));
                assert_abs_diff_eq!(got, psi_oracle(theta, mv), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn psi_range_endpoints() {
        for mv in 1..=8u32 {
            assert_abs_diff_eq!(psi(1.0, m(mv)), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(psi(-1.0, m(mv)), -(2.0 * mv as f64 - 1.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn continuity_at_boundaries() {
        for mv in [2u32, 3, 4, 6] {
            for k in 1..mv {
                let theta = k as f64 * PI / mv as f64;
                let expected = 1.0 - 2.0 * k as f64;
                let left = segment_sign(k - 1) * (mv as f64 * theta).cos() - 2.0 * (k - 1) as f64;
                let right = segment_sign(k) * (mv as f64 * theta).cos() - 2.0 * k as f64;
                assert_abs_diff_eq!(left, expected, epsilon = 1e-12);
                assert_abs_diff_eq!(right, expected, epsilon = 1e-12);
                assert_abs_diff_eq!(psi(theta.cos(), m(mv)), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(6, 4), 15.0);
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(5, 5), 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn psi_is_below_cos(theta in 0.0..=PI, mv in 1u32..=6) {
                let c = theta.cos();
                prop_assert!(psi(c, m(mv)) <= c + 1e-12);
            }

            #[test]
            fn cos_multiple_below_cos_on_first_segment(t in 0.0f64..=1.0, mv in 1u32..=6) {
                let theta = t * PI / mv as f64;
                prop_assert!(cos_multiple(theta.cos(), m(mv)) <= theta.cos() + 1e-12);
            }

            #[test]
            fn psi_derivative_nonnegative(c in -1.0f64..=1.0, mv in 1u32..=6) {
                prop_assert!(psi_derivative(c, m(mv)) >= -1e-12);
            }

            #[test]
            fn psi_reduces_to_cos_for_unit_margin(c in -1.0f64..=1.0) {
                prop_assert_eq!(psi(c, Margin::SOFTMAX), c);
            }
        }
    }
}
