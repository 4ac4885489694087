//! Composite Gauss-Legendre quadrature on boxes, refined by panel doubling.
//!
//! Every node layout is deterministic and every reduction runs in a fixed
//! pairwise order, so results are bit-identical regardless of how many rayon
//! workers evaluate the integrand.

use std::num::NonZeroUsize;
use std::ops::{Add, Mul};
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Points per Gauss-Legendre panel.
pub const PANEL_ORDER: usize = 16;

/// Hard cap on the total number of integrand evaluations of one estimate.
pub const MAX_NODES: usize = 1 << 20;

/// Values that can be accumulated by the quadrature routines.
pub trait QuadValue: Copy + Send + Sync + Add<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    /// Largest absolute component, used for convergence tests.
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.re.abs().max(self.im.abs())
    }
}

/// Fixed-size bundle of values integrated over the same nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bundle<T, const N: usize>(pub [T; N]);

impl<T: QuadValue, const N: usize> Add for Bundle<T, N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a = *a + b;
        }
        self
    }
}

impl<T: QuadValue, const N: usize> Mul<f64> for Bundle<T, N> {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        for a in self.0.iter_mut() {
            *a = *a * rhs;
        }
        self
    }
}

impl<T: QuadValue, const N: usize> QuadValue for Bundle<T, N> {
    fn zero() -> Self {
        Bundle([T::zero(); N])
    }
    fn magnitude(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.magnitude()))
    }
}

/// Sum in a fixed binary-tree order.
pub fn pairwise_sum<T: QuadValue>(values: &[T]) -> T {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().fold(T::zero(), |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Reference Gauss-Legendre rule on [-1, 1], mirrored so that nodes and
/// weights are exactly symmetric about the origin.
fn reference_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let rule = GaussLegendre::new(NonZeroUsize::new(PANEL_ORDER).unwrap());
        let mut pairs: Vec<(f64, f64)> = rule.nodes().copied().zip(rule.weights().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = pairs.len();
        for i in 0..n / 2 {
            let (x, w) = pairs[i];
            pairs[n - 1 - i] = (-x, w);
        }
        pairs.into_iter().unzip()
    })
}

/// Nodes and weights of a composite rule with `panels` equal panels on `[lo, hi]`.
pub fn composite_rule(lo: f64, hi: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = reference_rule();
    let width = (hi - lo) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * xs.len());
    let mut weights = Vec::with_capacity(panels * xs.len());
    let centre = 0.5 * (lo + hi);
    for panel in 0..panels {
        // Offsets from the box center are exact negatives for mirrored
        // panels, so symmetric boxes get symmetric nodes.
        let mid = (2 * panel + 1) as f64 - panels as f64;
        let mid = 0.5 * mid * width;
        let half = 0.5 * width;
        for (&x, &w) in xs.iter().zip(ws) {
            nodes.push(centre + (mid + half * x));
            weights.push(half * w);
        }
    }
    (nodes, weights)
}

/// An integration estimate with its refinement error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    /// Magnitude of the change between the last two refinement levels.
    pub error: f64,
    /// Nodes used per axis at the final level.
    pub nodes_per_axis: usize,
}

/// Tensor-product rule with a fixed number of nodes per axis.
///
/// Evaluation is parallel over the outermost axis; the reduction order does
/// not depend on the rayon schedule.
pub fn tensor_integrate<T, F>(bounds: &[(f64, f64)], panels: usize, f: &F) -> T
where
    T: QuadValue,
    F: Fn(&[f64]) -> T + Sync,
{
    let dims = bounds.len();
    assert!((1..=4).contains(&dims), "tensor_integrate supports 1 to 4 dimensions");
    let rules: Vec<(Vec<f64>, Vec<f64>)> = bounds.iter().map(|&(lo, hi)| composite_rule(lo, hi, panels)).collect();
    let n = rules[0].0.len();
    let inner: usize = n.pow(dims as u32 - 1);

    let slices: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i0| {
            let mut point = [0.0; 4];
            point[0] = rules[0].0[i0];
            let w0 = rules[0].1[i0];
            let mut partial = Vec::with_capacity(inner);
            for flat in 0..inner {
                let mut rem = flat;
                let mut weight = w0;
                for axis in (1..dims).rev() {
                    let idx = rem % n;
                    rem /= n;
                    point[axis] = rules[axis].0[idx];
                    weight *= rules[axis].1[idx];
                }
                partial.push(f(&point[..dims]) * weight);
            }
            pairwise_sum(&partial)
        })
        .collect();
    pairwise_sum(&slices)
}

/// Adaptive tensor integration: doubles the panel count per axis until two
/// successive estimates agree to `rel_tol` relative (with `abs_tol` floor).
pub fn integrate<T, F>(
    bounds: &[(f64, f64)],
    start_panels: usize,
    rel_tol: f64,
    abs_tol: f64,
    f: &F,
) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: Fn(&[f64]) -> T + Sync,
{
    integrate_with_budget(bounds, start_panels, rel_tol, abs_tol, MAX_NODES, f)
}

/// [`integrate`] with an explicit cap on the total node count.
pub fn integrate_with_budget<T, F>(
    bounds: &[(f64, f64)],
    start_panels: usize,
    rel_tol: f64,
    abs_tol: f64,
    max_nodes: usize,
    f: &F,
) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: Fn(&[f64]) -> T + Sync,
{
    let dims = bounds.len() as u32;
    let mut panels = start_panels.max(1);
    let mut prev = tensor_integrate(bounds, panels, f);
    let mut achieved = f64::NAN;
    loop {
        let next_panels = panels * 2;
        let nodes = next_panels * PANEL_ORDER;
        if nodes.checked_pow(dims).is_none_or(|total| total > max_nodes) {
            return Err(Error::QuadratureNonConvergence {
                nodes: (panels * PANEL_ORDER).pow(dims),
                tolerance: rel_tol,
                achieved,
            });
        }
        let next = tensor_integrate(bounds, next_panels, f);
        let change = pairwise_sum(&[next, prev * -1.0]).magnitude();
        if change <= rel_tol * next.magnitude() || change <= abs_tol {
            return Ok(Estimate { value: next, error: change, nodes_per_axis: nodes });
        }
        achieved = change / next.magnitude();
        prev = next;
        panels = next_panels;
    }
}

/// Polar rule around `centre`: composite Gauss-Legendre in the radius on
/// `[0, r_max]` and the periodic trapezoid rule in the angle, which sums any
/// harmonic `exp(i m phi)` with `0 < |m| < n_phi` to zero.
fn polar_tensor<T, F>(centre: [f64; 2], r_max: f64, panels: usize, f: &F) -> T
where
    T: QuadValue,
    F: Fn(&[f64]) -> T + Sync,
{
    let (radii, weights) = composite_rule(0.0, r_max, panels);
    let n_phi = 32 * panels;
    let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
    let directions: Vec<(f64, f64)> = (0..n_phi).map(|j| (j as f64 * dphi).sin_cos()).collect();
    let rings: Vec<T> = radii
        .par_iter()
        .zip(weights.par_iter())
        .map(|(&r, &w)| {
            let ring: Vec<T> = directions.iter().map(|&(s, c)| f(&[centre[0] + r * c, centre[1] + r * s])).collect();
            pairwise_sum(&ring) * (w * r * dphi)
        })
        .collect();
    pairwise_sum(&rings)
}

/// Adaptive version of the polar rule; radial panels and angular nodes
/// double together.
pub fn polar_integrate<T, F>(
    centre: [f64; 2],
    r_max: f64,
    start_panels: usize,
    rel_tol: f64,
    abs_tol: f64,
    f: &F,
) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: Fn(&[f64]) -> T + Sync,
{
    let mut panels = start_panels.max(1);
    let mut prev = polar_tensor(centre, r_max, panels, f);
    let mut achieved = f64::NAN;
    loop {
        let next_panels = panels * 2;
        let total = next_panels * PANEL_ORDER * 32 * next_panels;
        if total > MAX_NODES {
            return Err(Error::QuadratureNonConvergence {
                nodes: panels * PANEL_ORDER * 32 * panels,
                tolerance: rel_tol,
                achieved,
            });
        }
        let next = polar_tensor(centre, r_max, next_panels, f);
        let change = pairwise_sum(&[next, prev * -1.0]).magnitude();
        if change <= rel_tol * next.magnitude() || change <= abs_tol {
            return Ok(Estimate { value: next, error: change, nodes_per_axis: next_panels * PANEL_ORDER });
        }
        achieved = change / next.magnitude();
        prev = next;
        panels = next_panels;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polar_rule_integrates_offset_gaussian() {
        let est: Estimate<f64> =
            polar_integrate([0.3, -0.2], 12.0, 2, 1e-12, 0.0, &|p: &[f64]| (-(p[0] * p[0] + p[1] * p[1])).exp())
                .unwrap();
        assert_relative_eq!(est.value, std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn reference_rule_is_symmetric() {
        let (x, w) = reference_rule();
        let n = x.len();
        for i in 0..n {
            assert_eq!(x[i], -x[n - 1 - i]);
            assert_eq!(w[i], w[n - 1 - i]);
        }
        let total: f64 = w.iter().sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn gaussian_integral_1d() {
        let est: Estimate<f64> = integrate(&[(-10.0, 10.0)], 1, 1e-12, 0.0, &|p: &[f64]| (-p[0] * p[0]).exp()).unwrap();
        assert_relative_eq!(est.value, std::f64::consts::PI.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn gaussian_integral_3d() {
        let b = (-9.0, 9.0);
        let v: f64 = tensor_integrate(&[b, b, b], 4, &|p: &[f64]| (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])).exp());
        assert_relative_eq!(v, std::f64::consts::PI.powf(1.5), max_relative = 1e-12);
    }

    #[test]
    fn composite_nodes_symmetric_for_symmetric_box() {
        for panels in [1, 2, 3, 4, 7] {
            let (x, w) = composite_rule(-3.0, 3.0, panels);
            let n = x.len();
            for i in 0..n {
                assert_eq!(x[i], -x[n - 1 - i]);
                assert_eq!(w[i], w[n - 1 - i]);
            }
        }
    }

    #[test]
    fn pairwise_sum_matches_naive_for_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        // Discontinuous integrand never converges to 1e-15.
        let r: Result<Estimate<f64>> = integrate(&[(-1.0, 1.3), (-1.0, 1.3)], 1, 1e-15, 0.0, &|p: &[f64]| {
            if p[0] * p[0] + p[1] * p[1] < 0.5 {
                1.0
            } else {
                0.0
            }
        });
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }
}
