//! Orthonormal basis of `L2(a, b)` seeded by `{α^n e^α}`.
//!
//! Every function of the basis has the form `Φn(α) = Qn(α) e^α` with `Qn` a
//! polynomial of degree exactly `n`. Inner products of such functions reduce to
//! weighted integrals of polynomials against `e^{2α}`. These are evaluated by a
//! 64-node Gauss–Legendre rule, which is exact for the polynomial part and
//! resolves the exponential to rounding level, so the basis and the
//! derivative-coupling matrix `M[m][n] = <Φm, Φn'>` carry no discretization
//! error. The closed-form moments [`exact_exp_moment`] serve as an independent
//! check.
//!
//! Polynomials are stored in the monomial basis of the normalized variable
//! `t = (α - c) / s`, where `c` is the interval midpoint and `s` its half width.
//! This keeps the moment (Hankel) matrix far better conditioned than raw powers
//! of `α` while remaining a plain coefficient representation.

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest supported truncation order.
pub const MAX_ORDER: usize = 16;

/// Tolerance on the re-orthogonalized Gram matrix before construction fails.
const GRAM_LIMIT: f64 = 1e-8;

/// `∫_a^b α^k e^{rate·α} dα` by the integration-by-parts recurrence
/// `I_k = [α^k e^{rα} / r]_a^b - (k / r) I_{k-1}`.
pub fn exp_moment(k: usize, rate: f64, a: f64, b: f64) -> f64 {
    debug_assert!(rate != 0.0);
    let ea = (rate * a).exp();
    let eb = (rate * b).exp();
    let mut value = (eb - ea) / rate;
    let (mut pa, mut pb) = (1.0, 1.0);
    for j in 1..=k {
        pa *= a;
        pb *= b;
        value = (pb * eb - pa * ea) / rate - (j as f64 / rate) * value;
    }
    value
}

/// `∫_a^b α^k e^{2α} dα`.
pub fn exact_exp_moment(k: usize, a: f64, b: f64) -> f64 {
    exp_moment(k, 2.0, a, b)
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; coeffs.len()];
    for (i, &c) in coeffs.iter().enumerate().skip(1) {
        out[i - 1] = c * i as f64;
    }
    out
}

/// The truncated special basis together with its derivative-coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    a: f64,
    b: f64,
    center: f64,
    half_width: f64,
    /// Row `n` holds the coefficients of `Qn` in powers of `t`, lowest first.
    poly_coeffs: Vec<Vec<f64>>,
    /// Row `n` holds the coefficients of `Qn + dQn/dα`, so `Φn' = (…) e^α`.
    deriv_coeffs: Vec<Vec<f64>>,
    /// `m[row][col] = <Φrow, Φcol'>`.
    m: Vec<Vec<f64>>,
}

/// Gauss–Legendre rule carrying the weight `e^{2α}` of the `Φ` inner product,
/// expressed in the normalized variable `t`.
#[derive(Debug, Clone)]
struct WeightedRule {
    t: Vec<f64>,
    w: Vec<f64>,
}

/// Nodes of the rule that evaluates `<Φm, Φn>`; the integrand is a polynomial
/// of degree below `2·MAX_ORDER` times `e^{2α}`, resolved to rounding level.
const INNER_PRODUCT_NODES: usize = 64;

impl WeightedRule {
    fn new(center: f64, half_width: f64) -> Self {
        let rule = GaussLegendre::new(INNER_PRODUCT_NODES).expect("rule degree is at least 2");
        let (t, w) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(t, w)| (t, w * half_width * (2.0 * (center + half_width * t)).exp()))
            .unzip();
        WeightedRule { t, w }
    }

    fn values(&self, coeffs: &[f64]) -> Vec<f64> {
        self.t.iter().map(|&t| horner(coeffs, t)).collect()
    }

    fn inner(&self, p: &[f64], q: &[f64]) -> f64 {
        self.w.iter().zip(p).zip(q).map(|((w, a), b)| w * a * b).sum()
    }
}

impl BasisSet {
    /// Gram–Schmidt on `{α^n e^α}` for `n < order`, with one full
    /// re-orthogonalization pass.
    pub fn build(order: usize, a: f64, b: f64) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::invalid(format!(
                "basis order must lie in 1..={MAX_ORDER}, got {order}"
            )));
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid(format!("basis interval ({a}, {b}) is empty")));
        }
        let center = 0.5 * (a + b);
        let half_width = 0.5 * (b - a);
        let rule = WeightedRule::new(center, half_width);

        // Modified Gram–Schmidt on coefficient vectors, tracking their values
        // at the quadrature nodes alongside.
        let mut polys: Vec<Vec<f64>> = Vec::with_capacity(order);
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(order);
        for n in 0..order {
            let mut v = vec![0.0; order];
            v[n] = 1.0;
            let mut v_vals: Vec<f64> = rule.t.iter().map(|t| t.powi(n as i32)).collect();
            for _pass in 0..2 {
                for (q, q_vals) in polys.iter().zip(&values) {
                    let proj = rule.inner(&v_vals, q_vals);
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= proj * qi;
                    }
                    for (vi, qi) in v_vals.iter_mut().zip(q_vals) {
                        *vi -= proj * qi;
                    }
                }
            }
            let norm = rule.inner(&v_vals, &v_vals).sqrt();
            v.iter_mut().for_each(|c| *c /= norm);
            polys.push(v);
            values.push(rule.values(polys.last().unwrap()));
        }

        let mut deviation: f64 = 0.0;
        for (i, p) in values.iter().enumerate() {
            for (j, q) in values.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                deviation = deviation.max((rule.inner(p, q) - target).abs());
            }
        }
        if !(deviation <= GRAM_LIMIT) {
            return Err(Error::BasisConditioning {
                order,
                deviation,
                limit: GRAM_LIMIT,
            });
        }

        let deriv_coeffs: Vec<Vec<f64>> = polys
            .iter()
            .map(|p| {
                let dp = derivative(p);
                p.iter()
                    .zip(&dp)
                    .map(|(&c, &d)| c + d / half_width)
                    .collect()
            })
            .collect();
        let deriv_values: Vec<Vec<f64>> = deriv_coeffs.iter().map(|r| rule.values(r)).collect();
        let m = values
            .iter()
            .map(|p| deriv_values.iter().map(|r| rule.inner(p, r)).collect())
            .collect();

        Ok(BasisSet {
            a,
            b,
            center,
            half_width,
            poly_coeffs: polys,
            deriv_coeffs,
            m,
        })
    }

    pub fn order(&self) -> usize {
        self.poly_coeffs.len()
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Coefficients of `Qn` in powers of `(α - c)/s`; see [`BasisSet::normalization`].
    pub fn poly_coeffs(&self) -> &[Vec<f64>] {
        &self.poly_coeffs
    }

    /// `(c, s)` of the normalized polynomial variable `t = (α - c)/s`.
    pub fn normalization(&self) -> (f64, f64) {
        (self.center, self.half_width)
    }

    /// `M[m][n] = <Φm, Φn'>`.
    pub fn m_matrix(&self) -> &[Vec<f64>] {
        &self.m
    }

    fn t(&self, alpha: f64) -> f64 {
        (alpha - self.center) / self.half_width
    }

    /// `(Φ0(α), …, Φ_{N-1}(α))`.
    pub fn eval(&self, alpha: f64) -> Vec<f64> {
        let t = self.t(alpha);
        let e = alpha.exp();
        self.poly_coeffs.iter().map(|p| horner(p, t) * e).collect()
    }

    /// `(Φ0'(α), …, Φ_{N-1}'(α))`.
    pub fn eval_derivative(&self, alpha: f64) -> Vec<f64> {
        let t = self.t(alpha);
        let e = alpha.exp();
        self.deriv_coeffs.iter().map(|p| horner(p, t) * e).collect()
    }

    /// `Σ coeffs[n] Φn(α)`.
    pub fn synthesize(&self, coeffs: &[f64], alpha: f64) -> f64 {
        self.eval(alpha)
            .iter()
            .zip(coeffs)
            .map(|(phi, c)| phi * c)
            .sum()
    }

    /// Exact `∫_a^b Φn(α) α^p dα` for every `n`.
    pub fn weighted_integrals(&self, power: usize) -> Vec<f64> {
        // α^p = (c + s t)^p expanded in powers of t.
        let mut alpha_pow = vec![1.0];
        for _ in 0..power {
            let mut next = vec![0.0; alpha_pow.len() + 1];
            for (i, &c) in alpha_pow.iter().enumerate() {
                next[i] += c * self.center;
                next[i + 1] += c * self.half_width;
            }
            alpha_pow = next;
        }
        let len = self.order() + alpha_pow.len();
        let scale = self.center.exp();
        let moments: Vec<f64> = (0..len)
            .map(|k| {
                scale * exp_moment(k, 1.0, -self.half_width, self.half_width)
                    / self.half_width.powi(k as i32)
            })
            .collect();
        self.poly_coeffs
            .iter()
            .map(|q| {
                let mut acc = 0.0;
                for (i, &qi) in q.iter().enumerate() {
                    for (j, &pj) in alpha_pow.iter().enumerate() {
                        acc += qi * pj * moments[i + j];
                    }
                }
                acc
            })
            .collect()
    }

    /// `<Φm, Φn>` evaluated by the weighted Gauss–Legendre rule.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let rule = WeightedRule::new(self.center, self.half_width);
        let values: Vec<Vec<f64>> = self.poly_coeffs.iter().map(|p| rule.values(p)).collect();
        values
            .iter()
            .map(|p| values.iter().map(|q| rule.inner(p, q)).collect())
            .collect()
    }

    /// `<Φm, Φn>` evaluated from the closed-form moments `∫ t^k e^{2α} dα`.
    ///
    /// Cancellation in the monomial expansion limits this route to roughly
    /// `1e-10` accuracy once the order exceeds 8 on the default interval.
    pub fn gram_from_moments(&self) -> Vec<Vec<f64>> {
        let order = self.order();
        let scale = (2.0 * self.center).exp();
        let moments: Vec<f64> = (0..2 * order)
            .map(|k| {
                scale * exact_exp_moment(k, -self.half_width, self.half_width)
                    / self.half_width.powi(k as i32)
            })
            .collect();
        let inner = |p: &[f64], q: &[f64]| {
            let mut acc = 0.0;
            for (i, &pi) in p.iter().enumerate() {
                for (j, &qj) in q.iter().enumerate() {
                    acc += pi * qj * moments[i + j];
                }
            }
            acc
        };
        self.poly_coeffs
            .iter()
            .map(|p| self.poly_coeffs.iter().map(|q| inner(p, q)).collect())
            .collect()
    }

    pub fn m_determinant(&self) -> f64 {
        self.m_dmatrix().determinant()
    }

    /// Solves `M w = rhs`.
    pub fn solve_m(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.order();
        if rhs.len() != n {
            return Err(Error::invalid(format!(
                "right-hand side has {} entries, basis order is {n}",
                rhs.len()
            )));
        }
        self.m_dmatrix()
            .lu()
            .solve(&DVector::from_column_slice(rhs))
            .map(|v| v.iter().copied().collect())
            .ok_or_else(|| Error::invalid("coupling matrix is singular"))
    }

    fn m_dmatrix(&self) -> DMatrix<f64> {
        let n = self.order();
        DMatrix::from_fn(n, n, |i, j| self.m[i][j])
    }
}

/// Quadrature over `[a, b]` with the basis and its derivative tabulated at
/// every node. The first and last nodes are always `a` and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `phi[s][n] = Φn(α_s)`.
    pub phi: Vec<Vec<f64>>,
    /// `dphi[s][n] = Φn'(α_s)`.
    pub dphi: Vec<Vec<f64>>,
}

impl AlphaQuadrature {
    pub fn uniform(basis: &BasisSet, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid("alpha quadrature needs at least two nodes"));
        }
        let (a, b) = basis.interval();
        let step = (b - a) / (count - 1) as f64;
        // The last node is `b` exactly, matching the source positions.
        let nodes: Vec<f64> = (0..count)
            .map(|s| if s + 1 == count { b } else { a + step * s as f64 })
            .collect();
        let weights = trapezoid_weights(count, step);
        let phi = nodes.iter().map(|&al| basis.eval(al)).collect();
        let dphi = nodes.iter().map(|&al| basis.eval_derivative(al)).collect();
        Ok(AlphaQuadrature {
            nodes,
            weights,
            phi,
            dphi,
        })
    }

    /// `count`-point Gauss–Legendre rule, bracketed by the endpoints with zero
    /// weight so that boundary values are available to integration by parts.
    pub fn gauss_legendre(basis: &BasisSet, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid("alpha quadrature needs at least two nodes"));
        }
        let (a, b) = basis.interval();
        let (c, s) = (0.5 * (a + b), 0.5 * (b - a));
        let rule = GaussLegendre::new(count).map_err(|e| Error::invalid(e.to_string()))?;
        let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().iter().map(|&(t, w)| (c + s * t, s * w)).collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut nodes = vec![a];
        let mut weights = vec![0.0];
        for (x, w) in pairs {
            nodes.push(x);
            weights.push(w);
        }
        nodes.push(b);
        weights.push(0.0);
        let phi = nodes.iter().map(|&al| basis.eval(al)).collect();
        let dphi = nodes.iter().map(|&al| basis.eval_derivative(al)).collect();
        Ok(AlphaQuadrature {
            nodes,
            weights,
            phi,
            dphi,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn order(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    /// `c_n = Σ_s w_s f(α_s) Φn(α_s)`.
    pub fn project(&self, samples: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.order()];
        for ((w, f), phi) in self.weights.iter().zip(samples).zip(&self.phi) {
            let wf = w * f;
            for (o, p) in out.iter_mut().zip(phi) {
                *o += wf * p;
            }
        }
        out
    }

    /// `Σ_n coeffs[n] Φn(α_s)` at node `s`.
    pub fn synthesize_at(&self, coeffs: &[f64], s: usize) -> f64 {
        self.phi[s].iter().zip(coeffs).map(|(p, c)| p * c).sum()
    }
}

/// Composite trapezoid weights on `count` uniformly spaced nodes.
pub fn trapezoid_weights(count: usize, step: f64) -> Vec<f64> {
    let mut w = vec![step; count];
    if count > 0 {
        w[0] = 0.5 * step;
        w[count - 1] = 0.5 * step;
    }
    if count == 1 {
        w[0] = 0.0;
    }
    w
}
