//! The Carleman-weighted functional `J(W) = Σ ω_l |M W + P(W)|² + β ‖W‖²_{H²}`
//! and its exact gradient.
//!
//! For every column `(i, j)` and quadrature node `α_s` the synthesized
//! `u = Σ W_n Φ_n(α_s)` is clamped smoothly from below, the transverse
//! derivatives enter `A_x(z) = −∫_z^{B+ρ} u_x / (2√u) dt + g_x(α_s)` (and
//! likewise `A_y`) through a reverse cumulative trapezoid, and
//! `S = A_x² + A_y²`. The nonlinear term is `P_n = ∫ Φ_n ∂_α S dα`, evaluated
//! by parts as `Φ_n(b) S(b) − Φ_n(a) S(a) − Σ_s w_s Φ_n'(α_s) S(α_s)`.

use rayon::prelude::*;

use serde::{Deserialize, Serialize};

use crate::basis::AlphaQuadrature;
use crate::dataprep::ProjectedData;
use crate::error::{Error, Result};
use crate::grid::{Axis, CoefficientField, DifferenceOps, GridSpec, ScalarField3};

/// `(ũ, dũ/du)` for the lower clamp `ũ = f + ε·softplus((u − f)/ε)`.
#[inline]
pub fn smooth_clamp(u: f64, floor: f64, width: f64) -> (f64, f64) {
    let t = (u - floor) / width;
    if t > 35.0 {
        (u, 1.0)
    } else if t < -35.0 {
        (floor + width * t.exp(), t.exp())
    } else {
        let e = t.exp();
        (floor + width * e.ln_1p(), e / (1.0 + e))
    }
}

/// The exponential Carleman weight `e^{2λz}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarlemanWeight {
    pub lambda: f64,
}

impl CarlemanWeight {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("Carleman parameter {lambda} must be non-negative")));
        }
        Ok(CarlemanWeight { lambda })
    }

    pub fn weight(&self, z: f64) -> f64 {
        (2.0 * self.lambda * z).exp()
    }
}

/// Quadrature used for the `α` integrals inside the functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaRule {
    /// Trapezoid rule on the source positions.
    Sources,
    /// Gauss–Legendre rule with the given number of interior nodes.
    Gauss(usize),
}

impl Default for AlphaRule {
    fn default() -> Self {
        AlphaRule::Gauss(DEFAULT_GAUSS_NODES)
    }
}

/// Interior nodes of the default `α` rule. `Φn' S` grows like `e^{2α}` at
/// the upper end, which the trapezoid rule on 101 sources resolves poorly.
pub const DEFAULT_GAUSS_NODES: usize = 24;

/// Parameters of the functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalParams {
    pub lambda: f64,
    pub beta: f64,
    /// Lower bound `c₀²` for `u` inside the nonlinear term.
    pub u_floor: f64,
    /// Width of the smooth clamp.
    pub clamp_width: f64,
    pub alpha_rule: AlphaRule,
}

impl Default for FunctionalParams {
    fn default() -> Self {
        FunctionalParams {
            lambda: 4.0,
            beta: 1e-4,
            u_floor: 0.05,
            clamp_width: 1e-3,
            alpha_rule: AlphaRule::default(),
        }
    }
}

/// Per-column intermediate values at every `(level, α)` pair.
struct ColumnCache {
    ut: Vec<f64>,
    sig: Vec<f64>,
    ux: Vec<f64>,
    uy: Vec<f64>,
    ax: Vec<f64>,
    ay: Vec<f64>,
    s: Vec<f64>,
}

/// Output of the forward pass of one column.
struct ColumnForward {
    cache: ColumnCache,
    /// `M W + P` at each level, `l·N + n`.
    residual: Vec<f64>,
    p: Vec<f64>,
    clamped: usize,
}

/// Reverse-mode contributions of one column.
struct ColumnAdjoint {
    value: f64,
    dw: Vec<f64>,
    ddx: Vec<f64>,
    ddy: Vec<f64>,
    clamped: usize,
}

/// The discrete minimization problem.
#[derive(Debug, Clone)]
pub struct InversionProblem {
    pub data: ProjectedData,
    pub params: FunctionalParams,
    /// Quadrature over `α` with the endpoints as first and last nodes.
    rule: AlphaQuadrature,
    ops: DifferenceOps,
    /// `h² · w_l · e^{2λ z_l}` per level.
    level_factor: Vec<f64>,
    /// `g_x(α_s)`, `g_y(α_s)` at the top of every column, `col·S + s`.
    gx: Vec<f64>,
    gy: Vec<f64>,
    /// Coefficient of `S(α_s)` in `P_n`, `s·N + n`.
    p_coeff: Vec<f64>,
    /// `M` row-major.
    m: Vec<f64>,
}

impl InversionProblem {
    pub fn new(data: ProjectedData, params: FunctionalParams) -> Result<Self> {
        CarlemanWeight::new(params.lambda)?;
        if !(0.0..1.0).contains(&params.beta) {
            return Err(Error::invalid(format!("regularization weight {} must lie in [0, 1)", params.beta)));
        }
        if !(params.u_floor > 0.0 && params.clamp_width > 0.0) {
            return Err(Error::invalid("u_floor and clamp width must be positive"));
        }
        let grid = data.grid;
        let ops = DifferenceOps::new(grid);
        let weight = CarlemanWeight { lambda: params.lambda };
        let level_factor = (0..grid.levels())
            .map(|l| ops.level_weights[l] * weight.weight(grid.z(l)))
            .collect();
        let rule = match params.alpha_rule {
            AlphaRule::Sources => data.quadrature.clone(),
            AlphaRule::Gauss(count) => AlphaQuadrature::gauss_legendre(&data.basis, count)?,
        };
        let q = &rule;
        let n = data.order();
        let s_count = q.len();
        let mut gx = vec![0.0; grid.columns() * s_count];
        let mut gy = vec![0.0; grid.columns() * s_count];
        for col in 0..grid.columns() {
            let (i, j) = grid.column_coords(col);
            for s in 0..s_count {
                gx[col * s_count + s] = q.synthesize_at(data.gx_top_at(i, j), s);
                gy[col * s_count + s] = q.synthesize_at(data.gy_top_at(i, j), s);
            }
        }
        let mut p_coeff = vec![0.0; s_count * n];
        for s in 0..s_count {
            for k in 0..n {
                p_coeff[s * n + k] = -q.weights[s] * q.dphi[s][k];
            }
        }
        for k in 0..n {
            p_coeff[(s_count - 1) * n + k] += q.phi[s_count - 1][k];
            p_coeff[k] -= q.phi[0][k];
        }
        let m = data.basis.m_matrix().iter().flatten().copied().collect();
        Ok(InversionProblem {
            data,
            params,
            rule,
            ops,
            level_factor,
            gx,
            gy,
            p_coeff,
            m,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.data.grid
    }

    pub fn order(&self) -> usize {
        self.data.order()
    }

    pub fn ops(&self) -> &DifferenceOps {
        &self.ops
    }

    pub fn alpha_rule(&self) -> &AlphaQuadrature {
        &self.rule
    }

    /// Replaces the top-face `g_x`, `g_y` samples at the nodes of
    /// [`Self::alpha_rule`] (`col·S + s`); the projected
    /// coefficients are no longer consulted afterwards.
    pub fn set_top_gradients(&mut self, gx: Vec<f64>, gy: Vec<f64>) -> Result<()> {
        let len = self.grid().columns() * self.rule.len();
        if gx.len() != len || gy.len() != len {
            return Err(Error::invalid(format!("expected {len} top-gradient samples")));
        }
        self.gx = gx;
        self.gy = gy;
        Ok(())
    }

    fn check(&self, w: &CoefficientField) -> Result<()> {
        if w.spec() != self.grid() || w.order() != self.order() {
            return Err(Error::invalid("coefficient field does not match the problem grid or order"));
        }
        if !w.is_finite() {
            return Err(Error::invalid("coefficient field contains non-finite values"));
        }
        Ok(())
    }

    /// Raw `u(node, α_s) = Σ W_n Φ_n(α_s)` on the grid lattice.
    pub fn synthesize_u(&self, w: &CoefficientField, s: usize) -> ScalarField3 {
        let grid = self.grid();
        let phi = &self.rule.phi[s];
        let mut out = ScalarField3::filled(grid.lattice(), 0.0);
        for i in 0..grid.side() {
            for j in 0..grid.side() {
                for l in 0..grid.levels() {
                    out.set(i, j, l, w.node(i, j, l).iter().zip(phi).map(|(a, b)| a * b).sum());
                }
            }
        }
        out
    }

    fn forward_column(&self, col: usize, w: &[f64], dx: &[f64], dy: &[f64]) -> ColumnForward {
        let n = self.order();
        let levels = self.grid().levels();
        let q = &self.rule;
        let sc = q.len();
        let half_hz = 0.5 * self.grid().hz();
        let FunctionalParams { u_floor, clamp_width, .. } = self.params;
        let size = levels * sc;
        let mut cache = ColumnCache {
            ut: vec![0.0; size],
            sig: vec![0.0; size],
            ux: vec![0.0; size],
            uy: vec![0.0; size],
            ax: vec![0.0; size],
            ay: vec![0.0; size],
            s: vec![0.0; size],
        };
        let mut clamped = 0usize;
        let mut fx = vec![0.0; levels];
        let mut fy = vec![0.0; levels];
        for s in 0..sc {
            let phi = &q.phi[s];
            for l in 0..levels {
                let node = l * n..(l + 1) * n;
                let dot = |v: &[f64]| v[node.clone()].iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
                let u = dot(w);
                let ux = dot(dx);
                let uy = dot(dy);
                if u < u_floor {
                    clamped += 1;
                }
                let (ut, sig) = smooth_clamp(u, u_floor, clamp_width);
                let idx = l * sc + s;
                cache.ut[idx] = ut;
                cache.sig[idx] = sig;
                cache.ux[idx] = ux;
                cache.uy[idx] = uy;
                let inv = 0.5 / ut.sqrt();
                fx[l] = ux * inv;
                fy[l] = uy * inv;
            }
            let gx = self.gx[col * sc + s];
            let gy = self.gy[col * sc + s];
            let (mut ix, mut iy) = (0.0, 0.0);
            for l in (0..levels).rev() {
                if l + 1 < levels {
                    ix += half_hz * (fx[l] + fx[l + 1]);
                    iy += half_hz * (fy[l] + fy[l + 1]);
                }
                let idx = l * sc + s;
                let ax = gx - ix;
                let ay = gy - iy;
                cache.ax[idx] = ax;
                cache.ay[idx] = ay;
                cache.s[idx] = ax * ax + ay * ay;
            }
        }
        let mut p = vec![0.0; levels * n];
        let mut residual = vec![0.0; levels * n];
        for l in 0..levels {
            let srow = &cache.s[l * sc..(l + 1) * sc];
            let pl = &mut p[l * n..(l + 1) * n];
            for (s, sv) in srow.iter().enumerate() {
                let coeff = &self.p_coeff[s * n..(s + 1) * n];
                for (pk, c) in pl.iter_mut().zip(coeff) {
                    *pk += sv * c;
                }
            }
            let wl = &w[l * n..(l + 1) * n];
            for k in 0..n {
                let mw: f64 = self.m[k * n..(k + 1) * n].iter().zip(wl).map(|(a, b)| a * b).sum();
                residual[l * n + k] = mw + p[l * n + k];
            }
        }
        ColumnForward {
            cache,
            residual,
            p,
            clamped,
        }
    }

    fn adjoint_column(&self, col: usize, w: &[f64], dx: &[f64], dy: &[f64], with_gradient: bool) -> ColumnAdjoint {
        let fwd = self.forward_column(col, w, dx, dy);
        let n = self.order();
        let levels = self.grid().levels();
        let mut value = 0.0;
        for l in 0..levels {
            let r2: f64 = fwd.residual[l * n..(l + 1) * n].iter().map(|v| v * v).sum();
            value += self.level_factor[l] * r2;
        }
        if !with_gradient {
            return ColumnAdjoint {
                value,
                dw: Vec::new(),
                ddx: Vec::new(),
                ddy: Vec::new(),
                clamped: fwd.clamped,
            };
        }
        let q = &self.rule;
        let sc = q.len();
        let half_hz = 0.5 * self.grid().hz();
        let cache = &fwd.cache;
        let mut dw = vec![0.0; levels * n];
        let mut ddx = vec![0.0; levels * n];
        let mut ddy = vec![0.0; levels * n];
        // dJ/dS at every (level, α).
        let mut ds = vec![0.0; levels * sc];
        for l in 0..levels {
            let factor = 2.0 * self.level_factor[l];
            let dr: Vec<f64> = fwd.residual[l * n..(l + 1) * n].iter().map(|r| factor * r).collect();
            for (k, drk) in dr.iter().enumerate() {
                for m in 0..n {
                    dw[l * n + m] += self.m[k * n + m] * drk;
                }
            }
            for s in 0..sc {
                let coeff = &self.p_coeff[s * n..(s + 1) * n];
                ds[l * sc + s] = coeff.iter().zip(&dr).map(|(c, d)| c * d).sum();
            }
        }
        let mut dfx = vec![0.0; levels];
        let mut dfy = vec![0.0; levels];
        for s in 0..sc {
            // Transpose of the reverse cumulative trapezoid: prefix sums of dI.
            let (mut px, mut py) = (0.0, 0.0);
            dfx.iter_mut().for_each(|v| *v = 0.0);
            dfy.iter_mut().for_each(|v| *v = 0.0);
            for l in 0..levels.saturating_sub(1) {
                let idx = l * sc + s;
                // A = g − I, so dI = −dA = −2 A dS.
                px += -2.0 * cache.ax[idx] * ds[idx];
                py += -2.0 * cache.ay[idx] * ds[idx];
                dfx[l] += half_hz * px;
                dfy[l] += half_hz * py;
                dfx[l + 1] += half_hz * px;
                dfy[l + 1] += half_hz * py;
            }
            let phi = &q.phi[s];
            for l in 0..levels {
                let idx = l * sc + s;
                let ut = cache.ut[idx];
                let rs = ut.sqrt();
                let dux = dfx[l] * 0.5 / rs;
                let duy = dfy[l] * 0.5 / rs;
                let dut = -(dfx[l] * cache.ux[idx] + dfy[l] * cache.uy[idx]) * 0.25 / (ut * rs);
                let du = dut * cache.sig[idx];
                let o = l * n;
                for k in 0..n {
                    dw[o + k] += du * phi[k];
                    ddx[o + k] += dux * phi[k];
                    ddy[o + k] += duy * phi[k];
                }
            }
        }
        ColumnAdjoint {
            value,
            dw,
            ddx,
            ddy,
            clamped: fwd.clamped,
        }
    }

    fn sweep(&self, w: &CoefficientField, with_gradient: bool) -> (f64, Option<CoefficientField>, usize) {
        let grid = *self.grid();
        let dx = self.ops.ddx(w);
        let dy = self.ops.ddy(w);
        let per_column: Vec<ColumnAdjoint> = (0..grid.columns())
            .into_par_iter()
            .map(|col| self.adjoint_column(col, w.column(col), dx.column(col), dy.column(col), with_gradient))
            .collect();
        // Sequential reduction in column order: independent of the thread count.
        let mut value = 0.0;
        let mut clamped = 0;
        for c in &per_column {
            value += c.value;
            clamped += c.clamped;
        }
        let beta = self.params.beta;
        if beta > 0.0 {
            value += beta * self.ops.h2_squared(w);
        }
        if !with_gradient {
            return (value, None, clamped);
        }
        let n = self.order();
        let mut gw = CoefficientField::zeros(grid, n);
        let mut gdx = CoefficientField::zeros(grid, n);
        let mut gdy = CoefficientField::zeros(grid, n);
        let len = w.column_len();
        for (col, c) in per_column.iter().enumerate() {
            gw.values_mut()[col * len..(col + 1) * len].copy_from_slice(&c.dw);
            gdx.values_mut()[col * len..(col + 1) * len].copy_from_slice(&c.ddx);
            gdy.values_mut()[col * len..(col + 1) * len].copy_from_slice(&c.ddy);
        }
        self.ops.dx.accumulate(&gdx, Axis::X, &mut gw, true);
        self.ops.dy.accumulate(&gdy, Axis::Y, &mut gw, true);
        if beta > 0.0 {
            gw.axpy(beta, &self.ops.h2_squared_gradient(w));
        }
        gw.zero_pinned();
        (value, Some(gw), clamped)
    }

    /// `J(W)`.
    pub fn evaluate(&self, w: &CoefficientField) -> Result<f64> {
        self.check(w)?;
        Ok(self.sweep(w, false).0)
    }

    /// `J(W)` and its gradient with respect to the free coefficients (zero on
    /// pinned nodes).
    pub fn evaluate_with_gradient(&self, w: &CoefficientField) -> Result<(f64, CoefficientField)> {
        self.check(w)?;
        let (value, grad, _) = self.sweep(w, true);
        Ok((value, grad.expect("gradient requested")))
    }

    pub fn gradient(&self, w: &CoefficientField) -> Result<CoefficientField> {
        Ok(self.evaluate_with_gradient(w)?.1)
    }

    /// Fraction of `(node, α)` evaluations where the raw `u` is below the floor.
    pub fn clamp_fraction(&self, w: &CoefficientField) -> Result<f64> {
        self.check(w)?;
        let (_, _, clamped) = self.sweep(w, false);
        Ok(clamped as f64 / (self.grid().node_count() * self.rule.len()) as f64)
    }

    fn columnwise(&self, w: &CoefficientField, pick: impl Fn(&ColumnForward) -> &[f64] + Sync) -> CoefficientField {
        let grid = *self.grid();
        let dx = self.ops.ddx(w);
        let dy = self.ops.ddy(w);
        let mut out = CoefficientField::zeros(grid, self.order());
        let len = w.column_len();
        let cols: Vec<Vec<f64>> = (0..grid.columns())
            .into_par_iter()
            .map(|col| pick(&self.forward_column(col, w.column(col), dx.column(col), dy.column(col))).to_vec())
            .collect();
        for (col, v) in cols.iter().enumerate() {
            out.values_mut()[col * len..(col + 1) * len].copy_from_slice(v);
        }
        out
    }

    /// The nonlinear term `P(W)` at every node.
    pub fn apply_p(&self, w: &CoefficientField) -> Result<CoefficientField> {
        self.check(w)?;
        Ok(self.columnwise(w, |f| &f.p))
    }

    /// `M W + P(W)` at every node.
    pub fn residual(&self, w: &CoefficientField) -> Result<CoefficientField> {
        self.check(w)?;
        Ok(self.columnwise(w, |f| &f.residual))
    }

    /// Recovers `m = ũ + A_x² + A_y²`, averaged over `α` with the trapezoid
    /// weights and floored at 1.
    pub fn recover_m(&self, w: &CoefficientField) -> Result<ScalarField3> {
        self.check(w)?;
        let grid = *self.grid();
        let dx = self.ops.ddx(w);
        let dy = self.ops.ddy(w);
        let q = &self.rule;
        let sc = q.len();
        let (a, b) = self.data.basis.interval();
        let levels = grid.levels();
        let cols: Vec<Vec<f64>> = (0..grid.columns())
            .into_par_iter()
            .map(|col| {
                let f = self.forward_column(col, w.column(col), dx.column(col), dy.column(col));
                (0..levels)
                    .map(|l| {
                        let mut acc = 0.0;
                        for s in 0..sc {
                            let idx = l * sc + s;
                            acc += q.weights[s] * (f.cache.ut[idx] + f.cache.s[idx]);
                        }
                        (acc / (b - a)).max(1.0)
                    })
                    .collect()
            })
            .collect();
        let mut m = ScalarField3::filled(grid.lattice(), 1.0);
        for (col, vals) in cols.iter().enumerate() {
            let (i, j) = grid.column_coords(col);
            for (l, v) in vals.iter().enumerate() {
                m.set(i, j, l, *v);
            }
        }
        Ok(m)
    }
}
