//! Regular-grid geometry, sampled fields and the partial finite differences.
//!
//! The inversion domain is `(0,1)² × (B, B+ρ)`. Transverse coordinates are
//! discretized with step `h = 1/k`; the depth coordinate with `hz = ρ/kz`.
//! Transverse derivatives are central differences at interior nodes and
//! second-order one-sided differences on the lateral boundary. All
//! `z`-integrals use the trapezoid rule.

use serde::{Deserialize, Serialize};

use crate::basis::trapezoid_weights;
use crate::error::{Error, Result};

/// Smallest transverse step accepted by [`GridSpec::new`].
pub const DEFAULT_MIN_STEP: f64 = 1.0 / 64.0;

/// Domain and source-line parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    /// Bottom face `z = B` of the domain.
    pub z_bottom: f64,
    /// Extent `ρ` of the domain in `z`.
    pub depth: f64,
    /// Source positions run over `x = α ∈ [alpha_min, alpha_max]`.
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// `y` coordinate of the source line.
    pub source_y: f64,
    /// `z` coordinate of the source line.
    pub source_z: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            z_bottom: 0.0,
            depth: 1.0,
            alpha_min: -2.0,
            alpha_max: 3.0,
            source_y: 0.5,
            source_z: -1.0,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.z_bottom,
            self.depth,
            self.alpha_min,
            self.alpha_max,
            self.source_y,
            self.source_z,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("geometry contains non-finite values"));
        }
        if !(self.depth > 0.0) {
            return Err(Error::invalid("domain depth must be positive"));
        }
        if !(self.alpha_min < self.alpha_max) {
            return Err(Error::invalid("source interval is empty"));
        }
        if !(self.source_z < self.z_bottom) {
            return Err(Error::invalid("source line must lie strictly below the domain"));
        }
        Ok(())
    }

    pub fn z_top(&self) -> f64 {
        self.z_bottom + self.depth
    }

    pub fn source(&self, alpha: f64) -> [f64; 3] {
        [alpha, self.source_y, self.source_z]
    }
}

/// Axis-aligned regular lattice of sample points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice3 {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
}

impl Lattice3 {
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index with `x` fastest and `z` slowest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, l: usize) -> usize {
        (l * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, l: usize) -> [f64; 3] {
        [
            self.origin[0] + self.spacing[0] * i as f64,
            self.origin[1] + self.spacing[1] * j as f64,
            self.origin[2] + self.spacing[2] * l as f64,
        ]
    }

    pub fn upper(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for d in 0..3 {
            out[d] = self.origin[d] + self.spacing[d] * (self.dims[d] - 1) as f64;
        }
        out
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let hi = self.upper();
        (0..3).all(|d| p[d] >= self.origin[d] - 1e-12 && p[d] <= hi[d] + 1e-12)
    }
}

/// The semidiscrete inversion grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub geometry: Geometry,
    /// Transverse subdivisions; `h = 1/k`.
    pub k: usize,
    /// Depth subdivisions; `hz = ρ/kz`.
    pub kz: usize,
}

impl GridSpec {
    pub fn new(geometry: Geometry, k: usize, kz: usize) -> Result<Self> {
        Self::with_min_step(geometry, k, kz, DEFAULT_MIN_STEP)
    }

    pub fn with_min_step(geometry: Geometry, k: usize, kz: usize, min_step: f64) -> Result<Self> {
        geometry.validate()?;
        if k < 2 || kz < 2 {
            return Err(Error::invalid(format!(
                "grid needs at least two subdivisions per axis, got k={k}, kz={kz}"
            )));
        }
        if 1.0 / (k as f64) < min_step {
            return Err(Error::invalid(format!(
                "transverse step 1/{k} is below the floor {min_step}"
            )));
        }
        Ok(GridSpec { geometry, k, kz })
    }

    /// Grid with `kz = k` and step closest to `h`.
    pub fn from_step(geometry: Geometry, h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::invalid(format!("inversion step {h} outside (0,1)")));
        }
        let k = (1.0 / h).round() as usize;
        Self::new(geometry, k, k)
    }

    pub fn h(&self) -> f64 {
        1.0 / self.k as f64
    }

    pub fn hz(&self) -> f64 {
        self.geometry.depth / self.kz as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.h()
    }

    pub fn z(&self, l: usize) -> f64 {
        self.geometry.z_bottom + l as f64 * self.hz()
    }

    pub fn side(&self) -> usize {
        self.k + 1
    }

    pub fn levels(&self) -> usize {
        self.kz + 1
    }

    pub fn columns(&self) -> usize {
        self.side() * self.side()
    }

    pub fn node_count(&self) -> usize {
        self.columns() * self.levels()
    }

    #[inline]
    pub fn column_index(&self, i: usize, j: usize) -> usize {
        i * self.side() + j
    }

    #[inline]
    pub fn column_coords(&self, col: usize) -> (usize, usize) {
        (col / self.side(), col % self.side())
    }

    /// Whether the transverse position lies on the lateral boundary `Γ`.
    pub fn is_lateral(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.k || j == self.k
    }

    /// Nodes on `Γ ∪ D_B` carry pinned boundary data.
    pub fn is_pinned(&self, i: usize, j: usize, l: usize) -> bool {
        l == 0 || self.is_lateral(i, j)
    }

    pub fn lattice(&self) -> Lattice3 {
        Lattice3 {
            dims: [self.side(), self.side(), self.levels()],
            origin: [0.0, 0.0, self.geometry.z_bottom],
            spacing: [self.h(), self.h(), self.hz()],
        }
    }

    /// Trapezoid weights over the `z` levels.
    pub fn z_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.levels(), self.hz())
    }
}

/// A real function sampled on a [`Lattice3`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3 {
    pub lattice: Lattice3,
    pub values: Vec<f64>,
}

impl ScalarField3 {
    pub fn filled(lattice: Lattice3, value: f64) -> Self {
        ScalarField3 {
            lattice,
            values: vec![value; lattice.len()],
        }
    }

    pub fn from_fn(lattice: Lattice3, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..lattice.len())
            .map(|idx| {
                let [i, j, l] = lattice.coords(idx);
                f(lattice.point(i, j, l))
            })
            .collect();
        ScalarField3 { lattice, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.values[self.lattice.index(i, j, l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, l: usize, v: f64) {
        let idx = self.lattice.index(i, j, l);
        self.values[idx] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField3 {
            lattice: self.lattice,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Trilinear interpolation; `None` outside the lattice.
    pub fn trilinear(&self, p: [f64; 3]) -> Option<f64> {
        let lat = &self.lattice;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for d in 0..3 {
            let s = (p[d] - lat.origin[d]) / lat.spacing[d];
            let n = lat.dims[d];
            if !(s >= -1e-9 && s <= (n - 1) as f64 + 1e-9) {
                return None;
            }
            if n == 1 {
                base[d] = 0;
                frac[d] = 0.0;
                continue;
            }
            let s = s.clamp(0.0, (n - 1) as f64);
            let b = (s.floor() as usize).min(n - 2);
            base[d] = b;
            frac[d] = s - b as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut ix = [0usize; 3];
            for d in 0..3 {
                let bit = (corner >> d) & 1;
                let n = lat.dims[d];
                ix[d] = if n == 1 { 0 } else { base[d] + bit };
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
            }
            if w != 0.0 {
                acc += w * self.get(ix[0], ix[1], ix[2]);
            }
        }
        Some(acc)
    }
}

/// The semidiscrete unknown: `order` coefficients at every node of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    spec: GridSpec,
    order: usize,
    values: Vec<f64>,
}

impl CoefficientField {
    pub fn zeros(spec: GridSpec, order: usize) -> Self {
        CoefficientField {
            spec,
            order,
            values: vec![0.0; spec.node_count() * order],
        }
    }

    pub fn from_values(spec: GridSpec, order: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.node_count() * order {
            return Err(Error::invalid(format!(
                "coefficient field expects {} values, got {}",
                spec.node_count() * order,
                values.len()
            )));
        }
        Ok(CoefficientField {
            spec,
            order,
            values,
        })
    }

    pub fn from_fn(spec: GridSpec, order: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(spec, order);
        for i in 0..spec.side() {
            for j in 0..spec.side() {
                for l in 0..spec.levels() {
                    for (n, v) in out.node_mut(i, j, l).iter_mut().enumerate() {
                        *v = f(i, j, l, n);
                    }
                }
            }
        }
        out
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, l: usize) -> usize {
        ((self.spec.column_index(i, j)) * self.spec.levels() + l) * self.order
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, l: usize) -> &[f64] {
        let o = self.offset(i, j, l);
        &self.values[o..o + self.order]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize, j: usize, l: usize) -> &mut [f64] {
        let o = self.offset(i, j, l);
        &mut self.values[o..o + self.order]
    }

    /// All levels of the column at `(i, j)`, level-major.
    pub fn column(&self, col: usize) -> &[f64] {
        let len = self.spec.levels() * self.order;
        &self.values[col * len..(col + 1) * len]
    }

    pub fn column_len(&self) -> usize {
        self.spec.levels() * self.order
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &CoefficientField) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn dot(&self, other: &CoefficientField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Zeroes every pinned node.
    pub fn zero_pinned(&mut self) {
        let spec = self.spec;
        for i in 0..spec.side() {
            for j in 0..spec.side() {
                for l in 0..spec.levels() {
                    if spec.is_pinned(i, j, l) {
                        self.node_mut(i, j, l).iter_mut().for_each(|v| *v = 0.0);
                    }
                }
            }
        }
    }

    /// Copies the pinned nodes of `source` into `self`.
    pub fn pin_from(&mut self, source: &CoefficientField) {
        assert_eq!(self.values.len(), source.values.len());
        let spec = self.spec;
        for i in 0..spec.side() {
            for j in 0..spec.side() {
                for l in 0..spec.levels() {
                    if spec.is_pinned(i, j, l) {
                        let o = self.offset(i, j, l);
                        self.values[o..o + self.order]
                            .copy_from_slice(&source.values[o..o + self.order]);
                    }
                }
            }
        }
    }

    /// Component `n` as a scalar field on the grid lattice.
    pub fn component(&self, n: usize) -> ScalarField3 {
        let lat = self.spec.lattice();
        let mut out = ScalarField3::filled(lat, 0.0);
        for i in 0..self.spec.side() {
            for j in 0..self.spec.side() {
                for l in 0..self.spec.levels() {
                    out.set(i, j, l, self.node(i, j, l)[n]);
                }
            }
        }
        out
    }
}

/// Grid axis of a [`CoefficientField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// A 1-D linear difference operator: row `r` lists `(column, weight)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil1d {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Stencil1d {
    /// First derivative on `nodes` points: central inside, second-order
    /// one-sided at both ends. Requires `nodes >= 3`.
    pub fn first_derivative(nodes: usize, step: f64) -> Self {
        assert!(nodes >= 3, "first-derivative stencil needs three nodes");
        let c = 1.0 / (2.0 * step);
        let last = nodes - 1;
        let rows = (0..nodes)
            .map(|r| {
                if r == 0 {
                    vec![(0, -3.0 * c), (1, 4.0 * c), (2, -c)]
                } else if r == last {
                    vec![(last, 3.0 * c), (last - 1, -4.0 * c), (last - 2, c)]
                } else {
                    vec![(r - 1, -c), (r + 1, c)]
                }
            })
            .collect();
        Stencil1d { rows }
    }

    /// Second derivative: central inside; four-point second-order one-sided at
    /// the ends when `nodes >= 4`, otherwise the three-point stencil.
    pub fn second_derivative(nodes: usize, step: f64) -> Self {
        assert!(nodes >= 3, "second-derivative stencil needs three nodes");
        let c = 1.0 / (step * step);
        let last = nodes - 1;
        let rows = (0..nodes)
            .map(|r| {
                if r == 0 {
                    if nodes >= 4 {
                        vec![(0, 2.0 * c), (1, -5.0 * c), (2, 4.0 * c), (3, -c)]
                    } else {
                        vec![(0, c), (1, -2.0 * c), (2, c)]
                    }
                } else if r == last {
                    if nodes >= 4 {
                        vec![(last, 2.0 * c), (last - 1, -5.0 * c), (last - 2, 4.0 * c), (last - 3, -c)]
                    } else {
                        vec![(last, c), (last - 1, -2.0 * c), (last - 2, c)]
                    }
                } else {
                    vec![(r - 1, c), (r, -2.0 * c), (r + 1, c)]
                }
            })
            .collect();
        Stencil1d { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    /// Applies the operator to a plain sequence.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, w)| w * input[c]).sum())
            .collect()
    }

    /// Applies the operator along `axis` of a coefficient field.
    pub fn apply_field(&self, field: &CoefficientField, axis: Axis) -> CoefficientField {
        let mut out = CoefficientField::zeros(field.spec, field.order);
        self.accumulate(field, axis, &mut out, false);
        out
    }

    /// Applies the transpose of the operator along `axis`.
    pub fn apply_field_transpose(&self, field: &CoefficientField, axis: Axis) -> CoefficientField {
        let mut out = CoefficientField::zeros(field.spec, field.order);
        self.accumulate(field, axis, &mut out, true);
        out
    }

    /// `out += A·field` (or `Aᵀ·field`) along `axis`.
    pub fn accumulate(&self, field: &CoefficientField, axis: Axis, out: &mut CoefficientField, transpose: bool) {
        let spec = field.spec;
        let order = field.order;
        let stride = match axis {
            Axis::X => spec.side() * spec.levels() * order,
            Axis::Y => spec.levels() * order,
            Axis::Z => order,
        };
        let len = match axis {
            Axis::X | Axis::Y => spec.side(),
            Axis::Z => spec.levels(),
        };
        assert_eq!(len, self.rows.len(), "stencil length does not match axis");
        for i in 0..spec.side() {
            for j in 0..spec.side() {
                for l in 0..spec.levels() {
                    let pos = match axis {
                        Axis::X => i,
                        Axis::Y => j,
                        Axis::Z => l,
                    };
                    let base = field.offset(i, j, l) - pos * stride;
                    let here = field.offset(i, j, l);
                    for &(c, w) in &self.rows[pos] {
                        let other = base + c * stride;
                        if transpose {
                            for n in 0..order {
                                out.values[other + n] += w * field.values[here + n];
                            }
                        } else {
                            for n in 0..order {
                                out.values[here + n] += w * field.values[other + n];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Partial finite differences and discrete norms on a fixed grid.
#[derive(Debug, Clone)]
pub struct DifferenceOps {
    pub spec: GridSpec,
    pub dx: Stencil1d,
    pub dy: Stencil1d,
    pub dz: Stencil1d,
    pub dzz: Stencil1d,
    /// Quadrature weight of every node: `h² · w_z(l)`, indexed by level.
    pub level_weights: Vec<f64>,
}

impl DifferenceOps {
    pub fn new(spec: GridSpec) -> Self {
        let h2 = spec.h() * spec.h();
        DifferenceOps {
            spec,
            dx: Stencil1d::first_derivative(spec.side(), spec.h()),
            dy: Stencil1d::first_derivative(spec.side(), spec.h()),
            dz: Stencil1d::first_derivative(spec.levels(), spec.hz()),
            dzz: Stencil1d::second_derivative(spec.levels(), spec.hz()),
            level_weights: spec.z_weights().into_iter().map(|w| w * h2).collect(),
        }
    }

    pub fn ddx(&self, field: &CoefficientField) -> CoefficientField {
        self.dx.apply_field(field, Axis::X)
    }

    pub fn ddy(&self, field: &CoefficientField) -> CoefficientField {
        self.dy.apply_field(field, Axis::Y)
    }

    pub fn ddz(&self, field: &CoefficientField) -> CoefficientField {
        self.dz.apply_field(field, Axis::Z)
    }

    pub fn d2dz2(&self, field: &CoefficientField) -> CoefficientField {
        self.dzz.apply_field(field, Axis::Z)
    }

    /// `Σ_{i,j} h² Σ_l w_l Σ_n Q_n²`.
    pub fn l2_squared(&self, field: &CoefficientField) -> f64 {
        let order = field.order;
        let levels = self.spec.levels();
        let mut acc = 0.0;
        for col in 0..self.spec.columns() {
            let column = field.column(col);
            for l in 0..levels {
                let s: f64 = column[l * order..(l + 1) * order].iter().map(|v| v * v).sum();
                acc += self.level_weights[l] * s;
            }
        }
        acc
    }

    /// Multiplies every node by its quadrature weight.
    pub fn weight_in_place(&self, field: &mut CoefficientField) {
        let order = field.order;
        let levels = self.spec.levels();
        let len = levels * order;
        for col in 0..self.spec.columns() {
            for l in 0..levels {
                let w = self.level_weights[l];
                let o = col * len + l * order;
                field.values[o..o + order].iter_mut().for_each(|v| *v *= w);
            }
        }
    }

    pub fn norm_l2h(&self, field: &CoefficientField) -> f64 {
        self.l2_squared(field).sqrt()
    }

    pub fn norm_h1h(&self, field: &CoefficientField) -> f64 {
        (self.l2_squared(&self.ddx(field)) + self.l2_squared(&self.ddy(field)) + self.l2_squared(field)).sqrt()
    }

    pub fn h2_squared(&self, field: &CoefficientField) -> f64 {
        self.l2_squared(&self.ddx(field))
            + self.l2_squared(&self.ddy(field))
            + self.l2_squared(field)
            + self.l2_squared(&self.ddz(field))
            + self.l2_squared(&self.d2dz2(field))
    }

    pub fn norm_h2h(&self, field: &CoefficientField) -> f64 {
        self.h2_squared(field).sqrt()
    }

    /// Gradient of `‖Q‖²_{H2h}` with respect to every nodal value.
    pub fn h2_squared_gradient(&self, field: &CoefficientField) -> CoefficientField {
        let mut grad = field.clone();
        self.weight_in_place(&mut grad);
        let ops: [(&Stencil1d, Axis); 4] = [
            (&self.dx, Axis::X),
            (&self.dy, Axis::Y),
            (&self.dz, Axis::Z),
            (&self.dzz, Axis::Z),
        ];
        for (op, axis) in ops {
            let mut d = op.apply_field(field, axis);
            self.weight_in_place(&mut d);
            op.accumulate(&d, axis, &mut grad, true);
        }
        grad.values.iter_mut().for_each(|v| *v *= 2.0);
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(k: usize) -> GridSpec {
        GridSpec::new(Geometry::default(), k, k).unwrap()
    }

    fn field(spec: GridSpec, f: impl Fn(f64, f64, f64) -> f64) -> CoefficientField {
        CoefficientField::from_fn(spec, 1, |i, j, l, _| f(spec.x(i), spec.y(j), spec.z(l)))
    }

    #[test]
    fn derivative_exact_on_affine_and_quadratic() {
        let s = spec(10);
        let ops = DifferenceOps::new(s);
        let dx = ops.ddx(&field(s, |x, _, _| x));
        assert!(dx.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let dx2 = ops.ddx(&field(s, |x, _, _| x * x));
        for i in 0..=10 {
            assert!((dx2.node(i, 3, 4)[0] - 2.0 * s.x(i)).abs() < 1e-12);
        }
        let dy = ops.ddy(&field(s, |_, y, _| y * y));
        for j in 0..=10 {
            assert!((dy.node(5, j, 2)[0] - 2.0 * s.y(j)).abs() < 1e-12);
        }
        let dy1 = ops.ddy(&field(s, |_, y, _| y));
        assert!(dy1.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn derivative_error_within_taylor_bound() {
        let pi = std::f64::consts::PI;
        let s = spec(10);
        let ops = DifferenceOps::new(s);
        let h = s.h();
        let bound = pi.powi(3) * h * h / 6.0;
        let dx = ops.ddx(&field(s, |x, _, _| (pi * x).sin()));
        let dy = ops.ddy(&field(s, |_, y, _| (pi * y).sin()));
        for i in 1..10 {
            let exact = pi * (pi * s.x(i)).cos();
            assert!((dx.node(i, 4, 4)[0] - exact).abs() < bound);
            assert!((dy.node(4, i, 4)[0] - exact).abs() < bound);
        }
    }

    #[test]
    fn norms_of_zero_and_constant() {
        let s = spec(6);
        let ops = DifferenceOps::new(s);
        let zero = CoefficientField::zeros(s, 3);
        assert_eq!(ops.norm_l2h(&zero), 0.0);
        assert_eq!(ops.norm_h1h(&zero), 0.0);
        assert_eq!(ops.norm_h2h(&zero), 0.0);

        let c = 1.7;
        let constant = CoefficientField::from_fn(s, 1, |_, _, _, _| c);
        // (k+1)² columns of area h² each, depth ρ.
        let area = ((s.k + 1) as f64 * s.h()).powi(2);
        let expected = c * (s.geometry.depth * area).sqrt();
        assert!((ops.norm_l2h(&constant) - expected).abs() < 1e-12);
        assert!((ops.norm_h1h(&constant) - expected).abs() < 1e-12);
    }

    #[test]
    fn h2_norm_of_z_squared_matches_closed_form() {
        let s = spec(8);
        let ops = DifferenceOps::new(s);
        let q = field(s, |_, _, z| z * z);
        let dzz = ops.d2dz2(&q);
        assert!(dzz.values().iter().all(|v| (v - 2.0).abs() < 1e-9));
        // Closed form with trapezoid in z: transverse derivatives vanish, ∂z Q = 2z exactly.
        let hz = s.hz();
        let w = s.z_weights();
        let area = ((s.k + 1) as f64 * s.h()).powi(2);
        let mut expected = 0.0;
        for l in 0..s.levels() {
            let z = s.z(l);
            let _ = hz;
            expected += w[l] * (z.powi(4) + 4.0 * z * z + 4.0);
        }
        expected *= area;
        assert!((ops.norm_h2h(&q) - expected.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn h2_gradient_matches_dense_oracle() {
        let s = GridSpec::new(Geometry::default(), 3, 4).unwrap();
        let ops = DifferenceOps::new(s);
        let q = CoefficientField::from_fn(s, 2, |i, j, l, n| ((i * 7 + j * 3 + l * 5 + n) as f64 * 0.37).sin());
        let grad = ops.h2_squared_gradient(&q);
        let eps = 1e-6;
        for idx in (0..q.values().len()).step_by(7) {
            let mut plus = q.clone();
            plus.values_mut()[idx] += eps;
            let mut minus = q.clone();
            minus.values_mut()[idx] -= eps;
            let fd = (ops.h2_squared(&plus) - ops.h2_squared(&minus)) / (2.0 * eps);
            assert!((fd - grad.values()[idx]).abs() < 1e-6 * (1.0 + fd.abs()), "{idx}");
        }
    }

    #[test]
    fn pinned_layout() {
        let s = spec(4);
        assert!(s.is_pinned(0, 2, 3));
        assert!(s.is_pinned(2, 2, 0));
        assert!(!s.is_pinned(2, 2, 4));
        assert!(!s.is_pinned(1, 3, 2));
    }

    #[test]
    fn trilinear_reproduces_affine() {
        let lat = Lattice3 {
            dims: [4, 5, 6],
            origin: [-1.0, 0.0, 2.0],
            spacing: [0.5, 0.25, 0.2],
        };
        let f = ScalarField3::from_fn(lat, |p| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2]);
        let p = [-0.3, 0.61, 2.77];
        let v = f.trilinear(p).unwrap();
        assert!((v - (1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2])).abs() < 1e-12);
        assert!(f.trilinear([5.0, 0.0, 2.0]).is_none());
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpec::new(Geometry::default(), 1, 4).is_err());
        assert!(GridSpec::new(Geometry::default(), 100, 4).is_err());
        let g = Geometry {
            source_z: 0.5,
            ..Geometry::default()
        };
        assert!(GridSpec::new(g, 4, 4).is_err());
    }
}
