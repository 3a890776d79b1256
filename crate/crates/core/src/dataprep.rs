//! From boundary travel times to the inputs of the inversion: tangential
//! derivatives of the data, the boundary values of `u = τ_z²`, and their
//! coefficients in the special basis.

use log::warn;

use crate::basis::{AlphaQuadrature, BasisSet};
use crate::error::{Error, Result};
use crate::forward::{Face, FaceLattice, FaceSamples, TravelTimeData};
use crate::grid::{CoefficientField, Geometry, GridSpec, Stencil1d};

/// Trailing-coefficient energy above which a projection is reported as
/// under-resolved.
pub const TRUNCATION_WARNING: f64 = 0.5;

/// `u₀(x, α) = (B − z0)² / ((x − α)² + (y − d)² + (B − z0)²)`, the value of
/// `τ_z²` on the bottom face where the medium below is homogeneous.
pub fn u0_exact(x: f64, y: f64, alpha: f64, geometry: &Geometry) -> f64 {
    let dz2 = (geometry.z_bottom - geometry.source_z).powi(2);
    dz2 / ((x - alpha).powi(2) + (y - geometry.source_y).powi(2) + dz2)
}

/// Derivatives of face samples along the two face coordinates.
pub fn face_gradient(samples: &FaceSamples) -> (Vec<f64>, Vec<f64>) {
    let lat = &samples.lattice;
    let du = Stencil1d::first_derivative(lat.nu, lat.du);
    let dv = Stencil1d::first_derivative(lat.nv, lat.dv);
    let mut along_u = vec![0.0; lat.len()];
    let mut along_v = vec![0.0; lat.len()];
    for iv in 0..lat.nv {
        let row = &samples.values[iv * lat.nu..(iv + 1) * lat.nu];
        along_u[iv * lat.nu..(iv + 1) * lat.nu].copy_from_slice(&du.apply(row));
    }
    let mut column = vec![0.0; lat.nv];
    for iu in 0..lat.nu {
        for (iv, c) in column.iter_mut().enumerate() {
            *c = samples.values[lat.index(iu, iv)];
        }
        for (iv, d) in dv.apply(&column).into_iter().enumerate() {
            along_v[lat.index(iu, iv)] = d;
        }
    }
    (along_u, along_v)
}

/// Tangential derivatives for one source: `g_x`, `g_y` on the top face and
/// `g_z` on the four lateral faces, on the detector lattices.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDerivatives {
    pub top: FaceLattice,
    pub top_dx: Vec<f64>,
    pub top_dy: Vec<f64>,
    /// Indexed by [`Face::position`]; empty for the top and bottom faces.
    pub lateral: Vec<(FaceLattice, Vec<f64>)>,
}

pub fn tangential_derivatives(data: &TravelTimeData) -> Vec<SourceDerivatives> {
    data.records
        .iter()
        .map(|record| {
            let top = record.face(Face::Top);
            let (top_dx, top_dy) = face_gradient(top);
            let lateral = Face::ALL
                .into_iter()
                .map(|face| {
                    let samples = record.face(face);
                    if face.is_lateral() {
                        (samples.lattice, face_gradient(samples).1)
                    } else {
                        (samples.lattice, Vec::new())
                    }
                })
                .collect();
            SourceDerivatives {
                top: top.lattice,
                top_dx,
                top_dy,
                lateral,
            }
        })
        .collect()
}

/// Lateral face of a transverse boundary column and its face coordinate.
fn lateral_face(grid: &GridSpec, i: usize, j: usize) -> (Face, f64) {
    let k = grid.k;
    if i == 0 {
        (Face::XMin, grid.y(j))
    } else if i == k {
        (Face::XMax, grid.y(j))
    } else if j == 0 {
        (Face::YMin, grid.x(i))
    } else {
        (Face::YMax, grid.x(i))
    }
}

/// Coefficients of the boundary data in the special basis.
#[derive(Debug, Clone)]
pub struct ProjectedData {
    pub grid: GridSpec,
    pub basis: BasisSet,
    /// Trapezoid rule over the source positions.
    pub quadrature: AlphaQuadrature,
    /// Coefficients of `g`, `g_x`, `g_y` on the top face, `((j·(k+1) + i)·N + n)`.
    pub g_top: Vec<f64>,
    pub gx_top: Vec<f64>,
    pub gy_top: Vec<f64>,
    /// Coefficients of `g̃`; meaningful on pinned nodes only, zero elsewhere.
    pub gtilde: CoefficientField,
}

impl ProjectedData {
    pub fn order(&self) -> usize {
        self.basis.order()
    }

    #[inline]
    pub fn top_offset(&self, i: usize, j: usize) -> usize {
        (j * (self.grid.k + 1) + i) * self.order()
    }

    pub fn gx_top_at(&self, i: usize, j: usize) -> &[f64] {
        let o = self.top_offset(i, j);
        &self.gx_top[o..o + self.order()]
    }

    pub fn gy_top_at(&self, i: usize, j: usize) -> &[f64] {
        let o = self.top_offset(i, j);
        &self.gy_top[o..o + self.order()]
    }

    pub fn is_finite(&self) -> bool {
        self.g_top.iter().chain(&self.gx_top).chain(&self.gy_top).all(|v| v.is_finite()) && self.gtilde.is_finite()
    }
}

/// Projects per-α samples onto the basis with the trapezoid rule.
pub fn project_onto_basis(quadrature: &AlphaQuadrature, samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() != quadrature.len() {
        return Err(Error::invalid(format!(
            "{} samples for a quadrature with {} nodes",
            samples.len(),
            quadrature.len()
        )));
    }
    Ok(quadrature.project(samples))
}

fn trailing_energy(c: &[f64]) -> f64 {
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        0.0
    } else {
        c[c.len() - 1].abs() / norm
    }
}

/// Builds all coefficient fields needed by the inversion on `grid`.
///
/// `g̃` is `g_z²` from the lateral faces on `Γ` and the analytic `u₀` on the
/// bottom face (which takes priority on their common edge).
pub fn prepare(data: &TravelTimeData, grid: GridSpec, order: usize) -> Result<ProjectedData> {
    let g = data.geometry;
    if g != grid.geometry {
        return Err(Error::invalid("travel-time data and inversion grid use different geometries"));
    }
    let count = data.source_line.count;
    if count < order + 1 {
        return Err(Error::invalid(format!("{count} sources cannot resolve {order} basis functions")));
    }
    let basis = BasisSet::build(order, g.alpha_min, g.alpha_max)?;
    let quadrature = AlphaQuadrature::uniform(&basis, count)?;
    let derivs = tangential_derivatives(data);
    let k = grid.k;
    let n = order;
    let mut flagged = 0usize;
    let mut project = |samples: &[f64]| -> Vec<f64> {
        let c = quadrature.project(samples);
        if trailing_energy(&c) > TRUNCATION_WARNING {
            flagged += 1;
        }
        c
    };

    let top_nodes = (k + 1) * (k + 1);
    let mut g_top = vec![0.0; top_nodes * n];
    let mut gx_top = vec![0.0; top_nodes * n];
    let mut gy_top = vec![0.0; top_nodes * n];
    let mut samples = vec![0.0; count];
    for j in 0..=k {
        for i in 0..=k {
            let (x, y) = (grid.x(i), grid.y(j));
            let o = (j * (k + 1) + i) * n;
            for (s, rec) in data.records.iter().enumerate() {
                let top = rec.face(Face::Top);
                samples[s] = top.lattice.bilinear(&top.values, x, y);
            }
            g_top[o..o + n].copy_from_slice(&project(&samples));
            for (s, d) in derivs.iter().enumerate() {
                samples[s] = d.top.bilinear(&d.top_dx, x, y);
            }
            gx_top[o..o + n].copy_from_slice(&project(&samples));
            for (s, d) in derivs.iter().enumerate() {
                samples[s] = d.top.bilinear(&d.top_dy, x, y);
            }
            gy_top[o..o + n].copy_from_slice(&project(&samples));
        }
    }

    let mut gtilde = CoefficientField::zeros(grid, n);
    for j in 0..=k {
        for i in 0..=k {
            for l in 0..grid.levels() {
                if !grid.is_pinned(i, j, l) {
                    continue;
                }
                let (x, y) = (grid.x(i), grid.y(j));
                if l == 0 {
                    for (s, al) in quadrature.nodes.iter().enumerate() {
                        samples[s] = u0_exact(x, y, *al, &g);
                    }
                } else {
                    let (face, u) = lateral_face(&grid, i, j);
                    let z = grid.z(l);
                    for (s, d) in derivs.iter().enumerate() {
                        let (lat, gz) = &d.lateral[face.position()];
                        let v = lat.bilinear(gz, u, z);
                        samples[s] = v * v;
                    }
                }
                gtilde.node_mut(i, j, l).copy_from_slice(&project(&samples));
            }
        }
    }
    if flagged > 0 {
        warn!(
            "{flagged} projections have trailing-coefficient energy above {TRUNCATION_WARNING}; \
             the truncation order {order} may be too small for the data"
        );
    }
    let out = ProjectedData {
        grid,
        basis,
        quadrature,
        g_top,
        gx_top,
        gy_top,
        gtilde,
    };
    if !out.is_finite() {
        return Err(Error::invalid("projected data contain non-finite values"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{extract_boundary, SourceLine};
    use crate::grid::ScalarField3;

    fn dist(p: [f64; 3], q: [f64; 3]) -> f64 {
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    }

    pub(crate) fn analytic_data(count: usize) -> TravelTimeData {
        let g = Geometry::default();
        let sources = SourceLine::new(&g, count).unwrap();
        crate::forward::analytic_homogeneous(&g, &sources, 0.05).unwrap()
    }

    #[test]
    fn u0_examples() {
        let g = Geometry::default();
        assert_eq!(u0_exact(0.3, 0.5, 0.3, &g), 1.0);
        assert!((u0_exact(1.3, 0.5, 0.3, &g) - 0.5).abs() < 1e-15);
        assert!((u0_exact(1.0, 0.0, -2.0, &g) - 1.0 / 10.25).abs() < 1e-15);
        for (x, y, a) in [(0.0, 0.0, 3.0), (0.5, 1.0, -2.0), (0.2, 0.7, 0.4)] {
            let v = u0_exact(x, y, a, &g);
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn constant_face_has_zero_gradient() {
        let g = Geometry::default();
        let lattice = FaceLattice::new(Face::Top, &g, 0.05).unwrap();
        let samples = FaceSamples {
            face: Face::Top,
            lattice,
            values: vec![2.5; lattice.len()],
        };
        let (du, dv) = face_gradient(&samples);
        assert!(du.iter().chain(&dv).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn analytic_top_derivatives() {
        let data = analytic_data(11);
        let derivs = tangential_derivatives(&data);
        let g = data.geometry;
        let mut worst: f64 = 0.0;
        for (s, d) in derivs.iter().enumerate() {
            let src = data.source_line.position(s);
            for iv in 0..d.top.nv {
                for iu in 0..d.top.nu {
                    let p = Face::Top.point(&g, d.top.u(iu), d.top.v(iv));
                    let r = dist(p, src);
                    let exact = (p[0] - src[0]) / r;
                    worst = worst.max((d.top_dx[d.top.index(iu, iv)] - exact).abs());
                }
            }
        }
        // Analytic data: only the O(h²) differencing error remains.
        assert!(worst < 2e-3, "{worst}");
    }

    #[test]
    fn projection_is_linear_and_recovers_basis_functions() {
        let basis = BasisSet::build(6, -2.0, 3.0).unwrap();
        let q = AlphaQuadrature::uniform(&basis, 101).unwrap();
        let f: Vec<f64> = q.phi.iter().map(|p| p[2]).collect();
        let c = project_onto_basis(&q, &f).unwrap();
        // Trapezoid cross-talk grows with n (e^{2α} weight at b = 3); frozen values.
        let measured = [2.570e-3, 3.435e-3, 1.004365, 5.717e-3, 7.449e-3, 9.475e-3];
        for (v, m) in c.iter().zip(measured) {
            assert!((v - m).abs() < 1e-5, "{v} vs {m}");
        }
        assert!((c[2] - 1.0).abs() < 5e-3);
        assert!(project_onto_basis(&q, &vec![0.0; 101]).unwrap().iter().all(|v| *v == 0.0));
        let a: Vec<f64> = q.nodes.iter().map(|x| x.sin()).collect();
        let b: Vec<f64> = q.nodes.iter().map(|x| x * x - 1.0).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (ca, cb, cab) = (
            project_onto_basis(&q, &a).unwrap(),
            project_onto_basis(&q, &b).unwrap(),
            project_onto_basis(&q, &ab).unwrap(),
        );
        for n in 0..6 {
            assert!((ca[n] + cb[n] - cab[n]).abs() < 1e-12);
        }
        assert!(project_onto_basis(&q, &[1.0; 5]).is_err());
    }

    #[test]
    fn prepare_pins_bottom_with_u0() {
        let data = analytic_data(101);
        let grid = GridSpec::from_step(data.geometry, 0.1).unwrap();
        let prep = prepare(&data, grid, 6).unwrap();
        let g = data.geometry;
        let q = &prep.quadrature;
        let mut worst: f64 = 0.0;
        for j in 0..=grid.k {
            for i in 0..=grid.k {
                let c = prep.gtilde.node(i, j, 0);
                let (num, den) = q.nodes.iter().enumerate().fold((0.0, 0.0), |(nu, de), (s, al)| {
                    let f = u0_exact(grid.x(i), grid.y(j), *al, &g);
                    let e = q.synthesize_at(c, s) - f;
                    (nu + q.weights[s] * e * e, de + q.weights[s] * f * f)
                });
                worst = worst.max((num / den).sqrt());
            }
        }
        // Truncation of u₀ to six terms: worst relative L₂(a,b) error over the
        // bottom face, measured 0.1185 at (0.2, 0.5).
        assert!((worst - 0.1185).abs() < 2e-3, "{worst}");
        // Interior nodes carry no boundary data.
        assert!(prep.gtilde.node(3, 4, 5).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn u0_truncation_error_decreases_with_order() {
        let g = Geometry::default();
        let mut errs = Vec::new();
        for order in [6, 8, 10] {
            let basis = BasisSet::build(order, -2.0, 3.0).unwrap();
            let q = AlphaQuadrature::uniform(&basis, 101).unwrap();
            let f: Vec<f64> = q.nodes.iter().map(|al| u0_exact(0.3, 0.5, *al, &g)).collect();
            let c = project_onto_basis(&q, &f).unwrap();
            let (num, den) = (0..q.len()).fold((0.0, 0.0), |(nu, de), s| {
                let e = q.synthesize_at(&c, s) - f[s];
                (nu + q.weights[s] * e * e, de + q.weights[s] * f[s] * f[s])
            });
            // Bessel: the projection never has more energy than the data.
            let energy: f64 = c.iter().map(|v| v * v).sum();
            assert!(energy <= den + 1e-2);
            errs.push((num / den).sqrt());
        }
        // Measured 0.117, 0.053, 0.024.
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(errs[2] < 0.03);
    }

    #[test]
    fn lateral_gz_squared_matches_u_on_the_bottom_edge() {
        // u = τ_z² = ((z − z0)/r)² on Γ; compare at z = B against u₀.
        let data = analytic_data(5);
        let derivs = tangential_derivatives(&data);
        let g = data.geometry;
        for (s, d) in derivs.iter().enumerate() {
            let alpha = data.source_line.alpha(s);
            let (lat, gz) = &d.lateral[Face::XMin.position()];
            for iu in 0..lat.nu {
                let v = gz[lat.index(iu, 0)];
                let u0 = u0_exact(0.0, lat.u(iu), alpha, &g);
                assert!((v * v - u0).abs() / u0 < 0.02);
            }
        }
    }

    #[test]
    fn extracted_data_shape() {
        // Smoke test on marched data: finite coefficients on an h = 1/10 grid.
        let g = Geometry::default();
        let sources = SourceLine::new(&g, 11).unwrap();
        let lat = crate::forward::extended_lattice(&g, 0.1, 0.1).unwrap();
        let m = ScalarField3::filled(lat, 1.0);
        let records = (0..sources.count)
            .map(|s| {
                let tau = crate::forward::fast_march(&m, sources.position(s), 0.5).unwrap();
                extract_boundary(&tau, &g, 0.05).unwrap()
            })
            .collect();
        let data = TravelTimeData {
            geometry: g,
            source_line: sources,
            detector_step: 0.05,
            records,
        };
        let prep = prepare(&data, GridSpec::from_step(g, 0.1).unwrap(), 6).unwrap();
        assert!(prep.is_finite());
        assert_eq!(prep.gx_top.len(), 121 * 6);
        assert!(prepare(&data, GridSpec::from_step(g, 0.1).unwrap(), 11).is_err());
    }
}
