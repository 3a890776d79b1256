//! Synthetic travel-time data: eikonal solves for every source on the line
//! `{(α, d, z0) : α ∈ [a, b]}` and their traces on the boundary of the box.

mod boundary;
mod fmm;
mod noise;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use boundary::{extract_boundary, BoundaryRecord, Face, FaceLattice, FaceSamples};
pub use fmm::{fast_march, fast_march_traced};
pub use noise::{add_noise, NoiseMode};

use crate::error::{Error, Result};
use crate::grid::{Geometry, Lattice3, ScalarField3};

/// Padding of the marching box beyond the domain and the source line.
pub const DEFAULT_PAD: f64 = 0.1;

/// Radius of the exactly initialized ball around each source, as a fraction
/// of the source-line depth `B - z0`. Below the domain `m = 1` and everywhere
/// `m >= 1`, so straight-line distances there are exact arrival times.
pub const INIT_RADIUS_FRACTION: f64 = 0.5;

/// Exactly initialized radius for sources of `geometry`.
pub fn init_radius(geometry: &Geometry) -> f64 {
    INIT_RADIUS_FRACTION * (geometry.z_bottom - geometry.source_z)
}

/// Uniformly spaced sources on the source line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceLine {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub z0: f64,
    pub count: usize,
}

impl SourceLine {
    pub fn new(geometry: &Geometry, count: usize) -> Result<Self> {
        geometry.validate()?;
        if count < 2 {
            return Err(Error::invalid("at least two sources are required"));
        }
        Ok(SourceLine {
            a: geometry.alpha_min,
            b: geometry.alpha_max,
            d: geometry.source_y,
            z0: geometry.source_z,
            count,
        })
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / (self.count - 1) as f64
    }

    pub fn alpha(&self, s: usize) -> f64 {
        if s + 1 == self.count {
            self.b
        } else {
            self.a + self.step() * s as f64
        }
    }

    pub fn alphas(&self) -> Vec<f64> {
        (0..self.count).map(|s| self.alpha(s)).collect()
    }

    pub fn position(&self, s: usize) -> [f64; 3] {
        [self.alpha(s), self.d, self.z0]
    }
}

/// Boundary arrival times for every source.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeData {
    pub geometry: Geometry,
    pub source_line: SourceLine,
    pub detector_step: f64,
    /// `records[s]` belongs to source `s`.
    pub records: Vec<BoundaryRecord>,
}

impl TravelTimeData {
    pub fn max_abs(&self) -> f64 {
        self.records.iter().fold(0.0, |acc, r| acc.max(r.max_abs()))
    }

    pub fn min(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| r.faces.iter().flat_map(|f| f.values.iter()))
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

fn aligned_below(lo: f64, anchor: f64, step: f64) -> f64 {
    anchor - ((anchor - lo) / step - 1e-9).ceil() * step
}

fn aligned_count(start: f64, hi: f64, step: f64) -> usize {
    ((hi - start) / step - 1e-9).ceil() as usize + 1
}

/// Marching box covering the domain, the source segment and `pad` beyond
/// both, with lattice planes through `x = 0`, `y = 0` and `z = B`.
pub fn extended_lattice(geometry: &Geometry, step: f64, pad: f64) -> Result<Lattice3> {
    geometry.validate()?;
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::invalid(format!("marching step {step} must lie in (0, 1)")));
    }
    if !(pad >= 0.0) {
        return Err(Error::invalid("padding must be non-negative"));
    }
    let xlo = geometry.alpha_min.min(0.0) - pad;
    let xhi = geometry.alpha_max.max(1.0) + pad;
    let ylo = geometry.source_y.min(0.0) - pad;
    let yhi = geometry.source_y.max(1.0) + pad;
    let zlo = geometry.source_z - pad;
    let zhi = geometry.z_top() + pad;
    let ox = aligned_below(xlo, 0.0, step);
    let oy = aligned_below(ylo, 0.0, step);
    let oz = aligned_below(zlo, geometry.z_bottom, step);
    Ok(Lattice3 {
        dims: [
            aligned_count(ox, xhi, step),
            aligned_count(oy, yhi, step),
            aligned_count(oz, zhi, step),
        ],
        origin: [ox, oy, oz],
        spacing: [step; 3],
    })
}

/// Exact data for the homogeneous medium `m ≡ 1`: straight-line distances.
pub fn analytic_homogeneous(geometry: &Geometry, sources: &SourceLine, detector_step: f64) -> Result<TravelTimeData> {
    let records = (0..sources.count)
        .map(|s| {
            let src = sources.position(s);
            let faces = Face::ALL
                .into_iter()
                .map(|face| {
                    let lattice = FaceLattice::new(face, geometry, detector_step)?;
                    let mut values = Vec::with_capacity(lattice.len());
                    for iv in 0..lattice.nv {
                        for iu in 0..lattice.nu {
                            let p = face.point(geometry, lattice.u(iu), lattice.v(iv));
                            values.push(((p[0] - src[0]).powi(2) + (p[1] - src[1]).powi(2) + (p[2] - src[2]).powi(2)).sqrt());
                        }
                    }
                    Ok(FaceSamples { face, lattice, values })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(BoundaryRecord { faces })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TravelTimeData {
        geometry: *geometry,
        source_line: *sources,
        detector_step,
        records,
    })
}

/// Solves the eikonal equation for every source and records the arrival
/// times on the six faces. Sources are processed in parallel; the result
/// does not depend on the thread count.
pub fn simulate(m: &ScalarField3, geometry: &Geometry, sources: &SourceLine, detector_step: f64) -> Result<TravelTimeData> {
    if !(m.min() >= 1.0 - 1e-12) {
        return Err(Error::invalid("the medium must satisfy m >= 1"));
    }
    let radius = init_radius(geometry);
    let records = (0..sources.count)
        .into_par_iter()
        .map(|s| {
            let tau = fast_march(m, sources.position(s), radius)?;
            extract_boundary(&tau, geometry, detector_step)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TravelTimeData {
        geometry: *geometry,
        source_line: *sources,
        detector_step,
        records,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Analytic homogeneous data on a coarse detector lattice.
    pub(crate) fn tiny_data() -> TravelTimeData {
        let geometry = Geometry::default();
        let sources = SourceLine::new(&geometry, 5).unwrap();
        analytic_homogeneous(&geometry, &sources, 0.25).unwrap()
    }

    pub(crate) fn dist(p: [f64; 3], q: [f64; 3]) -> f64 {
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    }

    /// Max relative error of the marched distance over the closed domain.
    fn homogeneous_error(step: f64, m_value: f64) -> f64 {
        let g = Geometry::default();
        let lat = extended_lattice(&g, step, DEFAULT_PAD).unwrap();
        let m = ScalarField3::filled(lat, m_value);
        let src = [0.5, 0.5, -1.0];
        let tau = fast_march(&m, src, init_radius(&g)).unwrap();
        let mut err: f64 = 0.0;
        for idx in 0..lat.len() {
            let [i, j, l] = lat.coords(idx);
            let p = lat.point(i, j, l);
            let inside = (-1e-9..=1.0 + 1e-9).contains(&p[0])
                && (-1e-9..=1.0 + 1e-9).contains(&p[1])
                && (g.z_bottom - 1e-9..=g.z_top() + 1e-9).contains(&p[2]);
            if inside {
                let exact = m_value.sqrt() * dist(p, src);
                err = err.max((tau.values[idx] - exact).abs() / exact);
            }
        }
        err
    }

    #[test]
    fn extended_lattice_is_aligned_and_covers_sources() {
        let g = Geometry::default();
        let lat = extended_lattice(&g, 1.0 / 30.0, DEFAULT_PAD).unwrap();
        let lo = lat.origin;
        let hi = lat.upper();
        assert!(lo[0] <= -2.1 + 1e-9 && hi[0] >= 3.1 - 1e-9);
        assert!(lo[1] <= -0.1 + 1e-9 && hi[1] >= 1.1 - 1e-9);
        assert!(lo[2] <= -1.1 + 1e-9 && hi[2] >= 1.1 - 1e-9);
        for d in 0..3 {
            let s = -lo[d] / lat.spacing[d];
            assert!((s - s.round()).abs() < 1e-9);
        }
        assert_eq!(lat.dims, [157, 37, 67]);
    }

    #[test]
    fn homogeneous_medium_is_accurate() {
        let e1 = homogeneous_error(1.0 / 30.0, 1.0);
        assert!(e1 < 0.02, "relative error {e1}");
        let e4 = homogeneous_error(1.0 / 30.0, 4.0);
        assert!((e4 - e1).abs() < 1e-12, "{e1} vs {e4}");
        // Measured 0.0119 at step 1/30.
        assert!((e1 - 0.0119).abs() < 5e-4, "{e1}");
    }

    #[test]
    fn simulate_produces_positive_causal_data() {
        let g = Geometry::default();
        let sources = SourceLine::new(&g, 3).unwrap();
        let lat = extended_lattice(&g, 0.1, DEFAULT_PAD).unwrap();
        let m = ScalarField3::from_fn(lat, |p| if (p[0] - 0.5).abs() < 0.2 && (p[2] - 0.5).abs() < 0.2 { 2.25 } else { 1.0 });
        let data = simulate(&m, &g, &sources, 0.05).unwrap();
        assert_eq!(data.records.len(), 3);
        for (s, rec) in data.records.iter().enumerate() {
            let src = sources.position(s);
            for face in &rec.faces {
                for iv in 0..face.lattice.nv {
                    for iu in 0..face.lattice.nu {
                        let p = face.face.point(&g, face.lattice.u(iu), face.lattice.v(iv));
                        let t = face.values[face.lattice.index(iu, iv)];
                        assert!(t > 0.0);
                        assert!(t >= dist(p, src) - 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn source_line_endpoints() {
        let sl = SourceLine::new(&Geometry::default(), 101).unwrap();
        assert_eq!(sl.alpha(0), -2.0);
        assert_eq!(sl.alpha(100), 3.0);
        assert!((sl.alpha(50) - 0.5).abs() < 1e-15);
        assert!(SourceLine::new(&Geometry::default(), 1).is_err());
    }
}
