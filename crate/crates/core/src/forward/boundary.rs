//! Detector lattices on the six faces of the domain and extraction of
//! arrival times onto them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Geometry, ScalarField3};

/// A face of the box `(0,1)² × (B, B+ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    /// `z = B`, parametrized by `(x, y)`.
    Bottom,
    /// `z = B + ρ`, parametrized by `(x, y)`.
    Top,
    /// `x = 0`, parametrized by `(y, z)`.
    XMin,
    /// `x = 1`, parametrized by `(y, z)`.
    XMax,
    /// `y = 0`, parametrized by `(x, z)`.
    YMin,
    /// `y = 1`, parametrized by `(x, z)`.
    YMax,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::Bottom, Face::Top, Face::XMin, Face::XMax, Face::YMin, Face::YMax];

    pub fn name(self) -> &'static str {
        match self {
            Face::Bottom => "bottom",
            Face::Top => "top",
            Face::XMin => "xmin",
            Face::XMax => "xmax",
            Face::YMin => "ymin",
            Face::YMax => "ymax",
        }
    }

    pub fn from_name(name: &str) -> Option<Face> {
        Face::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn position(self) -> usize {
        self as usize
    }

    /// Whether the second face coordinate is `z`.
    pub fn is_lateral(self) -> bool {
        !matches!(self, Face::Bottom | Face::Top)
    }

    /// Maps face coordinates `(u, v)` to a point of the box.
    pub fn point(self, geometry: &Geometry, u: f64, v: f64) -> [f64; 3] {
        match self {
            Face::Bottom => [u, v, geometry.z_bottom],
            Face::Top => [u, v, geometry.z_top()],
            Face::XMin => [0.0, u, v],
            Face::XMax => [1.0, u, v],
            Face::YMin => [u, 0.0, v],
            Face::YMax => [u, 1.0, v],
        }
    }
}

/// Regular detector lattice on one face: `u` fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceLattice {
    pub nu: usize,
    pub nv: usize,
    pub u0: f64,
    pub v0: f64,
    pub du: f64,
    pub dv: f64,
}

impl FaceLattice {
    /// Detector lattice of `face` with (approximately) the requested step;
    /// the step is adjusted so that detectors land on the face edges.
    pub fn new(face: Face, geometry: &Geometry, step: f64) -> Result<FaceLattice> {
        if !(step > 0.0 && step <= 0.5) {
            return Err(Error::invalid(format!("detector step {step} must lie in (0, 0.5]")));
        }
        let nu = (1.0 / step).round().max(1.0) as usize + 1;
        let (nv, v0, vlen) = if face.is_lateral() {
            let n = (geometry.depth / step).round().max(1.0) as usize + 1;
            (n, geometry.z_bottom, geometry.depth)
        } else {
            (nu, 0.0, 1.0)
        };
        Ok(FaceLattice {
            nu,
            nv,
            u0: 0.0,
            v0,
            du: 1.0 / (nu - 1) as f64,
            dv: vlen / (nv - 1) as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.nu * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn u(&self, iu: usize) -> f64 {
        self.u0 + self.du * iu as f64
    }

    pub fn v(&self, iv: usize) -> f64 {
        self.v0 + self.dv * iv as f64
    }

    #[inline]
    pub fn index(&self, iu: usize, iv: usize) -> usize {
        iv * self.nu + iu
    }

    /// Bilinear interpolation of lattice samples at `(u, v)`, clamped to the face.
    pub fn bilinear(&self, values: &[f64], u: f64, v: f64) -> f64 {
        let locate = |x: f64, x0: f64, dx: f64, n: usize| -> (usize, f64) {
            let s = ((x - x0) / dx).clamp(0.0, (n - 1) as f64);
            let b = (s.floor() as usize).min(n.saturating_sub(2));
            (b, s - b as f64)
        };
        let (iu, fu) = locate(u, self.u0, self.du, self.nu);
        let (iv, fv) = locate(v, self.v0, self.dv, self.nv);
        let at = |a: usize, b: usize| values[self.index(a, b)];
        let v00 = at(iu, iv);
        let v10 = at(iu + 1, iv);
        let v01 = at(iu, iv + 1);
        let v11 = at(iu + 1, iv + 1);
        (1.0 - fv) * ((1.0 - fu) * v00 + fu * v10) + fv * ((1.0 - fu) * v01 + fu * v11)
    }
}

/// Arrival times at the detectors of one face for one source.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceSamples {
    pub face: Face,
    pub lattice: FaceLattice,
    pub values: Vec<f64>,
}

/// All six faces for one source, in [`Face::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRecord {
    pub faces: Vec<FaceSamples>,
}

impl BoundaryRecord {
    pub fn face(&self, face: Face) -> &FaceSamples {
        &self.faces[face.position()]
    }

    pub fn face_mut(&mut self, face: Face) -> &mut FaceSamples {
        &mut self.faces[face.position()]
    }

    pub fn max_abs(&self) -> f64 {
        self.faces
            .iter()
            .flat_map(|f| f.values.iter())
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Samples `tau` at the detectors of all six faces by trilinear interpolation.
pub fn extract_boundary(tau: &ScalarField3, geometry: &Geometry, detector_step: f64) -> Result<BoundaryRecord> {
    let mut faces = Vec::with_capacity(6);
    for face in Face::ALL {
        let lattice = FaceLattice::new(face, geometry, detector_step)?;
        let mut values = Vec::with_capacity(lattice.len());
        for iv in 0..lattice.nv {
            for iu in 0..lattice.nu {
                let p = face.point(geometry, lattice.u(iu), lattice.v(iv));
                let t = tau.trilinear(p).ok_or_else(|| {
                    Error::invalid(format!("detector {p:?} on face {} lies outside the travel-time lattice", face.name()))
                })?;
                values.push(t);
            }
        }
        faces.push(FaceSamples { face, lattice, values });
    }
    Ok(BoundaryRecord { faces })
}
