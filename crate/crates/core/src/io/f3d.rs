//! The F3D field dump: a short ASCII header followed by little-endian `f64`
//! samples, `x` fastest and `z` slowest, components contiguous per point.
//!
//! ```text
//! F3D1
//! dims 11 11 11
//! spacing 0.1 0.1 0.1
//! origin 0 0 0
//! components 6
//! end
//! <binary>
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{CoefficientField, GridSpec, Lattice3, ScalarField3};

const MAGIC: &str = "F3D1";

/// A multi-component field on a [`Lattice3`].
#[derive(Debug, Clone, PartialEq)]
pub struct F3d {
    pub lattice: Lattice3,
    pub components: usize,
    pub values: Vec<f64>,
}

impl F3d {
    pub fn new(lattice: Lattice3, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 || values.len() != lattice.len() * components {
            return Err(Error::invalid(format!(
                "{} values for {} points with {components} components",
                values.len(),
                lattice.len()
            )));
        }
        Ok(F3d {
            lattice,
            components,
            values,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let l = &self.lattice;
        let mut out = format!(
            "{MAGIC}\ndims {} {} {}\nspacing {:?} {:?} {:?}\norigin {:?} {:?} {:?}\ncomponents {}\nend\n",
            l.dims[0], l.dims[1], l.dims[2], l.spacing[0], l.spacing[1], l.spacing[2], l.origin[0], l.origin[1], l.origin[2],
            self.components
        )
        .into_bytes();
        out.reserve(self.values.len() * 8);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut reader = BufReader::new(reader);
        let mut line = String::new();
        let mut next = |line: &mut String| -> Result<String> {
            line.clear();
            let n = reader
                .read_line(line)
                .map_err(|e| Error::format("F3D header", e.to_string()))?;
            if n == 0 {
                return Err(Error::format("F3D header", "unexpected end of file"));
            }
            Ok(line.trim_end().to_string())
        };
        if next(&mut line)? != MAGIC {
            return Err(Error::format("F3D header", "missing F3D1 magic"));
        }
        let dims: [usize; 3] = triple(&next(&mut line)?, "dims")?;
        let spacing: [f64; 3] = triple(&next(&mut line)?, "spacing")?;
        let origin: [f64; 3] = triple(&next(&mut line)?, "origin")?;
        let components: usize = single(&next(&mut line)?, "components")?;
        if next(&mut line)? != "end" {
            return Err(Error::format("F3D header", "missing `end` line"));
        }
        let lattice = Lattice3 { dims, origin, spacing };
        let count = lattice.len() * components;
        let mut bytes = Vec::with_capacity(count * 8);
        reader
            .read_to_end(&mut bytes)
            .map_err(|e| Error::format("F3D body", e.to_string()))?;
        if bytes.len() != count * 8 {
            return Err(Error::format("F3D body", format!("expected {} bytes, found {}", count * 8, bytes.len())));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight bytes")))
            .collect();
        F3d::new(lattice, components, values)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        F3d::from_reader(file).map_err(|e| match e {
            Error::Format { what, detail } => Error::format(format!("{what} of {}", path.display()), detail),
            other => other,
        })
    }

    pub fn from_scalar(field: &ScalarField3) -> Self {
        F3d {
            lattice: field.lattice,
            components: 1,
            values: field.values.clone(),
        }
    }

    pub fn into_scalar(self) -> Result<ScalarField3> {
        if self.components != 1 {
            return Err(Error::format("scalar F3D", format!("{} components", self.components)));
        }
        Ok(ScalarField3 {
            lattice: self.lattice,
            values: self.values,
        })
    }

    /// Re-orders a coefficient field (column-major internally) into F3D order.
    pub fn from_coefficients(field: &CoefficientField) -> Self {
        let grid = *field.spec();
        let lattice = grid.lattice();
        let n = field.order();
        let mut values = Vec::with_capacity(lattice.len() * n);
        for l in 0..grid.levels() {
            for j in 0..grid.side() {
                for i in 0..grid.side() {
                    values.extend_from_slice(field.node(i, j, l));
                }
            }
        }
        F3d {
            lattice,
            components: n,
            values,
        }
    }

    pub fn into_coefficients(self, grid: GridSpec) -> Result<CoefficientField> {
        let expected = grid.lattice();
        if !lattice_matches(&self.lattice, &expected) {
            return Err(Error::format("coefficient F3D", "lattice does not match the inversion grid"));
        }
        let n = self.components;
        let mut field = CoefficientField::zeros(grid, n);
        let mut chunks = self.values.chunks_exact(n);
        for l in 0..grid.levels() {
            for j in 0..grid.side() {
                for i in 0..grid.side() {
                    field.node_mut(i, j, l).copy_from_slice(chunks.next().expect("length checked on construction"));
                }
            }
        }
        Ok(field)
    }
}

/// Equal dimensions and geometry up to rounding of the printed header.
pub fn lattice_matches(a: &Lattice3, b: &Lattice3) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);
    a.dims == b.dims && (0..3).all(|d| close(a.spacing[d], b.spacing[d]) && close(a.origin[d], b.origin[d]))
}

fn fields<'a>(line: &'a str, key: &str) -> Result<Vec<&'a str>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(Error::format("F3D header", format!("expected `{key}`, found `{line}`")));
    }
    Ok(parts.collect())
}

fn parse<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format("F3D header", format!("bad `{key}` value `{s}`")))
}

fn triple<T: std::str::FromStr + Copy + Default>(line: &str, key: &str) -> Result<[T; 3]> {
    let parts = fields(line, key)?;
    if parts.len() != 3 {
        return Err(Error::format("F3D header", format!("`{key}` needs three values")));
    }
    let mut out = [T::default(); 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse(p, key)?;
    }
    Ok(out)
}

fn single<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    match fields(line, key)?.as_slice() {
        [v] => parse(v, key),
        _ => Err(Error::format("F3D header", format!("`{key}` needs one value"))),
    }
}
