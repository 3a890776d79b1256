//! Comparison of a recovered index field with the true one.
//!
//! Inclusions are located by half-max thresholding: a node belongs to the
//! inclusion of a field `n` when `n ≥ 1 + (max n − 1) / 2`. The same rule is
//! applied to the true and to the recovered field, so nothing is tuned per
//! phantom.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Lattice3, ScalarField3};

/// Nodes within this many lattice steps (per axis) of the true inclusion are
/// excluded from the background statistic.
pub const BACKGROUND_MARGIN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    /// `max n` of the recovered field; the background index is 1.
    pub computed_contrast: f64,
    /// `‖n_comp − n_true‖ / ‖n_true‖` over the grid nodes.
    pub rel_l2_error: f64,
    /// Distance between the centroids of the two half-max regions. When
    /// exactly one region is empty it is the diameter of the lattice box.
    pub centroid_error: f64,
    /// `max |n_comp − 1|` away from the true inclusion.
    pub background_deviation: f64,
    /// Dice overlap of the two half-max regions.
    pub dice: f64,
    pub j_final: f64,
    pub iterations: usize,
}

/// Nodes at or above half the excess of the maximum over 1; empty when the
/// field never exceeds 1.
pub fn half_max_region(n: &ScalarField3) -> Vec<bool> {
    let peak = n.max();
    if !(peak > 1.0) {
        return vec![false; n.values.len()];
    }
    let t = 1.0 + 0.5 * (peak - 1.0);
    n.values.iter().map(|&v| v >= t).collect()
}

pub fn centroid(lattice: &Lattice3, region: &[bool]) -> Option<[f64; 3]> {
    let mut sum = [0.0; 3];
    let mut count = 0usize;
    for (idx, _) in region.iter().enumerate().filter(|(_, &r)| r) {
        let [i, j, l] = lattice.coords(idx);
        let p = lattice.point(i, j, l);
        for d in 0..3 {
            sum[d] += p[d];
        }
        count += 1;
    }
    (count > 0).then(|| sum.map(|s| s / count as f64))
}

pub fn dice(a: &[bool], b: &[bool]) -> f64 {
    let both = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let total = a.iter().filter(|x| **x).count() + b.iter().filter(|x| **x).count();
    if total == 0 {
        1.0
    } else {
        2.0 * both as f64 / total as f64
    }
}

/// Chebyshev dilation of a region by `steps` lattice steps.
pub fn dilate(lattice: &Lattice3, region: &[bool], steps: usize) -> Vec<bool> {
    let [nx, ny, nz] = lattice.dims;
    let mut out = vec![false; region.len()];
    for (idx, _) in region.iter().enumerate().filter(|(_, &r)| r) {
        let [i, j, l] = lattice.coords(idx);
        for ll in l.saturating_sub(steps)..(l + steps + 1).min(nz) {
            for jj in j.saturating_sub(steps)..(j + steps + 1).min(ny) {
                for ii in i.saturating_sub(steps)..(i + steps + 1).min(nx) {
                    out[lattice.index(ii, jj, ll)] = true;
                }
            }
        }
    }
    out
}

fn diameter(lattice: &Lattice3) -> f64 {
    (0..3)
        .map(|d| (lattice.spacing[d] * (lattice.dims[d] - 1) as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Compares two index fields sampled on the same lattice.
pub fn evaluate(n_true: &ScalarField3, n_comp: &ScalarField3, j_final: f64, iterations: usize) -> Result<Metrics> {
    if n_true.lattice != n_comp.lattice {
        return Err(Error::invalid("true and recovered fields live on different lattices"));
    }
    if !n_true.is_finite() || !n_comp.is_finite() {
        return Err(Error::invalid("index fields must be finite"));
    }
    let lattice = n_true.lattice;
    let (num, den) = n_true
        .values
        .iter()
        .zip(&n_comp.values)
        .fold((0.0, 0.0), |(num, den), (t, c)| (num + (c - t) * (c - t), den + t * t));
    let true_region = half_max_region(n_true);
    let comp_region = half_max_region(n_comp);
    let centroid_error = match (centroid(&lattice, &true_region), centroid(&lattice, &comp_region)) {
        (Some(a), Some(b)) => (0..3).map(|d| (a[d] - b[d]).powi(2)).sum::<f64>().sqrt(),
        (None, None) => 0.0,
        _ => diameter(&lattice),
    };
    let near = dilate(&lattice, &true_region, BACKGROUND_MARGIN);
    let background_deviation = n_comp
        .values
        .iter()
        .zip(&near)
        .filter(|(_, near)| !**near)
        .fold(0.0f64, |acc, (v, _)| acc.max((v - 1.0).abs()));
    Ok(Metrics {
        computed_contrast: n_comp.max(),
        rel_l2_error: (num / den).sqrt(),
        centroid_error,
        background_deviation,
        dice: dice(&true_region, &comp_region),
        j_final,
        iterations,
    })
}

impl Metrics {
    pub const HEADER: &'static str = "contrast  rel_l2  centroid  background  dice  J_final  iterations";

    /// One whitespace-separated table row, in [`Metrics::HEADER`] order.
    pub fn row(&self) -> String {
        format!(
            "{:.4}  {:.4}  {:.4}  {:.4}  {:.4}  {:.6e}  {}",
            self.computed_contrast,
            self.rel_l2_error,
            self.centroid_error,
            self.background_deviation,
            self.dice,
            self.j_final,
            self.iterations
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Geometry, GridSpec};
    use crate::phantoms::{Phantom, PhantomSpec};

    fn ball_n() -> ScalarField3 {
        let g = Geometry::default();
        let lattice = GridSpec::from_step(g, 0.1).unwrap().lattice();
        Phantom::from_spec(&PhantomSpec::default(), &g).unwrap().sample(lattice).map(f64::sqrt)
    }

    #[test]
    fn perfect_reconstruction() {
        let n = ball_n();
        let m = evaluate(&n, &n, 0.0, 0).unwrap();
        assert_eq!(m.rel_l2_error, 0.0);
        assert!((m.computed_contrast - 1.5).abs() < 1e-12);
        assert_eq!(m.centroid_error, 0.0);
        assert_eq!(m.background_deviation, 0.0);
        assert_eq!(m.dice, 1.0);
    }

    #[test]
    fn flat_reconstruction_of_a_ball() {
        let n = ball_n();
        let flat = ScalarField3::filled(n.lattice, 1.0);
        let m = evaluate(&n, &flat, 1.0, 3).unwrap();
        assert_eq!(m.computed_contrast, 1.0);
        assert_eq!(m.dice, 0.0);
        assert!((m.centroid_error - 3f64.sqrt()).abs() < 1e-12);
        assert!(m.rel_l2_error > 0.0);
    }

    #[test]
    fn shifted_ball_centroid() {
        let n = ball_n();
        let lat = n.lattice;
        let shifted = ScalarField3::from_fn(lat, |p| {
            let q = [p[0] - 0.1, p[1], p[2]];
            let r2: f64 = (0..3).map(|d| (q[d] - 0.5).powi(2)).sum();
            if r2 <= 0.04 + 1e-12 {
                1.5
            } else {
                1.0
            }
        });
        let m = evaluate(&n, &shifted, 0.0, 0).unwrap();
        // Boundary nodes of the two balls round differently.
        assert!((m.centroid_error - 0.1).abs() < 0.01, "{}", m.centroid_error);
        assert!(m.dice > 0.5 && m.dice < 1.0);
    }

    #[test]
    fn background_ignores_the_margin() {
        let n = ball_n();
        let mut c = n.clone();
        // Next to the ball: within the margin.
        c.set(8, 5, 5, 1.3);
        assert_eq!(evaluate(&n, &c, 0.0, 0).unwrap().background_deviation, 0.0);
        c.set(0, 0, 9, 1.2);
        assert!((evaluate(&n, &c, 0.0, 0).unwrap().background_deviation - 0.2).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lattices_are_rejected() {
        let n = ball_n();
        let g = Geometry::default();
        let other = ScalarField3::filled(GridSpec::from_step(g, 0.125).unwrap().lattice(), 1.0);
        assert!(evaluate(&n, &other, 0.0, 0).is_err());
    }
}
