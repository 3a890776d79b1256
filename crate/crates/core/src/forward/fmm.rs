//! First-order fast marching for `|∇τ| = √m` on a regular lattice.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::grid::ScalarField3;

const FAR: u8 = 0;
const TRIAL: u8 = 1;
const KNOWN: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    time: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // Reversed so that `BinaryHeap` pops the smallest arrival time first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Godunov upwind update from per-axis upwind values `a[d]` and spacings `h[d]`
/// for slowness `f`: the largest root of `Σ ((T - a_d)/h_d)² = f²` over the
/// axes whose upwind value lies below `T`.
pub(crate) fn upwind_update(mut a: [(f64, f64); 3], f: f64) -> f64 {
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut sum_w = 0.0;
    let mut sum_wa = 0.0;
    let mut sum_waa = 0.0;
    let mut best = f64::INFINITY;
    for d in 0..3 {
        let (ad, hd) = a[d];
        if !ad.is_finite() {
            break;
        }
        let w = 1.0 / (hd * hd);
        sum_w += w;
        sum_wa += w * ad;
        sum_waa += w * ad * ad;
        let disc = sum_wa * sum_wa - sum_w * (sum_waa - f * f);
        if disc < 0.0 {
            break;
        }
        let t = (sum_wa + disc.sqrt()) / sum_w;
        if t < ad {
            break;
        }
        best = t;
        let next = if d + 1 < 3 { a[d + 1].0 } else { f64::INFINITY };
        if t <= next {
            break;
        }
    }
    best
}

/// Solves the eikonal equation for a point source.
///
/// The 3×3×3 block of nodes around the node nearest to `source`, together
/// with every node within `init_radius` of it, is initialized with the
/// constant-medium distance scaled by the local slowness; the medium must be
/// constant on that ball. The front is then advanced in order of increasing
/// arrival time.
pub fn fast_march(m: &ScalarField3, source: [f64; 3], init_radius: f64) -> Result<ScalarField3> {
    march(m, source, init_radius, None)
}

/// As [`fast_march`], additionally returning the arrival times of the nodes
/// accepted by the marching loop, in acceptance order (the initialized block
/// around the source is not part of the trace).
pub fn fast_march_traced(m: &ScalarField3, source: [f64; 3], init_radius: f64) -> Result<(ScalarField3, Vec<f64>)> {
    let mut trace = Vec::with_capacity(m.values.len());
    let tau = march(m, source, init_radius, Some(&mut trace))?;
    Ok((tau, trace))
}

fn march(m: &ScalarField3, source: [f64; 3], radius: f64, mut trace: Option<&mut Vec<f64>>) -> Result<ScalarField3> {
    let lat = m.lattice;
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("initialization radius {radius} must be finite and non-negative")));
    }
    if lat.dims.iter().any(|&n| n < 2) {
        return Err(Error::invalid("fast marching needs at least two nodes per axis"));
    }
    if !lat.contains(source) {
        return Err(Error::invalid(format!("source {source:?} lies outside the marching lattice")));
    }
    if let Some(bad) = m.values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::invalid(format!("medium must be positive and finite, found {bad}")));
    }

    let total = lat.len();
    let slowness: Vec<f64> = m.values.iter().map(|v| v.sqrt()).collect();
    let mut tau = vec![f64::INFINITY; total];
    let mut state = vec![FAR; total];
    let mut heap = BinaryHeap::new();
    let [nx, ny, _] = lat.dims;
    let strides = [1usize, nx, nx * ny];
    let h = lat.spacing;

    let mut nearest = [0usize; 3];
    for d in 0..3 {
        let s = ((source[d] - lat.origin[d]) / h[d]).round();
        nearest[d] = (s.max(0.0) as usize).min(lat.dims[d] - 1);
    }
    let src_slowness = slowness[lat.index(nearest[0], nearest[1], nearest[2])];

    let mut accepted = 0usize;
    let reach = |d: usize| ((radius / h[d]).ceil() as usize).max(1);
    let range = |d: usize| nearest[d].saturating_sub(reach(d))..=(nearest[d] + reach(d)).min(lat.dims[d] - 1);
    for l in range(2) {
        for j in range(1) {
            for i in range(0) {
                let p = lat.point(i, j, l);
                let dist = ((p[0] - source[0]).powi(2) + (p[1] - source[1]).powi(2) + (p[2] - source[2]).powi(2)).sqrt();
                let in_shell = i.abs_diff(nearest[0]) <= 1 && j.abs_diff(nearest[1]) <= 1 && l.abs_diff(nearest[2]) <= 1;
                if in_shell || dist <= radius {
                    let idx = lat.index(i, j, l);
                    if (slowness[idx] - src_slowness).abs() > 1e-12 * src_slowness {
                        return Err(Error::invalid(format!(
                            "medium varies within the initialization radius {radius} of the source"
                        )));
                    }
                    tau[idx] = src_slowness * dist;
                    state[idx] = KNOWN;
                    accepted += 1;
                }
            }
        }
    }

    let coords = |idx: usize| [idx % nx, (idx / nx) % ny, idx / (nx * ny)];

    let update = |idx: usize, tau: &[f64], state: &[u8]| -> f64 {
        let c = coords(idx);
        let mut a = [(f64::INFINITY, 1.0); 3];
        for d in 0..3 {
            let mut best = f64::INFINITY;
            if c[d] > 0 {
                let nb = idx - strides[d];
                if state[nb] == KNOWN {
                    best = best.min(tau[nb]);
                }
            }
            if c[d] + 1 < lat.dims[d] {
                let nb = idx + strides[d];
                if state[nb] == KNOWN {
                    best = best.min(tau[nb]);
                }
            }
            a[d] = (best, h[d]);
        }
        upwind_update(a, slowness[idx])
    };

    let seeds: Vec<usize> = (0..total).filter(|&i| state[i] == KNOWN).collect();
    for idx in seeds {
        push_neighbors(idx, &coords, &strides, &lat.dims, &mut tau, &mut state, &mut heap, &update);
    }

    while let Some(Candidate { time, index }) = heap.pop() {
        if state[index] == KNOWN || time != tau[index] {
            continue;
        }
        state[index] = KNOWN;
        accepted += 1;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(time);
        }
        push_neighbors(index, &coords, &strides, &lat.dims, &mut tau, &mut state, &mut heap, &update);
    }

    if accepted != total {
        return Err(Error::MarchingStalled { accepted, total });
    }
    Ok(ScalarField3 {
        lattice: lat,
        values: tau,
    })
}

#[allow(clippy::too_many_arguments)]
fn push_neighbors(
    idx: usize,
    coords: &impl Fn(usize) -> [usize; 3],
    strides: &[usize; 3],
    dims: &[usize; 3],
    tau: &mut [f64],
    state: &mut [u8],
    heap: &mut BinaryHeap<Candidate>,
    update: &impl Fn(usize, &[f64], &[u8]) -> f64,
) {
    let c = coords(idx);
    for d in 0..3 {
        let mut neighbors = [None, None];
        if c[d] > 0 {
            neighbors[0] = Some(idx - strides[d]);
        }
        if c[d] + 1 < dims[d] {
            neighbors[1] = Some(idx + strides[d]);
        }
        for nb in neighbors.into_iter().flatten() {
            if state[nb] == KNOWN {
                continue;
            }
            let t = update(nb, tau, state);
            if t < tau[nb] {
                tau[nb] = t;
                state[nb] = TRIAL;
                heap.push(Candidate { time: t, index: nb });
            }
        }
    }
}
