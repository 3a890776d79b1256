//! Reconstruction of `m` by minimizing the Carleman-weighted functional.

mod carleman;
mod functional;
mod optimize;

use log::warn;

pub use carleman::carleman_lemma_check;
pub use functional::{smooth_clamp, AlphaRule, CarlemanWeight, FunctionalParams, InversionProblem, DEFAULT_GAUSS_NODES};
pub use optimize::{run as run_optimizer, IterationRecord, Method, Objective, OptimizerOutput, OptimizerSettings, StopReason};

use crate::dataprep::{project_onto_basis, ProjectedData};
use crate::error::Result;
use crate::grid::{CoefficientField, ScalarField3};

/// Fraction of clamped `(node, α)` evaluations above which the iterate is
/// reported as having left the admissible set.
pub const CLAMP_WARNING: f64 = 0.1;

/// Starting point: the coefficients of `u = τ_z²` for the homogeneous
/// medium, `u = (z − z0)² / |x − x_α|²`, with the pinned nodes overwritten by
/// the boundary data.
pub fn initialize_w(data: &ProjectedData) -> Result<CoefficientField> {
    let grid = data.grid;
    let g = grid.geometry;
    let q = &data.quadrature;
    let mut w = CoefficientField::zeros(grid, data.order());
    let mut samples = vec![0.0; q.len()];
    for i in 0..grid.side() {
        for j in 0..grid.side() {
            for l in 0..grid.levels() {
                let (x, y, z) = (grid.x(i), grid.y(j), grid.z(l));
                let dz2 = (z - g.source_z).powi(2);
                for (s, al) in q.nodes.iter().enumerate() {
                    samples[s] = dz2 / ((x - al).powi(2) + (y - g.source_y).powi(2) + dz2);
                }
                w.node_mut(i, j, l).copy_from_slice(&project_onto_basis(q, &samples)?);
            }
        }
    }
    w.pin_from(&data.gtilde);
    Ok(w)
}

/// Minimizer, recovered medium and optimization history.
#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub w: CoefficientField,
    pub m: ScalarField3,
    pub n: ScalarField3,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub stop: StopReason,
    /// `‖W‖_{H¹}` of the minimizer; the radius of the admissible set is not
    /// enforced and is reported for reference only.
    pub w_norm_h1: f64,
    pub clamp_fraction: f64,
}

impl ReconstructionResult {
    pub fn final_value(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.value)
    }

    pub fn iterations(&self) -> usize {
        self.history.last().map_or(0, |r| r.iteration)
    }
}

struct FieldObjective<'a> {
    problem: &'a InversionProblem,
    template: &'a CoefficientField,
}

impl FieldObjective<'_> {
    fn field(&self, x: &[f64]) -> CoefficientField {
        let mut f = self.template.clone();
        f.values_mut().copy_from_slice(x);
        f
    }
}

impl Objective for FieldObjective<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.problem.evaluate(&self.field(x))
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, g) = self.problem.evaluate_with_gradient(&self.field(x))?;
        Ok((v, g.into_values()))
    }
}

/// Minimizes `J` from `w0`. Pinned nodes never move because the gradient
/// vanishes there. Hitting the iteration cap is not an error.
pub fn minimize(problem: &InversionProblem, w0: &CoefficientField, settings: &OptimizerSettings) -> Result<ReconstructionResult> {
    let objective = FieldObjective { problem, template: w0 };
    let out = run_optimizer(&objective, w0.values().to_vec(), settings)?;
    let converged = out.converged();
    let stop = out.reason;
    let w = objective.field(&out.x);
    let clamp_fraction = problem.clamp_fraction(&w)?;
    if clamp_fraction > CLAMP_WARNING {
        warn!(
            "u fell below the floor at {:.1}% of evaluations; the minimizer left the admissible set",
            100.0 * clamp_fraction
        );
    }
    let m = problem.recover_m(&w)?;
    let n = m.map(f64::sqrt);
    let w_norm_h1 = problem.ops().norm_h1h(&w);
    Ok(ReconstructionResult {
        w,
        m,
        n,
        history: out.history,
        converged,
        stop,
        w_norm_h1,
        clamp_fraction,
    })
}
