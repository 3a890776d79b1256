//! Unconstrained first-order minimizers over a flat parameter vector.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Objective with gradient.
pub trait Objective {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Positive diagonal approximation of the inverse Hessian, used as the
    /// initial metric of L-BFGS and to scale descent directions. It changes
    /// the path, never the minimizer.
    fn preconditioner(&self) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Gradient descent with Armijo backtracking (step halving).
    GradientDescent,
    /// `x ← x − γ ∇J(x)` with a constant `γ`.
    FixedStep,
    /// Limited-memory BFGS with Armijo backtracking.
    #[default]
    Lbfgs,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::GradientDescent => "gradient-descent",
            Method::FixedStep => "fixed-step",
            Method::Lbfgs => "lbfgs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub method: Method,
    /// Stop when `‖∇J‖_∞` falls below this value.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Initial step of gradient descent, or the constant step.
    pub step: f64,
    /// Number of correction pairs kept by L-BFGS.
    pub memory: usize,
    /// Sufficient-decrease constant of the Armijo rule.
    pub armijo: f64,
    /// Maximum number of halvings per line search.
    pub max_halvings: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            method: Method::Lbfgs,
            grad_tol: 1e-6,
            max_iter: 2000,
            step: 1e-2,
            memory: 10,
            armijo: 1e-4,
            max_halvings: 60,
        }
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    pub grad_inf: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    IterationLimit,
    /// No step satisfying the sufficient-decrease condition was found.
    LineSearch,
}

#[derive(Debug, Clone)]
pub struct OptimizerOutput {
    pub x: Vec<f64>,
    pub history: Vec<IterationRecord>,
    pub reason: StopReason,
}

impl OptimizerOutput {
    pub fn converged(&self) -> bool {
        self.reason == StopReason::GradientTolerance
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Backtracking along `dir` from `x` until `J(x + γ d) ≤ J(x) + c γ ∇J·d`.
fn backtrack(
    obj: &dyn Objective,
    x: &[f64],
    value: f64,
    slope: f64,
    dir: &[f64],
    mut step: f64,
    settings: &OptimizerSettings,
) -> Result<Option<(f64, Vec<f64>, f64)>> {
    let mut trial = vec![0.0; x.len()];
    for _ in 0..=settings.max_halvings {
        for ((t, xi), di) in trial.iter_mut().zip(x).zip(dir) {
            *t = xi + step * di;
        }
        let v = obj.value(&trial)?;
        if v.is_finite() && v <= value + settings.armijo * step * slope {
            return Ok(Some((step, trial, v)));
        }
        step *= 0.5;
    }
    Ok(None)
}

/// Minimizes `obj` from `x0`.
pub fn run(obj: &dyn Objective, x0: Vec<f64>, settings: &OptimizerSettings) -> Result<OptimizerOutput> {
    let mut x = x0;
    let (mut value, mut grad) = obj.value_and_gradient(&x)?;
    let mut history = vec![IterationRecord {
        iteration: 0,
        value,
        grad_inf: inf_norm(&grad),
        step: 0.0,
    }];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut last_step = settings.step;
    let diag = obj.preconditioner().filter(|d| d.len() == x.len());
    let scaled = |g: &[f64]| -> Vec<f64> {
        match &diag {
            Some(d) => g.iter().zip(d).map(|(a, b)| -a * b).collect(),
            None => g.iter().map(|a| -a).collect(),
        }
    };
    for iteration in 1..=settings.max_iter {
        let gnorm = inf_norm(&grad);
        if gnorm < settings.grad_tol {
            return Ok(OptimizerOutput {
                x,
                history,
                reason: StopReason::GradientTolerance,
            });
        }
        let (x_new, v_new, step) = match settings.method {
            Method::FixedStep => {
                let step = settings.step;
                let xn: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
                let vn = obj.value(&xn)?;
                (xn, vn, step)
            }
            Method::GradientDescent => {
                let dir = scaled(&grad);
                let slope = dot(&grad, &dir);
                // Start from twice the previous accepted step so that the
                // step can grow again after a short one.
                let start = (2.0 * last_step).max(settings.step);
                match backtrack(obj, &x, value, slope, &dir, start, settings)? {
                    Some((step, xn, vn)) => (xn, vn, step),
                    None => {
                        return Ok(OptimizerOutput {
                            x,
                            history,
                            reason: StopReason::LineSearch,
                        })
                    }
                }
            }
            Method::Lbfgs => {
                let mut dir = lbfgs_direction(&grad, &pairs, diag.as_deref());
                let mut slope = dot(&grad, &dir);
                if !(slope < 0.0) {
                    pairs.clear();
                    dir = scaled(&grad);
                    slope = dot(&grad, &dir);
                }
                let start = if pairs.is_empty() {
                    // Unit-free first step: move by `step` in the sup norm.
                    settings.step / inf_norm(&dir).max(f64::MIN_POSITIVE)
                } else {
                    1.0
                };
                match backtrack(obj, &x, value, slope, &dir, start, settings)? {
                    Some((step, xn, vn)) => (xn, vn, step),
                    None if !pairs.is_empty() => {
                        pairs.clear();
                        continue;
                    }
                    None => {
                        return Ok(OptimizerOutput {
                            x,
                            history,
                            reason: StopReason::LineSearch,
                        })
                    }
                }
            }
        };
        let (v_new2, g_new) = obj.value_and_gradient(&x_new)?;
        debug_assert!(v_new2 == v_new || !v_new.is_finite() || (v_new2 - v_new).abs() <= 1e-9 * v_new.abs().max(1.0));
        if settings.method == Method::Lbfgs {
            let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                if pairs.len() == settings.memory.max(1) {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, 1.0 / sy));
            }
        }
        x = x_new;
        value = v_new2;
        grad = g_new;
        last_step = step;
        history.push(IterationRecord {
            iteration,
            value,
            grad_inf: inf_norm(&grad),
            step,
        });
    }
    let reason = if inf_norm(&grad) < settings.grad_tol {
        StopReason::GradientTolerance
    } else {
        StopReason::IterationLimit
    };
    Ok(OptimizerOutput { x, history, reason })
}

/// Two-loop recursion: `−H ∇J` with the stored correction pairs and the
/// initial metric `γ D`.
fn lbfgs_direction(grad: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, diag: Option<&[f64]>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    match diag {
        Some(d) => {
            let gamma = pairs.back().map_or(1.0, |(s, y, _)| {
                dot(s, y) / y.iter().zip(d).map(|(a, b)| a * a * b).sum::<f64>()
            });
            q.iter_mut().zip(d).for_each(|(v, b)| *v *= gamma * b);
        }
        None => {
            if let Some((s, y, _)) = pairs.back() {
                let gamma = dot(s, y) / dot(y, y);
                q.iter_mut().for_each(|v| *v *= gamma);
            }
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `Σ d_i (x_i − t_i)²`.
    struct Quadratic {
        target: Vec<f64>,
        diag: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok(x.iter().zip(&self.target).zip(&self.diag).map(|((a, t), d)| d * (a - t).powi(2)).sum())
        }
        fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            let g = x.iter().zip(&self.target).zip(&self.diag).map(|((a, t), d)| 2.0 * d * (a - t)).collect();
            Ok((self.value(x)?, g))
        }
    }

    fn probe() -> Quadratic {
        Quadratic {
            target: (0..20).map(|i| (i as f64 * 0.37).sin()).collect(),
            diag: vec![1.0; 20],
        }
    }

    #[test]
    fn gradient_descent_converges_geometrically_on_a_quadratic() {
        let obj = probe();
        let settings = OptimizerSettings {
            method: Method::GradientDescent,
            max_iter: 200,
            ..Default::default()
        };
        let out = run(&obj, vec![0.0; 20], &settings).unwrap();
        assert!(out.converged(), "{:?}", out.reason);
        assert!(out.history.len() <= 201);
        let err: f64 = out.x.iter().zip(&obj.target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6);
        assert!(out.history.windows(2).all(|w| w[1].value <= w[0].value));
    }

    #[test]
    fn fixed_step_contracts_at_the_expected_rate() {
        let obj = probe();
        let settings = OptimizerSettings {
            method: Method::FixedStep,
            step: 0.25,
            max_iter: 10,
            grad_tol: 0.0,
            ..Default::default()
        };
        let out = run(&obj, vec![0.0; 20], &settings).unwrap();
        // Each step multiplies the error by 1 − 2γ = 1/2, so J by 1/4.
        for w in out.history.windows(2) {
            assert!((w[1].value / w[0].value - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn lbfgs_handles_ill_conditioning() {
        let obj = Quadratic {
            target: vec![1.0; 30],
            diag: (0..30).map(|i| 10f64.powf(i as f64 / 10.0)).collect(),
        };
        let out = run(&obj, vec![0.0; 30], &OptimizerSettings::default()).unwrap();
        assert!(out.converged(), "{:?}", out.reason);
        assert!(out.history.len() < 400, "{}", out.history.len());
        assert!(out.history.windows(2).all(|w| w[1].value <= w[0].value));
    }

    #[test]
    fn stops_at_the_iteration_cap() {
        let obj = probe();
        let settings = OptimizerSettings {
            method: Method::GradientDescent,
            max_iter: 3,
            step: 1e-4,
            ..Default::default()
        };
        let out = run(&obj, vec![0.0; 20], &settings).unwrap();
        assert_eq!(out.reason, StopReason::IterationLimit);
        assert_eq!(out.history.len(), 4);
    }
}
