//! Feasible descent for extended-real objectives.
//!
//! Directions come from limited-memory BFGS with the scale-free initial
//! Hessian `s'y / y'y`; the first step (and every restart) is a normalized
//! steepest-descent step of length `step_scale`. The backtracking line search
//! treats `+inf` trial values as rejections, so every accepted iterate stays
//! in the effective domain and the objective decreases strictly. Stopping is
//! relative to the starting energy, which makes the iterate path invariant
//! under multiplying the objective by a positive constant.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::Ext;

/// A smooth-on-its-domain objective over `R^n`.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, z: &[f64]) -> Ext;
    /// Value and gradient; the gradient is only meaningful for finite values.
    fn value_grad(&self, z: &[f64], g: &mut [f64]) -> Ext;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub max_iter: usize,
    /// Relative decrease `(E_k - E_{k+1}) / E_0` below which an iteration
    /// counts as stagnant.
    pub obj_tol: f64,
    /// Step length, in units of `step_scale`, below which an iteration counts
    /// as stagnant.
    pub step_tol: f64,
    /// Consecutive stagnant iterations before stopping.
    pub patience: usize,
    pub memory: usize,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            max_iter: 3000,
            obj_tol: 1e-11,
            step_tol: 1e-9,
            patience: 5,
            memory: 8,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescentStatus {
    Converged,
    MaxIter,
    /// No feasible decrease along the steepest-descent direction.
    Stalled,
    /// The start has zero energy, which is optimal for nonnegative objectives.
    ZeroEnergy,
}

#[derive(Clone, Debug)]
pub struct DescentResult {
    pub z: Vec<f64>,
    pub value: f64,
    pub start_value: f64,
    pub iterations: usize,
    pub status: DescentStatus,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Memory {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    cap: usize,
}

impl Memory {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy > 1e-14 * norm(&s) * norm(&y) && sy > 0.0 {
            if self.pairs.len() == self.cap {
                self.pairs.pop_front();
            }
            self.pairs.push_back((s, y, 1.0 / sy));
        }
    }

    /// Two-loop recursion: returns `-H g`.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

fn check_finite(g: &[f64]) -> Result<()> {
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient component {i}: {}", g[i])));
    }
    Ok(())
}

/// Minimizes `obj` from a feasible `z0`. Errors if the start is infeasible or
/// a gradient is not finite.
pub fn minimize<O: Objective + ?Sized>(
    obj: &O,
    z0: Vec<f64>,
    step_scale: f64,
    cfg: &DescentConfig,
) -> Result<DescentResult> {
    let n = obj.dim();
    let mut z = z0;
    let mut g = vec![0.0; n];
    let f0 = obj
        .value_grad(&z, &mut g)
        .finite()
        .ok_or_else(|| Error::Precondition("descent start lies outside the effective domain".into()))?;
    if f0.is_nan() {
        return Err(Error::Numeric("objective is NaN at the start".into()));
    }
    let mut f = f0;
    let done = |z, value, iterations, status| DescentResult { z, value, start_value: f0, iterations, status };
    if f0 == 0.0 || n == 0 {
        return Ok(done(z, f, 0, DescentStatus::ZeroEnergy));
    }
    check_finite(&g)?;
    let mut mem = Memory { pairs: VecDeque::new(), cap: cfg.memory };
    let mut stagnant = 0;
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    for it in 0..cfg.max_iter {
        let gnorm = norm(&g);
        if gnorm == 0.0 {
            return Ok(done(z, f, it, DescentStatus::Converged));
        }
        let steepest = |g: &[f64]| g.iter().map(|v| -v * step_scale / gnorm).collect::<Vec<f64>>();
        let mut d = if mem.pairs.is_empty() { steepest(&g) } else { mem.direction(&g) };
        let mut gd = dot(&g, &d);
        if !(gd < 0.0) {
            mem.pairs.clear();
            d = steepest(&g);
            gd = dot(&g, &d);
        }
        let mut accepted = None;
        for _attempt in 0..2 {
            let mut alpha = 1.0;
            for _ in 0..cfg.max_backtracks {
                for ((t, zi), di) in trial.iter_mut().zip(&z).zip(&d) {
                    *t = zi + alpha * di;
                }
                if let Ext::Fin(ft) = obj.value(&trial) {
                    if ft.is_nan() {
                        return Err(Error::Numeric(format!("objective is NaN at iteration {it}")));
                    }
                    if ft < f && ft <= f + cfg.armijo * alpha * gd {
                        accepted = Some((alpha, ft));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if accepted.is_some() || mem.pairs.is_empty() {
                break;
            }
            mem.pairs.clear();
            d = steepest(&g);
            gd = dot(&g, &d);
        }
        let Some((alpha, ft)) = accepted else {
            return Ok(done(z, f, it, DescentStatus::Stalled));
        };
        let fv = obj.value_grad(&trial, &mut g_new).to_f64();
        check_finite(&g_new)?;
        let s: Vec<f64> = d.iter().map(|v| alpha * v).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step = norm(&s);
        mem.push(s, y);
        let decrease = f - ft.min(fv);
        std::mem::swap(&mut z, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        f = ft.min(fv);
        if f == 0.0 {
            return Ok(done(z, f, it + 1, DescentStatus::ZeroEnergy));
        }
        if decrease <= cfg.obj_tol * f0 || step <= cfg.step_tol * step_scale {
            stagnant += 1;
            if stagnant >= cfg.patience {
                return Ok(done(z, f, it + 1, DescentStatus::Converged));
            }
        } else {
            stagnant = 0;
        }
    }
    Ok(done(z, f, cfg.max_iter, DescentStatus::MaxIter))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;
    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, z: &[f64]) -> Ext {
            Ext::Fin((1.0 - z[0]).powi(2) + 100.0 * (z[1] - z[0] * z[0]).powi(2))
        }
        fn value_grad(&self, z: &[f64], g: &mut [f64]) -> Ext {
            g[0] = -2.0 * (1.0 - z[0]) - 400.0 * z[0] * (z[1] - z[0] * z[0]);
            g[1] = 200.0 * (z[1] - z[0] * z[0]);
            self.value(z)
        }
    }

    /// `|z - c|^2 + 1` restricted to the half-plane `z_0 <= 0`.
    struct Barrier;
    impl Objective for Barrier {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, z: &[f64]) -> Ext {
            if z[0] > 0.0 {
                Ext::Inf
            } else {
                Ext::Fin((z[0] - 1.0).powi(2) + (z[1] - 2.0).powi(2) + 1.0)
            }
        }
        fn value_grad(&self, z: &[f64], g: &mut [f64]) -> Ext {
            g[0] = 2.0 * (z[0] - 1.0);
            g[1] = 2.0 * (z[1] - 2.0);
            self.value(z)
        }
    }

    #[test]
    fn rosenbrock_converges() {
        let r = minimize(&Rosenbrock, vec![-1.2, 1.0], 0.1, &DescentConfig::default()).unwrap();
        assert!(r.value < 1e-10, "{r:?}");
        assert!((r.z[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn iterates_stay_feasible() {
        let r = minimize(&Barrier, vec![-3.0, 0.0], 0.5, &DescentConfig::default()).unwrap();
        assert!(r.z[0] <= 0.0);
        assert!(r.value < r.start_value);
        assert!(r.value < 3.0, "{r:?}");
    }

    #[test]
    fn infeasible_start_is_an_error() {
        assert!(matches!(
            minimize(&Barrier, vec![1.0, 0.0], 0.5, &DescentConfig::default()),
            Err(Error::Precondition(_))
        ));
    }

    struct Scaled(f64);
    impl Objective for Scaled {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, z: &[f64]) -> Ext {
            Rosenbrock.value(z).scale(self.0)
        }
        fn value_grad(&self, z: &[f64], g: &mut [f64]) -> Ext {
            let v = Rosenbrock.value_grad(z, g);
            g.iter_mut().for_each(|c| *c *= self.0);
            v.scale(self.0)
        }
    }

    #[test]
    fn path_is_scale_invariant() {
        let cfg = DescentConfig { max_iter: 40, ..DescentConfig::default() };
        let a = minimize(&Scaled(1.0), vec![-1.2, 1.0], 0.1, &cfg).unwrap();
        let b = minimize(&Scaled(4.0), vec![-1.2, 1.0], 0.1, &cfg).unwrap();
        assert_eq!(a.z, b.z);
        assert_eq!(4.0 * a.value, b.value);
    }
}
