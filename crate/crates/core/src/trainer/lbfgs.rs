//! Limited-memory BFGS with backtracking Armijo line search and optional
//! projection, used for both training and the adversary's inner solver.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Solver knobs. `grad_tol` is relative: iteration stops when
/// `||g|| <= grad_tol * (1 + |loss|)`.
#[derive(Debug, Clone)]
pub struct LbfgsConfig {
    pub memory_pairs: usize,
    pub max_iterations: usize,
    pub grad_tol: f64,
    pub armijo_c1: f64,
    pub max_halvings: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory_pairs: 10,
            max_iterations: 2000,
            grad_tol: 1e-5,
            armijo_c1: 1e-4,
            max_halvings: 40,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory_pairs == 0 {
            return Err(Error::InvalidInput("memory_pairs must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidInput("grad_tol must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the optimization log.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

/// Where the solver stopped and what it found.
#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Minimize `objective` from `x0`.
///
/// `objective` returns the loss and its gradient. When `projection` is given
/// every candidate point is projected before evaluation (projected L-BFGS);
/// an accepted step that was actually clipped resets the curvature memory.
/// Accepted steps never increase the loss. A non-finite loss aborts with
/// [`Error::Divergence`] carrying the iteration index.
pub fn minimize<F>(
    mut objective: F,
    x0: Vec<f64>,
    cfg: &LbfgsConfig,
    projection: Option<&dyn Fn(&mut [f64])>,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let mut x = x0;
    if let Some(p) = projection {
        p(&mut x);
    }
    let (mut f, mut g) = objective(&x)?;
    if !f.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }

    let mut history: VecDeque<Pair> = VecDeque::with_capacity(cfg.memory_pairs);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..cfg.max_iterations {
        let gnorm = norm(&g);
        trace.push(IterationRecord { iteration: iter, loss: f, grad_norm: gnorm });
        if gnorm <= cfg.grad_tol * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        iterations = iter + 1;

        let mut dir = two_loop(&g, &history);
        for d in &mut dir {
            *d = -*d;
        }
        if dot(&dir, &g) >= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            history.clear();
            dir = g.iter().map(|v| -v).collect();
        }

        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..=cfg.max_halvings {
            let mut cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            let mut clipped = false;
            if let Some(p) = projection {
                let before = cand.clone();
                p(&mut cand);
                clipped = cand != before;
            }
            let (f_new, g_new) = objective(&cand)?;
            if f_new.is_finite() {
                let step_dot: f64 =
                    g.iter().zip(cand.iter().zip(&x)).map(|(gi, (ci, xi))| gi * (ci - xi)).sum();
                if f_new <= f + cfg.armijo_c1 * step_dot && f_new <= f {
                    accepted = Some((cand, f_new, g_new, clipped));
                    break;
                }
            }
            alpha *= 0.5;
        }

        let Some((x_new, f_new, g_new, clipped)) = accepted else {
            if history.is_empty() {
                // Steepest descent cannot make progress: treat as stationary.
                break;
            }
            history.clear();
            continue;
        };

        if !f_new.is_finite() {
            return Err(Error::Divergence { iteration: iter });
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if clipped {
            history.clear();
        } else if sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == cfg.memory_pairs {
                history.pop_front();
            }
            history.push_back(Pair { rho: 1.0 / sy, s, y });
        }

        x = x_new;
        f = f_new;
        g = g_new;
    }

    let grad_norm = norm(&g);
    if !converged && grad_norm <= cfg.grad_tol * (1.0 + f.abs()) {
        converged = true;
    }
    Ok(LbfgsOutcome { x, loss: f, grad_norm, iterations, converged, trace })
}

/// Two-loop recursion computing `H * g` for the implicit inverse Hessian.
fn two_loop(g: &[f64], history: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let a = pair.rho * dot(&pair.s, &q);
        for (qi, yi) in q.iter_mut().zip(&pair.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = history.back() {
        let yy = dot(&last.y, &last.y);
        if yy > 0.0 {
            let gamma = dot(&last.s, &last.y) / yy;
            for qi in &mut q {
                *qi *= gamma;
            }
        }
    }
    for (pair, &a) in history.iter().zip(alphas.iter().rev()) {
        let b = pair.rho * dot(&pair.y, &q);
        for (qi, si) in q.iter_mut().zip(&pair.s) {
            *qi += (a - b) * si;
        }
    }
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
