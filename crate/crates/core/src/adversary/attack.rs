//! The penalty-method search for a minimal misclassifying perturbation.

use crate::adversary::{AdversarialResult, AttackConfig};
use crate::dataio::Image;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::trainer::{minimize, LbfgsConfig};

/// Constraint on the perturbed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bounds {
    /// Perturbed point must stay in `[0, 1]^m` (pixel space, sigmoid outputs).
    Unit,
    /// Unconstrained (relu or linear activation spaces).
    Free,
}

/// Attack outcome in a raw vector space (used for activation-space pools).
#[derive(Debug, Clone)]
pub struct VectorAttack {
    pub perturbed: Vec<f64>,
    pub r: Vec<f64>,
    pub achieved: bool,
    pub c_final: f64,
    pub inner_iters_used: usize,
}

const MAX_BRACKET_STEPS: usize = 50;

/// Approximate the closest point to `x` classified as `l`.
///
/// If `x` is already classified `l` the zero perturbation is returned at
/// once. Otherwise the penalty search runs in pixel space under the unit box.
pub fn minimal_perturbation(
    net: &Network,
    x: &Image,
    l: usize,
    cfg: &AttackConfig,
) -> Result<AdversarialResult> {
    cfg.validate()?;
    if l >= net.output_dim() {
        return Err(Error::InvalidInput(format!("target {l} out of range")));
    }
    let base = x.pixels();
    if net.predict_vec(base)? == l {
        return Ok(AdversarialResult {
            original: x.clone(),
            perturbed: x.clone(),
            r: vec![0.0; x.dim()],
            target: l,
            achieved: true,
            c_final: 0.0,
            distortion: 0.0,
            inner_iters_used: 0,
        });
    }
    let attack = penalty_search(net, 0, base, l, cfg, Bounds::Unit)?;
    let perturbed = Image::from_clamped(attack.perturbed.clone(), x.width(), x.height())?;
    let distortion = crate::adversary::distortion(x, &perturbed)?;
    // Re-check feasibility on the clamped pixels that callers will see.
    let achieved = attack.achieved && net.predict(&perturbed)? == l;
    Ok(AdversarialResult {
        original: x.clone(),
        perturbed,
        r: attack.r,
        target: l,
        achieved,
        c_final: attack.c_final,
        distortion,
        inner_iters_used: attack.inner_iters_used,
    })
}

/// One inner penalty minimization at a fixed weight `c`, in pixel space.
///
/// Diagnostic surface: the outer search is built from these solves, and the
/// penalty method's monotonicity (larger `c`, smaller perturbation) is
/// checked against it statistically.
pub fn penalty_minimizer(
    net: &Network,
    x: &Image,
    l: usize,
    c: f64,
    cfg: &AttackConfig,
) -> Result<VectorAttack> {
    cfg.validate()?;
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("penalty weight must be positive, got {c}")));
    }
    let base = x.pixels();
    let sol = inner_solve(net, 0, base, l, cfg, Bounds::Unit, c, None)?;
    let perturbed: Vec<f64> = base.iter().zip(&sol.r).map(|(b, ri)| b + ri).collect();
    Ok(VectorAttack {
        perturbed,
        r: sol.r,
        achieved: sol.feasible,
        c_final: c,
        inner_iters_used: sol.iterations,
    })
}

/// Same search against the sub-network above `start_layer`, perturbing an
/// activation vector instead of an image.
pub fn minimal_perturbation_at_layer(
    net: &Network,
    start_layer: usize,
    input: &[f64],
    target: usize,
    cfg: &AttackConfig,
    bounds: Bounds,
) -> Result<VectorAttack> {
    cfg.validate()?;
    let trace = net.forward_from(start_layer, input)?;
    if crate::network::argmax(trace.output()) == target {
        return Ok(VectorAttack {
            perturbed: input.to_vec(),
            r: vec![0.0; input.len()],
            achieved: true,
            c_final: 0.0,
            inner_iters_used: 0,
        });
    }
    penalty_search(net, start_layer, input, target, cfg, bounds)
}

struct InnerSolution {
    r: Vec<f64>,
    feasible: bool,
    iterations: usize,
}

fn penalty_search(
    net: &Network,
    start_layer: usize,
    base: &[f64],
    target: usize,
    cfg: &AttackConfig,
    bounds: Bounds,
) -> Result<VectorAttack> {
    let dim = base.len();
    let mut total_iters = 0usize;

    let mut best: Option<(Vec<f64>, f64, f64)> = None; // (r, ||r||, c)
    let note_feasible = |sol: &InnerSolution, c: f64, best: &mut Option<(Vec<f64>, f64, f64)>| {
        if sol.feasible {
            let n = norm(&sol.r);
            if best.as_ref().is_none_or(|(_, bn, _)| n < *bn) {
                *best = Some((sol.r.clone(), n, c));
            }
        }
    };

    // Bracket the transition c: feasible below, infeasible above.
    let mut c_lo = None;
    let mut c_hi = None;
    let first = inner_solve(net, start_layer, base, target, cfg, bounds, cfg.c_init, None)?;
    total_iters += first.iterations;
    note_feasible(&first, cfg.c_init, &mut best);
    if first.feasible {
        let mut c = cfg.c_init;
        for _ in 0..MAX_BRACKET_STEPS {
            let next = c * cfg.c_growth;
            let sol = inner_solve(net, start_layer, base, target, cfg, bounds, next, warm(&best))?;
            total_iters += sol.iterations;
            note_feasible(&sol, next, &mut best);
            if sol.feasible {
                c = next;
            } else {
                c_lo = Some(c);
                c_hi = Some(next);
                break;
            }
        }
        // If feasibility never broke, the best (largest-c) solution stands.
    } else {
        let mut c = cfg.c_init;
        for _ in 0..MAX_BRACKET_STEPS {
            let next = c / cfg.c_growth;
            let sol = inner_solve(net, start_layer, base, target, cfg, bounds, next, None)?;
            total_iters += sol.iterations;
            note_feasible(&sol, next, &mut best);
            if sol.feasible {
                c_lo = Some(next);
                c_hi = Some(c);
                break;
            }
            c = next;
        }
        if best.is_none() {
            // No feasible penalty weight found at all.
            return Ok(VectorAttack {
                perturbed: base.to_vec(),
                r: vec![0.0; dim],
                achieved: false,
                c_final: cfg.c_init,
                inner_iters_used: total_iters,
            });
        }
    }

    if let (Some(mut lo), Some(mut hi)) = (c_lo, c_hi) {
        for _ in 0..cfg.bisection_steps {
            let mid = 0.5 * (lo + hi);
            let sol = inner_solve(net, start_layer, base, target, cfg, bounds, mid, warm(&best))?;
            total_iters += sol.iterations;
            note_feasible(&sol, mid, &mut best);
            if sol.feasible {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    let (r, _, c_final) = best.expect("feasible branch guarantees a solution");
    let perturbed: Vec<f64> = base.iter().zip(&r).map(|(b, ri)| b + ri).collect();
    Ok(VectorAttack { perturbed, r, achieved: true, c_final, inner_iters_used: total_iters })
}

fn warm(best: &Option<(Vec<f64>, f64, f64)>) -> Option<&[f64]> {
    best.as_ref().map(|(r, _, _)| r.as_slice())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Inner minimization of `c*||r||^2 + loss(base + r, target)` at fixed `c`.
///
/// A non-finite objective triggers one restart from `r = 0`; a second
/// failure marks this `c` infeasible rather than aborting the whole search.
#[allow(clippy::too_many_arguments)]
fn inner_solve(
    net: &Network,
    start_layer: usize,
    base: &[f64],
    target: usize,
    cfg: &AttackConfig,
    bounds: Bounds,
    c: f64,
    warm_start: Option<&[f64]>,
) -> Result<InnerSolution> {
    let lbfgs = LbfgsConfig {
        memory_pairs: 10,
        max_iterations: cfg.inner_iterations,
        grad_tol: 1e-7,
        ..LbfgsConfig::default()
    };

    let objective = |r: &[f64]| -> Result<(f64, Vec<f64>)> {
        let point: Vec<f64> = base.iter().zip(r).map(|(b, ri)| b + ri).collect();
        let (ce, mut grad) = ce_and_gradient_at(net, start_layer, &point, target)?;
        let penalty: f64 = r.iter().map(|v| c * v * v).sum();
        for (gi, ri) in grad.iter_mut().zip(r) {
            *gi += 2.0 * c * ri;
        }
        Ok((penalty + ce, grad))
    };

    let projection = move |r: &mut [f64]| {
        if bounds == Bounds::Unit {
            for (ri, &b) in r.iter_mut().zip(base) {
                *ri = ri.clamp(-b, 1.0 - b);
            }
        }
    };

    let zero = vec![0.0; base.len()];
    let mut attempts: Vec<&[f64]> = Vec::new();
    if let Some(w) = warm_start {
        attempts.push(w);
    }
    attempts.push(&zero);

    let mut iterations = 0usize;
    for start in attempts {
        match minimize(objective, start.to_vec(), &lbfgs, Some(&projection)) {
            Ok(out) => {
                iterations += out.iterations;
                let point: Vec<f64> = base.iter().zip(&out.x).map(|(b, ri)| b + ri).collect();
                let feasible = predicted_at(net, start_layer, &point)? == target;
                return Ok(InnerSolution { r: out.x, feasible, iterations });
            }
            // Restart from r = 0; a second failure marks this c infeasible.
            Err(Error::Divergence { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(InnerSolution { r: zero, feasible: false, iterations })
}

fn ce_and_gradient_at(
    net: &Network,
    start_layer: usize,
    point: &[f64],
    target: usize,
) -> Result<(f64, Vec<f64>)> {
    if start_layer == 0 {
        net.ce_and_input_gradient(point, target)
    } else {
        net.ce_and_input_gradient_from(start_layer, point, target)
    }
}

fn predicted_at(net: &Network, start_layer: usize, point: &[f64]) -> Result<usize> {
    let trace = net.forward_from(start_layer, point)?;
    Ok(crate::network::argmax(trace.output()))
}
