//! Minimization of convex, positively homogeneous, piecewise-linear
//! objectives over the Euclidean unit ball.
//!
//! Both the sum-of-margins program (after eliminating thresholds and
//! slacks exactly for fixed `w`) and the max-margin separation step of the
//! apprenticeship baseline reduce to this shape. Homogeneity means the
//! minimum over the ball is attained either at the origin (value 0) or on
//! the unit sphere, so the search walks the sphere with normalized
//! subgradient steps on a geometrically shrinking step schedule, keeping
//! the exactly-evaluated best iterate. Everything is deterministic for
//! fixed input.

/// Step schedule for [`minimize_on_ball`].
#[derive(Debug, Clone)]
pub struct BallMinOptions {
    pub stages: usize,
    pub iters_per_stage: usize,
    pub initial_step: f64,
    pub shrink: f64,
    /// Maximum number of starting directions a full walk runs from
    /// (the most promising by initial value are kept).
    pub max_starts: usize,
}

impl Default for BallMinOptions {
    fn default() -> Self {
        BallMinOptions {
            stages: 60,
            iters_per_stage: 160,
            initial_step: 0.5,
            shrink: 0.7,
            max_starts: 6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BallMinResult {
    /// Minimizer: either the zero vector or a unit vector.
    pub w: Vec<f64>,
    /// Exact objective value at `w`.
    pub value: f64,
    /// Number of oracle evaluations spent.
    pub evals: usize,
    /// Step size of the final stage (a proxy for the residual accuracy).
    pub final_step: f64,
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) -> bool {
    let n = norm(v);
    if n <= 1e-300 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

/// Minimize a convex positively homogeneous function over the unit ball.
///
/// `eval` must return the exact value and one subgradient at its argument.
/// `inits` are candidate starting directions (normalized internally; zero
/// candidates are skipped); one full walk runs from every distinct start,
/// since a single walk can stall on a kink of a piecewise-linear
/// objective that another start slides past. The origin with value 0 is
/// always a candidate, so the returned value is never positive.
///
/// Each walk is plain projected subgradient descent over the ball;
/// interior iterates with negative value are credited with their
/// sphere-scaled value `f(w) / ||w||`, which homogeneity makes exact.
pub fn minimize_on_ball<F>(
    dim: usize,
    inits: &[Vec<f64>],
    mut eval: F,
    opts: &BallMinOptions,
) -> BallMinResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut best_w = vec![0.0; dim];
    let mut best_value = 0.0;
    let mut evals = 0usize;

    let mut starts: Vec<Vec<f64>> = Vec::new();
    for cand in inits {
        let mut w = cand.clone();
        if w.len() != dim || !normalize(&mut w) {
            continue;
        }
        if !starts.contains(&w) {
            starts.push(w);
        }
    }
    if starts.len() > opts.max_starts {
        // Keep the most promising starts by initial value (stable under
        // ties so the result stays deterministic).
        let mut scored: Vec<(f64, Vec<f64>)> = starts
            .into_iter()
            .map(|w| {
                let (v, _) = eval(&w);
                evals += 1;
                (v, w)
            })
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        starts = scored
            .into_iter()
            .take(opts.max_starts)
            .map(|(_, w)| w)
            .collect();
    }
    if starts.is_empty() {
        // No usable init: probe the coordinate axes and walk from the
        // best one.
        let mut axis_best: Option<(f64, Vec<f64>)> = None;
        for i in 0..dim.min(64) {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            let (v, _) = eval(&e);
            evals += 1;
            if axis_best.as_ref().map_or(true, |(bv, _)| v < *bv) {
                axis_best = Some((v, e));
            }
        }
        match axis_best {
            Some((_, e)) => starts.push(e),
            None => {
                return BallMinResult {
                    w: best_w,
                    value: best_value,
                    evals,
                    final_step: opts.initial_step,
                }
            }
        }
    }

    let mut final_step = opts.initial_step;
    for start in &starts {
        let mut w = start.clone();
        let mut step = opts.initial_step;
        // Per-walk incumbent: pulling a walk toward the global best
        // would collapse the starts back into one trajectory.
        let mut walk_best = f64::INFINITY;
        let mut walk_best_w = w.clone();
        let mut prev_grad: Option<Vec<f64>> = None;
        for _stage in 0..opts.stages {
            if walk_best < 0.0 {
                w.copy_from_slice(&walk_best_w);
            }
            for _ in 0..opts.iters_per_stage {
                let (value, grad) = eval(&w);
                evals += 1;
                let wnorm = norm(&w);
                if wnorm > 1e-300 {
                    // f(w / ||w||) = f(w) / ||w|| by homogeneity.
                    let scaled = value / wnorm.min(1.0);
                    if scaled < walk_best {
                        walk_best = scaled;
                        for (bi, wi) in walk_best_w.iter_mut().zip(&w) {
                            *bi = wi / wnorm;
                        }
                    }
                }
                // Step along the minimum-norm convex combination of the
                // current and previous subgradient. On a piecewise-linear
                // kink a raw subgradient step zigzags across the valley;
                // the min-norm combination points down it.
                let dir = match &prev_grad {
                    Some(prev) => {
                        let dgg: f64 = grad
                            .iter()
                            .zip(prev)
                            .map(|(g, p)| g * (g - p))
                            .sum();
                        let dd: f64 = grad
                            .iter()
                            .zip(prev)
                            .map(|(g, p)| (g - p) * (g - p))
                            .sum();
                        let lambda = if dd > 1e-300 {
                            (dgg / dd).clamp(0.0, 1.0)
                        } else {
                            0.0
                        };
                        grad.iter()
                            .zip(prev)
                            .map(|(g, p)| lambda * p + (1.0 - lambda) * g)
                            .collect::<Vec<f64>>()
                    }
                    None => grad.clone(),
                };
                prev_grad = Some(grad);
                let dnorm = norm(&dir);
                if dnorm <= 1e-300 {
                    break;
                }
                for (wi, di) in w.iter_mut().zip(&dir) {
                    *wi -= step * di / dnorm;
                }
                // Project back onto the ball.
                let n = norm(&w);
                if n > 1.0 {
                    w.iter_mut().for_each(|x| *x /= n);
                }
            }
            step *= opts.shrink;
        }
        final_step = step;
        if walk_best < best_value {
            best_value = walk_best;
            best_w = walk_best_w;
        }
    }
    let step = final_step;

    // Re-evaluate the incumbent so the reported value is the oracle's, not
    // the homogeneity-scaled estimate.
    if best_value < 0.0 {
        let (value, _) = eval(&best_w);
        evals += 1;
        best_value = value.min(0.0);
    }

    BallMinResult {
        w: best_w,
        value: best_value,
        evals,
        final_step: step,
    }
}
