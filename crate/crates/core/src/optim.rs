//! Derivative-free simplex (Nelder-Mead) minimization.
//!
//! Tuned for the low-dimensional, smooth negative log-likelihoods in
//! this crate: tight convergence criteria plus one polish pass that
//! restarts the simplex at the incumbent to escape a collapsed simplex.

use alloc::vec::Vec;

// Standard reflection / expansion / contraction / shrink coefficients.
const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    /// Converged when the simplex function-value spread drops below this.
    pub f_tol: f64,
    /// ... and the per-coordinate parameter spread drops below this.
    pub x_tol: f64,
    /// Iteration cap across the main run and the polish pass.
    pub max_iters: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            f_tol: 1e-10,
            x_tol: 1e-8,
            max_iters: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `f` from `init`. Non-finite objective values are treated as
/// `+inf`, so the simplex retreats from invalid regions instead of
/// panicking on a NaN comparison.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, init: &[f64], opts: &Options) -> Minimum {
    let mut guarded = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let first = run_simplex(&mut guarded, init, opts.max_iters, opts);
    if !first.converged {
        return first;
    }
    // Polish: restart the simplex at the incumbent so a degenerate
    // simplex shape cannot fake convergence.
    let budget = opts.max_iters.saturating_sub(first.iterations).max(1);
    let second = run_simplex(&mut guarded, &first.x, budget, opts);
    let mut best = if second.value <= first.value {
        second.clone()
    } else {
        first.clone()
    };
    best.iterations = first.iterations + second.iterations;
    best.converged = second.converged;
    best
}

fn initial_step(coord: f64) -> f64 {
    if coord.abs() > 1e-4 {
        0.05 * coord.abs()
    } else {
        0.01
    }
}

fn run_simplex<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    init: &[f64],
    max_iters: usize,
    opts: &Options,
) -> Minimum {
    let dim = init.len();
    assert!(dim > 0, "cannot optimize a zero-dimensional objective");

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(init.to_vec());
    for j in 0..dim {
        let mut p = init.to_vec();
        p[j] += initial_step(p[j]);
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;

        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        if spread_converged(&simplex, &values, opts) {
            converged = true;
            break;
        }

        // Centroid of all vertices but the worst.
        let mut centroid = alloc::vec![0.0; dim];
        for &k in order.iter().take(dim) {
            for (c, x) in centroid.iter_mut().zip(&simplex[k]) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }

        let reflected: Vec<f64> = centroid
            .iter()
            .zip(&simplex[worst])
            .map(|(c, w)| c + ALPHA * (c - w))
            .collect();
        let v_reflected = f(&reflected);

        if v_reflected < values[second_worst] && v_reflected >= values[best] {
            simplex[worst] = reflected;
            values[worst] = v_reflected;
            continue;
        }

        if v_reflected < values[best] {
            let expanded: Vec<f64> = centroid
                .iter()
                .zip(&reflected)
                .map(|(c, r)| c + GAMMA * (r - c))
                .collect();
            let v_expanded = f(&expanded);
            if v_expanded < v_reflected {
                simplex[worst] = expanded;
                values[worst] = v_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = v_reflected;
            }
            continue;
        }

        let contracted: Vec<f64> = centroid
            .iter()
            .zip(&simplex[worst])
            .map(|(c, w)| c + RHO * (w - c))
            .collect();
        let v_contracted = f(&contracted);
        if v_contracted < values[worst] {
            simplex[worst] = contracted;
            values[worst] = v_contracted;
            continue;
        }

        // Shrink toward the best vertex.
        let anchor = simplex[best].clone();
        for k in 0..=dim {
            if k == best {
                continue;
            }
            for (x, a) in simplex[k].iter_mut().zip(&anchor) {
                *x = a + SIGMA * (*x - a);
            }
            values[k] = f(&simplex[k]);
        }
    }

    let mut best_idx = 0;
    for k in 1..=dim {
        if values[k].total_cmp(&values[best_idx]).is_lt() {
            best_idx = k;
        }
    }
    Minimum {
        x: simplex[best_idx].clone(),
        value: values[best_idx],
        iterations,
        converged,
    }
}

fn spread_converged(simplex: &[Vec<f64>], values: &[f64], opts: &Options) -> bool {
    let mut f_lo = f64::INFINITY;
    let mut f_hi = f64::NEG_INFINITY;
    for &v in values {
        f_lo = f_lo.min(v);
        f_hi = f_hi.max(v);
    }
    if !(f_hi - f_lo < opts.f_tol) {
        return false;
    }
    let dim = simplex[0].len();
    for j in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in simplex {
            lo = lo.min(p[j]);
            hi = hi.max(p[j]);
        }
        if hi - lo >= opts.x_tol {
            return false;
        }
    }
    true
}
